"""The three block-descent subproblems.

Per task, training alternates between
  w-step:      an SVM dual solve against the combined Gram matrix,
  theta-step:  a closed-form update of the kernel weights on the Lp ball,
  lambda-step: task weights from KKT conditions plus bisection on the
               budget multiplier.

All functions here are pure and deterministic: identical inputs give
identical outputs, bit for bit. Solves for different tasks share no state
and may run concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import GramStack, KernelWeights
from .util import lp_norm


@dataclass
class DualSolution:
    """Result of one task's SVM dual solve.

    objective is the primal value J = 0.5 ||w||^2 + C * sum hinge, measured
    in the combined-kernel space. component_sq_norms holds ||w^m||^2 per
    base kernel in the separated coordinates (theta_m^2 * quadratic form),
    so that sum_m component_sq_norms[m] / theta_m recovers ||w||^2.
    """

    alpha: np.ndarray
    bias: float
    objective: float
    component_sq_norms: np.ndarray
    duality_gap: float
    dual_objective: float
    iterations: int
    margins: np.ndarray


@dataclass(frozen=True)
class TaskWeights:
    """Per-task weights in the box [1, r_max] under sum_t cost_t / w_t <= budget.

    enforce_box=False admits out-of-box values for callers that only use
    the weights descriptively (path-tracing weights, exploratory bound
    evaluations); optimization outputs always stay validated.
    """

    values: np.ndarray
    r_max: float
    budget: float
    enforce_box: bool = True

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.r_max <= 1.0:
            raise ValueError(f"r_max must exceed 1, got {self.r_max}")
        if self.enforce_box and (
            np.any(self.values < 1.0 - 1e-9) or np.any(self.values > self.r_max + 1e-9)
        ):
            raise ValueError("task weights outside the [1, r_max] box")

    @staticmethod
    def ones(n_tasks: int, r_max: float, budget: float) -> "TaskWeights":
        return TaskWeights(np.ones(n_tasks), r_max, budget)


def _optimal_bias(g: np.ndarray, y: np.ndarray, C: float) -> tuple[float, float]:
    """Exact minimizer of the hinge total over the bias, given dual gradient g.

    The per-sample loss is max(0, g_i - y_i b), piecewise linear in b, so
    some breakpoint b = y_i g_i attains the minimum. Returns (bias, loss
    total at the bias). Deterministic: ties resolve to the smallest bias.
    """
    candidates = np.unique(y * g)
    losses = np.maximum(0.0, g[None, :] - np.outer(candidates, y)).sum(axis=1)
    k = int(np.argmin(losses))
    return float(candidates[k]), float(C * losses[k])


def solve_svm_dual(
    K: np.ndarray,
    y: np.ndarray,
    C: float,
    use_bias: bool = False,
    tol: float = 1e-6,
    max_iter: int = 100_000,
) -> DualSolution:
    """Maximize sum(alpha) - 0.5 alpha' (yy' * K) alpha over 0 <= alpha <= C.

    With use_bias the equality constraint sum_i alpha_i y_i = 0 is kept and
    updates move along maximal-violating pairs; without it the two most
    violating coordinates are updated exactly each round. Stops when the
    duality gap falls below tol. Ties in the selection break toward the
    lowest index.
    """
    K = np.asarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    n = y.size
    if K.shape != (n, n):
        raise ValueError(f"kernel shape {K.shape} does not match {n} labels")
    if not np.all(np.abs(y) == 1.0):
        raise ValueError("labels must be +1 or -1")
    if not C > 0:
        raise ValueError("C must be positive")
    if use_bias and np.all(y == y[0]):
        # the equality constraint pins alpha at zero and the bias escapes
        raise ValueError("degenerate task: only one class present")
    if not np.allclose(K, K.T, atol=1e-10):
        raise ValueError("kernel matrix is not symmetric")

    Q = K * np.outer(y, y)
    alpha = np.zeros(n)
    g = np.ones(n)  # gradient of the dual objective, 1 - Q alpha

    def gap_terms():
        # dual value, primal value and gap, all O(n) given g
        quad = float(alpha @ (1.0 - g))  # alpha' Q alpha
        dual = float(alpha.sum() - 0.5 * quad)
        if use_bias:
            bias, loss = _optimal_bias(g, y, C)
        else:
            bias, loss = 0.0, float(C * np.maximum(g, 0.0).sum())
        primal = 0.5 * quad + loss
        return dual, primal, primal - dual, bias

    iterations = 0
    if use_bias:
        for iterations in range(1, max_iter + 1):
            _, _, gap, _ = gap_terms()
            if gap <= tol:
                break
            up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
            lo = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
            if not up.any() or not lo.any():
                break
            f = y * g
            i = int(np.argmax(np.where(up, f, -np.inf)))
            j = int(np.argmin(np.where(lo, f, np.inf)))
            violation = f[i] - f[j]
            if violation <= 1e-15:
                break
            denom = K[i, i] + K[j, j] - 2.0 * K[i, j]
            if denom < -1e-8 * max(1.0, abs(K[i, i]) + abs(K[j, j])):
                raise ValueError("kernel matrix is not positive semidefinite")
            # step s moves alpha_i by y_i s and alpha_j by -y_j s
            s_max_i = C - alpha[i] if y[i] > 0 else alpha[i]
            s_max_j = alpha[j] if y[j] > 0 else C - alpha[j]
            s = min(s_max_i, s_max_j)
            if denom > 0:
                s = min(s, violation / denom)
            if s <= 0:
                break
            alpha[i] += y[i] * s
            alpha[j] -= y[j] * s
            g -= s * (y[i] * Q[:, i] - y[j] * Q[:, j])
    else:
        for iterations in range(1, max_iter + 1):
            _, _, gap, _ = gap_terms()
            if gap <= tol:
                break
            viol = np.where((alpha < C) & (g > 0), g, 0.0)
            viol = np.maximum(viol, np.where((alpha > 0) & (g < 0), -g, 0.0))
            if viol.max() <= 1e-15:
                break
            order = np.argsort(-viol, kind="stable")
            for i in order[:2]:
                i = int(i)
                if Q[i, i] > 0:
                    target = alpha[i] + g[i] / Q[i, i]
                else:
                    target = C if g[i] > 0 else 0.0
                new = min(max(target, 0.0), C)
                delta = new - alpha[i]
                if delta != 0.0:
                    alpha[i] = new
                    g -= delta * Q[:, i]

    dual, primal, gap, bias = gap_terms()
    margins = 1.0 - g  # y_i * (decision value without bias)
    return DualSolution(
        alpha=alpha,
        bias=bias,
        objective=primal,
        component_sq_norms=np.zeros(0),
        duality_gap=max(gap, 0.0),
        dual_objective=dual,
        iterations=iterations,
        margins=margins,
    )


def component_sq_norms(
    alpha: np.ndarray, y: np.ndarray, stack: GramStack, weights: KernelWeights
) -> np.ndarray:
    """Per-kernel squared norms ||w^m||^2 = theta_m^2 (a*y)' G_m (a*y).

    These live in the separated coordinates, so dividing by theta_m and
    summing recovers the combined-kernel squared norm. A zero theta_m gives
    a zero component regardless of G_m.
    """
    coef = np.asarray(alpha, dtype=float) * np.asarray(y, dtype=float)
    quad = np.einsum("i,mij,j->m", coef, stack.grams, coef)
    return weights.values**2 * quad


def theta_step(u, p: float) -> KernelWeights:
    """Exact minimizer of sum_m u_m / (2 theta_m) on the unit Lp ball.

    The stationarity condition gives theta_m proportional to u_m^(1/(p+1)),
    scaled so the Lp norm is exactly 1. Zero entries of u receive zero
    weight. Raises when u is all zero (the caller should keep its previous
    weights in that case).
    """
    u = np.asarray(u, dtype=np.float64)
    if np.any(u < 0):
        raise ValueError("weight vector must be nonnegative")
    if not np.any(u > 0):
        raise ValueError("weight vector is all zero")
    if p < 1.0:
        raise ValueError(f"p must be >= 1, got {p}")
    raw = u ** (1.0 / (p + 1.0))
    theta = raw / lp_norm(raw, p)
    return KernelWeights(theta, p)


def theta_step_unsquared(w_norms_by_task, p: float) -> KernelWeights:
    """Compatibility variant using v_m = sum_t ||w_t^m|| (unsquared, unweighted).

    Kept for reproducing older runs; the default training path uses
    theta_step on u_m = sum_t lambda_t ||w_t^m||^2, the exact block
    minimizer.
    """
    v = np.sqrt(np.asarray(w_norms_by_task, dtype=float)).sum(axis=0)
    return theta_step(v, p)


def _lambda_of_nu(nu: float, J: np.ndarray, c: np.ndarray, r_max: float) -> np.ndarray:
    lam = np.empty_like(J)
    pos = J > 0
    lam[~pos] = r_max
    if nu <= 0:
        lam[pos] = 1.0
    else:
        lam[pos] = np.clip(np.sqrt(nu * c[pos] / J[pos]), 1.0, r_max)
    return lam


def lambda_step(J, c, budget: float, r_max: float) -> TaskWeights:
    """Minimize sum_t lambda_t J_t over the box [1, r_max]^T with
    sum_t c_t / lambda_t <= budget.

    KKT gives lambda_t = clip(sqrt(nu c_t / J_t), 1, r_max) for a
    multiplier nu >= 0; nu is located by doubling then bisection until the
    budget constraint is tight (or nu = 0 when it is slack at the lower
    box corner). Tasks with J_t = 0 cost nothing and take r_max, freeing
    budget for the rest.
    """
    J = np.asarray(J, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if J.shape != c.shape or J.ndim != 1:
        raise ValueError("objective and cost vectors must be 1-d with equal length")
    if np.any(J < 0):
        raise ValueError("task objectives must be nonnegative")
    if np.any(c <= 0):
        raise ValueError("task costs must be positive")
    if r_max <= 1.0:
        raise ValueError("r_max must exceed 1")
    min_use = float((c / r_max).sum())
    if min_use > budget * (1.0 + 1e-12):
        raise ValueError(
            f"infeasible budget: even at r_max the constraint needs {min_use}, budget is {budget}"
        )

    def usage(nu):
        return float((c / _lambda_of_nu(nu, J, c, r_max)).sum())

    if usage(0.0) <= budget:
        lam = _lambda_of_nu(0.0, J, c, r_max)
        return TaskWeights(lam, r_max, budget)

    nu_hi = 1.0
    for _ in range(600):
        if usage(nu_hi) <= budget:
            break
        nu_hi *= 2.0
    else:
        # budget attainable only in the limit; everything at the upper box edge
        return TaskWeights(np.full_like(J, r_max), r_max, budget)

    nu_lo = 0.0
    for _ in range(200):
        mid = 0.5 * (nu_lo + nu_hi)
        residual = usage(mid) - budget
        if abs(residual) < 1e-10:
            nu_hi = mid
            break
        if residual > 0:
            nu_lo = mid
        else:
            nu_hi = mid
        if (nu_hi - nu_lo) < 1e-12 * nu_hi:
            break
    lam = _lambda_of_nu(nu_hi, J, c, r_max)  # feasible end of the bracket
    return TaskWeights(lam, r_max, budget)

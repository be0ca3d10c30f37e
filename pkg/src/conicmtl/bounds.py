"""Generalization-bound terms and their numerical verification.

The distinguishing quantity is the empirical Rademacher complexity of the
weighted-task hypothesis ball. For a fixed sign assignment the supremum
over both the kernel weights (Lp ball) and the task weight ball has a
closed form,

    sup = sqrt( R * || u(sigma) ||_{p*} ),
    u_m(sigma) = sum_t (gamma_t^2 / lam_t) * sigma_t' G_t^m sigma_t,

so enumeration or Monte Carlo over signs is the only source of error.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .solvers import TaskWeights
from .util import conjugate_exponent, derive_seed, lp_norm

EXHAUSTIVE_LIMIT = 20
MC_BLOCK = 4096


def margin_loss(x, rho: float):
    """Ramp loss: 0 above rho, 1 below 0, linear in between."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    return np.clip(1.0 - np.asarray(x, dtype=float) / rho, 0.0, 1.0)


@dataclass
class RademacherEstimate:
    mean: float
    std_error: float
    samples: int
    exhaustive: bool


@dataclass
class BoundInputs:
    """Everything the bound formulas need besides the loss values."""

    T: int
    N: int
    M: int
    task_weights: TaskWeights
    rho: float
    delta: float
    R: float
    p: float
    traces: np.ndarray  # (T, M) per-task kernel trace vectors

    def __post_init__(self):
        self.traces = np.atleast_2d(np.asarray(self.traces, dtype=float))
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not self.R > 0:
            raise ValueError("R must be positive")
        if self.traces.shape != (self.T, self.M):
            raise ValueError(f"traces must have shape (T, M) = ({self.T}, {self.M})")


def _weight_values(weights) -> np.ndarray:
    if isinstance(weights, TaskWeights):
        return weights.values
    return np.asarray(weights, dtype=float)


def _row_dual_norms(U: np.ndarray, p_star: float) -> np.ndarray:
    U = np.maximum(U, 0.0)
    if np.isinf(p_star):
        return U.max(axis=1)
    if p_star == 1.0:
        return U.sum(axis=1)
    return (U**p_star).sum(axis=1) ** (1.0 / p_star)


def _all_sign_rows(n: int) -> np.ndarray:
    rows = np.arange(1 << n, dtype=np.int64)
    return ((rows[:, None] >> np.arange(n)[None, :]) & 1).astype(float) * 2.0 - 1.0


def _quadforms(signs: np.ndarray, grams: np.ndarray) -> np.ndarray:
    """sigma' G_m sigma for every sign row and kernel; returns (rows, M)."""
    out = np.empty((signs.shape[0], grams.shape[0]))
    for m in range(grams.shape[0]):
        out[:, m] = ((signs @ grams[m]) * signs).sum(axis=1)
    return out


def _per_task_quadforms_exhaustive(stacks) -> list:
    tables = []
    for stack in stacks:
        signs = _all_sign_rows(stack.n_samples)
        tables.append(_quadforms(signs, stack.grams))
    return tables


def rademacher_mc(
    stacks,
    task_weights,
    R: float,
    p: float,
    samples: int = 10_000,
    seed: int = 0,
    gamma=None,
    exhaustive_limit: int = EXHAUSTIVE_LIMIT,
) -> RademacherEstimate:
    """Complexity of the weighted-task ball: (2/total) E sqrt(R ||u||_{p*}).

    When the total sample count is at most exhaustive_limit, all 2^total
    sign patterns are enumerated and the result is exact (std_error 0).
    Otherwise Monte Carlo sampling is used, in fixed-size blocks with
    counter-based per-block generators keyed on (seed, block), so the
    estimate is reproducible and independent of any execution order.
    """
    lam = _weight_values(task_weights)
    if np.any(lam <= 0):
        raise ValueError("task weights must be positive")
    scales = 1.0 / lam
    if gamma is not None:
        gamma = np.asarray(gamma, dtype=float)
        if np.any(gamma <= 0):
            raise ValueError("sign scales must be positive")
        scales = gamma**2 / lam
    if not R >= 0:
        raise ValueError("R must be nonnegative")
    if samples < 1:
        raise ValueError("samples must be positive")
    counts = np.array([s.n_samples for s in stacks])
    total = int(counts.sum())
    prefactor = 2.0 / total
    p_star = conjugate_exponent(p)

    if total <= exhaustive_limit:
        tables = _per_task_quadforms_exhaustive(stacks)
        U = np.zeros((1, stacks[0].n_kernels))
        for t, table in enumerate(tables):
            U = (U[:, None, :] + scales[t] * table[None, :, :]).reshape(-1, U.shape[1])
        values = np.sqrt(R * _row_dual_norms(U, p_star))
        return RademacherEstimate(
            mean=prefactor * float(values.mean()),
            std_error=0.0,
            samples=values.size,
            exhaustive=True,
        )

    offsets = np.concatenate([[0], np.cumsum(counts)])
    acc_sum = 0.0
    acc_sq = 0.0
    done = 0
    block_index = 0
    while done < samples:
        n_block = min(MC_BLOCK, samples - done)
        rng = np.random.Generator(np.random.Philox(key=derive_seed("rademacher", seed, block_index)))
        signs = rng.integers(0, 2, size=(n_block, total)).astype(float) * 2.0 - 1.0
        U = np.zeros((n_block, stacks[0].n_kernels))
        for t, stack in enumerate(stacks):
            part = signs[:, offsets[t] : offsets[t + 1]]
            U += scales[t] * _quadforms(part, stack.grams)
        values = prefactor * np.sqrt(R * _row_dual_norms(U, p_star))
        acc_sum += float(values.sum())
        acc_sq += float((values**2).sum())
        done += n_block
        block_index += 1
    mean = acc_sum / samples
    if samples > 1:
        var = max(0.0, (acc_sq - samples * mean * mean) / (samples - 1))
        std_error = float(np.sqrt(var / samples))
    else:
        std_error = 0.0
    return RademacherEstimate(mean=mean, std_error=std_error, samples=samples, exhaustive=False)


def estimate_scale_constant(
    stacks,
    R: float,
    p: float,
    samples: int = 10_000,
    seed: int = 0,
    exhaustive_limit: int = EXHAUSTIVE_LIMIT,
) -> RademacherEstimate:
    """E sqrt(R * max_t ||u_t||_{p*}) at unit task weights.

    This is the constant that turns the budget-split bound into a formula:
    the hypothesis ball concentrates its budget on the best single task,
    and the kernel weights maximize a linear form over the Lp ball.
    """
    if not R >= 0:
        raise ValueError("R must be nonnegative")
    counts = np.array([s.n_samples for s in stacks])
    total = int(counts.sum())
    p_star = conjugate_exponent(p)

    if total <= exhaustive_limit:
        best = np.zeros(1)
        for stack in stacks:
            signs = _all_sign_rows(stack.n_samples)
            norms = _row_dual_norms(_quadforms(signs, stack.grams), p_star)
            best = np.maximum(best[:, None], norms[None, :]).reshape(-1)
        values = np.sqrt(R * best)
        return RademacherEstimate(float(values.mean()), 0.0, values.size, True)

    offsets = np.concatenate([[0], np.cumsum(counts)])
    acc_sum = 0.0
    acc_sq = 0.0
    done = 0
    block_index = 0
    while done < samples:
        n_block = min(MC_BLOCK, samples - done)
        rng = np.random.Generator(np.random.Philox(key=derive_seed("scale-const", seed, block_index)))
        signs = rng.integers(0, 2, size=(n_block, total)).astype(float) * 2.0 - 1.0
        best = np.full(n_block, -np.inf)
        for t, stack in enumerate(stacks):
            part = signs[:, offsets[t] : offsets[t + 1]]
            norms = _row_dual_norms(_quadforms(part, stack.grams), p_star)
            best = np.maximum(best, norms)
        values = np.sqrt(R * best)
        acc_sum += float(values.sum())
        acc_sq += float((values**2).sum())
        done += n_block
        block_index += 1
    mean = acc_sum / samples
    var = max(0.0, (acc_sq - samples * mean * mean) / max(samples - 1, 1))
    return RademacherEstimate(mean, float(np.sqrt(var / samples)), samples, False)


def erc_upper_bound_lp(inputs: BoundInputs, p1_smoothing: bool = False) -> float:
    """Trace-norm complexity bound (2 sqrt(2 R p*) / (TN)) sqrt(sum_t ||v_t||_{p*} / lam_t).

    For p = 1 the conjugate exponent is infinite and the sqrt(p*) factor
    diverges, so the bound does not apply; the default returns nan as a
    not-applicable marker. With p1_smoothing the conjugate exponent is
    replaced by max(ln M, 1), a standard softening of the max norm.
    """
    lam = inputs.task_weights.values
    if inputs.p == 1.0:
        if not p1_smoothing:
            return float("nan")
        p_star = max(float(np.log(inputs.M)), 1.0)
    else:
        p_star = conjugate_exponent(inputs.p)
    total = inputs.T * inputs.N
    norms = np.array([lp_norm(v, p_star) for v in inputs.traces])
    return float(2.0 * np.sqrt(2.0 * inputs.R * p_star) / total * np.sqrt((norms / lam).sum()))


@dataclass
class BoundTerms:
    empirical: float
    complexity: float
    weight_range: float
    confidence: float
    total: float
    r_max_given: float
    r_max_used: float
    log_clamped: bool


def bound_rhs_any_lambda(inputs: BoundInputs, emp_loss: float, erc: float) -> BoundTerms:
    """Right-hand side of the bound valid uniformly over task weights.

    emp + (sqrt(2) r / rho) erc
        + sqrt((9 / TN) ln((2 r / T) sum_t 1/lam_t))
        + sqrt(9 ln(1/delta) / (2 TN))

    The uniform argument needs an integer weight cap, so a fractional cap
    is rounded up and both values are reported. Weights on the box
    boundary draw a warning, not an error; a nonpositive log argument
    clamps the third term at zero with a warning.
    """
    lam = inputs.task_weights.values
    r_given = float(inputs.task_weights.r_max)
    r_used = float(np.ceil(r_given))
    if np.any(lam <= 1.0) or np.any(lam >= r_given):
        warnings.warn(
            "task weights on the box boundary: the uniform bound assumes the open box",
            stacklevel=2,
        )
    total = inputs.T * inputs.N
    log_arg = (2.0 * r_used / inputs.T) * float((1.0 / lam).sum())
    clamped = False
    if np.log(log_arg) <= 0.0:
        warnings.warn("weight-range term clamped at zero (log argument <= 1)", stacklevel=2)
        weight_range = 0.0
        clamped = True
    else:
        weight_range = float(np.sqrt(9.0 / total * np.log(log_arg)))
    complexity = float(np.sqrt(2.0) * r_used / inputs.rho * erc)
    confidence = float(np.sqrt(9.0 * np.log(1.0 / inputs.delta) / (2.0 * total)))
    total_value = emp_loss + complexity + weight_range + confidence
    return BoundTerms(
        empirical=float(emp_loss),
        complexity=complexity,
        weight_range=weight_range,
        confidence=confidence,
        total=float(total_value),
        r_max_given=r_given,
        r_max_used=r_used,
        log_clamped=clamped,
    )


def bound_rhs_fixed_lambda(inputs: BoundInputs, emp_loss: float, erc: float) -> float:
    """Right-hand side for a fixed weight vector: emp + (r/rho) erc + confidence."""
    total = inputs.T * inputs.N
    return float(
        emp_loss
        + inputs.task_weights.r_max / inputs.rho * erc
        + np.sqrt(9.0 * np.log(1.0 / inputs.delta) / (2.0 * total))
    )


def model_radius(model) -> float:
    """Tightest weighted ball containing the trained model: sum_t lam_t ||w_t||^2."""
    theta = model.theta.values
    lam = model.task_weights.values
    total = 0.0
    for t, dual in enumerate(model.duals):
        comp = np.asarray(dual.component_sq_norms, dtype=float)
        norm_sq = np.divide(comp, theta, out=np.zeros_like(comp), where=theta > 0).sum()
        total += lam[t] * float(norm_sq)
    return total


BOUND_REPORT_FIELDS = (
    "tasks",
    "per_task_samples",
    "kernels",
    "p",
    "rho",
    "delta",
    "r_ball",
    "r_max",
    "r_max_integer",
    "empirical_weighted_loss",
    "complexity_mc",
    "complexity_mc_stderr",
    "complexity_mc_samples",
    "complexity_exhaustive",
    "complexity_upper_bound",
    "term_empirical",
    "term_complexity",
    "term_weight_range",
    "term_confidence",
    "total_adaptive",
    "total_fixed",
    "test_error",
)


@dataclass
class BoundReport:
    values: dict

    def lines(self):
        return [f"{key} {self.values[key]!r}" for key in BOUND_REPORT_FIELDS]

    def csv_header(self) -> str:
        return ",".join(BOUND_REPORT_FIELDS)

    def csv_row(self) -> str:
        return ",".join(repr(self.values[key]) for key in BOUND_REPORT_FIELDS)


def bound_report(
    model,
    test_tasks,
    delta: float = 0.05,
    rho: float = 1.0,
    mc_samples: int = 10_000,
    seed: int = 0,
    stacks=None,
) -> BoundReport:
    """Assemble every bound term for a trained model plus its test error.

    test_tasks pairs with the model's tasks by task_id; pass stacks to
    reuse precomputed training Grams, otherwise they are rebuilt from the
    model's training data.
    """
    from .kernels import build_gram_stack
    from .training import decision_values, weighted_empirical_loss

    sizes = {task.y.size for task in model.tasks}
    if len(sizes) != 1:
        raise ValueError("bound reporting requires all tasks to have the same sample count")
    N = sizes.pop()
    T = len(model.tasks)
    M = len(model.theta.values)
    if stacks is None:
        stacks = [
            build_gram_stack(task.task_id, task.X, model.kernel_specs) for task in model.tasks
        ]

    R = model_radius(model)
    p = model.config.p
    inputs = BoundInputs(
        T=T,
        N=N,
        M=M,
        task_weights=model.task_weights,
        rho=rho,
        delta=delta,
        R=max(R, 1e-300),
        p=p,
        traces=np.vstack([s.traces for s in stacks]),
    )
    emp = weighted_empirical_loss(model, rho)
    est = rademacher_mc(stacks, model.task_weights, inputs.R, p, samples=mc_samples, seed=seed)
    upper = erc_upper_bound_lp(inputs)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        terms = bound_rhs_any_lambda(inputs, emp, est.mean)
    fixed_total = bound_rhs_fixed_lambda(inputs, emp, est.mean)

    if hasattr(test_tasks, "tasks"):
        test_tasks = test_tasks.tasks
    by_id = {t.task_id: t for t in test_tasks}
    errors = []
    for task in model.tasks:
        if task.task_id not in by_id:
            raise ValueError(f"no test split supplied for task {task.task_id!r}")
        test = by_id[task.task_id]
        values = decision_values(model, task.task_id, test.X)
        errors.append(float((test.y * values <= 0.0).mean()))

    return BoundReport(
        values={
            "tasks": T,
            "per_task_samples": N,
            "kernels": M,
            "p": float(p),
            "rho": float(rho),
            "delta": float(delta),
            "r_ball": float(R),
            "r_max": float(terms.r_max_given),
            "r_max_integer": float(terms.r_max_used),
            "empirical_weighted_loss": float(emp),
            "complexity_mc": float(est.mean),
            "complexity_mc_stderr": float(est.std_error),
            "complexity_mc_samples": est.samples,
            "complexity_exhaustive": int(est.exhaustive),
            "complexity_upper_bound": float(upper),
            "term_empirical": float(terms.empirical),
            "term_complexity": float(terms.complexity),
            "term_weight_range": float(terms.weight_range),
            "term_confidence": float(terms.confidence),
            "total_adaptive": float(terms.total),
            "total_fixed": float(fixed_total),
            "test_error": float(np.mean(errors)),
        }
    )

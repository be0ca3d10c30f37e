"""Base kernel evaluation, normalization, caching, and weighted combination.

Every downstream component consumes precomputed Gram matrices. A task's
matrices for all base kernels are held together in a GramStack along with
their traces, which the task-weight subproblem and the complexity bounds
need repeatedly.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .util import lp_norm

CACHE_MAGIC = b"GRAM"
CACHE_VERSION = 1

GAUSSIAN_CONVENTIONS = ("sigma", "sigma_sq", "gamma")


@dataclass(frozen=True)
class KernelSpec:
    """One base kernel: linear, polynomial(degree, offset) or gaussian(spread).

    normalize applies cosine normalization so the induced feature vectors
    have unit length; gaussian kernels already do.

    gaussian_convention selects how `spread` enters the exponent:
      sigma     exp(-||x-y||^2 / (2 spread^2))   (default)
      sigma_sq  exp(-||x-y||^2 / (2 spread))
      gamma     exp(-spread ||x-y||^2)
    """

    kind: str
    degree: int = 2
    offset: float = 1.0
    spread: float = 1.0
    normalize: bool = False
    gaussian_convention: str = "sigma"

    def __post_init__(self):
        if self.kind not in ("linear", "polynomial", "gaussian"):
            raise ValueError(f"unknown kernel kind: {self.kind!r}")
        if self.kind == "polynomial" and self.degree < 1:
            raise ValueError("polynomial degree must be >= 1")
        if self.kind == "gaussian" and not self.spread > 0:
            raise ValueError("gaussian spread must be positive")
        if self.gaussian_convention not in GAUSSIAN_CONVENTIONS:
            raise ValueError(f"unknown gaussian convention: {self.gaussian_convention!r}")

    def label(self) -> str:
        if self.kind == "linear":
            core = "linear"
        elif self.kind == "polynomial":
            core = f"poly:d={self.degree}:off={self.offset!r}"
        else:
            core = f"gauss:s={self.spread!r}:conv={self.gaussian_convention}"
        return f"{core}:norm={int(self.normalize)}"

    @staticmethod
    def from_label(label: str) -> "KernelSpec":
        parts = label.split(":")
        norm = False
        fields = {}
        kind = parts[0]
        for part in parts[1:]:
            key, _, value = part.partition("=")
            if key == "norm":
                norm = bool(int(value))
            elif key == "d":
                fields["degree"] = int(value)
            elif key == "off":
                fields["offset"] = float(value)
            elif key == "s":
                fields["spread"] = float(value)
            elif key == "conv":
                fields["gaussian_convention"] = value
        kind = {"poly": "polynomial", "gauss": "gaussian"}.get(kind, kind)
        return KernelSpec(kind=kind, normalize=norm, **fields)


def default_kernel_dictionary() -> list[KernelSpec]:
    """The standard 11-kernel dictionary.

    Linear and 2nd-order polynomial (cosine normalized) plus gaussian
    kernels at spreads 2^-7 .. 2^7.
    """
    specs = [
        KernelSpec(kind="linear", normalize=True),
        KernelSpec(kind="polynomial", degree=2, offset=1.0, normalize=True),
    ]
    for e in (-7, -5, -3, -1, 0, 1, 3, 5, 7):
        specs.append(KernelSpec(kind="gaussian", spread=2.0**e))
    return specs


def _check_features(X: np.ndarray, name: str) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-d, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def _raw_gram(spec: KernelSpec, rows: np.ndarray, cols: np.ndarray, same: bool = False) -> np.ndarray:
    if spec.kind == "linear":
        return rows @ cols.T
    if spec.kind == "polynomial":
        return (spec.offset + rows @ cols.T) ** spec.degree
    sq = (
        (rows * rows).sum(axis=1)[:, None]
        + (cols * cols).sum(axis=1)[None, :]
        - 2.0 * (rows @ cols.T)
    )
    np.maximum(sq, 0.0, out=sq)
    if same:
        np.fill_diagonal(sq, 0.0)  # cancellation noise would break the unit diagonal
    if spec.gaussian_convention == "sigma":
        scale = 1.0 / (2.0 * spec.spread**2)
    elif spec.gaussian_convention == "sigma_sq":
        scale = 1.0 / (2.0 * spec.spread)
    else:
        scale = spec.spread
    return np.exp(-scale * sq)


def _self_kernel_diag(spec: KernelSpec, X: np.ndarray) -> np.ndarray:
    """k(x, x) for each row, used by cosine normalization of cross Grams."""
    if spec.kind == "linear":
        return (X * X).sum(axis=1)
    if spec.kind == "polynomial":
        return (spec.offset + (X * X).sum(axis=1)) ** spec.degree
    return np.ones(X.shape[0])


def compute_gram(spec: KernelSpec, rows, cols) -> np.ndarray:
    """Gram matrix G[i, j] = k(rows[i], cols[j]) for one base kernel.

    When `rows is cols` and the kernel is normalized, the diagonal is set
    to exactly 1.
    """
    rows = _check_features(rows, "rows")
    same = cols is None or cols is rows
    cols = rows if same else _check_features(cols, "cols")
    if rows.shape[1] != cols.shape[1]:
        raise ValueError(
            f"feature dimension mismatch: rows has {rows.shape[1]}, cols has {cols.shape[1]}"
        )
    gram = _raw_gram(spec, rows, cols, same=same)
    if spec.normalize:
        if same:
            gram = cosine_normalize(gram)
        else:
            dr = _self_kernel_diag(spec, rows)
            dc = _self_kernel_diag(spec, cols)
            if np.any(dr <= 0) or np.any(dc <= 0):
                raise ValueError("cosine normalization hit a nonpositive self-kernel value")
            gram = gram / np.sqrt(np.outer(dr, dc))
    return gram


def cosine_normalize(gram) -> np.ndarray:
    """Rescale a symmetric Gram so that G[i, j] -> G[i, j]/sqrt(G[i, i] G[j, j]).

    The output diagonal is exactly 1. Raises on a nonpositive diagonal
    entry, which signals a degenerate sample (for instance a zero vector
    under the linear kernel).
    """
    gram = np.asarray(gram, dtype=np.float64)
    diag = np.diag(gram).copy()
    if np.any(diag <= 0):
        bad = int(np.argmax(diag <= 0))
        raise ValueError(f"nonpositive diagonal entry at index {bad}: {diag[bad]}")
    root = np.sqrt(diag)
    out = gram / np.outer(root, root)
    np.fill_diagonal(out, 1.0)
    return out


@dataclass
class GramStack:
    """All base-kernel Gram matrices of one task plus their traces.

    grams has shape (M, N, N); traces[m] is the exact diagonal sum of
    grams[m]. Instances are immutable by convention after construction and
    safe for concurrent read access.
    """

    task_id: str
    grams: np.ndarray
    traces: np.ndarray = field(default=None)

    def __post_init__(self):
        self.grams = np.asarray(self.grams, dtype=np.float64)
        if self.grams.ndim != 3 or self.grams.shape[1] != self.grams.shape[2]:
            raise ValueError(f"grams must have shape (M, N, N), got {self.grams.shape}")
        if self.traces is None:
            self.traces = trace_vector(self)
        else:
            self.traces = np.asarray(self.traces, dtype=np.float64)
            if self.traces.shape != (self.grams.shape[0],):
                raise ValueError("traces length must match kernel count")

    @property
    def n_kernels(self) -> int:
        return self.grams.shape[0]

    @property
    def n_samples(self) -> int:
        return self.grams.shape[1]

    def trace_norm(self, p_star: float) -> float:
        """Conjugate-norm of the trace vector, the task's budget cost."""
        return lp_norm(self.traces, p_star)


def trace_vector(stack: GramStack) -> np.ndarray:
    """Per-kernel traces [tr(G_1), ..., tr(G_M)] of a stack."""
    return np.einsum("mii->m", stack.grams)


def build_gram_stack(task_id: str, X, specs, cache_dir=None) -> GramStack:
    """Compute (or load from cache) the full kernel stack for one task."""
    X = _check_features(X, "X")
    grams = np.empty((len(specs), X.shape[0], X.shape[0]))
    for m, spec in enumerate(specs):
        cached = load_cached_gram(spec, X, cache_dir) if cache_dir else None
        if cached is None:
            cached = compute_gram(spec, X, X)
            if cache_dir:
                save_cached_gram(spec, X, cached, cache_dir)
        grams[m] = cached
    return GramStack(task_id=task_id, grams=grams)


@dataclass(frozen=True)
class KernelWeights:
    """Nonnegative kernel-combination weights constrained to the Lp ball."""

    values: np.ndarray
    p: float

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.p < 1.0:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if np.any(self.values < -1e-12):
            raise ValueError("kernel weights must be nonnegative")
        if lp_norm(self.values, self.p) > 1.0 + 1e-9:
            raise ValueError("kernel weights exceed the unit Lp ball")

    @staticmethod
    def uniform(n_kernels: int, p: float) -> "KernelWeights":
        return KernelWeights(np.full(n_kernels, n_kernels ** (-1.0 / p)), p)


def combine(stack: GramStack, weights: KernelWeights) -> np.ndarray:
    """Weighted Gram sum_m theta_m G_m; the training kernel of one task."""
    theta = weights.values
    if theta.shape[0] != stack.n_kernels:
        raise ValueError(
            f"weight length {theta.shape[0]} does not match kernel count {stack.n_kernels}"
        )
    return np.tensordot(theta, stack.grams, axes=(0, 0))


def gram_cache_key(spec: KernelSpec, X: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(spec.label().encode())
    h.update(struct.pack("<qq", X.shape[0], X.shape[1]))
    h.update(np.ascontiguousarray(X, dtype=np.float64).tobytes())
    return h.hexdigest()


def save_cached_gram(spec: KernelSpec, X: np.ndarray, gram: np.ndarray, cache_dir) -> Path:
    """Write one Gram to the binary cache.

    Layout: 16-byte header (magic "GRAM", version u32, N u32, reserved u32,
    little endian) followed by N*N float64 values, row major, little endian.
    """
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / f"{gram_cache_key(spec, X)}.gram"
    n = gram.shape[0]
    payload = np.ascontiguousarray(gram, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<III", CACHE_VERSION, n, 0))
        fh.write(payload)
    return path


def load_cached_gram(spec: KernelSpec, X: np.ndarray, cache_dir):
    """Load a cached Gram, or None when absent."""
    path = Path(cache_dir) / f"{gram_cache_key(spec, X)}.gram"
    if not path.exists():
        return None
    raw = path.read_bytes()
    if raw[:4] != CACHE_MAGIC:
        raise ValueError(f"bad cache file magic in {path}")
    version, n, _ = struct.unpack("<III", raw[4:16])
    if version != CACHE_VERSION:
        raise ValueError(f"unsupported cache version {version} in {path}")
    data = np.frombuffer(raw[16:], dtype="<f8")
    if data.size != n * n:
        raise ValueError(f"cache payload size mismatch in {path}")
    return data.reshape(n, n).astype(np.float64)

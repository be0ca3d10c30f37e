"""Experiment harness: resampled runs, grid-search cross-validation,
significance testing and deterministic CSV reporting."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from io import StringIO
from pathlib import Path

import numpy as np

from . import data as data_io
from .kernels import GramStack, build_gram_stack, default_kernel_dictionary
from .training import TrainConfig, fit, fit_single_task, predict
from .util import conjugate_exponent, derive_seed, float_text

RESULT_HEADER = "dataset,fraction,method,seed,mean_accuracy,C,p,a,p_exp,wall_ms,converged"

METHOD_MODES = {
    "Conic": "conic",
    "Average": "average",
    "ParetoPath": "pareto",
    "SingleTask": "average",
}


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str
    fractions: tuple = (0.5,)
    methods: tuple = ("Conic", "Average")
    runs: int = 20
    cv_folds: int = 5
    grid_C: tuple = (0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0)
    grid_p: tuple = (1.0, 4.0 / 3.0, 2.0, 4.0)
    grid_a_frac: tuple = (0.25, 0.5, 0.75, 1.0)
    grid_p_exp: tuple = (0.25, 0.5, 0.75, 1.0)
    r_max: float = 8.0
    use_bias: bool = False
    balanced: bool = True
    master_seed: int = 0
    measure_wall: bool = False

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if any(not 0.0 < f < 1.0 for f in self.fractions):
            raise ValueError("fractions must lie in (0, 1)")
        for name, grid in (
            ("grid_C", self.grid_C),
            ("grid_p", self.grid_p),
            ("grid_a_frac", self.grid_a_frac),
            ("grid_p_exp", self.grid_p_exp),
        ):
            if len(grid) == 0:
                raise ValueError(f"{name} must not be empty")
        unknown = set(self.methods) - set(METHOD_MODES)
        if unknown:
            raise ValueError(f"unknown methods: {sorted(unknown)}")


@dataclass
class ResultRow:
    dataset: str
    fraction: float
    method: str
    seed: int
    mean_accuracy: float | None
    per_task_accuracies: list
    C: float | None
    p: float | None
    a: float | None
    p_exp: float | None
    wall_ms: float
    converged: str


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)

    def to_csv_text(self, measure_wall: bool = False) -> str:
        out = [RESULT_HEADER]
        for r in self.rows:
            acc = "" if r.mean_accuracy is None else float_text(r.mean_accuracy)
            cells = [
                r.dataset,
                float_text(r.fraction),
                r.method,
                str(r.seed),
                acc,
                "" if r.C is None else float_text(r.C),
                "" if r.p is None else float_text(r.p),
                "" if r.a is None else float_text(r.a),
                "" if r.p_exp is None else float_text(r.p_exp),
                str(int(r.wall_ms)) if measure_wall else "0",
                r.converged,
            ]
            out.append(",".join(cells))
        return "\n".join(out) + "\n"


def resolve_dataset(text: str) -> tuple[str, data_io.MultiTaskDataset]:
    """Turn a dataset argument into tasks.

    Accepts "synth:key=value,..." generator specs, the bundled samples
    ("sample:multiclass", "sample:mtl"), a task directory with a manifest,
    or a sparse text file (decomposed one-vs-one when multiclass).
    """
    if text.startswith("synth:"):
        params = dict(kv.split("=") for kv in text[6:].split(",") if kv)
        dataset = data_io.synth_multitask(
            T=int(params.get("T", 4)),
            N=int(params.get("N", 60)),
            d=int(params.get("d", 6)),
            task_similarity=float(params.get("sim", 0.7)),
            noise=float(params.get("noise", 0.5)),
            seed=int(params.get("seed", 0)),
        )
        return text.replace(",", ";"), dataset  # keep the CSV dataset column comma-free
    if text == "sample:multiclass":
        X, labels = data_io.load_sparse_text(data_io.sample_multiclass_path())
        return text, data_io.build_ovo_tasks(X, labels, provenance=text)
    if text == "sample:mtl":
        return text, data_io.load_task_directory(data_io.sample_mtl_path())
    path = Path(text)
    if path.is_dir():
        return path.name, data_io.load_task_directory(path)
    if path.is_file():
        X, labels = data_io.load_sparse_text(path)
        if np.unique(labels).size > 2:
            return path.stem, data_io.build_ovo_tasks(X, labels, provenance=str(path))
        mapped = np.where(labels == np.unique(labels).max(), 1.0, -1.0)
        return path.stem, data_io.MultiTaskDataset(
            [data_io.TaskDataset(path.stem, X, mapped, provenance=str(path))]
        )
    raise FileNotFoundError(f"cannot resolve dataset {text!r}")


def _sub_stack(stack: GramStack, idx: np.ndarray) -> GramStack:
    return GramStack(task_id=stack.task_id, grams=stack.grams[:, idx[:, None], idx[None, :]])


def _fold_assignments(task: data_io.TaskDataset, folds: int, seed: int) -> np.ndarray:
    """Per-sample fold ids, stratified by class, shuffled deterministically."""
    rng = np.random.default_rng(seed)
    assignment = np.empty(task.n, dtype=int)
    for sign in (1.0, -1.0):
        members = rng.permutation(np.flatnonzero(task.y == sign))
        if members.size < folds:
            raise ValueError(
                f"fold degeneracy: task {task.task_id!r} has {members.size} samples of one class "
                f"for {folds} folds"
            )
        assignment[members] = np.arange(members.size) % folds
    return assignment


def budget_from_fraction(stacks, p: float, frac: float) -> float:
    p_star = conjugate_exponent(p)
    return frac * float(sum(s.trace_norm(p_star) for s in stacks))


def _train_method(method, tasks, stacks, specs, C, p, a_frac, p_exp, r_max, use_bias):
    base = TrainConfig(
        C=C,
        p=p,
        budget=budget_from_fraction(stacks, p, a_frac) if method == "Conic" else 1.0,
        r_max=r_max,
        mode=METHOD_MODES[method],
        p_exp=p_exp if method == "ParetoPath" else 1.0,
        use_bias=use_bias,
    )
    if method == "SingleTask":
        return [
            fit_single_task(task, stack, base, kernel_specs=specs)
            for task, stack in zip(tasks, stacks)
        ]
    return fit(tasks, stacks, base, kernel_specs=specs)


def _method_accuracies(method, trained, tasks, test_tasks):
    accs = []
    if method == "SingleTask":
        for model, task, test in zip(trained, tasks, test_tasks):
            labels, _ = predict(model, task.task_id, test.X)
            accs.append(float((labels == test.y).mean()))
        converged = all(m.converged for m in trained)
    else:
        for task, test in zip(tasks, test_tasks):
            labels, _ = predict(trained, task.task_id, test.X)
            accs.append(float((labels == test.y).mean()))
        converged = trained.converged
    return accs, converged


def _grid_cells(method, config: ExperimentConfig):
    """Grid points in tie-break order: smaller C, then p, then a, then p_exp."""
    a_grid = config.grid_a_frac if method == "Conic" else (None,)
    pexp_grid = config.grid_p_exp if method == "ParetoPath" else (None,)
    for C in sorted(config.grid_C):
        for p in sorted(config.grid_p):
            for a in sorted(a_grid, key=lambda v: (v is None, v)):
                for pe in sorted(pexp_grid, key=lambda v: (v is None, v)):
                    yield C, p, a, pe


def cross_validate(tasks, stacks, method, config: ExperimentConfig, seed: int, specs):
    """Pick hyperparameters by exhaustive grid search over stratified folds.

    Returns (C, p, a_frac, p_exp). Ties break toward the simpler model:
    smaller C, then smaller p, then smaller a, then smaller p_exp. A grid
    with a single cell is returned without training.
    """
    cells = list(_grid_cells(method, config))
    if len(cells) == 1:
        return cells[0]
    assignments = [
        _fold_assignments(task, config.cv_folds, derive_seed(seed, "folds", task.task_id))
        for task in tasks
    ]
    best = None
    best_score = -1.0
    for cell in cells:
        C, p, a_frac, p_exp = cell
        fold_scores = []
        for k in range(config.cv_folds):
            sub_tasks, sub_stacks, held = [], [], []
            for task, stack, assign in zip(tasks, stacks, assignments):
                tr = np.flatnonzero(assign != k)
                te = np.flatnonzero(assign == k)
                sub = task.subset(tr)
                if np.all(sub.y == sub.y[0]):
                    raise ValueError(f"fold degeneracy in task {task.task_id!r}")
                sub_tasks.append(sub)
                sub_stacks.append(_sub_stack(stack, tr))
                held.append(task.subset(te))
            trained = _train_method(
                method, sub_tasks, sub_stacks, specs, C, p, a_frac or 1.0, p_exp or 1.0,
                config.r_max, config.use_bias,
            )
            accs, _ = _method_accuracies(method, trained, sub_tasks, held)
            fold_scores.append(float(np.mean(accs)))
        score = float(np.mean(fold_scores))
        if score > best_score + 1e-12:
            best_score = score
            best = cell
    return best


def run_experiment(config: ExperimentConfig) -> ResultTable:
    """The full protocol: per run, resample, split, cross-validate each
    method, train on the training split and score on the test split.

    Deterministic for a fixed master seed: all randomness is derived from
    (master_seed, fraction, run index, task id) via stable hashing.
    """
    label, dataset = resolve_dataset(config.dataset)
    specs = default_kernel_dictionary()
    table = ResultTable()
    for fraction in config.fractions:
        for run in range(config.runs):
            run_seed = derive_seed(config.master_seed, "run", fraction, run)
            train_tasks, test_tasks = [], []
            for task in dataset:
                working = task
                if config.balanced:
                    working = data_io.balanced_resample(
                        working, derive_seed(run_seed, "balance", task.task_id)
                    )
                tr, te = data_io.stratified_split(
                    working, fraction, derive_seed(run_seed, "split", task.task_id)
                )
                train_tasks.append(tr)
                test_tasks.append(te)
            scaler = data_io.Scaler().fit(np.vstack([t.X for t in train_tasks]))
            train_tasks = [
                data_io.TaskDataset(t.task_id, scaler.transform(t.X), t.y, t.provenance)
                for t in train_tasks
            ]
            test_tasks = [
                data_io.TaskDataset(t.task_id, scaler.transform(t.X), t.y, t.provenance)
                for t in test_tasks
            ]
            stacks = [build_gram_stack(t.task_id, t.X, specs) for t in train_tasks]
            for method in config.methods:
                started = time.perf_counter()
                try:
                    cell = cross_validate(train_tasks, stacks, method, config, run_seed, specs)
                    C, p, a_frac, p_exp = cell
                    trained = _train_method(
                        method, train_tasks, stacks, specs, C, p, a_frac or 1.0,
                        p_exp or 1.0, config.r_max, config.use_bias,
                    )
                    accs, converged = _method_accuracies(method, trained, train_tasks, test_tasks)
                    a_abs = (
                        budget_from_fraction(stacks, p, a_frac) if method == "Conic" else None
                    )
                    row = ResultRow(
                        dataset=label,
                        fraction=fraction,
                        method=method,
                        seed=run,
                        mean_accuracy=float(np.mean(accs)),
                        per_task_accuracies=accs,
                        C=C,
                        p=p,
                        a=a_abs,
                        p_exp=p_exp if method == "ParetoPath" else None,
                        wall_ms=(time.perf_counter() - started) * 1e3,
                        converged="1" if converged else "0",
                    )
                except Exception as exc:  # recorded per row, not fatal to the table
                    row = ResultRow(
                        dataset=label,
                        fraction=fraction,
                        method=method,
                        seed=run,
                        mean_accuracy=None,
                        per_task_accuracies=[],
                        C=None,
                        p=None,
                        a=None,
                        p_exp=None,
                        wall_ms=(time.perf_counter() - started) * 1e3,
                        converged=f"error:{type(exc).__name__}",
                    )
                table.rows.append(row)
    return table


def write_results_csv(table: ResultTable, path, measure_wall: bool = False) -> None:
    Path(path).write_text(table.to_csv_text(measure_wall=measure_wall), encoding="utf-8")


def _lgamma(x: float) -> float:
    return math.lgamma(x)


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            break
    return h


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        _lgamma(a + b) - _lgamma(a) - _lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, df: float) -> float:
    """P(|T_df| >= |t|) via the incomplete beta identity."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    return min(1.0, max(0.0, regularized_incomplete_beta(df / 2.0, 0.5, x)))


def welch_t_test(sample_a, sample_b) -> tuple[float, float]:
    """Welch unequal-variance t statistic and two-sided p-value.

    Degenerate zero-variance inputs: equal means give (0, 1); otherwise a
    tiny variance floor keeps the statistic finite (and the p-value is
    astronomically small, as it should be).
    """
    a = np.asarray(sample_a, dtype=float).ravel()
    b = np.asarray(sample_b, dtype=float).ravel()
    if a.size < 2 or b.size < 2:
        raise ValueError("both samples need at least two values")
    va = float(a.var(ddof=1))
    vb = float(b.var(ddof=1))
    if va == 0.0 and vb == 0.0:
        if a.mean() == b.mean():
            return 0.0, 1.0
        va = vb = 1e-24
    sa, sb = va / a.size, vb / b.size
    t = float((a.mean() - b.mean()) / math.sqrt(sa + sb))
    df = (sa + sb) ** 2 / (
        (sa**2 / (a.size - 1) if sa > 0 else 0.0) + (sb**2 / (b.size - 1) if sb > 0 else 0.0)
    )
    return t, student_t_two_sided_p(t, df)


def paired_t_test(sample_a, sample_b) -> tuple[float, float]:
    """Paired t statistic on per-seed differences, two-sided p-value.

    Useful when runs are paired by seed; requires equal lengths.
    """
    a = np.asarray(sample_a, dtype=float).ravel()
    b = np.asarray(sample_b, dtype=float).ravel()
    if a.size != b.size:
        raise ValueError("paired test needs equally long samples")
    if a.size < 2:
        raise ValueError("paired test needs at least two pairs")
    d = a - b
    vd = float(d.var(ddof=1))
    if vd == 0.0:
        if d.mean() == 0.0:
            return 0.0, 1.0
        vd = 1e-24
    t = float(d.mean() / math.sqrt(vd / d.size))
    return t, student_t_two_sided_p(t, d.size - 1)


def read_results_csv(path) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RESULT_HEADER.split(","):
            raise ValueError(f"{path}: unexpected results header {reader.fieldnames}")
        return list(reader)


def summarize_results(rows, alpha: float = 0.05, reference: str = "Conic", paired: bool = False) -> str:
    """Plain-text summary per (dataset, fraction): mean accuracy by method,
    the best method highlighted, and a star on methods whose mean is
    statistically significantly worse than the reference method's.

    The default comparison is the unequal-variance two-sample test; paired
    uses per-seed differences instead (runs are paired by seed). Everything
    is recomputed from the raw per-run rows, so the stars are reproducible
    from the CSV alone.
    """
    groups: dict = {}
    for row in rows:
        if row["mean_accuracy"] == "":
            continue
        key = (row["dataset"], row["fraction"])
        groups.setdefault(key, {}).setdefault(row["method"], []).append(
            (int(row.get("seed", 0)), float(row["mean_accuracy"]))
        )
    out = StringIO()
    for (dataset, fraction), methods in groups.items():
        by_method = {m: [v for _, v in sorted(pairs)] for m, pairs in methods.items()}
        out.write(f"dataset={dataset} fraction={fraction}\n")
        ref = by_method.get(reference)
        means = {m: float(np.mean(v)) for m, v in by_method.items()}
        best = max(means.values())
        out.write(f"  {'method':<12} {'mean':>8} {'std':>8} {'runs':>5} {'p_vs_' + reference:>12}\n")
        for method, values in sorted(by_method.items()):
            mean = means[method]
            std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
            star = " "
            p_text = "-"
            if ref is not None and method != reference:
                if len(values) >= 2 and len(ref) >= 2:
                    if paired and len(values) == len(ref):
                        _, p = paired_t_test(ref, values)
                    else:
                        _, p = welch_t_test(ref, values)
                    p_text = f"{p:.4f}"
                    if p < alpha and mean < means[reference]:
                        star = "*"
            marker = "<best" if mean == best else ""
            out.write(
                f"  {method:<12} {mean:>8.4f} {std:>8.4f} {len(values):>5} {p_text:>12} {star}{marker}\n"
            )
        out.write("\n")
    return out.getvalue()


def write_bound_csv(reports, path) -> None:
    lines = [reports[0].csv_header()]
    lines += [r.csv_row() for r in reports]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

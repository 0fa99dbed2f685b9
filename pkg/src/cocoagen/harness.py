"""
Monte Carlo experiments: partition sweeps, regularization sweeps, the
centralized baseline, and statistical checks of the random-matrix identities
the theory rests on.

Every trial draws its data from its own :class:`RngStream`, keyed by the
cell's block sizes and the trial index. Results therefore do not depend on
how cells are distributed over workers, and a cell can be re-run alone.
Using the sizes (not the lambda) as key means a lambda sweep reuses the
same training matrices in every lambda column.
"""

from __future__ import annotations

import csv
import io
import json
import math
import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .numerics import NumericalFailure, RngStream, pseudoinverse, sample_gaussian_matrix, stream_id_for
from .problem import PartitionSpec, generate_instance, make_partition
from .solver import (
    SolverConfig,
    centralized_ls,
    closed_form_step,
    cocoa_run,
    cocoa_step,
    initial_state,
    prepare_nodes,
    stacked_block_pinv,
)
from .theory import ExtendedReal, predict_first_iteration_error, recurse_error, wishart_pinv_coefficient

__all__ = [
    "SweepConfig",
    "SweepRow",
    "GenError",
    "ValidationReport",
    "CSV_HEADER",
    "draw_x_true",
    "trial_stream",
    "training_error",
    "generalization_error",
    "run_first_iteration_experiment",
    "run_convergence_sweep",
    "run_centralized_baseline",
    "validate_projection_expectation",
    "validate_wishart_moment",
    "validate_closed_form",
    "validate_error_recursion",
    "rows_to_csv",
    "rows_from_csv",
    "load_config",
]

CSV_HEADER = ("n", "p", "K", "sizes", "lambda", "N", "T", "seed", "empirical_first_iter",
              "theory_first_iter", "gen_error", "train_error", "failures", "wall_time_ms")

FAILURE_FLAG_FRACTION = 0.10


@dataclass
class SweepConfig:
    """Settings for a sweep. Defaults give n=50, p=150, K=2 with every split 2..148."""

    n: int = 50
    p: int = 150
    K: int = 2
    partition_grid: list | None = None
    lambdas: list = field(default_factory=lambda: [0.0])
    N: int = 100
    T: int = 200
    test_rows: int | None = None
    seed: int = 0
    record_first_iteration: bool = True
    noise_std: float = 0.0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.K < 1 or self.K > self.p:
            raise ValueError(f"need 1 <= K <= p, got K={self.K}, p={self.p}")
        if self.test_rows is None:
            self.test_rows = 10 * self.n
        if self.partition_grid is None:
            if self.K == 2:
                self.partition_grid = [(p1, self.p - p1) for p1 in range(2, self.p - 1)]
            else:
                self.partition_grid = [make_partition(self.p, self.K).sizes]
        self.partition_grid = [tuple(int(s) for s in sizes) for sizes in self.partition_grid]
        for sizes in self.partition_grid:
            spec = make_partition(self.p, sizes=sizes)
            if spec.K != self.K:
                raise ValueError(f"grid entry {sizes} does not have K={self.K} blocks")
        self.lambdas = [float(lam) for lam in self.lambdas]
        if any(lam < 0 for lam in self.lambdas):
            raise ValueError("lambdas must be nonnegative")

    def specs(self):
        return [PartitionSpec(self.p, sizes) for sizes in self.partition_grid]


def load_config(path, **overrides) -> SweepConfig:
    """Read a JSON sweep config; non-``None`` overrides win over file values."""
    with open(path) as fh:
        doc = json.load(fh)
    doc.update({k: v for k, v in overrides.items() if v is not None})
    return SweepConfig(**doc)


@dataclass
class SweepRow:
    n: int
    p: int
    K: int
    sizes: tuple
    lam: float
    N: int
    T: int
    seed: int
    empirical_first_iter: float | None = None
    theory_first_iter: ExtendedReal | None = None
    gen_error: float | None = None
    train_error: float | None = None
    failures: int = 0
    wall_time_ms: float | None = None
    # kept in memory only; not part of the CSV contract
    first_iter_se: float | None = None
    gen_error_se: float | None = None
    population_gen_error: float | None = None
    train_error_max: float | None = None

    @property
    def flagged(self) -> bool:
        return self.failures > FAILURE_FLAG_FRACTION * self.N


class GenError(NamedTuple):
    empirical: float
    population: float


def draw_x_true(p, seed):
    """The fixed ground truth of a sweep: ``x ~ N(0, I_p)`` from a dedicated stream."""
    return RngStream(seed, stream_id_for("x_true", p)).generator().standard_normal(p)


def trial_stream(seed, sizes, trial) -> RngStream:
    return RngStream(seed, stream_id_for("trial", tuple(sizes), int(trial)))


def training_error(instance, x_hat):
    """``||A (x_true - x_hat)||^2 / n``."""
    d = instance.A @ (instance.x_true - np.asarray(x_hat))
    return float(d @ d) / instance.n


def generalization_error(x_true, x_hat, test_matrix) -> GenError:
    """Empirical test error on ``test_matrix`` plus the exact population value."""
    e = np.asarray(x_true) - np.asarray(x_hat)
    d = np.asarray(test_matrix) @ e
    return GenError(float(d @ d) / d.shape[0], float(e @ e))


def _mean_se(values):
    values = [v for v in values]
    m = len(values)
    if m == 0:
        return None, None
    mean = math.fsum(values) / m
    if m == 1:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (m - 1)
    return mean, math.sqrt(var / m)


def _finite(*vals):
    return all(math.isfinite(v) for v in vals)


def _run_cell(args):
    config, sizes, lam, converge, x_true = args
    t0 = time.perf_counter()
    spec = PartitionSpec(config.p, sizes)
    first, gen, pop, train = [], [], [], []
    failures = 0
    for trial in range(config.N):
        stream = trial_stream(config.seed, sizes, trial)
        inst = generate_instance(config.n, config.p, x_true, config.noise_std, stream)
        solver_cfg = SolverConfig(lam=lam, T=config.T if converge else 1, K=spec.K)
        try:
            if converge:
                record = (1,) if config.record_first_iteration else ()
                trace = cocoa_run(inst, spec, solver_cfg, record=record)
                x_hat = trace.x_hat
                test = sample_gaussian_matrix(config.test_rows, config.p, stream.child("test"))
                g = generalization_error(x_true, x_hat, test)
                tr = training_error(inst, x_hat)
                f1 = None
                if config.record_first_iteration:
                    e1 = x_true - trace.snapshots[1]
                    f1 = float(e1 @ e1)
                if not _finite(g.empirical, g.population, tr, f1 if f1 is not None else 0.0):
                    raise NumericalFailure("non-finite result")
                gen.append(g.empirical)
                pop.append(g.population)
                train.append(tr)
                if f1 is not None:
                    first.append(f1)
            else:
                nodes = prepare_nodes(inst, spec, solver_cfg)
                state = cocoa_step(initial_state(config.n, spec), inst, spec, solver_cfg, nodes)
                e1 = x_true - state.x_hat
                f1 = float(e1 @ e1)
                if not math.isfinite(f1):
                    raise NumericalFailure("non-finite result")
                first.append(f1)
        except NumericalFailure:
            failures += 1
    row = SweepRow(config.n, config.p, config.K, tuple(sizes), lam, config.N, config.T, config.seed,
                   failures=failures)
    if first:
        row.empirical_first_iter, row.first_iter_se = _mean_se(first)
    if lam == 0:
        row.theory_first_iter = predict_first_iteration_error(x_true, spec, config.n).epsilon_G
    if converge and gen:
        row.gen_error, row.gen_error_se = _mean_se(gen)
        row.population_gen_error = _mean_se(pop)[0]
        row.train_error = _mean_se(train)[0]
        row.train_error_max = max(train)
    row.wall_time_ms = (time.perf_counter() - t0) * 1e3
    return row


def _run_cells(config, converge, x_true, jobs):
    x_true = draw_x_true(config.p, config.seed) if x_true is None else np.asarray(x_true, float)
    if x_true.shape != (config.p,):
        raise ValueError(f"x_true has shape {x_true.shape}, expected ({config.p},)")
    tasks = [(config, sizes, lam, converge, x_true)
             for sizes in config.partition_grid for lam in config.lambdas]
    if jobs is None or jobs <= 1 or len(tasks) <= 1:
        return [_run_cell(t) for t in tasks]
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
        return list(pool.map(_run_cell, tasks))


def run_first_iteration_experiment(config: SweepConfig, x_true=None, jobs=1):
    """Mean ``||x - x_hat^1||^2`` per grid cell next to the predicted value.

    Cells inside the critical band are run like any other; their theory
    value is :data:`INF`.
    """
    if not config.record_first_iteration:
        raise ValueError("record_first_iteration must be set for this experiment")
    return _run_cells(config, False, x_true, jobs)


def run_convergence_sweep(config: SweepConfig, x_true=None, jobs=1):
    """Run ``T`` rounds per trial and average training and test errors per cell.

    Fresh ``A`` and ``A'`` (``test_rows x p``) are drawn for every trial;
    ``x_true`` is shared by all trials and cells.
    """
    return _run_cells(config, True, x_true, jobs)


@dataclass
class BaselineResult:
    train_error: float
    gen_error: float
    population_gen_error: float
    population_se: float
    reference: float
    trials: int


def run_centralized_baseline(config: SweepConfig, x_true=None) -> BaselineResult:
    """Average errors of the minimum-norm LS solution ``A^+ y``.

    ``reference`` is ``(1 - min(n, p)/p) ||x||^2``, the expected population
    error of that solution.
    """
    x_true = draw_x_true(config.p, config.seed) if x_true is None else np.asarray(x_true, float)
    train, gen, pop = [], [], []
    for trial in range(config.N):
        stream = RngStream(config.seed, stream_id_for("centralized", trial))
        inst = generate_instance(config.n, config.p, x_true, config.noise_std, stream)
        x_hat = centralized_ls(inst.A, inst.y)
        test = sample_gaussian_matrix(config.test_rows, config.p, stream.child("test"))
        g = generalization_error(x_true, x_hat, test)
        train.append(training_error(inst, x_hat))
        gen.append(g.empirical)
        pop.append(g.population)
    ref = (1 - min(config.n, config.p) / config.p) * float(x_true @ x_true)
    pop_mean, pop_se = _mean_se(pop)
    return BaselineResult(_mean_se(train)[0], _mean_se(gen)[0], pop_mean, pop_se, ref, config.N)


# --- validators ------------------------------------------------------------

@dataclass
class ValidationReport:
    analytic: float | str
    empirical_mean: float
    std_error: float
    trials: int
    passed: bool | None
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {"analytic": self.analytic, "empirical_mean": self.empirical_mean,
                "std_error": self.std_error, "trials": self.trials, "pass": self.passed,
                "details": self.details}

    @classmethod
    def from_dict(cls, d):
        return cls(d["analytic"], d["empirical_mean"], d["std_error"], d["trials"], d["pass"],
                   d.get("details", {}))


def _within(mean, analytic, se, k):
    # the floor keeps zero-variance cases (e.g. C^+ C = I) from failing on rounding
    return abs(mean - analytic) <= k * se + 1e-9 * (1.0 + abs(analytic))


def validate_projection_expectation(n, p_c, z=None, trials=2000, seed=0):
    """Check ``E[z^T C^+ C z] = ||z||^2 min(n, p_c) / p_c`` for Gaussian ``C``.

    Passes when the Monte Carlo mean is within 4 standard errors.
    """
    if trials < 100:
        raise ValueError("trials must be >= 100")
    z = np.ones(p_c) if z is None else np.asarray(z, dtype=float)
    if z.shape != (p_c,):
        raise ValueError(f"z must have length {p_c}")
    gen = RngStream(seed, stream_id_for("lemma3", n, p_c)).generator()
    vals = []
    for _ in range(trials):
        C = gen.standard_normal((n, p_c))
        w = C @ z
        vals.append(float(z @ (pseudoinverse(C) @ w)))
    mean, se = _mean_se(vals)
    analytic = float(z @ z) * min(n, p_c) / p_c
    return ValidationReport(analytic, mean, se, trials, _within(mean, analytic, se, 4.0),
                            {"n": n, "p_c": p_c})


def validate_wishart_moment(n, p_k, trials=2000, seed=0, demo=False, rel_tol=0.05,
                            offdiag_tol=5e-3):
    """Monte Carlo of ``E[(A A^T)^+]`` for an ``n x p_k`` Gaussian ``A``.

    Passes when every diagonal entry of the averaged matrix is within
    ``rel_tol`` of the analytic coefficient and the mean absolute off-diagonal entry of the averaged
    matrix is below ``offdiag_tol``. Inside the critical band only
    ``demo=True`` is accepted: running means are reported and ``passed`` is
    ``None``.
    """
    coef = wishart_pinv_coefficient(p_k, n)
    if coef.is_inf and not demo:
        raise ValueError(f"p_k={p_k} is in the critical band for n={n}; use demo=True")
    gen = RngStream(seed, stream_id_for("wishart", n, p_k)).generator()
    acc = np.zeros((n, n))
    diag_means = []
    running = {}
    checkpoints = {int(trials * f) for f in (0.1, 0.25, 0.5, 0.75, 1.0)}
    for t in range(1, trials + 1):
        A = gen.standard_normal((n, p_k))
        W = pseudoinverse(A @ A.T)
        acc += W
        diag_means.append(float(np.trace(W)) / n)
        if t in checkpoints:
            running[t] = float(np.trace(acc)) / (n * t)
    M = acc / trials
    off = M[~np.eye(n, dtype=bool)]
    offdiag = float(np.mean(np.abs(off))) if off.size else 0.0
    mean, se = _mean_se(diag_means)
    details = {"n": n, "p_k": p_k, "offdiag_mean_abs": offdiag, "running_diag_mean": running}
    if coef.is_inf:
        return ValidationReport("inf", mean, se, trials, None, details)
    analytic = float(coef)
    worst = float(np.max(np.abs(np.diag(M) / analytic - 1.0)))
    details["diag_max_rel_dev"] = worst
    passed = worst <= rel_tol and offdiag < offdiag_tol
    return ValidationReport(analytic, mean, se, trials, passed, details)


def validate_closed_form(n, p, spec: PartitionSpec, T=20, trials=50, seed=0, tol=1e-9):
    """Max relative gap between the CoCoA iterates and the closed-form recursion.

    The gap at round ``t`` is ``||x_cocoa - x_closed|| / max(||x_closed||, tiny)``;
    the report passes when the maximum over trials and ``t <= T`` is below
    ``tol``.
    """
    if spec.p != p:
        raise ValueError("partition does not match p")
    worst = 0.0
    cfg = SolverConfig(lam=0.0, T=T, K=spec.K)
    for trial in range(trials):
        stream = RngStream(seed, stream_id_for("lemma1", n, spec.sizes, trial))
        x = stream.child("x").generator().standard_normal(p)
        inst = generate_instance(n, p, x, 0.0, stream)
        nodes = prepare_nodes(inst, spec, cfg)
        A_bar = stacked_block_pinv(inst.A, spec)
        state = initial_state(n, spec)
        x_cf = np.zeros(p)
        for _ in range(T):
            state = cocoa_step(state, inst, spec, cfg, nodes)
            x_cf = closed_form_step(x_cf, A_bar, inst.A, inst.y, spec.K)
            scale = max(float(np.linalg.norm(x_cf)), np.finfo(float).tiny)
            worst = max(worst, float(np.linalg.norm(state.x_hat - x_cf)) / scale)
    return ValidationReport(0.0, worst, 0.0, trials, worst < tol,
                            {"n": n, "p": p, "sizes": list(spec.sizes), "T": T, "tol": tol})


def validate_error_recursion(n, spec: PartitionSpec, x_true=None, warmup=5, trials=500, seed=0):
    """Compare the one-step error map with the measured next-round error.

    Per-block errors ``E||x_k - x_hat_k^t||^2`` at ``t = warmup`` are estimated
    over the trials and pushed through :func:`recurse_error`; the result is
    compared with the mean of ``||x - x_hat^{t+1}||^2`` (pass within 3
    standard errors). The map treats the iterate as independent of ``A``, so
    this is a check of an approximation.
    """
    if warmup < 1:
        raise ValueError("warmup must be >= 1")
    x_true = draw_x_true(spec.p, seed) if x_true is None else np.asarray(x_true, float)
    cfg = SolverConfig(lam=0.0, T=warmup + 1, K=spec.K)
    block_err = [[] for _ in range(spec.K)]
    nxt = []
    for trial in range(trials):
        stream = RngStream(seed, stream_id_for("lemma2", spec.sizes, trial))
        inst = generate_instance(n, spec.p, x_true, 0.0, stream)
        trace = cocoa_run(inst, spec, cfg, record=(warmup, warmup + 1))
        e_t = spec.split(x_true - trace.snapshots[warmup])
        for k in range(spec.K):
            block_err[k].append(float(e_t[k] @ e_t[k]))
        e1 = x_true - trace.snapshots[warmup + 1]
        nxt.append(float(e1 @ e1))
    e_means = [_mean_se(b)[0] for b in block_err]
    pred = recurse_error(e_means, spec, n)
    mean, se = _mean_se(nxt)
    details = {"sizes": list(spec.sizes), "n": n, "warmup": warmup, "block_errors": e_means}
    if pred.is_inf:
        return ValidationReport("inf", mean, se, trials, None, details)
    analytic = float(pred)
    return ValidationReport(analytic, mean, se, trials, _within(mean, analytic, se, 3.0), details)


# --- CSV -------------------------------------------------------------------

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, ExtendedReal):
        return "inf" if v.is_inf else repr(v.value)
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


def rows_to_csv(rows, path=None, timing=True):
    """Serialize rows to CSV text (and write it to ``path`` if given).

    With ``timing=False`` the ``wall_time_ms`` column is left empty so that
    the output is a pure function of the configuration.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([r.n, r.p, r.K, "|".join(map(str, r.sizes)), _fmt(float(r.lam)), r.N, r.T,
                    r.seed, _fmt(r.empirical_first_iter), _fmt(r.theory_first_iter),
                    _fmt(r.gen_error), _fmt(r.train_error), r.failures,
                    _fmt(r.wall_time_ms) if timing else ""])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def _opt_float(s):
    return None if s == "" else float(s)


def rows_from_csv(source):
    """Parse CSV produced by :func:`rows_to_csv` (a path or the text itself)."""
    if "\n" not in source:
        with open(source, newline="") as fh:
            source = fh.read()
    reader = csv.DictReader(io.StringIO(source))
    if tuple(reader.fieldnames or ()) != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {reader.fieldnames}")
    rows = []
    for d in reader:
        theory = d["theory_first_iter"]
        rows.append(SweepRow(
            int(d["n"]), int(d["p"]), int(d["K"]), tuple(int(s) for s in d["sizes"].split("|")),
            float(d["lambda"]), int(d["N"]), int(d["T"]), int(d["seed"]),
            _opt_float(d["empirical_first_iter"]),
            None if theory == "" else ExtendedReal.from_json(theory),
            _opt_float(d["gen_error"]), _opt_float(d["train_error"]), int(d["failures"]),
            _opt_float(d["wall_time_ms"])))
    return rows


def config_to_json(config: SweepConfig) -> str:
    doc = asdict(config)
    doc["partition_grid"] = [list(s) for s in config.partition_grid]
    return json.dumps(doc, indent=2)

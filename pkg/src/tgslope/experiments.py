"""Synthetic data, replication harnesses, cross-validation and BIC model selection."""

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import metrics
from .errors import DivergedError, InvalidArgumentError, NumericalError
from .linalg import Rng, procrustes_parts, random_gaussian, random_orthogonal, thin_svd
from .penalty import ChiQuantileParams, lambda_chi_sequence
from .solvers import (
    Problem,
    SolverConfig,
    initial_factor,
    solve_pdcae,
    solve_tbmm,
    solve_tglasso,
    solve_tlrr,
)
from .tensor import mode3_fold, mode3_product, mode3_unfold

METHODS = ("pdcae", "tbmm", "tglasso", "tlrr")
METRICS = ("fdp", "tp", "rgee", "mse", "l2_loss", "discovery", "iterations", "converged")


@dataclass(frozen=True)
class SimulationSpec:
    n: int
    p: int
    p1: int
    p2: int
    k_rank: int
    s: int
    design: str = "orthogonal"
    sigma: float = 1.0
    q: float = 0.1
    reps: int = 1
    base_seed: int = 0

    def __post_init__(self):
        for name in ("n", "p", "p1", "p2", "k_rank", "reps"):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0 <= self.s <= self.p:
            raise InvalidArgumentError(f"s must lie in [0, p], got s={self.s}, p={self.p}")
        if self.design not in ("orthogonal", "gaussian"):
            raise InvalidArgumentError(f"design must be 'orthogonal' or 'gaussian', got {self.design!r}")
        if self.design == "orthogonal" and self.n != self.p:
            raise InvalidArgumentError(f"orthogonal design needs n == p, got n={self.n}, p={self.p}")
        if self.k_rank > min(self.p, self.p1 * self.p2):
            raise InvalidArgumentError(f"k_rank must be <= min(p, p1*p2), got {self.k_rank}")
        if self.sigma < 0:
            raise InvalidArgumentError(f"sigma must be nonnegative, got {self.sigma}")
        if not 0.0 < self.q < 1.0:
            raise InvalidArgumentError(f"q must lie in (0, 1), got {self.q}")

    @property
    def nominal_fdr(self):
        return self.q * (self.p - self.s) / self.p

    def key(self):
        return dict(n=self.n, p=self.p, p1=self.p1, p2=self.p2, k_rank=self.k_rank, s=self.s,
                    design=self.design, sigma=self.sigma, q=self.q)


@dataclass
class GroundTruth:
    g_star: np.ndarray
    h_star: np.ndarray
    b_star: np.ndarray
    support: np.ndarray
    signal_a: float


def signal_scale(p, k_rank):
    """``a = sqrt(4 ln p / (1 - p^(-2/K)) - K)``; support rows get norm ``a sqrt(K)``."""
    inner = 4.0 * math.log(p) / (1.0 - p ** (-2.0 / k_rank)) - k_rank if p > 1 else -1.0
    if not inner > 0:
        raise InvalidArgumentError(
            f"signal scale a is undefined for p={p}, K={k_rank} (a^2 = {inner:.4g} <= 0)"
        )
    return math.sqrt(inner)


def gen_design(spec, rng):
    if spec.design == "orthogonal":
        if spec.n != spec.p:
            raise InvalidArgumentError("orthogonal design needs n == p")
        return random_orthogonal(rng, spec.n)
    return random_gaussian(rng, spec.n, spec.p, sd=1.0 / math.sqrt(spec.n))


def gen_truth(spec, rng):
    """Random row support of size ``s``; support rows U[0.1, 1.1] rescaled to ``a sqrt(K)``."""
    k = spec.k_rank
    a = signal_scale(spec.p, k)
    support = np.sort(rng.sample_without_replacement(spec.p, spec.s))
    g = np.zeros((spec.p, k))
    rows = rng.uniform((spec.s, k), low=0.1, high=1.1)
    rows *= a * math.sqrt(k) / np.linalg.norm(rows, axis=1, keepdims=True)
    g[support] = rows
    m = spec.p1 * spec.p2
    h = thin_svd(rng.normal((m, m))).u[:, :k]
    b = mode3_fold(g @ h.T, spec.p1, spec.p2)
    return GroundTruth(g_star=g, h_star=h, b_star=b, support=support, signal_a=a)


def gen_response(truth, x, sigma, rng):
    """``Y = B* x_3 X + E`` with i.i.d. ``N(0, sigma^2)`` noise."""
    clean = mode3_product(truth.b_star, x)
    if sigma == 0:
        return clean
    return clean + rng.normal(clean.shape, sd=sigma)


def default_lambda(spec):
    """Chi-quantile sequence at the known noise level (also used for Gaussian designs)."""
    return lambda_chi_sequence(ChiQuantileParams(k_dof=spec.k_rank, q=spec.q, sigma=spec.sigma, p=spec.p))


def make_problem(x, y, k_rank, lam):
    return Problem.from_tensor(x, y, k_rank, lam)


def plugin_sigma(prob, cfg=None):
    """Noise level from an unpenalized fit: ``sqrt(RSS / (n p1 p2 - K (p + p1 p2 - K)))``."""
    res = solve_tlrr(prob, cfg)
    p1, p2 = prob.dims
    k = prob.k_rank
    df = k * (prob.p + p1 * p2 - k)
    denom = prob.n * p1 * p2 - df
    if denom <= 0:
        raise InvalidArgumentError(
            f"too few observations for a plug-in sigma: n*p1*p2={prob.n * p1 * p2} <= df={df}"
        )
    resid = prob.y_unfolded - prob.x @ res.g @ res.h.T
    return math.sqrt(float(np.sum(resid**2)) / denom)


# -- cross-validation -------------------------------------------------------


def lambda_grid(prob, n_grid=30, lo=1e-3):
    """Log-spaced grid on ``[lo, 1] * lam_max``, descending.

    ``lam_max`` is the largest row norm of ``X^T M3(Y) H0`` with ``H0`` the
    Procrustes factor at the spectral warm start, the smallest flat penalty
    that zeroes ``G`` for that ``H``.
    """
    h0, _, _ = procrustes_parts(prob.xty.T @ initial_factor(prob))
    lam_max = float(np.linalg.norm(prob.xty @ h0, axis=1).max())
    return lam_max * np.logspace(0.0, math.log10(lo), n_grid)


def _select_from_scores(grid, scores, tie_tol=1e-12):
    """Smallest score wins; scores within ``tie_tol`` (relative) of the best go to the larger lambda."""
    grid = np.asarray(grid, dtype=float)
    scores = np.asarray(scores, dtype=float)
    best = np.nanmin(scores)
    tied = scores <= best + tie_tol * max(abs(best), 1.0)
    return float(grid[tied].max())


def cv_select_lambda(prob, grid=None, folds=5, rng=None, cfg=None, return_scores=False, warm_start=True):
    """Choose the flat group-lasso penalty by ``folds``-fold cross-validated MSPE.

    Samples are shuffled once and cut into contiguous folds.  Within a fold
    the grid is swept from the largest value down, warm-starting each fit
    from the previous nonzero solution.
    """
    n = prob.n
    if n < folds:
        raise InvalidArgumentError(f"need at least {folds} samples for {folds}-fold CV, got {n}")
    grid = lambda_grid(prob) if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise InvalidArgumentError("lambda grid is empty")
    rng = rng or Rng(0)
    perm = rng.permutation(n)
    parts = np.array_split(perm, folds)
    if any(part.size == 0 for part in parts):
        raise InvalidArgumentError("cross-validation produced an empty fold")
    order = np.argsort(-grid, kind="stable")
    p1, p2 = prob.dims
    scores = np.zeros(grid.size)
    for part in parts:
        train = np.setdiff1d(perm, part)
        sub = Problem(prob.x[train], prob.y_unfolded[train], prob.dims, prob.k_rank, np.zeros(prob.p))
        y_test = mode3_fold(prob.y_unfolded[part], p1, p2)
        g_prev = None
        for idx in order:
            res = solve_tglasso(sub, cfg, lam=float(grid[idx]), g0=g_prev)
            scores[idx] += metrics.mspe(y_test, res.b_hat, prob.x[part]) / folds
            if warm_start and np.any(res.g):
                g_prev = res.g
    chosen = _select_from_scores(grid, scores)
    if return_scores:
        return chosen, grid, scores
    return chosen


# -- BIC selection ----------------------------------------------------------


@dataclass
class BicSelection:
    k_rank: int
    lam: np.ndarray
    result: object
    bic_values: dict
    failures: dict = field(default_factory=dict)


def chi_lambda_builder(q, sigma=None, cfg=None):
    """Lambda builder for :func:`bic_select`: chi sequence with known or plug-in sigma."""

    def build(prob):
        sig = sigma if sigma is not None else plugin_sigma(prob, cfg)
        if sig <= 0:
            raise NumericalError("plug-in sigma is zero; data are fitted exactly")
        return lambda_chi_sequence(ChiQuantileParams(k_dof=prob.k_rank, q=q, sigma=sig, p=prob.p))

    return build


def bic_select(prob_builder, k_grid, lambda_builder, solver=solve_pdcae, cfg=None):
    """Fit each rank in ``k_grid`` and keep the smallest BIC (ties go to the smaller rank)."""
    values, failures = {}, {}
    best = None
    for k in sorted(k_grid):
        try:
            prob = prob_builder(k)
            prob = prob.with_lambda(lambda_builder(prob))
            res = solver(prob, cfg)
            y = mode3_fold(prob.y_unfolded, *prob.dims)
            value = metrics.bic(y, prob.x, res.b_hat, metrics.discovery(res.b_hat), k)
        except (NumericalError, InvalidArgumentError) as exc:
            failures[k] = str(exc)
            values[k] = float("nan")
            continue
        values[k] = value
        if best is None or value < best[0]:
            best = (value, k, prob.lam, res)
    if best is None:
        raise NumericalError(f"every BIC candidate failed: {failures}")
    return BicSelection(k_rank=best[1], lam=best[2], result=best[3], bic_values=values, failures=failures)


# -- replication harness ----------------------------------------------------


@dataclass
class ReplicationResult:
    grid_index: int
    rep: int
    method: str
    fdp: float = float("nan")
    tp: float = float("nan")
    rgee: float = float("nan")
    mse: float = float("nan")
    l2_loss: float = float("nan")
    discovery: int = -1
    iterations: int = 0
    converged: bool = False
    time: float = 0.0
    lam_cv: float = float("nan")
    error: str = ""


@dataclass
class SummaryRow:
    grid_index: int
    method: str
    metric: str
    mean: float
    sd: float
    se: float
    reps: int
    failures: int


@dataclass
class SummaryTable:
    specs: list
    rows: list
    reps: list

    def get(self, grid_index, method, metric):
        for row in self.rows:
            if (row.grid_index, row.method, row.metric) == (grid_index, method, metric):
                return row
        raise KeyError((grid_index, method, metric))


def _solve_method(method, prob, cfg, rng):
    if method == "pdcae":
        return solve_pdcae(prob, cfg), float("nan")
    if method == "tbmm":
        return solve_tbmm(prob, cfg), float("nan")
    if method == "tlrr":
        return solve_tlrr(prob, cfg), float("nan")
    if method == "tglasso":
        lam = cv_select_lambda(prob, rng=rng, cfg=cfg)
        return solve_tglasso(prob, cfg, lam=lam), lam
    raise InvalidArgumentError(f"unknown method {method!r}")


def run_replication(spec, methods, cfg, grid_index, rep, lam=None):
    """One replication: data from the child stream ``(grid_index, rep)``, then every method."""
    rng = Rng(spec.base_seed, stream=(grid_index, rep))
    x = gen_design(spec, rng)
    truth = gen_truth(spec, rng)
    y = gen_response(truth, x, spec.sigma, rng)
    lam = default_lambda(spec) if lam is None else lam
    prob = make_problem(x, y, spec.k_rank, lam)
    out = []
    for m_index, method in enumerate(methods):
        row = ReplicationResult(grid_index=grid_index, rep=rep, method=method)
        started = time.perf_counter()
        try:
            res, lam_cv = _solve_method(method, prob, cfg, Rng(spec.base_seed, stream=(grid_index, rep, 1, m_index)))
        except (NumericalError, InvalidArgumentError, DivergedError) as exc:
            row.error = f"{type(exc).__name__}: {exc}"
            out.append(row)
            continue
        comp = metrics.compare_support(res.b_hat, truth.b_star)
        diff = metrics.frontal_slice_norms(res.b_hat) - metrics.frontal_slice_norms(truth.b_star)
        row.fdp = metrics.fdp(comp)
        row.tp = metrics.tp_rate(comp)
        row.rgee = metrics.rgee(res.b_hat, truth.b_star) if spec.s else float("nan")
        row.mse = metrics.mse(res.b_hat, truth.b_star, x)
        row.l2_loss = float(diff @ diff)
        row.discovery = comp.r
        row.iterations = res.iterations
        row.converged = res.converged
        row.lam_cv = lam_cv
        row.time = time.perf_counter() - started
        out.append(row)
    return out


def _task(args):
    return run_replication(*args)


def summarize(specs, reps, methods):
    rows = []
    for gi, _ in enumerate(specs):
        for method in methods:
            mine = [r for r in reps if r.grid_index == gi and r.method == method]
            ok = [r for r in mine if not r.error]
            for metric in METRICS:
                vals = np.array([float(getattr(r, metric)) for r in ok])
                vals = vals[np.isfinite(vals)]
                k = vals.size
                mean = float(vals.mean()) if k else float("nan")
                sd = float(vals.std(ddof=1)) if k > 1 else 0.0 if k == 1 else float("nan")
                se = sd / math.sqrt(k) if k else float("nan")
                rows.append(SummaryRow(gi, method, metric, mean, sd, se, k, len(mine) - len(ok)))
    return rows


def run_study(specs, methods=("pdcae",), cfg=None, threads=1, lam=None):
    """Run every replication of every grid point and aggregate mean, SD and SE.

    Results are stored in indexed slots, so the table does not depend on the
    execution order or on ``threads``.
    """
    cfg = cfg or SolverConfig()
    methods = tuple(methods)
    tasks = [(spec, methods, cfg, gi, rep, lam) for gi, spec in enumerate(specs) for rep in range(spec.reps)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_task, tasks))
    else:
        chunks = [_task(t) for t in tasks]
    reps = [row for chunk in chunks for row in chunk]
    reps.sort(key=lambda r: (r.grid_index, r.rep, methods.index(r.method)))
    return SummaryTable(specs=list(specs), rows=summarize(specs, reps, methods), reps=reps)


def run_fdr_study(spec, solver_choice="pdcae", cfg=None, threads=1, lam=None):
    """TgFDR/TP study for a single grid point; see :func:`run_study`."""
    return run_study([spec], methods=(solver_choice,), cfg=cfg, threads=threads, lam=lam)


# -- presets -----------------------------------------------------------------

PRESET_VERSION = "1"


def _grid(base, **sweep):
    (name, values), = sweep.items()
    return [replace(base, **{name: v}) for v in values]


def preset_specs(preset, scale="desk", reps=None, seed=0, **overrides):
    """Grid of specs for a named preset.

    ``desk`` presets are small regimes that finish in minutes; ``paper``
    presets use large problem sizes and take hours.
    """
    if scale not in ("desk", "paper"):
        raise InvalidArgumentError(f"unknown scale {scale!r}")
    if preset == "fdr":
        if scale == "desk":
            base = SimulationSpec(n=200, p=200, p1=5, p2=5, k_rank=5, s=10, design="orthogonal", q=0.1, reps=200)
            sweep = dict(s=(10, 20, 40))
        else:
            base = SimulationSpec(n=1000, p=1000, p1=10, p2=10, k_rank=20, s=25, design="orthogonal", q=0.1, reps=100)
            sweep = dict(s=tuple(range(25, 251, 25)))
        methods = ("pdcae",)
    elif preset == "sparsity":
        if scale == "desk":
            base = SimulationSpec(n=600, p=200, p1=5, p2=5, k_rank=5, s=10, design="gaussian", q=0.05, reps=100)
            sweep = dict(s=(10,))
        else:
            base = SimulationSpec(n=3000, p=1000, p1=10, p2=10, k_rank=20, s=25, design="gaussian", q=0.05, reps=100)
            sweep = dict(s=tuple(range(25, 251, 25)))
        methods = METHODS
    elif preset == "size":
        if scale == "desk":
            base = SimulationSpec(n=200, p=200, p1=5, p2=5, k_rank=5, s=10, design="orthogonal", q=0.1, reps=50)
            specs = [replace(base, n=p, p=p) for p in (200, 500, 1000)]
            methods = ("pdcae",)
        else:
            base = SimulationSpec(n=3000, p=2000, p1=10, p2=10, k_rank=20, s=40, design="gaussian", q=0.05, reps=100)
            specs = [replace(base, p=p, s=int(0.02 * p)) for p in (2000, 4000, 6000)]
            methods = METHODS
        specs = [replace(s, base_seed=seed, **overrides) for s in specs]
        if reps is not None:
            specs = [replace(s, reps=reps) for s in specs]
        return specs, methods
    elif preset == "rank":
        if scale == "desk":
            base = SimulationSpec(n=400, p=200, p1=5, p2=5, k_rank=4, s=10, design="gaussian", q=0.05, reps=50)
            sweep = dict(k_rank=(4, 8, 16))
        else:
            base = SimulationSpec(n=1000, p=2000, p1=10, p2=10, k_rank=5, s=40, design="gaussian", q=0.05, reps=100)
            sweep = dict(k_rank=tuple(range(5, 51, 5)))
        methods = ("pdcae",) if scale == "desk" else METHODS
    else:
        raise InvalidArgumentError(f"unknown preset {preset!r}; choose fdr, sparsity, size or rank")
    specs = _grid(base, **sweep)
    specs = [replace(s, base_seed=seed, **overrides) for s in specs]
    if reps is not None:
        specs = [replace(s, reps=reps) for s in specs]
    return specs, methods


def spec_fields():
    return [f for f in asdict(SimulationSpec(n=1, p=1, p1=1, p2=1, k_rank=1, s=0))]

"""Solvers for group-SLOPE penalized CP low-rank tensor regression.

All solvers work on the reduced problem

    min_{G, H}  1/2 ||M3(Y) - X G H^T||_F^2 + P_lam(row norms of G)
    s.t.        H^T H = I_K

where ``M3(Y)`` is the ``n x (p1*p2)`` response unfolding (samples as rows).
Eliminating ``H`` by the Procrustes step gives the DC objective

    F(G) = 1/2 ||X G||_F^2 + P_lam(row norms of G) - ||M3(Y)^T X G||_*

which :func:`solve_pdcae` minimizes by proximal DCA with extrapolation.
"""

import copy
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DivergedError, InvalidArgumentError
from .linalg import procrustes_parts, spectral_norm, thin_svd
from .penalty import check_lambda, group_slope_prox, penalty_value
from .tensor import as_tensor3, mode3_fold, mode3_unfold


@dataclass
class SolverConfig:
    epsilon: float = 1e-6
    max_iter: int = 5000
    extrapolation: str = "nesterov"
    restart_every: Optional[int] = 200
    lipschitz_override: Optional[float] = None
    # "current" evaluates the nuclear-norm subgradient at G^(k), the standard
    # choice; "extrapolated" evaluates it at the extrapolated point A^(k)
    subgradient_at: str = "current"
    trace_every: Optional[int] = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidArgumentError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_iter < 1:
            raise InvalidArgumentError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.extrapolation not in ("none", "nesterov"):
            raise InvalidArgumentError(f"unknown extrapolation {self.extrapolation!r}")
        if self.subgradient_at not in ("current", "extrapolated"):
            raise InvalidArgumentError(f"unknown subgradient_at {self.subgradient_at!r}")
        if self.restart_every is not None and self.restart_every < 1:
            raise InvalidArgumentError("restart_every must be a positive integer or None")
        if self.lipschitz_override is not None and not self.lipschitz_override > 0:
            raise InvalidArgumentError("lipschitz_override must be positive")


class Problem:
    """Data of one fit: design ``x`` (n x p), unfolded response (n x p1*p2), rank and lambda.

    Gram products ``X^T X`` and ``X^T M3(Y)`` are computed once and shared by
    :meth:`with_lambda` copies.
    """

    def __init__(self, x, y_unfolded, dims, k_rank, lam):
        x = np.asarray(x, dtype=float)
        y_unfolded = np.asarray(y_unfolded, dtype=float)
        p1, p2 = (int(d) for d in dims)
        if x.ndim != 2 or y_unfolded.ndim != 2:
            raise InvalidArgumentError("x and y_unfolded must be matrices")
        n, p = x.shape
        if y_unfolded.shape != (n, p1 * p2):
            raise InvalidArgumentError(
                f"response unfolding has shape {y_unfolded.shape}, expected {(n, p1 * p2)}"
            )
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y_unfolded))):
            raise InvalidArgumentError("x and y must be finite")
        k_rank = int(k_rank)
        if not 1 <= k_rank <= min(p, p1 * p2):
            raise InvalidArgumentError(f"k_rank must lie in [1, {min(p, p1 * p2)}], got {k_rank}")
        self.x = x
        self.y_unfolded = y_unfolded
        self.dims = (p1, p2)
        self.k_rank = k_rank
        self.lam = check_lambda(lam, p)
        self.xtx = x.T @ x
        self.xty = x.T @ y_unfolded
        self.y_sq = float(np.sum(y_unfolded**2))
        self._cache = {}  # shared by shallow copies; depends only on x and y

    @classmethod
    def from_tensor(cls, x, y, k_rank, lam):
        """Build from a ``p1 x p2 x n`` response tensor."""
        y = as_tensor3(y)
        return cls(x, mode3_unfold(y), y.shape[:2], k_rank, lam)

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def p(self):
        return self.x.shape[1]

    def with_lambda(self, lam):
        other = copy.copy(self)
        other.lam = check_lambda(lam, self.p)
        return other

    def with_rank(self, k_rank):
        other = copy.copy(self)
        if not 1 <= k_rank <= min(self.p, self.dims[0] * self.dims[1]):
            raise InvalidArgumentError(f"k_rank {k_rank} out of range")
        other.k_rank = int(k_rank)
        return other


@dataclass
class FactorPair:
    g: np.ndarray
    h: np.ndarray


@dataclass
class SolverResult:
    factors: FactorPair
    b_hat: np.ndarray
    iterations: int
    objective_trace: np.ndarray
    final_step: float
    converged: bool
    rank_deficient: bool
    method: str = ""
    lipschitz: float = float("nan")
    elapsed: float = 0.0
    step_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def g(self):
        return self.factors.g

    @property
    def h(self):
        return self.factors.h


def dc_objective(g, prob):
    """``F(G) = 1/2 ||XG||^2 + P_lam(row norms of G) - ||M3(Y)^T X G||_*``."""
    g = np.asarray(g, dtype=float)
    _, nuclear, _ = procrustes_parts(prob.xty.T @ g)
    return 0.5 * float(np.sum(g * (prob.xtx @ g))) + penalty_value(g, prob.lam) - nuclear


def full_objective(g, h, prob):
    """``1/2 ||M3(Y) - X G H^T||_F^2 + P_lam(row norms of G)``, evaluated directly."""
    resid = prob.y_unfolded - prob.x @ g @ h.T
    return 0.5 * float(np.sum(resid**2)) + penalty_value(g, prob.lam)


def nuclear_subgradient(g, prob):
    """``X^T M3(Y) U_K V^T`` with ``U, V`` from the SVD of ``M3(Y)^T X G``."""
    h, _, _ = procrustes_parts(prob.xty.T @ np.asarray(g, dtype=float))
    return prob.xty @ h


def initial_factor(prob):
    """Rank-K truncated SVD of ``X^T M3(Y)``: ``G0 = U_K diag(d_K)``."""
    svd = thin_svd(prob.xty)
    k = prob.k_rank
    return svd.u[:, :k] * svd.s[:k]


def lipschitz_constant(prob, cfg):
    if cfg.lipschitz_override is not None:
        return float(cfg.lipschitz_override)
    cache = getattr(prob, "_cache", {})
    if "lipschitz" not in cache:
        cache["lipschitz"] = spectral_norm(prob.xtx)
    L = cache["lipschitz"]
    if L <= 0.0:
        raise InvalidArgumentError("design matrix is zero")
    return L


def stationarity_residual(g, prob, L):
    """Relative prox fixed-point residual of ``G`` for the DC program."""
    q1 = nuclear_subgradient(g, prob)
    q = g - (prob.xtx @ g - q1) / L
    return float(np.linalg.norm(g - group_slope_prox(q, prob.lam / L)) / max(np.linalg.norm(g), 1.0))


def _trace_stride(prob, cfg):
    if cfg.trace_every is not None:
        return cfg.trace_every
    return 10 if prob.p > 2000 else 1


def _finish(prob, g, method, trace, steps, iterations, final_step, converged, L, started):
    h, _, deficient = procrustes_parts(prob.xty.T @ g)
    b_hat = mode3_fold(g @ h.T, *prob.dims)
    return SolverResult(
        factors=FactorPair(g=g, h=h),
        b_hat=b_hat,
        iterations=iterations,
        objective_trace=np.asarray(trace),
        final_step=final_step,
        converged=converged,
        rank_deficient=deficient,
        method=method,
        lipschitz=L,
        elapsed=time.perf_counter() - started,
        step_trace=np.asarray(steps),
    )


def _relative_step(g_new, g):
    return float(np.linalg.norm(g_new - g) / max(np.linalg.norm(g), 1.0))


def solve_pdcae(prob, cfg=None, g0=None, method="pdcae"):
    """Proximal DCA with extrapolation on the DC objective ``F``.

    Each iteration takes a subgradient ``Q1`` of the nuclear term, forms the
    extrapolated point ``A = G + beta (G - G_prev)``, a gradient step
    ``Q = A - (X^T X A - Q1) / L`` and the group-SLOPE prox with ``lam / L``.
    ``beta`` follows the FISTA ``theta`` recursion with restarts every
    ``cfg.restart_every`` iterations and whenever ``F`` increases.
    """
    cfg = cfg or SolverConfig()
    started = time.perf_counter()
    L = lipschitz_constant(prob, cfg)
    lam_scaled = prob.lam / L
    pen_active = bool(np.any(prob.lam > 0))
    stride = _trace_stride(prob, cfg)
    nesterov = cfg.extrapolation == "nesterov"

    g = initial_factor(prob) if g0 is None else np.array(g0, dtype=float)
    xg = prob.xtx @ g
    h, nuclear, _ = procrustes_parts(prob.xty.T @ g)
    obj = 0.5 * float(np.sum(g * xg)) + (penalty_value(g, prob.lam) if pen_active else 0.0) - nuclear
    g_prev, xg_prev = g, xg
    theta_prev = 1.0
    trace, steps = [obj], []
    step = math.inf
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        if nesterov:
            theta = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * theta_prev * theta_prev))
            beta = (theta_prev - 1.0) / theta
        else:
            beta = 0.0
        if beta:
            a = g + beta * (g - g_prev)
            xa = xg + beta * (xg - xg_prev)
        else:
            a, xa = g, xg
        if cfg.subgradient_at == "extrapolated" and beta:
            h_a, _, _ = procrustes_parts(prob.xty.T @ a)
            q1 = prob.xty @ h_a
        else:
            q1 = prob.xty @ h
        q = a - (xa - q1) / L
        g_new = group_slope_prox(q, lam_scaled) if pen_active else q

        xg_new = prob.xtx @ g_new
        h, nuclear, _ = procrustes_parts(prob.xty.T @ g_new)
        new_obj = 0.5 * float(np.sum(g_new * xg_new)) - nuclear
        if pen_active:
            new_obj += penalty_value(g_new, prob.lam)
        if not math.isfinite(new_obj):
            raise DivergedError(f"objective became non-finite at iteration {it}")

        step = _relative_step(g_new, g)
        if nesterov:
            restart = new_obj > obj or (cfg.restart_every is not None and it % cfg.restart_every == 0)
            theta_prev = 1.0 if restart else theta
        g_prev, xg_prev = g, xg
        g, xg, obj = g_new, xg_new, new_obj
        steps.append(step)
        if it % stride == 0:
            trace.append(obj)
        if step <= cfg.epsilon:
            converged = True
            break
    if it % stride != 0:
        trace.append(obj)
    return _finish(prob, g, method, trace, steps, it, step, converged, L, started)


def solve_tbmm(prob, cfg=None, g0=None):
    """Block majorization-minimization: prox-gradient step in ``G``, Procrustes step in ``H``.

    The trace records the full objective ``1/2 ||M3(Y) - X G H^T||^2 + P_lam``.
    """
    cfg = cfg or SolverConfig()
    started = time.perf_counter()
    L = lipschitz_constant(prob, cfg)
    lam_scaled = prob.lam / L
    stride = _trace_stride(prob, cfg)

    g = initial_factor(prob) if g0 is None else np.array(g0, dtype=float)
    h, _, _ = procrustes_parts(prob.xty.T @ g)
    xg = prob.xtx @ g

    def objective(g, xg, h):
        return (
            0.5 * prob.y_sq
            + 0.5 * float(np.sum(g * xg))
            - float(np.sum(h * (prob.xty.T @ g)))
            + penalty_value(g, prob.lam)
        )

    trace, steps = [objective(g, xg, h)], []
    step = math.inf
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        r = g - (xg - prob.xty @ h) / L
        g_new = group_slope_prox(r, lam_scaled)
        xg_new = prob.xtx @ g_new
        h, _, _ = procrustes_parts(prob.xty.T @ g_new)
        step = _relative_step(g_new, g)
        g, xg = g_new, xg_new
        steps.append(step)
        if it % stride == 0:
            obj = objective(g, xg, h)
            if not math.isfinite(obj):
                raise DivergedError(f"objective became non-finite at iteration {it}")
            trace.append(obj)
        if step <= cfg.epsilon:
            converged = True
            break
    if it % stride != 0:
        trace.append(objective(g, xg, h))
    return _finish(prob, g, "tbmm", trace, steps, it, step, converged, L, started)


def solve_tglasso(prob, cfg=None, lam=None, g0=None):
    """Group-lasso variant: pDCAe with the flat sequence ``lam_j = lam``.

    ``lam`` defaults to ``prob.lam[0]`` when ``prob.lam`` is already flat.
    Cross-validated selection of ``lam`` lives in
    :func:`tgslope.experiments.cv_select_lambda`.
    """
    if lam is None:
        if prob.p and np.ptp(prob.lam) != 0.0:
            raise InvalidArgumentError("solve_tglasso needs a scalar lam or a flat lambda sequence")
        lam = float(prob.lam[0])
    if lam < 0:
        raise InvalidArgumentError(f"group-lasso lam must be nonnegative, got {lam}")
    flat = prob.with_lambda(np.full(prob.p, float(lam)))
    return solve_pdcae(flat, cfg, g0=g0, method="tglasso")


def solve_tlrr(prob, cfg=None, g0=None):
    """Unpenalized CP low-rank regression (all-zero lambda)."""
    return solve_pdcae(prob.with_lambda(np.zeros(prob.p)), cfg, g0=g0, method="tlrr")


def orthogonal_fast_path(prob, cfg=None, g0=None):
    """Alternate the closed-form ``G`` step and the ``H`` step when ``X^T X = I``.

    With an orthogonal design the ``G`` subproblem for fixed ``H`` is a single
    group-SLOPE prox of ``X^T M3(Y) H``.
    """
    cfg = cfg or SolverConfig()
    if np.linalg.norm(prob.xtx - np.eye(prob.p)) > 1e-8:
        raise InvalidArgumentError("orthogonal_fast_path requires X^T X = I (tolerance 1e-8)")
    started = time.perf_counter()
    stride = _trace_stride(prob, cfg)
    g = initial_factor(prob) if g0 is None else np.array(g0, dtype=float)

    def objective(g, h):
        return 0.5 * prob.y_sq + 0.5 * float(np.sum(g * g)) - float(np.sum(h * (prob.xty.T @ g))) + penalty_value(
            g, prob.lam
        )

    h, _, _ = procrustes_parts(prob.xty.T @ g)
    trace, steps = [objective(g, h)], []
    step = math.inf
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        g_new = group_slope_prox(prob.xty @ h, prob.lam)
        h, _, _ = procrustes_parts(prob.xty.T @ g_new)
        step = _relative_step(g_new, g)
        g = g_new
        steps.append(step)
        if it % stride == 0:
            trace.append(objective(g, h))
        if step <= cfg.epsilon:
            converged = True
            break
    if it % stride != 0:
        trace.append(objective(g, h))
    return _finish(prob, g, "orthogonal", trace, steps, it, step, converged, 1.0, started)


SOLVERS = {
    "pdcae": solve_pdcae,
    "tbmm": solve_tbmm,
    "tglasso": solve_tglasso,
    "tlrr": solve_tlrr,
}

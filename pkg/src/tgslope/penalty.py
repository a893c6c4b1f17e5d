"""Sorted-l1 penalty machinery: chi-quantile lambda sequences and proximal maps."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NumericalError

_EPS = 1e-16
_FPMIN = 1e-300


def _gamma_series(a, x):
    """Lower regularized incomplete gamma P(a, x) by its power series (x < a + 1)."""
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(10_000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    else:
        raise NumericalError(f"incomplete gamma series failed for a={a}, x={x}")
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cont_frac(a, x):
    """Upper regularized incomplete gamma Q(a, x) by modified Lentz (x >= a + 1)."""
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    else:
        raise NumericalError(f"incomplete gamma continued fraction failed for a={a}, x={x}")
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gamma_p_q(a, x):
    """Return ``(P(a, x), Q(a, x))``, each computed on its accurate side."""
    if x <= 0.0:
        return 0.0, 1.0
    if x < a + 1.0:
        p = _gamma_series(a, x)
        return p, 1.0 - p
    q = _gamma_cont_frac(a, x)
    return 1.0 - q, q


def _chi_pdf(k, x):
    if x <= 0.0:
        return 0.0 if k > 1 else math.sqrt(2.0 / math.pi)
    log_pdf = (k - 1) * math.log(x) - 0.5 * x * x - (0.5 * k - 1) * math.log(2.0) - math.lgamma(0.5 * k)
    return math.exp(log_pdf)


def _chi_root(k, target, upper):
    """Solve ``tail(x) = target`` where tail is the chi CDF (upper=False) or survival."""
    a = 0.5 * k

    def resid(x):
        p, q = gamma_p_q(a, 0.5 * x * x)
        return (q - target) if upper else (p - target)

    lo, hi = 0.0, max(1.0, math.sqrt(k))
    while (resid(hi) > 0.0) if upper else (resid(hi) < 0.0):
        lo, hi = hi, 2.0 * hi
        if hi > 1e4:
            raise NumericalError(f"could not bracket chi quantile for k={k}, target={target}")
    x = 0.5 * (lo + hi)
    for _ in range(200):
        r = resid(x)
        if r == 0.0:
            return x
        if (r > 0.0) == upper:
            lo = x
        else:
            hi = x
        slope = _chi_pdf(k, x) * (-1.0 if upper else 1.0)
        step = r / slope if slope != 0.0 else math.inf
        candidate = x - step
        if not (lo < candidate < hi):
            candidate = 0.5 * (lo + hi)
        if abs(candidate - x) <= 1e-14 * max(1.0, x) or hi - lo <= 1e-14 * max(1.0, x):
            return candidate
        x = candidate
    raise NumericalError(f"chi quantile iteration did not converge for k={k}, target={target}")


def chi_quantile(k_dof, alpha):
    """Quantile of the chi distribution with ``k_dof`` degrees of freedom."""
    if k_dof < 1 or int(k_dof) != k_dof:
        raise InvalidArgumentError(f"k_dof must be a positive integer, got {k_dof}")
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError(f"alpha must lie in (0, 1), got {alpha}")
    if alpha > 0.5:
        return _chi_root(int(k_dof), 1.0 - alpha, upper=True)
    return _chi_root(int(k_dof), alpha, upper=False)


def chi_isf(k_dof, tail):
    """Inverse survival function: the ``x`` with ``P(chi_k > x) = tail``."""
    if not 0.0 < tail < 1.0:
        raise InvalidArgumentError(f"tail probability must lie in (0, 1), got {tail}")
    if tail < 0.5:
        return _chi_root(int(k_dof), tail, upper=True)
    return _chi_root(int(k_dof), 1.0 - tail, upper=False)


@dataclass(frozen=True)
class ChiQuantileParams:
    k_dof: int
    q: float
    sigma: float
    p: int

    def __post_init__(self):
        if self.k_dof < 1:
            raise InvalidArgumentError(f"k_dof must be >= 1, got {self.k_dof}")
        if not 0.0 < self.q < 1.0:
            raise InvalidArgumentError(f"q must lie in (0, 1), got {self.q}")
        if self.sigma <= 0.0:
            raise InvalidArgumentError(f"sigma must be positive, got {self.sigma}")
        if self.p < 1:
            raise InvalidArgumentError(f"p must be >= 1, got {self.p}")


def lambda_chi_sequence(params):
    """``lambda_j = sigma * F^{-1}_{chi_K}(1 - q j / p)`` for ``j = 1..p``.

    The quantile is evaluated through the upper tail ``q j / p`` directly,
    which avoids cancellation when ``q j / p`` is tiny.
    """
    p = params.p
    values = np.array([params.sigma * chi_isf(params.k_dof, params.q * j / p) for j in range(1, p + 1)])
    # guard against last-ulp wobble from the root finder
    return np.minimum.accumulate(values)


def check_lambda(lam, p=None):
    lam = np.asarray(lam, dtype=float)
    if lam.ndim != 1:
        raise InvalidArgumentError(f"lambda must be a vector, got shape {lam.shape}")
    if p is not None and lam.size != p:
        raise InvalidArgumentError(f"lambda has length {lam.size}, expected {p}")
    if not np.all(np.isfinite(lam)):
        raise InvalidArgumentError("lambda has non-finite entries")
    if lam.size and lam[-1] < 0.0:
        raise InvalidArgumentError("lambda entries must be nonnegative")
    if np.any(np.diff(lam) > 0.0):
        raise InvalidArgumentError("lambda must be nonincreasing")
    return lam


def _pava_nonincreasing(z):
    """Least-squares nonincreasing fit of ``z`` by pooling adjacent violators."""
    n = z.size
    sums = [0.0] * n
    counts = [0] * n
    top = -1
    for value in z.tolist():
        top += 1
        sums[top] = value
        counts[top] = 1
        while top > 0 and sums[top - 1] * counts[top] <= sums[top] * counts[top - 1]:
            sums[top - 1] += sums[top]
            counts[top - 1] += counts[top]
            top -= 1
    means = [sums[i] / counts[i] for i in range(top + 1)]
    return np.repeat(means, counts[: top + 1])


def slope_prox(y, lam):
    """Proximal map of the sorted-l1 norm ``sum_j lam_j |x|_(j)``."""
    y = np.asarray(y, dtype=float)
    lam = check_lambda(lam, y.size)
    mag = np.abs(y)
    order = np.argsort(-mag, kind="stable")
    z = mag[order] - lam
    if z.size > 1 and np.any(np.diff(z) > 0.0):
        z = _pava_nonincreasing(z)
    out = np.empty_like(mag)
    out[order] = np.maximum(z, 0.0)
    return np.copysign(out, y)


def group_slope_prox(q_mat, lam):
    """Two-step proximal map of ``G -> P_lam(row norms of G)``.

    The row norms are shrunk by :func:`slope_prox`; each row keeps its
    direction.  Rows with zero norm stay zero.
    """
    q_mat = np.asarray(q_mat, dtype=float)
    norms = np.linalg.norm(q_mat, axis=1)
    eta = slope_prox(norms, lam)
    scale = np.divide(eta, norms, out=np.zeros_like(norms), where=norms > 0)
    return q_mat * scale[:, None]


def penalty_value(g, lam):
    """``sum_j lam_j * (row norms of g, sorted descending)_j``."""
    g = np.asarray(g, dtype=float)
    lam = check_lambda(lam, g.shape[0])
    norms = np.sort(np.linalg.norm(g, axis=1))[::-1]
    return float(lam @ norms)


def sorted_l1(x, lam):
    return float(np.asarray(lam) @ np.sort(np.abs(np.asarray(x, dtype=float)))[::-1])

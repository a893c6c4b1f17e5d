"""Selection and estimation metrics computed from coefficient tensors."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NumericalError
from .tensor import as_tensor3, frontal_slice_norms, mode3_product


@dataclass(frozen=True)
class SupportComparison:
    v: int  # false discoveries
    r: int  # discoveries
    t: int  # true discoveries
    s: int  # true support size
    p: int


def support_of(b, tol=0.0):
    """Indices of frontal slices whose Frobenius norm exceeds ``tol``."""
    if tol < 0:
        raise InvalidArgumentError(f"tol must be nonnegative, got {tol}")
    return np.flatnonzero(frontal_slice_norms(b) > tol)


def relative_tol(b, factor=1e-10):
    """Support threshold for estimates loaded from elsewhere: ``factor * max slice norm``."""
    norms = frontal_slice_norms(b)
    return factor * float(norms.max()) if norms.size else 0.0


def discovery(b, tol=0.0):
    return int(support_of(b, tol).size)


def compare_support(b_hat, b_star, tol=0.0):
    b_hat = as_tensor3(b_hat)
    b_star = as_tensor3(b_star)
    if b_hat.shape[2] != b_star.shape[2]:
        raise InvalidArgumentError(
            f"estimate has {b_hat.shape[2]} slices but truth has {b_star.shape[2]}"
        )
    selected = support_of(b_hat, tol)
    truth = support_of(b_star, 0.0)
    t = int(np.intersect1d(selected, truth).size)
    r = int(selected.size)
    return SupportComparison(v=r - t, r=r, t=t, s=int(truth.size), p=b_hat.shape[2])


def fdp(c):
    """False discovery proportion ``V / max(R, 1)``."""
    return c.v / max(c.r, 1)


def tp_rate(c):
    """Fraction of the true support recovered; 0 when the truth is empty."""
    return c.t / c.s if c.s else 0.0


def rgee(b_hat, b_star):
    """Relative group estimate error on the frontal-slice norm vectors."""
    ref = frontal_slice_norms(b_star)
    denom = float(ref @ ref)
    if denom == 0.0:
        raise InvalidArgumentError("rgee is undefined for a zero ground truth")
    diff = frontal_slice_norms(b_hat) - ref
    return float(diff @ diff) / denom


def mse(b_hat, b_star, x):
    b_hat = as_tensor3(b_hat)
    b_star = as_tensor3(b_star)
    if b_hat.shape != b_star.shape:
        raise InvalidArgumentError(f"shape mismatch {b_hat.shape} vs {b_star.shape}")
    p1, p2, _ = b_hat.shape
    fitted = mode3_product(b_hat - b_star, x)
    return float(np.sum(fitted**2)) / (np.asarray(x).shape[0] * p1 * p2)


def mspe(y_test, b_hat, x_test):
    """Mean squared prediction error on held-out responses."""
    y_test = as_tensor3(y_test)
    pred = mode3_product(b_hat, x_test)
    if pred.shape != y_test.shape:
        raise InvalidArgumentError(f"prediction shape {pred.shape} does not match {y_test.shape}")
    p1, p2, n_test = y_test.shape
    return float(np.sum((y_test - pred) ** 2)) / (p1 * p2 * n_test)


def bic(y, x, b_hat, discovery, k_rank):
    """``log(RSS) + (discovery + p1 p2) K log(n p1 p2)`` with natural logarithms."""
    y = as_tensor3(y)
    p1, p2, n = y.shape
    rss = float(np.sum((y - mode3_product(b_hat, x)) ** 2))
    if rss <= 0.0:
        raise NumericalError(
            "zero residual makes the BIC -inf; the fit interpolates the data, audit lambda and K",
            residual=rss,
        )
    return math.log(rss) + (discovery + p1 * p2) * k_rank * math.log(n * p1 * p2)

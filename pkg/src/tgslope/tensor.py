"""Dense order-3 tensors and the mode-3 algebra.

Tensors are plain ``numpy`` arrays of shape ``(p1, p2, p3)``.  They are kept
in Fortran order, so frontal slice ``k`` is contiguous and column-major
within the slice; the mode-3 unfolding is then a reshape rather than a copy.
"""

import numpy as np

from .errors import InvalidArgumentError


def as_tensor3(t):
    """Validate ``t`` as a finite order-3 tensor and return it in slice-major layout."""
    t = np.asarray(t, dtype=float)
    if t.ndim != 3 or min(t.shape) < 1:
        raise InvalidArgumentError(f"expected a non-empty order-3 tensor, got shape {t.shape}")
    if not np.all(np.isfinite(t)):
        raise InvalidArgumentError("tensor has non-finite entries")
    return np.asfortranarray(t)


def mode3_unfold(t):
    """Return the ``p3 x (p1*p2)`` unfolding.

    Entry ``(k, l)`` equals ``t[i, j, k]`` with ``l = i + j * p1`` (0-based).
    """
    t = as_tensor3(t)
    p1, p2, p3 = t.shape
    return t.reshape(p1 * p2, p3, order="F").T


def mode3_fold(m, p1, p2):
    """Inverse of :func:`mode3_unfold`."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[1] != p1 * p2:
        raise InvalidArgumentError(
            f"cannot fold a matrix of shape {m.shape} into {p1}x{p2} slices"
        )
    return np.asfortranarray(m.T.reshape(p1, p2, m.shape[0], order="F"))


def mode3_product(t, x):
    """Mode-3 product ``t x_3 x``: ``out[i, j, l] = sum_k t[i, j, k] * x[l, k]``."""
    t = as_tensor3(t)
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != t.shape[2]:
        raise InvalidArgumentError(
            f"mode-3 product needs x with {t.shape[2]} columns, got shape {x.shape}"
        )
    return mode3_fold(x @ mode3_unfold(t), t.shape[0], t.shape[1])


def khatri_rao(a, b):
    """Columnwise Kronecker product of ``a`` (m x k) and ``b`` (n x k)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise InvalidArgumentError(
            f"Khatri-Rao product needs equal column counts, got {a.shape} and {b.shape}"
        )
    return np.einsum("ik,jk->ijk", a, b).reshape(a.shape[0] * b.shape[0], a.shape[1])


def frontal_slice_norms(t):
    """Frobenius norm of every frontal slice, as a length-``p3`` vector."""
    return np.linalg.norm(mode3_unfold(t), axis=1)

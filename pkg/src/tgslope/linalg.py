"""Dense linear-algebra kernels used by the solvers.

The SVD itself is LAPACK (through ``numpy.linalg.svd``); this module adds a
deterministic sign convention, a power-iteration spectral norm, the
orthogonal Procrustes step and a reproducible random stream.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NumericalError


@dataclass(frozen=True)
class ThinSvd:
    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    @property
    def rank_tol(self):
        n = max(self.u.shape[0], self.v.shape[0])
        return (self.s[0] if self.s.size else 0.0) * n * np.finfo(float).eps


def thin_svd(m):
    """Thin SVD ``m = u @ diag(s) @ v.T`` with ``r = min(rows, cols)``.

    Each left singular vector is flipped (together with its right partner)
    so that its largest-magnitude entry is positive.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise InvalidArgumentError(f"thin_svd expects a matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidArgumentError("thin_svd input has non-finite entries")
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}", residual=np.linalg.norm(m)) from exc
    v = vt.T
    if u.size:
        pivot = np.abs(u).argmax(axis=0)
        signs = np.sign(u[pivot, np.arange(u.shape[1])])
        signs[signs == 0] = 1.0
        u = u * signs
        v = v * signs
    return ThinSvd(u=u, s=s, v=v)


def _power_rayleigh(gram, v, tol, max_iter):
    rho = float(v @ gram @ v)
    for _ in range(max_iter):
        w = gram @ v
        norm_w = np.linalg.norm(w)
        if norm_w <= np.finfo(float).tiny:
            return rho
        v = w / norm_w
        new_rho = float(v @ gram @ v)
        if abs(new_rho - rho) <= 1e-3 * tol * new_rho:
            return new_rho
        rho = new_rho
    return rho


def spectral_norm(m, tol=1e-10, max_iter=20_000):
    """Largest singular value of ``m`` by power iteration on the Gram matrix.

    The start vector is the normalized all-ones vector.  Because that vector
    can be an exact eigenvector of a smaller eigenvalue, a second pass from a
    fixed irrational perturbation is run and the larger estimate kept.  The
    returned value is inflated by ``1 + tol`` so it can serve as a safe
    Lipschitz constant.
    """
    m = np.asarray(m, dtype=float)
    if not np.any(m):
        return 0.0
    gram = m.T @ m if m.shape[1] <= m.shape[0] else m @ m.T
    n = gram.shape[0]
    ones = np.full(n, 1.0 / np.sqrt(n))
    alt = np.sin(np.arange(1, n + 1) * 1.618033988749895)
    alt /= np.linalg.norm(alt)
    rho = max(_power_rayleigh(gram, ones, tol, max_iter), _power_rayleigh(gram, alt, tol, max_iter))
    return float(np.sqrt(max(rho, 0.0)) * (1.0 + tol))


def nuclear_norm(m):
    return float(np.sum(thin_svd(m).s))


def _complete_basis(basis, n, k):
    """Extend ``basis`` (n x r, orthonormal) to ``k`` orthonormal columns."""
    r = basis.shape[1]
    if r >= k:
        return basis[:, :k]
    q, _ = np.linalg.qr(np.hstack([basis, np.eye(n)]))
    # qr may flip the sign of the first r columns; keep the caller's basis
    return np.hstack([basis, q[:, r:k]])


def procrustes_parts(c):
    """Procrustes factor of ``c`` together with ``||c||_*`` and a rank-deficiency flag.

    Returns ``(h, nuclear, deficient)`` where ``h`` maximizes ``trace(H.T @ c)``
    over column-orthogonal ``H``.  When ``c`` has rank below ``K`` the
    maximizer is not unique; the missing directions are completed
    deterministically from the standard basis.
    """
    c = np.asarray(c, dtype=float)
    rows, k = c.shape
    if k > rows:
        raise InvalidArgumentError(f"procrustes_h needs rows >= columns, got {c.shape}")
    svd = thin_svd(c)
    rank = int(np.sum(svd.s > svd.rank_tol)) if svd.s.size and svd.s[0] > 0 else 0
    deficient = rank < k
    if deficient:
        u = _complete_basis(svd.u[:, :rank], rows, k)
        v = _complete_basis(svd.v[:, :rank], k, k)
        h = u @ v.T
    else:
        h = svd.u @ svd.v.T
    return h, float(np.sum(svd.s)), deficient


def procrustes_h(c, return_flag=False):
    """``H = U V^T`` from the thin SVD ``c = U D V^T``; see :func:`procrustes_parts`."""
    h, _, deficient = procrustes_parts(c)
    if return_flag:
        return h, deficient
    return h


class Rng:
    """Seeded uniform/normal stream.

    Uniform doubles come from PCG64 seeded through ``SeedSequence`` with the
    entropy ``(seed, *stream)``; normals are produced by Box-Muller from those
    uniforms so that every platform produces identical draws.  ``stream`` is
    an int or a tuple of ints; independent child streams for parallel work
    are ``rng.child(index)``.
    """

    def __init__(self, seed, stream=0):
        self.seed = int(seed)
        self.stream = tuple(int(s) for s in stream) if isinstance(stream, (tuple, list)) else (int(stream),)
        seq = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, *self.stream])
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def child(self, *index):
        return Rng(self.seed, stream=self.stream + tuple(index))

    def uniform(self, size=None, low=0.0, high=1.0):
        return low + (high - low) * self._gen.random(size)

    def normal(self, size, sd=1.0):
        shape = (size,) if np.isscalar(size) else tuple(size)
        count = int(np.prod(shape))
        pairs = (count + 1) // 2
        u1 = 1.0 - self._gen.random(pairs)  # (0, 1], keeps the log finite
        u2 = self._gen.random(pairs)
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        z = np.empty(2 * pairs)
        z[0::2] = radius * np.cos(angle)
        z[1::2] = radius * np.sin(angle)
        return sd * z[:count].reshape(shape)

    def sample_without_replacement(self, n, k):
        """First ``k`` entries of a Fisher-Yates shuffle of ``range(n)``."""
        idx = np.arange(n)
        draws = self._gen.random(k)
        for i in range(k):
            j = i + int(draws[i] * (n - i))
            idx[i], idx[j] = idx[j], idx[i]
        return idx[:k].copy()

    def permutation(self, n):
        return self.sample_without_replacement(n, n)


def random_gaussian(rng, rows, cols, sd=1.0):
    if rows < 1 or cols < 1 or sd < 0:
        raise InvalidArgumentError(f"bad Gaussian matrix request {rows}x{cols}, sd={sd}")
    return rng.normal((rows, cols), sd=sd)


def random_orthogonal(rng, n):
    """Haar-distributed orthogonal matrix from the QR factorization of a Gaussian draw."""
    q, r = np.linalg.qr(rng.normal((n, n)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs

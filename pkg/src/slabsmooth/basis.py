"""Discrete orthogonal polynomial design matrices.

Columns are the degree 1..d orthogonal polynomials of the empirical measure
on the supplied points, scaled so that ``B.T @ B == n * I``. No constant
column is included; every column is orthogonal to the constant and hence
sums to zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankError, SizeError

# recurrence norm below which the next polynomial vanishes on the points
_RANK_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class OrthoBasis:
    values: np.ndarray
    centered: bool = True

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def column(self, k: int) -> np.ndarray:
        """Column for polynomial degree ``k`` (1-based)."""
        return self.values[:, k - 1]

    def gram_error(self) -> float:
        """Largest entry of ``|B^T B - n I|`` divided by ``n``."""
        B = self.values
        G = B.T @ B - self.n * np.eye(self.d)
        return float(np.max(np.abs(G))) / self.n


def _stieltjes(x, d):
    """Orthonormal polynomials q_1..q_d on the points ``x`` (q_0 constant dropped).

    Three-term recurrence with recurrence coefficients taken from the data,
    plus one full reorthogonalization pass per step.
    """
    n = x.size
    lo, hi = x.min(), x.max()
    t = (x - 0.5 * (lo + hi)) / (0.5 * (hi - lo))

    Q = np.empty((n, d + 1))
    Q[:, 0] = 1.0 / np.sqrt(n)
    b_prev = 0.0
    for k in range(d):
        q = Q[:, k]
        tq = t * q
        a = q @ tq
        v = tq - a * q
        if k > 0:
            v -= b_prev * Q[:, k - 1]
        basis = Q[:, : k + 1]
        v -= basis @ (basis.T @ v)
        b = np.linalg.norm(v)
        if b < _RANK_TOL:
            raise RankError(f"points support only polynomials up to degree {k}, requested {d}")
        Q[:, k + 1] = v / b
        b_prev = b
    return Q[:, 1:]


def _build(x, d, min_n):
    x = np.asarray(x, dtype=float).ravel()
    if d < 1:
        raise SizeError(f"degree must be at least 1, got {d}")
    if x.size < min_n:
        raise SizeError(f"need more than {min_n - 1} points for degree {d}, got {x.size}")
    n_distinct = np.unique(x).size
    if n_distinct < d + 1:
        raise RankError(f"degree {d} needs at least {d + 1} distinct x values, got {n_distinct}")
    Q = _stieltjes(x, d)
    B = np.sqrt(x.size) * Q
    B.setflags(write=False)
    return OrthoBasis(B)


def build_global(x, d: int) -> OrthoBasis:
    """Centered orthogonal polynomial basis of degrees 1..d on ``x``.

    Requires ``n > d`` and at least ``d + 1`` distinct values. Column ``k``
    has exact degree ``k`` with a positive leading coefficient.
    """
    return _build(x, d, min_n=d + 1)


def build_local(x_neighborhood, center: float, d: int) -> OrthoBasis:
    """Basis on a neighborhood, built from the offsets ``x_j - center``."""
    xn = np.asarray(x_neighborhood, dtype=float) - center
    return _build(xn, d, min_n=d + 2)

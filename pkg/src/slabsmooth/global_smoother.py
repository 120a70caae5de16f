"""Global orthogonal-polynomial smoothing: OLS and spike-and-slab.

Both smoothers are rank-``d`` sums ``n^-1 sum_k c_k x_(k) x_(k)^T`` with
``c_k = 1`` (OLS) or ``c_k = V_k`` (spike-and-slab). Fitted values and traces
use that factorization; the ``n x n`` matrix is built only on request.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import OrthoBasis, build_global
from .data import Dataset
from .gibbs import (
    McmcConfig,
    PosteriorSummary,
    PriorConfig,
    back_transform,
    gibbs_fit,
    rescale_response,
)

WHICH = ("ols", "spike_slab")


@dataclass(frozen=True, eq=False)
class GlobalFit:
    data: Dataset
    basis: OrthoBasis
    y_mean: float
    summary: PosteriorSummary
    fitted: np.ndarray
    ols_fitted: np.ndarray
    degenerate: bool = False

    @property
    def dof(self) -> float:
        return self.summary.dof

    @property
    def ols_dof(self) -> float:
        return float(self.basis.d)

    def weights(self, which="spike_slab") -> np.ndarray:
        """Per-column multipliers of the smoother: ``V`` or all ones."""
        _check_which(which)
        if which == "ols":
            return np.ones(self.basis.d)
        return self.summary.V


@dataclass(frozen=True, eq=False)
class EffectiveKernel:
    target_index: int
    weights: np.ndarray
    self_weight: float


def _check_which(which):
    if which not in WHICH:
        raise ValueError(f"which must be one of {WHICH}, got {which!r}")


def apply_smoother(basis: OrthoBasis, weights, y_centered) -> np.ndarray:
    """``n^-1 B diag(weights) B^T y`` without forming the n x n matrix."""
    B = basis.values
    return B @ (np.asarray(weights) * (B.T @ y_centered) / basis.n)


def fit_global(data: Dataset, d: int, prior: PriorConfig | None = None,
               mcmc: McmcConfig | None = None) -> GlobalFit:
    """Fit OLS and spike-and-slab smoothers with a degree-``d`` basis.

    The response is centered by its mean, which is added back to both
    fitted curves. A constant response short-circuits to ``fitted = y_mean``
    with zero degrees of freedom.
    """
    prior = prior or PriorConfig()
    mcmc = mcmc or McmcConfig()
    basis = build_global(data.x, d)
    y = data.y
    y_mean = float(np.mean(y))
    yc = y - y_mean
    n = basis.n

    if np.ptp(y) == 0:
        zeros = np.zeros(d)
        summary = back_transform(
            PosteriorSummary(V=zeros, z=zeros, beta_star=zeros, w_mean=float("nan"),
                             n=n, n_kept=0),
            0.0, n,
        )
        const = np.full(n, y_mean)
        return GlobalFit(data, basis, y_mean, summary, const, const.copy(), degenerate=True)

    y_star, sigma_hat = rescale_response(yc, basis)
    summary = gibbs_fit(y_star, basis, prior, mcmc)
    summary = back_transform(summary, sigma_hat, n)
    fitted = y_mean + apply_smoother(basis, summary.V, yc)
    ols_fitted = y_mean + apply_smoother(basis, np.ones(d), yc)
    return GlobalFit(data, basis, y_mean, summary, fitted, ols_fitted)


def effective_kernel(fit: GlobalFit, i: int, which="spike_slab") -> EffectiveKernel:
    """Row ``i`` of the smoother matrix: the weight of each ``y_j`` in fitted value ``i``."""
    n = fit.basis.n
    if not 0 <= i < n:
        raise IndexError(f"index {i} out of range for n={n}")
    B = fit.basis.values
    c = fit.weights(which)
    row = B @ (c * B[i]) / n
    self_weight = float(np.sum(c * B[i] ** 2) / n)
    row[i] = self_weight
    return EffectiveKernel(i, row, self_weight)


def kernel_diagonal(fit: GlobalFit, which="spike_slab") -> np.ndarray:
    """Effective kernel at every ``x_i`` (the smoother matrix diagonal)."""
    B = fit.basis.values
    return (B * B) @ fit.weights(which) / fit.basis.n


def smoother_matrix(fit: GlobalFit, which="spike_slab") -> np.ndarray:
    """Materialize the ``n x n`` smoother matrix."""
    B = fit.basis.values
    return (B * fit.weights(which)) @ B.T / fit.basis.n


def dof(fit: GlobalFit, which="spike_slab") -> float:
    """Effective degrees of freedom ``tr(S)``.

    Under ``B^T B = n I`` the trace is ``d`` for OLS and ``sum V_k`` for the
    spike-and-slab smoother.
    """
    _check_which(which)
    if which == "ols":
        return fit.ols_dof
    return fit.dof

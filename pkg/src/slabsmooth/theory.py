"""Prior and limiting-posterior densities for the bimodal spike-and-slab prior.

``g`` is the ``Gamma(a1, rate=a2)`` density of the precision ``1/tau2``.
The slab and spike densities of ``gamma`` are its images under ``u -> 1/u``
and ``u -> v0/u``; ``f(u | w) = (1 - w) g0(u) + w g1(u)``.

Under a null coefficient the posterior mean of ``nu = gamma / (1 + gamma)``
given ``w`` tends to a ratio of two integrals over ``nu`` in (0, 1) with
integrand ``exp(nu Z^2 / 2) (1 - nu)^{-3/2} f(nu / (1 - nu) | w)``. Writing
``u = nu / (1 - nu)`` turns this into an expectation under ``f(. | w)`` of
``exp(nu Z^2 / 2) / sqrt(1 + u)``; within each branch ``u = c / G`` with
``G ~ g``, so both integrals are smooth, proper gamma expectations. They are
evaluated with Gauss-Legendre in ``log G`` over a range covering all but a
negligible tail.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, special, stats

from .errors import PrecisionError, PreconditionError
from .gibbs import PriorConfig

KINDS = ("prior_gamma", "limiting_nu_density", "limiting_nu_mean")

# chi-square(1) percentiles 25, 50, 75, 90, 95, 99
CHI2_PERCENTILES = (0.25, 0.50, 0.75, 0.90, 0.95, 0.99)

_TAIL = 1e-15
_REFINE_TOL = 1e-4


@dataclass(frozen=True, eq=False)
class DensityCurve:
    grid: np.ndarray
    values: np.ndarray
    kind: str
    params: dict

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")


@dataclass(frozen=True)
class NullLimitInput:
    w: float
    z_sq: float
    prior: PriorConfig = PriorConfig()

    def __post_init__(self):
        if not 0 < self.w < 1:
            raise PreconditionError(f"w must lie in (0, 1), got {self.w}")
        if not self.z_sq >= 0:
            raise PreconditionError(f"z_sq must be non-negative, got {self.z_sq}")


def chi2_percentile_values():
    """Chi-square(1) quantiles at the percentiles used for the null-limit curves."""
    return tuple(float(q) for q in stats.chi2(1).ppf(CHI2_PERCENTILES))


def _log_g(u, prior):
    a1, a2 = prior.a1, prior.a2
    return a1 * np.log(a2) - special.gammaln(a1) + (a1 - 1) * np.log(u) - a2 * u


def _log_branch(u, prior, branch):
    scale = prior.v0 if branch == "spike" else 1.0
    return np.log(scale) - 2 * np.log(u) + _log_g(scale / u, prior)


def gamma_slab_density(u, prior: PriorConfig, branch: str = "slab"):
    """Density of ``gamma`` on the slab (``g1``) or spike (``g0``) branch.

    ``g1(u) = u^-2 g(1/u)`` and ``g0(u) = v0 u^-2 g(v0/u)``.
    """
    if branch not in ("slab", "spike"):
        raise ValueError("branch must be 'slab' or 'spike'")
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0):
        raise PreconditionError("density is defined for u > 0 only")
    return np.exp(_log_branch(u, prior, branch))


def mixture_density(u, w: float, prior: PriorConfig):
    """Prior density ``f(u | w)`` of ``gamma_k`` given ``w``."""
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0):
        raise PreconditionError("density is defined for u > 0 only")
    return _mixture_log(u, w, prior, exp=True)


def _mixture_log(u, w, prior, exp=False):
    l0 = np.log1p(-w) + _log_branch(u, prior, "spike")
    l1 = np.log(w) + _log_branch(u, prior, "slab")
    out = np.logaddexp(l0, l1)
    return np.exp(out) if exp else out


def prior_density_curve(w: float, prior: PriorConfig, grid) -> DensityCurve:
    grid = np.asarray(grid, dtype=float)
    return DensityCurve(grid, mixture_density(grid, w, prior), "prior_gamma",
                        {"w": w, "a1": prior.a1, "a2": prior.a2, "v0": prior.v0})


def _gamma_log_range(prior, z_sq, scale):
    """Range of log G holding all but a negligible share of the tilted integrand."""
    a1, a2 = prior.a1, prior.a2
    base = stats.gamma(a1, scale=1 / a2)
    # the exp(nu Z^2/2) tilt pulls mass toward small G roughly like this gamma law
    tilted = stats.gamma(a1 + 0.5, scale=1 / (a2 + z_sq / (2 * scale)))
    lo = min(base.ppf(_TAIL), tilted.ppf(_TAIL))
    hi = max(base.isf(_TAIL), tilted.isf(_TAIL))
    return np.log(lo), np.log(hi)


def _null_integrals(inp: NullLimitInput, quad_points: int):
    """Both integrals (without and with the leading nu) for the null limit."""
    prior, z_sq, w = inp.prior, inp.z_sq, inp.w
    nodes, weights = np.polynomial.legendre.leggauss(quad_points)
    totals = np.zeros(2)
    for scale, mix in ((prior.v0, 1.0 - w), (1.0, w)):
        s_lo, s_hi = _gamma_log_range(prior, z_sq, scale)
        half = 0.5 * (s_hi - s_lo)
        s = s_lo + half * (nodes + 1.0)
        G = np.exp(s)
        # gamma density in log G, times the transformed integrand
        log_dens = _log_g(G, prior) + s
        nu = scale / (scale + G)
        log_h = 0.5 * nu * z_sq + 0.5 * (np.log(G) - np.log(G + scale))
        base = weights * half * np.exp(log_dens + log_h)
        totals += mix * np.array([base.sum(), (nu * base).sum()])
    return totals


def limiting_null_mean(inp: NullLimitInput, quad_points: int = 128) -> float:
    """Limit of ``E(nu_k | w, Y*)`` for a null coefficient with statistic ``Z^2``.

    Raises :class:`PrecisionError` if doubling ``quad_points`` moves the
    result by more than 1e-4.
    """
    if quad_points < 64:
        raise PreconditionError("quad_points must be at least 64")
    d0, n0 = _null_integrals(inp, quad_points)
    d1, n1 = _null_integrals(inp, 2 * quad_points)
    coarse, fine = n0 / d0, n1 / d1
    if not np.isfinite(coarse) or abs(fine - coarse) > _REFINE_TOL:
        raise PrecisionError(
            f"quadrature did not settle: {coarse!r} vs {fine!r} at {quad_points}/{2 * quad_points} points"
        )
    return float(coarse)


def null_density_unnormalized(inp: NullLimitInput, nu):
    """``exp(nu Z^2/2) (1 - nu)^{-3/2} f(nu/(1 - nu) | w)`` on ``nu`` in (0, 1)."""
    nu = np.asarray(nu, dtype=float)
    u = nu / (1.0 - nu)
    log_val = 0.5 * nu * inp.z_sq - 1.5 * np.log1p(-nu) + _mixture_log(u, inp.w, inp.prior)
    return np.exp(log_val)


def limiting_null_density(inp: NullLimitInput, grid) -> DensityCurve:
    """Limiting density of ``nu_k`` on ``grid``, normalized by the trapezoid rule."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or grid[0] <= 0 or grid[-1] >= 1:
        raise PreconditionError("grid must be a vector inside (0, 1)")
    vals = null_density_unnormalized(inp, grid)
    area = integrate.trapezoid(vals, grid)
    if not (np.isfinite(area) and area > 0):
        raise PrecisionError("density could not be normalized on the supplied grid")
    p = inp.prior
    return DensityCurve(grid, vals / area, "limiting_nu_density",
                        {"w": inp.w, "z_sq": inp.z_sq, "a1": p.a1, "a2": p.a2, "v0": p.v0})


def limiting_null_mean_curve(w: float, prior: PriorConfig, z_sq_values, quad_points=128) -> DensityCurve:
    z_sq_values = np.asarray(z_sq_values, dtype=float)
    vals = np.array([limiting_null_mean(NullLimitInput(w, z, prior), quad_points) for z in z_sq_values])
    return DensityCurve(z_sq_values, vals, "limiting_nu_mean",
                        {"w": w, "a1": prior.a1, "a2": prior.a2, "v0": prior.v0})


def sampler_null_diagnostic(n=2000, d=20, n_signal=5, w_bracket=(0.05, 0.15),
                            prior: PriorConfig | None = None, n_iter=20000, seed=0):
    """Compare sweep-wise null shrinkage with the limiting formula.

    Simulates an orthogonal design with ``n_signal`` large coefficients and
    ``d - n_signal`` nulls, runs the sampler, keeps sweeps whose ``w`` falls
    inside ``w_bracket`` and, for each null coordinate, reports the mean of
    ``nu_k`` over those sweeps next to the limiting value at the bracket
    midpoint and that coordinate's ``z_k^2``. This is a report, not a test:
    the limit statement carries no finite-sample error bound.
    """
    from .basis import build_global
    from .gibbs import McmcConfig, gibbs_fit, rescale_response

    prior = prior or PriorConfig()
    rng = np.random.default_rng(seed)
    x = np.linspace(0.0, 1.0, n)
    basis = build_global(x, d)
    beta = np.zeros(d)
    beta[:n_signal] = 5.0
    y = basis.values @ beta + rng.normal(size=n)
    y = y - y.mean()
    y_star, _ = rescale_response(y, basis)
    summary = gibbs_fit(y_star, basis, prior, McmcConfig(n_iter=n_iter, burn_in=n_iter // 10, seed=seed),
                        keep_trace=True)
    mask = (summary.w_trace >= w_bracket[0]) & (summary.w_trace <= w_bracket[1])
    w_mid = 0.5 * (w_bracket[0] + w_bracket[1])
    rows = []
    for k in range(n_signal, d):
        z_sq = float(summary.z[k] ** 2)
        empirical = float(summary.nu_trace[mask, k].mean()) if mask.any() else float("nan")
        rows.append({"k": k + 1, "z_sq": z_sq, "sweeps": int(mask.sum()),
                     "sampler": empirical,
                     "limit": limiting_null_mean(NullLimitInput(w_mid, z_sq, prior))})
    return rows

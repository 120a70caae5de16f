"""Rescaled spike-and-slab regression under an orthogonal design.

Hierarchy (responses already rescaled to ``y* = sqrt(n) y / sigma_hat``)::

    y* | beta        ~ N(B beta, n I)
    beta_k | gamma_k ~ N(0, gamma_k),       gamma_k = I_k tau2_k
    I_k | w          ~ (1 - w) delta_{v0} + w delta_1
    1 / tau2_k       ~ Gamma(shape=a1, rate=a2)
    w                ~ Uniform(0, 1)

With ``B.T B = n I`` the likelihood depends on the data only through
``z = B.T y* / n`` and every full conditional factorizes over coordinates:

    beta_k | .  ~ N(nu_k z_k, nu_k),           nu_k = gamma_k / (1 + gamma_k)
    1/tau2_k | . ~ Gamma(a1 + 1/2, rate = a2 + beta_k^2 / (2 I_k))
    I_k | .     two-point, odds(I_k = 1) = w/(1-w) * N(beta_k; 0, tau2_k) / N(beta_k; 0, v0 tau2_k)
    w | .       ~ Beta(1 + #{I_k = 1}, 1 + #{I_k = v0})

Chains are run in batches: all random variates for a chain are drawn up front
from that chain's own generator, and the sweep arithmetic is elementwise, so
a chain's output does not depend on which other chains share its batch.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .basis import OrthoBasis
from .errors import DegenerateFitError, NumericalError, PreconditionError, SizeError

# B^T B must equal n I to this relative tolerance before sampling
ORTHO_TOL = 1e-8


@dataclass(frozen=True)
class PriorConfig:
    """Hyperparameters of the bimodal prior on ``gamma_k``.

    ``a2`` acts as a rate: the precision ``1/tau2`` has density proportional
    to ``u**(a1 - 1) * exp(-a2 * u)``.
    """

    a1: float = 5.0
    a2: float = 50.0
    v0: float = 0.005

    def __post_init__(self):
        if not self.a1 > 1:
            raise PreconditionError(f"a1 must exceed 1, got {self.a1}")
        if not self.a2 > 0:
            raise PreconditionError(f"a2 must be positive, got {self.a2}")
        if not 0 < self.v0 < 1:
            raise PreconditionError(f"v0 must lie in (0, 1), got {self.v0}")


@dataclass(frozen=True)
class McmcConfig:
    n_iter: int = 5000
    burn_in: int = 1000
    seed: int = 0
    thin: int = 1

    def __post_init__(self):
        if not self.n_iter > self.burn_in >= 0:
            raise PreconditionError(
                f"need n_iter > burn_in >= 0, got n_iter={self.n_iter}, burn_in={self.burn_in}"
            )
        if self.thin < 1:
            raise PreconditionError(f"thin must be at least 1, got {self.thin}")
        if self.seed < 0:
            raise PreconditionError("seed must be a non-negative integer")

    @property
    def n_kept(self) -> int:
        return len(range(self.burn_in, self.n_iter, self.thin))


@dataclass
class GibbsState:
    beta: np.ndarray
    tau2: np.ndarray
    indicator: np.ndarray
    w: np.ndarray

    @property
    def gamma(self):
        return self.indicator * self.tau2


@dataclass(frozen=True, eq=False)
class PosteriorSummary:
    """Posterior summaries of one spike-and-slab fit.

    ``beta_star = V * z`` is Rao-Blackwellized, which makes the rescaled
    coefficients ``beta_hat`` equal ``V * beta_ols`` up to rounding. The
    ``beta_hat``, ``beta_ols`` and ``sigma_hat`` fields are filled by
    :func:`back_transform`.
    """

    V: np.ndarray
    z: np.ndarray
    beta_star: np.ndarray
    w_mean: float
    n: int
    n_kept: int
    sigma_hat: float | None = None
    beta_hat: np.ndarray | None = None
    beta_ols: np.ndarray | None = None
    nu_trace: np.ndarray | None = None
    w_trace: np.ndarray | None = None

    @property
    def d(self) -> int:
        return self.V.size

    @property
    def dof(self) -> float:
        return float(np.sum(self.V))

    def penalties(self) -> np.ndarray:
        """Generalized ridge penalty ``(1 - V_k) / V_k`` on each coefficient."""
        return (1.0 - self.V) / self.V


def rescale_response(y, basis: OrthoBasis):
    """Rescale centered responses by ``sqrt(n) / sigma_hat``.

    ``sigma_hat**2`` is the full-model residual variance with ``n - d``
    degrees of freedom. Returns ``(y_star, sigma_hat)``.
    """
    y = np.asarray(y, dtype=float)
    n, d = basis.n, basis.d
    if y.size != n:
        raise SizeError(f"response has {y.size} entries but the basis has {n} rows")
    if n <= d:
        raise SizeError(f"need n > d for the full-model variance estimate (n={n}, d={d})")
    B = basis.values
    beta_ols = B.T @ y / n
    resid = y - B @ beta_ols
    rss = float(resid @ resid)
    # exact polynomial data leaves only rounding noise in the residual
    if rss <= 1e-24 * max(float(y @ y), np.finfo(float).tiny):
        raise DegenerateFitError(
            f"response is reproduced exactly by the degree-{d} basis (zero residual variance); "
            "use a smaller degree or report the exact fit"
        )
    sigma_hat = np.sqrt(rss / (n - d))
    y_star = np.sqrt(n) * y / sigma_hat
    return y_star, float(sigma_hat)


# --- full conditionals as transforms of standard variates -------------------

def draw_beta(z, gamma, eps):
    """``beta | gamma, y* ~ N(nu z, nu)`` from standard normals ``eps``."""
    nu = gamma / (1.0 + gamma)
    return nu * z + np.sqrt(nu) * eps


def draw_tau2(beta, indicator, prior: PriorConfig, g):
    """Slab variance from standard ``Gamma(a1 + 1/2)`` variates ``g``.

    ``1/tau2 = g / rate`` with ``rate = a2 + beta**2 / (2 * indicator)``.
    """
    rate = prior.a2 + beta * beta / (2.0 * indicator)
    return rate / g


def slab_probability(beta, tau2, w, prior: PriorConfig):
    """``P(I_k = 1 | beta_k, tau2_k, w)``."""
    with np.errstate(divide="ignore", over="ignore"):
        log_odds = (
            np.log(w) - np.log1p(-w)
            + 0.5 * np.log(prior.v0)
            + beta * beta / (2.0 * tau2) * (1.0 / prior.v0 - 1.0)
        )
        return 1.0 / (1.0 + np.exp(-log_odds))


def draw_indicator(beta, tau2, w, prior: PriorConfig, u):
    """Indicator in ``{v0, 1}`` from uniforms ``u``."""
    p1 = slab_probability(beta, tau2, w, prior)
    return np.where(u < p1, 1.0, prior.v0)


def draw_w(n_slab, sorted_u):
    """``Beta(1 + m, 1 + d - m)`` as the ``(m+1)``-th of ``d + 1`` sorted uniforms.

    ``sorted_u`` has shape ``(..., d + 1)`` sorted along the last axis and
    ``n_slab`` holds ``m`` for each leading index.
    """
    n_slab = np.asarray(n_slab)
    return np.take_along_axis(sorted_u, n_slab[..., None], axis=-1)[..., 0]


# --- sampler -----------------------------------------------------------------

def _predraw(rngs, n_iter, d, prior):
    """Per-chain variates stacked as ``(n_iter, P, ...)``, contiguous per sweep."""
    shape = prior.a1 + 0.5
    eps, gam, u_ind, u_w = [], [], [], []
    for rng in rngs:
        eps.append(rng.standard_normal((n_iter, d)))
        gam.append(rng.standard_gamma(shape, (n_iter, d)))
        u_ind.append(rng.random((n_iter, d)))
        u_w.append(np.sort(rng.random((n_iter, d + 1)), axis=-1))
    stack = lambda xs: np.ascontiguousarray(np.stack(xs, axis=1))
    return stack(eps), stack(gam), stack(u_ind), stack(u_w)


def run_chains(z, prior: PriorConfig, mcmc: McmcConfig, rngs, fixed_gamma=None, keep_trace=False):
    """Run one Gibbs chain per row of ``z`` (shape ``(P, d)``).

    ``rngs`` supplies one generator per chain. ``fixed_gamma`` pins
    ``gamma`` (skipping the tau2, indicator and w updates); it is a test hook.
    Returns a dict with ``V`` ``(P, d)``, ``w_mean`` ``(P,)`` and, when
    ``keep_trace`` is set, ``nu_trace`` ``(n_kept, P, d)`` and ``w_trace``.
    """
    z = np.ascontiguousarray(np.atleast_2d(np.asarray(z, dtype=float)))
    P, d = z.shape
    if len(rngs) != P:
        raise ValueError("need exactly one generator per chain")
    eps, gam, u_ind, u_w = _predraw(rngs, mcmc.n_iter, d, prior)

    beta = z.copy()
    tau2 = np.ones((P, d))
    ind = np.ones((P, d))
    w = np.full(P, 0.5)
    if fixed_gamma is not None:
        tau2 = np.broadcast_to(np.asarray(fixed_gamma, dtype=float), (P, d)).copy()

    nu_sum = np.zeros((P, d))
    w_sum = np.zeros(P)
    n_kept = mcmc.n_kept
    nu_trace = np.empty((n_kept, P, d)) if keep_trace else None
    w_trace = np.empty((n_kept, P)) if keep_trace else None

    slot = 0
    for t in range(mcmc.n_iter):
        gamma = ind * tau2
        beta = draw_beta(z, gamma, eps[t])
        if fixed_gamma is None:
            tau2 = draw_tau2(beta, ind, prior, gam[t])
            ind = draw_indicator(beta, tau2, w[:, None], prior, u_ind[t])
            n_slab = np.count_nonzero(ind == 1.0, axis=1)
            w = draw_w(n_slab, u_w[t])
            gamma = ind * tau2
        nu = gamma / (1.0 + gamma)
        if not (np.isfinite(beta).all() and np.isfinite(nu).all()):
            bad = int(np.flatnonzero(~(np.isfinite(beta).all(1) & np.isfinite(nu).all(1)))[0])
            raise NumericalError(f"non-finite Gibbs state at sweep {t} (chain {bad})")
        if t >= mcmc.burn_in and (t - mcmc.burn_in) % mcmc.thin == 0:
            nu_sum += nu
            w_sum += w
            if keep_trace:
                nu_trace[slot] = nu
                w_trace[slot] = w
            slot += 1

    out = {"V": nu_sum / n_kept, "w_mean": w_sum / n_kept}
    if keep_trace:
        out["nu_trace"] = nu_trace
        out["w_trace"] = w_trace
    return out


def check_orthogonal(basis: OrthoBasis, tol=ORTHO_TOL):
    err = basis.gram_error()
    if not err < tol:
        raise PreconditionError(f"basis is not orthogonal: max |B^T B - nI| / n = {err:.3g}")


def summarize(z, V, w_mean, n, n_kept, nu_trace=None, w_trace=None) -> PosteriorSummary:
    V = np.asarray(V, dtype=float)
    z = np.asarray(z, dtype=float)
    return PosteriorSummary(
        V=V, z=z, beta_star=V * z, w_mean=float(w_mean), n=int(n), n_kept=int(n_kept),
        nu_trace=nu_trace, w_trace=w_trace,
    )


def gibbs_fit(y_star, basis: OrthoBasis, prior: PriorConfig, mcmc: McmcConfig,
              *, rng=None, fixed_gamma=None, keep_trace=False) -> PosteriorSummary:
    """Sample the rescaled spike-and-slab posterior for one response vector.

    The generator defaults to ``numpy.random.default_rng(mcmc.seed)``; the
    result is a pure function of the inputs. ``beta_hat`` is left unset
    until :func:`back_transform`.
    """
    check_orthogonal(basis)
    y_star = np.asarray(y_star, dtype=float)
    if y_star.size != basis.n:
        raise SizeError(f"y_star has {y_star.size} entries but the basis has {basis.n} rows")
    z = basis.values.T @ y_star / basis.n
    if rng is None:
        rng = np.random.default_rng(mcmc.seed)
    res = run_chains(z[None, :], prior, mcmc, [rng], fixed_gamma=fixed_gamma, keep_trace=keep_trace)
    return summarize(
        z, res["V"][0], res["w_mean"][0], basis.n, mcmc.n_kept,
        nu_trace=res["nu_trace"][:, 0, :] if keep_trace else None,
        w_trace=res["w_trace"][:, 0] if keep_trace else None,
    )


def back_transform(summary: PosteriorSummary, sigma_hat: float, n: int) -> PosteriorSummary:
    """Map rescaled posterior means back to the response scale.

    ``beta_hat = sigma_hat / sqrt(n) * beta_star``; the OLS coefficients are
    mapped the same way from ``z``.
    """
    scale = sigma_hat / np.sqrt(n)
    return replace(
        summary,
        sigma_hat=float(sigma_hat),
        beta_hat=scale * summary.beta_star,
        beta_ols=scale * summary.z,
    )


def batch_means_se(trace, n_batches=50):
    """Monte Carlo standard error of a chain mean by non-overlapping batch means."""
    trace = np.asarray(trace, dtype=float)
    m = trace.shape[0] // n_batches
    if m < 1:
        raise ValueError("trace too short for the requested number of batches")
    batches = trace[: m * n_batches].reshape((n_batches, m) + trace.shape[1:]).mean(axis=1)
    return batches.std(axis=0, ddof=1) / np.sqrt(n_batches)

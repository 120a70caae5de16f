"""Local spike-and-slab regression with a nearest-neighbour kernel.

For each target ``x_i`` the neighbourhood ``{j : |x_j - x_i| < h}`` gets its
own centered orthogonal basis, Rice variance estimate and Gibbs chain. The
indicator kernel keeps the local weight matrix equal to the identity, so the
local smoother is ``n_i^-1 B_i diag(V_i) B_i^T`` and its trace is
``sum_k V_ik``. The local intercept is handled by centering the responses on
the neighbourhood mean, which is not shrunk.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .basis import build_local
from .data import Dataset
from .errors import LocalFitError, NumericalError, RankError, SlabSmoothError
from .gibbs import (
    McmcConfig,
    PosteriorSummary,
    PriorConfig,
    back_transform,
    check_orthogonal,
    run_chains,
    summarize,
)

# share of target points allowed to fail before a curve fit aborts
MAX_FAILURE_FRACTION = 0.10
# pre-drawn variates per batch of chains, in float64 values
_BATCH_BUDGET = 4_000_000


def _local_mcmc():
    return McmcConfig(n_iter=2000, burn_in=500)


@dataclass(frozen=True)
class LocalConfig:
    h: float
    d: int = 3
    prior: PriorConfig = field(default_factory=PriorConfig)
    mcmc: McmcConfig = field(default_factory=_local_mcmc)
    min_neighbors: int | None = None

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"bandwidth must be positive, got {self.h}")
        if self.d < 1:
            raise ValueError(f"degree must be at least 1, got {self.d}")
        if self.min_neighbors is None:
            object.__setattr__(self, "min_neighbors", self.d + 3)
        if self.min_neighbors < self.d + 2:
            raise ValueError(f"min_neighbors must be at least d + 2 = {self.d + 2}")


@dataclass(frozen=True, eq=False)
class LocalFit:
    i: int
    neighborhood: np.ndarray
    sigma_i: float
    y_bar_i: float
    V_i: np.ndarray
    f_hat: float
    summary: PosteriorSummary | None = None
    widened: bool = False
    degenerate: bool = False
    error: str | None = None

    @property
    def n_i(self) -> int:
        return int(self.neighborhood.size)

    @property
    def dof_i(self) -> float:
        return float(np.sum(self.V_i))

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True, eq=False)
class DofCurve:
    x: np.ndarray
    dof: np.ndarray

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.x.tolist(), self.dof.tolist()))


class LocalCurve(NamedTuple):
    fitted: np.ndarray
    dof_curve: DofCurve
    fits: list


def neighborhood(data: Dataset, i: int, h: float) -> np.ndarray:
    """Indices ``j`` with ``|x_j - x_i| < h`` (strict), in ascending order."""
    x = data.x
    xi = x[i]
    # bracket with a little slack, then apply the exact predicate
    slack = 4 * np.spacing(max(abs(xi), h)) + 4 * np.spacing(h)
    lo = int(np.searchsorted(x, xi - h - slack, side="left"))
    hi = int(np.searchsorted(x, xi + h + slack, side="right"))
    idx = np.arange(lo, hi)
    return idx[np.abs(x[lo:hi] - xi) < h]


def _nearest(data: Dataset, i: int, m: int) -> np.ndarray:
    """The ``m`` points nearest ``x_i``; distance ties go to the smaller index."""
    dist = np.abs(data.x - data.x[i])
    order = np.lexsort((np.arange(data.n), dist))
    return np.sort(order[:m])


def resolve_neighborhood(data: Dataset, i: int, cfg: LocalConfig):
    """Window for target ``i`` widened to ``min_neighbors`` points when too small.

    Returns ``(indices, widened)``.
    """
    idx = neighborhood(data, i, cfg.h)
    if idx.size >= cfg.min_neighbors:
        return idx, False
    m = min(cfg.min_neighbors, data.n)
    return _nearest(data, i, m), True


def rice_sigma(data: Dataset, nbhd) -> float:
    """Rice difference-based noise estimate on a neighbourhood.

    ``sigma^2 = sum (y_(j+1) - y_(j))^2 / (2 (n_i - 1))`` over the points
    sorted by ``x``. Returns 0 when the responses are all equal.
    """
    nbhd = np.asarray(nbhd)
    if nbhd.size < 2:
        raise ValueError("Rice estimator needs at least two points")
    xs = data.x[nbhd]
    ys = data.y[nbhd][np.argsort(xs, kind="stable")]
    diffs = np.diff(ys)
    return float(np.sqrt(diffs @ diffs / (2.0 * (nbhd.size - 1))))


def point_seed(seed: int, i: int):
    """Generator for target ``i``: a hash of ``(seed, i)``, independent of evaluation order."""
    return np.random.default_rng([seed, i])


class _Prepared(NamedTuple):
    i: int
    nbhd: np.ndarray
    widened: bool
    pos: int
    sigma: float
    y_bar: float
    yc: np.ndarray
    B: np.ndarray
    z: np.ndarray


def _prepare(data: Dataset, i: int, cfg: LocalConfig):
    nbhd, widened = resolve_neighborhood(data, i, cfg)
    yn = data.y[nbhd]
    y_bar = float(np.mean(yn))
    sigma = rice_sigma(data, nbhd)
    if sigma == 0.0:
        return LocalFit(i, nbhd, 0.0, y_bar, np.zeros(cfg.d), y_bar, widened=widened, degenerate=True)
    try:
        basis = build_local(data.x[nbhd], data.x[i], cfg.d)
    except SlabSmoothError as exc:
        raise RankError(f"target point {i} (x={data.x[i]!r}): {exc}") from None
    check_orthogonal(basis)
    n_i = nbhd.size
    yc = yn - y_bar
    y_star = np.sqrt(n_i) * yc / sigma
    z = basis.values.T @ y_star / n_i
    pos = int(np.searchsorted(nbhd, i))
    return _Prepared(i, nbhd, widened, pos, sigma, y_bar, yc, basis.values, z)


def _finish(p: _Prepared, V, w_mean, mcmc: McmcConfig) -> LocalFit:
    n_i = p.nbhd.size
    summary = back_transform(summarize(p.z, V, w_mean, n_i, mcmc.n_kept), p.sigma, n_i)
    f_hat = p.y_bar + float(p.B[p.pos] @ (V * (p.B.T @ p.yc) / n_i))
    return LocalFit(p.i, p.nbhd, p.sigma, p.y_bar, V, f_hat, summary=summary, widened=p.widened)


def _failed(data, i, exc):
    nan = float("nan")
    return LocalFit(i, np.array([i]), nan, nan, np.array([nan]), nan, error=str(exc))


def _fit_batch(data: Dataset, indices, cfg: LocalConfig, catch: bool):
    fits = {}
    ready = []
    for i in indices:
        try:
            p = _prepare(data, i, cfg)
        except SlabSmoothError as exc:
            if not catch:
                raise
            fits[i] = _failed(data, i, exc)
            continue
        if isinstance(p, LocalFit):
            fits[i] = p
        else:
            ready.append(p)

    if ready:
        z = np.stack([p.z for p in ready])
        rngs = [point_seed(cfg.mcmc.seed, p.i) for p in ready]
        try:
            res = run_chains(z, cfg.prior, cfg.mcmc, rngs)
        except NumericalError:
            if len(ready) == 1:
                if not catch:
                    raise
                fits[ready[0].i] = _failed(data, ready[0].i, "non-finite Gibbs state")
                ready = []
            else:
                # isolate the offending chain(s); per-point seeding makes reruns identical
                for p in ready:
                    fits.update(_fit_batch(data, [p.i], cfg, catch))
                ready = []
        for k, p in enumerate(ready):
            fits[p.i] = _finish(p, res["V"][k], res["w_mean"][k], cfg.mcmc)
    return fits


def fit_point(data: Dataset, i: int, cfg: LocalConfig) -> LocalFit:
    """Local spike-and-slab fit at target index ``i``."""
    if not 0 <= i < data.n:
        raise IndexError(f"index {i} out of range for n={data.n}")
    return _fit_batch(data, [i], cfg, catch=False)[i]


def _batch_size(cfg: LocalConfig, n: int, jobs: int) -> int:
    per_chain = cfg.mcmc.n_iter * (4 * cfg.d + 1)
    size = max(1, min(512, _BATCH_BUDGET // per_chain))
    return max(1, min(size, math.ceil(n / jobs)))


def fit_curve(data: Dataset, cfg: LocalConfig, jobs: int = 1) -> LocalCurve:
    """Local fit at every data point.

    Per-point failures are recorded on the returned :class:`LocalFit` objects
    (``error`` set, ``f_hat`` NaN); more than 10% failures raise
    :class:`LocalFitError`. Results do not depend on ``jobs``.
    """
    n = data.n
    size = _batch_size(cfg, n, jobs)
    batches = [list(range(s, min(s + size, n))) for s in range(0, n, size)]
    run = lambda idx: _fit_batch(data, idx, cfg, catch=True)
    fits = {}
    if jobs > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for part in pool.map(run, batches):
                fits.update(part)
    else:
        for idx in batches:
            fits.update(run(idx))

    ordered = [fits[i] for i in range(n)]
    failures = [(f.i, f.error) for f in ordered if not f.ok]
    if len(failures) > MAX_FAILURE_FRACTION * n:
        detail = "; ".join(f"{i}: {msg}" for i, msg in failures[:5])
        raise LocalFitError(f"{len(failures)} of {n} local fits failed ({detail})", failures)
    fitted = np.array([f.f_hat for f in ordered])
    dof = np.array([f.dof_i for f in ordered])
    return LocalCurve(fitted, DofCurve(data.x.copy(), dof), ordered)

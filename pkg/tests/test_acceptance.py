"""Acceptance criteria, one test each, at their stated tolerances.

Seeds (1, 2, 3) are fixed in advance for every multi-seed criterion. Each
test records a PASS/FAIL/SKIP line that is printed in the terminal summary.
"""

import functools
import os
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE
from oracles import exact_shrinkage
from slabsmooth.basis import build_global
from slabsmooth.cli import main
from slabsmooth.data import Dataset, SyntheticSpec, generate, load_csv
from slabsmooth.gibbs import McmcConfig, PriorConfig, batch_means_se, gibbs_fit, rescale_response
from slabsmooth.global_smoother import fit_global
from slabsmooth.local_smoother import LocalConfig, fit_curve, rice_sigma
from slabsmooth.theory import (
    NullLimitInput,
    chi2_percentile_values,
    gamma_slab_density,
    limiting_null_mean,
)

SEEDS = (1, 2, 3)
PRIOR = PriorConfig()

# every global and local fit made here, for the suite-wide identities
GLOBAL_FITS = []
LOCAL_CURVES = []


def criterion(num, title, limit=None):
    """Record the outcome of criterion ``num``; fail it when over ``limit`` seconds."""

    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            t0 = time.perf_counter()
            try:
                detail = fn(*args, **kwargs)
            except pytest.skip.Exception as exc:
                ACCEPTANCE[num] = ("SKIP", title, str(exc))
                raise
            except BaseException as exc:
                first = str(exc).strip().splitlines()[0] if str(exc).strip() else type(exc).__name__
                ACCEPTANCE[num] = ("FAIL", title, first)
                raise
            elapsed = time.perf_counter() - t0
            if limit is not None and elapsed > limit:
                ACCEPTANCE[num] = ("FAIL", title, f"{detail}; took {elapsed:.1f}s > {limit}s")
                pytest.fail(f"criterion {num} exceeded its {limit}s budget ({elapsed:.1f}s)")
            ACCEPTANCE[num] = ("PASS", title, f"{detail} ({elapsed:.1f}s)")

        return wrapper

    return deco


@criterion(1, "orthogonality property suite", limit=5)
def test_01_orthogonality():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for trial in range(50):
        n = int(rng.integers(30, 400))
        if trial % 5 == 0:
            d = 25
            n = max(n, 60)
            centers = rng.uniform(0, 10, 3)
            x = np.concatenate([rng.normal(c, 0.02, n) for c in centers])[:n]
        else:
            d = int(rng.integers(1, min(25, n - 1) + 1))
            x = rng.uniform(-3, 7, n) if trial % 2 else np.sort(rng.exponential(2.0, n))
        B = build_global(x, d).values
        G = B.T @ B
        off = np.abs(G - np.diag(np.diag(G)))
        assert np.all(np.abs(B.sum(axis=0)) < 1e-10 * n), f"trial {trial}: column sums"
        assert np.all(np.abs(np.diag(G) - n) < 1e-10 * n), f"trial {trial}: column norms"
        assert off.max() < 1e-8 * n, f"trial {trial}: off-diagonal {off.max() / n:.2e}"
        worst = max(worst, off.max() / n)
    return f"50 configurations, worst off-diagonal {worst:.1e}·n"


@criterion(2, "conjugacy oracle, d = 1", limit=30)
def test_02_conjugacy_oracle():
    rng = np.random.default_rng(0)
    x = np.linspace(0, 1, 20)
    basis = build_global(x, 1)
    y = 0.4 * basis.column(1) + rng.normal(0, 1, 20)
    y = y - y.mean()
    y_star, _ = rescale_response(y, basis)
    parts = []
    for seed in SEEDS:
        s = gibbs_fit(y_star, basis, PRIOR, McmcConfig(n_iter=21_000, burn_in=1000, seed=seed), keep_trace=True)
        exact = exact_shrinkage(s.z)[0]
        se = float(batch_means_se(s.nu_trace[:, 0]))
        dev = abs(s.V[0] - exact) / se
        parts.append(f"seed {seed}: {dev:.2f} SE")
        assert dev < 3, f"seed {seed}: V={s.V[0]:.5f} vs exact {exact:.5f}, {dev:.2f} SE"
    return f"z={s.z[0]:.3f}, exact V={exact:.4f}; " + ", ".join(parts)


def _sparse_fit(seed):
    rng = np.random.default_rng(seed)
    x = np.linspace(0, 1, 400)
    basis = build_global(x, 20)
    beta = np.zeros(20)
    beta[:5] = 5.0
    y = basis.values @ beta + rng.normal(0, 1.0, 400)
    fit = fit_global(Dataset(x, y), 20, PRIOR, McmcConfig(seed=seed))
    GLOBAL_FITS.append(fit)
    return fit


@criterion(5, "selective shrinkage, sparse orthogonal design", limit=60)
def test_05_selective_shrinkage():
    parts, failures = [], []
    for seed in SEEDS:
        V = _sparse_fit(seed).summary.V
        sig_min, null_mean = V[:5].min(), V[5:].mean()
        parts.append(f"seed {seed}: min signal V {sig_min:.3f}, mean null V {null_mean:.3f}")
        if not (sig_min > 0.9 and null_mean < 0.3):
            failures.append(seed)
    detail = "; ".join(parts)
    assert not failures, f"seeds {failures} miss (signal > 0.9, null mean < 0.3): {detail}"
    return detail


@criterion(6, "overparameterization robustness, d = 25", limit=60)
def test_06_overparameterization():
    parts = []
    for seed in SEEDS:
        spec = SyntheticSpec("sine", noise_sd=0.3, n=200, x_range=(0, 2 * np.pi), seed=seed)
        data = generate(spec)
        fit = fit_global(data, 25, PRIOR, McmcConfig(seed=seed))
        GLOBAL_FITS.append(fit)
        truth = spec.mean(data.x)
        ratio = np.max(np.abs(fit.ols_fitted - truth)) / np.max(np.abs(fit.fitted - truth))
        parts.append(f"seed {seed}: {ratio:.2f}")
        assert ratio >= 1.5, f"seed {seed}: OLS/spike-and-slab max error ratio {ratio:.3f}"
    return "OLS/SS max-error ratio " + ", ".join(parts)


@criterion(7, "Rice estimator", limit=5)
def test_07_rice():
    alt = Dataset(np.arange(5.0), [0.0, 1.0, 0.0, 1.0, 0.0])
    s = rice_sigma(alt, np.arange(5))
    # the squared differences sum to 4 and are divided by 8 with no rounding
    assert s == np.sqrt(0.5), f"alternating fixture gave sigma {s!r}"
    rng = np.random.default_rng(1)
    sd = 0.5
    iid = Dataset(np.linspace(0, 1, 1000), rng.normal(0, sd, 1000))
    rel = rice_sigma(iid, np.arange(1000)) ** 2 / sd**2 - 1
    assert abs(rel) < 0.10, f"iid fixture off by {rel:.1%}"
    return f"alternating sigma^2 = 0.5, iid relative error {rel:+.1%}"


@criterion(8, "theory quadrature", limit=10)
def test_08_theory():
    from scipy import integrate

    for branch in ("slab", "spike"):
        total = integrate.quad(lambda s: gamma_slab_density(np.exp(s), PRIOR, branch) * np.exp(s),
                               -40, 40, limit=400, epsabs=0, epsrel=1e-10)[0]
        assert abs(total - 1) < 1e-6, f"{branch} branch integrates to {total!r}"
    z = chi2_percentile_values()
    means = [limiting_null_mean(NullLimitInput(0.1, zz, PRIOR)) for zz in z]
    assert np.all(np.diff(means) > 0), f"not increasing: {means}"
    worst = max(abs(limiting_null_mean(NullLimitInput(0.1, zz, PRIOR), 128)
                    - limiting_null_mean(NullLimitInput(0.1, zz, PRIOR), 256)) for zz in z)
    assert worst < 1e-4
    return f"means {means[0]:.4f} .. {means[-1]:.4f} increasing, doubling change {worst:.1e}"


@criterion(9, "DoF registration, flat vs curved", limit=120)
def test_09_registration():
    parts = []
    for seed in SEEDS:
        spec = SyntheticSpec("piecewise_flat", noise_sd=0.1, n=300, x_range=(0, 10), seed=seed,
                             params={"breakpoint": 5.0, "frequency": 2 * np.pi / 2.5})
        data = generate(spec)
        curve = fit_curve(data, LocalConfig(h=0.5, d=3, prior=PRIOR, mcmc=McmcConfig(2000, 500, seed=seed)))
        LOCAL_CURVES.append(curve)
        flat = data.x < 5.0
        gap = curve.dof_curve.dof[~flat].mean() - curve.dof_curve.dof[flat].mean()
        parts.append(f"seed {seed}: gap {gap:.2f}")
        assert gap >= 1.0, f"seed {seed}: curved minus flat mean dof {gap:.3f}"
    return ", ".join(parts)


def _ensure_suite_fits():
    # keeps 3 and 4 meaningful when they run on their own
    if not GLOBAL_FITS:
        data = generate(SyntheticSpec("sine", noise_sd=0.3, n=200, seed=1))
        GLOBAL_FITS.append(fit_global(data, 25, PRIOR, McmcConfig(seed=1)))
    if not LOCAL_CURVES:
        data = generate(SyntheticSpec("sine", noise_sd=0.1, n=80, seed=1))
        LOCAL_CURVES.append(fit_curve(data, LocalConfig(h=1.0, d=3)))


@criterion(3, "penalization identity beta_hat = V * beta_ols")
def test_03_penalization_identity():
    _ensure_suite_fits()
    summaries = [f.summary for f in GLOBAL_FITS if not f.degenerate]
    summaries += [p.summary for c in LOCAL_CURVES for p in c.fits if p.summary is not None]
    worst = 0.0
    for s in summaries:
        target = s.V * s.beta_ols
        rel = np.abs(s.beta_hat - target) / np.maximum(np.abs(target), np.finfo(float).tiny)
        worst = max(worst, float(rel.max()))
    assert worst <= 1e-12, f"worst relative error {worst:.2e}"
    return f"{len(summaries)} fitted models, worst relative error {worst:.1e}"


@criterion(4, "DoF bounds")
def test_04_dof_bounds():
    _ensure_suite_fits()
    n_checked = 0
    for f in GLOBAL_FITS:
        d = f.basis.d
        assert f.ols_dof == d
        assert f.dof <= d and abs(f.dof - f.summary.V.sum()) < 1e-10
        n_checked += 1
    for c in LOCAL_CURVES:
        for p in c.fits:
            assert p.dof_i <= p.V_i.size and abs(p.dof_i - p.V_i.sum()) < 1e-10
            n_checked += 1
    return f"{n_checked} global and local fits"


def _bmd_path():
    env = os.environ.get("SLABSMOOTH_BMD_CSV")
    if env:
        return Path(env)
    local = Path(__file__).parent / "data" / "bmd.csv"
    return local if local.exists() else None


_SEX = {"male": "men", "men": "men", "m": "men", "female": "women", "women": "women", "f": "women"}


@criterion(10, "published BMD degrees of freedom (conditional)")
def test_10_bmd_reproduction():
    path = _bmd_path()
    if path is None:
        pytest.skip("no BMD dataset supplied (set SLABSMOOTH_BMD_CSV or add tests/data/bmd.csv)")
    data = load_csv(path)
    expected = {"men": 4.2, "women": 5.8}
    parts = []
    for label, part in data.split_groups().items():
        sex = _SEX.get(label.strip().lower())
        if sex is None:
            continue
        got = fit_global(part, 25, PRIOR, McmcConfig()).dof
        parts.append(f"{sex} {got:.2f}")
        assert abs(got - expected[sex]) <= 1.0, f"{sex}: dof {got:.2f} vs {expected[sex]}"
    assert len(parts) == 2, f"expected male/female groups, found {data.groups()}"
    return ", ".join(parts)


@criterion(11, "CLI determinism")
def test_11_cli_determinism(tmp_path):
    csv_path = tmp_path / "two_groups.csv"
    rng = np.random.default_rng(5)
    lines = ["x,y,group"]
    for g, shift in (("a", 0.0), ("b", 0.4)):
        for xv in np.linspace(0, 6, 60):
            lines.append(f"{float(xv)!r},{float(np.sin(xv) + shift + rng.normal(0, 0.2))!r},{g}")
    csv_path.write_text("\n".join(lines) + "\n")
    runs = [
        ["--command", "fit-global", "--input", str(csv_path), "--degree", "10", "--kernel-at", "7"],
        ["--command", "fit-local", "--input", str(csv_path), "--bandwidth", "1", "--jobs", "3"],
        ["--command", "dof-curve", "--input", str(csv_path), "--bandwidth", "1", "--jobs", "2"],
        ["--command", "theory-density", "--w", "0.1"],
        ["--command", "simulate", "--scenario", "registration", "--jobs", "4", "--iters", "600", "--burnin", "100"],
    ]
    for k, args in enumerate(runs):
        first, second, third = (tmp_path / f"run{k}_{tag}" for tag in "abc")
        assert main(args + ["--out", str(first)]) == 0
        assert main(args + ["--out", str(second)]) == 0
        assert main(["--config", str(first / "manifest.txt"), "--out", str(third)]) == 0
        snap = [{p.name: p.read_bytes() for p in sorted(o.iterdir())} for o in (first, second, third)]
        assert snap[0] == snap[1] == snap[2], f"{args[1]} outputs differ between runs"
    return f"{len(runs)} commands, repeated and manifest reruns byte-identical"

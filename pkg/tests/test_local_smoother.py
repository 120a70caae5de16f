import numpy as np
import pytest

from slabsmooth.data import Dataset, SyntheticSpec, generate
from slabsmooth.errors import LocalFitError, RankError
from slabsmooth.gibbs import McmcConfig
from slabsmooth.local_smoother import (
    LocalConfig,
    _finish,
    _prepare,
    fit_curve,
    fit_point,
    neighborhood,
    resolve_neighborhood,
    rice_sigma,
)

FAST = McmcConfig(600, 150, seed=4)


@pytest.fixture(scope="module")
def sine50():
    spec = SyntheticSpec("sine", noise_sd=0.1, n=50, seed=5)
    return spec, generate(spec)


def test_neighborhood_examples():
    data = Dataset([1.0, 2.0, 3.0, 4.0], np.zeros(4))
    assert neighborhood(data, 1, 1.5).tolist() == [0, 1, 2]
    assert neighborhood(data, 1, 1.0).tolist() == [1]  # strict inequality
    assert neighborhood(data, 2, 0.1).tolist() == [2]
    assert neighborhood(data, 0, 100.0).tolist() == [0, 1, 2, 3]


def test_widening_to_min_neighbors():
    data = Dataset(np.arange(20.0), np.zeros(20))
    cfg = LocalConfig(h=0.5, d=3)
    idx, widened = resolve_neighborhood(data, 0, cfg)
    assert widened and idx.tolist() == list(range(6))
    idx, widened = resolve_neighborhood(data, 10, LocalConfig(h=4.0, d=3))
    assert not widened and idx.size == 7


def test_config_validation():
    with pytest.raises(ValueError):
        LocalConfig(h=0.0)
    with pytest.raises(ValueError):
        LocalConfig(h=1.0, d=3, min_neighbors=4)


def test_rice_alternating():
    data = Dataset(np.arange(5.0), [0.0, 1.0, 0.0, 1.0, 0.0])
    s = rice_sigma(data, np.arange(5))
    # the variance 4 / (2 * 4) is formed exactly; sigma is its correctly rounded root
    assert s == np.sqrt(0.5)


def test_rice_constant_and_iid():
    data = Dataset(np.arange(6.0), np.full(6, 3.0))
    assert rice_sigma(data, np.arange(6)) == 0.0
    rng = np.random.default_rng(8)
    sd = 0.7
    data = Dataset(np.linspace(0, 1, 1000), rng.normal(0, sd, 1000))
    assert abs(rice_sigma(data, np.arange(1000)) ** 2 / sd**2 - 1) < 0.10


def test_locally_constant_is_degenerate():
    x = np.linspace(0, 10, 40)
    y = np.where(x < 5, 1.5, np.sin(x))
    fit = fit_point(Dataset(x, y), 3, LocalConfig(h=1.0, mcmc=FAST))
    assert fit.degenerate and fit.f_hat == 1.5 and fit.dof_i == 0.0


def test_unit_weights_give_local_least_squares(sine50):
    _, data = sine50
    cfg = LocalConfig(h=1.0, d=3, mcmc=FAST)
    for i in (0, 20, 49):
        p = _prepare(data, i, cfg)
        fit = _finish(p, np.ones(3), 0.5, FAST)
        xn, yn = data.x[p.nbhd] - data.x[i], data.y[p.nbhd]
        coef, *_ = np.linalg.lstsq(np.vander(xn, 4, increasing=True), yn, rcond=None)
        assert np.isclose(fit.f_hat, coef[0], atol=1e-10)


def test_straight_line_exact_limit():
    rng = np.random.default_rng(0)
    x = np.linspace(0, 1, 60)
    data = Dataset(x, 2 * x + rng.normal(0, 1e-8, 60))
    cfg = LocalConfig(h=0.13, d=3, mcmc=FAST)
    for i in (10, 30, 45):
        assert abs(fit_point(data, i, cfg).f_hat - 2 * x[i]) < 1e-4


def test_sine_accuracy(sine50):
    spec, data = sine50
    spacing = data.x[1] - data.x[0]
    curve = fit_curve(data, LocalConfig(h=7.5 * spacing, d=3, mcmc=FAST))
    assert np.max(np.abs(curve.fitted - spec.mean(data.x))) < 3 * spec.noise_sd
    for f in curve.fits:
        assert np.isclose(f.dof_i, f.V_i.sum(), rtol=0, atol=1e-10)
        assert f.dof_i <= 3


def test_point_and_curve_agree_bitwise(sine50):
    _, data = sine50
    cfg = LocalConfig(h=0.8, d=3, mcmc=McmcConfig(300, 100, seed=11))
    serial = fit_curve(data, cfg, jobs=1)
    threaded = fit_curve(data, cfg, jobs=4)
    assert serial.fitted.tobytes() == threaded.fitted.tobytes()
    assert serial.dof_curve.dof.tobytes() == threaded.dof_curve.dof.tobytes()
    for i in (0, 17, 49):
        single = fit_point(data, i, cfg)
        assert single.f_hat == serial.fitted[i]
        assert single.V_i.tobytes() == serial.fits[i].V_i.tobytes()


def test_rank_error_names_point():
    x = np.array([0.0] * 8 + [1.0, 2.0])
    y = np.arange(10.0)
    with pytest.raises(RankError, match="target point 0"):
        fit_point(Dataset(x, y), 0, LocalConfig(h=0.5, d=3, mcmc=FAST))
    with pytest.raises(LocalFitError) as err:
        fit_curve(Dataset(x, y), LocalConfig(h=0.5, d=3, mcmc=FAST))
    assert len(err.value.failures) >= 8

import math

import numpy as np
import pytest
import scipy.linalg

from eitblockade import correlation, hilbert, steady, sweep
from eitblockade.correlation import CorrelationSeries
from eitblockade.errors import InvalidArgumentError
from eitblockade.model import ModelParams, build_liouvillian, unvec, vec

from oracles import dense_liouvillian, dense_ops

POINT_A = ModelParams().in_g(omega=2, u0=1.6, delta_c=-1.1682)
COHERENT = ModelParams(g=0.0, omega=1.0, delta_c=0.3)


def series_for(p, **kw):
    lv = build_liouvillian(p)
    return correlation.g2_tau(lv, steady.solve(p), p, **kw)


@pytest.fixture(scope="module")
def point_b():
    rep = sweep.optimal_over_detuning(ModelParams().in_g(omega=2.1, u0=3.0))
    return ModelParams().in_g(omega=2.1, u0=3.0).replace(delta_c=rep.delta_c_star)


@pytest.fixture(scope="module")
def series_a():
    return series_for(POINT_A, tau_max=20.0, n_points=201)


def test_default_grid():
    s = series_for(POINT_A.replace(n_max=4))
    assert s.tau.size == 201
    assert s.tau[0] == 0 and s.tau[-1] == 10.0
    assert np.allclose(np.diff(s.tau), 0.05)


def test_zero_delay_matches_steady_value(series_a):
    g2_0 = steady.steady_observables(POINT_A).g2_0
    assert series_a.g2[0] == pytest.approx(g2_0, rel=1e-6)


def test_matches_exact_propagator(series_a):
    # independent oracle: dense generator and matrix exponential on the seed
    lm = dense_liouvillian(POINT_A)
    rho = steady.solve(POINT_A)
    a, _ = dense_ops(POINT_A.n_max)
    n_op = a.T @ a
    n_s = np.trace(n_op @ rho).real
    seed = vec(a @ rho @ a.T)
    step = scipy.linalg.expm(lm * (series_a.tau[1] - series_a.tau[0]))
    v, ref = seed, []
    for _ in series_a.tau:
        ref.append(np.trace(n_op @ unvec(v)).real / n_s**2)
        v = step @ v
    np.testing.assert_allclose(series_a.g2, ref, rtol=1e-6)


def test_step_halving_contract(series_a):
    lv = build_liouvillian(POINT_A)
    rho = steady.solve(POINT_A)
    a = hilbert.annihilation(POINT_A.space()).toarray()
    seed = vec(a @ rho @ a.conj().T)
    n_op = a.conj().T @ a
    n_s = np.trace(n_op @ rho).real
    halved = correlation.evolve(lv, seed, series_a.tau, 2 * series_a.substeps) @ vec(n_op.T)
    np.testing.assert_allclose(halved.real / n_s**2, series_a.g2, rtol=1e-6)


def test_decorrelates_at_quasi_dark_point(series_a):
    assert abs(series_a.g2[-1] - 1.0) <= 0.05


def test_propagator_keeps_steady_state():
    rho = steady.solve(POINT_A)
    out = correlation.propagate_state(build_liouvillian(POINT_A), rho, 5.0)
    assert np.abs(out - rho).max() <= 1e-8


def test_coherent_light_is_flat_and_not_antibunched():
    s = series_for(COHERENT, tau_max=3.0, n_points=61)
    np.testing.assert_allclose(s.g2, 1.0, atol=1e-6)
    verdict = correlation.antibunching_check(s)
    assert not verdict.antibunched
    assert abs(verdict.margin) < 1e-6


def test_decreasing_series_is_bunched():
    tau = np.linspace(0, 2, 21)
    verdict = correlation.antibunching_check(CorrelationSeries(tau, 2.0 - tau / 4))
    assert not verdict.antibunched
    assert verdict.margin == pytest.approx(-0.5)


def test_increasing_series_is_antibunched():
    tau = np.linspace(0, 4, 41)
    verdict = correlation.antibunching_check(CorrelationSeries(tau, 1 - np.exp(-tau)))
    assert verdict.antibunched
    # the probe window stops at 2 / kappa
    assert verdict.margin == pytest.approx(1 - np.exp(-0.1))


@pytest.mark.parametrize(
    "tau, g2",
    [([0.0, 1.0], [0.1, 0.5]), ([0.5, 1.0, 1.5], [0.1, 0.2, 0.3])],
)
def test_antibunching_input_checks(tau, g2):
    with pytest.raises(InvalidArgumentError):
        correlation.antibunching_check(CorrelationSeries(np.array(tau), np.array(g2)))


def test_undefined_without_photons():
    p = ModelParams(eta=1e-9).in_g(omega=2)
    s = series_for(p, tau_max=1.0, n_points=5)
    assert np.all(np.isnan(s.g2))


@pytest.mark.parametrize("kw", [{"tau_max": 0.0}, {"n_points": 1}])
def test_argument_checks(kw):
    p = POINT_A.replace(n_max=3)
    with pytest.raises(InvalidArgumentError):
        series_for(p, **kw)


@pytest.mark.xfail(strict=True, reason="g2 dips below g2(0) near tau = 0.1; see decisions log")
def test_antibunched_at_deep_blockade(point_b):
    assert correlation.antibunching_check(series_for(point_b)).antibunched


@pytest.mark.xfail(strict=True, reason="slowest relaxation rate ~0.05 kappa; g2(20) = 0.93")
def test_decorrelates_at_deep_blockade(point_b):
    s = series_for(point_b, tau_max=20.0, n_points=201)
    assert abs(s.g2[-1] - 1.0) <= 0.05
    assert math.isfinite(s.g2[-1])

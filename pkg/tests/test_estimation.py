import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import curve_fit

from pairsource.correlation_model import g2_auto, g2_cross_ideal
from pairsource.errors import ConvergenceWarning, DegenerateDesignError, DomainError
from pairsource.estimation import (MODEL_VERSION, CharacterizationConstants, PowerSweepDataset,
                                   fit_auto_lineshape, fit_characterization, fit_cross_lineshape,
                                   fit_fringe, fit_lineshape, levenberg_marquardt, synthetic_histogram,
                                   synthetic_power_sweep)
from pairsource.polarization import fringe_curve, pair_state

TWO_PI = 2 * math.pi
GS, GI = TWO_PI * 600e6, TWO_PI * 240e6
CONST = CharacterizationConstants(GS, GI, 150.0, 3000.0, 0.71, 250e-12, 6e-9, 0.0, 162e-12)
TRUTH = np.array([2450.0, 0.031, 0.074])


# -- engine ----------------------------------------------------------------------

def test_lm_agrees_with_curve_fit():
    rng = np.random.default_rng(0)
    x = np.linspace(0, 4, 40)
    sig = 0.05 + 0.02 * x
    y = 3.0 * np.exp(-1.3 * x) + 0.5 + rng.normal(0, sig)
    model = lambda x, a, k, c: a * np.exp(-k * x) + c
    popt, pcov = curve_fit(model, x, y, p0=[1, 1, 0], sigma=sig, absolute_sigma=True)
    res = levenberg_marquardt(lambda p: (y - model(x, *p)) / sig, [1, 1, 0], ["a", "k", "c"])
    assert res.converged
    assert res.values == pytest.approx(popt, rel=1e-6)
    assert res.errors == pytest.approx(np.sqrt(np.diag(pcov)), rel=1e-4)
    assert res.dof == 37


def test_lm_respects_bounds():
    res = levenberg_marquardt(lambda p: np.array([p[0] + 1.0, 0.1 * p[0]]), [2.0], ["x"], lower=[0.0])
    assert res["x"] >= 0.0


def test_lm_degenerate_design():
    with pytest.raises(DegenerateDesignError):
        levenberg_marquardt(lambda p: np.array([p[0] + p[1] - 1, p[0] + p[1] - 1.1, 2 * (p[0] + p[1])]),
                            [0.3, 0.2], ["a", "b"])


def test_lm_iteration_limit_warns():
    with pytest.warns(ConvergenceWarning):
        levenberg_marquardt(lambda p: np.array([p[0] ** 2 - 2.0, 0.1 * p[0]]), [10.0], ["x"], max_iter=1)


def test_fit_result_json():
    res = levenberg_marquardt(lambda p: np.array([p[0] - 1, p[0] - 3]), [0.0], ["x"])
    doc = json.loads(res.to_json(seed=3))
    assert doc["model_version"] == MODEL_VERSION and doc["seed"] == 3
    assert doc["parameters"]["x"]["value"] == pytest.approx(2.0)


# -- power sweep -----------------------------------------------------------------

def test_noiseless_sweep_recovers_truth():
    data = synthetic_power_sweep(TRUTH, CONST, noiseless=True)
    res = fit_characterization(data, CONST)
    assert res.values == pytest.approx(TRUTH, rel=1e-6)
    assert res.chi2 < 1e-6


def test_noisy_sweep_within_three_sigma():
    data = synthetic_power_sweep(TRUTH, CONST, seed=0)
    res = fit_characterization(data, CONST)
    assert res.converged
    assert np.all(np.abs(res.values - TRUTH) < 3 * res.errors)
    assert res.reduced_chi2 < 3
    cov = res.covariance
    assert np.allclose(cov, cov.T, atol=1e-9 * np.abs(cov).max())
    assert np.linalg.eigvalsh(cov).min() >= -1e-9 * np.abs(cov).max()
    assert np.all(res.errors >= 0)


def test_single_power_is_degenerate():
    data = synthetic_power_sweep(TRUTH, CONST, powers=[0.5, 0.5, 0.5], seed=1)
    with pytest.raises(DegenerateDesignError):
        fit_characterization(data, CONST)


@settings(max_examples=10, deadline=None)
@given(st.permutations(range(10)))
def test_row_order_does_not_matter(perm):
    data = synthetic_power_sweep(TRUTH, CONST, seed=2)
    ref = fit_characterization(data, CONST)
    cols = [getattr(data, f)[list(perm)] for f in data.__dataclass_fields__]
    res = fit_characterization(PowerSweepDataset(*cols), CONST)
    assert np.array_equal(res.values, ref.values)


def test_fit_without_g2_column():
    data = synthetic_power_sweep(TRUTH, CONST, seed=3)
    data.g2si0[:] = np.nan
    res = fit_characterization(data, CONST)
    assert np.all(np.abs(res.values - TRUTH) < 3 * res.errors)


def test_dataset_csv_round_trip(tmp_path):
    data = synthetic_power_sweep(TRUTH, CONST, seed=4)
    data.to_csv(tmp_path / "s.csv", ["synthetic"])
    back = PowerSweepDataset.from_csv(tmp_path / "s.csv")
    assert back.w_2 == pytest.approx(data.w_2, rel=1e-9)
    (tmp_path / "bad.csv").write_text("pump_power_mW,W_s\n1,2\n")
    with pytest.raises(DomainError):
        PowerSweepDataset.from_csv(tmp_path / "bad.csv")


def test_dataset_validation():
    with pytest.raises(DomainError):
        PowerSweepDataset([0.0], [1], [1], [1], [1], [1], [1], [np.nan], [np.nan])
    with pytest.raises(DomainError):
        PowerSweepDataset([1.0], [1], [0], [1], [1], [1], [1], [np.nan], [np.nan])


# -- lineshapes --------------------------------------------------------------------

def test_cross_lineshape_noiseless():
    h = synthetic_histogram(lambda t: g2_cross_ideal(0.02, GS, GI, 200e-12, t - 50e-12),
                            81, 81 * 200, 1e5, 1e5, 10.0, noiseless=True)
    res = fit_cross_lineshape(h, GS, GI, 200e-12)
    assert res["r_over_b"] == pytest.approx(0.02, rel=1e-3)
    assert res["offset"] == pytest.approx(50e-12, abs=1e-12)


def test_cross_lineshape_noisy():
    h = synthetic_histogram(lambda t: g2_cross_ideal(0.02, GS, GI, 200e-12, t),
                            81, 81 * 200, 2e4, 2e4, 30.0, seed=5)
    res = fit_lineshape(h, "cross", {"gamma_s": GS, "gamma_i": GI, "sigma": 200e-12})
    assert abs(res["r_over_b"] - 0.02) < 3 * res.error("r_over_b")


@pytest.mark.parametrize("K, sigma", [(1.71, 125e-12), (1.0, 60e-12), (1.1, 0.0)])
def test_auto_lineshape_noiseless(K, sigma):
    h = synthetic_histogram(lambda t: g2_auto(K, GI, sigma, t), 21, 21 * 1200, 1e6, 1e6, 10.0,
                            noiseless=True)
    res = fit_auto_lineshape(h, GI)
    assert res["K"] == pytest.approx(K, rel=2e-3)
    # jitter well below the bin width is only loosely pinned by rounded counts
    assert res["sigma"] == pytest.approx(sigma, abs=10e-12)


def test_auto_lineshape_noisy_k171():
    h = synthetic_histogram(lambda t: g2_auto(1.71, GI, 125e-12, t), 21, 21 * 1200, 2e5, 2e5, 10.0,
                            seed=6)
    res = fit_auto_lineshape(h, GI)
    assert abs(res["K"] - 1.71) < 3 * res.error("K")
    assert abs(res["sigma"] - 125e-12) < 3 * res.error("sigma")


def test_lineshape_needs_coverage():
    h = synthetic_histogram(lambda t: g2_auto(1.2, GI, 0.0, t), 21, 21 * 10, 1e6, 1e6, 1.0, noiseless=True)
    with pytest.raises(DomainError):
        fit_auto_lineshape(h, GI)
    with pytest.raises(DomainError):
        fit_lineshape(h, "triangle", {})


# -- fringes -----------------------------------------------------------------------

THETA = np.linspace(0, math.pi / 2, 19)


def test_fringe_noiseless_visibility():
    curve = fringe_curve(pair_state(1, 1, 0.3, 0.961), THETA) * 1e5
    res = fit_fringe(THETA, curve, ["11", "12", "21", "22"])
    assert res.derived["V"][0] == pytest.approx(0.961, abs=1e-9)
    assert res.derived["V_12"][0] == pytest.approx(0.961, abs=1e-9)


def test_fringe_poisson_visibility():
    rng = np.random.default_rng(7)
    counts = rng.poisson(fringe_curve(pair_state(1, 1, 0.0, 0.961), THETA) * 2e4)
    res = fit_fringe(THETA, counts)
    V, V_err = res.derived["V"]
    assert abs(V - 0.961) < 3 * V_err


def test_flat_fringe_gives_zero_visibility():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = fit_fringe(THETA, np.full((4, THETA.size), 1000.0))
    assert res.derived["V"][0] == pytest.approx(0.0, abs=1e-9)
    assert math.isinf(res.error("phase"))


def test_fringe_needs_a_period():
    with pytest.raises(DomainError):
        fit_fringe(THETA[:4], np.ones((4, 4)))
    with pytest.raises(DomainError):
        fit_fringe(np.linspace(0, 1.0, 10), np.ones((4, 10)))

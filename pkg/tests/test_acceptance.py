"""Acceptance criteria AC1 to AC9, one group of checks per criterion.

Run with ``pytest tests/test_acceptance.py``; the terminal summary prints
one PASS/FAIL line per criterion.
"""

import math
import time
import warnings

import numpy as np
import pytest
from scipy import stats
from scipy.optimize import curve_fit

from pairsource import phasematching as pm
from pairsource.correlation_model import (DetectorSpec, FilterSpec, SourceOperatingPoint, bin_average,
                                          cauchy_schwarz_ratio, fluxes, g2_auto, g2_cross,
                                          jitter_factor, schmidt_number, worst_case_p0)
from pairsource.correlator import coincidence_histogram, g2_estimate
from pairsource.estimation import CharacterizationConstants, fit_characterization, synthetic_power_sweep
from pairsource.polarization import (TwoQubitState, chsh_from_state, chsh_parameter, coincidence_probabilities,
                                     fringe_visibility, idler_diagonal_analyzer, pair_state,
                                     signal_fringe_analyzer)
from pairsource.simulate import PairProcessConfig, pair_delay_cdf, same_pair_delays, simulate_pair_stream, \
    simulate_thermal_stream

TWO_PI = 2 * math.pi
GS, GI = TWO_PI * 600e6, TWO_PI * 240e6
ORACLE_G2_50UW = 2494.825010115267  # tests/oracle_calc.py


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def ac(n):
    return pytest.mark.acceptance(f"AC{n}")


# -- AC1 ---------------------------------------------------------------------------

@ac(1)
def test_ac1_bandwidth_regression():
    with Timer() as t:
        assert pm.fwhm_bandwidth(-7.93e-4, 13.0) == pytest.approx(539, abs=1)
        assert pm.fwhm_bandwidth(-1.14e-3, 50.0) == pytest.approx(97, abs=1)
    assert t.elapsed < 1


@ac(1)
@pytest.mark.parametrize("spec, slope, fwhm", [
    (pm.WaveguideSpec("KTP_z", 8.2, 13.0, 53.0), -7.93e-4, 539),
    (pm.WaveguideSpec("LiNbO3_e", 6.45, 50.0, 180.0), -1.14e-3, 97),
])
def test_ac1_sellmeier_slopes(spec, slope, fwhm):
    with Timer() as t:
        got = pm.dispersion_slope(spec, 883.0)
        assert got == pytest.approx(slope, rel=0.10)
        assert pm.fwhm_bandwidth(got, spec.length_mm) == pytest.approx(fwhm, rel=0.10)
    assert t.elapsed < 1


# -- AC2 ---------------------------------------------------------------------------

@ac(2)
def test_ac2_jitter_factor():
    with Timer() as t:
        assert jitter_factor(GS, GI, 250e-12, 0.0) == pytest.approx(0.65, abs=0.005)
    assert t.elapsed < 1


# -- AC3 ---------------------------------------------------------------------------

@ac(3)
def test_ac3_peak_correlation():
    with Timer() as t:
        op = SourceOperatingPoint.from_per_mhz(2.45e3, 0.05)
        g2 = g2_cross(op, FilterSpec(GS, mode_populations=(0.71, 0.29)), FilterSpec(GI),
                      DetectorSpec(0.031, 150.0), DetectorSpec(0.074, 3000.0), 0.0, sigma=250e-12)
    assert g2 == pytest.approx(2600, rel=0.15)
    assert g2 == pytest.approx(ORACLE_G2_50UW, rel=1e-9)
    assert t.elapsed < 1


# -- AC4 ---------------------------------------------------------------------------

@ac(4)
def test_ac4_multimode():
    with Timer() as t:
        assert schmidt_number([0.95, 0.025, 0.025]) == pytest.approx(1.1, abs=0.01)
        assert worst_case_p0(1.71) == pytest.approx(0.71, abs=0.01)
        assert g2_auto(1.1, GS, 0.0, 0.0) == pytest.approx(1.909, abs=0.001)
    assert t.elapsed < 1


# -- AC5 ---------------------------------------------------------------------------

def _ac5_config(det, keep_ids=False, seed=0):
    # R/B = 0.01 with B = 2 pi 100 GHz: about 1.3e8 created pairs in 20 ms
    op = SourceOperatingPoint(TWO_PI * 0.01, 1.0, spdc_bandwidth=TWO_PI * 100e9)
    return PairProcessConfig(op, FilterSpec(GS), FilterSpec(GI), det, det, 20e-3, seed, keep_ids)


def _ac5_z_scores(seed):
    det = DetectorSpec(0.5, 0.0, 100e-12)
    cfg = _ac5_config(det, seed=seed)
    width = 161
    s, i = simulate_pair_stream(cfg)
    h = coincidence_histogram(s, i, width, width * 40)
    g2, err = g2_estimate(h)
    model = bin_average(lambda x: g2_cross(cfg.op_point, cfg.filter_s, cfg.filter_i, det, det, x),
                        h.tau, width * 1e-12)
    ws, wi, _ = fluxes(cfg.op_point, cfg.filter_s, cfg.filter_i, det, det)
    # bins are selected from the model, so the set is the same for every seed
    mask = model * ws * wi * cfg.duration * width * 1e-12 > 100
    peak = h.counts[mask].sum() - h.accidentals_per_bin * mask.sum()
    return (g2[mask] - model[mask]) / err[mask], peak, cfg


@ac(5)
@pytest.mark.slow
def test_ac5_cross_histogram_matches_model():
    # fixed seed; with ~20 bins a 3-sigma-per-bin rule fails ~5% of seeds by chance
    with Timer() as t:
        z, peak, cfg = _ac5_z_scores(seed=1)
    assert cfg.op_point.pair_rate * cfg.duration >= 1e6
    assert peak >= 1e4
    assert np.all(np.abs(z) < 3), f"max |z| = {np.abs(z).max():.2f}"
    assert t.elapsed < 60


@ac(5)
@pytest.mark.slow
def test_ac5_bin_errors_calibrated_across_seeds():
    z = np.concatenate([_ac5_z_scores(seed)[0] for seed in range(10, 15)])
    assert abs(z.mean()) < 0.35
    assert 0.8 < z.std(ddof=1) < 1.25


@ac(5)
@pytest.mark.slow
def test_ac5_same_pair_delay_distribution():
    with Timer() as t:
        s, i = simulate_pair_stream(_ac5_config(DetectorSpec(1.0), keep_ids=True))
        delays = same_pair_delays(s, i) * 1e-12
        p = stats.kstest(delays, lambda x: pair_delay_cdf(x, GS, GI)).pvalue
    assert delays.size >= 1e4
    assert p > 0.01
    assert t.elapsed < 60


# -- AC6 ---------------------------------------------------------------------------

@ac(6)
@pytest.mark.slow
def test_ac6_single_mode_thermal():
    width = 21
    with Timer() as t:
        s = simulate_thermal_stream(GI, 1e9, [1.0], [0.0], DetectorSpec(), seed=3, duration=1e-3)
        h = coincidence_histogram(s, s, width, width * 300)
    g2, err = g2_estimate(h)
    assert g2[h.tau_ps == 0][0] == pytest.approx(2.0, abs=0.05)

    w = width * 1e-12

    def model(tau, amp, decay, offset):
        return 1 + amp * bin_average(lambda x: np.exp(-decay * 1e9 * np.abs(x - offset * 1e-12)), tau, w)

    popt, _ = curve_fit(model, h.tau, g2, p0=[1.0, GI * 1.2e-9, 0.0], sigma=err, absolute_sigma=True)
    assert popt[1] * 1e9 == pytest.approx(GI, rel=0.05)
    assert t.elapsed < 120


@ac(6)
@pytest.mark.slow
def test_ac6_three_mode_thermal():
    pops = [0.95, 0.025, 0.025]
    sigma = 125e-12
    # each detection is jittered once; the delay jitter of a pair is then sigma
    det = DetectorSpec(jitter_sigma=sigma / math.sqrt(2))
    with Timer() as t:
        s = simulate_thermal_stream(GI, 1e10, pops, [0.0, 60e9, -60e9], det, seed=4, duration=50e-6)
        h = coincidence_histogram(s, s, 21, 21 * 300)
    g2, _ = g2_estimate(h)
    expected = 1 + jitter_factor(GI, GI, sigma, 0.0) / schmidt_number(pops)
    assert g2[h.tau_ps == 0][0] == pytest.approx(expected, abs=0.05)
    assert t.elapsed < 120


# -- AC7 ---------------------------------------------------------------------------

CONST = CharacterizationConstants(GS, GI, 150.0, 3000.0, 0.71, 250e-12, 6e-9, 0.0, 162e-12)
TRUTH = np.array([2450.0, 0.031, 0.074])


@ac(7)
def test_ac7_single_sweep_recovery():
    res = fit_characterization(synthetic_power_sweep(TRUTH, CONST, seed=0), CONST)
    assert res.converged
    assert np.all(np.abs(res.values - TRUTH) < 3 * res.errors)


@ac(7)
@pytest.mark.slow
def test_ac7_error_calibration():
    values, errors, red_chi2 = [], [], []
    with Timer() as t:
        for seed in range(200):
            res = fit_characterization(synthetic_power_sweep(TRUTH, CONST, seed=1000 + seed), CONST)
            values.append(res.values)
            errors.append(res.errors)
            red_chi2.append(res.reduced_chi2)
    values, errors = np.array(values), np.array(errors)
    assert np.mean(red_chi2) == pytest.approx(1.0, abs=0.3)
    ratio = values.std(axis=0, ddof=1) / errors.mean(axis=0)
    assert np.all(np.abs(ratio - 1) < 0.2), ratio
    assert np.all(np.abs(values.mean(axis=0) - TRUTH) < 3 * errors.mean(axis=0) / math.sqrt(200) + 1e-12 * TRUTH)
    assert t.elapsed < 600


# -- AC8 ---------------------------------------------------------------------------

@ac(8)
def test_ac8_entanglement_numbers():
    with Timer() as t:
        S, dS = chsh_parameter(0.638, 0.702, 0.700, -0.669, [0.005] * 4)
        assert S == pytest.approx(2.709, abs=0.002)
        assert dS == pytest.approx(0.010, abs=0.001)
        for phi in np.linspace(0, 2 * math.pi, 8, endpoint=False):
            S_ideal, _ = chsh_from_state(pair_state(1, 1, phi, 1.0), phase=phi)
            assert abs(S_ideal - 2 * math.sqrt(2)) < 1e-9
        assert fringe_visibility(pair_state(1, 1, 0.0, 0.961)) == pytest.approx(0.961, abs=1e-12)
        assert fringe_visibility(pair_state(1, 1, 0.0, 1 / 3)) == pytest.approx(1 / 3, abs=1e-12)
    assert t.elapsed < 5


# -- AC9 ---------------------------------------------------------------------------
# Lab-only results (absolute rates, spectrometer spectra, memory storage) are
# out of reach; the physical invariants stand in for them.

@ac(9)
def test_ac9_invariants():
    rng = np.random.default_rng(9)
    op = SourceOperatingPoint.from_per_mhz(2.45e3, 0.05)
    fs, fi = FilterSpec(GS, mode_populations=(0.71, 0.29)), FilterSpec(GI)
    ds, di = DetectorSpec(0.031, 150.0, 250e-12), DetectorSpec(0.074, 3000.0)
    tau = np.linspace(-5e-9, 5e-9, 201)
    # symmetry and positivity of the correlation shapes
    assert np.allclose(jitter_factor(GS, GI, 250e-12, tau), jitter_factor(GI, GS, 250e-12, -tau))
    assert np.all(g2_cross(op, fs, fi, ds, di, tau) >= 1)
    # normalization: far from the peak the cross-correlation returns to 1
    assert g2_cross(op, fs, fi, ds, di, 1e-6) == pytest.approx(1.0, abs=1e-9)
    # Cauchy-Schwarz violation of the pair source with thermal auto-correlations
    g2_si = g2_cross(op, fs, fi, ds, di, 0.0)
    assert cauchy_schwarz_ratio(g2_si, g2_auto(1.71, GS, 250e-12, 0), g2_auto(1.0, GI, 0, 0)) > 1
    # probability completeness and the Tsirelson bound on random physical states
    for _ in range(200):
        G = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        rho = G @ G.conj().T
        state = TwoQubitState(rho / np.trace(rho).real)
        P = coincidence_probabilities(state, signal_fringe_analyzer(rng.uniform(0, math.pi)),
                                      idler_diagonal_analyzer())
        assert P.sum() == pytest.approx(1.0, abs=1e-12) and P.min() >= -1e-12
        assert chsh_from_state(state, phase=rng.uniform(0, 2 * math.pi))[0] <= 2 * math.sqrt(2) + 1e-9


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))

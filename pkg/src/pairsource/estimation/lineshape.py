"""Fits of measured g2 histograms to the jitter-broadened model lineshapes."""

from __future__ import annotations

import math

import numpy as np

from ..correlation_model import bin_average, jitter_factor
from ..correlator import CorrelationHistogram, g2_estimate
from ..errors import DegenerateDesignError, DomainError
from .lm import FitResult, levenberg_marquardt

# multi-start grid for the auto fit, as multiples of the starting K and sigma
_STARTS = ((1.0, 1.0), (1.5, 0.5), (0.8, 2.0), (2.5, 1.5), (1.2, 0.2))


def _data(h: CorrelationHistogram):
    g2, err = g2_estimate(h)
    # empty bins still carry information; give them the one-count error
    err = np.where(err > 0, err, 1.0 / h.accidentals_per_bin)
    return h.tau, g2, err


def cross_model(tau, r_over_b, offset, gamma_s, gamma_i, sigma, bin_width):
    amp = 4.0 / r_over_b * gamma_s * gamma_i / (gamma_s + gamma_i) ** 2
    shape = bin_average(lambda t: jitter_factor(gamma_s, gamma_i, sigma, t), tau - offset, bin_width)
    return 1.0 + amp * shape


def auto_model(tau, K, sigma, offset, gamma, bin_width):
    shape = bin_average(lambda t: jitter_factor(gamma, gamma, sigma, t), tau - offset, bin_width)
    return 1.0 + shape / K


def _check_coverage(h, gammas, sigma=0.0):
    need = 5.0 / min(gammas) + 3 * sigma
    if h.range_ps * 1e-12 < need:
        raise DomainError(
            f"histogram range {h.range_ps} ps is shorter than five decay times ({need * 1e12:.0f} ps)")


def fit_cross_lineshape(h: CorrelationHistogram, gamma_s, gamma_i, sigma, r_over_b0=None) -> FitResult:
    """Fit R/B and a delay offset (s) to a signal-idler histogram.

    The model has no dark counts or spurious modes, so R/B absorbs both.
    """
    _check_coverage(h, (gamma_s, gamma_i), sigma)
    tau, g2, err = _data(h)
    width = h.bin_width_ps * 1e-12
    k = int(np.argmax(g2))
    if r_over_b0 is None:
        peak = max(g2[k] - 1.0, 1e-3)
        r_over_b0 = 4.0 / peak * gamma_s * gamma_i / (gamma_s + gamma_i) ** 2
    x0 = [r_over_b0, tau[k]]

    def residuals(p):
        return (g2 - cross_model(tau, p[0], p[1], gamma_s, gamma_i, sigma, width)) / err

    return levenberg_marquardt(residuals, x0, ["r_over_b", "offset"], lower=[1e-12, -np.inf],
                               scale=[abs(r_over_b0), width])


def fit_auto_lineshape(h: CorrelationHistogram, gamma, sigma0=100e-12, K0=1.5) -> FitResult:
    """Fit K, jitter sigma and offset to an auto-correlation histogram.

    sigma enters through sigma^2 >= 0 so a jitter-free histogram stays
    well posed; five deterministic starts are tried and the lowest chi2
    wins, ties going to the smaller K.
    """
    _check_coverage(h, (gamma,))
    tau, g2, err = _data(h)
    width = h.bin_width_ps * 1e-12
    s2_scale = max(sigma0, width) ** 2

    def residuals(p):
        sig = math.sqrt(max(p[1], 0.0) * s2_scale)
        return (g2 - auto_model(tau, p[0], sig, p[2] * width, gamma, width)) / err

    best = None
    for k_mult, s_mult in _STARTS:
        x0 = [K0 * k_mult, (sigma0 * s_mult) ** 2 / s2_scale, 0.0]
        try:
            res = levenberg_marquardt(residuals, x0, ["K", "sigma_sq", "offset"],
                                      lower=[1e-6, 0.0, -np.inf], scale=[1.0, 1.0, 1.0], warn=False)
        except DegenerateDesignError:
            continue
        key = (round(res.chi2, 9), res.values[0])
        if best is None or key < best[0]:
            best = (key, res)
    if best is None:
        raise DegenerateDesignError("auto-correlation fit is degenerate from every start")
    res = best[1]
    # back to physical units: sigma in s, offset in s
    s2 = res.values[1] * s2_scale
    sig = math.sqrt(max(s2, 0.0))
    J = np.diag([1.0, 0.0, width])
    J[1, 1] = s2_scale / (2 * sig) if sig > 0 else 0.0
    cov = J @ res.covariance @ J.T
    values = np.array([res.values[0], sig, res.values[2] * width])
    errors = np.sqrt(np.clip(np.diag(cov), 0, None))
    if sig == 0:
        errors[1] = math.sqrt(res.errors[1] * s2_scale)
    return FitResult(["K", "sigma", "offset"], values, errors, cov, res.chi2, res.dof,
                     res.converged, res.n_iter)


def fit_lineshape(h: CorrelationHistogram, model: str, fixed: dict) -> FitResult:
    """Dispatch on ``model``: "cross" needs gamma_s, gamma_i, sigma; "auto" needs gamma."""
    if model == "cross":
        return fit_cross_lineshape(h, fixed["gamma_s"], fixed["gamma_i"], fixed["sigma"],
                                   fixed.get("r_over_b0"))
    if model == "auto":
        return fit_auto_lineshape(h, fixed["gamma"], fixed.get("sigma0", 100e-12), fixed.get("K0", 1.5))
    raise DomainError(f"unknown lineshape model {model!r}")


def synthetic_histogram(g2_func, bin_width_ps, range_ps, rate_a, rate_b, duration, seed=None,
                        noiseless=False) -> CorrelationHistogram:
    """Poisson counts around ``g2_func`` (bin-averaged) at the given singles rates."""
    m = range_ps // bin_width_ps
    tau = np.arange(-m, m + 1) * bin_width_ps * 1e-12
    width = bin_width_ps * 1e-12
    mean = bin_average(g2_func, tau, width) * rate_a * rate_b * duration * width
    counts = np.rint(mean) if noiseless else np.random.default_rng(seed).poisson(mean)
    return CorrelationHistogram(bin_width_ps, range_ps, counts.astype(np.int64), duration,
                                rate_a, rate_b, int(round(rate_a * duration)), int(round(rate_b * duration)))

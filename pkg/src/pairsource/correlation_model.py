"""Closed-form correlation functions and detection rates of filtered,
low-gain SPDC with Lorentzian filters.

Conventions
-----------
* Linewidths ``gamma`` are angular FWHM in rad/s (see :mod:`pairsource.units`).
* Delays ``tau`` are in seconds, with ``tau = t_idler - t_signal`` for
  cross-correlations. Positive delays decay with the idler linewidth.
* ``r_over_b`` is the dimensionless spectral brightness R/B that pairs with
  angular linewidths, so the signal flux is ``r_over_b * gamma_s / 4``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special
from scipy.integrate import quad

from .errors import ApproximationWarning, DomainError, NoSolutionError
from .units import TWO_PI, angular

LOW_GAIN_LIMIT = 0.1
NARROWBAND_RATIO = 100.0


@dataclass(frozen=True)
class FilterSpec:
    """Lorentzian filter line with optional spurious longitudinal modes.

    ``mode_populations[0]`` is the probability that a transmitted photon is
    in the target mode (p0); the remaining entries are spurious modes.
    """

    gamma: float
    fsr: float = math.inf
    peak_transmission: float = 1.0
    mode_populations: tuple = (1.0,)

    def __post_init__(self):
        pops = tuple(float(p) for p in self.mode_populations)
        object.__setattr__(self, "mode_populations", pops)
        if not self.gamma > 0:
            raise DomainError("filter linewidth must be positive")
        if not 0.0 <= self.peak_transmission <= 1.0:
            raise DomainError("peak transmission must lie in [0, 1]")
        if any(p < 0 for p in pops) or abs(sum(pops) - 1.0) > 1e-9:
            raise DomainError(f"mode populations {pops} must be >= 0 and sum to 1")
        if pops[0] <= 0:
            raise DomainError("target-mode population p0 must be positive")

    @classmethod
    def from_linewidth_hz(cls, linewidth_hz, **kw):
        """Build from the FWHM in ordinary frequency, Gamma/(2 pi)."""
        return cls(gamma=angular(linewidth_hz), **kw)

    @property
    def p0(self):
        return self.mode_populations[0]


@dataclass(frozen=True)
class DetectorSpec:
    efficiency: float = 1.0
    dark_rate: float = 0.0
    jitter_sigma: float = 0.0
    dead_time: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise DomainError("detector efficiency must lie in [0, 1]")
        if self.dark_rate < 0 or self.jitter_sigma < 0 or self.dead_time < 0:
            raise DomainError("dark rate, jitter and dead time must be non-negative")


@dataclass(frozen=True)
class SourceOperatingPoint:
    """Pump power and spectral brightness.

    ``brightness_per_mW`` is the conventional 2 pi R/B per mW of pump power,
    in pairs/(s Hz); a brightness quoted as 2.45e3 /(s MHz) is 2.45e-3 here.
    ``spdc_bandwidth`` (B, rad/s) is optional and only used for the
    narrowband check and by the pair simulator.
    """

    brightness_per_mW: float
    pump_power: float
    spdc_bandwidth: float | None = None

    def __post_init__(self):
        if self.brightness_per_mW < 0 or self.pump_power < 0:
            raise DomainError("brightness and pump power must be non-negative")
        if self.r_over_b >= LOW_GAIN_LIMIT:
            warnings.warn(f"R/B = {self.r_over_b:.3g} is not in the low-gain regime",
                          ApproximationWarning, stacklevel=3)

    @classmethod
    def from_per_mhz(cls, brightness_per_s_mhz, pump_power, **kw):
        return cls(brightness_per_mW=brightness_per_s_mhz * 1e-6, pump_power=pump_power, **kw)

    @property
    def r_over_b(self):
        return self.brightness_per_mW * self.pump_power / TWO_PI

    @property
    def pair_rate(self):
        """R in pairs/s; needs the SPDC bandwidth."""
        if self.spdc_bandwidth is None:
            raise DomainError("pair rate needs spdc_bandwidth")
        return self.r_over_b * self.spdc_bandwidth


def check_narrowband(op: SourceOperatingPoint, *filters, ratio=NARROWBAND_RATIO):
    """Warn when a filter is not much narrower than the SPDC bandwidth."""
    if op.spdc_bandwidth is None:
        return
    for f in filters:
        if f.gamma * ratio > op.spdc_bandwidth:
            warnings.warn(
                f"filter linewidth {f.gamma:.3g} rad/s is within {ratio:g}x of the SPDC "
                f"bandwidth {op.spdc_bandwidth:.3g} rad/s", ApproximationWarning, stacklevel=3)


def effective_efficiency(filt: FilterSpec, det: DetectorSpec):
    """Lumped collection-and-detection efficiency of one arm."""
    return filt.peak_transmission * det.efficiency


def pair_bandwidth(gamma_s, gamma_i):
    """Effective pair linewidth Gs Gi / (Gs + Gi)."""
    return gamma_s * gamma_i / (gamma_s + gamma_i)


# -- envelopes ---------------------------------------------------------------

def unfiltered_envelopes(R, B, tau):
    """Auto and cross envelopes of the unfiltered low-gain SPDC field."""
    if not (R > 0 and B > 0):
        raise DomainError("R and B must be positive")
    x = np.abs(np.asarray(tau, dtype=float)) * B
    auto = np.where(x <= 1.0, R * (1.0 - x), 0.0)
    cross = np.where(x <= 0.5, math.sqrt(R * B), 0.0)
    return auto, cross


def filtered_auto(op: SourceOperatingPoint, filt: FilterSpec, tau):
    """Auto-correlation envelope behind one filter: W e^{-G|tau|/2}."""
    check_narrowband(op, filt)
    tau = np.asarray(tau, dtype=float)
    return 0.25 * op.r_over_b * filt.gamma * np.exp(-0.5 * filt.gamma * np.abs(tau))


def filtered_cross(op: SourceOperatingPoint, filter_s: FilterSpec, filter_i: FilterSpec, tau):
    """Cross-correlation envelope; tau = t_i - t_s."""
    check_narrowband(op, filter_s, filter_i)
    gs, gi = filter_s.gamma, filter_i.gamma
    tau = np.asarray(tau, dtype=float)
    amp = 0.5 * math.sqrt(op.r_over_b) * pair_bandwidth(gs, gi)
    return amp * np.where(tau < 0, np.exp(0.5 * gs * np.minimum(tau, 0.0)),
                          np.exp(-0.5 * gi * np.maximum(tau, 0.0)))


def fluxes(op, filter_s, filter_i, det_s, det_i):
    """Detected signal, idler and pair rates (W_s, W_i, W_2) in 1/s.

    Spurious filter modes raise the singles flux by 1/p0 but never add
    pairs; dark counts add to the singles only.
    """
    eta_s = effective_efficiency(filter_s, det_s)
    eta_i = effective_efficiency(filter_i, det_i)
    rb = op.r_over_b
    gs, gi = filter_s.gamma, filter_i.gamma
    w_s = 0.25 * eta_s / filter_s.p0 * rb * gs + det_s.dark_rate
    w_i = 0.25 * eta_i / filter_i.p0 * rb * gi + det_i.dark_rate
    w_2 = 0.25 * eta_s * eta_i * rb * pair_bandwidth(gs, gi)
    return w_s, w_i, w_2


# -- temporal shapes -----------------------------------------------------------

def f_shape(gamma_j, gamma_k, tau):
    """Jitter-free two-sided exponential: e^{Gj tau} (tau<0), e^{-Gk tau} (tau>=0)."""
    tau = np.asarray(tau, dtype=float)
    return np.where(tau < 0, np.exp(gamma_j * np.minimum(tau, 0.0)),
                    np.exp(-gamma_k * np.maximum(tau, 0.0)))


def _half_branch(gamma, sigma, t):
    # 0.5 * exp(G (G s^2/2 + t)) * erfc((G s^2 + t)/(sqrt2 s)), overflow-safe
    z = (gamma * sigma**2 + t) / (math.sqrt(2.0) * sigma)
    pos = z >= 0
    out = np.empty_like(z)
    # exp(G^2 s^2/2 + G t) = exp(z^2 - t^2/(2 s^2))
    out[pos] = special.erfcx(z[pos]) * np.exp(-t[pos] ** 2 / (2.0 * sigma**2))
    out[~pos] = np.exp(gamma * (0.5 * gamma * sigma**2 + t[~pos])) * special.erfc(z[~pos])
    return 0.5 * out


def jitter_factor(gamma_j, gamma_k, sigma, tau):
    """Two-sided exponential convolved with a Gaussian of width `sigma`."""
    if sigma < 0:
        raise DomainError("jitter sigma must be non-negative")
    tau_arr = np.asarray(tau, dtype=float)
    if sigma * max(gamma_j, gamma_k) < 1e-12:
        # below this the Gaussian is a delta function to double precision
        return f_shape(gamma_j, gamma_k, tau_arr) if tau_arr.ndim else float(f_shape(gamma_j, gamma_k, tau_arr))
    t = np.atleast_1d(tau_arr)
    out = _half_branch(gamma_j, sigma, t) + _half_branch(gamma_k, sigma, -t)
    return out.reshape(tau_arr.shape) if tau_arr.ndim else float(out[0])


def combined_jitter(det_a: DetectorSpec, det_b: DetectorSpec):
    """Width of the delay jitter between two independently jittered detectors."""
    return math.hypot(det_a.jitter_sigma, det_b.jitter_sigma)


def g2_cross(op, filter_s, filter_i, det_s, det_i, tau, sigma=None):
    """Normalized signal-idler cross-correlation including dark counts and p0.

    `sigma` overrides the combined detector jitter.
    """
    check_narrowband(op, filter_s, filter_i)
    if sigma is None:
        sigma = combined_jitter(det_s, det_i)
    w_s, w_i, _ = fluxes(op, filter_s, filter_i, det_s, det_i)
    eta_si = effective_efficiency(filter_s, det_s) * effective_efficiency(filter_i, det_i)
    gs, gi = filter_s.gamma, filter_i.gamma
    coinc = 0.25 * eta_si * op.r_over_b * pair_bandwidth(gs, gi) ** 2
    if coinc == 0:
        return np.ones_like(np.asarray(tau, dtype=float)) + 0.0
    return 1.0 + coinc / (w_s * w_i) * jitter_factor(gs, gi, sigma, tau)


def g2_cross_ideal(r_over_b, gamma_s, gamma_i, sigma, tau):
    """Cross-correlation without dark counts or spurious modes."""
    amp = 4.0 / r_over_b * gamma_s * gamma_i / (gamma_s + gamma_i) ** 2
    return 1.0 + amp * jitter_factor(gamma_s, gamma_i, sigma, tau)


def g2_auto(K, gamma, sigma, tau):
    """Auto-correlation 1 + f~_jj(tau)/K of a K-mode thermal field."""
    if K < 1:
        raise DomainError("Schmidt number K must be >= 1")
    return 1.0 + jitter_factor(gamma, gamma, sigma, tau) / K


def bin_average(func, centers, width, nodes=16):
    """Average of ``func(tau)`` over bins [c - w/2, c + w/2] (Gauss-Legendre).

    Bins straddling the cusp at tau = 0 are split there so the quadrature
    stays exact to high order for the piecewise-smooth shapes used here.
    """
    x, w = np.polynomial.legendre.leggauss(nodes)
    centers = np.asarray(centers, dtype=float)
    lo, hi = centers - width / 2, centers + width / 2
    out = np.zeros_like(centers)
    for a, b in ((lo, np.minimum(hi, np.maximum(lo, 0.0))), (np.maximum(lo, np.minimum(hi, 0.0)), hi)):
        half = (b - a) / 2
        mid = (a + b) / 2
        vals = func(mid[:, None] + half[:, None] * x[None, :])
        out += (vals * w[None, :]).sum(axis=1) * half
    return out / width


# -- multimode -----------------------------------------------------------------

def schmidt_number(populations: Sequence[float]):
    """K = 1 / sum p_n^2 for normalized mode populations."""
    p = np.asarray(populations, dtype=float)
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise DomainError("populations must be non-negative and sum to 1")
    return 1.0 / float(np.sum(p * p))


def worst_case_p0(K):
    """Target-mode population if only two modes are occupied (root >= 1/2)."""
    if K < 1:
        raise DomainError("K must be >= 1")
    if K > 2:
        raise NoSolutionError(f"K = {K} cannot be produced by two modes (K <= 2)")
    return 0.5 * (1.0 + math.sqrt(max(2.0 / K - 1.0, 0.0)))


def cauchy_schwarz_ratio(g2si0, g2ss0, g2ii0):
    """g_si^2 / (g_ss g_ii); values above 1 witness non-classical correlations."""
    if min(g2si0, g2ss0, g2ii0) < 0:
        raise DomainError("correlation values must be non-negative")
    denom = g2ss0 * g2ii0
    if denom == 0:
        raise DomainError("auto-correlation product is zero")
    return g2si0**2 / denom


def window_fraction(gamma_s, gamma_i, sigma, window, offset=0.0):
    """Fraction of the pair peak inside ``|tau - offset| <= window/2``."""
    if window <= 0:
        return 0.0
    total = 1.0 / gamma_s + 1.0 / gamma_i
    lo, hi = offset - window / 2, offset + window / 2
    pts = [p for p in (0.0,) if lo < p < hi]
    val, _ = quad(lambda t: jitter_factor(gamma_s, gamma_i, sigma, t), lo, hi,
                  points=pts or None, limit=200, epsabs=0, epsrel=1e-10)
    return min(val / total, 1.0)

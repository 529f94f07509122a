"""Simultaneous fit of singles, pair rate and peak g2 versus pump power."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from ..correlation_model import bin_average, jitter_factor, pair_bandwidth, window_fraction
from ..errors import DegenerateDesignError, DomainError
from .lm import FitResult, levenberg_marquardt

PARAMS = ("brightness_per_s_MHz", "eta_s", "eta_i")
COLUMNS = ("pump_power_mW", "W_s", "W_s_err", "W_i", "W_i_err", "W_2", "W_2_err",
           "g2si0", "g2si0_err")


@dataclass
class PowerSweepDataset:
    """One row per pump power; rates in 1/s, g2 columns may be nan."""

    pump_power: np.ndarray
    w_s: np.ndarray
    w_s_err: np.ndarray
    w_i: np.ndarray
    w_i_err: np.ndarray
    w_2: np.ndarray
    w_2_err: np.ndarray
    g2si0: np.ndarray
    g2si0_err: np.ndarray

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any(self.pump_power <= 0):
            raise DomainError("pump powers must be positive")
        for e in (self.w_s_err, self.w_i_err, self.w_2_err):
            if np.any(~(e > 0)):
                raise DomainError("rate standard errors must be positive")
        g2_ok = np.isfinite(self.g2si0)
        if np.any(~(self.g2si0_err[g2_ok] > 0)):
            raise DomainError("g2 standard errors must be positive")

    def __len__(self):
        return self.pump_power.size

    def sorted(self) -> "PowerSweepDataset":
        """Rows in a canonical order: by power, then by the remaining columns."""
        cols = [getattr(self, f) for f in self.__dataclass_fields__]
        order = np.lexsort(cols[::-1])
        return PowerSweepDataset(*(c[order] for c in cols))

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
        if not rows:
            raise DomainError(f"{path}: no data rows")
        missing = [c for c in COLUMNS if c not in rows[0]]
        if missing:
            raise DomainError(f"{path}: missing columns {missing}")
        return cls(*(np.array([float(r[c]) if r[c] != "" else np.nan for r in rows]) for c in COLUMNS))

    def to_csv(self, path, header_lines=()):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for row in zip(*(getattr(self, f) for f in self.__dataclass_fields__)):
                w.writerow([f"{v:.10g}" for v in row])


@dataclass(frozen=True)
class CharacterizationConstants:
    """Quantities held fixed in the fit (rad/s, 1/s, s).

    `window` is the coincidence window used for W_2 (None: the whole peak);
    `g2_bin` is the histogram bin over which the peak g2 is read out.
    """

    gamma_s: float
    gamma_i: float
    dark_s: float = 0.0
    dark_i: float = 0.0
    p0: float = 1.0
    sigma: float = 0.0
    window: float | None = None
    window_offset: float = 0.0
    g2_bin: float | None = None

    def capture(self):
        if self.window is None:
            return 1.0
        return window_fraction(self.gamma_s, self.gamma_i, self.sigma, self.window, self.window_offset)

    def peak_shape(self):
        if self.g2_bin is None:
            return float(jitter_factor(self.gamma_s, self.gamma_i, self.sigma, 0.0))
        f = lambda t: jitter_factor(self.gamma_s, self.gamma_i, self.sigma, t)
        return float(bin_average(f, np.array([0.0]), self.g2_bin)[0])


def sweep_model(params, power, const: CharacterizationConstants, capture=None, peak=None):
    """Predicted (W_s, W_i, W_2, g2si0) arrays for brightness in /(s MHz)."""
    b, eta_s, eta_i = params
    capture = const.capture() if capture is None else capture
    peak = const.peak_shape() if peak is None else peak
    rb = b * 1e-6 * np.asarray(power, dtype=float) / (2 * math.pi)
    gs, gi = const.gamma_s, const.gamma_i
    w_s = 0.25 * eta_s / const.p0 * rb * gs + const.dark_s
    w_i = 0.25 * eta_i * rb * gi + const.dark_i
    w_2_all = 0.25 * eta_s * eta_i * rb * pair_bandwidth(gs, gi)
    g2 = 1.0 + w_2_all * pair_bandwidth(gs, gi) * peak / (w_s * w_i)
    return w_s, w_i, w_2_all * capture, g2


def initial_guess(data: PowerSweepDataset, const: CharacterizationConstants, capture=1.0):
    gs, gi = const.gamma_s, const.gamma_i
    w2 = data.w_2.sum() / capture
    eta_s = w2 / max((data.w_i - const.dark_i).sum(), 1e-300) * (gs + gi) / gs
    eta_i = w2 / max((data.w_s - const.dark_s).sum(), 1e-300) * (gs + gi) / (const.p0 * gi)
    k = int(np.argmax(data.pump_power))
    rb = 4 * (data.w_i[k] - const.dark_i) / (eta_i * gi)
    b = rb * 2 * math.pi / data.pump_power[k] * 1e6
    return np.array([b, min(max(eta_s, 1e-6), 1.0), min(max(eta_i, 1e-6), 1.0)])


def fit_characterization(data: PowerSweepDataset, const: CharacterizationConstants,
                         use_g2=True, x0=None) -> FitResult:
    """Weighted fit of brightness (pairs/(s MHz) per mW), eta_s and eta_i."""
    if np.unique(data.pump_power).size < 3:
        raise DegenerateDesignError("at least three distinct pump powers are needed")
    data = data.sorted()
    capture, peak = const.capture(), const.peak_shape()
    g2_ok = np.isfinite(data.g2si0) if use_g2 else np.zeros(len(data), bool)

    def residuals(p):
        w_s, w_i, w_2, g2 = sweep_model(p, data.pump_power, const, capture, peak)
        return np.concatenate([(data.w_s - w_s) / data.w_s_err,
                               (data.w_i - w_i) / data.w_i_err,
                               (data.w_2 - w_2) / data.w_2_err,
                               (data.g2si0[g2_ok] - g2[g2_ok]) / data.g2si0_err[g2_ok]])

    if x0 is None:
        x0 = initial_guess(data, const, capture)
    return levenberg_marquardt(residuals, x0, PARAMS, lower=[0.0, 0.0, 0.0],
                               upper=[np.inf, 1.0, 1.0], scale=np.abs(x0) + 1e-12)


def synthetic_power_sweep(params, const: CharacterizationConstants, powers=None,
                          acquisition=60.0, seed=None, noiseless=False) -> PowerSweepDataset:
    """Power sweep drawn from the model with Poisson counting noise.

    Singles and coincidences are counted for `acquisition` seconds per point;
    W_2 is the accidental-subtracted rate in ``const.window`` and the peak g2
    is read from one bin of width ``const.g2_bin``.
    """
    if powers is None:
        powers = np.geomspace(0.01, 3.0, 10)
    powers = np.asarray(powers, dtype=float)
    if const.window is None or const.g2_bin is None:
        raise DomainError("synthetic data need a coincidence window and a g2 bin width")
    rng = np.random.default_rng(seed)
    T = acquisition
    w_s, w_i, w_2, g2 = sweep_model(params, powers, const)
    acc_window = w_s * w_i * const.window
    peak_mean = g2 * w_s * w_i * const.g2_bin * T
    if noiseless:
        n_s, n_i = w_s * T, w_i * T
        n_c = (w_2 + acc_window) * T
        n_peak = peak_mean
    else:
        n_s, n_i = rng.poisson(w_s * T), rng.poisson(w_i * T)
        n_c = rng.poisson((w_2 + acc_window) * T)
        n_peak = rng.poisson(peak_mean)
    r_s, r_i = n_s / T, n_i / T
    w2_hat = n_c / T - r_s * r_i * const.window
    norm = r_s * r_i * T * const.g2_bin
    return PowerSweepDataset(
        powers, r_s, np.sqrt(np.maximum(n_s, 1)) / T, r_i, np.sqrt(np.maximum(n_i, 1)) / T,
        w2_hat, np.sqrt(np.maximum(n_c, 1)) / T,
        n_peak / norm, np.sqrt(np.maximum(n_peak, 1)) / norm)

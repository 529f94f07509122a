"""Coincidence histograms and g2 estimates from sorted timestamp streams.

Delays are ``tau = t_b - t_a`` in integer picoseconds; with channel a the
signal and b the idler this matches the model's convention. Bin ``n``
covers ``[n*w - w/2, n*w + w/2)``, so a delay exactly on an edge lands in
the upper bin. All bin arithmetic is done on doubled integers so that odd
bin widths stay exact.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .errors import DomainError, StreamError
from .streams import TimestampStream


@numba.njit(nogil=True, cache=True)
def _sweep(a, b, a_lo, a_hi, half_span2, bin2, n_bins, skip_self):
    """Histogram of b - a for a[a_lo:a_hi] against all of b.

    ``half_span2`` is 2*range + width, so delays with
    -half_span2 <= 2d < half_span2 are counted.
    """
    hist = np.zeros(n_bins, dtype=np.int64)
    nb = b.size
    lo = 0
    # first b that can pair with a[a_lo]
    if a_hi > a_lo:
        t0 = a[a_lo]
        left, right = 0, nb
        while left < right:
            mid = (left + right) // 2
            if 2 * (b[mid] - t0) < -half_span2:
                left = mid + 1
            else:
                right = mid
        lo = left
    for i in range(a_lo, a_hi):
        t = a[i]
        while lo < nb and 2 * (b[lo] - t) < -half_span2:
            lo += 1
        j = lo
        while j < nb:
            d2 = 2 * (b[j] - t)
            if d2 >= half_span2:
                break
            if not (skip_self and j == i):
                hist[(d2 + half_span2) // bin2] += 1
            j += 1
    return hist


@numba.njit(nogil=True, cache=True)
def _window_count(a, b, offset, window):
    # pairs with -window <= 2 (b - a - offset) <= window
    n = 0
    lo = 0
    nb = b.size
    for i in range(a.size):
        t = a[i] + offset
        while lo < nb and 2 * (b[lo] - t) < -window:
            lo += 1
        j = lo
        while j < nb and 2 * (b[j] - t) <= window:
            n += 1
            j += 1
    return n


@dataclass
class CorrelationHistogram:
    bin_width_ps: int
    range_ps: int
    counts: np.ndarray
    duration: float
    rate_a: float
    rate_b: float
    n_a: int = 0
    n_b: int = 0
    auto: bool = False
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.bin_width_ps <= 0:
            raise DomainError("bin width must be positive")
        self.counts = np.asarray(self.counts, dtype=np.int64)

    @property
    def tau_ps(self):
        m = self.range_ps // self.bin_width_ps
        return np.arange(-m, m + 1, dtype=np.int64) * self.bin_width_ps

    @property
    def tau(self):
        """Bin centres in seconds."""
        return self.tau_ps * 1e-12

    @property
    def accidentals_per_bin(self):
        return self.rate_a * self.rate_b * self.duration * self.bin_width_ps * 1e-12

    def reversed(self) -> "CorrelationHistogram":
        return CorrelationHistogram(self.bin_width_ps, self.range_ps, self.counts[::-1].copy(),
                                    self.duration, self.rate_b, self.rate_a, self.n_b, self.n_a,
                                    self.auto, dict(self.metadata))

    def __add__(self, other):
        if (other.bin_width_ps, other.range_ps) != (self.bin_width_ps, self.range_ps):
            raise DomainError("histograms have different binning")
        T = self.duration + other.duration
        na, nb = self.n_a + other.n_a, self.n_b + other.n_b
        return CorrelationHistogram(self.bin_width_ps, self.range_ps, self.counts + other.counts,
                                    T, na / T, nb / T, na, nb, self.auto, dict(self.metadata))

    def to_csv(self, path, header_lines=()):
        """Write tau_ps, counts, g2, g2_err; g2 columns are nan without singles."""
        try:
            g2, err = g2_estimate(self)
        except DomainError:
            g2 = err = np.full(self.counts.shape, np.nan)
        with open(path, "w", encoding="utf-8") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            fh.write("tau_ps,counts,g2,g2_err\n")
            for row in zip(self.tau_ps, self.counts, g2, err):
                fh.write(f"{row[0]},{row[1]},{row[2]:.10g},{row[3]:.10g}\n")

    def summary(self):
        return {"bin_width_ps": self.bin_width_ps, "range_ps": self.range_ps,
                "duration_s": self.duration, "rate_a": self.rate_a, "rate_b": self.rate_b,
                "n_a": self.n_a, "n_b": self.n_b, "auto": self.auto,
                "total_counts": int(self.counts.sum()), **self.metadata}

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _check_inputs(a: TimestampStream, b: TimestampStream):
    for s in (a, b):
        if s.timestamps.size and np.any(np.diff(s.timestamps) < 0):
            raise StreamError(f"channel {s.channel}: timestamps are not sorted")
    if a.duration_ps != b.duration_ps:
        raise StreamError(
            f"streams cover different durations ({a.duration_ps} ps vs {b.duration_ps} ps)")


def coincidence_histogram(a: TimestampStream, b: TimestampStream, bin_width_ps: int,
                          range_ps: int, threads: int = 1) -> CorrelationHistogram:
    """Histogram of t_b - t_a over [-range - w/2, range + w/2).

    Passing the same stream object twice gives the auto-correlation with
    each event's pairing with itself left out. With ``threads > 1`` the
    events of `a` are split into contiguous blocks; each block owns the
    pairs that start in it, and partial histograms are summed.
    """
    bin_width_ps, range_ps = int(bin_width_ps), int(range_ps)
    if bin_width_ps <= 0 or range_ps < 0:
        raise DomainError("bin width must be positive and range non-negative")
    if range_ps % bin_width_ps:
        raise DomainError(f"range {range_ps} ps is not a multiple of the bin width {bin_width_ps} ps")
    _check_inputs(a, b)
    auto = a is b
    n_bins = 2 * (range_ps // bin_width_ps) + 1
    ta, tb = a.timestamps, b.timestamps
    span2 = 2 * range_ps + bin_width_ps
    args = (span2, 2 * bin_width_ps, n_bins, auto)
    if threads > 1 and ta.size > 10_000:
        edges = np.linspace(0, ta.size, threads + 1).astype(np.int64)
        with ThreadPoolExecutor(threads) as pool:
            parts = pool.map(lambda k: _sweep(ta, tb, edges[k], edges[k + 1], *args), range(threads))
            counts = sum(parts)
    else:
        counts = _sweep(ta, tb, 0, ta.size, *args)
    T = a.duration
    return CorrelationHistogram(bin_width_ps, range_ps, counts, T, len(a) / T, len(b) / T,
                                len(a), len(b), auto)


def g2_estimate(h: CorrelationHistogram):
    """Normalized g2 per bin and its Poisson standard error."""
    if h.duration <= 0 or h.rate_a <= 0 or h.rate_b <= 0:
        raise DomainError("g2 needs positive singles rates and duration")
    norm = h.accidentals_per_bin
    return h.counts / norm, np.sqrt(h.counts) / norm


def windowed_pair_rate(a: TimestampStream, b: TimestampStream, window_ps, offset_ps=0):
    """Coincidence rate within ``|t_b - t_a - offset| <= window/2``.

    Returns (raw rate, accidental-subtracted rate, standard error) in 1/s.
    Accidentals are ``r_a r_b window`` from full-duration singles rates.
    """
    if not window_ps > 0:
        raise DomainError("coincidence window must be positive")
    _check_inputs(a, b)
    T = a.duration
    n = _window_count(a.timestamps, b.timestamps, np.int64(offset_ps), np.int64(window_ps))
    if a is b:
        n -= len(a) if abs(offset_ps) * 2 <= window_ps else 0
    raw = n / T
    accidental = a.rate * b.rate * window_ps * 1e-12
    return raw, raw - accidental, math.sqrt(n) / T


def read_histogram(csv_path) -> CorrelationHistogram:
    """Load a histogram written by :meth:`CorrelationHistogram.to_csv` plus its JSON sidecar."""
    csv_path = Path(csv_path)
    side = json.loads(csv_path.with_suffix(".json").read_text(encoding="utf-8"))
    rows = [ln for ln in csv_path.read_text(encoding="utf-8").splitlines()
            if ln and not ln.startswith("#")][1:]
    counts = np.array([int(r.split(",")[1]) for r in rows], dtype=np.int64)
    meta = {k: v for k, v in side.items() if k not in (
        "bin_width_ps", "range_ps", "duration_s", "rate_a", "rate_b", "n_a", "n_b", "auto", "total_counts")}
    return CorrelationHistogram(side["bin_width_ps"], side["range_ps"], counts, side["duration_s"],
                                side["rate_a"], side["rate_b"], side["n_a"], side["n_b"],
                                side["auto"], meta)

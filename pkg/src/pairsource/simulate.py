"""Monte Carlo sources of detector timestamp streams.

Two independent oracles are provided because no single classical point
process reproduces both the strong signal-idler correlation of a pair
source (g2 far above 2) and the thermal bunching of each arm:

* :func:`simulate_pair_stream` draws pairs as a Poisson process and sends
  each photon through its filter with the joint passage probabilities of
  the Lorentzian model. Cross-correlations, singles and pair rates match
  the closed forms; the auto-correlation of each arm is flat.
* :func:`simulate_thermal_stream` samples a multimode complex Gaussian
  field and detects it as an intensity-modulated Poisson process, giving
  thermal bunching and mode-beating in the auto-correlation.

Times are floats in seconds internally and int64 picoseconds on output.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np
from scipy.signal import lfilter

from .correlation_model import (DetectorSpec, FilterSpec, SourceOperatingPoint,
                                check_narrowband, effective_efficiency)
from .errors import ConfigError, DomainError
from .streams import TimestampStream

MAX_EVENTS_PER_SHARD = 4_000_000
MAX_THERMAL_EVENTS = 200_000_000


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.PCG64(seed))


def _to_ps(t_seconds):
    return np.rint(np.asarray(t_seconds) * 1e12).astype(np.int64)


# -- detector ------------------------------------------------------------------

@numba.njit(cache=True)
def _dead_time_mask(t, dead):
    keep = np.zeros(t.size, dtype=np.bool_)
    last = np.int64(0)
    first = True
    for k in range(t.size):
        if first or t[k] - last >= dead:
            keep[k] = True
            last = t[k]
            first = False
    return keep


def _detect(times_s, tags, det: DetectorSpec, rng, lo, hi, efficiency=None):
    """Thinning, dark counts on [lo, hi) and jitter; returns float seconds."""
    eta = det.efficiency if efficiency is None else efficiency
    keep = rng.random(times_s.size) < eta
    times_s, tags = times_s[keep], tags[keep]
    n_dark = rng.poisson(det.dark_rate * (hi - lo))
    dark = rng.uniform(lo, hi, n_dark)
    times_s = np.concatenate([times_s, dark])
    tags = np.concatenate([tags, np.full(n_dark, -1, dtype=np.int64)])
    if det.jitter_sigma > 0:
        times_s = times_s + rng.normal(0.0, det.jitter_sigma, times_s.size)
    return times_s, tags


def _finish(t_ps, tags, det: DetectorSpec, duration_ps):
    inside = (t_ps >= 0) & (t_ps <= duration_ps)
    t_ps, tags = t_ps[inside], tags[inside]
    order = np.argsort(t_ps, kind="stable")
    t_ps, tags = t_ps[order], tags[order]
    if det.dead_time > 0 and t_ps.size:
        keep = _dead_time_mask(t_ps, np.int64(round(det.dead_time * 1e12)))
        t_ps, tags = t_ps[keep], tags[keep]
    return t_ps, tags


def apply_detector(stream: TimestampStream, det: DetectorSpec, seed) -> TimestampStream:
    """Pass an ideal photon stream through an imperfect detector.

    Events survive with probability ``det.efficiency``, Poisson dark counts
    are added, every event is displaced by Gaussian jitter, events leaving
    [0, duration] are dropped, and a non-paralyzable dead time is applied
    in time order.
    """
    rng = _rng(seed)
    tags = stream.pair_ids if stream.pair_ids is not None else np.full(len(stream), -1, np.int64)
    t, tags = _detect(stream.timestamps * 1e-12, tags, det, rng, 0.0, stream.duration)
    t_ps, tags = _finish(_to_ps(t), tags, det, stream.duration_ps)
    return TimestampStream(t_ps, stream.duration_ps, stream.channel, dict(stream.metadata),
                           tags if stream.pair_ids is not None else None)


# -- pair oracle -----------------------------------------------------------------

@dataclass(frozen=True)
class PairProcessConfig:
    op_point: SourceOperatingPoint
    filter_s: FilterSpec
    filter_i: FilterSpec
    det_s: DetectorSpec
    det_i: DetectorSpec
    duration: float
    seed: int = 0
    keep_pair_ids: bool = False
    shards: int = 1
    threads: int = 1

    def __post_init__(self):
        if not self.duration > 0:
            raise ConfigError("duration must be positive")
        if self.op_point.spdc_bandwidth is None:
            raise ConfigError("the pair simulator needs the SPDC bandwidth B")
        if self.op_point.r_over_b >= 0.1:
            raise ConfigError(f"R/B = {self.op_point.r_over_b:.3g} is outside the low-gain regime")
        if self.shards < 1 or self.threads < 1:
            raise ConfigError("shards and threads must be >= 1")
        check_narrowband(self.op_point, self.filter_s, self.filter_i)

    def category_probabilities(self):
        """Per-pair probabilities of (both, signal only, idler only,
        signal via spurious mode, idler via spurious mode)."""
        B = self.op_point.spdc_bandwidth
        gs, gi = self.filter_s.gamma, self.filter_i.gamma
        ps, pi = gs / (4 * B), gi / (4 * B)
        joint = gs * gi / (4 * B * (gs + gi))
        probs = np.array([joint, ps - joint, pi - joint,
                          ps * (1 / self.filter_s.p0 - 1), pi * (1 / self.filter_i.p0 - 1)])
        if np.any(probs < 0) or probs.sum() > 1:
            raise ConfigError(
                f"filter linewidths ({gs:.3g}, {gi:.3g} rad/s) are too wide for B = {B:.3g} rad/s: "
                "passage probabilities do not form a distribution")
        return probs

    def config_hash(self):
        from .config import config_hash
        return config_hash(_describe(self))


def _describe(cfg: PairProcessConfig):
    return {
        "brightness_per_mW": cfg.op_point.brightness_per_mW, "pump_power": cfg.op_point.pump_power,
        "spdc_bandwidth": cfg.op_point.spdc_bandwidth,
        "filter_s": [cfg.filter_s.gamma, cfg.filter_s.peak_transmission, list(cfg.filter_s.mode_populations)],
        "filter_i": [cfg.filter_i.gamma, cfg.filter_i.peak_transmission, list(cfg.filter_i.mode_populations)],
        "det_s": [cfg.det_s.efficiency, cfg.det_s.dark_rate, cfg.det_s.jitter_sigma, cfg.det_s.dead_time],
        "det_i": [cfg.det_i.efficiency, cfg.det_i.dark_rate, cfg.det_i.jitter_sigma, cfg.det_i.dead_time],
        "duration": cfg.duration, "seed": cfg.seed,
    }


def _pair_shard(cfg: PairProcessConfig, probs, lo, hi, guard, seeds, id_base):
    """Photons from pairs created in [lo - guard, hi) ([lo, hi) for later shards)."""
    gen, det_s_seed, det_i_seed = (_rng(s) for s in seeds)
    start = lo - guard
    rate = cfg.op_point.pair_rate
    n = gen.poisson(rate * (hi - start) * probs)
    n_both, n_s, n_i, n_ss, n_is = (int(k) for k in n)

    created = [np.sort(gen.uniform(start, hi, k)) for k in n]
    ids = np.arange(n_both, dtype=np.int64) + id_base
    gs, gi = cfg.filter_s.gamma, cfg.filter_i.gamma

    sig_t = np.concatenate([created[0] + gen.exponential(1 / gs, n_both),
                            created[1] + gen.exponential(1 / gs, n_s),
                            created[3] + gen.exponential(1 / gs, n_ss)])
    sig_id = np.concatenate([ids, np.full(n_s + n_ss, -1, dtype=np.int64)])
    idl_t = np.concatenate([created[0] + gen.exponential(1 / gi, n_both),
                            created[2] + gen.exponential(1 / gi, n_i),
                            created[4] + gen.exponential(1 / gi, n_is)])
    idl_id = np.concatenate([ids, np.full(n_i + n_is, -1, dtype=np.int64)])

    eta_s = effective_efficiency(cfg.filter_s, cfg.det_s)
    eta_i = effective_efficiency(cfg.filter_i, cfg.det_i)
    s = _detect(sig_t, sig_id, cfg.det_s, det_s_seed, lo, hi, eta_s)
    i = _detect(idl_t, idl_id, cfg.det_i, det_i_seed, lo, hi, eta_i)
    return s, i, n_both


def simulate_pair_stream(cfg: PairProcessConfig):
    """Signal and idler streams (channels 0 and 1) of a filtered pair source.

    The run is split by pair-creation time into shards; each shard has its
    own seed derived from the master seed, so results depend on the seed
    and the shard count but not on the number of threads. Pairs created
    up to ``10 / min(Gamma)`` before t = 0 are included so the stream is
    stationary from the start.
    """
    probs = cfg.category_probabilities()
    gamma_min = min(cfg.filter_s.gamma, cfg.filter_i.gamma)
    guard = 10.0 / gamma_min + 10.0 * max(cfg.det_s.jitter_sigma, cfg.det_i.jitter_sigma)
    expected = cfg.op_point.pair_rate * (cfg.duration + guard) * probs.sum()
    n_shards = max(cfg.shards, math.ceil(expected / MAX_EVENTS_PER_SHARD))
    edges = np.linspace(0.0, cfg.duration, n_shards + 1)
    children = np.random.SeedSequence(cfg.seed).spawn(n_shards)
    # pair ids only need to be unique; spread them by shard
    id_stride = 1 << 40

    def run(k):
        seeds = children[k].spawn(3)
        g = guard if k == 0 else 0.0
        return _pair_shard(cfg, probs, edges[k], edges[k + 1], g, seeds, k * id_stride)

    if cfg.threads > 1 and n_shards > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            parts = list(pool.map(run, range(n_shards)))
    else:
        parts = [run(k) for k in range(n_shards)]

    duration_ps = int(round(cfg.duration * 1e12))
    meta = {"seed": cfg.seed, "config_hash": cfg.config_hash(), "shards": n_shards,
            "pairs_both_passed": int(sum(p[2] for p in parts))}
    out = []
    for ch, det in ((0, cfg.det_s), (1, cfg.det_i)):
        t = _to_ps(np.concatenate([p[ch][0] for p in parts]))
        tags = np.concatenate([p[ch][1] for p in parts])
        t, tags = _finish(t, tags, det, duration_ps)
        out.append(TimestampStream(t, duration_ps, ch, dict(meta),
                                   tags if cfg.keep_pair_ids else None))
    return out[0], out[1]


def pair_delay_cdf(x, gamma_s, gamma_i):
    """CDF of t_idler - t_signal for two photons of the same pair."""
    x = np.asarray(x, dtype=float)
    tot = gamma_s + gamma_i
    return np.where(x < 0, gamma_i / tot * np.exp(gamma_s * np.minimum(x, 0.0)),
                    1.0 - gamma_s / tot * np.exp(-gamma_i * np.maximum(x, 0.0)))


def same_pair_delays(a: TimestampStream, b: TimestampStream):
    """Delays t_b - t_a (ps) of events that carry the same pair id."""
    if a.pair_ids is None or b.pair_ids is None:
        raise DomainError("streams carry no pair ids")
    ma, mb = a.pair_ids >= 0, b.pair_ids >= 0
    common, ia, ib = np.intersect1d(a.pair_ids[ma], b.pair_ids[mb], return_indices=True)
    return b.timestamps[mb][ib] - a.timestamps[ma][ia]


# -- thermal oracle ---------------------------------------------------------------

def thermal_time_step(gamma, detunings_hz):
    """Default step: 0.05 of the field decay time and of the fastest beat period."""
    nu_max = max((abs(v) for v in detunings_hz), default=0.0)
    dt = 0.05 / gamma
    if nu_max > 0:
        dt = min(dt, 0.05 / nu_max)
    return dt


def simulate_thermal_stream(gamma, flux, mode_populations, detunings_hz, det: DetectorSpec,
                            seed, duration, dt=None, channel=0, chunk=1 << 21):
    """Detections of a multimode thermal field with mean detected photon flux `flux`.

    Each mode is a stationary complex Ornstein-Uhlenbeck amplitude with
    amplitude correlation exp(-gamma |tau| / 2), weighted by sqrt(p_n) and
    shifted in frequency by ``detunings_hz[n]``. The intensity is held
    constant over each step of length `dt`. ``det.efficiency`` thins the
    detections in addition to `flux`.
    """
    pops = np.asarray(mode_populations, dtype=float)
    nus = np.asarray(detunings_hz, dtype=float)
    if pops.shape != nus.shape:
        raise DomainError("one detuning per mode population is required")
    if np.any(pops < 0) or abs(pops.sum() - 1) > 1e-9:
        raise DomainError("mode populations must be non-negative and sum to 1")
    if not (gamma > 0 and duration > 0 and flux >= 0):
        raise DomainError("gamma and duration must be positive, flux non-negative")
    if dt is None:
        dt = thermal_time_step(gamma, nus)
    nu_max = float(np.max(np.abs(nus))) if nus.size else 0.0
    if gamma * dt >= 0.1 or nu_max * dt >= 0.1:
        raise DomainError(f"time step {dt:.3g} s too coarse (need gamma dt < 0.1 and nu dt < 0.1)")
    if flux * duration > MAX_THERMAL_EVENTS:
        raise DomainError(
            f"{flux * duration:.3g} expected events exceed the memory bound of {MAX_THERMAL_EVENTS:g}")

    ss = np.random.SeedSequence(seed)
    field_seed, det_seed = ss.spawn(2)
    rng = _rng(field_seed)
    n_steps = int(math.ceil(duration / dt))
    a = math.exp(-0.5 * gamma * dt)
    b = math.sqrt(1.0 - a * a)
    amp = np.sqrt(pops)
    state = (rng.normal(size=pops.size) + 1j * rng.normal(size=pops.size)) / math.sqrt(2)
    times = []
    for start in range(0, n_steps, chunk):
        m = min(chunk, n_steps - start)
        t = (start + np.arange(m)) * dt
        total = np.zeros(m, dtype=complex)
        for n in range(pops.size):
            xi = (rng.normal(size=m) + 1j * rng.normal(size=m)) / math.sqrt(2)
            e, _ = lfilter([b], [1.0, -a], xi, zi=[a * state[n]])
            state[n] = e[-1]
            if nus[n] != 0:
                e = e * np.exp(2j * math.pi * nus[n] * t)
            total += amp[n] * e
        intensity = total.real**2 + total.imag**2
        counts = rng.poisson(flux * dt * intensity)
        steps = np.repeat(np.arange(m), counts)
        times.append((start + steps + rng.random(steps.size)) * dt)
    t = np.concatenate(times) if times else np.empty(0)
    duration_ps = int(round(duration * 1e12))
    t = t[t <= duration]
    tags = np.full(t.size, -1, dtype=np.int64)
    rng_det = _rng(det_seed)
    t, tags = _detect(t, tags, det, rng_det, 0.0, duration)
    t_ps, _ = _finish(_to_ps(t), tags, det, duration_ps)
    meta = {"seed": seed if isinstance(seed, int) else None, "gamma": gamma, "flux": flux,
            "dt": dt, "mode_populations": pops.tolist(), "detunings_hz": nus.tolist()}
    return TimestampStream(t_ps, duration_ps, channel, meta)

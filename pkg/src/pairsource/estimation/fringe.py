"""Shared-phase sinusoidal fits of polarization-correlation fringes."""

from __future__ import annotations

import math

import numpy as np

from ..errors import DegenerateDesignError, DomainError
from .lm import FitResult, levenberg_marquardt

PERIOD = math.pi / 2


def fringe_model(theta, phase, offsets, amplitudes):
    """Counts offset_c + amplitude_c cos(4 theta + phase), one row per combination."""
    theta = np.asarray(theta, dtype=float)
    c = np.cos(4 * theta + phase)
    return np.asarray(offsets)[:, None] + np.asarray(amplitudes)[:, None] * c[None, :]


def _start(theta, counts):
    # phase from the strongest first harmonic; then linear least squares
    c, s = np.cos(4 * theta), np.sin(4 * theta)
    proj = counts @ np.stack([c, s], axis=1)
    k = int(np.argmax(np.hypot(proj[:, 0], proj[:, 1])))
    phase = math.atan2(-proj[k, 1], proj[k, 0])
    A = np.stack([np.ones_like(theta), np.cos(4 * theta + phase)], axis=1)
    coef, *_ = np.linalg.lstsq(A, counts.T, rcond=None)
    return phase, coef[0], coef[1]


def fit_fringe(theta, counts, labels=None) -> FitResult:
    """Fit fringes with a common phase and the period fixed to pi/2.

    `counts` has one row per detector combination. Amplitudes are signed,
    so complementary combinations share the phase. Visibilities
    |amplitude|/offset per combination and their mean are returned in
    ``FitResult.derived`` as ``V_<label>`` and ``V``.
    """
    theta = np.asarray(theta, dtype=float)
    counts = np.atleast_2d(np.asarray(counts, dtype=float))
    n_c = counts.shape[0]
    labels = list(labels) if labels is not None else [str(k) for k in range(n_c)]
    if counts.shape[1] != theta.size:
        raise DomainError("one count per setting and combination is required")
    if np.unique(theta).size < 5 or np.ptp(theta) < PERIOD * (1 - 1e-9):
        raise DomainError("fringe fit needs at least 5 distinct angles spanning one period (pi/2)")
    err = np.sqrt(np.maximum(counts, 1.0))

    def residuals(p):
        model = fringe_model(theta, p[0], p[1:1 + n_c], p[1 + n_c:])
        return ((counts - model) / err).ravel()

    phase, off, amp = _start(theta, counts)
    x0 = np.concatenate([[phase], off, amp])
    scale = np.concatenate([[1.0], np.maximum(np.abs(off), 1.0), np.maximum(np.abs(off), 1.0)])
    names = ["phase"] + [f"offset_{l}" for l in labels] + [f"amplitude_{l}" for l in labels]
    try:
        res = levenberg_marquardt(residuals, x0, names, scale=scale)
    except DegenerateDesignError:
        # no fringe at all: the phase is meaningless, fit at the starting phase
        res = levenberg_marquardt(lambda q: residuals(np.concatenate([[phase], q])),
                                  x0[1:], names[1:], scale=scale[1:])
        cov = np.zeros((x0.size, x0.size))
        cov[1:, 1:] = res.covariance
        cov[0, 0] = np.inf
        res.names, res.values, res.covariance = names, np.concatenate([[phase], res.values]), cov
        res.errors = np.concatenate([[np.inf], res.errors])
        res.dof -= 1

    # wrap phase and make the first amplitude positive
    if res.values[1 + n_c] < 0:
        res.values[0] += math.pi
        res.values[1 + n_c:] *= -1
        flip = np.ones(res.values.size)
        flip[1 + n_c:] = -1
        res.covariance = res.covariance * np.outer(flip, flip)
    res.values[0] = (res.values[0] + math.pi) % (2 * math.pi) - math.pi

    off, amp = res.values[1:1 + n_c], res.values[1 + n_c:]
    grads = []
    for k, l in enumerate(labels):
        v = abs(amp[k]) / off[k]
        g = np.zeros(res.values.size)
        g[1 + k] = -abs(amp[k]) / off[k] ** 2
        # d|a|/da taken as 1 at a = 0 so a vanishing fringe keeps a finite error
        g[1 + n_c + k] = (1.0 if amp[k] >= 0 else -1.0) / off[k]
        grads.append(g)
        res.derived[f"V_{l}"] = (v, _propagate(g, res.covariance))
    g_mean = np.mean(grads, axis=0)
    v_mean = float(np.mean([res.derived[f"V_{l}"][0] for l in labels]))
    res.derived["V"] = (v_mean, _propagate(g_mean, res.covariance))
    return res


def _propagate(g, cov):
    # the phase never enters a visibility, so skip it (its variance may be inf)
    return math.sqrt(g[1:] @ cov[1:, 1:] @ g[1:])

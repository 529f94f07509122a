"""Two-photon polarization states, waveplate analyzers, fringes and CHSH.

Basis order is {HH, HV, VH, VV} with the signal photon first; H = (1, 0),
V = (0, 1). Waveplate angles are fast-axis angles measured from H. An
analyzer is a list of plates in the order light meets them, followed by a
polarizing beam splitter whose transmitted port is H.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

_H = np.array([1.0, 0.0], dtype=complex)
_V = np.array([0.0, 1.0], dtype=complex)
RETARDANCE = {"half": math.pi, "quarter": math.pi / 2}
PORTS = ("transmit", "reflect")
# detector combinations in (signal detector, idler detector) order
COMBINATIONS = ("11", "12", "21", "22")


class TwoQubitState:
    """Validated 4x4 density matrix."""

    def __init__(self, rho, tol=1e-10):
        rho = np.asarray(rho, dtype=complex)
        if rho.shape != (4, 4):
            raise DomainError("density matrix must be 4x4")
        if not np.allclose(rho, rho.conj().T, atol=1e-12):
            raise DomainError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1) > 1e-12:
            raise DomainError(f"density matrix trace {np.trace(rho).real:.3g} != 1")
        if np.linalg.eigvalsh(rho).min() < -tol:
            raise DomainError("density matrix is not positive semidefinite")
        self.rho = rho

    @classmethod
    def from_vector(cls, psi):
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    def fidelity(self, psi):
        """<psi|rho|psi> for a pure target state."""
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return float(np.real(psi.conj() @ self.rho @ psi))

    def to_json(self):
        """16 entries, row-major, each as [real, imag]."""
        entries = [[float(z.real), float(z.imag)] for z in self.rho.ravel()]
        return json.dumps({"basis": ["HH", "HV", "VH", "VV"], "rho": entries})

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        vals = np.array([complex(re, im) for re, im in doc["rho"]])
        return cls(vals.reshape(4, 4))


def pair_state(mag_alpha, mag_beta, phase, visibility=1.0) -> TwoQubitState:
    """alpha|HH> + beta e^{i phase}|VV>, with the coherence damped by `visibility`.

    The remaining weight is the incoherent mixture |alpha|^2 HH + |beta|^2 VV.
    """
    if not 0.0 <= visibility <= 1.0:
        raise DomainError("visibility must lie in [0, 1]")
    norm = math.hypot(mag_alpha, mag_beta)
    if norm == 0:
        raise DomainError("amplitudes cannot both vanish")
    a, b = abs(mag_alpha) / norm, abs(mag_beta) / norm
    psi = np.array([a, 0, 0, b * np.exp(1j * phase)])
    rho = visibility * np.outer(psi, psi.conj())
    rho[0, 0] += (1 - visibility) * a * a
    rho[3, 3] += (1 - visibility) * b * b
    return TwoQubitState(rho)


def waveplate_unitary(kind, angle):
    """Jones matrix of a retarder with fast axis at `angle` (global phase dropped)."""
    if kind not in RETARDANCE:
        raise DomainError(f"unknown waveplate kind {kind!r}")
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    return rot @ np.diag([1.0, np.exp(1j * RETARDANCE[kind])]) @ rot.T


@dataclass(frozen=True)
class AnalyzerSetting:
    """Waveplates (kind, angle) in propagation order and the port called detector 1."""

    plates: tuple = ()
    port: str = "transmit"

    def __post_init__(self):
        object.__setattr__(self, "plates", tuple((k, float(a)) for k, a in self.plates))
        if len(self.plates) > 2:
            raise DomainError("at most two waveplates per analyzer")
        for kind, angle in self.plates:
            if kind not in RETARDANCE or not math.isfinite(angle):
                raise DomainError(f"invalid waveplate ({kind!r}, {angle})")
        if self.port not in PORTS:
            raise DomainError(f"port must be one of {PORTS}")

    def jones(self):
        M = np.eye(2, dtype=complex)
        for kind, angle in self.plates:
            M = waveplate_unitary(kind, angle) @ M
        return M

    def projectors(self):
        """(detector 1, detector 2) projectors in the photon's input basis."""
        M = self.jones()
        p_t = M.conj().T @ np.outer(_H, _H) @ M
        p_r = M.conj().T @ np.outer(_V, _V) @ M
        return (p_t, p_r) if self.port == "transmit" else (p_r, p_t)


def coincidence_probabilities(state: TwoQubitState, signal: AnalyzerSetting, idler: AnalyzerSetting):
    """2x2 array P[signal detector, idler detector] of joint detection probabilities."""
    out = np.empty((2, 2))
    for i, ps in enumerate(signal.projectors()):
        for j, pi in enumerate(idler.projectors()):
            out[i, j] = np.real(np.trace(state.rho @ np.kron(ps, pi)))
    return out


def signal_fringe_analyzer(theta):
    """Quarter-wave plate at pi/4 followed by a half-wave plate at theta."""
    return AnalyzerSetting((("quarter", math.pi / 4), ("half", theta)))


def idler_diagonal_analyzer():
    """Half-wave plate at pi/8: detector 1 sees |+>, detector 2 sees |->."""
    return AnalyzerSetting((("half", math.pi / 8),))


def fringe_curve(state: TwoQubitState, thetas):
    """Coincidence probabilities (rows ordered as COMBINATIONS) versus theta."""
    idl = idler_diagonal_analyzer()
    cols = [coincidence_probabilities(state, signal_fringe_analyzer(t), idl).ravel() for t in thetas]
    return np.array(cols).T


def visibility(curve):
    """(max - min)/(max + min) of each row of a fringe curve."""
    curve = np.atleast_2d(curve)
    hi, lo = curve.max(axis=1), curve.min(axis=1)
    return (hi - lo) / (hi + lo)


def fringe_visibility(state: TwoQubitState, n=16):
    """Mean visibility over the four combinations.

    Each curve is offset + amplitude cos(4 theta + phase), so the first
    Fourier coefficient on a uniform grid over one period is exact.
    """
    thetas = np.arange(n) * (math.pi / 2) / n
    curve = fringe_curve(state, thetas)
    offset = curve.mean(axis=1)
    amp = 2 * np.abs(curve @ np.exp(-4j * thetas)) / n
    return float(np.mean(amp / offset))


# -- CHSH ------------------------------------------------------------------------

def chsh_correlator(n11, n12, n21, n22):
    """Correlator E and its Poisson standard error from four coincidence counts."""
    counts = np.array([n11, n12, n21, n22], dtype=float)
    if np.any(counts < 0):
        raise DomainError("counts must be non-negative")
    total = counts.sum()
    if total <= 0:
        raise DomainError("no coincidences recorded")
    E = (counts[0] + counts[3] - counts[1] - counts[2]) / total
    return float(E), float(math.sqrt(max(1.0 - E * E, 0.0) / total))


def chsh_parameter(E11, E12, E21, E22, errors=None):
    """S = |E11 + E12 + E21 - E22| with errors added in quadrature."""
    S = abs(E11 + E12 + E21 - E22)
    if errors is None:
        return float(S), 0.0
    return float(S), float(math.sqrt(sum(e * e for e in errors)))


def analyzer_for_equator(angle, port="transmit"):
    """Analyzer whose detector-1 projector is (|H> + e^{i angle}|V>)/sqrt2."""
    return AnalyzerSetting((("quarter", math.pi / 4), ("half", (math.pi / 2 - angle) / 4)), port)


def optimal_settings(phase):
    """Signal settings theta_pm = phase +- pi/4 and the full analyzer set.

    The idler measures X1 = sigma_x and X2 with detector 1 on the
    (|H> - i|V>)/sqrt2 port, which gives the (+, +, +, -) sign pattern of
    the S combination.
    """
    t_plus, t_minus = phase + math.pi / 4, phase - math.pi / 4
    return {
        "theta_plus": t_plus,
        "theta_minus": t_minus,
        "Y1": analyzer_for_equator(t_plus),
        "Y2": analyzer_for_equator(t_minus),
        "X1": analyzer_for_equator(0.0),
        "X2": analyzer_for_equator(math.pi / 2, port="reflect"),
        "hwp_Y1": (math.pi / 2 - t_plus) / 4,
        "hwp_Y2": (math.pi / 2 - t_minus) / 4,
    }


def correlator_from_state(state, signal: AnalyzerSetting, idler: AnalyzerSetting):
    P = coincidence_probabilities(state, signal, idler)
    return float(P[0, 0] + P[1, 1] - P[0, 1] - P[1, 0])


def chsh_from_state(state: TwoQubitState, settings=None, phase=0.0):
    """S of `state` for the given (or optimal) settings; E_ij = E(X_i, Y_j)."""
    st = settings or optimal_settings(phase)
    E = {f"{i}{j}": correlator_from_state(state, st[f"Y{j}"], st[f"X{i}"])
         for i in (1, 2) for j in (1, 2)}
    S, _ = chsh_parameter(E["11"], E["12"], E["21"], E["22"])
    return S, E


def counts_for_correlator(E, total):
    """Integer-free expected counts (N11, N12, N21, N22) giving correlator E."""
    same, diff = total * (1 + E) / 4, total * (1 - E) / 4
    return same, diff, diff, same


# -- files -----------------------------------------------------------------------

def write_fringe_csv(path, thetas, counts, header_lines=()):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta_rad"] + [f"N{c}" for c in COMBINATIONS])
        for k, t in enumerate(thetas):
            w.writerow([f"{t:.10g}"] + [f"{counts[c][k]:.10g}" for c in range(len(COMBINATIONS))])


def read_fringe_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    thetas = np.array([float(r["theta_rad"]) for r in rows])
    counts = np.array([[float(r[f"N{c}"]) for r in rows] for c in COMBINATIONS])
    return thetas, counts


def read_chsh_csv(path):
    """Rows: setting (11, 12, 21, 22), N11, N12, N21, N22."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    out = {}
    for r in rows:
        out[r["setting"]] = tuple(float(r[f"N{c}"]) for c in COMBINATIONS)
    missing = [s for s in COMBINATIONS if s not in out]
    if missing:
        raise DomainError(f"{path}: missing settings {missing}")
    return out

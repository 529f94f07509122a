"""Refractive indices, phase mismatch and phase-matching bandwidth of
periodically poled waveguides (bulk-index approximation).

Wavelengths are in nm at the public surface except for
:func:`refractive_index`, which follows the Sellmeier convention of um.
Phase mismatch is in rad/mm and its frequency slope in rad/(mm GHz).
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Callable, Mapping, Sequence

import numpy as np
import yaml

from .errors import DomainError, NoSolutionError, TemperatureUncorrectedWarning
from .units import C_LIGHT

#: sinc^2(x) = 1/2 at this argument
X_HALF = 1.39156


class Material(str, enum.Enum):
    KTP_z = "KTP_z"
    LiNbO3_e = "LiNbO3_e"


_BUNDLED = {
    Material.KTP_z: "ktp_z_kato2002.yaml",
    Material.LiNbO3_e: "linbo3_e_jundt1997.yaml",
}


@dataclass(frozen=True)
class SellmeierModel:
    """A published dispersion formula plus its provenance."""

    material: str
    form_id: str
    coefficients: Mapping[str, float]
    validity_um: tuple[float, float]
    temperature_reference: float
    citation: str = ""
    version: int = 1
    thermo_optic: Mapping | None = None
    temperature_validity: tuple[float, float] | None = None

    @property
    def temperature_corrected(self) -> bool:
        return self.form_id == "jundt1997" or self.thermo_optic is not None


def sellmeier_from_file(path) -> SellmeierModel:
    """Load a coefficient file (YAML key-value document)."""
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    return _model_from_doc(doc)


def _model_from_doc(doc) -> SellmeierModel:
    required = ("material", "form_id", "coefficients", "validity_um", "citation")
    missing = [k for k in required if k not in doc]
    if missing:
        raise DomainError(f"Sellmeier file lacks fields {missing}")
    if doc["form_id"] not in _FORMS:
        raise DomainError(f"unknown Sellmeier form {doc['form_id']!r}")
    tv = doc.get("temperature_validity_degC")
    return SellmeierModel(
        material=doc["material"],
        form_id=doc["form_id"],
        coefficients={k: float(v) for k, v in doc["coefficients"].items()},
        validity_um=tuple(float(v) for v in doc["validity_um"]),
        temperature_reference=float(doc.get("temperature_reference_degC", 20.0)),
        citation=doc["citation"],
        version=int(doc.get("version", 1)),
        thermo_optic=doc.get("thermo_optic"),
        temperature_validity=tuple(tv) if tv else None,
    )


def load_sellmeier(material) -> SellmeierModel:
    """Return the bundled coefficient set for `material`."""
    material = Material(material)
    ref = resources.files("pairsource") / "data" / "sellmeier" / _BUNDLED[material]
    with resources.as_file(ref) as path:
        return sellmeier_from_file(path)


def _kato2002(c, lam, dT, model):
    l2 = lam * lam
    n = np.sqrt(c["A"] + c["B"] / (l2 - c["C"]) + c["D"] / (l2 - c["E"]))
    to = model.thermo_optic
    if to is not None:
        t0, t1, t2, t3 = to["coefficients"]
        dndt = (t0 / lam**3 + t1 / l2 + t2 / lam + t3) * float(to.get("scale", 1.0))
        n = n + dndt * dT
    return n


def _jundt1997(c, lam, dT, model):
    T = model.temperature_reference + dT
    f = (T - 24.5) * (T + 570.82)
    l2 = lam * lam
    n2 = (c["a1"] + c["b1"] * f
          + (c["a2"] + c["b2"] * f) / (l2 - (c["a3"] + c["b3"] * f) ** 2)
          + (c["a4"] + c["b4"] * f) / (l2 - c["a5"] ** 2)
          - c["a6"] * l2)
    return np.sqrt(n2)


_FORMS: dict[str, Callable] = {"kato2002": _kato2002, "jundt1997": _jundt1997}


def refractive_index(model: SellmeierModel, wavelength_um, temperature_c):
    """Refractive index n(lambda, T); `wavelength_um` may be an array."""
    lam = np.asarray(wavelength_um, dtype=float)
    lo, hi = model.validity_um
    if np.any(lam < lo) or np.any(lam > hi) or not np.all(np.isfinite(lam)):
        raise DomainError(
            f"wavelength {wavelength_um} um outside the validity interval "
            f"[{lo}, {hi}] um of {model.material} ({model.form_id})")
    if not model.temperature_corrected and temperature_c != model.temperature_reference:
        warnings.warn(
            f"{model.material}: no thermo-optic data, index evaluated at "
            f"{model.temperature_reference} degC", TemperatureUncorrectedWarning, stacklevel=2)
    dT = temperature_c - model.temperature_reference
    n = _FORMS[model.form_id](model.coefficients, lam, dT, model)
    return float(n) if n.ndim == 0 else n


@dataclass(frozen=True)
class WaveguideSpec:
    material: Material
    poling_period_um: float
    length_mm: float
    temperature_c: float = 20.0
    sellmeier: SellmeierModel | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "material", Material(self.material))
        if not self.poling_period_um > 0:
            raise DomainError("poling period must be positive")
        if not self.length_mm > 0:
            raise DomainError("waveguide length must be positive")
        if self.sellmeier is None:
            object.__setattr__(self, "sellmeier", load_sellmeier(self.material))

    def at_temperature(self, temperature_c) -> "WaveguideSpec":
        return replace(self, temperature_c=temperature_c)


def idler_wavelength(pump_nm, signal_nm):
    """Energy-conservation idler wavelength (nm)."""
    if not (pump_nm > 0 and signal_nm > pump_nm):
        raise DomainError(
            f"no physical idler for pump {pump_nm} nm and signal {signal_nm} nm "
            "(signal must be longer than pump)")
    return 1.0 / (1.0 / pump_nm - 1.0 / signal_nm)


def _k(model, lam_nm, T):
    # 2 pi n / lambda in rad/mm
    return 2e6 * math.pi * refractive_index(model, lam_nm * 1e-3, T) / lam_nm


def phase_mismatch(spec: WaveguideSpec, pump_nm, signal_nm):
    """Delta k = k_p - k_s - k_i - 2 pi / Lambda, in rad/mm."""
    idler_nm = idler_wavelength(pump_nm, signal_nm)
    m, T = spec.sellmeier, spec.temperature_c
    grating = 2e3 * math.pi / spec.poling_period_um
    return _k(m, pump_nm, T) - _k(m, signal_nm, T) - _k(m, idler_nm, T) - grating


def _signal_part(spec, pump_nm, signal_nm):
    # the only terms of Delta k that vary with the signal wavelength
    idler_nm = idler_wavelength(pump_nm, signal_nm)
    m, T = spec.sellmeier, spec.temperature_c
    return -_k(m, signal_nm, T) - _k(m, idler_nm, T)


def dnu_dlambda_factor(signal_nm):
    """d lambda / d nu = -lambda^2 / c in nm/GHz."""
    return -(signal_nm**2) / C_LIGHT


def dispersion_slope(spec: WaveguideSpec, signal_nm, pump_nm=532.0,
                     h0_nm=0.1, rtol=1e-5, max_halvings=30):
    """Delta k' = (d Delta k / d lambda_s)(-lambda_s^2/c) in rad/(mm GHz).

    Centred differences with the step halved from `h0_nm` until two
    successive estimates agree to `rtol`.
    """
    f = lambda lam: _signal_part(spec, pump_nm, lam)
    h = h0_nm
    prev = (f(signal_nm + h) - f(signal_nm - h)) / (2 * h)
    for _ in range(max_halvings):
        h /= 2
        cur = (f(signal_nm + h) - f(signal_nm - h)) / (2 * h)
        if abs(cur - prev) <= rtol * abs(cur):
            return cur * dnu_dlambda_factor(signal_nm)
        prev = cur
    raise NoSolutionError("finite-difference derivative did not settle")


def fwhm_bandwidth(dk_prime, length_mm):
    """FWHM of the sinc^2 spectrum in GHz: 4 x_half / (|Delta k'| L)."""
    if dk_prime == 0:
        raise DomainError("zero dispersion slope: bandwidth diverges")
    if not length_mm > 0:
        raise DomainError("length must be positive")
    return 4.0 * X_HALF / (abs(dk_prime) * length_mm)


def spdc_bandwidth_rad_s(dk_prime, length_mm):
    """SPDC bandwidth B = 2 pi / (|Delta k'| L) as angular frequency (rad/s)."""
    return 2.0 * math.pi * 1e9 / (abs(dk_prime) * length_mm)


def phasematching_sinc2(dk, length_mm):
    """sinc^2(Delta k L / 2), with the unnormalized sinc."""
    x = np.asarray(dk, dtype=float) * length_mm / 2.0
    return np.sinc(x / np.pi) ** 2


def detuned_signal_nm(signal_nm, detuning_ghz):
    """Signal wavelength after shifting its frequency by `detuning_ghz`."""
    nu = C_LIGHT / signal_nm  # m/s over nm is GHz
    return C_LIGHT / (nu + np.asarray(detuning_ghz, dtype=float))


def spdc_spectrum(spec: WaveguideSpec, pump_nm, detunings_ghz: Sequence[float], signal_nm=883.0):
    """Signal spectrum sinc^2(Delta k L/2) over frequency detunings (GHz).

    The idler follows by energy conservation. Unity where Delta k = 0.
    """
    lams = np.atleast_1d(detuned_signal_nm(signal_nm, detunings_ghz))
    dks = np.array([phase_mismatch(spec, pump_nm, lam) for lam in lams])
    return phasematching_sinc2(dks, spec.length_mm)


def poling_period_for(material, temperature_c, pump_nm, signal_nm, sellmeier=None):
    """Poling period (um) that phase-matches the given wavelengths."""
    model = sellmeier or load_sellmeier(material)
    idler_nm = idler_wavelength(pump_nm, signal_nm)
    dk0 = (_k(model, pump_nm, temperature_c) - _k(model, signal_nm, temperature_c)
           - _k(model, idler_nm, temperature_c))
    if dk0 <= 0:
        raise NoSolutionError("no positive poling period phase-matches these wavelengths")
    return 2e3 * math.pi / dk0


def bisect_root(func, lo, hi, ftol=1e-6, max_iter=200):
    """Bracketing bisection until |func(x)| < ftol."""
    flo, fhi = func(lo), func(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise NoSolutionError(f"no sign change on [{lo}, {hi}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fmid = func(mid)
        if abs(fmid) < ftol:
            return mid
        if np.sign(fmid) == np.sign(flo):
            lo, flo = mid, fmid
        else:
            hi = mid
    raise NoSolutionError(f"bisection did not reach |f| < {ftol}")


def solve_phasematching_temperature(spec: WaveguideSpec, pump_nm, signal_nm,
                                    bracket=(-50.0, 1000.0), ftol=1e-6):
    """Temperature (degC) where Delta k = 0; `spec.temperature_c` is ignored.

    Values far outside the coefficient set's temperature validity are
    extrapolations of the thermo-optic law and are reported with a warning.
    """
    def dk(T):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TemperatureUncorrectedWarning)
            return phase_mismatch(spec.at_temperature(T), pump_nm, signal_nm)

    T = bisect_root(dk, *bracket, ftol=ftol)
    tv = spec.sellmeier.temperature_validity
    if tv is not None and not (tv[0] <= T <= tv[1]):
        warnings.warn(
            f"phase-matching temperature {T:.1f} degC lies outside the "
            f"{tv[0]}-{tv[1]} degC validity of {spec.sellmeier.citation}", stacklevel=2)
    return T

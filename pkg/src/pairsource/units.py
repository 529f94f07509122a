"""Unit conventions and parsing of unit-suffixed quantities.

Linewidths are stored internally as angular FWHM in rad/s. Everything a user
types or reads is in ordinary frequency (Hz), i.e. Gamma / (2 pi). The two
helpers below are the only place where that factor of 2 pi is applied.
"""

import math
import re

from .errors import ConfigError

C_LIGHT = 299_792_458.0  # m/s
TWO_PI = 2.0 * math.pi
PS = 1e-12


def angular(freq_hz):
    """Ordinary frequency (Hz) -> angular frequency (rad/s)."""
    return TWO_PI * freq_hz


def ordinary(omega):
    """Angular frequency (rad/s) -> ordinary frequency (Hz)."""
    return omega / TWO_PI


# dimension -> {unit: factor to the canonical unit of that dimension}
_UNITS = {
    "frequency": {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9, "THz": 1e12},
    "rate": {"/s": 1.0, "Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "cps": 1.0},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9, "ps": 1e-12, "fs": 1e-15},
    "length": {"m": 1.0, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "nm": 1e-9},
    "power": {"W": 1e3, "mW": 1.0, "uW": 1e-3, "µW": 1e-3, "nW": 1e-6},
    "temperature": {"degC": 1.0, "C": 1.0, "°C": 1.0},
    "angle": {"rad": 1.0, "deg": math.pi / 180.0, "°": math.pi / 180.0},
    # spectral brightness 2 pi R/B per mW of pump; canonical unit pairs/(s Hz)
    "brightness": {"/(s Hz)": 1.0, "/(s MHz)": 1e-6, "/(s GHz)": 1e-9},
    # frequency slope of the phase mismatch, canonical rad/(mm GHz)
    "slope": {"/(mm GHz)": 1.0, "rad/(mm GHz)": 1.0},
}

# canonical units: frequency Hz, rate 1/s, time s, length m, power mW,
# temperature degC, angle rad, brightness pairs/(s Hz), slope rad/(mm GHz)
CANONICAL = {
    "frequency": "Hz", "rate": "/s", "time": "s", "length": "m", "power": "mW",
    "temperature": "degC", "angle": "rad", "brightness": "/(s Hz)", "slope": "/(mm GHz)",
}

_QTY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(.*?)\s*$")


def parse_quantity(text, dimension):
    """Parse ``"600 MHz"`` style strings into the canonical unit of `dimension`.

    Bare numbers are rejected for dimensioned quantities: a missing unit is
    exactly how Gamma and Gamma/2pi get confused.
    """
    if dimension not in _UNITS:
        raise KeyError(dimension)
    if not isinstance(text, str):
        raise ConfigError(
            f"expected a {dimension} with explicit unit (e.g. '1 {CANONICAL[dimension]}'), got {text!r}")
    m = _QTY.match(text)
    if m is None:
        raise ConfigError(f"cannot parse quantity {text!r}")
    value, unit = float(m.group(1)), m.group(2).replace(" ", "")
    table = {k.replace(" ", ""): v for k, v in _UNITS[dimension].items()}
    if unit not in table:
        raise ConfigError(
            f"unit {m.group(2)!r} is not a {dimension} unit; allowed: {', '.join(_UNITS[dimension])}")
    return value * table[unit]

"""Run configuration: YAML documents with unit-suffixed quantities.

Documents are validated against a nested schema before anything is
computed. Unknown keys, missing keys, wrong types and bad units are all
reported with the line number of the offending node.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import yaml

from .errors import ConfigError
from .units import parse_quantity


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=float)


def config_hash(obj) -> str:
    """sha256 of the canonical JSON form of a configuration."""
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


@dataclass(frozen=True)
class Field:
    """A leaf of the schema.

    kind is one of ``number``, ``int``, ``str``, ``bool``, ``path``,
    ``q:<dimension>`` (unit-suffixed quantity) or ``list:<kind>``.
    """

    kind: str
    required: bool = False
    default: object = None
    choices: tuple | None = None


def _line(node):
    return node.start_mark.line + 1


def _scalar(node, where):
    if not isinstance(node, yaml.ScalarNode):
        raise ConfigError(f"{where}: expected a single value", _line(node))
    return yaml.safe_load(node.value) if node.style is None else node.value


def _convert(node, field: Field, where):
    kind = field.kind
    if kind.startswith("list:"):
        if not isinstance(node, yaml.SequenceNode):
            raise ConfigError(f"{where}: expected a list", _line(node))
        sub = Field(kind[5:])
        return [_convert(n, sub, f"{where}[{k}]") for k, n in enumerate(node.value)]
    value = _scalar(node, where)
    try:
        if kind.startswith("q:"):
            return parse_quantity(value, kind[2:])
    except ConfigError as exc:
        raise ConfigError(f"{where}: {exc}", _line(node)) from None
    if kind == "number":
        if isinstance(value, str):
            # YAML 1.1 reads 1e-3 (no dot) as a string
            try:
                value = float(value)
            except ValueError:
                pass
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a plain number, got {value!r}", _line(node))
        return float(value)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}", _line(node))
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true or false, got {value!r}", _line(node))
        return value
    if kind in ("str", "path"):
        value = str(value)
        if field.choices and value not in field.choices:
            raise ConfigError(f"{where}: {value!r} is not one of {list(field.choices)}", _line(node))
        return value
    raise KeyError(kind)


def validate(node, schema: dict, where="config"):
    """Convert a composed YAML mapping according to `schema`."""
    if node is None:
        raise ConfigError(f"{where}: empty document")
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError(f"{where}: expected a mapping", _line(node))
    out = {}
    seen = {}
    for key_node, value_node in node.value:
        key = key_node.value
        if key in seen:
            raise ConfigError(f"{where}: duplicate key {key!r}", _line(key_node))
        seen[key] = value_node
        if key not in schema:
            raise ConfigError(
                f"{where}: unknown key {key!r}; allowed: {', '.join(sorted(schema))}", _line(key_node))
        spec = schema[key]
        sub = f"{where}.{key}"
        out[key] = validate(value_node, spec, sub) if isinstance(spec, dict) else _convert(value_node, spec, sub)
    for key, spec in schema.items():
        if key in out:
            continue
        if isinstance(spec, dict):
            if _requires(spec):
                raise ConfigError(f"{where}: missing section {key!r}", _line(node))
            out[key] = _defaults(spec)
            continue
        if spec.required:
            raise ConfigError(f"{where}: missing key {key!r}", _line(node))
        if spec.default is not None:
            out[key] = spec.default
    return out


def _requires(spec):
    return any(_requires(v) if isinstance(v, dict) else v.required for v in spec.values())


def _defaults(spec):
    out = {}
    for k, v in spec.items():
        if isinstance(v, dict):
            out[k] = _defaults(v)
        elif v.default is not None:
            out[k] = v.default
    return out


def load_text(text, schema, source="<config>"):
    try:
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"{source}: not valid YAML ({getattr(exc, 'problem', exc)})",
                          mark.line + 1 if mark else None) from None
    return validate(node, schema, "config")


def bundled_configs():
    root = resources.files("pairsource") / "data" / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def read_config(path_or_name) -> tuple[str, Path | None]:
    """Text of a config file, or of a bundled config when given as ``@name``."""
    spec = str(path_or_name)
    if spec.startswith("@"):
        name = spec[1:]
        ref = resources.files("pairsource") / "data" / "configs" / f"{name}.yaml"
        if not ref.is_file():
            raise ConfigError(f"no bundled config {name!r}; available: {', '.join(bundled_configs())}")
        return ref.read_text(encoding="utf-8"), None
    path = Path(spec)
    return path.read_text(encoding="utf-8"), path.parent


# -- reusable schema pieces ------------------------------------------------------

WAVEGUIDE = {
    "material": Field("str", required=True, choices=("KTP_z", "LiNbO3_e")),
    "poling_period": Field("q:length", required=True),
    "length": Field("q:length", required=True),
    "temperature": Field("q:temperature", default=20.0),
    "sellmeier_file": Field("path"),
}

FILTER = {
    "linewidth": Field("q:frequency", required=True),
    "fsr": Field("q:frequency"),
    "peak_transmission": Field("number", default=1.0),
    "mode_populations": Field("list:number", default=[1.0]),
}

DETECTOR = {
    "efficiency": Field("number", default=1.0),
    "dark_rate": Field("q:rate", default=0.0),
    "jitter": Field("q:time", default=0.0),
    "dead_time": Field("q:time", default=0.0),
}

SOURCE = {
    "brightness": Field("q:brightness", required=True),
    "pump_power": Field("q:power", required=True),
    "spdc_bandwidth": Field("q:frequency"),
}

PAIR_SECTIONS = {
    "source": SOURCE,
    "filters": {"signal": FILTER, "idler": FILTER},
    "detectors": {"signal": DETECTOR, "idler": DETECTOR},
}

"""YAML run configuration: parsing, validation with key paths, and the config hash.

Layout (every section optional unless a subcommand needs it)::

    line:
      cell: {series_inductance: 45.2e-12, shunt_capacitance: 18.8e-15, finger_inductance: 1.02e-9}
      loading: {unloaded_cells: 60, loaded_cells: 6, loaded_impedance: 80.0,
                loaded_finger_inductance: 335.0e-12, supercell_count: 1000}   # or null
      n_cells: 66000                 # only for an unloaded line
      grid: {f_min_hz: 5.0e7, f_max_hz: 1.2e10, points: 12000}
    drive: {dc_bias: 1.5e-3, scale_current: 7.0e-3, pump_amplitude: 1.1667e-4, pump_hz: 8.8812e9}
    sweep:
      pumps_hz: [...]                # gain-profile / phase-match pumps (default: drive.pump_hz)
      signal_hz: {start: 2.5e9, stop: 6.5e9, points: 201}
      seed_fraction: 0.01            # signal seed as a fraction of the pump amplitude
      seed_fractions: [0.01, ...]    # asymmetry
      detunings_hz: [1.0e9]          # compression/asymmetry offsets from w_p/2
      match_detunings_hz: [...]      # phase-match: report the pump matching each detuning
      probe_dbm: {start: -90, stop: -50, step: 1}
      rtol: 1.0e-9
    calibration: {phase_shift_rad: -1.0, n_cells: 66000, bare_inductance: 3.66e-11, capacitance: 18.8e-15, form: derived}
    chain: {eta1_s, eta1_i, eta2, gain_db, hemt_gain_db, room_gain_db, hemt_noise, excess_s, excess_i}
    noise: {signal_hz, idler_hz, temperature_k, v_offset, sigma, points, bias_current, junction_impedance, rbw_hz,
            input: sweep.csv, sidecar: sweep.json}
    losses: {sntj: 1.0, bias_tee: 0.3, ...}      # dB, or [[freq_hz, dB], ...] tables
    loss_frequencies: {signal_hz: 4.5e9, idler_hz: 4.38e9}
    output: {directory: out, formats: [csv, json]}
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import yaml


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e9``-style floats (YAML 1.1 wants ``1.0e+9``)."""


_Loader.yaml_implicit_resolvers = {k: list(v) for k, v in yaml.SafeLoader.yaml_implicit_resolvers.items()}
_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*)?(?:\.[0-9_]*)?[eE][-+]?[0-9]+$|^[-+]?\.(?:inf|Inf|INF)$|^\.(?:nan|NaN|NAN)$|^[-+]?[0-9][0-9_]*\.[0-9_]*$"),
    list("-+0123456789."),
)


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


_NUMBER = "number"
_INT = "int"
_STR = "str"
_BOOL = "bool"

_SECTIONS = {
    "line": {
        "cell": {"series_inductance": _NUMBER, "shunt_capacitance": _NUMBER, "finger_inductance": _NUMBER},
        "loading": {
            "unloaded_cells": _INT,
            "loaded_cells": _INT,
            "loaded_impedance": _NUMBER,
            "loaded_finger_inductance": _NUMBER,
            "supercell_count": _INT,
        },
        "n_cells": _INT,
        "z0": _NUMBER,
        "grid": {"f_min_hz": _NUMBER, "f_max_hz": _NUMBER, "points": _INT},
    },
    "drive": {"dc_bias": _NUMBER, "scale_current": _NUMBER, "pump_amplitude": _NUMBER, "pump_hz": _NUMBER},
    "sweep": {
        "pumps_hz": [_NUMBER],
        "signal_hz": {"start": _NUMBER, "stop": _NUMBER, "points": _INT},
        "seed_fraction": _NUMBER,
        "seed_fractions": [_NUMBER],
        "detunings_hz": [_NUMBER],
        "match_detunings_hz": [_NUMBER],
        "probe_dbm": {"start": _NUMBER, "stop": _NUMBER, "step": _NUMBER},
        "rtol": _NUMBER,
        "power_convention": _STR,
    },
    "calibration": {
        "phase_shift_rad": _NUMBER,
        "n_cells": _NUMBER,
        "bare_inductance": _NUMBER,
        "capacitance": _NUMBER,
        "form": _STR,
    },
    "chain": {
        "eta1_s": _NUMBER,
        "eta1_i": _NUMBER,
        "eta2": _NUMBER,
        "gain_db": _NUMBER,
        "hemt_gain_db": _NUMBER,
        "room_gain_db": _NUMBER,
        "hemt_noise": _NUMBER,
        "excess_s": _NUMBER,
        "excess_i": _NUMBER,
    },
    "noise": {
        "signal_hz": _NUMBER,
        "idler_hz": _NUMBER,
        "temperature_k": _NUMBER,
        "v_offset": _NUMBER,
        "sigma": _NUMBER,
        "points": _INT,
        "bias_current": _NUMBER,
        "junction_impedance": _NUMBER,
        "rbw_hz": _NUMBER,
        "input": _STR,
        "sidecar": _STR,
        "n_eff_i": _NUMBER,
        "gain_ratio": _NUMBER,
    },
    "losses": "losses",
    "loss_frequencies": {"signal_hz": _NUMBER, "idler_hz": _NUMBER},
    "output": {"directory": _STR, "formats": [_STR]},
}

_LOSS_KEYS = ("sntj", "bias_tee", "lpf", "dc", "iso", "kit", "bypass")

#: keys that must be strictly positive when present
_POSITIVE = {
    "series_inductance", "shunt_capacitance", "finger_inductance", "loaded_impedance",
    "loaded_finger_inductance", "scale_current", "pump_hz", "n_cells", "z0", "f_min_hz", "f_max_hz",
    "points", "seed_fraction", "rtol", "bare_inductance", "capacitance", "eta1_s", "eta1_i", "eta2",
    "signal_hz", "idler_hz", "temperature_k", "bias_current", "junction_impedance", "rbw_hz", "step",
}


def _check_scalar(value: Any, kind: str, path: str, key: str):
    if kind == _NUMBER:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(path, "must be finite")
        if key in _POSITIVE and not value > 0:
            raise ConfigError(path, f"must be > 0, got {value!r}")
        return float(value)
    if kind == _INT:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        if key in _POSITIVE and value <= 0:
            raise ConfigError(path, f"must be > 0, got {value!r}")
        if value < 0:
            raise ConfigError(path, f"must be >= 0, got {value!r}")
        return value
    if kind == _STR:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    raise AssertionError(kind)


def _check_losses(value: Any, path: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(path, "expected a mapping of component -> dB or table")
    out = {}
    for key, item in value.items():
        sub = f"{path}.{key}"
        if key not in _LOSS_KEYS:
            raise ConfigError(sub, f"unknown component (allowed: {', '.join(_LOSS_KEYS)})")
        if isinstance(item, list):
            if not item:
                raise ConfigError(sub, "empty insertion-loss table")
            rows = []
            for j, row in enumerate(item):
                if not (isinstance(row, list) and len(row) == 2):
                    raise ConfigError(f"{sub}[{j}]", "table rows must be [freq_hz, dB]")
                f = _check_scalar(row[0], _NUMBER, f"{sub}[{j}][0]", "freq")
                db = _check_scalar(row[1], _NUMBER, f"{sub}[{j}][1]", "db")
                if db < 0:
                    raise ConfigError(f"{sub}[{j}][1]", "insertion loss must be >= 0 dB")
                rows.append([f, db])
            out[key] = rows
        else:
            db = _check_scalar(item, _NUMBER, sub, key)
            if db < 0:
                raise ConfigError(sub, "insertion loss must be >= 0 dB")
            out[key] = db
    return out


def _validate(node: Any, schema: Any, path: str, key: str = ""):
    if schema == "losses":
        return _check_losses(node, path)
    if isinstance(schema, dict):
        if node is None:
            return None
        if not isinstance(node, dict):
            raise ConfigError(path, f"expected a mapping, got {type(node).__name__}")
        out = {}
        for k, v in node.items():
            sub = f"{path}.{k}" if path else str(k)
            if k not in schema:
                raise ConfigError(sub, f"unknown key (allowed: {', '.join(schema)})")
            out[k] = _validate(v, schema[k], sub, k)
        return out
    if isinstance(schema, list):
        if not isinstance(node, list):
            raise ConfigError(path, "expected a list")
        if not node:
            raise ConfigError(path, "list must not be empty")
        return [_validate(v, schema[0], f"{path}[{j}]", key) for j, v in enumerate(node)]
    return _check_scalar(node, schema, path, key)


@dataclass(frozen=True)
class RunConfig:
    data: dict
    digest: str
    source: Optional[Path] = None

    def section(self, name: str) -> Optional[dict]:
        return self.data.get(name)

    def require(self, name: str) -> dict:
        sec = self.data.get(name)
        if not sec:
            raise ConfigError(name, "section is required for this subcommand")
        return sec

    def get(self, dotted: str, default=None):
        node = self.data
        for part in dotted.split("."):
            if not isinstance(node, dict) or part not in node or node[part] is None:
                return default
            node = node[part]
        return node

    def resolve(self, relative: str) -> Path:
        p = Path(relative)
        if p.is_absolute() or self.source is None:
            return p
        return self.source.parent / p


def _cross_checks(data: dict):
    line = data.get("line") or {}
    if line.get("loading") and "n_cells" in line:
        raise ConfigError("line.n_cells", "set either loading.supercell_count or n_cells, not both")
    if line and "cell" not in line:
        raise ConfigError("line.cell", "missing")
    for name, keys in (("line.cell", _SECTIONS["line"]["cell"]), ("line.loading", _SECTIONS["line"]["loading"])):
        sec = line.get(name.split(".")[1])
        if sec is not None:
            for k in keys:
                if k not in sec:
                    raise ConfigError(f"{name}.{k}", "missing")
            if name == "line.loading" and sec["unloaded_cells"] % 2:
                raise ConfigError(f"{name}.unloaded_cells", "must be even")
    grid = line.get("grid")
    if grid:
        if grid.get("f_min_hz", 5e7) >= grid.get("f_max_hz", 1.2e10):
            raise ConfigError("line.grid", "f_min_hz must be below f_max_hz")
        if grid.get("points", 12000) < 2:
            raise ConfigError("line.grid.points", "need at least 2 points")
    drive = data.get("drive")
    if drive is not None:
        for k in _SECTIONS["drive"]:
            if k not in drive:
                raise ConfigError(f"drive.{k}", "missing")
        if not 0 <= drive["dc_bias"] < drive["scale_current"]:
            raise ConfigError("drive.dc_bias", "must satisfy 0 <= dc_bias < scale_current")
        if not 0 <= drive["pump_amplitude"] < drive["scale_current"]:
            raise ConfigError("drive.pump_amplitude", "must satisfy 0 <= pump_amplitude < scale_current")
    sweep = data.get("sweep") or {}
    sig = sweep.get("signal_hz")
    if sig is not None:
        for k in ("start", "stop", "points"):
            if k not in sig:
                raise ConfigError(f"sweep.signal_hz.{k}", "missing")
        if sig["stop"] < sig["start"]:
            raise ConfigError("sweep.signal_hz", "stop must be >= start")
    probe = sweep.get("probe_dbm")
    if probe is not None:
        for k in ("start", "stop", "step"):
            if k not in probe:
                raise ConfigError(f"sweep.probe_dbm.{k}", "missing")
        if probe["stop"] <= probe["start"]:
            raise ConfigError("sweep.probe_dbm", "stop must be above start")
    conv = sweep.get("power_convention")
    if conv is not None and conv not in ("half", "full"):
        raise ConfigError("sweep.power_convention", "must be 'half' or 'full'")
    cal = data.get("calibration")
    if cal is not None:
        for k in ("phase_shift_rad", "n_cells", "bare_inductance", "capacitance"):
            if k not in cal:
                raise ConfigError(f"calibration.{k}", "missing")
        if cal.get("form", "derived") not in ("derived", "printed"):
            raise ConfigError("calibration.form", "must be 'derived' or 'printed'")
    chain = data.get("chain")
    if chain is not None:
        for k in ("eta1_s", "eta1_i", "eta2", "gain_db"):
            if k not in chain:
                raise ConfigError(f"chain.{k}", "missing")
        for k in ("eta1_s", "eta1_i", "eta2"):
            if chain[k] > 1:
                raise ConfigError(f"chain.{k}", "efficiency must be <= 1")
        for k in ("gain_db", "hemt_gain_db", "room_gain_db", "hemt_noise", "excess_s", "excess_i"):
            if k in chain and chain[k] < 0:
                raise ConfigError(f"chain.{k}", "must be >= 0")
    noise = data.get("noise")
    if noise is not None and "sigma" in noise and noise["sigma"] < 0:
        raise ConfigError("noise.sigma", "must be >= 0")
    out = data.get("output") or {}
    for j, fmt in enumerate(out.get("formats", [])):
        if fmt not in ("csv", "json"):
            raise ConfigError(f"output.formats[{j}]", "must be 'csv' or 'json'")


def parse_config(text: str, source: Optional[Path] = None) -> RunConfig:
    try:
        raw = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"not valid YAML: {exc}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "top level must be a mapping")
    data = _validate(raw, _SECTIONS, "")
    _cross_checks(data)
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return RunConfig(data, digest, source)


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(str(p), f"cannot read config: {exc.strerror}") from None
    return parse_config(text, p)

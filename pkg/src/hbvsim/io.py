"""Config files (TOML), run manifests (JSON) and strict CSV tables."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np
import tomli_w

from . import __version__
from .errors import ConfigError, DataError
from .parameters import (
    HOUR_VALUED,
    PRESETS,
    TABLE3_ROWS,
    ParameterSet,
    normalize_units,
    preset,
)

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised only on 3.10
    import tomli as tomllib

MANIFEST_NAME = "manifest.json"


# --- TOML -------------------------------------------------------------------

def read_toml(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with path.open("rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc


def write_toml(path, data: Mapping) -> Path:
    path = Path(path)
    path.write_text(tomli_w.dumps(_plain(data)))
    return path


def _plain(obj):
    """Convert numpy scalars and tuples to types the TOML writer accepts."""
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# --- parameter files ----------------------------------------------------------

@dataclass
class LoadedParameters:
    params: ParameterSet
    provenance: dict[str, str]
    unit_log: list[dict]


def _parse_entries(table: Mapping[str, Any]) -> list[tuple[str, float, str]]:
    entries = []
    for name, raw in table.items():
        if isinstance(raw, Mapping):
            if "value" not in raw or "unit" not in raw:
                raise ConfigError(f"parameter {name}: a table entry needs 'value' and 'unit'")
            extra = set(raw) - {"value", "unit"}
            if extra:
                raise ConfigError(f"parameter {name}: unexpected keys {sorted(extra)}")
            value, unit = raw["value"], raw["unit"]
        else:
            if name in HOUR_VALUED:
                raise ConfigError(
                    f"parameter {name} is tabulated per hour and needs an explicit unit tag, "
                    f"e.g. {name} = {{ value = {raw}, unit = \"1/hour\" }}"
                )
            value, unit = raw, ("molecules/cell" if name == "lambda_inv" else "1/day")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"parameter {name}: value must be a number, got {value!r}")
        entries.append((name, float(value), str(unit)))
    return entries


def parameters_from_config(data: Mapping[str, Any], origin: str = "file") -> LoadedParameters:
    """Build a parameter set from a parsed config mapping.

    Layout::

        preset = "table2-baseline"      # optional starting point
        [parameters]
        alpha1 = 0.03                   # 1/day unless tagged
        lambda_rh = { value = 128.57, unit = "1/hour" }

    Without a preset every one of the 34 parameters must be given.
    """
    unknown = set(data) - {"preset", "parameters"}
    if unknown:
        raise ConfigError(f"unknown top-level keys in parameter file: {sorted(unknown)}")
    base_name = data.get("preset")
    table = data.get("parameters", {})
    if not isinstance(table, Mapping):
        raise ConfigError("[parameters] must be a table")
    values, unit_log = normalize_units(_parse_entries(table))
    if base_name is not None:
        base = preset(base_name)
        provenance = _preset_provenance(base_name)
        params = base.replace(**values)
    else:
        params = ParameterSet.from_mapping(values)
        provenance = {}
    for name in values:
        provenance[name] = origin
    return LoadedParameters(params, provenance, unit_log)


def _preset_provenance(name: str) -> dict[str, str]:
    prov = {n: "table2" for n in ParameterSet.names()}
    if name == "table3-gsa-baseline":
        for row in TABLE3_ROWS:
            prov[row[0]] = "table3"
    return prov


def load_parameters(source) -> LoadedParameters:
    """Load a preset by name or a TOML parameter file by path."""
    if isinstance(source, str) and source in PRESETS:
        return parameters_from_config({"preset": source}, origin="preset")
    return parameters_from_config(read_toml(source))


def apply_overrides(loaded: LoadedParameters, overrides: Mapping[str, float]) -> LoadedParameters:
    params = loaded.params.replace(**overrides)
    prov = dict(loaded.provenance)
    for name in overrides:
        prov[name] = "override"
    return LoadedParameters(params, prov, loaded.unit_log)


def save_parameters(params: ParameterSet, path) -> Path:
    """Write all 34 values in per-day units; hour-tabulated ones carry a unit tag."""
    table: dict[str, Any] = {}
    for name, value in params.as_dict().items():
        table[name] = {"value": value, "unit": "1/day"} if name in HOUR_VALUED else value
    return write_toml(path, {"parameters": table})


def parse_override(text: str) -> tuple[str, float]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like name=value")
    name, _, raw = text.partition("=")
    name = name.strip()
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"override {name}: {raw!r} is not a number") from None
    if name not in ParameterSet.names():
        raise ConfigError(f"unknown parameter {name!r}")
    return name, value


# --- manifests ----------------------------------------------------------------

def config_digest(config: Mapping) -> str:
    blob = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


@dataclass
class RunManifest:
    command: list[str]
    config: dict
    seeds: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    unit_log: list = field(default_factory=list)
    solver: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    wall_time_s: float = 0.0
    artifacts: list = field(default_factory=list)
    version: str = __version__
    config_digest: str = ""
    platform: str = field(default_factory=lambda: f"python {platform.python_version()}, "
                                                 f"numpy {np.__version__}")

    def finalize(self, run_dir, started: float) -> Path:
        """List every file under ``run_dir`` and write the manifest there."""
        run_dir = Path(run_dir)
        self.wall_time_s = round(time.perf_counter() - started, 3)
        self.config_digest = config_digest(self.config)
        self.artifacts = sorted(
            str(p.relative_to(run_dir)) for p in run_dir.rglob("*")
            if p.is_file() and p.name != MANIFEST_NAME
        )
        path = run_dir / MANIFEST_NAME
        path.write_text(json.dumps(_jsonable(asdict(self)), indent=2, sort_keys=True) + "\n")
        return path


def read_manifest(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc


# --- CSV ------------------------------------------------------------------------

def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Comma separated, header first, ``repr`` floats (round-trip exact), LF endings."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def read_csv_strict(path, header: Optional[Sequence[str]] = None, numeric: bool = True):
    """Parse a CSV written by :func:`write_csv`, rejecting anything irregular.

    Returns ``(header, rows)``; rows are float arrays when ``numeric``.
    """
    path = Path(path)
    try:
        text = path.read_bytes().decode()
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not text.endswith("\n"):
        raise DataError(f"{path}: missing final newline")
    if "\r" in text:
        raise DataError(f"{path}: carriage returns are not allowed")
    lines = list(csv.reader(text.splitlines()))
    if not lines:
        raise DataError(f"{path}: empty file")
    head = lines[0]
    if header is not None and list(header) != head:
        raise DataError(f"{path}: header {head} does not match expected {list(header)}")
    rows = []
    for k, line in enumerate(lines[1:], start=2):
        if len(line) != len(head):
            raise DataError(f"{path}:{k}: expected {len(head)} fields, got {len(line)}")
        if numeric:
            try:
                rows.append([float(c) for c in line])
            except ValueError:
                raise DataError(f"{path}:{k}: non-numeric field in {line}") from None
        else:
            rows.append(line)
    if numeric:
        return head, np.array(rows, dtype=float).reshape(len(rows), len(head))
    return head, rows

"""Rate constants of the intracellular HBV model.

All rates are stored in day^-1. Raw literature values arrive tagged with the
unit they were published in and pass through :func:`normalize_units`, which
is the only place hour-based values are converted.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Mapping

from .errors import ConfigError

log = logging.getLogger(__name__)

LN2 = math.log(2.0)

HOURS_PER_DAY = 24.0

# Accepted unit tags and their multiplier to the internal unit.
UNIT_FACTORS = {
    "1/day": 1.0,
    "1/hour": HOURS_PER_DAY,
    "1": 1.0,
    "cell/molecule": 1.0,
}

# Rates tabulated per hour; config files must tag them explicitly.
HOUR_VALUED = ("lambda_rh", "lambda_h")


@dataclass(frozen=True)
class ParameterSet:
    """Immutable set of model parameters (day^-1 unless noted).

    ``lam`` is the inverse of the average surface-protein level, so that
    ``lam * S_p`` is dimensionless. ``phi0`` is the initial active fraction of
    cccDNA.
    """

    alpha1: float
    alpha2: float
    k1: float
    k2: float
    lam: float
    lambda_rg: float
    lambda_rs: float
    lambda_rh: float
    lambda_h: float
    lambda_p: float
    lambda_c: float
    lambda_sp: float
    lambda_sdl: float
    mu1: float
    mu2: float
    beta1: float
    beta2: float
    eta_sp: float
    phi0: float
    delta_r: float
    delta_c: float
    delta_rg: float
    delta_rs: float
    delta_rh: float
    delta_h: float
    delta_p: float
    delta_z: float
    delta_cp: float
    delta_pg: float
    delta_sp: float
    delta_s: float
    delta_d: float
    delta_dl: float
    delta_v: float

    def __post_init__(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"parameter {f.name} must be a number, got {value!r}")
            if not math.isfinite(value):
                raise ConfigError(f"parameter {f.name} must be finite, got {value!r}")
            if value < 0:
                raise ConfigError(f"parameter {f.name} must be non-negative, got {value!r}")
        if self.phi0 > 1:
            raise ConfigError(f"phi0 must lie in [0, 1], got {self.phi0!r}")
        if self.lam <= 0:
            raise ConfigError(f"lam must be positive, got {self.lam!r}")

    @classmethod
    def names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in dataclasses.fields(cls))

    def as_dict(self) -> dict[str, float]:
        return {name: float(getattr(self, name)) for name in self.names()}

    def replace(self, **overrides: float) -> "ParameterSet":
        unknown = set(overrides) - set(self.names())
        if unknown:
            raise ConfigError(f"unknown parameter name(s): {', '.join(sorted(unknown))}")
        return dataclasses.replace(self, **overrides)

    @classmethod
    def from_mapping(cls, values: Mapping[str, float]) -> "ParameterSet":
        names = set(cls.names())
        unknown = set(values) - names
        if unknown:
            raise ConfigError(f"unknown parameter name(s): {', '.join(sorted(unknown))}")
        missing = names - set(values)
        if missing:
            raise ConfigError(f"missing parameter(s): {', '.join(sorted(missing))}")
        return cls(**{k: values[k] for k in cls.names()})


def normalize_units(raw: Iterable[tuple[str, float, str]]) -> tuple[dict[str, float], list[dict]]:
    """Convert ``(name, value, unit)`` triples to internal units.

    ``lambda_inv`` is accepted as the average surface-protein level in
    molecules/cell and is stored as its reciprocal under ``lam``.

    Returns the converted values and the normalization table, which is also
    written to the log.
    """
    values: dict[str, float] = {}
    table: list[dict] = []
    for name, value, unit in raw:
        value = float(value)
        if name == "lambda_inv":
            if unit != "molecules/cell":
                raise ConfigError(f"lambda_inv must be tagged 'molecules/cell', got {unit!r}")
            if value <= 0:
                raise ConfigError(f"lambda_inv must be positive, got {value!r}")
            out_name, out_value, out_unit = "lam", 1.0 / value, "cell/molecule"
        else:
            if unit not in UNIT_FACTORS:
                raise ConfigError(f"unknown unit tag {unit!r} for parameter {name}")
            out_name = name
            out_value = value * UNIT_FACTORS[unit]
            out_unit = "1/day" if unit in ("1/day", "1/hour") else unit
        if out_name in values:
            raise ConfigError(f"parameter {out_name} given twice")
        values[out_name] = out_value
        table.append(
            {"name": out_name, "raw_value": value, "raw_unit": unit,
             "value": out_value, "unit": out_unit}
        )
    for row in table:
        if row["raw_unit"] == "1/hour" or row["name"] == "lam":
            log.info("normalized %s: %r %s -> %r %s", row["name"], row["raw_value"],
                     row["raw_unit"], row["value"], row["unit"])
    return values, table


# Published baseline with the units as printed. delta_c and eta_sp carry no
# printed unit and are read as day^-1 / dimensionless rate consistent with the
# sensitivity table. delta_rs is not printed (its row repeats lambda_rs); the
# pgRNA decay rate is used in its place.
TABLE2_RAW: tuple[tuple[str, float, str], ...] = (
    ("alpha1", 0.03, "1/day"),
    ("alpha2", LN2, "1/day"),
    ("lambda_inv", 100000.0, "molecules/cell"),
    ("k1", LN2, "1/day"),
    ("k2", LN2, "1/day"),
    ("lambda_rg", 648.0, "1/day"),
    ("lambda_rs", 900.0, "1/day"),
    ("lambda_rh", 128.57, "1/hour"),
    ("lambda_h", 116.88, "1/hour"),
    ("lambda_p", 540.0, "1/day"),
    ("lambda_c", 617.0, "1/day"),
    ("lambda_sp", 5000.0, "1/day"),
    ("lambda_sdl", 144.0, "1/day"),
    ("mu1", 120.0, "1/day"),
    ("mu2", LN2, "1/day"),
    ("beta1", 50.0, "1/day"),
    ("beta2", LN2, "1/day"),
    ("delta_r", LN2, "1/day"),
    ("delta_c", 0.016, "1/day"),
    ("delta_rg", 3.327, "1/day"),
    ("delta_rs", 3.327, "1/day"),
    ("delta_rh", 16.635, "1/day"),
    ("delta_h", 16.635, "1/day"),
    ("delta_p", 15.99, "1/day"),
    ("delta_z", 1.44, "1/day"),
    ("delta_cp", 16.635, "1/day"),
    ("delta_pg", 0.053, "1/day"),
    ("delta_sp", 16.635, "1/day"),
    ("delta_s", 0.053, "1/day"),
    ("delta_d", 0.053, "1/day"),
    ("delta_dl", 0.053, "1/day"),
    ("delta_v", 24.0 * LN2 / 4.0, "1/day"),
    ("eta_sp", 16.635, "1/day"),
    ("phi0", 0.2, "1"),
)


@dataclass(frozen=True)
class ParameterRange:
    name: str
    min: float
    baseline: float
    max: float

    def __post_init__(self):
        if not (self.min <= self.baseline <= self.max):
            raise ConfigError(
                f"range for {self.name} must satisfy min <= baseline <= max, "
                f"got {self.min}, {self.baseline}, {self.max}"
            )

    @property
    def width(self) -> float:
        return self.max - self.min


# (parameter, printed minimum, printed baseline, printed maximum), in the
# column order of the published PRCC table.
TABLE3_ROWS: tuple[tuple[str, float, float, float], ...] = (
    ("alpha1", 0.015, 0.03, 0.045),
    ("alpha2", 0.3465, 0.693, 1.0395),
    ("k1", 0.3465, 0.693, 1.0395),
    ("lam", 0.000005, 0.00001, 0.000015),
    ("delta_c", 0.008, 0.016, 0.024),
    ("lambda_rg", 324.0, 648.0, 972.0),
    ("mu1", 60.0, 120.0, 180.0),
    ("lambda_rs", 450.0, 900.0, 1350.0),
    ("lambda_sp", 2500.0, 5000.0, 7500.0),
    ("lambda_p", 270.0, 540.0, 810.0),
    ("mu2", 0.3465, 0.693, 1.0395),
    ("lambda_c", 308.5, 617.0, 925.5),
    ("beta1", 25.0, 50.0, 75.0),
    ("eta_sp", 50.0, 100.0, 150.0),
    ("beta2", 0.3465, 0.693, 1.0395),
    ("k2", 0.3465, 0.693, 1.0395),
    ("delta_v", 2.079, 4.158, 6.237),
)

GSA_PARAMETERS: tuple[str, ...] = tuple(row[0] for row in TABLE3_ROWS)

# Column labels used in the PRCC table.
GSA_SYMBOLS: dict[str, str] = {
    "alpha1": "alpha_1",
    "alpha2": "alpha_2",
    "k1": "k_1",
    "lam": "lambda",
    "delta_c": "delta_c",
    "lambda_rg": "lambda_rg",
    "mu1": "mu_1",
    "lambda_rs": "lambda_rs",
    "lambda_sp": "lambda_sp",
    "lambda_p": "lambda_p",
    "mu2": "mu_2",
    "lambda_c": "lambda_c",
    "beta1": "beta_1",
    "eta_sp": "eta_sp",
    "beta2": "beta_2",
    "k2": "k_2",
    "delta_v": "delta_v",
}


def gsa_ranges(spread: float = 0.5) -> list[ParameterRange]:
    """Sampling ranges for the 17 sensitivity parameters.

    Bounds are ``(1 - spread) * baseline`` and ``(1 + spread) * baseline``;
    for the default spread they are checked against the printed table, which
    agrees to within one unit in the last place (1.5 * 0.693 is not exactly
    representable as the printed 1.0395).
    """
    ranges = []
    for name, lo, base, hi in TABLE3_ROWS:
        rmin, rmax = (1.0 - spread) * base, (1.0 + spread) * base
        if spread == 0.5:
            for computed, printed in ((rmin, lo), (rmax, hi)):
                if not math.isclose(computed, printed, rel_tol=2.0**-52, abs_tol=0.0):
                    raise ConfigError(f"range for {name} disagrees with printed bound {printed}")
        ranges.append(ParameterRange(name, rmin, base, rmax))
    return ranges


def table2_baseline() -> ParameterSet:
    values, _ = normalize_units(TABLE2_RAW)
    return ParameterSet.from_mapping(values)


def table3_gsa_baseline() -> ParameterSet:
    """Table 2 baseline with the 17 sensitivity baselines substituted.

    This is where ``eta_sp`` becomes 100 and ``log 2`` becomes the printed 0.693.
    """
    overrides = {name: base for name, _, base, _ in TABLE3_ROWS}
    return table2_baseline().replace(**overrides)


PRESETS = {
    "table2-baseline": table2_baseline,
    "table3-gsa-baseline": table3_gsa_baseline,
}


def preset(name: str) -> ParameterSet:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown parameter preset {name!r}; choose from {sorted(PRESETS)}") from None

"""Named batch scenarios: initial cccDNA sweep, HBx on/off, intracellular
delay sweep, replication patterns, dslDNA sweep, ETV validation and the
global sensitivity run.

Every runner returns a :class:`ScenarioResult` (or :class:`GsaResult`) that
:func:`write_scenario` turns into per-compartment CSVs and SVG plots.
Initial states not fixed by an experiment use V(0) = 1 and zeros elsewhere.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from . import svg
from .errors import ConfigError, DataError, NumericalError
from .integrate import ACCEPTANCE_CONFIG, SWEEP_CONFIG, IntegrationConfig, integrate_adaptive
from .io import write_csv
from .model import FULL_STATES, SIMPLIFIED_STATES, ModelVariant, VariantKind, initial_state
from .parameters import ParameterSet, gsa_ranges, preset
from .sensitivity import (
    DEFAULT_THRESHOLD,
    PrccReport,
    SampleMatrix,
    build_report,
    evaluate_snapshots,
    export_scatter,
    lhs_sample,
    write_prcc_csv,
    write_summary_csv,
)

log = logging.getLogger(__name__)

CCC_LEVELS = (20.0, 40.0, 60.0, 80.0, 100.0)
CCC_HORIZON = 1500.0
DELAY_TAUS = (0.0, 0.25, 0.5, 1.0)
ARRESTED = {"lambda_rg": 0.1, "lambda_rs": 2.0}
EXPLOSIVE = {"lambda_rg": 2.0, "lambda_rs": 0.1}
DSLDNA_VALUES = (0.0, 72.0, 144.0, 288.0)
ETV_EFFICACY = 0.97
ETV_WINDOW = (53.0, 123.0)
# Serum copies per unit of single-cell V(0): 1e6 copies map to V(0) = 1.
DEFAULT_INOCULUM_SCALE = 1e-6
# Long sweeps stop once any compartment exceeds this. Products of two states
# must stay finite, so the guard sits far below the float limit.
MAGNITUDE_GUARD = 1e100
GUARD_CHUNK = 25.0


@dataclass(frozen=True)
class Scenario:
    """Configuration of one batch job.

    ``sweep`` is an optional ``(axis, values)`` pair where ``axis`` is a
    parameter name, ``"tau"``, or ``"init:<state>"`` for an initial value.
    """

    name: str
    variant: str
    horizon: float
    grid_step: float = 1.0
    initial_state: Mapping[str, float] = field(default_factory=lambda: {"V": 1.0})
    overrides: Mapping[str, float] = field(default_factory=dict)
    sweep: Optional[tuple[str, tuple[float, ...]]] = None
    preset: str = "table2-baseline"
    options: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        try:
            kind = VariantKind(self.variant)
        except ValueError:
            raise ConfigError(f"unknown variant {self.variant!r}") from None
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ConfigError(f"horizon must be positive, got {self.horizon!r}")
        if not (math.isfinite(self.grid_step) and 0 < self.grid_step <= self.horizon):
            raise ConfigError(f"grid_step must lie in (0, horizon], got {self.grid_step!r}")
        names = ModelVariant(kind).state_names
        for s, v in self.initial_state.items():
            if s not in names:
                raise ConfigError(f"unknown state {s!r} for variant {self.variant}")
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"initial {s} must be finite and non-negative")
        preset(self.preset).replace(**dict(self.overrides))
        if self.sweep is not None:
            axis, values = self.sweep
            if not values or not all(math.isfinite(float(v)) for v in values):
                raise ConfigError("sweep values must be a non-empty list of finite numbers")
            if not (axis == "tau" or axis in ParameterSet.names()
                    or (axis.startswith("init:") and axis[5:] in names)):
                raise ConfigError(f"unknown sweep axis {axis!r}")

    def grid(self) -> np.ndarray:
        n = int(math.floor(self.horizon / self.grid_step + 1e-9))
        g = self.grid_step * np.arange(n + 1)
        if g[-1] < self.horizon:
            g = np.append(g, self.horizon)
        return g

    def params(self) -> ParameterSet:
        return preset(self.preset).replace(**dict(self.overrides))

    def y0(self, names: Sequence[str]) -> np.ndarray:
        return initial_state(names, **dict(self.initial_state))

    def as_config(self) -> dict:
        cfg = {"name": self.name, "variant": self.variant, "horizon": self.horizon,
               "grid_step": self.grid_step, "initial_state": dict(self.initial_state),
               "overrides": dict(self.overrides), "preset": self.preset,
               "options": dict(self.options)}
        if self.sweep is not None:
            cfg["sweep"] = {"axis": self.sweep[0], "values": list(self.sweep[1])}
        return cfg


@dataclass
class RunResult:
    label: str
    t: np.ndarray
    y: np.ndarray
    names: tuple[str, ...]
    halted_at: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def series(self, name: str) -> np.ndarray:
        return self.y[:, self.names.index(name)]

    def at(self, day: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.t - day)))
        if abs(self.t[k] - day) > 1e-9:
            raise DataError(f"day {day} is not on the sampling grid")
        return self.y[k]


@dataclass
class ScenarioResult:
    name: str
    runs: list[RunResult]
    metrics: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def run(self, label: str) -> RunResult:
        for r in self.runs:
            if r.label == label:
                return r
        raise KeyError(label)


# --- helpers ------------------------------------------------------------------

def max_relative_divergence(a, b, floor: float = 1e-12) -> float:
    """``max_t |a - b| / max(|a|, |b|, floor)`` over points where both are finite."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ok = np.isfinite(a) & np.isfinite(b)
    if not np.any(ok):
        return float("nan")
    a, b = a[ok], b[ok]
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / scale))


def max_log10_divergence(a, b, floor: float = 1e-12) -> float:
    """Largest gap in decades between two positive series (values clipped at ``floor``)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ok = np.isfinite(a) & np.isfinite(b)
    if not np.any(ok):
        return float("nan")
    la = np.log10(np.maximum(a[ok], floor))
    lb = np.log10(np.maximum(b[ok], floor))
    return float(np.max(np.abs(la - lb)))


def simulate(variant: ModelVariant, y0, grid: np.ndarray, params: ParameterSet,
             cfg: IntegrationConfig = ACCEPTANCE_CONFIG, label: str = "",
             guard: Optional[float] = None) -> RunResult:
    """Integrate one variant and sample it on ``grid`` (days, starting at 0).

    With ``guard`` set, integration proceeds in chunks and stops after the
    first chunk in which any compartment exceeds ``guard``; later grid rows
    are NaN and ``halted_at`` records the stopping day.
    """
    grid = np.asarray(grid, dtype=float)
    horizon = float(grid[-1])
    names = variant.state_names
    out = np.full((grid.size, len(names)), np.nan)
    if guard is None:
        tr = integrate_adaptive(variant, y0, (float(grid[0]), horizon), params, cfg)
        out[:] = tr.sample(grid)
        return RunResult(label, grid, out, names, None, {"stats": _stats(tr)})
    y = np.asarray(y0, dtype=float)
    a = float(grid[0])
    steps = 0
    while a < horizon:
        b = min(a + GUARD_CHUNK, horizon)
        tr = integrate_adaptive(variant, y, (a, b), params, cfg)
        steps += tr.stats.n_steps
        mask = (grid >= a) & (grid <= b)
        out[mask] = tr.sample(grid[mask])
        y = tr.final
        if np.max(np.abs(tr.y)) > guard:
            log.info("%s: state exceeded %.3g by day %g; stopping", label, guard, b)
            return RunResult(label, grid, out, names, b, {"stats": {"n_steps": steps}})
        a = b
    return RunResult(label, grid, out, names, None, {"stats": {"n_steps": steps}})


def _scenario_variant(sc: Scenario, tau: float = 0.0) -> ModelVariant:
    opts = dict(sc.options)
    unknown = set(opts) - {"epsilon", "treatment_start", "treatment_duration", "hbx_enabled", "tau"}
    if unknown:
        raise ConfigError(f"unknown scenario options {sorted(unknown)}")
    opts.setdefault("tau", tau)
    return ModelVariant(VariantKind(sc.variant), **opts)


def run_scenario(sc: Scenario, cfg: IntegrationConfig = ACCEPTANCE_CONFIG) -> ScenarioResult:
    """Run a user-defined :class:`Scenario`, one run per sweep value."""
    grid = sc.grid()
    base = sc.params()
    points = [(None, None)] if sc.sweep is None else [(sc.sweep[0], v) for v in sc.sweep[1]]
    runs = []
    for axis, value in points:
        p, init, variant = base, dict(sc.initial_state), None
        if axis == "tau":
            variant = _scenario_variant(sc, tau=value)
        elif axis is not None and axis.startswith("init:"):
            init[axis[5:]] = value
        elif axis is not None:
            p = base.replace(**{axis: value})
        variant = variant or _scenario_variant(sc)
        unknown = set(init) - set(variant.state_names)
        if unknown:
            raise ConfigError(f"unknown state(s) {sorted(unknown)} for variant {sc.variant}")
        label = sc.variant if axis is None else f"{axis}={value:g}"
        runs.append(simulate(variant, initial_state(variant.state_names, **init), grid, p, cfg, label))
    return ScenarioResult(sc.name, runs, {}, sc.as_config())


def _stats(tr) -> dict:
    return {"n_steps": tr.stats.n_steps, "n_rhs": tr.stats.n_rhs, "method": tr.method}


def _base(params: Optional[ParameterSet], name: str = "table2-baseline") -> ParameterSet:
    return params if params is not None else preset(name)


def _grid(horizon: float, step: float) -> np.ndarray:
    return Scenario("grid", "full", horizon, step).grid()


# --- scenarios -----------------------------------------------------------------

def run_ccc_sweep(levels: Sequence[float] = CCC_LEVELS, horizon: float = CCC_HORIZON,
                  params: Optional[ParameterSet] = None, cfg: IntegrationConfig = ACCEPTANCE_CONFIG,
                  grid_step: float = 1.0, guard: Optional[float] = MAGNITUDE_GUARD) -> ScenarioResult:
    """Full model from C(0) = level (everything else zero) for each level."""
    p = _base(params)
    grid = _grid(horizon, grid_step)
    variant = ModelVariant(VariantKind.FULL)
    runs = []
    for c0 in levels:
        y0 = initial_state(FULL_STATES, C=float(c0))
        runs.append(simulate(variant, y0, grid, p, cfg, f"C0={c0:g}", guard))
    metrics = {
        "halted_at": {r.label: r.halted_at for r in runs},
        "final_day": {r.label: _last_finite_day(r) for r in runs},
    }
    common = min(metrics["final_day"].values())
    metrics["common_day"] = common
    metrics["V_at_common_day"] = {r.label: float(r.at(common)[FULL_STATES.index("V")]) for r in runs}
    notes = [f"{r.label} stopped at day {r.halted_at:g} after exceeding {guard:.0e}"
             for r in runs if r.halted_at is not None]
    return ScenarioResult("ccc-sweep", runs, metrics,
                          {"levels": list(levels), "horizon": horizon, "guard": guard}, notes)


def _last_finite_day(run: RunResult) -> float:
    ok = np.all(np.isfinite(run.y), axis=1)
    return float(run.t[np.nonzero(ok)[0][-1]])


def run_hbx_comparison(horizon: float = 100.0, params: Optional[ParameterSet] = None,
                       cfg: IntegrationConfig = ACCEPTANCE_CONFIG, grid_step: float = 1.0,
                       y0: Optional[Mapping[str, float]] = None) -> ScenarioResult:
    """Full model with the HBx-modulated active fraction versus the fraction pinned at one."""
    p = _base(params)
    grid = _grid(horizon, grid_step)
    init = initial_state(FULL_STATES, **dict({"V": 1.0} if y0 is None else y0))
    on = simulate(ModelVariant(VariantKind.FULL, hbx_enabled=True), init, grid, p, cfg, "hbx_on")
    off = simulate(ModelVariant(VariantKind.FULL, hbx_enabled=False), init, grid, p, cfg, "hbx_off")
    iv, ic = FULL_STATES.index("V"), FULL_STATES.index("C")
    metrics = {
        "max_rel_divergence_V": max_relative_divergence(on.y[:, iv], off.y[:, iv]),
        "max_rel_divergence_C": max_relative_divergence(on.y[:, ic], off.y[:, ic]),
        "max_log10_divergence_V": max_log10_divergence(on.y[:, iv], off.y[:, iv]),
    }
    return ScenarioResult("hbx", [on, off], metrics, {"horizon": horizon})


def run_delay_sweep(taus: Sequence[float] = DELAY_TAUS, horizon: float = 280.0,
                    params: Optional[ParameterSet] = None, cfg: IntegrationConfig = ACCEPTANCE_CONFIG,
                    grid_step: float = 1.0, y0: Optional[Mapping[str, float]] = None) -> ScenarioResult:
    """Delay model for each tau (constant pre-history equal to the initial state)."""
    p = _base(params)
    taus = [float(t) for t in taus]
    if 0.0 not in taus:
        taus = [0.0, *taus]
    grid = _grid(horizon, grid_step)
    init = initial_state(FULL_STATES, **dict({"V": 1.0} if y0 is None else y0))
    runs = [simulate(ModelVariant(VariantKind.DELAY, tau=t), init, grid, p, cfg, f"tau={t:g}")
            for t in taus]
    ref = runs[0]
    iv = FULL_STATES.index("V")
    metrics = {"final_state": {}, "max_rel_divergence_V": {}, "max_log10_divergence_V": {}}
    for r in runs:
        metrics["final_state"][r.label] = dict(zip(FULL_STATES, r.y[-1].tolist()))
        if r is not ref:
            metrics["max_rel_divergence_V"][r.label] = max_relative_divergence(r.y[:, iv], ref.y[:, iv])
            metrics["max_log10_divergence_V"][r.label] = max_log10_divergence(r.y[:, iv], ref.y[:, iv])
    return ScenarioResult("delay", runs, metrics, {"taus": taus, "horizon": horizon})


def run_replication_patterns(horizon: float = 100.0, params: Optional[ParameterSet] = None,
                             cfg: IntegrationConfig = ACCEPTANCE_CONFIG, grid_step: float = 1.0,
                             arrested: Mapping[str, float] = ARRESTED,
                             explosive: Mapping[str, float] = EXPLOSIVE) -> ScenarioResult:
    """Full model under the arrested and explosive transcription overrides."""
    p = _base(params)
    grid = _grid(horizon, grid_step)
    init = initial_state(FULL_STATES, V=1.0)
    variant = ModelVariant(VariantKind.FULL)
    arr = simulate(variant, init, grid, p.replace(**arrested), cfg, "arrested")
    exp = simulate(variant, init, grid, p.replace(**explosive), cfg, "explosive")
    iv = FULL_STATES.index("V")
    v_arr, v_exp = arr.y[-1, iv], exp.y[-1, iv]
    divergence = {s: max_log10_divergence(arr.y[:, k], exp.y[:, k]) for k, s in enumerate(FULL_STATES)}
    metrics = {
        "V_end_arrested": float(v_arr),
        "V_end_explosive": float(v_exp),
        "V_ratio_explosive_over_arrested": float(v_exp / v_arr) if v_arr > 0 else float("inf"),
        "end_log10_gap": {s: float(abs(np.log10(max(exp.y[-1, k], 1e-300))
                                       - np.log10(max(arr.y[-1, k], 1e-300))))
                          for k, s in enumerate(FULL_STATES)},
        "max_log10_divergence": divergence,
    }
    return ScenarioResult("replication", [arr, exp], metrics,
                          {"horizon": horizon, "arrested": dict(arrested), "explosive": dict(explosive)})


def run_dsldna_sweep(values: Sequence[float] = DSLDNA_VALUES, horizon: float = 100.0,
                     params: Optional[ParameterSet] = None, cfg: IntegrationConfig = ACCEPTANCE_CONFIG,
                     grid_step: float = 1.0, baseline: float = 144.0) -> ScenarioResult:
    """Full model across dslDNA-to-mRNA conversion rates; divergence is measured
    against the baseline rate."""
    p = _base(params)
    values = [float(v) for v in values]
    for must in (0.0, baseline):
        if must not in values:
            values.append(must)
    grid = _grid(horizon, grid_step)
    init = initial_state(FULL_STATES, V=1.0)
    variant = ModelVariant(VariantKind.FULL)
    runs = [simulate(variant, init, grid, p.replace(lambda_sdl=v), cfg, f"lambda_sdl={v:g}")
            for v in values]
    ref = runs[values.index(baseline)]
    iv, ic = FULL_STATES.index("V"), FULL_STATES.index("C")
    metrics = {"max_rel_divergence_V": {}, "max_rel_divergence_C": {}, "max_log10_divergence_V": {}}
    for r in runs:
        if r is ref:
            continue
        metrics["max_rel_divergence_V"][r.label] = max_relative_divergence(r.y[:, iv], ref.y[:, iv])
        metrics["max_rel_divergence_C"][r.label] = max_relative_divergence(r.y[:, ic], ref.y[:, ic])
        metrics["max_log10_divergence_V"][r.label] = max_log10_divergence(r.y[:, iv], ref.y[:, iv])
    return ScenarioResult("dsldna", runs, metrics, {"values": values, "horizon": horizon,
                                                    "baseline": baseline})


# --- ETV validation --------------------------------------------------------------

@dataclass(frozen=True)
class MouseDataset:
    mouse_id: str
    days: np.ndarray
    copies: np.ndarray
    inoculum: float = 1.0e6
    treatment_start: float = ETV_WINDOW[0]
    treatment_duration: float = ETV_WINDOW[1] - ETV_WINDOW[0]
    efficacy: float = ETV_EFFICACY
    synthetic: bool = False

    def __post_init__(self):
        if self.days.ndim != 1 or self.days.shape != self.copies.shape or self.days.size == 0:
            raise DataError(f"mouse {self.mouse_id}: days and copies must be equal-length series")
        if np.any(np.diff(self.days) <= 0):
            raise DataError(f"mouse {self.mouse_id}: days must be strictly increasing")
        if np.any(self.copies < 0) or not np.all(np.isfinite(self.copies)):
            raise DataError(f"mouse {self.mouse_id}: copies must be finite and non-negative")
        if not 0 <= self.efficacy <= 1:
            raise DataError(f"mouse {self.mouse_id}: efficacy must lie in [0, 1]")


_META_KEYS = {"mouse_id": str, "inoculum": float, "treatment_start": float,
              "treatment_duration": float, "efficacy": float, "synthetic": str}


def load_mouse_csv(path) -> MouseDataset:
    """Read ``# key: value`` metadata lines followed by a ``day,copies`` table."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read mouse series {path}: {exc}") from exc
    meta: dict = {}
    body = []
    for line in lines:
        if line.startswith("#"):
            key, sep, value = line[1:].partition(":")
            key = key.strip()
            if not sep or key not in _META_KEYS:
                raise DataError(f"{path}: bad metadata line {line!r}")
            try:
                meta[key] = _META_KEYS[key](value.strip())
            except ValueError:
                raise DataError(f"{path}: bad value for {key}") from None
        elif line.strip():
            body.append(line)
    if not body or body[0].replace(" ", "") != "day,copies":
        raise DataError(f"{path}: expected header 'day,copies'")
    days, copies = [], []
    for k, line in enumerate(body[1:], start=2):
        parts = line.split(",")
        if len(parts) != 2:
            raise DataError(f"{path}: row {k} must have two fields")
        try:
            days.append(float(parts[0]))
            copies.append(float(parts[1]))
        except ValueError:
            raise DataError(f"{path}: row {k} is not numeric") from None
    if "mouse_id" not in meta:
        meta["mouse_id"] = path.stem
    synthetic = str(meta.pop("synthetic", "false")).lower() == "true"
    return MouseDataset(days=np.array(days), copies=np.array(copies), synthetic=synthetic, **meta)


def example_mouse_files() -> list[Path]:
    """Synthetic example series shipped with the package (not measured data)."""
    from importlib import resources

    root = resources.files("hbvsim") / "data"
    return sorted(Path(str(p)) for p in root.iterdir() if p.name.endswith(".csv"))


def rms_log10_error(model_days, model_v, days, copies, floor: float = 1.0) -> float:
    """RMS of ``log10(model) - log10(data)`` at the data days, both clipped at ``floor``."""
    mv = np.interp(days, model_days, model_v)
    diff = np.log10(np.maximum(mv, floor)) - np.log10(np.maximum(copies, floor))
    return float(np.sqrt(np.mean(diff * diff)))


def run_etv_validation(datasets: Sequence[MouseDataset] = (), params: Optional[ParameterSet] = None,
                       cfg: IntegrationConfig = ACCEPTANCE_CONFIG, horizon: Optional[float] = None,
                       grid_step: float = 1.0, inoculum_scale: float = DEFAULT_INOCULUM_SCALE,
                       inoculum: float = 1.0e6, efficacy: float = ETV_EFFICACY,
                       window: tuple[float, float] = ETV_WINDOW, transient: float = 7.0) -> ScenarioResult:
    """Treated simplified model against serum series.

    Runs the treated model and its zero-efficacy twin (identical
    breakpoints, so the pre-window segment is bit-identical) plus the plain
    untreated model, then scores each dataset by RMS log10 error.
    """
    p = _base(params)
    start, end = window
    if not 0 <= start < end:
        raise ConfigError(f"treatment window must satisfy 0 <= start < end, got {window}")
    if not inoculum_scale > 0:
        raise ConfigError("inoculum_scale must be positive")
    last_day = max([float(d.days[-1]) for d in datasets], default=0.0)
    horizon = float(horizon or max(end + 17.0, last_day))
    if horizon < end:
        raise ConfigError(f"horizon {horizon} ends before the treatment window closes at {end}")
    grid = np.union1d(_grid(horizon, grid_step), [start, end])
    y0 = initial_state(SIMPLIFIED_STATES, V=inoculum * inoculum_scale)
    treated_variant = ModelVariant(VariantKind.SIMPLIFIED_TREATED, epsilon=efficacy,
                                   treatment_start=start, treatment_duration=end - start)
    twin_variant = ModelVariant(VariantKind.SIMPLIFIED_TREATED, epsilon=0.0,
                                treatment_start=start, treatment_duration=end - start)
    treated = simulate(treated_variant, y0, grid, p, cfg, f"eps={efficacy:g}")
    twin = simulate(twin_variant, y0, grid, p, cfg, "eps=0")
    plain = simulate(ModelVariant(VariantKind.SIMPLIFIED), y0, grid, p, cfg, "untreated")
    iv = SIMPLIFIED_STATES.index("V")
    v = treated.y[:, iv]
    pre = grid <= start
    after = (grid >= start + transient) & (grid <= end)
    v_after = v[after]
    metrics = {
        "V_at_start": float(v[grid == start][0]),
        "V_at_end": float(v[grid == end][0]),
        "log10_change_over_window": float(np.log10(v[grid == end][0]) - np.log10(v[grid == start][0])),
        "declines_over_window": bool(v[grid == end][0] < v[grid == start][0]),
        "monotone_decline_after_transient": bool(v_after.size > 1 and np.all(np.diff(v_after) <= 0)),
        "pre_window_bit_identical": bool(np.array_equal(treated.y[pre], twin.y[pre])),
        "twin_vs_untreated_max_rel": max_relative_divergence(twin.y[:, iv], plain.y[:, iv]),
        "inoculum_scale": inoculum_scale,
        "rms_log10_error": {},
    }
    for d in datasets:
        metrics["rms_log10_error"][d.mouse_id] = rms_log10_error(grid, v, d.days, d.copies)
    result = ScenarioResult("etv", [treated, twin, plain], metrics,
                            {"efficacy": efficacy, "window": list(window), "horizon": horizon,
                             "inoculum": inoculum, "inoculum_scale": inoculum_scale,
                             "mice": [d.mouse_id for d in datasets]})
    result.datasets = list(datasets)
    if any(d.synthetic for d in datasets):
        result.notes.append("scored against synthetic example series, not measured data")
    return result


# --- global sensitivity -------------------------------------------------------------

@dataclass
class GsaResult:
    samples: SampleMatrix
    snapshots: np.ndarray
    report: PrccReport
    config: dict


def run_gsa(n: int = 1000, seed: int = 1, snapshot_day: float = 280.0,
            base: Optional[ParameterSet] = None, cfg: IntegrationConfig = SWEEP_CONFIG,
            workers: Optional[int] = None, threshold: float = DEFAULT_THRESHOLD,
            spread: float = 0.5, ranges=None, with_p_values: bool = False) -> GsaResult:
    """LHS over the 17 varied parameters, simplified model to ``snapshot_day``, PRCC."""
    base = base if base is not None else preset("table3-gsa-baseline")
    ranges = list(ranges) if ranges is not None else gsa_ranges(spread)
    samples = lhs_sample(ranges, n, seed, snapshot_day)
    snaps, excluded = evaluate_snapshots(samples, base, cfg=cfg, workers=workers)
    report = build_report(samples, snaps, excluded, threshold, with_p_values=with_p_values)
    config = {"n": n, "seed": seed, "snapshot_day": snapshot_day, "threshold": threshold,
              "ranges": [[r.name, r.min, r.baseline, r.max] for r in ranges],
              "initial_state": {"V": 1.0}, "solver": {"method": cfg.method, "rel_tol": cfg.rel_tol,
                                                        "abs_tol": cfg.abs_tol},
              "excluded": len(excluded)}
    return GsaResult(samples, snaps, report, config)


# --- output -------------------------------------------------------------------------

def write_scenario(result: ScenarioResult, out_dir, data_only: bool = False,
                   states: Optional[Sequence[str]] = None) -> list[Path]:
    """One CSV per compartment (day column plus one column per run) and an SVG each."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    first = result.runs[0]
    states = list(states or first.names)
    for s in states:
        cols = [r.series(s) for r in result.runs]
        path = write_csv(out_dir / f"{s}.csv", ["day", *(r.label for r in result.runs)],
                         zip(first.t.tolist(), *(c.tolist() for c in cols)))
        written.append(path)
        if not data_only:
            series = [(r.label, r.t, r.series(s)) for r in result.runs]
            positive = all(np.nanmin(c) > 0 for c in cols if np.any(np.isfinite(c)))
            written.append(svg.line_plot(out_dir / f"{s}.svg", series, title=f"{result.name}: {s}",
                                         ylabel=s, log_y=positive))
    for d in getattr(result, "datasets", []):
        path = write_csv(out_dir / f"mouse_{d.mouse_id}.csv", ["day", "copies"],
                         zip(d.days.tolist(), d.copies.tolist()))
        written.append(path)
    return written


def write_gsa(result: GsaResult, out_dir, data_only: bool = False,
              scatter_mode: str = "rank") -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [write_prcc_csv(result.report, out_dir / "prcc.csv"),
               write_summary_csv(result.report, out_dir / "classification.csv")]
    written.append(write_csv(out_dir / "samples.csv", ["row", *result.samples.names],
                             ([i, *row] for i, row in enumerate(result.samples.values.tolist()))))
    kept = np.setdiff1d(np.arange(result.samples.n), [i for i, _ in result.report.excluded_rows])
    written.append(write_csv(out_dir / "snapshots.csv", ["row", *SIMPLIFIED_STATES],
                             ([int(i), *row] for i, row in zip(kept, result.snapshots.tolist()))))
    kept_samples = SampleMatrix(result.samples.values[kept], result.samples.names, result.samples.seed,
                                result.samples.snapshot_day, result.samples.ranges,
                                result.samples.strata[kept])
    written += export_scatter(kept_samples, result.snapshots, out_dir / "scatter",
                              mode=scatter_mode, svg=not data_only)
    return written


SCENARIOS = {
    "ccc-sweep": run_ccc_sweep,
    "hbx": run_hbx_comparison,
    "delay": run_delay_sweep,
    "replication": run_replication_patterns,
    "dsldna": run_dsldna_sweep,
    "etv": run_etv_validation,
    "gsa": run_gsa,
}


def check_finite_run(run: RunResult) -> None:
    if run.halted_at is None and not np.all(np.isfinite(run.y)):
        raise NumericalError(f"run {run.label} produced non-finite samples")

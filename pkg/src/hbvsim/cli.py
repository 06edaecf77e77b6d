"""Command-line entry point: ``hbvsim simulate | scenario | gsa | validate-config``.

Every command that produces output writes into a fresh run directory
together with a ``manifest.json``. Failures print a single line
``error: <ErrorClass>: <message>`` on stderr and exit with the class code
(2 config, 3 numerical, 4 data).
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

from . import experiments as ex
from .errors import ConfigError, DataError, HbvError
from .integrate import ACCEPTANCE_CONFIG, METHODS, SWEEP_CONFIG, IntegrationConfig
from .io import (
    LoadedParameters,
    RunManifest,
    apply_overrides,
    load_parameters,
    parameters_from_config,
    parse_override,
    read_toml,
)
from .model import ModelVariant, VariantKind
from .parameters import GSA_PARAMETERS, PRESETS, ParameterRange, gsa_ranges

OUTPUT_ROOT_ENV = "HBVSIM_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "runs"


class _Parser(argparse.ArgumentParser):
    """Argument errors become ConfigError so they share the one-line format."""

    def error(self, message):
        raise ConfigError(message)


def _finite_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"{text!r} is not finite")
    return value


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--params", default=None,
                   help=f"preset ({', '.join(PRESETS)}) or TOML parameter file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="NAME=VALUE",
                   help="override one parameter (per-day units); repeatable")
    p.add_argument("--out", default=None, help="run directory (must be new or empty)")
    p.add_argument("--data-only", action="store_true", help="write CSV and manifest, no SVG")


def _add_solver(p: argparse.ArgumentParser, default: IntegrationConfig) -> None:
    p.add_argument("--method", choices=METHODS, default=default.method)
    p.add_argument("--rtol", type=_finite_float, default=default.rel_tol)
    p.add_argument("--atol", type=_finite_float, default=default.abs_tol)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hbvsim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="integrate one model variant")
    sim.add_argument("--variant", choices=[k.value for k in VariantKind], default="full")
    sim.add_argument("--horizon", type=_finite_float, default=100.0, help="days")
    sim.add_argument("--step", type=_finite_float, default=1.0, help="output grid spacing (days)")
    sim.add_argument("--init", action="append", default=[], metavar="STATE=VALUE",
                     help="initial value of one compartment (default V=1, others 0)")
    sim.add_argument("--tau", type=_finite_float, default=0.0, help="delay (days)")
    sim.add_argument("--epsilon", type=_finite_float, default=ex.ETV_EFFICACY)
    sim.add_argument("--treatment-start", type=_finite_float, default=ex.ETV_WINDOW[0])
    sim.add_argument("--treatment-duration", type=_finite_float,
                     default=ex.ETV_WINDOW[1] - ex.ETV_WINDOW[0])
    sim.add_argument("--no-hbx", action="store_true", help="pin the active cccDNA fraction to one")
    _add_common(sim)
    _add_solver(sim, ACCEPTANCE_CONFIG)

    sc = sub.add_parser("scenario", help="run a named experiment")
    sc.add_argument("name", choices=sorted([*ex.SCENARIOS, "custom"]))
    sc.add_argument("--config", default=None, help="custom: TOML file with a [scenario] table")
    sc.add_argument("--horizon", type=_finite_float, default=None, help="override the default horizon")
    sc.add_argument("--data", action="append", default=[], metavar="CSV",
                    help="mouse series for etv (default: bundled synthetic examples)")
    sc.add_argument("--inoculum-scale", type=_finite_float, default=ex.DEFAULT_INOCULUM_SCALE)
    sc.add_argument("--n", type=int, default=1000, help="gsa sample size")
    sc.add_argument("--seed", type=int, default=42, help="gsa seed")
    sc.add_argument("--workers", type=int, default=None)
    sc.add_argument("--with-control", action="store_true", help="ccc-sweep: add a C(0)=0 run")
    _add_common(sc)

    g = sub.add_parser("gsa", help="Latin hypercube sampling with partial rank correlations")
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--snapshot-day", type=_finite_float, default=280.0)
    g.add_argument("--ranges", default=None, help="TOML file with a [ranges] table")
    g.add_argument("--threshold", type=_finite_float, default=ex.DEFAULT_THRESHOLD)
    g.add_argument("--workers", type=int, default=None)
    g.add_argument("--p-values", action="store_true")
    g.add_argument("--scatter", choices=("rank", "raw"), default="rank")
    _add_common(g)
    _add_solver(g, SWEEP_CONFIG)

    v = sub.add_parser("validate-config", help="parse and check a config file without running")
    v.add_argument("path")
    return parser


# --- shared plumbing ------------------------------------------------------------

def _load(args, default_preset: str) -> LoadedParameters:
    loaded = load_parameters(args.params or default_preset)
    overrides = dict(parse_override(o) for o in args.overrides)
    return apply_overrides(loaded, overrides) if overrides else loaded


def _run_dir(args, command: str) -> Path:
    if args.out:
        out = Path(args.out)
    else:
        root = Path(os.environ.get(OUTPUT_ROOT_ENV) or DEFAULT_OUTPUT_ROOT)
        stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%f")
        out = root / f"{command}-{stamp}"
    if out.exists() and (not out.is_dir() or any(out.iterdir())):
        raise ConfigError(f"output directory {out} exists and is not empty")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _solver(args) -> IntegrationConfig:
    return IntegrationConfig(rel_tol=args.rtol, abs_tol=args.atol, method=args.method)


def _solver_dict(cfg: IntegrationConfig) -> dict:
    return {"method": cfg.method, "rel_tol": cfg.rel_tol, "abs_tol": cfg.abs_tol}


def _parse_init(items: Sequence[str]) -> dict[str, float]:
    init = {}
    for item in items:
        name, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"initial value {item!r} must look like STATE=VALUE")
        try:
            init[name.strip()] = float(raw)
        except ValueError:
            raise ConfigError(f"initial value for {name}: {raw!r} is not a number") from None
    return init or {"V": 1.0}


def load_ranges(path) -> list[ParameterRange]:
    """``[ranges]`` table mapping each of the 17 parameters to ``{min, baseline, max}``.

    Parameters absent from the file keep their default range.
    """
    data = read_toml(path)
    table = data.get("ranges")
    if not isinstance(table, dict) or set(data) - {"ranges"}:
        raise ConfigError(f"{path}: expected a single [ranges] table")
    unknown = set(table) - set(GSA_PARAMETERS)
    if unknown:
        raise ConfigError(f"{path}: unknown range parameter(s) {sorted(unknown)}")
    out = []
    for r in gsa_ranges():
        entry = table.get(r.name)
        if entry is None:
            out.append(r)
            continue
        if not isinstance(entry, dict) or not {"min", "max"} <= set(entry) <= {"min", "max", "baseline"}:
            raise ConfigError(f"{path}: range {r.name} needs min and max (baseline optional)")
        lo, hi = float(entry["min"]), float(entry["max"])
        base = float(entry.get("baseline", (lo + hi) / 2))
        if not (math.isfinite(lo) and math.isfinite(hi) and 0 <= lo < hi):
            raise ConfigError(f"{path}: range {r.name} must satisfy 0 <= min < max")
        out.append(ParameterRange(r.name, lo, base, hi))
    return out


def _scenario_from_config(data: dict) -> ex.Scenario:
    table = data.get("scenario")
    if not isinstance(table, dict):
        raise ConfigError("scenario file needs a [scenario] table")
    allowed = {"name", "variant", "horizon", "grid_step", "initial_state", "overrides",
               "preset", "sweep", "options"}
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown scenario keys {sorted(unknown)}")
    for key in ("name", "variant", "horizon"):
        if key not in table:
            raise ConfigError(f"scenario is missing {key!r}")
    sweep = table.get("sweep")
    if sweep is not None:
        if not isinstance(sweep, dict) or set(sweep) != {"axis", "values"}:
            raise ConfigError("sweep needs exactly 'axis' and 'values'")
        sweep = (str(sweep["axis"]), tuple(float(v) for v in sweep["values"]))
    return ex.Scenario(
        name=str(table["name"]), variant=str(table["variant"]), horizon=float(table["horizon"]),
        grid_step=float(table.get("grid_step", 1.0)),
        initial_state=dict(table.get("initial_state", {"V": 1.0})),
        overrides=dict(table.get("overrides", {})), sweep=sweep,
        preset=str(table.get("preset", "table2-baseline")), options=dict(table.get("options", {})),
    )


# --- commands ---------------------------------------------------------------------

def cmd_simulate(args, argv) -> int:
    started = time.perf_counter()
    if not args.horizon > 0:
        raise ConfigError(f"horizon must be positive, got {args.horizon}")
    if not 0 < args.step <= args.horizon:
        raise ConfigError(f"step must lie in (0, horizon], got {args.step}")
    loaded = _load(args, "table2-baseline")
    variant = ModelVariant(VariantKind(args.variant), tau=args.tau, epsilon=args.epsilon,
                           treatment_start=args.treatment_start,
                           treatment_duration=args.treatment_duration, hbx_enabled=not args.no_hbx)
    init = _parse_init(args.init)
    unknown = set(init) - set(variant.state_names)
    if unknown:
        raise ConfigError(f"unknown state(s) {sorted(unknown)} for variant {args.variant}")
    cfg = _solver(args)
    grid = ex.Scenario("simulate", args.variant, args.horizon, args.step).grid()
    run = ex.simulate(variant, ex.initial_state(variant.state_names, **init), grid,
                      loaded.params, cfg, args.variant)
    ex.check_finite_run(run)
    out = _run_dir(args, "simulate")
    result = ex.ScenarioResult("simulate", [run])
    ex.write_scenario(result, out, data_only=args.data_only)
    config = {"variant": args.variant, "horizon": args.horizon, "step": args.step,
              "initial_state": init, "tau": args.tau, "hbx_enabled": not args.no_hbx,
              "parameters": loaded.params.as_dict()}
    if variant.kind is VariantKind.SIMPLIFIED_TREATED:
        config.update(epsilon=args.epsilon, treatment_window=list(variant.window))
    manifest = RunManifest(command=argv, config=config, provenance=loaded.provenance,
                           unit_log=loaded.unit_log, solver=_solver_dict(cfg),
                           results={"final_state": dict(zip(run.names, run.y[-1].tolist())),
                                    "stats": run.meta.get("stats", {})})
    manifest.finalize(out, started)
    print(out)
    return 0


def cmd_scenario(args, argv) -> int:
    started = time.perf_counter()
    name = args.name
    if name == "gsa":
        args.snapshot_day, args.ranges, args.threshold = 280.0, None, ex.DEFAULT_THRESHOLD
        args.p_values, args.scatter = False, "rank"
        args.method, args.rtol, args.atol = SWEEP_CONFIG.method, SWEEP_CONFIG.rel_tol, SWEEP_CONFIG.abs_tol
        return cmd_gsa(args, argv)
    if name == "custom":
        return _cmd_custom(args, argv, started)
    if args.config:
        raise ConfigError("--config applies only to the custom scenario")
    loaded = _load(args, "table2-baseline")
    kwargs = {"params": loaded.params}
    if args.horizon is not None:
        kwargs["horizon"] = args.horizon
    if name == "ccc-sweep" and args.with_control:
        kwargs["levels"] = (0.0, *ex.CCC_LEVELS)
    if name == "etv":
        files = [Path(f) for f in args.data] or ex.example_mouse_files()
        for f in files:
            if not f.is_file():
                raise DataError(f"mouse series not found: {f}")
        kwargs["datasets"] = [ex.load_mouse_csv(f) for f in files]
        kwargs["inoculum_scale"] = args.inoculum_scale
    result = ex.SCENARIOS[name](**kwargs)
    for run in result.runs:
        ex.check_finite_run(run)
    out = _run_dir(args, name)
    ex.write_scenario(result, out, data_only=args.data_only)
    manifest = RunManifest(command=argv, config={"scenario": name, **result.config,
                                                 "parameters": loaded.params.as_dict()},
                           provenance=loaded.provenance, unit_log=loaded.unit_log,
                           solver=_solver_dict(ACCEPTANCE_CONFIG),
                           results={"metrics": result.metrics, "notes": result.notes})
    manifest.finalize(out, started)
    print(out)
    return 0


def _cmd_custom(args, argv, started) -> int:
    if not args.config:
        raise ConfigError("the custom scenario needs --config FILE")
    sc = _scenario_from_config(read_toml(args.config))
    if args.params:
        raise ConfigError("custom scenarios name their preset in the config file")
    overrides = dict(parse_override(o) for o in args.overrides)
    if overrides:
        sc = ex.Scenario(**{**sc.__dict__, "overrides": {**sc.overrides, **overrides}})
    result = ex.run_scenario(sc)
    for run in result.runs:
        ex.check_finite_run(run)
    out = _run_dir(args, sc.name)
    ex.write_scenario(result, out, data_only=args.data_only)
    loaded = apply_overrides(load_parameters(sc.preset), dict(sc.overrides))
    manifest = RunManifest(command=argv, config=sc.as_config(), provenance=loaded.provenance,
                           solver=_solver_dict(ACCEPTANCE_CONFIG),
                           results={"final_state": {r.label: dict(zip(r.names, r.y[-1].tolist()))
                                                    for r in result.runs}})
    manifest.finalize(out, started)
    print(out)
    return 0


def cmd_gsa(args, argv) -> int:
    started = time.perf_counter()
    loaded = _load(args, "table3-gsa-baseline")
    ranges = load_ranges(args.ranges) if args.ranges else None
    cfg = _solver(args)
    res = ex.run_gsa(n=args.n, seed=args.seed, snapshot_day=args.snapshot_day, base=loaded.params,
                     cfg=cfg, workers=args.workers, threshold=args.threshold, ranges=ranges,
                     with_p_values=args.p_values)
    out = _run_dir(args, "gsa")
    ex.write_gsa(res, out, data_only=args.data_only, scatter_mode=args.scatter)
    rep = res.report
    results = {
        "most_positive": {o: rep.most_positive(o) for o in rep.outputs},
        "most_negative": {o: rep.most_negative(o) for o in rep.outputs},
        "excluded_rows": [list(e) for e in rep.excluded_rows],
        "warnings": list(rep.warnings),
    }
    manifest = RunManifest(command=argv, config={**res.config, "parameters": loaded.params.as_dict()},
                           seeds=[args.seed], provenance=loaded.provenance,
                           unit_log=loaded.unit_log, solver=_solver_dict(cfg), results=results)
    manifest.finalize(out, started)
    print(out)
    return 0


def cmd_validate(args, argv) -> int:
    path = Path(args.path)
    data = read_toml(path)
    if "scenario" in data:
        sc = _scenario_from_config(data)
        print(f"ok: scenario {sc.name} ({sc.variant}, {sc.horizon:g} days)")
    elif "ranges" in data:
        ranges = load_ranges(path)
        print(f"ok: {len(ranges)} sampling ranges")
    else:
        loaded = parameters_from_config(data, origin=str(path))
        converted = [e["name"] for e in loaded.unit_log if e["raw_unit"] != e["unit"]]
        note = f"; converted {', '.join(converted)}" if converted else ""
        print(f"ok: {len(loaded.params.names())} parameters{note}")
    return 0


COMMANDS = {"simulate": cmd_simulate, "scenario": cmd_scenario, "gsa": cmd_gsa,
            "validate-config": cmd_validate}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args, ["hbvsim", *argv])
    except HbvError as exc:
        print(f"error: {type(exc).__name__}: {_one_line(exc)}", file=sys.stderr)
        return exc.exit_code


def _one_line(exc: BaseException) -> str:
    return " ".join(str(exc).split())


if __name__ == "__main__":
    sys.exit(main())

"""Latin hypercube sampling and partial rank correlation (LHS-PRCC).

The pipeline is: draw a stratified sample of the 17 varied parameters,
integrate the simplified model for every row up to a snapshot day, rank
transform inputs and outputs, then correlate the residuals of two linear
regressions on the remaining parameter ranks.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
from scipy import stats

from .errors import (
    ConfigError,
    DataError,
    DegenerateRegressionError,
    NumericalError,
    UndefinedCorrelationError,
)
from .integrate import SWEEP_CONFIG, IntegrationConfig, integrate_adaptive
from .model import SIMPLIFIED_STATES, ModelVariant, VariantKind, initial_state
from .parameters import GSA_SYMBOLS, ParameterRange, ParameterSet

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.1
RANK_TOL = 1e-10
MAX_EXCLUDED_FRACTION = 0.01
CLASSES = ("positive", "negative", "insensitive")


@dataclass(frozen=True, eq=False)
class SampleMatrix:
    """An ``N x q`` Latin hypercube draw.

    ``strata[i, j]`` is the equiprobable stratum (0..N-1) that row ``i``
    occupies in column ``j``.
    """

    values: np.ndarray
    names: tuple[str, ...]
    seed: int
    snapshot_day: float
    ranges: tuple[ParameterRange, ...]
    strata: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def q(self) -> int:
        return self.values.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def parameter_sets(self, base: ParameterSet) -> list[ParameterSet]:
        return [base.replace(**dict(zip(self.names, row.tolist()))) for row in self.values]


def lhs_sample(ranges: Sequence[ParameterRange], n: int, seed: int,
               snapshot_day: float = 280.0) -> SampleMatrix:
    """Uniform Latin hypercube sample with one draw per stratum in every column.

    Each column gets its own permutation of the strata, so columns are
    paired at random. Uses numpy's PCG64 generator seeded with ``seed``.
    """
    ranges = tuple(ranges)
    q = len(ranges)
    if q == 0:
        raise ConfigError("at least one parameter range is required")
    if int(n) != n or n < q + 1:
        raise ConfigError(f"sample size N={n} is too small: N must be at least q+1 = {q + 1}")
    n = int(n)
    names = tuple(r.name for r in ranges)
    if len(set(names)) != q:
        raise ConfigError("duplicate parameter in ranges")
    rng = np.random.default_rng(seed)
    values = np.empty((n, q))
    strata = np.empty((n, q), dtype=np.int64)
    for j, r in enumerate(ranges):
        perm = rng.permutation(n)
        u = (perm + rng.random(n)) / n
        values[:, j] = np.clip(r.min + u * (r.max - r.min), r.min, r.max)
        strata[:, j] = perm
    return SampleMatrix(values, names, int(seed), float(snapshot_day), ranges, strata)


def rank_transform(column) -> np.ndarray:
    """Ranks 1..N with ties given the mean of the positions they span."""
    x = np.asarray(column, dtype=float).reshape(-1)
    if x.size == 0:
        raise ValueError("cannot rank an empty column")
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot rank non-finite values")
    return stats.rankdata(x, method="average")


def correlation(u, v) -> float:
    """Pearson correlation, written out from the sum-of-products formula."""
    u = np.asarray(u, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    if u.size != v.size:
        raise ValueError(f"length mismatch: {u.size} vs {v.size}")
    if u.size < 3:
        raise ValueError("correlation needs at least 3 points")
    du = u - u.mean()
    dv = v - v.mean()
    suu = float(np.dot(du, du))
    svv = float(np.dot(dv, dv))
    # variance at the round-off level of the centering counts as zero
    floor_u = (u.size * 1e-13 * float(np.max(np.abs(u)))) ** 2
    floor_v = (v.size * 1e-13 * float(np.max(np.abs(v)))) ** 2
    if suu <= floor_u or svv <= floor_v:
        raise UndefinedCorrelationError("correlation undefined: zero variance")
    r = float(np.dot(du, dv)) / math.sqrt(suu * svv)
    return min(1.0, max(-1.0, r))


class _Residualizer:
    """Least-squares projection off an intercept plus the given columns."""

    def __init__(self, design: np.ndarray, labels: Sequence[str]):
        n = design.shape[0]
        a = np.column_stack([np.ones(n), design])
        q_mat, r_mat, piv = scipy.linalg.qr(a, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r_mat))
        rank = int(np.sum(diag > RANK_TOL * diag[0])) if diag.size else 0
        if rank < a.shape[1]:
            cols = ["intercept", *labels]
            bad = [cols[k] for k in piv[rank:]]
            raise DegenerateRegressionError(
                f"rank-deficient regression design (rank {rank} of {a.shape[1]}); "
                f"collinear columns: {', '.join(bad)}"
            )
        self.q = q_mat

    def residual(self, y: np.ndarray) -> np.ndarray:
        return y - self.q @ (self.q.T @ y)


def _ranked(values: np.ndarray) -> np.ndarray:
    return np.column_stack([rank_transform(values[:, j]) for j in range(values.shape[1])])


def _check_alignment(samples: SampleMatrix, outputs: np.ndarray) -> None:
    if outputs.shape[0] != samples.n:
        raise DataError(f"outputs have {outputs.shape[0]} rows, samples have {samples.n}")
    if samples.n < samples.q + 2:
        raise ConfigError(f"PRCC needs at least q+2 = {samples.q + 2} samples, got {samples.n}")


def prcc(samples: SampleMatrix, outputs, target_param: str) -> float:
    """Partial rank correlation of one parameter with one output vector."""
    y = np.asarray(outputs, dtype=float).reshape(-1)
    _check_alignment(samples, y[:, None])
    if target_param not in samples.names:
        raise ConfigError(f"unknown parameter {target_param!r}")
    if np.ptp(y) == 0:
        raise UndefinedCorrelationError("output has zero variance; PRCC undefined")
    ranks = _ranked(samples.values)
    j = samples.names.index(target_param)
    others = [k for k in range(samples.q) if k != j]
    res = _Residualizer(ranks[:, others], [samples.names[k] for k in others])
    return correlation(res.residual(ranks[:, j]), res.residual(rank_transform(y)))


def prcc_matrix(samples: SampleMatrix, outputs) -> np.ndarray:
    """PRCC of every parameter against every output column.

    Returns a ``q x m`` array; cells whose output has no variance are NaN.
    """
    y = np.asarray(outputs, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    _check_alignment(samples, y)
    xr = _ranked(samples.values)
    yr = _ranked(y)
    out = np.full((samples.q, y.shape[1]), np.nan)
    for j in range(samples.q):
        others = [k for k in range(samples.q) if k != j]
        res = _Residualizer(xr[:, others], [samples.names[k] for k in others])
        rx = res.residual(xr[:, j])
        for m in range(y.shape[1]):
            if np.ptp(y[:, m]) == 0:
                continue
            try:
                out[j, m] = correlation(rx, res.residual(yr[:, m]))
            except UndefinedCorrelationError:
                pass
    return out


def prcc_p_values(values: np.ndarray, n: int, q: int) -> np.ndarray:
    """Two-sided p-values from ``t = r sqrt(df / (1 - r^2))`` with ``df = N - q - 1``."""
    df = n - q - 1
    if df < 1:
        raise ConfigError("not enough samples for p-values")
    r = np.clip(np.asarray(values, dtype=float), -1.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = r * np.sqrt(df / (1.0 - r * r))
    return 2.0 * stats.t.sf(np.abs(t), df)


def classify(value: float, threshold: float = DEFAULT_THRESHOLD) -> str:
    if not math.isfinite(value) or abs(value) < threshold:
        return "insensitive"
    return "positive" if value > 0 else "negative"


@dataclass
class PrccReport:
    values: np.ndarray
    parameters: tuple[str, ...]
    outputs: tuple[str, ...]
    threshold: float = DEFAULT_THRESHOLD
    n_samples: int = 0
    seed: Optional[int] = None
    snapshot_day: Optional[float] = None
    excluded_rows: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    p_values: Optional[np.ndarray] = None

    def value(self, parameter: str, output: str) -> float:
        return float(self.values[self.parameters.index(parameter), self.outputs.index(output)])

    def classification(self, parameter: str, output: str) -> str:
        return classify(self.value(parameter, output), self.threshold)

    def by_class(self, output: str, kind: str) -> list[str]:
        """Parameters of one class, ordered by decreasing |PRCC|."""
        col = self.values[:, self.outputs.index(output)]
        names = [p for p, v in zip(self.parameters, col) if classify(v, self.threshold) == kind]
        return sorted(names, key=lambda p: -abs(self.value(p, output)))

    def most_positive(self, output: str) -> Optional[str]:
        col = self.values[:, self.outputs.index(output)]
        if np.all(np.isnan(col)):
            return None
        return self.parameters[int(np.nanargmax(col))]

    def most_negative(self, output: str) -> Optional[str]:
        col = self.values[:, self.outputs.index(output)]
        if np.all(np.isnan(col)):
            return None
        return self.parameters[int(np.nanargmin(col))]

    def summary_rows(self) -> list[dict]:
        rows = []
        for out in self.outputs:
            rows.append({
                "output": out,
                "positive": self.by_class(out, "positive"),
                "negative": self.by_class(out, "negative"),
                "insensitive": self.by_class(out, "insensitive"),
                "most_positive": self.most_positive(out),
                "most_negative": self.most_negative(out),
            })
        return rows


def build_report(samples: SampleMatrix, snapshots, excluded_rows: Sequence = (),
                 threshold: float = DEFAULT_THRESHOLD, output_names: Sequence[str] = SIMPLIFIED_STATES,
                 with_p_values: bool = False) -> PrccReport:
    """PRCC table plus classification for one sample and its snapshots.

    ``snapshots`` has one row per *kept* sample row; ``excluded_rows`` lists
    ``(row_index, reason)`` pairs for failed integrations, which are dropped
    from the sample before ranking.
    """
    excluded_rows = list(excluded_rows)
    y = np.asarray(snapshots, dtype=float)
    if y.ndim != 2 or y.shape[1] != len(output_names):
        raise DataError(f"snapshots must have shape (rows, {len(output_names)}), got {y.shape}")
    if len(excluded_rows) > MAX_EXCLUDED_FRACTION * samples.n:
        raise NumericalError(
            f"{len(excluded_rows)} of {samples.n} integrations failed, above the "
            f"{MAX_EXCLUDED_FRACTION:.0%} limit; first failure: {excluded_rows[0][1]}"
        )
    kept = _drop_rows(samples, [i for i, _ in excluded_rows])
    if y.shape[0] != kept.n:
        raise DataError(f"missing snapshots: expected {kept.n} rows, got {y.shape[0]}")
    if not np.all(np.isfinite(y)):
        raise DataError("snapshots contain non-finite values")
    values = prcc_matrix(kept, y)
    warnings = []
    for m, name in enumerate(output_names):
        if np.all(np.isnan(values[:, m])):
            warnings.append(f"output {name} has zero variance across samples; all PRCC undefined, "
                            f"every parameter reported insensitive")
    if excluded_rows:
        warnings.append(f"{len(excluded_rows)} sample rows excluded after integration failure")
    for w in warnings:
        log.warning(w)
    pv = prcc_p_values(values, kept.n, kept.q) if with_p_values else None
    return PrccReport(values, samples.names, tuple(output_names), threshold, kept.n,
                      samples.seed, samples.snapshot_day, excluded_rows, warnings, pv)


def _drop_rows(samples: SampleMatrix, rows: Sequence[int]) -> SampleMatrix:
    if not rows:
        return samples
    keep = np.setdiff1d(np.arange(samples.n), np.asarray(rows, dtype=int))
    return SampleMatrix(samples.values[keep], samples.names, samples.seed, samples.snapshot_day,
                        samples.ranges, samples.strata[keep])


# --- model evaluation -------------------------------------------------------

def _evaluate_row(args):
    i, params, y0, day, cfg = args
    try:
        tr = integrate_adaptive(ModelVariant(VariantKind.SIMPLIFIED), y0, (0.0, day), params, cfg)
    except NumericalError as exc:
        return i, None, str(exc)
    return i, tr.final, None


def evaluate_snapshots(samples: SampleMatrix, base: ParameterSet, y0=None,
                       cfg: IntegrationConfig = SWEEP_CONFIG,
                       workers: Optional[int] = None) -> tuple[np.ndarray, list]:
    """Integrate the simplified model for every sample row up to the snapshot day.

    Returns the kept snapshots (row order preserved) and the list of
    ``(row, reason)`` exclusions. With ``workers > 1`` rows run in a process
    pool; results are reassembled by row index, so the output does not
    depend on completion order.
    """
    if y0 is None:
        y0 = initial_state(SIMPLIFIED_STATES, V=1.0)
    cfg = IntegrationConfig(**{**cfg.__dict__, "dense_output": False})
    jobs = [(i, ps, np.asarray(y0, dtype=float), samples.snapshot_day, cfg)
            for i, ps in enumerate(samples.parameter_sets(base))]
    if workers is None:
        workers = int(os.environ.get("HBVSIM_WORKERS", "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_evaluate_row, jobs, chunksize=max(1, len(jobs) // (8 * workers))))
    else:
        results = [_evaluate_row(job) for job in jobs]
    results.sort(key=lambda r: r[0])
    kept = [r[1] for r in results if r[1] is not None]
    excluded = [(r[0], r[2]) for r in results if r[1] is None]
    snaps = np.array(kept) if kept else np.empty((0, len(SIMPLIFIED_STATES)))
    return snaps, excluded


# --- export -----------------------------------------------------------------

def write_prcc_csv(report: PrccReport, path) -> Path:
    """17 x 12 table: one row per parameter symbol, one column per output."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["parameter", *report.outputs])
        for i, name in enumerate(report.parameters):
            w.writerow([GSA_SYMBOLS.get(name, name), *(_fmt(v) for v in report.values[i])])
    return path


def write_summary_csv(report: PrccReport, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["output", "positive", "negative", "insensitive", "most_positive", "most_negative"])
        for row in report.summary_rows():
            w.writerow([row["output"], *(" ".join(GSA_SYMBOLS.get(p, p) for p in row[k])
                                         for k in ("positive", "negative", "insensitive")),
                        GSA_SYMBOLS.get(row["most_positive"], row["most_positive"] or ""),
                        GSA_SYMBOLS.get(row["most_negative"], row["most_negative"] or "")])
    return path


def _fmt(v: float) -> str:
    return "nan" if not math.isfinite(v) else repr(float(v))


def export_scatter(samples: SampleMatrix, outputs, out_dir, pairs: Optional[Sequence] = None,
                   mode: str = "rank", output_names: Sequence[str] = SIMPLIFIED_STATES,
                   svg: bool = True) -> list[Path]:
    """Write one CSV of (parameter, output) points per pair, plus an SVG each.

    ``pairs`` defaults to every parameter against every output. ``mode`` is
    ``"rank"`` or ``"raw"``.
    """
    from . import svg as svgmod

    if mode not in ("rank", "raw"):
        raise ConfigError(f"scatter mode must be 'rank' or 'raw', got {mode!r}")
    y = np.asarray(outputs, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[0] != samples.n:
        raise DataError("outputs are not aligned with the sample rows")
    if pairs is None:
        pairs = [(p, o) for o in output_names for p in samples.names]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for param, out in pairs:
        if param not in samples.names or out not in output_names:
            raise ConfigError(f"invalid scatter pair ({param}, {out})")
        x = samples.column(param)
        v = y[:, list(output_names).index(out)]
        if mode == "rank":
            x, v = rank_transform(x), rank_transform(v)
        stem = f"scatter_{out}_{param}"
        path = out_dir / f"{stem}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([param, out])
            for a, b in zip(x.tolist(), v.tolist()):
                w.writerow([repr(a), repr(b)])
        written.append(path)
        if svg:
            label = "rank" if mode == "rank" else "value"
            svgmod.scatter_plot(out_dir / f"{stem}.svg", x, v,
                                title=f"{out} vs {GSA_SYMBOLS.get(param, param)}",
                                xlabel=f"{param} ({label})", ylabel=f"{out} ({label})",
                                log_y=(mode == "raw" and bool(np.all(v > 0))))
            written.append(out_dir / f"{stem}.svg")
    return written

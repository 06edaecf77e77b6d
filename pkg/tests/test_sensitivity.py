import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hbvsim.errors import (
    ConfigError,
    DataError,
    DegenerateRegressionError,
    NumericalError,
    UndefinedCorrelationError,
)
from hbvsim.model import SIMPLIFIED_STATES
from hbvsim.parameters import ParameterRange, gsa_ranges
from hbvsim.sensitivity import (
    build_report,
    classify,
    correlation,
    export_scatter,
    lhs_sample,
    prcc,
    prcc_matrix,
    prcc_p_values,
    rank_transform,
    write_prcc_csv,
)

UNIT = ParameterRange("x", 0.0, 0.5, 1.0)


def unit_ranges(q):
    return [ParameterRange(f"p{i}", 0.0, 0.5, 1.0) for i in range(q)]


def test_two_strata():
    s = lhs_sample([UNIT], 2, seed=1)
    v = np.sort(s.values[:, 0])
    assert 0.0 <= v[0] < 0.5 <= v[1] <= 1.0


def test_alpha1_range_full_occupancy():
    ranges = gsa_ranges()
    s = lhs_sample(ranges, 1000, seed=7)
    a = s.column("alpha1")
    assert a.min() >= 0.015 and a.max() <= 0.045
    strata = np.floor((a - 0.015) / 0.03 * 1000).astype(int)
    assert sorted(strata.tolist()) == list(range(1000))


def test_every_column_one_draw_per_stratum():
    s = lhs_sample(gsa_ranges(), 500, seed=3)
    for j in range(s.q):
        assert sorted(s.strata[:, j].tolist()) == list(range(500))
        r = s.ranges[j]
        lo = r.min + s.strata[:, j] * r.width / 500
        assert np.all(s.values[:, j] >= lo - 1e-15 * r.max)
        assert np.all(s.values[:, j] <= lo + r.width / 500 + 1e-15 * r.max)


def test_seed_determinism():
    a = lhs_sample(gsa_ranges(), 100, seed=11)
    b = lhs_sample(gsa_ranges(), 100, seed=11)
    c = lhs_sample(gsa_ranges(), 100, seed=12)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.strata, c.strata)
    for j in range(a.q):
        assert sorted(a.strata[:, j]) == sorted(c.strata[:, j])


def test_sample_size_rule():
    with pytest.raises(ConfigError, match="q\\+1"):
        lhs_sample(gsa_ranges(), 17, seed=0)
    lhs_sample(gsa_ranges(), 18, seed=0)


def test_column_means_near_midpoint():
    s = lhs_sample(gsa_ranges(), 1000, seed=5)
    for j, r in enumerate(s.ranges):
        se = r.width / np.sqrt(12 * 1000)
        assert abs(s.values[:, j].mean() - (r.min + r.max) / 2) < 3 * se


def test_rank_examples():
    assert rank_transform([10, 30, 20]).tolist() == [1, 3, 2]
    assert rank_transform([5, 5, 1]).tolist() == [2.5, 2.5, 1]


def test_rank_rejects_nonfinite():
    with pytest.raises(ValueError):
        rank_transform([1.0, np.inf])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-1000, 1000), min_size=1, max_size=40))
def test_rank_invariant_under_monotone_map(xs):
    # integer inputs keep the cubic map exact, so ties are preserved
    x = np.array(xs, dtype=float)
    assert np.array_equal(rank_transform(x), rank_transform(x**3 + 7 * x))


def test_correlation_examples():
    u = np.array([1.0, 2.0, 3.0, 4.0])
    assert correlation(u, 2 * u + 1) == pytest.approx(1.0, abs=1e-15)
    assert correlation(u, -u) == pytest.approx(-1.0, abs=1e-15)
    assert correlation([1, 2, 3, 4], [2, 1, 4, 3]) == 0.6


def test_correlation_matches_numpy_oracle():
    rng = np.random.default_rng(0)
    u, v = rng.normal(size=50), rng.normal(size=50)
    assert correlation(u, v) == pytest.approx(np.corrcoef(u, v)[0, 1], abs=1e-14)


def test_correlation_zero_variance():
    with pytest.raises(UndefinedCorrelationError):
        correlation([1, 1, 1], [1, 2, 3])


def _partial_from_inverse(x, y, j):
    """PRCC via the precision matrix of the rank correlations (a separate route)."""
    ranks = np.column_stack([rank_transform(c) for c in np.column_stack([x, y]).T])
    prec = np.linalg.inv(np.corrcoef(ranks, rowvar=False))
    k = ranks.shape[1] - 1
    return -prec[j, k] / np.sqrt(prec[j, j] * prec[k, k])


def test_prcc_matches_precision_matrix_oracle():
    rng = np.random.default_rng(8)
    s = lhs_sample(unit_ranges(5), 200, seed=8)
    y = s.values[:, 0] ** 2 - 0.5 * s.values[:, 3] + 0.1 * rng.normal(size=200)
    got = prcc_matrix(s, y)[:, 0]
    for j in range(5):
        assert got[j] == pytest.approx(_partial_from_inverse(s.values, y, j), abs=1e-10)
        assert prcc(s, y, f"p{j}") == pytest.approx(got[j], abs=1e-14)


def test_prcc_monotone_signal_and_null():
    rng = np.random.default_rng(2)
    s = lhs_sample(unit_ranges(17), 1000, seed=2)
    y = np.exp(3 * s.values[:, 0])
    y_null = rng.normal(size=1000)
    assert 0.95 <= prcc(s, y, "p0") <= 1.0
    assert abs(prcc(s, y_null, "p0")) <= 0.1


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["exp", "cube", "log", "atan"]))
def test_prcc_rank_invariance(seed, kind):
    maps = {"exp": np.exp, "cube": lambda v: v**3, "log": lambda v: np.log(v + 1e-3),
            "atan": lambda v: np.arctan(5 * v)}
    rng = np.random.default_rng(seed)
    s = lhs_sample(unit_ranges(4), 60, seed=seed)
    y = s.values[:, 1] - s.values[:, 2] + rng.normal(size=60)
    base = prcc_matrix(s, y)
    y2 = maps[kind](y - y.min())
    np.testing.assert_allclose(prcc_matrix(s, y2), base, atol=1e-12)
    vals = s.values.copy()
    vals[:, 1] = maps[kind](vals[:, 1])
    s2 = type(s)(vals, s.names, s.seed, s.snapshot_day, s.ranges, s.strata)
    np.testing.assert_allclose(prcc_matrix(s2, y), base, atol=1e-12)
    assert np.all(np.abs(base) <= 1.0)


def test_collinear_design_is_named():
    s = lhs_sample(unit_ranges(4), 30, seed=1)
    vals = s.values.copy()
    vals[:, 2] = vals[:, 1] * 2.0
    s2 = type(s)(vals, s.names, s.seed, s.snapshot_day, s.ranges, s.strata)
    with pytest.raises(DegenerateRegressionError, match="p[12]"):
        prcc(s2, vals[:, 0], "p0")


def test_prcc_needs_q_plus_two_rows():
    s = lhs_sample(unit_ranges(4), 5, seed=1)
    with pytest.raises(ConfigError):
        prcc(s, np.arange(5.0), "p0")


def test_p_values():
    p = prcc_p_values(np.array([0.0, 0.99, -0.99]), 1000, 17)
    assert p[0] == pytest.approx(1.0)
    assert p[1] < 1e-100 and p[1] == p[2]


def test_classify():
    assert classify(0.5) == "positive"
    assert classify(-0.5) == "negative"
    assert classify(0.09) == "insensitive"
    assert classify(-0.1) == "negative"
    assert classify(float("nan")) == "insensitive"


def _fake_snapshots(s, rng):
    y = np.column_stack([s.values[:, k % s.q] * (1 + k) for k in range(12)])
    return y + 0.01 * rng.normal(size=y.shape)


def test_report_consistency():
    rng = np.random.default_rng(4)
    s = lhs_sample(gsa_ranges(), 200, seed=4)
    rep = build_report(s, _fake_snapshots(s, rng), with_p_values=True)
    assert rep.values.shape == (17, 12)
    for out in rep.outputs:
        col = rep.values[:, rep.outputs.index(out)]
        assert rep.most_positive(out) == rep.parameters[int(np.argmax(col))]
        assert rep.most_negative(out) == rep.parameters[int(np.argmin(col))]
        for p in rep.parameters:
            assert rep.classification(p, out) == classify(rep.value(p, out))
    assert rep.p_values.shape == (17, 12)


def test_zero_variance_outputs_flagged():
    s = lhs_sample(gsa_ranges(), 50, seed=4)
    rep = build_report(s, np.ones((50, 12)))
    assert np.all(np.isnan(rep.values))
    assert all(rep.classification(p, "V") == "insensitive" for p in rep.parameters)
    assert len(rep.warnings) == 12 and "zero variance" in rep.warnings[0]


def test_exclusions_above_one_percent_fail():
    s = lhs_sample(gsa_ranges(), 100, seed=4)
    rng = np.random.default_rng(0)
    snaps = _fake_snapshots(s, rng)
    rep = build_report(s, snaps[1:], excluded_rows=[(0, "step underflow")])
    assert rep.n_samples == 99 and rep.excluded_rows == [(0, "step underflow")]
    with pytest.raises(NumericalError, match="1%"):
        build_report(s, snaps[2:], excluded_rows=[(0, "x"), (1, "y")])


def test_missing_snapshots():
    s = lhs_sample(gsa_ranges(), 50, seed=4)
    with pytest.raises(DataError):
        build_report(s, np.ones((49, 12)))


def test_prcc_csv_shape(tmp_path):
    rng = np.random.default_rng(4)
    s = lhs_sample(gsa_ranges(), 60, seed=4)
    rep = build_report(s, _fake_snapshots(s, rng))
    path = write_prcc_csv(rep, tmp_path / "prcc.csv")
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["parameter", *SIMPLIFIED_STATES]
    assert len(rows) == 18 and all(len(r) == 13 for r in rows)
    assert rows[1][0] == "alpha_1"
    assert all(-1 <= float(v) <= 1 for r in rows[1:] for v in r[1:])


def test_scatter_cardinality_and_rank_diagonal(tmp_path):
    s = lhs_sample(gsa_ranges(), 100, seed=9)
    y = np.column_stack([s.column("lambda_rg") ** 2] * 12)
    files = export_scatter(s, y, tmp_path, pairs=[(p, "V") for p in s.names], svg=False)
    assert len(files) == 17
    for f in files:
        assert len(f.read_text().splitlines()) == 101
    rows = list(csv.reader((tmp_path / "scatter_V_lambda_rg.csv").open()))[1:]
    assert all(float(a) == float(b) for a, b in rows)


def test_scatter_svg_written(tmp_path):
    s = lhs_sample(gsa_ranges(), 30, seed=9)
    y = np.abs(np.random.default_rng(1).normal(size=(30, 12))) + 1
    files = export_scatter(s, y, tmp_path, pairs=[("delta_v", "V")], mode="raw")
    svg = [f for f in files if f.suffix == ".svg"][0].read_text()
    assert svg.startswith("<svg") and svg.count("<circle") == 30

import math

import pytest

from hbvsim.errors import ConfigError
from hbvsim.parameters import (
    GSA_PARAMETERS,
    TABLE2_RAW,
    TABLE3_ROWS,
    ParameterRange,
    ParameterSet,
    gsa_ranges,
    normalize_units,
    preset,
    table2_baseline,
    table3_gsa_baseline,
)


def test_normalize_day_value_passes_through():
    values, _ = normalize_units([("alpha1", 0.03, "1/day")])
    assert values == {"alpha1": 0.03}


def test_normalize_hour_value_scaled_by_24():
    values, table = normalize_units([("lambda_rh", 128.57, "1/hour")])
    assert values["lambda_rh"] == pytest.approx(3085.68, rel=1e-14)
    assert table[0]["raw_unit"] == "1/hour"


def test_normalize_virion_decay_expression():
    values, _ = normalize_units([("delta_v", 24 * math.log(2) / 4, "1/day")])
    assert values["delta_v"] == pytest.approx(4.1588830833596715)
    assert round(values["delta_v"], 3) == 4.159
    assert math.floor(values["delta_v"] * 1000) / 1000 == 4.158


def test_normalize_inverse_surface_level():
    values, _ = normalize_units([("lambda_inv", 1e5, "molecules/cell")])
    assert values == {"lam": 1e-5}


def test_normalize_rejects_unknown_unit():
    with pytest.raises(ConfigError, match="unknown unit"):
        normalize_units([("alpha1", 0.03, "1/week")])


def test_normalization_table_is_logged(caplog):
    caplog.set_level("INFO", logger="hbvsim.parameters")
    normalize_units(TABLE2_RAW)
    text = caplog.text
    assert "lambda_rh" in text and "lambda_h" in text and "lam" in text


def test_table2_preset_values():
    p = preset("table2-baseline")
    assert p.lambda_rg == 648
    assert p.beta1 == 50
    assert p.alpha1 == 0.03
    assert p.eta_sp == 16.635
    assert p.lambda_h == pytest.approx(116.88 * 24)
    assert p.alpha2 == math.log(2)


def test_table3_preset_values():
    p = preset("table3-gsa-baseline")
    assert p.eta_sp == 100
    assert p.delta_v == 4.158
    assert p.alpha2 == 0.693
    assert p.lam == 1e-5
    # parameters outside the sensitivity set keep their dynamics baseline
    assert p.delta_rg == table2_baseline().delta_rg


def test_unknown_preset():
    with pytest.raises(ConfigError):
        preset("table9")


def test_negative_rate_rejected():
    with pytest.raises(ConfigError, match="non-negative"):
        table2_baseline().replace(alpha1=-1.0)


def test_nonfinite_rejected():
    with pytest.raises(ConfigError):
        table2_baseline().replace(beta1=float("nan"))


def test_phi0_bounds():
    table2_baseline().replace(phi0=1.0)
    with pytest.raises(ConfigError):
        table2_baseline().replace(phi0=1.5)


def test_lambda_must_be_positive():
    with pytest.raises(ConfigError):
        table2_baseline().replace(lam=0.0)


def test_unknown_override():
    with pytest.raises(ConfigError, match="unknown parameter"):
        table2_baseline().replace(alpha9=1.0)


def test_thirty_four_parameters():
    assert len(ParameterSet.names()) == 34


def test_from_mapping_round_trip():
    p = table2_baseline()
    assert ParameterSet.from_mapping(p.as_dict()) == p


def test_from_mapping_missing():
    d = table2_baseline().as_dict()
    d.pop("mu1")
    with pytest.raises(ConfigError, match="missing"):
        ParameterSet.from_mapping(d)


def test_gsa_ranges_match_printed_table():
    ranges = gsa_ranges()
    assert [r.name for r in ranges] == list(GSA_PARAMETERS)
    assert len(ranges) == 17
    for r, (name, lo, base, hi) in zip(ranges, TABLE3_ROWS):
        assert r.baseline == base
        assert r.min == 0.5 * base
        assert r.max == 1.5 * base
        assert r.min == lo
        assert math.isclose(r.max, hi, rel_tol=2.0**-52)


def test_range_invariant():
    with pytest.raises(ConfigError):
        ParameterRange("x", 2.0, 1.0, 3.0)

import math

import numpy as np
import pytest

from hbvsim.errors import ConfigError, NumericalError
from hbvsim.integrate import (
    ACCEPTANCE_CONFIG,
    IntegrationConfig,
    SolverStats,
    Trajectory,
    check_undershoot,
    integrate_adaptive,
    integrate_dde,
    integrate_fixed_rk4,
    solve_system,
)
from hbvsim.model import (
    FULL_STATES,
    SIMPLIFIED_STATES,
    ModelVariant,
    VariantKind,
    _delay_terms,
    initial_state,
)
from hbvsim.parameters import table2_baseline

P2 = table2_baseline()
FULL = ModelVariant(VariantKind.FULL)
SIMPLE = ModelVariant(VariantKind.SIMPLIFIED)
DOPRI = IntegrationConfig(method="dopri5", rel_tol=1e-10, abs_tol=1e-12)


def decay(t, y):
    return -y


def test_dopri5_exponential_decay():
    tr = solve_system(decay, [1.0], (0.0, 5.0), DOPRI)
    assert tr.final[0] == pytest.approx(math.exp(-5.0), rel=1e-8)
    assert tr.stats.n_rejected is not None


def test_dopri5_dense_output_between_steps():
    tr = solve_system(decay, [1.0], (0.0, 5.0), DOPRI)
    mids = 0.5 * (tr.t[:-1] + tr.t[1:])
    err = np.abs(tr(mids)[:, 0] - np.exp(-mids))
    assert err.max() < 1e-8


def test_dopri5_oscillator_tolerance_convergence():
    def osc(t, y):
        return np.array([y[1], -y[0]])

    errs = []
    for tol in (1e-6, 1e-9):
        cfg = IntegrationConfig(method="dopri5", rel_tol=tol, abs_tol=tol)
        tr = solve_system(osc, [1.0, 0.0], (0.0, 20.0), cfg)
        errs.append(abs(tr.final[0] - math.cos(20.0)))
    assert errs[1] < errs[0] / 100


def test_dopri5_step_limit():
    cfg = IntegrationConfig(method="dopri5", max_steps=200)
    with pytest.raises(NumericalError, match="max_steps"):
        solve_system(lambda t, y: -1e9 * (y - math.cos(t)), [0.0], (0.0, 1.0), cfg)


def test_rk4_fourth_order_slope():
    errs = []
    for h in (0.1, 0.05, 0.025):
        tr = integrate_fixed_rk4(None, [1.0], (0.0, 4.0), None, h, fun=lambda t, y: y * np.cos(t))
        errs.append(abs(tr.final[0] - math.exp(math.sin(4.0))))
    slopes = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert all(3.8 < s < 4.2 for s in slopes)


def test_rk4_step_must_divide_span():
    with pytest.raises(ConfigError, match="divide"):
        integrate_fixed_rk4(None, [1.0], (0.0, 1.0), None, 0.3, fun=decay)


@pytest.fixture(scope="module")
def full_ten_days():
    y0 = initial_state(FULL_STATES, V=1.0)
    return y0, {m: integrate_adaptive(FULL, y0, (0, 10), P2, IntegrationConfig(method=m))
                for m in ("radau", "bdf", "lsoda")}


def test_stiff_routes_agree(full_ten_days):
    _, runs = full_ten_days
    ref = runs["radau"].final
    for m in ("bdf", "lsoda"):
        np.testing.assert_allclose(runs[m].final, ref, rtol=1e-5)


def test_stiff_route_matches_small_step_rk4():
    # RK4 stays stable on the full model only for short horizons at tiny steps.
    y0 = initial_state(FULL_STATES, V=1.0)
    oracle = integrate_fixed_rk4(FULL, y0, (0, 4), P2, 1e-4)
    tr = integrate_adaptive(FULL, y0, (0, 4), P2)
    np.testing.assert_allclose(tr.final, oracle.final, rtol=1e-7)


def test_dopri5_matches_radau_on_full_model():
    y0 = initial_state(FULL_STATES, V=1.0)
    cfg = IntegrationConfig(method="dopri5", rel_tol=1e-8, abs_tol=1e-10, dense_output=False)
    a = integrate_adaptive(FULL, y0, (0, 1), P2, cfg)
    b = integrate_adaptive(FULL, y0, (0, 1), P2)
    np.testing.assert_allclose(a.final, b.final, rtol=1e-6, atol=1e-9)


def test_runs_are_bitwise_deterministic():
    y0 = initial_state(SIMPLIFIED_STATES, V=1.0)
    a = integrate_adaptive(SIMPLE, y0, (0, 30), P2)
    b = integrate_adaptive(SIMPLE, y0, (0, 30), P2)
    assert np.array_equal(a.t, b.t) and np.array_equal(a.y, b.y)


def test_trajectory_returns_knots_exactly():
    y0 = initial_state(SIMPLIFIED_STATES, V=1.0)
    tr = integrate_adaptive(SIMPLE, y0, (0, 5), P2)
    k = tr.t.size // 2
    assert np.array_equal(tr(tr.t[k]), tr.y[k])


def test_treatment_window_edges_are_step_points():
    v = ModelVariant(VariantKind.SIMPLIFIED_TREATED, epsilon=0.97,
                     treatment_start=53, treatment_duration=70)
    y0 = initial_state(SIMPLIFIED_STATES, V=1.0)
    tr = integrate_adaptive(v, y0, (0, 130), P2)
    assert 53.0 in tr.t and 123.0 in tr.t


def test_zero_efficacy_treatment_matches_untreated():
    v = ModelVariant(VariantKind.SIMPLIFIED_TREATED, epsilon=0.0,
                     treatment_start=5, treatment_duration=5)
    y0 = initial_state(SIMPLIFIED_STATES, V=1.0)
    a = integrate_adaptive(v, y0, (0, 20), P2)
    b = integrate_adaptive(SIMPLE, y0, (0, 20), P2)
    np.testing.assert_allclose(a.final, b.final, rtol=1e-6)


def test_treatment_window_past_horizon_rejected():
    v = ModelVariant(VariantKind.SIMPLIFIED_TREATED, epsilon=0.5,
                     treatment_start=10, treatment_duration=50)
    with pytest.raises(ConfigError):
        integrate_adaptive(v, initial_state(SIMPLIFIED_STATES, V=1.0), (0, 20), P2)


@pytest.mark.parametrize("bad", [[-1.0] + [0.0] * 11, [0.0] * 5, [math.nan] * 12])
def test_bad_initial_state(bad):
    with pytest.raises(ConfigError):
        integrate_adaptive(SIMPLE, bad, (0, 1), P2)


def test_undershoot_is_reported():
    tr = Trajectory(np.array([0.0, 1.0, 2.0]), np.array([[1.0], [-0.5], [0.2]]),
                    ("X",), SolverStats(), "test")
    with pytest.raises(NumericalError, match="X undershot"):
        check_undershoot(tr)


def _rk4_dde_oracle(y0, tau, T, h):
    """Fixed-step RK4 for the delay system; lag by cubic Hermite on the grid."""
    n = int(round(T / h))
    Y = np.zeros((n + 1, 15))
    F = np.zeros_like(Y)
    Y[0] = y0

    def lag(t):
        s = t - tau
        if s <= 0:
            return y0
        k = int(math.floor(s / h + 1e-12))
        th = (s - k * h) / h
        if th < 1e-12:
            return Y[k]
        return ((2 * th**3 - 3 * th**2 + 1) * Y[k] + (th**3 - 2 * th**2 + th) * h * F[k]
                + (-2 * th**3 + 3 * th**2) * Y[k + 1] + (th**3 - th**2) * h * F[k + 1])

    def f(t, y):
        return np.asarray(_delay_terms(y, lag(t), P2, True))

    for i in range(n):
        t, y = i * h, Y[i]
        k1 = f(t, y)
        F[i] = k1
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        Y[i + 1] = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return Y[n]


def test_dde_matches_fixed_step_oracle():
    y0 = initial_state(FULL_STATES, V=1.0)
    tr = integrate_dde(y0, y0, (0, 4), 0.5, P2)
    oracle = _rk4_dde_oracle(y0, 0.5, 4.0, 2.5e-4)
    np.testing.assert_allclose(tr.final, oracle, rtol=1e-6, atol=1e-8)


def test_dde_zero_delay_is_full_model():
    y0 = initial_state(FULL_STATES, V=1.0)
    a = integrate_dde(y0, y0, (0, 5), 0.0, P2)
    b = integrate_adaptive(FULL, y0, (0, 5), P2)
    assert np.array_equal(a.final, b.final)


def test_dde_window_edges_on_grid():
    y0 = initial_state(FULL_STATES, V=1.0)
    tr = integrate_dde(y0, y0, (2.0, 4.0), 0.5, P2)
    for edge in (2.5, 3.0, 3.5, 4.0):
        assert edge in tr.t


def test_delay_variant_routes_to_dde():
    y0 = initial_state(FULL_STATES, V=1.0)
    a = integrate_adaptive(ModelVariant(VariantKind.DELAY, tau=0.25), y0, (0, 2), P2)
    b = integrate_dde(y0, y0, (0, 2), 0.25, P2)
    assert np.array_equal(a.final, b.final)


def test_acceptance_config_defaults():
    assert ACCEPTANCE_CONFIG.rel_tol == 1e-8 and ACCEPTANCE_CONFIG.abs_tol == 1e-10

"""Time stepping for the model variants.

Three routes, selected by :attr:`IntegrationConfig.method`:

``dopri5``
    Embedded Dormand-Prince 5(4) pair with PI step control and the order-4
    continuous extension. Written here; used for non-stiff problems and as
    the explicit reference.
``radau`` / ``lsoda`` / ``bdf``
    Implicit or stiffness-switching methods from :func:`scipy.integrate.solve_ivp`
    driven with analytic Jacobians. Baseline trajectories grow exponentially
    and the fast modes (``mu2 * C_p``, ``k2 * S_p``) scale with the state,
    so these are the defaults for model runs.
``integrate_fixed_rk4``
    Classical fixed-step RK4, kept only as an independent oracle.

Treatment windows are hit exactly: every route integrates piecewise between
breakpoints, so a step endpoint sits on each boundary.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from . import model
from .errors import ConfigError, NumericalError, StiffnessError
from .model import FULL_STATES, ModelVariant, VariantKind
from .parameters import ParameterSet

log = logging.getLogger(__name__)

STIFF_METHODS = {"radau": "Radau", "lsoda": "LSODA", "bdf": "BDF"}
METHODS = ("dopri5",) + tuple(STIFF_METHODS)

UNDERSHOOT_TOL = 1e-9


@dataclass(frozen=True)
class IntegrationConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    initial_step: Optional[float] = None
    max_step: float = math.inf
    max_steps: int = 5_000_000
    dense_output: bool = True
    method: str = "radau"

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ConfigError("tolerances must be positive")
        if not self.max_step > 0:
            raise ConfigError("max_step must be positive")
        if self.initial_step is not None and not self.initial_step > 0:
            raise ConfigError("initial_step must be positive")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be at least 1")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")


ACCEPTANCE_CONFIG = IntegrationConfig(rel_tol=1e-8, abs_tol=1e-10)
# BDF survives the extreme corners of the sensitivity ranges where LSODA
# hits repeated corrector failures.
SWEEP_CONFIG = IntegrationConfig(rel_tol=1e-6, abs_tol=1e-8, method="bdf")


@dataclass
class SolverStats:
    n_steps: int = 0
    n_rejected: Optional[int] = 0  # None when the backend does not report it
    n_rhs: int = 0

    def merge(self, other: "SolverStats") -> None:
        self.n_steps += other.n_steps
        self.n_rhs += other.n_rhs
        if self.n_rejected is None or other.n_rejected is None:
            self.n_rejected = None
        else:
            self.n_rejected += other.n_rejected


@dataclass(frozen=True)
class _Piece:
    t0: float
    t1: float
    fn: Callable


@dataclass
class Trajectory:
    """Accepted-step states plus a piecewise dense interpolant.

    ``y`` has shape ``(len(t), n_states)`` and holds the raw solver output;
    see :meth:`clamped` for the output-side treatment of round-off negatives.
    """

    t: np.ndarray
    y: np.ndarray
    names: tuple[str, ...]
    stats: SolverStats
    method: str
    pieces: list = field(default_factory=list, repr=False)

    def __call__(self, t) -> np.ndarray:
        scalar = np.ndim(t) == 0
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((ts.size, self.y.shape[1]))
        for k, tk in enumerate(ts):
            out[k] = self._at(tk)
        return out[0] if scalar else out

    def _at(self, tk: float) -> np.ndarray:
        i = int(np.searchsorted(self.t, tk))
        if i < self.t.size and self.t[i] == tk:
            return self.y[i].copy()
        if not (self.t[0] <= tk <= self.t[-1]):
            raise ValueError(f"t={tk} outside trajectory span [{self.t[0]}, {self.t[-1]}]")
        if not self.pieces:
            raise ValueError("trajectory was computed without dense output")
        starts = [pc.t0 for pc in self.pieces]
        j = max(0, int(np.searchsorted(starts, tk, side="right")) - 1)
        return np.asarray(self.pieces[j].fn(tk), dtype=float).reshape(-1)

    def sample(self, grid: Sequence[float]) -> np.ndarray:
        return self(np.asarray(grid, dtype=float))

    def component(self, name: str) -> np.ndarray:
        return self.y[:, self.names.index(name)]

    @property
    def final(self) -> np.ndarray:
        return self.y[-1].copy()

    def clamped(self, states: Optional[np.ndarray] = None) -> np.ndarray:
        """States with round-off negatives set to zero (for written outputs)."""
        states = self.y if states is None else states
        return np.where(states < 0, 0.0, states)


# --- Dormand-Prince 5(4) ---------------------------------------------------

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
# Difference between the 5th- and 4th-order weights.
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# Continuous extension (Hairer, Norsett & Wanner, DOPRI5 contd5).
_D = np.array([
    -12715105075 / 11282082432, 0.0, 87487479700 / 32700410799,
    -10690763975 / 1880347072, 701980252875 / 199316789632,
    -1453857185 / 822651844, 69997945 / 29380423,
])

_SAFETY = 0.9
_BETA = 0.04
_EXPO = 0.2 - 0.75 * _BETA
_FAC_MIN = 0.2   # largest decrease: h_new >= 0.2 h
_FAC_MAX = 10.0  # largest increase: h_new <= 10 h


class _DopriDense:
    def __init__(self, t0s, hs, rcont):
        self.t0s = np.asarray(t0s)
        self.hs = np.asarray(hs)
        self.rcont = np.asarray(rcont)

    def __call__(self, t: float) -> np.ndarray:
        i = int(np.searchsorted(self.t0s, t, side="right")) - 1
        i = min(max(i, 0), self.t0s.size - 1)
        theta = (t - self.t0s[i]) / self.hs[i]
        th1 = 1.0 - theta
        r = self.rcont[i]
        return r[0] + theta * (r[1] + th1 * (r[2] + theta * (r[3] + th1 * r[4])))


def _rms_norm(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x * x)))


def _initial_step(fun, t0, y0, f0, direction_span, rtol, atol, max_step):
    scale = atol + np.abs(y0) * rtol
    d0 = _rms_norm(y0 / scale)
    d1 = _rms_norm(f0 / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, direction_span, max_step)
    y1 = y0 + h0 * f0
    f1 = fun(t0 + h0, y1)
    d2 = _rms_norm((f1 - f0) / scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, direction_span, max_step)


def _dopri5_segment(fun, t0: float, t1: float, y0: np.ndarray, cfg: IntegrationConfig,
                    h_prev: Optional[float] = None):
    span = t1 - t0
    stats = SolverStats()
    ts, ys = [t0], [y0.copy()]
    dense_t0, dense_h, dense_r = [], [], []
    y = y0.copy()
    t = t0
    k = np.empty((7, y.size))
    k[0] = fun(t, y)
    stats.n_rhs += 1
    if h_prev is not None:
        h = min(h_prev, span, cfg.max_step)
    elif cfg.initial_step is not None:
        h = min(cfg.initial_step, span, cfg.max_step)
    else:
        h = _initial_step(fun, t, y, k[0], span, cfg.rel_tol, cfg.abs_tol, cfg.max_step)
        stats.n_rhs += 1
    h_min = 1e-12 * span
    facold = 1e-4
    last_rejected = False
    while t < t1:
        if stats.n_steps + (stats.n_rejected or 0) >= cfg.max_steps:
            raise NumericalError(f"max_steps={cfg.max_steps} exceeded at t={t:.6g}")
        if h < h_min:
            raise StiffnessError(
                f"step size {h:.3g} underflowed below {h_min:.3g} at t={t:.6g}; the problem "
                f"looks stiff here, use method='radau' or 'lsoda'"
            )
        last = t + h >= t1
        if last:
            h = t1 - t
        for s in range(1, 7):
            ks = y + h * np.dot(_A[s], k[:s])
            k[s] = fun(t + _C[s] * h, ks)
        stats.n_rhs += 6
        y_new = ks  # stage 7 is evaluated at the 5th-order solution (FSAL)
        err_vec = h * np.dot(_E, k)
        scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        err = _rms_norm(err_vec / scale)
        if not np.isfinite(err):
            h *= _FAC_MIN
            stats.n_rejected += 1
            last_rejected = True
            continue
        fac11 = err ** _EXPO
        if err <= 1.0:
            fac = fac11 / facold ** _BETA
            fac = max(1.0 / _FAC_MAX, min(1.0 / _FAC_MIN, fac / _SAFETY))
            facold = max(err, 1e-4)
            if cfg.dense_output:
                ydiff = y_new - y
                bspl = h * k[0] - ydiff
                dense_t0.append(t)
                dense_h.append(h)
                dense_r.append(np.array([
                    y, ydiff, bspl, ydiff - h * k[6] - bspl, h * np.dot(_D, k),
                ]))
            t = t1 if last else t + h
            y = y_new
            k[0] = k[6]
            stats.n_steps += 1
            ts.append(t)
            ys.append(y.copy())
            if not np.all(np.isfinite(y)):
                raise NumericalError(f"non-finite state at t={t:.6g}")
            h_new = h / fac
            if last_rejected:
                h_new = min(h_new, h)
            last_rejected = False
            h = min(h_new, cfg.max_step)
        else:
            h = h / min(1.0 / _FAC_MIN, fac11 / _SAFETY)
            stats.n_rejected += 1
            last_rejected = True
    dense = _DopriDense(dense_t0, dense_h, dense_r) if cfg.dense_output and dense_t0 else None
    return np.array(ts), np.array(ys), dense, stats, h


def _stiff_segment(fun, jac, t0, t1, y0, cfg: IntegrationConfig):
    kwargs = dict(method=STIFF_METHODS[cfg.method], rtol=cfg.rel_tol, atol=cfg.abs_tol,
                  dense_output=cfg.dense_output, max_step=cfg.max_step)
    if cfg.initial_step is not None:
        kwargs["first_step"] = cfg.initial_step
    if jac is not None:
        kwargs["jac"] = jac
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            sol = solve_ivp(fun, (t0, t1), y0, **kwargs)
    except (OverflowError, FloatingPointError) as exc:
        raise NumericalError(f"{cfg.method} overflowed on [{t0:.6g}, {t1:.6g}]: {exc}") from exc
    except ValueError as exc:
        # the LU factorisation rejects a Jacobian that has overflowed
        if "infs or NaNs" not in str(exc):
            raise
        raise NumericalError(f"{cfg.method} overflowed on [{t0:.6g}, {t1:.6g}]: {exc}") from exc
    if sol.status != 0:
        raise StiffnessError(f"{cfg.method} failed on [{t0:.6g}, {t1:.6g}]: {sol.message}")
    if not np.all(np.isfinite(sol.y)):
        bad = int(np.argmax(~np.all(np.isfinite(sol.y), axis=0)))
        raise NumericalError(f"non-finite state at t={sol.t[bad]:.6g}")
    if sol.t.size - 1 > cfg.max_steps:
        raise NumericalError(f"max_steps={cfg.max_steps} exceeded on [{t0:.6g}, {t1:.6g}]")
    stats = SolverStats(n_steps=sol.t.size - 1, n_rejected=None, n_rhs=int(sol.nfev))
    dense = sol.sol if cfg.dense_output else None
    return sol.t, sol.y.T, dense, stats


def _segments(variant: ModelVariant, p: ParameterSet, t_span):
    """Yield ``(t_a, t_b, fun, jac)`` pieces with breakpoints at regime changes."""
    t0, t1 = t_span
    kind = variant.kind
    if kind in (VariantKind.FULL, VariantKind.DELAY):
        hbx = variant.hbx_enabled
        yield t0, t1, (lambda t, y: model.rhs_full(t, y, p, hbx)), \
            (lambda t, y: model.jac_full(t, y, p, hbx))
    elif kind is VariantKind.SIMPLIFIED:
        yield t0, t1, (lambda t, y: model.rhs_simplified(t, y, p)), \
            (lambda t, y: model.jac_simplified(t, y, p))
    elif kind is VariantKind.SIMPLIFIED_TREATED:
        a, b = variant.window
        cuts = sorted({t0, t1, *[c for c in (a, b) if t0 < c < t1]})
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            eps = variant.epsilon if (a <= lo and hi <= b and a < b) else 0.0
            yield lo, hi, (lambda t, y, e=eps: model.rhs_treated_regime(y, p, e)), \
                (lambda t, y, e=eps: model.jac_treated_regime(y, p, e))
    else:  # pragma: no cover
        raise ConfigError(f"unsupported variant {kind}")


def _check_span(t_span) -> tuple[float, float]:
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not (math.isfinite(t0) and math.isfinite(t1)) or not t1 > t0:
        raise ConfigError(f"t_span must be a non-empty increasing interval, got {t_span}")
    return t0, t1


def _check_y0(y0, names) -> np.ndarray:
    y0 = np.array(y0, dtype=float)
    if y0.shape != (len(names),):
        raise ConfigError(f"initial state must have {len(names)} components, got shape {y0.shape}")
    if not np.all(np.isfinite(y0)):
        raise ConfigError("initial state must be finite")
    if np.any(y0 < 0):
        raise ConfigError("initial state must be non-negative")
    return y0


def check_undershoot(traj: Trajectory, tol: float = UNDERSHOOT_TOL, floor: float = 0.0) -> None:
    """Abort when any component dips below ``-tol`` times its trajectory maximum."""
    for j, name in enumerate(traj.names):
        col = traj.y[:, j]
        lowest = float(col.min())
        if lowest >= 0:
            continue
        peak = max(float(col.max()), floor)
        if lowest < -tol * peak or peak == 0.0:
            i = int(col.argmin())
            steps = np.diff(traj.t)
            h = float(steps[max(i - 1, 0)]) if steps.size else float("nan")
            raise NumericalError(
                f"component {name} undershot to {lowest:.3g} at t={traj.t[i]:.6g} "
                f"(trajectory max {peak:.3g}, local step {h:.3g}); tighten rel_tol or max_step"
            )


def _assemble(chunks, names, method) -> Trajectory:
    ts, ys, pieces = [], [], []
    stats = SolverStats(n_rejected=0 if method == "dopri5" else None)
    for k, (t, y, dense, st) in enumerate(chunks):
        if k > 0:
            t, y = t[1:], y[1:]  # drop the duplicated breakpoint
        ts.append(t)
        ys.append(y)
        stats.merge(st)
        if dense is not None:
            pieces.append(_Piece(float(chunks[k][0][0]), float(chunks[k][0][-1]), dense))
    return Trajectory(np.concatenate(ts), np.vstack(ys), tuple(names), stats, method, pieces)


def integrate_adaptive(variant: ModelVariant, y0, t_span, p: ParameterSet,
                       cfg: IntegrationConfig = ACCEPTANCE_CONFIG,
                       check_negative: bool = True) -> Trajectory:
    """Adaptive integration of any model variant over ``t_span`` (days).

    A delay variant with positive ``tau`` is forwarded to :func:`integrate_dde`
    with constant pre-history ``y0``.
    """
    t0, t1 = _check_span(t_span)
    variant.check_horizon(t1)
    names = variant.state_names
    y = _check_y0(y0, names)
    if variant.kind is VariantKind.DELAY and variant.tau > 0:
        return integrate_dde(y, y, (t0, t1), variant.tau, p, cfg,
                             hbx_enabled=variant.hbx_enabled, check_negative=check_negative)
    chunks = []
    h_prev = None
    for a, b, fun, jac in _segments(variant, p, (t0, t1)):
        if cfg.method == "dopri5":
            t, ys, dense, st, h_prev = _dopri5_segment(fun, a, b, y, cfg, h_prev)
        else:
            t, ys, dense, st = _stiff_segment(fun, jac, a, b, y, cfg)
        chunks.append((t, ys, dense, st))
        y = ys[-1].copy()
    traj = _assemble(chunks, names, cfg.method)
    if check_negative:
        check_undershoot(traj, floor=cfg.abs_tol)
    return traj


def solve_system(fun, y0, t_span, cfg: IntegrationConfig = ACCEPTANCE_CONFIG,
                 jac: Optional[Callable] = None) -> Trajectory:
    """Integrate a user-supplied system ``y' = fun(t, y)`` with the configured method."""
    t0, t1 = _check_span(t_span)
    y = np.array(y0, dtype=float).reshape(-1)
    names = tuple(f"y{i}" for i in range(y.size))
    if cfg.method == "dopri5":
        t, ys, dense, st, _ = _dopri5_segment(fun, t0, t1, y, cfg)
    else:
        t, ys, dense, st = _stiff_segment(fun, jac, t0, t1, y, cfg)
    return _assemble([(t, ys, dense, st)], names, cfg.method)


def integrate_fixed_rk4(variant: ModelVariant, y0, t_span, p: ParameterSet, step: float,
                        fun: Optional[Callable] = None) -> Trajectory:
    """Classical RK4 with a fixed step; the cross-check oracle.

    ``fun`` overrides the model right-hand side (used for scalar test
    problems). The trajectory carries a cubic Hermite interpolant.
    """
    t0, t1 = _check_span(t_span)
    if not step > 0:
        raise ConfigError("step must be positive")
    n = int(round((t1 - t0) / step))
    if n < 1 or abs(n * step - (t1 - t0)) > 1e-9 * (t1 - t0):
        raise ConfigError(f"step {step} does not divide the span {t1 - t0}")
    if fun is None:
        names = variant.state_names
        y = _check_y0(y0, names)
        segs = list(_segments(variant, p, (t0, t1)))

        def fun(t, yy):
            for a, b, f, _ in segs:
                if t < b or b == segs[-1][1]:
                    return f(t, yy)
    else:
        y = np.array(y0, dtype=float)
        names = tuple(f"y{i}" for i in range(y.size))
    ts = t0 + step * np.arange(n + 1)
    ts[-1] = t1
    ys = np.empty((n + 1, y.size))
    fs = np.empty((n + 1, y.size))
    ys[0] = y
    h = step
    k1 = fun(ts[0], y)
    for i in range(n):
        t = ts[i]
        fs[i] = k1
        k2 = fun(t + h / 2, y + h / 2 * k1)
        k3 = fun(t + h / 2, y + h / 2 * k2)
        k4 = fun(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise NumericalError(f"non-finite state at t={ts[i + 1]:.6g} (fixed step {step})")
        ys[i + 1] = y
        k1 = fun(ts[i + 1], y)
    fs[n] = k1
    dense = CubicHermiteSpline(ts, ys, fs, axis=0)
    stats = SolverStats(n_steps=n, n_rejected=0, n_rhs=4 * n + 1)
    return Trajectory(ts, ys, tuple(names), stats, "rk4", [_Piece(t0, t1, dense)])


def integrate_dde(y0, pre_history, t_span, tau: float, p: ParameterSet,
                  cfg: IntegrationConfig = ACCEPTANCE_CONFIG, hbx_enabled: bool = True,
                  check_negative: bool = True) -> Trajectory:
    """Method of steps for the delay model with constant pre-history.

    Windows have length ``tau`` starting at ``t_span[0]``, so step endpoints
    fall on every propagated derivative discontinuity ``t0 + k*tau``. Lagged
    states come from the dense output of earlier windows.
    """
    t0, t1 = _check_span(t_span)
    if not tau >= 0:
        raise ConfigError(f"tau must be >= 0, got {tau!r}")
    y = _check_y0(y0, FULL_STATES)
    if tau == 0:
        return integrate_adaptive(ModelVariant(VariantKind.FULL, hbx_enabled=hbx_enabled),
                                  y, (t0, t1), p, cfg, check_negative)
    pre = np.array(pre_history, dtype=float)
    if pre.shape != y.shape:
        raise ConfigError("pre-history must have the same shape as the initial state")
    history = model.HistoryFunction(t0, pre)
    dense_cfg = dataclasses.replace(cfg, dense_output=True)
    chunks = []
    h_prev = None
    k = 0
    while True:
        a = t0 + k * tau
        if a >= t1:
            break
        b = min(t0 + (k + 1) * tau, t1)

        def fun(t, yy):
            lagged = history(t - tau).tolist()
            cur = yy.tolist()
            for name, value in zip(FULL_STATES, cur):
                if not math.isfinite(value):
                    raise NumericalError(f"non-finite state component {name} = {value!r}")
            return model._delay_terms(cur, lagged, p, hbx_enabled)

        def jac(t, yy):
            return model.jac_delay_current(t, yy, history(t - tau), p, hbx_enabled)

        if cfg.method == "dopri5":
            t, ys, dense, st, h_prev = _dopri5_segment(fun, a, b, y, dense_cfg, h_prev)
        else:
            t, ys, dense, st = _stiff_segment(fun, jac, a, b, y, dense_cfg)
        if dense is None:  # pragma: no cover - dense output is forced above
            raise NumericalError("delay integration needs dense output")
        history.add_segment(a, b, dense)
        chunks.append((t, ys, dense, st))
        y = ys[-1].copy()
        k += 1
    traj = _assemble(chunks, FULL_STATES, cfg.method)
    if check_negative:
        check_undershoot(traj, floor=cfg.abs_tol)
    return traj

"""State layout and right-hand sides of the intracellular HBV model.

Four variants share one parameter set:

* ``full``: 15 compartments, HBx-modulated active cccDNA fraction.
* ``delay``: the full system with lagged source terms.
* ``simplified``: 12 compartments, decay terms dropped except for cccDNA and
  virus, active fraction pinned to one, R_h/H/D_L removed.
* ``simplified-treated``: the simplified system with reverse transcription
  (``beta1``) scaled by ``1 - epsilon`` during a treatment window.

All functions here are pure; nothing holds mutable state except
:class:`HistoryFunction`, which only grows.
"""

from __future__ import annotations

import bisect
import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, HistoryError, NumericalError
from .parameters import ParameterSet

FULL_STATES: tuple[str, ...] = (
    "R", "C", "R_g", "R_s", "R_h", "H", "P", "Z", "C_p", "P_g", "S_p", "S", "D", "D_L", "V",
)
SIMPLIFIED_STATES: tuple[str, ...] = (
    "R", "C", "R_g", "R_s", "P", "Z", "C_p", "P_g", "S_p", "S", "D", "V",
)
# Positions of the simplified compartments inside the full state vector.
SIMPLIFIED_INDEX: tuple[int, ...] = tuple(FULL_STATES.index(n) for n in SIMPLIFIED_STATES)

DSDNA_FRACTION = 0.9


class VariantKind(str, enum.Enum):
    FULL = "full"
    DELAY = "delay"
    SIMPLIFIED = "simplified"
    SIMPLIFIED_TREATED = "simplified-treated"


@dataclass(frozen=True)
class ModelVariant:
    """Model selector plus variant-specific settings.

    ``hbx_enabled=False`` pins the active cccDNA fraction to one. The
    simplified variants always pin it, whatever this flag says.
    """

    kind: VariantKind = VariantKind.FULL
    tau: float = 0.0
    epsilon: float = 0.0
    treatment_start: float = 0.0
    treatment_duration: float = 0.0
    hbx_enabled: bool = True

    def __post_init__(self):
        object.__setattr__(self, "kind", VariantKind(self.kind))
        if not self.tau >= 0 or not math.isfinite(self.tau):
            raise ConfigError(f"tau must be finite and >= 0, got {self.tau!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must lie in [0, 1], got {self.epsilon!r}")
        if self.treatment_start < 0 or self.treatment_duration < 0:
            raise ConfigError("treatment window must have non-negative start and duration")

    @property
    def state_names(self) -> tuple[str, ...]:
        if self.kind in (VariantKind.SIMPLIFIED, VariantKind.SIMPLIFIED_TREATED):
            return SIMPLIFIED_STATES
        return FULL_STATES

    @property
    def window(self) -> tuple[float, float]:
        return (self.treatment_start, self.treatment_start + self.treatment_duration)

    def check_horizon(self, t_end: float) -> None:
        if self.kind is VariantKind.SIMPLIFIED_TREATED and self.window[1] > t_end:
            raise ConfigError(
                f"treatment window {self.window} extends past the simulation horizon {t_end}"
            )


def phi(H: float, phi0: float) -> float:
    """Active fraction of cccDNA given the HBx level ``H``.

    Equals ``phi0`` when there is no HBx and tends to one as HBx accumulates.
    """
    if H < 0:
        raise ValueError(f"H must be non-negative, got {H!r}")
    if not 0.0 <= phi0 < 1.0:
        raise ValueError(f"phi0 must lie in [0, 1) for the HBx-modulated fraction, got {phi0!r}")
    return _active_fraction(H, phi0)


def _active_fraction(H: float, phi0: float) -> float:
    # 1 - 1/(1/(1-phi0) + H) rearranged so that H = 0 returns phi0 exactly.
    # Tiny negative HBx from solver undershoot must not trip the domain check.
    qh = (1.0 - phi0) * max(H, 0.0)
    return (phi0 + qh) / (1.0 + qh)


def _active_fraction_slope(H: float, phi0: float) -> float:
    if H < 0:
        return 0.0
    q = 1.0 - phi0
    return q / (1.0 + q * H) * (q / (1.0 + q * H))


def _recycle_fraction(lam: float, Sp: float) -> float:
    try:
        return math.exp(-lam * Sp)
    except OverflowError:
        raise NumericalError(f"surface protein S_p = {Sp!r} is far below zero") from None


def _check_finite(y: Sequence[float], names: Sequence[str]) -> None:
    for name, value in zip(names, y):
        if not math.isfinite(value):
            raise NumericalError(f"non-finite state component {name} = {value!r}")


def rhs_full(t: float, y, p: ParameterSet, hbx_enabled: bool = True) -> np.ndarray:
    """Time derivative of the 15-compartment model."""
    y = y.tolist() if isinstance(y, np.ndarray) else list(y)
    _check_finite(y, FULL_STATES)
    R, C, Rg, Rs, Rh, H, P, Z, Cp, Pg, Sp, S, D, DL, V = y
    f = _active_fraction(H, p.phi0) if hbx_enabled else 1.0
    e = _recycle_fraction(p.lam, Sp)
    recycle = p.k1 * e * D
    release = p.k2 * (1.0 - e) * D * Sp
    pairing = p.mu1 * Rg * P
    packing = p.mu2 * Z * Cp
    return np.array([
        p.alpha1 * V - p.alpha2 * R - p.delta_r * R,
        p.alpha2 * R + recycle - p.delta_c * C,
        p.lambda_rg * f * C - pairing - p.delta_rg * Rg,
        p.lambda_rs * f * C + p.lambda_sdl * DL - p.lambda_sp * Rs - p.delta_rs * Rs,
        p.lambda_rh * f * C - p.delta_rh * Rh,
        p.lambda_h * Rh - p.delta_h * H,
        p.lambda_p * Rg - pairing - p.delta_p * P,
        pairing - packing - p.delta_z * Z,
        p.lambda_c * Rg - packing - p.delta_cp * Cp,
        packing - p.beta1 * Pg - p.delta_pg * Pg,
        p.lambda_sp * Rs - p.eta_sp * Sp - p.delta_sp * Sp,
        p.beta1 * Pg - p.beta2 * S - p.delta_s * S,
        DSDNA_FRACTION * p.beta2 * S - recycle - release - p.delta_d * D,
        (1.0 - DSDNA_FRACTION) * p.beta2 * S - p.delta_dl * DL,
        release - p.delta_v * V,
    ])


def jac_full(t: float, y, p: ParameterSet, hbx_enabled: bool = True) -> np.ndarray:
    R, C, Rg, Rs, Rh, H, P, Z, Cp, Pg, Sp, S, D, DL, V = np.asarray(y, dtype=float).tolist()
    J = np.zeros((15, 15))
    if hbx_enabled:
        f = _active_fraction(H, p.phi0)
        df_dH = _active_fraction_slope(H, p.phi0)
    else:
        f, df_dH = 1.0, 0.0
    e = _recycle_fraction(p.lam, Sp)
    # release = k2 (1 - e) D Sp; recycle = k1 e D
    drel_dD = p.k2 * (1.0 - e) * Sp
    drel_dSp = p.k2 * D * ((1.0 - e) + p.lam * e * Sp)
    drec_dD = p.k1 * e
    drec_dSp = -p.lam * p.k1 * e * D

    J[0, 14] = p.alpha1
    J[0, 0] = -p.alpha2 - p.delta_r
    J[1, 0] = p.alpha2
    J[1, 12] = drec_dD
    J[1, 10] = drec_dSp
    J[1, 1] = -p.delta_c
    J[2, 1] = p.lambda_rg * f
    J[2, 5] = p.lambda_rg * C * df_dH
    J[2, 2] = -p.mu1 * P - p.delta_rg
    J[2, 6] = -p.mu1 * Rg
    J[3, 1] = p.lambda_rs * f
    J[3, 5] = p.lambda_rs * C * df_dH
    J[3, 13] = p.lambda_sdl
    J[3, 3] = -p.lambda_sp - p.delta_rs
    J[4, 1] = p.lambda_rh * f
    J[4, 5] = p.lambda_rh * C * df_dH
    J[4, 4] = -p.delta_rh
    J[5, 4] = p.lambda_h
    J[5, 5] = -p.delta_h
    J[6, 2] = p.lambda_p - p.mu1 * P
    J[6, 6] = -p.mu1 * Rg - p.delta_p
    J[7, 2] = p.mu1 * P
    J[7, 6] = p.mu1 * Rg
    J[7, 7] = -p.mu2 * Cp - p.delta_z
    J[7, 8] = -p.mu2 * Z
    J[8, 2] = p.lambda_c
    J[8, 7] = -p.mu2 * Cp
    J[8, 8] = -p.mu2 * Z - p.delta_cp
    J[9, 7] = p.mu2 * Cp
    J[9, 8] = p.mu2 * Z
    J[9, 9] = -p.beta1 - p.delta_pg
    J[10, 3] = p.lambda_sp
    J[10, 10] = -p.eta_sp - p.delta_sp
    J[11, 9] = p.beta1
    J[11, 11] = -p.beta2 - p.delta_s
    J[12, 11] = DSDNA_FRACTION * p.beta2
    J[12, 12] = -drec_dD - drel_dD - p.delta_d
    J[12, 10] = -drec_dSp - drel_dSp
    J[13, 11] = (1.0 - DSDNA_FRACTION) * p.beta2
    J[13, 13] = -p.delta_dl
    J[14, 12] = drel_dD
    J[14, 10] = drel_dSp
    J[14, 14] = -p.delta_v
    return J


def _simplified(y, p: ParameterSet, rt_factor: float) -> np.ndarray:
    y = y.tolist() if isinstance(y, np.ndarray) else list(y)
    _check_finite(y, SIMPLIFIED_STATES)
    R, C, Rg, Rs, P, Z, Cp, Pg, Sp, S, D, V = y
    e = _recycle_fraction(p.lam, Sp)
    recycle = p.k1 * e * D
    release = p.k2 * (1.0 - e) * D * Sp
    pairing = p.mu1 * Rg * P
    packing = p.mu2 * Z * Cp
    rt = rt_factor * p.beta1 * Pg
    return np.array([
        p.alpha1 * V - p.alpha2 * R,
        p.alpha2 * R + recycle - p.delta_c * C,
        p.lambda_rg * C - pairing,
        p.lambda_rs * C - p.lambda_sp * Rs,
        p.lambda_p * Rg - pairing,
        pairing - packing,
        p.lambda_c * Rg - packing,
        packing - rt,
        p.lambda_sp * Rs - p.eta_sp * Sp,
        rt - p.beta2 * S,
        p.beta2 * S - recycle - release,
        release - p.delta_v * V,
    ])


def _jac_simplified(y, p: ParameterSet, rt_factor: float) -> np.ndarray:
    R, C, Rg, Rs, P, Z, Cp, Pg, Sp, S, D, V = np.asarray(y, dtype=float).tolist()
    J = np.zeros((12, 12))
    e = _recycle_fraction(p.lam, Sp)
    drel_dD = p.k2 * (1.0 - e) * Sp
    drel_dSp = p.k2 * D * ((1.0 - e) + p.lam * e * Sp)
    drec_dD = p.k1 * e
    drec_dSp = -p.lam * p.k1 * e * D
    b1 = rt_factor * p.beta1
    J[0, 11] = p.alpha1
    J[0, 0] = -p.alpha2
    J[1, 0] = p.alpha2
    J[1, 10] = drec_dD
    J[1, 8] = drec_dSp
    J[1, 1] = -p.delta_c
    J[2, 1] = p.lambda_rg
    J[2, 2] = -p.mu1 * P
    J[2, 4] = -p.mu1 * Rg
    J[3, 1] = p.lambda_rs
    J[3, 3] = -p.lambda_sp
    J[4, 2] = p.lambda_p - p.mu1 * P
    J[4, 4] = -p.mu1 * Rg
    J[5, 2] = p.mu1 * P
    J[5, 4] = p.mu1 * Rg
    J[5, 5] = -p.mu2 * Cp
    J[5, 6] = -p.mu2 * Z
    J[6, 2] = p.lambda_c
    J[6, 5] = -p.mu2 * Cp
    J[6, 6] = -p.mu2 * Z
    J[7, 5] = p.mu2 * Cp
    J[7, 6] = p.mu2 * Z
    J[7, 7] = -b1
    J[8, 3] = p.lambda_sp
    J[8, 8] = -p.eta_sp
    J[9, 7] = b1
    J[9, 9] = -p.beta2
    J[10, 9] = p.beta2
    J[10, 10] = -drec_dD - drel_dD
    J[10, 8] = -drec_dSp - drel_dSp
    J[11, 10] = drel_dD
    J[11, 8] = drel_dSp
    J[11, 11] = -p.delta_v
    return J


def rhs_simplified(t: float, y, p: ParameterSet) -> np.ndarray:
    """Time derivative of the 12-compartment reduced model.

    The dsDNA equation takes all of ``beta2 * S`` (no 0.9 split), as written
    for the reduced system.
    """
    return _simplified(y, p, 1.0)


def jac_simplified(t: float, y, p: ParameterSet) -> np.ndarray:
    return _jac_simplified(y, p, 1.0)


def in_window(t: float, window: tuple[float, float]) -> bool:
    return window[0] <= t <= window[1]


def rhs_treated(t: float, y, p: ParameterSet, epsilon: float,
                window: tuple[float, float]) -> np.ndarray:
    """Reduced model under a reverse-transcriptase inhibitor of efficacy ``epsilon``.

    Inside the closed window ``beta1`` is replaced by ``(1 - epsilon) * beta1``
    in the pgRNA-capsid and ssDNA equations only. The integrator never relies
    on the boundary convention: it splits at both window edges and calls
    :func:`rhs_treated_regime` with the regime fixed per segment.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon!r}")
    return rhs_treated_regime(y, p, epsilon if in_window(t, window) else 0.0)


def rhs_treated_regime(y, p: ParameterSet, epsilon: float) -> np.ndarray:
    return _simplified(y, p, 1.0 - epsilon)


def jac_treated_regime(y, p: ParameterSet, epsilon: float) -> np.ndarray:
    return _jac_simplified(y, p, 1.0 - epsilon)


class HistoryFunction:
    """Past states for delay terms.

    Constant ``pre_state`` for ``t <= t0``; afterwards the dense output of
    each integrated segment, appended in time order.
    """

    def __init__(self, t0: float, pre_state, tol: float = 1e-12):
        self.t0 = float(t0)
        self.pre_state = np.array(pre_state, dtype=float)
        self.tol = tol
        self._starts: list[float] = []
        self._ends: list[float] = []
        self._pieces: list[Callable[[float], np.ndarray]] = []

    @property
    def t_end(self) -> float:
        return self._ends[-1] if self._ends else self.t0

    def add_segment(self, t_start: float, t_end: float, interpolant: Callable[[float], np.ndarray]):
        if abs(t_start - self.t_end) > self.tol * max(1.0, abs(t_start)):
            raise HistoryError(f"segment starting at {t_start} leaves a gap after {self.t_end}")
        self._starts.append(float(t_start))
        self._ends.append(float(t_end))
        self._pieces.append(interpolant)

    def __call__(self, t: float) -> np.ndarray:
        if t <= self.t0:
            return self.pre_state
        slack = self.tol * max(1.0, abs(t))
        if t > self.t_end + slack:
            raise HistoryError(f"history queried at t={t}, recorded only up to t={self.t_end}")
        i = bisect.bisect_left(self._ends, t)
        i = min(i, len(self._pieces) - 1)
        return np.asarray(self._pieces[i](min(t, self._ends[i])), dtype=float)


def constant_history(state) -> HistoryFunction:
    """History that is ``state`` at every time (no segments recorded)."""
    h = HistoryFunction(math.inf, state)
    return h


def _delay_terms(y, yd, p: ParameterSet, hbx_enabled: bool):
    R, C, Rg, Rs, Rh, H, P, Z, Cp, Pg, Sp, S, D, DL, V = y
    (Rd, Cd, Rgd, Rsd, Rhd, Hd, Pd, Zd, Cpd, Pgd, Spd, Sd, Dd, DLd, Vd) = yd
    f = _active_fraction(H, p.phi0) if hbx_enabled else 1.0
    e = _recycle_fraction(p.lam, Sp)
    ed = _recycle_fraction(p.lam, Spd)
    return np.array([
        p.alpha1 * Vd - p.alpha2 * R - p.delta_r * R,
        p.alpha2 * Rd + p.k1 * ed * Dd - p.delta_c * C,
        p.lambda_rg * f * Cd - p.mu1 * Rg * Pd - p.delta_rg * Rg,
        p.lambda_rs * f * Cd + p.lambda_sdl * DLd - p.lambda_sp * Rs - p.delta_rs * Rs,
        p.lambda_rh * f * Cd - p.delta_rh * Rh,
        p.lambda_h * Rhd - p.delta_h * H,
        p.lambda_p * Rgd - p.mu1 * Rgd * P - p.delta_p * P,
        p.mu1 * Rgd * Pd - p.mu2 * Z * Cpd - p.delta_z * Z,
        p.lambda_c * Rgd - p.mu2 * Zd * Cp - p.delta_cp * Cp,
        # beta1 * P_g loss restored so that tau = 0 recovers the full model
        p.mu2 * Zd * Cpd - p.beta1 * Pg - p.delta_pg * Pg,
        p.lambda_sp * Rsd - p.eta_sp * Sp - p.delta_sp * Sp,
        p.beta1 * Pgd - p.beta2 * S - p.delta_s * S,
        DSDNA_FRACTION * p.beta2 * Sd - p.k1 * e * D - p.k2 * (1.0 - e) * D * Sp - p.delta_d * D,
        (1.0 - DSDNA_FRACTION) * p.beta2 * Sd - p.delta_dl * DL,
        p.k2 * (1.0 - ed) * Dd * Spd - p.delta_v * V,
    ])


def rhs_delay(t: float, y, history: Callable[[float], np.ndarray], tau: float,
              p: ParameterSet, hbx_enabled: bool = True) -> np.ndarray:
    """Delay model: source terms read the state at ``t - tau`` from ``history``.

    With ``tau == 0`` the lagged state is the current state and the result
    equals :func:`rhs_full`.
    """
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau!r}")
    y = y.tolist() if isinstance(y, np.ndarray) else list(y)
    _check_finite(y, FULL_STATES)
    yd = y if tau == 0 else np.asarray(history(t - tau), dtype=float).tolist()
    _check_finite(yd, FULL_STATES)
    return _delay_terms(y, yd, p, hbx_enabled)


def jac_delay_current(t: float, y, yd, p: ParameterSet, hbx_enabled: bool = True) -> np.ndarray:
    """Jacobian of the delay right-hand side w.r.t. the current state only."""
    R, C, Rg, Rs, Rh, H, P, Z, Cp, Pg, Sp, S, D, DL, V = np.asarray(y, dtype=float).tolist()
    (Rd, Cd, Rgd, Rsd, Rhd, Hd, Pd, Zd, Cpd, Pgd, Spd, Sd, Dd, DLd, Vd) = \
        np.asarray(yd, dtype=float).tolist()
    J = np.zeros((15, 15))
    df_dH = _active_fraction_slope(H, p.phi0) if hbx_enabled else 0.0
    e = _recycle_fraction(p.lam, Sp)
    J[0, 0] = -p.alpha2 - p.delta_r
    J[1, 1] = -p.delta_c
    J[2, 5] = p.lambda_rg * Cd * df_dH
    J[2, 2] = -p.mu1 * Pd - p.delta_rg
    J[3, 5] = p.lambda_rs * Cd * df_dH
    J[3, 3] = -p.lambda_sp - p.delta_rs
    J[4, 5] = p.lambda_rh * Cd * df_dH
    J[4, 4] = -p.delta_rh
    J[5, 5] = -p.delta_h
    J[6, 6] = -p.mu1 * Rgd - p.delta_p
    J[7, 7] = -p.mu2 * Cpd - p.delta_z
    J[8, 8] = -p.mu2 * Zd - p.delta_cp
    J[9, 9] = -p.beta1 - p.delta_pg
    J[10, 10] = -p.eta_sp - p.delta_sp
    J[11, 11] = -p.beta2 - p.delta_s
    J[12, 12] = -p.k1 * e - p.k2 * (1.0 - e) * Sp - p.delta_d
    J[12, 10] = p.lam * p.k1 * e * D - p.k2 * D * ((1.0 - e) + p.lam * e * Sp)
    J[13, 13] = -p.delta_dl
    J[14, 14] = -p.delta_v
    return J


def to_simplified(y_full) -> np.ndarray:
    """Drop R_h, H and D_L from a full state vector."""
    return np.asarray(y_full, dtype=float)[list(SIMPLIFIED_INDEX)]


def initial_state(names: Sequence[str], **values: float) -> np.ndarray:
    """State vector with the named compartments set and everything else zero."""
    y = np.zeros(len(names))
    for name, value in values.items():
        if name not in names:
            raise ConfigError(f"unknown compartment {name!r}; expected one of {', '.join(names)}")
        if value < 0 or not math.isfinite(value):
            raise ConfigError(f"initial value for {name} must be finite and >= 0, got {value!r}")
        y[names.index(name)] = value
    return y

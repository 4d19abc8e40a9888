"""Two-state bicycle model of lateral dynamics and its output maps.

States are ``x = (v_y, r)`` (lateral velocity in m/s, yaw rate in rad/s);
inputs are the yaw moment ``Mz`` (N*m) and the steering angle ``delta`` (rad).
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import numerics


class StiffnessConvention(str, enum.Enum):
    # factor 2: Cf/Cr are per tyre, two tyres per axle
    PER_AXLE_PAIR = "per_axle_pair"
    # factor 1: Cf/Cr already lump both tyres on the axle
    PER_AXLE = "per_axle"

    @property
    def factor(self) -> float:
        return 2.0 if self is StiffnessConvention.PER_AXLE_PAIR else 1.0


class OutputConfig(str, enum.Enum):
    YAW_RATE = "yaw_rate"
    LATERAL_ACCEL = "lateral_accel"
    COMBINED = "combined"
    LONGITUDINAL_ACCEL = "longitudinal_accel"


class PhaseClass(str, enum.Enum):
    MINIMUM_PHASE = "minimum_phase"
    NON_MINIMUM_PHASE = "non_minimum_phase"
    BOUNDARY = "boundary"


@dataclass(frozen=True)
class VehicleParams:
    """Physical constants. SI units throughout (kg, kg*m^2, m, N/rad, m/s)."""

    m: float
    Iz: float
    a: float
    b: float
    Cf: float
    Cr: float
    vx: float
    stiffness_convention: StiffnessConvention = StiffnessConvention.PER_AXLE_PAIR

    def __post_init__(self):
        object.__setattr__(self, "stiffness_convention",
                           StiffnessConvention(self.stiffness_convention))
        for name in ("m", "Iz", "a", "b", "Cf", "Cr", "vx"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")

    @property
    def k(self) -> float:
        return self.stiffness_convention.factor

    def replace(self, **changes) -> "VehicleParams":
        data = asdict(self)
        data.update(changes)
        return VehicleParams(**data)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["stiffness_convention"] = self.stiffness_convention.value
        return data


# Class-C 2017 hatchback used in the case studies.
TABLE1 = VehicleParams(m=1412.0, Iz=1536.7, a=1.015, b=1.895, Cf=58400.0, Cr=40400.0,
                       vx=16.67)


@dataclass(frozen=True)
class LateralModel:
    A: np.ndarray
    B: np.ndarray
    E: np.ndarray
    params: VehicleParams

    def __post_init__(self):
        for name in ("A", "B", "E"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def a11(self) -> float:
        return float(self.A[0, 0])

    @property
    def a12(self) -> float:
        return float(self.A[0, 1])

    @property
    def a21(self) -> float:
        return float(self.A[1, 0])

    @property
    def a22(self) -> float:
        return float(self.A[1, 1])

    @property
    def b2(self) -> float:
        return float(self.B[1])

    @property
    def e1(self) -> float:
        return float(self.E[0])

    @property
    def e2(self) -> float:
        return float(self.E[1])

    def deriv(self, x, mz: float, delta: float) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float) + self.B * mz + self.E * delta


def build_state_space(p: VehicleParams) -> LateralModel:
    k = p.k
    coupling = p.b * p.Cr - p.a * p.Cf
    a11 = -k * (p.Cf + p.Cr) / (p.vx * p.m)
    a12 = k * coupling / (p.vx * p.m) - p.vx
    a21 = k * coupling / (p.Iz * p.vx)
    a22 = -k * (p.a ** 2 * p.Cf + p.b ** 2 * p.Cr) / (p.Iz * p.vx)
    A = [[a11, a12], [a21, a22]]
    B = [0.0, 1.0 / p.Iz]
    E = [k * p.Cf / p.m, k * p.a * p.Cf / p.Iz]
    return LateralModel(A=A, B=B, E=E, params=p)


# --- output maps -----------------------------------------------------------

CHANNEL_NAMES = {
    OutputConfig.YAW_RATE: ("r",),
    OutputConfig.LATERAL_ACCEL: ("ay",),
    OutputConfig.COMBINED: ("r", "ay"),
    OutputConfig.LONGITUDINAL_ACCEL: ("ax",),
}


@dataclass(frozen=True)
class OutputMap:
    """Either ``y = C x + D delta`` or the bilinear ``y = -r * v_y``."""

    case: OutputConfig
    C: Optional[np.ndarray] = None
    D: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.C is not None:
            C = np.atleast_2d(np.array(self.C, dtype=float))
            D = np.array(self.D if self.D is not None else np.zeros(C.shape[0]), dtype=float)
            if C.shape[1] != 2 or C.shape[0] not in (1, 2) or D.shape != (C.shape[0],):
                raise ValueError(f"bad linear output shapes C{C.shape} D{D.shape}")
            C.setflags(write=False)
            D.setflags(write=False)
            object.__setattr__(self, "C", C)
            object.__setattr__(self, "D", D)

    @property
    def is_linear(self) -> bool:
        return self.C is not None

    @property
    def channels(self) -> tuple[str, ...]:
        return CHANNEL_NAMES[self.case]

    @property
    def n_outputs(self) -> int:
        return len(self.channels)


def output_map(model: LateralModel, cfg: OutputConfig) -> OutputMap:
    cfg = OutputConfig(cfg)
    vx = model.params.vx
    lat_row = [model.a11, model.a12 + vx]
    if cfg is OutputConfig.YAW_RATE:
        return OutputMap(cfg, C=[[0.0, 1.0]], D=[0.0])
    if cfg is OutputConfig.LATERAL_ACCEL:
        return OutputMap(cfg, C=[lat_row], D=[model.e1])
    if cfg is OutputConfig.COMBINED:
        return OutputMap(cfg, C=[[0.0, 1.0], lat_row], D=[0.0, model.e1])
    return OutputMap(cfg)


def measure(omap: OutputMap, x, delta: float = 0.0) -> np.ndarray:
    vy, r = float(x[0]), float(x[1])
    if omap.C is None:
        # steering has no feedthrough into -r*v_y
        return np.array([-r * vy])
    return omap.C @ np.array([vy, r]) + omap.D * delta


def measure_fn(omap: OutputMap):
    """Scalar-arithmetic version of :func:`measure` for the simulator loop.

    Returns ``f(vy, r, delta) -> tuple`` producing the same values.
    """
    if omap.C is None:
        return lambda vy, r, delta: (-r * vy,)
    rows = [(float(c0), float(c1), float(d)) for (c0, c1), d in zip(omap.C, omap.D)]
    if len(rows) == 1:
        (c0, c1, d), = rows
        return lambda vy, r, delta: (c0 * vy + c1 * r + d * delta,)
    (p0, p1, pd), (q0, q1, qd) = rows
    return lambda vy, r, delta: (p0 * vy + p1 * r + pd * delta,
                                 q0 * vy + q1 * r + qd * delta)


# --- structural checks -----------------------------------------------------

@dataclass(frozen=True)
class HurwitzResult:
    is_hurwitz: bool
    trace: float
    det: float


def hurwitz_check(model: LateralModel) -> HurwitzResult:
    A = model.A
    tr = float(A[0, 0] + A[1, 1])
    det = float(A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0])
    return HurwitzResult(is_hurwitz=(tr < 0.0 and det > 0.0), trace=tr, det=det)


def zero_dynamics_stability_classifier(p: VehicleParams, rel_tol: float = 1e-9) -> PhaseClass:
    """Phase class of the lateral-acceleration zero from the sign of a*Cf - b*Cr."""
    front, rear = p.a * p.Cf, p.b * p.Cr
    coupling = front - rear
    if abs(coupling) <= rel_tol * max(front, rear):
        return PhaseClass.BOUNDARY
    return PhaseClass.MINIMUM_PHASE if coupling < 0 else PhaseClass.NON_MINIMUM_PHASE


# --- saturation ------------------------------------------------------------

@dataclass(frozen=True)
class SaturationLimits:
    """Symmetric limits; ``None`` disables a limit."""

    mz_max: Optional[float] = None
    delta_max: Optional[float] = None
    tire_alpha_sat: Optional[float] = None

    def __post_init__(self):
        for name in ("mz_max", "delta_max", "tire_alpha_sat"):
            value = getattr(self, name)
            if value is not None and not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be > 0 when enabled, got {value!r}")

    @property
    def any_actuator(self) -> bool:
        return self.mz_max is not None or self.delta_max is not None

    def to_dict(self) -> dict:
        return asdict(self)


NO_LIMITS = SaturationLimits()


def _clamp(value: float, limit: Optional[float]) -> float:
    if limit is None:
        return value
    if value > limit:
        return limit
    if value < -limit:
        return -limit
    return value


def saturate(mz: float, delta: float, lim: SaturationLimits) -> tuple[float, float, bool]:
    """Clamp ``(Mz, delta)``; the flag says whether anything changed."""
    mz_c = _clamp(mz, lim.mz_max)
    delta_c = _clamp(delta, lim.delta_max)
    return mz_c, delta_c, (mz_c != mz or delta_c != delta)


def tire_effective_force(alpha: float, C: float, lim: SaturationLimits) -> float:
    """Piecewise-linear lateral force: linear up to the slip knee, flat beyond."""
    if C <= 0:
        raise ValueError("cornering stiffness must be positive")
    knee = lim.tire_alpha_sat
    if knee is None or abs(alpha) <= knee:
        return C * alpha
    return math.copysign(C * knee, alpha)


def surrogate_deriv_fn(p: VehicleParams, lim: SaturationLimits):
    """Nonlinear-tyre plant ``f(vy, r, mz, delta)``.

    Axle forces go through :func:`tire_effective_force`; with the knee
    disabled this reproduces the linear model exactly (up to rounding).
    """
    k, m, Iz, a, b, vx = p.k, p.m, p.Iz, p.a, p.b, p.vx
    Cf, Cr = k * p.Cf, k * p.Cr

    def f(vy, r, mz, delta):
        alpha_f = delta - (vy + a * r) / vx
        alpha_r = -(vy - b * r) / vx
        Ff = tire_effective_force(alpha_f, Cf, lim)
        Fr = tire_effective_force(alpha_r, Cr, lim)
        return (Ff + Fr) / m - vx * r, (a * Ff - b * Fr + mz) / Iz

    return f


def linear_deriv_fn(model: LateralModel):
    (a11, a12), (a21, a22) = ((float(v) for v in row) for row in model.A)
    b2, e1, e2 = model.b2, model.e1, model.e2

    def f(vy, r, mz, delta):
        return a11 * vy + a12 * r + e1 * delta, a21 * vy + a22 * r + b2 * mz + e2 * delta

    return f


def rosenbrock(model: LateralModel, C, s: complex) -> np.ndarray:
    """``[[sI - A, -B], [C, 0]]`` for the yaw-moment input."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    top = np.hstack([s * np.eye(2) - model.A, -model.B.reshape(2, 1)])
    bottom = np.hstack([C, np.zeros((C.shape[0], 1))])
    return np.vstack([top, bottom]).astype(complex)


def eigenvalues(model: LateralModel) -> tuple[complex, complex]:
    return numerics.eig2x2(model.A)

"""Closed-loop simulation with attacker middleware on both channels.

Every run integrates two plants side by side: the attacked one, whose inputs
pass through ``ChannelTaps.actuator`` and whose measurements pass through
``ChannelTaps.sensor``, and an attack-free nominal twin started from the same
initial state. The twin makes the stealthiness condition ``y* = y^n``
directly measurable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import numerics
from .numerics import NonFiniteError, TimeGrid
from .vehicle import (
    NO_LIMITS,
    LateralModel,
    OutputMap,
    SaturationLimits,
    linear_deriv_fn,
    measure_fn,
    saturate,
    surrogate_deriv_fn,
)


class UnobservableError(ValueError):
    pass


# --- steering --------------------------------------------------------------

@dataclass(frozen=True)
class SteeringProfile:
    """Open-loop steering command in rad.

    ``kind`` is one of ``zero``, ``constant``, ``step`` and ``sinusoid``.
    """

    kind: str = "zero"
    amplitude: float = 0.0
    frequency: float = 0.0
    phase: float = 0.0
    level: float = 0.0
    time: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "step", "sinusoid"):
            raise ValueError(f"unknown steering kind {self.kind!r}")
        if self.kind == "sinusoid":
            if self.amplitude < 0:
                raise ValueError("sinusoid amplitude must be >= 0")
            if not self.frequency > 0:
                raise ValueError("sinusoid frequency must be > 0")

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def constant(cls, level):
        return cls("constant", level=level)

    @classmethod
    def step(cls, time, level):
        return cls("step", time=time, level=level)

    @classmethod
    def sinusoid(cls, amplitude, frequency, phase=0.0):
        return cls("sinusoid", amplitude=amplitude, frequency=frequency, phase=phase)

    def function(self) -> Callable[[float], float]:
        if self.kind == "zero":
            return lambda t: 0.0
        if self.kind == "constant":
            level = self.level
            return lambda t: level
        if self.kind == "step":
            t_step, level = self.time, self.level
            return lambda t: level if t >= t_step else 0.0
        w, amp, ph = 2.0 * math.pi * self.frequency, self.amplitude, self.phase
        return lambda t: amp * math.sin(w * t + ph)

    def __call__(self, t: float) -> float:
        return self.function()(t)

    def to_dict(self) -> dict:
        if self.kind == "zero":
            return {"kind": "zero"}
        if self.kind == "constant":
            return {"kind": "constant", "level": self.level}
        if self.kind == "step":
            return {"kind": "step", "time": self.time, "level": self.level}
        return {"kind": "sinusoid", "amplitude": self.amplitude,
                "frequency": self.frequency, "phase": self.phase}


@dataclass(frozen=True)
class YawController:
    """Optional proportional yaw-moment feedback on one received channel.

    Uses the received output of the previous sample (one-sample delay, as a
    digital controller would).
    """

    kp: float
    channel: int = 0
    reference: float = 0.0

    def command(self, y_received_prev) -> float:
        if y_received_prev is None:
            return 0.0
        return -self.kp * (y_received_prev[self.channel] - self.reference)


# --- middleware ------------------------------------------------------------

@dataclass
class StepView:
    """What the middleware may look at during one step.

    ``nominal_input(t)`` returns the un-attacked command ``(Mz, delta)`` at
    any time inside the current step. ``x_nominal`` is only meant for
    verification-grade attackers that are handed the exact nominal state.
    """

    k: int
    t: float
    dt: float
    x_true: tuple
    x_nominal: tuple
    u_nominal: tuple
    nominal_input: Callable[[float], tuple]
    u_injected: Optional[tuple] = None
    y_true: Optional[tuple] = None


class ChannelTaps:
    """Identity middleware. Attacks subclass this and override hooks.

    ``actuator`` is evaluated at every RK4 stage time and must depend only on
    ``t`` and the nominal command within a step; state-dependent attackers
    update their internals in ``after_step``.
    """

    #: optional ``(time, state jump)`` applied to the attacked plant only
    state_offset: Optional[tuple[float, tuple[float, float]]] = None

    def start(self, ctx: "SimContext") -> None:
        pass

    def begin_step(self, view: StepView) -> None:
        """Called at each sample before the actuator is evaluated."""

    def actuator(self, t: float, mz: float, delta: float) -> tuple[float, float]:
        return mz, delta

    def sensor(self, t: float, y: tuple, view: StepView) -> tuple:
        return y

    def after_step(self, view: StepView) -> None:
        pass


IDENTITY_TAPS = ChannelTaps()


@dataclass(frozen=True)
class SimContext:
    model: LateralModel
    omap: OutputMap
    grid: TimeGrid
    limits: SaturationLimits
    steering: SteeringProfile


# --- trace -----------------------------------------------------------------

_TRACE_ARRAYS = ("t", "x_true", "x_nominal", "u_nominal", "u_injected", "y_true",
                 "y_received", "y_nominal", "clipped")


@dataclass(frozen=True, eq=False)
class Trace:
    """Uniformly sampled record of one run. Arrays are read-only."""

    t: np.ndarray
    x_true: np.ndarray
    x_nominal: np.ndarray
    u_nominal: np.ndarray
    u_injected: np.ndarray
    y_true: np.ndarray
    y_received: np.ndarray
    y_nominal: np.ndarray
    clipped: np.ndarray
    channels: tuple = ("y",)

    def __post_init__(self):
        n = len(self.t)
        for name in _TRACE_ARRAYS:
            arr = np.array(getattr(self, name), dtype=bool if name == "clipped" else float)
            if name in ("y_true", "y_received", "y_nominal") and arr.ndim == 1:
                arr = arr.reshape(n, -1)
            if arr.shape[0] != n:
                raise ValueError(f"series {name} has length {arr.shape[0]}, expected {n}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "channels", tuple(self.channels))

    def __len__(self):
        return len(self.t)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    def window(self, t_start: float, t_end: float) -> "Trace":
        """Sub-trace with ``t_start <= t <= t_end`` (half-sample slack)."""
        slack = 0.5 * self.dt if len(self.t) > 1 else 0.0
        mask = (self.t >= t_start - slack) & (self.t <= t_end + slack)
        return Trace(**{name: getattr(self, name)[mask] for name in _TRACE_ARRAYS},
                     channels=self.channels)

    def equals(self, other: "Trace") -> bool:
        return self.channels == other.channels and all(
            np.array_equal(getattr(self, n), getattr(other, n)) for n in _TRACE_ARRAYS)


# --- simulation ------------------------------------------------------------

def _plant_fn(model: LateralModel, limits: SaturationLimits, plant: str):
    if plant == "linear":
        return linear_deriv_fn(model)
    if plant == "nonlinear_tire":
        return surrogate_deriv_fn(model.params, limits)
    raise ValueError(f"unknown plant {plant!r}")


def simulate(model: LateralModel, omap: OutputMap, steer: SteeringProfile,
             taps: Optional[ChannelTaps] = None, lim: SaturationLimits = NO_LIMITS,
             grid: TimeGrid = TimeGrid(0.0, 1e-3, 1000), x0: Sequence[float] = (0.0, 0.0),
             plant: str = "linear", controller: Optional[YawController] = None) -> Trace:
    """Run the attacked plant and its nominal twin over ``grid``.

    Per sample ``t_k``: nominal command, actuator tap, saturation, output
    measurement, sensor tap, record; then both plants advance one RK4 step
    with the taps evaluated at the stage times.
    """
    taps = taps if taps is not None else IDENTITY_TAPS
    f_plant = _plant_fn(model, lim, plant)
    meas = measure_fn(omap)
    steer_fn = steer.function()
    dt = grid.dt

    taps.start(SimContext(model, omap, grid, lim, steer))

    offset_k = None
    if taps.state_offset is not None:
        offset_k = max(0, grid.index_of(taps.state_offset[0]))

    x = (float(x0[0]), float(x0[1]))
    xn = x
    y_recv_prev = y_nom_prev = None
    rows = {name: [] for name in _TRACE_ARRAYS}
    clip_flag = [False]

    def attacked_input(mz_hold):
        def u(t):
            mz_i, d_i = taps.actuator(t, mz_hold, steer_fn(t))
            mz_s, d_s, c = saturate(mz_i, d_i, lim)
            if c:
                clip_flag[0] = True
            return mz_s, d_s
        return u

    def nominal_input(mz_hold):
        def u(t):
            mz_s, d_s, _ = saturate(mz_hold, steer_fn(t), lim)
            return mz_s, d_s
        return u

    for k in range(grid.n_steps):
        t = grid.time(k)
        if offset_k == k:
            dx = taps.state_offset[1]
            x = (x[0] + float(dx[0]), x[1] + float(dx[1]))

        mz_ctrl = controller.command(y_recv_prev) if controller else 0.0
        mz_ctrl_n = controller.command(y_nom_prev) if controller else 0.0
        u_nom = (mz_ctrl, steer_fn(t))
        u_att = attacked_input(mz_ctrl)
        u_twin = nominal_input(mz_ctrl_n)

        view = StepView(k=k, t=t, dt=dt, x_true=x, x_nominal=xn, u_nominal=u_nom,
                        nominal_input=lambda s, _m=mz_ctrl: (_m, steer_fn(s)))
        taps.begin_step(view)

        clip_flag[0] = False
        u_inj = u_att(t)
        un_sat = u_twin(t)

        y_true = meas(x[0], x[1], u_inj[1])
        y_nom = meas(xn[0], xn[1], un_sat[1])
        view.u_injected = u_inj
        view.y_true = y_true
        y_recv = tuple(float(v) for v in taps.sensor(t, y_true, view))

        rows["t"].append(t)
        rows["x_true"].append(x)
        rows["x_nominal"].append(xn)
        rows["u_nominal"].append(u_nom)
        rows["u_injected"].append(u_inj)
        rows["y_true"].append(y_true)
        rows["y_received"].append(y_recv)
        rows["y_nominal"].append(y_nom)

        if k + 1 < grid.n_steps:
            def f_att(s, vy, r, _u=u_att):
                mz, d = _u(s)
                return f_plant(vy, r, mz, d)

            def f_nom(s, vy, r, _u=u_twin):
                mz, d = _u(s)
                return f_plant(vy, r, mz, d)

            x = numerics.rk4_step2(f_att, t, x, dt)
            xn = numerics.rk4_step2(f_nom, t, xn, dt)
            if not all(math.isfinite(v) for v in x + xn):
                raise NonFiniteError(k + 1)
            taps.after_step(view)
        rows["clipped"].append(clip_flag[0])
        y_recv_prev, y_nom_prev = y_recv, y_nom

    return Trace(**{name: np.array(vals) for name, vals in rows.items()},
                 channels=omap.channels)


# --- observer --------------------------------------------------------------

@dataclass
class ObserverState:
    xhat: np.ndarray
    L: np.ndarray

    def __post_init__(self):
        self.xhat = np.asarray(self.xhat, dtype=float).reshape(2)
        self.L = np.atleast_2d(np.asarray(self.L, dtype=float))
        if self.L.shape[0] != 2:
            self.L = self.L.T


def observer_step(obs: ObserverState, u, y, model: LateralModel, omap: OutputMap,
                  dt: float) -> ObserverState:
    """One RK4 step of ``xhat' = A xhat + B Mz + E delta + L (y - C xhat - D delta)``.

    ``u = (Mz, delta)`` and ``y`` are held over the step.
    """
    if not omap.is_linear:
        raise ValueError("the observer needs a linear measurement channel")
    mz, delta = float(u[0]), float(u[1])
    y = np.asarray(y, dtype=float).reshape(-1)
    A, B, E, C, D, L = model.A, model.B, model.E, omap.C, omap.D, obs.L
    drive = B * mz + E * delta + L @ (y - D * delta)
    A_obs = A - L @ C

    def f(t, xh):
        return A_obs @ xh + drive

    return ObserverState(numerics.rk4_step(f, 0.0, obs.xhat, dt), obs.L)


def _observability_matrix(A, c_row):
    c_row = np.asarray(c_row, dtype=float).reshape(2)
    return np.vstack([c_row, c_row @ A])


def design_observer_gain(model: LateralModel, omap: OutputMap,
                         desired_poles: Sequence[complex],
                         tol: float = numerics.DEFAULT_RANK_TOL) -> np.ndarray:
    """Ackermann placement of ``eig(A - L C)``; returns ``L`` of shape (2, p).

    With two output rows only the best-conditioned observable row is used and
    the other column of ``L`` is zero.
    """
    if not omap.is_linear:
        raise ValueError("observer gain design needs a linear output map")
    p1, p2 = (complex(p) for p in desired_poles)
    s_sum, s_prod = p1 + p2, p1 * p2
    if abs(s_sum.imag) > 1e-12 * max(1.0, abs(s_sum)) or \
            abs(s_prod.imag) > 1e-12 * max(1.0, abs(s_prod)):
        raise ValueError("desired poles must be real or a conjugate pair")
    A = model.A
    best = None
    for i, row in enumerate(omap.C):
        O = _observability_matrix(A, row)
        if numerics.rank_with_tol(O, tol) < 2:
            continue
        cond = np.linalg.cond(O)
        if best is None or cond < best[0]:
            best = (cond, i, O)
    if best is None:
        raise UnobservableError(f"(A, C) not observable for output {omap.case.value}")
    _, i, O = best
    phi = A @ A - s_sum.real * A + s_prod.real * np.eye(2)
    col = phi @ np.linalg.solve(O, np.array([0.0, 1.0]))
    L = np.zeros((2, omap.C.shape[0]))
    L[:, i] = col
    return L

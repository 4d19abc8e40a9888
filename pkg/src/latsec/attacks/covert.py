"""Covert attacks: actuator injection masked by a coordinated sensor signal."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .. import numerics
from ..sim import ChannelTaps, SimContext, StepView, design_observer_gain
from ..vehicle import (
    LateralModel,
    OutputConfig,
    OutputMap,
    build_state_space,
    measure,
    output_map,
    saturate,
)
from . import resources

# Exact value of the bilinear cross term: expanding
# -(vn + va)(rn + ra) + comp = -vn rn  gives  comp = va rn + vn ra + va ra.
EXACT_CROSS_TERM = 1.0


@dataclass
class Tracking:
    """Reference-tracking design ``u_c = ka xhat + la za - u``."""

    ka: np.ndarray
    la: float
    reference: Callable[[float], float]
    channel: int = 0
    za: float = 0.0

    def __post_init__(self):
        self.ka = np.asarray(self.ka, dtype=float).reshape(2)


@dataclass
class CovertState:
    """Attacker-side replica state; ``xa`` starts at zero at the attack start."""

    xa: np.ndarray = field(default_factory=lambda: np.zeros(2))
    t: float = 0.0
    tracking: Optional[Tracking] = None

    def __post_init__(self):
        self.xa = np.asarray(self.xa, dtype=float).reshape(2)


def covert_internal_step(cs: CovertState, model: LateralModel, dt: float,
                         u_c: Callable[[float], float], channel: str = "mz") -> CovertState:
    """RK4 step of ``xa' = A xa + B u_c`` (or ``E u_c`` on the steering channel)."""
    gain = model.B if channel == "mz" else model.E
    A = model.A

    def f(t, xa):
        return A @ xa + gain * u_c(t)

    xa = numerics.rk4_step(f, cs.t, cs.xa, dt)
    return CovertState(xa=xa, t=cs.t + dt, tracking=cs.tracking)


def covert_sensor_comp_linear(cs: CovertState, omap: OutputMap, u_c: float = 0.0,
                              channel: str = "mz") -> np.ndarray:
    """``-C xa``; on the steering channel the feedthrough ``D u_c`` is removed too."""
    if not omap.is_linear:
        raise ValueError("linear compensation needs a linear output map")
    comp = -(omap.C @ cs.xa)
    if channel == "delta":
        comp = comp - omap.D * u_c
    return comp


def covert_sensor_comp_nonlinear(cs: CovertState, xhat_nominal,
                                 cross_term: float = EXACT_CROSS_TERM) -> float:
    """Compensation for ``y = -r v_y`` given an estimate of the nominal state.

    ``va rn + vn ra + cross_term * va ra``. The default cross term of 1 makes
    the received output equal the nominal one exactly; ``cross_term=2``
    reproduces the textbook formula, which leaves a residual of ``va ra``.
    """
    va, ra = float(cs.xa[0]), float(cs.xa[1])
    vn, rn = float(xhat_nominal[0]), float(xhat_nominal[1])
    return va * rn + vn * ra + cross_term * va * ra


def covert_tracking_input(cs: CovertState, y_measured, u_nominal: float, t: float,
                          dt: float, xhat) -> float:
    """Advance the integral state by one rectangle and return ``u_c``.

    ``za`` is accumulated *after* the command is formed, so the value used at
    ``t`` integrates the error up to the previous sample.
    """
    tr = cs.tracking
    if tr is None:
        raise ValueError("tracking is not configured")
    u_c = float(tr.ka @ np.asarray(xhat, dtype=float)) + tr.la * tr.za - u_nominal
    tr.za += (float(np.atleast_1d(y_measured)[tr.channel]) - tr.reference(t)) * dt
    return u_c


def design_tracking_gains(model: LateralModel, omap: OutputMap, poles, channel: int = 0):
    """Stabilising ``(ka, la)`` for integral tracking on one output channel.

    Places the poles of the augmented plant ``[x; z]`` with
    ``z' = c x`` under ``u = ka x + la z``. Provided as a convenience for
    scenario authors; any stabilising pair works.
    """
    from scipy.signal import place_poles

    c = omap.C[channel]
    Aa = np.zeros((3, 3))
    Aa[:2, :2] = model.A
    Aa[2, :2] = c
    Ba = np.concatenate([model.B, [0.0]]).reshape(3, 1)
    K = place_poles(Aa, Ba, poles).gain_matrix
    k = -K[0]
    return k[:2], float(k[2])


def perturbed_model(model: LateralModel, cf_error: float = 0.0,
                    cr_error: float = 0.0) -> LateralModel:
    """Attacker's copy of the model with relative stiffness errors."""
    p = model.params
    return build_state_space(p.replace(Cf=p.Cf * (1.0 + cf_error), Cr=p.Cr * (1.0 + cr_error)))


class CovertTaps(ChannelTaps):
    """Covert attack middleware for linear and bilinear outputs.

    Parameters
    ----------
    signal:
        ``u_c(t)`` for an open-loop injection (ignored when ``tracking`` is set).
    channel:
        ``"mz"`` (yaw moment, default) or ``"delta"`` (steering).
    nonlinear:
        Use the bilinear compensation; requires the longitudinal output.
    estimator:
        For the bilinear compensation: ``"exact"`` hands the attacker the
        nominal state, ``"observer"`` runs a Luenberger observer on yaw rate
        and lateral acceleration.
    limits_aware:
        Shape ``u_c`` so the total command stays inside the actuator limits.
    """

    def __init__(self, signal: Optional[Callable[[float], float]] = None, t0: float = 0.0,
                 channel: str = "mz", nonlinear: bool = False, estimator: str = "exact",
                 observer_poles=(-10.0, -12.0), observer_initial_error: float = 0.0,
                 post_attack_estimation: str = "corrected", tracking: Optional[Tracking] = None,
                 tracking_estimator: str = "exact", limits_aware: bool = False,
                 attacker_model: Optional[LateralModel] = None,
                 cross_term: float = EXACT_CROSS_TERM):
        if channel not in ("mz", "delta"):
            raise ValueError(f"unknown injection channel {channel!r}")
        if estimator not in ("exact", "observer"):
            raise ValueError(f"unknown estimator {estimator!r}")
        if post_attack_estimation not in ("corrected", "open_loop"):
            raise ValueError(f"unknown post-attack estimation {post_attack_estimation!r}")
        self.signal = signal if signal is not None else (lambda t: 0.0)
        self.t0 = t0
        self.channel = channel
        self.nonlinear = nonlinear
        self.estimator = estimator
        self.observer_poles = observer_poles
        self.observer_initial_error = observer_initial_error
        self.post_attack_estimation = post_attack_estimation
        self.tracking_estimator = tracking_estimator
        self.limits_aware = limits_aware
        self.attacker_model = attacker_model
        self.cross_term = cross_term
        self.state = CovertState(t=t0, tracking=tracking)
        if nonlinear:
            self.resources = resources.COVERT_NONLINEAR
        elif tracking is not None:
            self.resources = resources.COVERT_TRACKING
        else:
            self.resources = resources.COVERT_LINEAR
        resources.check_resources("covert", self.resources)
        self.xhat_nominal_log: list = []
        self._held_uc = 0.0

    # -- setup --------------------------------------------------------------

    def start(self, ctx: SimContext):
        if self.nonlinear and ctx.omap.case is not OutputConfig.LONGITUDINAL_ACCEL:
            raise ValueError("bilinear compensation needs the longitudinal-acceleration output")
        if not self.nonlinear and not ctx.omap.is_linear:
            raise ValueError("linear covert attack needs a linear output map")
        self.model = self.attacker_model or ctx.model
        self.omap = ctx.omap if ctx.omap.is_linear else None
        self.att_omap = output_map(self.model, ctx.omap.case) if ctx.omap.is_linear else None
        self.limits = ctx.limits
        self.dt = ctx.grid.dt
        self.state = CovertState(t=self.t0, tracking=self.state.tracking)
        self._active = False
        self.obs_map = None
        if (self.nonlinear and self.estimator == "observer") or (
                self.state.tracking is not None and self.tracking_estimator == "observer"):
            # the attacker's IMU taps yaw rate and lateral acceleration
            self.obs_map = output_map(self.model, OutputConfig.COMBINED)
            self.L = design_observer_gain(self.model, self.obs_map, self.observer_poles)
            self.xhat = None

    # -- injection ------------------------------------------------------------

    def _raw_uc(self, t: float) -> float:
        # switched per step so the onset never leaks into the stages of the
        # step that ends at t0
        if not self._active:
            return 0.0
        if self.state.tracking is not None:
            return self._held_uc
        return float(self.signal(t))

    def _effective_uc(self, t: float, mz: float, delta: float) -> float:
        u_c = self._raw_uc(t)
        if not self.limits_aware or u_c == 0.0:
            return u_c
        if self.channel == "mz":
            mz_s, _, _ = saturate(mz + u_c, delta, self.limits)
            return mz_s - mz
        _, d_s, _ = saturate(mz, delta + u_c, self.limits)
        return d_s - delta

    def begin_step(self, view: StepView):
        self._active = view.t >= self.t0 - 0.5 * view.dt
        if self.obs_map is not None:
            self._advance_observer(view)
        tr = self.state.tracking
        if tr is not None and view.t >= self.t0 - 0.5 * view.dt:
            if self.tracking_estimator == "exact":
                xhat = np.asarray(view.x_true)
            else:
                xhat = self.xhat + self.state.xa
            y_meas = measure(self.omap, view.x_true, view.nominal_input(view.t)[1])
            u_nom = view.u_nominal[0] if self.channel == "mz" else view.u_nominal[1]
            self._held_uc = covert_tracking_input(self.state, y_meas, u_nom, view.t,
                                                  view.dt, xhat)

    def actuator(self, t, mz, delta):
        u_c = self._effective_uc(t, mz, delta)
        if self.channel == "mz":
            return mz + u_c, delta
        return mz, delta + u_c

    # -- compensation ---------------------------------------------------------

    def _xhat_nominal(self, view: StepView):
        if self.estimator == "exact":
            return view.x_nominal
        return self.xhat

    def sensor(self, t, y, view):
        if t < self.t0 - 0.5 * view.dt:
            return y
        if self.nonlinear:
            xn = self._xhat_nominal(view)
            self.xhat_nominal_log.append(tuple(float(v) for v in xn))
            comp = covert_sensor_comp_nonlinear(self.state, xn, self.cross_term)
            return (y[0] + comp,)
        u_nom = view.nominal_input(t)
        u_c = self._effective_uc(t, *u_nom)
        comp = covert_sensor_comp_linear(self.state, self.att_omap, u_c, self.channel)
        return tuple(yi + ci for yi, ci in zip(y, comp))

    def after_step(self, view: StepView):
        if view.t >= self.t0 - 0.5 * view.dt:
            nominal_input = view.nominal_input

            def u_c(s):
                return self._effective_uc(s, *nominal_input(s))

            self.state = covert_internal_step(self.state, self.model, view.dt, u_c,
                                              self.channel)
        self._prev_view = view

    def _nominal_imu(self, view: StepView) -> np.ndarray:
        """IMU reading with the attacker's own contribution removed.

        On the matched linear plant ``x - xa`` is the nominal state, so this
        is exactly the attack-free yaw rate and lateral acceleration.
        """
        _, delta, _ = saturate(*view.nominal_input(view.t), self.limits)
        x_est = np.asarray(view.x_true, dtype=float) - self.state.xa
        return self.obs_map.C @ x_est + self.obs_map.D * delta

    def _advance_observer(self, view: StepView):
        """Bring the nominal-state estimate up to ``view.t``.

        The step from the previous sample uses a first-order hold between
        the previous and current IMU readings. In ``open_loop`` mode the
        output correction is dropped once the attack is running.
        """
        y_now = self._nominal_imu(view)
        if self.xhat is None:
            self.xhat = np.array(view.x_true, dtype=float) * (1.0 + self.observer_initial_error)
            self._y_prev = y_now
            return
        prev = self._prev_view
        attacking = prev.t >= self.t0 - 0.5 * prev.dt
        L = self.L
        if attacking and self.post_attack_estimation == "open_loop":
            L = np.zeros_like(L)
        A, B, E, C, D = self.model.A, self.model.B, self.model.E, self.obs_map.C, self.obs_map.D
        A_obs = A - L @ C
        limits = self.limits
        nominal_input = prev.nominal_input
        t_prev, dt = prev.t, prev.dt
        y0, slope = self._y_prev, (y_now - self._y_prev) / dt

        def f(t, xh):
            mz, delta, _ = saturate(*nominal_input(t), limits)
            y = y0 + slope * (t - t_prev)
            return A_obs @ xh + B * mz + E * delta + L @ (y - D * delta)

        self.xhat = numerics.rk4_step(f, t_prev, self.xhat, dt)
        self._y_prev = y_now

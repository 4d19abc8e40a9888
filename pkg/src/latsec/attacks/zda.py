"""Zero-dynamics attacks for linear and bilinear output maps."""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import numerics
from ..sim import ChannelTaps, SimContext, StepView
from ..vehicle import LateralModel, OutputConfig, OutputMap, rosenbrock
from . import resources


class BranchUnsupported(ValueError):
    pass


class Unreachable(RuntimeError):
    pass


@dataclass(frozen=True)
class Infeasible:
    """Synthesis result meaning no zero-dynamics attack exists."""

    reason: str
    output_case: Optional[OutputConfig] = None

    def __bool__(self):
        return False


@dataclass(frozen=True)
class ZdaPlan:
    """Invariant zero ``s0`` with zero direction ``(x0, a0)``.

    The direction is normalised so ``||x0|| = 1`` with its largest component
    real and positive; :meth:`scaled` rescales it to a concrete state offset.
    """

    s0: complex
    x0: np.ndarray
    a0: complex
    t0: float
    output_case: OutputConfig
    resources: resources.AttackResources = resources.ZDA_LINEAR

    def scaled(self, factor: float) -> "ZdaPlan":
        return ZdaPlan(self.s0, self.x0 * factor, self.a0 * factor, self.t0,
                       self.output_case, self.resources)

    def residuals(self, model: LateralModel, omap: OutputMap) -> tuple[float, float]:
        """``||(s0 I - A) x0 - B a0||`` and ``||C x0||``."""
        dyn = (self.s0 * np.eye(2) - model.A) @ self.x0 - model.B * self.a0
        out = omap.C @ self.x0
        return float(np.linalg.norm(dyn)), float(np.linalg.norm(out))

    def to_dict(self) -> dict:
        return {
            "s0": [self.s0.real, self.s0.imag],
            "x0": [[v.real, v.imag] for v in self.x0],
            "a0": [self.a0.real, self.a0.imag],
            "t0": self.t0,
            "output_case": self.output_case.value,
        }


def _closed_form_zeros(model: LateralModel, case: OutputConfig) -> list[complex]:
    vx = model.params.vx
    if case is OutputConfig.YAW_RATE:
        return [complex(model.a11)]
    if case is OutputConfig.LATERAL_ACCEL:
        denom = model.a12 + vx
        if denom != 0.0:
            return [complex(model.a11 * vx / denom)]
    return []


def _siso_det_root(model: LateralModel, C: np.ndarray) -> list[complex]:
    """Root of ``det P(s)``, which is affine in ``s`` for this plant family."""
    if C.shape[0] != 1:
        return []
    d0 = numerics.det_cofactor(rosenbrock(model, C, 0.0))
    d1 = numerics.det_cofactor(rosenbrock(model, C, 1.0))
    slope = d1 - d0
    if abs(slope) <= 1e-14 * max(abs(d0), abs(d1), 1e-300):
        return []
    return [-d0 / slope]


def zda_synthesize_linear(model: LateralModel, omap: OutputMap, t0: float = 0.0,
                          tol: float = numerics.DEFAULT_RANK_TOL):
    """Find an invariant zero and its direction, or return :class:`Infeasible`.

    Candidates are the eigenvalues of ``A``, the closed-form zeros for the
    yaw-rate and lateral-acceleration outputs and, for a single output, the
    root of ``det P(s)``. Each candidate is accepted only if the Rosenbrock
    matrix is numerically rank deficient there.
    """
    if not omap.is_linear:
        raise ValueError("linear synthesis needs a linear output map")
    C = omap.C
    candidates = list(numerics.eig2x2(model.A))
    candidates += _closed_form_zeros(model, omap.case)
    candidates += _siso_det_root(model, C)

    for s in candidates:
        P = rosenbrock(model, C, s)
        # equilibrate columns: the input column carries 1/Iz and would
        # otherwise sit near the rank threshold
        scale = 1.0 / np.maximum(np.linalg.norm(P, axis=0), np.finfo(float).tiny)
        Ps = P * scale
        if numerics.rank_with_tol(Ps, tol) >= Ps.shape[1]:
            continue
        v = numerics.null_direction(Ps, tol) * scale
        x0, a0 = v[:2], complex(v[2])
        norm = np.linalg.norm(x0)
        if norm == 0.0:
            continue
        lead = x0[int(np.argmax(np.abs(x0)))]
        phase = abs(lead) / lead / norm
        x0, a0 = x0 * phase, a0 * phase
        if abs(s.imag) <= tol * max(1.0, abs(s)):
            s = complex(s.real, 0.0)
            x0 = x0.real.astype(complex)
            a0 = complex(a0.real, 0.0)
        return ZdaPlan(s0=complex(s), x0=x0, a0=a0, t0=t0, output_case=omap.case)
    return Infeasible("no invariant zeros", omap.case)


def zda_input(plan: ZdaPlan, t: float) -> float:
    """``Re(a0 * exp(s0 (t - t0)))``; zero before the attack starts."""
    if t < plan.t0:
        return 0.0
    return (plan.a0 * cmath.exp(plan.s0 * (t - plan.t0))).real


class ZdaTaps(ChannelTaps):
    """Adds the zero-dynamics signal to the yaw-moment channel.

    ``on_manifold`` also shifts the attacked plant by ``Re(x0)`` at ``t0``,
    which is the precondition for exact output nulling; otherwise the output
    shows the free response of the mismatch ("injection only").
    """

    def __init__(self, plan: ZdaPlan, on_manifold: bool = True):
        self.plan = plan
        self.on_manifold = on_manifold
        self.resources = plan.resources
        resources.check_resources("zda", self.resources)
        if on_manifold:
            self.state_offset = (plan.t0, tuple(float(v.real) for v in plan.x0))
        self._active = False

    def start(self, ctx: SimContext):
        self._active = False

    def begin_step(self, view: StepView):
        # the onset is a step boundary, so the step ending at t0 stays clean
        self._active = view.t >= self.plan.t0 - 0.5 * view.dt

    def actuator(self, t, mz, delta):
        if not self._active:
            return mz, delta
        return mz + (self.plan.a0 * cmath.exp(self.plan.s0 * (t - self.plan.t0))).real, delta


# --- bilinear output y = -r * v_y ------------------------------------------

class Branch(str, enum.Enum):
    Z1 = "z1"
    Z2 = "z2"
    OFF_MANIFOLD = "off_manifold"


@dataclass(frozen=True)
class ZdaNonlinearPlan:
    branch: Branch
    M1_bar: float
    t0: float
    a11: float
    resources: resources.AttackResources = resources.ZDA_NONLINEAR

    def to_dict(self) -> dict:
        return {"branch": self.branch.value, "M1_bar": self.M1_bar, "t0": self.t0}


def zda_synthesize_nonlinear(model: LateralModel, x_est, eps: float = 1e-6,
                             t0: float = 0.0) -> ZdaNonlinearPlan:
    if not eps > 0:
        raise ValueError("eps must be positive")
    vy, r = float(x_est[0]), float(x_est[1])
    if abs(r) < eps and abs(vy) >= eps:
        return ZdaNonlinearPlan(Branch.Z1, -(model.a21 / model.b2) * vy, t0, model.a11)
    if abs(vy) < eps:
        # only the equilibrium keeps the output at zero here
        return ZdaNonlinearPlan(Branch.Z2, 0.0, t0, model.a11)
    return ZdaNonlinearPlan(Branch.OFF_MANIFOLD, 0.0, t0, model.a11)


def zda_nonlinear_input(plan: ZdaNonlinearPlan, model: LateralModel, t: float) -> float:
    if plan.branch is not Branch.Z1:
        raise BranchUnsupported(f"no nontrivial attack on branch {plan.branch.value}")
    if t < plan.t0:
        return 0.0
    return plan.M1_bar * math.exp(model.a11 * (t - plan.t0))


def zda_feedback_input(model: LateralModel, vy: float) -> float:
    """State-feedback realisation ``-(a21 / b2) v_y`` of the same input."""
    return -(model.a21 / model.b2) * vy


@dataclass(frozen=True)
class PreparationPlan:
    """Open-loop yaw moment that steers the state onto ``r = 0``.

    The law is ``Mz = -(a21 vy + gain * r) / b2``: it cancels the coupling of
    ``v_y`` into the yaw equation and damps ``r`` at rate ``gain - a22``.
    Because the closed loop is linear the command is known in closed form.
    """

    K: np.ndarray
    A_cl: np.ndarray
    x_start: np.ndarray
    t_start: float
    duration: float

    @property
    def t_end(self) -> float:
        return self.t_start + self.duration

    def state(self, t: float) -> np.ndarray:
        return numerics.expm2x2(self.A_cl, t - self.t_start) @ self.x_start

    def input(self, t: float) -> float:
        if t < self.t_start or t >= self.t_end:
            return 0.0
        return float(-self.K @ self.state(t))

    def sequence(self, dt: float) -> np.ndarray:
        n = int(round(self.duration / dt))
        return np.array([self.input(self.t_start + i * dt) for i in range(n)])


def off_manifold_preparation(model: LateralModel, x_est, target_eps: float = 1e-6,
                             gain: float = 50.0, horizon: float = 2.0, dt: float = 1e-3,
                             t_start: float = 0.0) -> PreparationPlan:
    """Plan the preparatory phase that brings ``|r|`` below ``target_eps``.

    The horizon actually needed is measured by integrating the closed loop
    with RK4 on the ``dt`` grid. Raises :class:`Unreachable` if it exceeds
    ``horizon``.
    """
    x = np.asarray(x_est, dtype=float)
    if abs(x[1]) < target_eps:
        return PreparationPlan(np.zeros(2), np.asarray(model.A), x, t_start, 0.0)
    K = np.array([model.a21, gain]) / model.b2
    A_cl = model.A - np.outer(model.B, K)
    f = lambda t, s: A_cl @ s
    n_max = int(math.floor(horizon / dt + 1e-9))
    for i in range(1, n_max + 1):
        x = numerics.rk4_step(f, 0.0, x, dt)
        if abs(x[1]) < target_eps:
            return PreparationPlan(K, A_cl, np.asarray(x_est, dtype=float), t_start, i * dt)
    raise Unreachable(f"|r| still {abs(x[1]):.3g} after {horizon} s with gain {gain}")


class ZdaNonlinearTaps(ChannelTaps):
    """Runs the bilinear-output attack, synthesising at ``t0`` from the state.

    The attacker reads the true state at ``t0`` (perfect disclosure). When the
    state is off the zero manifold and ``prepare`` is set, a preparation
    phase runs first and the attack starts where it ends.
    """

    def __init__(self, t0: float = 0.0, eps: float = 1e-6,
                 prepare: Optional[dict] = None):
        self.t0 = t0
        self.eps = eps
        self.prepare = prepare
        self.resources = resources.ZDA_NONLINEAR
        self.plan: Optional[ZdaNonlinearPlan] = None
        self.preparation: Optional[PreparationPlan] = None
        self.events: list[str] = []
        self._model = None

    def start(self, ctx: SimContext):
        self._model = ctx.model
        self._dt = ctx.grid.dt

    def begin_step(self, view: StepView):
        if self.plan is not None or view.t < self.t0 - 0.5 * view.dt:
            return
        if self.preparation is not None:
            if view.t < self.preparation.t_end - 0.5 * view.dt:
                return
            x_est = self.preparation.state(view.t)
        else:
            x_est = view.x_true
        plan = zda_synthesize_nonlinear(self._model, x_est, self.eps, t0=view.t)
        if plan.branch is Branch.OFF_MANIFOLD and self.prepare and self.preparation is None:
            self.preparation = off_manifold_preparation(
                self._model, x_est, self.eps, gain=self.prepare.get("gain", 50.0),
                horizon=self.prepare.get("horizon", 2.0), dt=self._dt, t_start=view.t)
            self.events.append(f"preparation for {self.preparation.duration:.6g} s")
            if self.preparation.duration > 0:
                return
            plan = zda_synthesize_nonlinear(self._model, self.preparation.state(view.t),
                                            self.eps, t0=view.t)
        self.plan = plan
        self.events.append(f"branch {plan.branch.value} at t={view.t:.6g}")

    def actuator(self, t, mz, delta):
        # phases change only in begin_step; within a step each formula is
        # evaluated without its own cutoff so the last stage stays continuous
        if self.plan is not None and self.plan.branch is Branch.Z1:
            return mz + self.plan.M1_bar * math.exp(self.plan.a11 * (t - self.plan.t0)), delta
        if self.preparation is not None and self.plan is None:
            return mz + float(-self.preparation.K @ self.preparation.state(t)), delta
        return mz, delta

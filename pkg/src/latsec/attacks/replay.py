"""Replay attack: record a steady window, then play it back.

Nothing here touches the plant model; the attacker only sees sampled
outputs and the grid spacing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..sim import ChannelTaps, SimContext, StepView
from . import resources


class NotSteadyState(ValueError):
    """The candidate window moves too fast; pick a different one."""

    def __init__(self, max_rate: float, delta_ss: float):
        self.max_rate = max_rate
        self.delta_ss = delta_ss
        super().__init__(f"max output rate {max_rate:.6g} >= delta_ss {delta_ss:.6g}")


class OutOfWindow(IndexError):
    pass


@dataclass(frozen=True)
class ReplayBuffer:
    samples: np.ndarray
    t_r: float
    tau: float
    dt: float

    def __post_init__(self):
        arr = np.array(self.samples, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @property
    def t_start(self) -> float:
        return self.t_r - self.tau


def max_output_rate(samples, dt: float) -> float:
    """Largest forward-difference rate, infinity norm over channels."""
    arr = np.asarray(samples, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if len(arr) < 2:
        return 0.0
    return float(np.max(np.abs(np.diff(arr, axis=0))) / dt)


def replay_record(samples, dt: float, tau: float, t_r: float, delta_ss: float) -> ReplayBuffer:
    """Validate a recorded window ``[t_r - tau, t_r]`` and freeze it.

    ``samples`` must hold ``round(tau / dt) + 1`` rows (both ends included).
    """
    if not delta_ss > 0:
        raise ValueError("delta_ss must be positive")
    arr = np.asarray(samples, dtype=float)
    expected = int(round(tau / dt)) + 1
    if len(arr) != expected:
        raise ValueError(f"window holds {len(arr)} samples, expected {expected}")
    rate = max_output_rate(arr, dt)
    if not rate < delta_ss:
        raise NotSteadyState(rate, delta_ss)
    return ReplayBuffer(arr, t_r=t_r, tau=tau, dt=dt)


def replay_output(buf: ReplayBuffer, t: float) -> np.ndarray:
    """Recorded sample taken at ``t - tau`` (grid aligned, no interpolation)."""
    i = int(round((t - buf.t_r) / buf.dt))
    if i < 0 or i >= len(buf.samples):
        raise OutOfWindow(f"t={t} outside replay window [{buf.t_r}, {buf.t_r + buf.tau}]")
    return buf.samples[i]


def default_delta_ss(samples, frequency: Optional[float], factor: float = 1.5) -> float:
    """Permissive steady-state bound for a sinusoidally driven window.

    ``factor * 2 pi f * peak |y|``, i.e. 50% above the largest rate a
    sinusoid of that peak can have. Without a frequency a strict 1e-6 is used.
    """
    if not frequency:
        return 1e-6
    peak = float(np.max(np.abs(np.asarray(samples, dtype=float))))
    return max(factor * 2.0 * math.pi * frequency * peak, 1e-12)


class ReplayTaps(ChannelTaps):
    """Record during ``[t_r - tau, t_r]``, replay during ``[t_r, t_r + tau]``.

    ``injection`` is an optional ``(channel, u(t))`` pair added to the
    actuator while the replay is active, for ``t > t_r`` strictly.
    """

    def __init__(self, t_r: float, tau: float, delta_ss: Optional[float] = None,
                 injection: Optional[tuple[str, Callable[[float], float]]] = None):
        if not tau > 0:
            raise ValueError("tau must be positive")
        if injection is not None and injection[0] not in ("mz", "delta"):
            raise ValueError(f"unknown injection channel {injection[0]!r}")
        self.t_r = t_r
        self.tau = tau
        self.delta_ss = delta_ss
        self.injection = injection
        self.resources = (resources.REPLAY_WITH_INJECTION if injection
                          else resources.REPLAY)
        resources.check_resources("replay", self.resources)
        self.buffer: Optional[ReplayBuffer] = None
        self.failure: Optional[NotSteadyState] = None
        self.used_delta_ss: Optional[float] = None

    def start(self, ctx: SimContext):
        # the grid and the steering frequency are observable signals; the
        # model is never read
        grid = ctx.grid
        self._dt = grid.dt
        self._k_start = grid.index_of(self.t_r - self.tau)
        self._k_r = grid.index_of(self.t_r)
        self._k_end = grid.index_of(self.t_r + self.tau)
        steer = ctx.steering
        self._frequency = steer.frequency if steer.kind == "sinusoid" else None
        self._recording: list = []
        self.buffer = None
        self.failure = None
        self._inject = False

    @property
    def active(self) -> bool:
        return self.buffer is not None

    def begin_step(self, view: StepView):
        # injection runs on the samples strictly after t_r, switched per step
        self._inject = (self.injection is not None and self.buffer is not None
                        and self._k_r < view.k <= self._k_end)

    def actuator(self, t, mz, delta):
        if not self._inject:
            return mz, delta
        channel, u = self.injection
        if channel == "mz":
            return mz + u(t), delta
        return mz, delta + u(t)

    def sensor(self, t, y, view: StepView):
        k = view.k
        if self._k_start <= k <= self._k_r and self.failure is None:
            self._recording.append(tuple(y))
        if k == self._k_r:
            self._finish_recording()
        if self.buffer is not None and self._k_r <= k <= self._k_end:
            return tuple(replay_output(self.buffer, t))
        return y

    def _finish_recording(self):
        samples = np.array(self._recording)
        delta_ss = self.delta_ss
        if delta_ss is None:
            delta_ss = default_delta_ss(samples, self._frequency)
        self.used_delta_ss = delta_ss
        try:
            self.buffer = replay_record(samples, self._dt, self.tau, self.t_r, delta_ss)
        except NotSteadyState as exc:
            self.failure = exc

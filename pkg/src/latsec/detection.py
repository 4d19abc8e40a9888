"""Stealthiness and impact metrics over completed traces, plus a residual monitor.

The default residual is ``y_received - y_nominal``: the received output
against the attack-free twin. :func:`observer_residual` offers the
controller's-eye alternative that only uses received data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from .numerics import rk4_step
from .sim import ObserverState, Trace
from .vehicle import LateralModel, OutputMap


@dataclass(frozen=True)
class DetectorConfig:
    threshold: float = 1e-6
    window: float = 0.01

    def __post_init__(self):
        if not (self.threshold > 0 and math.isfinite(self.threshold)):
            raise ValueError("threshold must be positive")
        if not self.window > 0:
            raise ValueError("window must be positive")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class StealthReport:
    sup_dev: float
    rms_dev: float
    first_alarm: Optional[float] = None

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class ImpactReport:
    sup_state_dev: tuple[float, float]
    terminal_dev: tuple[float, float]
    energy: float

    @property
    def sup(self) -> float:
        return max(self.sup_state_dev)

    def to_dict(self):
        return {"sup_state_dev": list(self.sup_state_dev),
                "terminal_dev": list(self.terminal_dev), "energy": self.energy}


@dataclass(frozen=True)
class AlarmResult:
    alarms: np.ndarray
    first_alarm: Optional[float]
    statistic: np.ndarray


def output_deviation(trace: Trace) -> np.ndarray:
    """Pointwise ``||y_received - y_nominal||_inf``."""
    return np.max(np.abs(trace.y_received - trace.y_nominal), axis=1)


def residual_alarm(trace: Trace, cfg: DetectorConfig,
                   residual: Optional[np.ndarray] = None) -> AlarmResult:
    """Alarm where the trailing moving average of the residual exceeds the threshold.

    The window covers ``max(1, round(window / dt))`` samples; the first
    samples average over what is available.
    """
    dev = output_deviation(trace) if residual is None else np.asarray(residual, dtype=float)
    n = len(dev)
    dt = trace.dt or cfg.window
    w = max(1, int(round(cfg.window / dt)))
    csum = np.concatenate([[0.0], np.cumsum(dev)])
    idx = np.arange(n)
    lo = np.maximum(0, idx + 1 - w)
    stat = (csum[idx + 1] - csum[lo]) / (idx + 1 - lo)
    alarms = stat > cfg.threshold
    hits = np.flatnonzero(alarms)
    first = float(trace.t[hits[0]]) if hits.size else None
    return AlarmResult(alarms=alarms, first_alarm=first, statistic=stat)


def stealth_report(trace: Trace, cfg: Optional[DetectorConfig] = None) -> StealthReport:
    dev = output_deviation(trace)
    if dev.size == 0:
        return StealthReport(0.0, 0.0, None)
    first = residual_alarm(trace, cfg).first_alarm if cfg is not None else None
    return StealthReport(sup_dev=float(dev.max()), rms_dev=float(np.sqrt(np.mean(dev ** 2))),
                         first_alarm=first)


def impact_report(trace: Trace) -> ImpactReport:
    """Deviation of the attacked state from the nominal twin.

    ``energy`` is the rectangle-rule integral of ``||x - x^n||_2^2``.
    """
    dev = trace.x_true - trace.x_nominal
    if len(dev) == 0:
        return ImpactReport((0.0, 0.0), (0.0, 0.0), 0.0)
    sup = np.max(np.abs(dev), axis=0)
    terminal = np.abs(dev[-1])
    energy = float(np.sum(dev ** 2) * (trace.dt or 0.0))
    return ImpactReport(tuple(float(v) for v in sup), tuple(float(v) for v in terminal), energy)


def calibrate_threshold(trace: Trace, factor: float = 10.0, floor: float = 1e-7) -> float:
    """Threshold set ``factor`` above the largest deviation of a reference run."""
    return max(factor * float(output_deviation(trace).max(initial=0.0)), floor)


def observer_residual(trace: Trace, model: LateralModel, omap: OutputMap, L,
                      x0=(0.0, 0.0)) -> np.ndarray:
    """Residual of a Luenberger observer fed only with received outputs.

    Mirrors what a monitor inside the controller could compute: the
    observer is driven by the nominal commands and the received outputs,
    both linearly interpolated between samples, and the residual is
    ``||y_received - C xhat - D delta||_inf`` per sample.
    """
    if not omap.is_linear:
        raise ValueError("the residual observer needs a linear output map")
    L = ObserverState(np.zeros(2), L).L
    A_obs = model.A - L @ omap.C
    B, E, D = model.B, model.E, omap.D
    xhat = np.asarray(x0, dtype=float)
    out = np.empty(len(trace))
    dt = trace.dt
    for k in range(len(trace)):
        y, delta = trace.y_received[k], trace.u_nominal[k, 1]
        out[k] = float(np.max(np.abs(y - omap.C @ xhat - D * delta)))
        if k + 1 == len(trace):
            break
        u0, du = trace.u_nominal[k], (trace.u_nominal[k + 1] - trace.u_nominal[k]) / dt
        y0, dy = y, (trace.y_received[k + 1] - y) / dt

        def f(s, xh, u0=u0, du=du, y0=y0, dy=dy):
            m, d = u0 + du * s
            return A_obs @ xh + B * m + E * d + L @ (y0 + dy * s - D * d)

        xhat = rk4_step(f, 0.0, xhat, dt)
    return out

"""Declarative experiment files and the run pipeline.

A scenario is a JSON document (``schema_version`` 1). Units are SI unless
noted; the README lists every field.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from importlib import resources as ilr
from typing import Any, Optional

import numpy as np

from . import attacks, detection
from .attacks import covert as covert_mod
from .numerics import TimeGrid
from .sim import ChannelTaps, SteeringProfile, Trace, YawController, simulate
from .vehicle import (
    TABLE1,
    OutputConfig,
    SaturationLimits,
    StiffnessConvention,
    VehicleParams,
    build_state_space,
    output_map,
)

SCHEMA_VERSION = 1
BUNDLE_PACKAGE = "latsec.scenarios"


class ParseError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path or '<root>'}: {message}")

    def __reduce__(self):
        return ParseError, (self.path, self.message)


class ValidationError(ValueError):
    pass


# --- schema helpers --------------------------------------------------------

class _Obj:
    """Typed reader over one JSON object that rejects unknown keys."""

    def __init__(self, data: Any, path: str, allowed: set[str]):
        if not isinstance(data, dict):
            raise ParseError(path, f"expected an object, got {type(data).__name__}")
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise ParseError(_join(path, unknown[0]), "unknown key")
        self.data = data
        self.path = path

    def has(self, key):
        return key in self.data and self.data[key] is not None

    def raw(self, key, default=None):
        return self.data.get(key, default)

    def num(self, key, default=None, required=False) -> Optional[float]:
        if key not in self.data or self.data[key] is None:
            if required:
                raise ParseError(_join(self.path, key), "missing required number")
            return default
        value = self.data[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ParseError(_join(self.path, key), f"expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ParseError(_join(self.path, key), "number must be finite")
        return float(value)

    def int(self, key, default=None):
        value = self.data.get(key, default)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            raise ParseError(_join(self.path, key), f"expected an integer, got {value!r}")
        return value

    def str(self, key, default=None, choices=None):
        value = self.data.get(key, default)
        if value is None:
            return None
        if not isinstance(value, str):
            raise ParseError(_join(self.path, key), f"expected a string, got {value!r}")
        if choices is not None and value not in choices:
            raise ParseError(_join(self.path, key),
                             f"expected one of {sorted(choices)}, got {value!r}")
        return value

    def bool(self, key, default=False):
        value = self.data.get(key, default)
        if not isinstance(value, bool):
            raise ParseError(_join(self.path, key), f"expected true/false, got {value!r}")
        return value

    def vec(self, key, length, default=None):
        value = self.data.get(key, default)
        if value is None:
            return None
        if not (isinstance(value, (list, tuple)) and len(value) == length and all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
            raise ParseError(_join(self.path, key), f"expected a list of {length} numbers")
        return tuple(float(v) for v in value)

    def obj(self, key, allowed):
        return _Obj(self.data[key], _join(self.path, key), allowed)


def _join(path, key):
    return f"{path}.{key}" if path else str(key)


# --- spec ------------------------------------------------------------------

@dataclass(frozen=True)
class AttackConfig:
    """Parsed attack block; ``options`` keeps the validated fields by name."""

    type: str
    options: dict


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    vehicle: VehicleParams
    output_case: OutputConfig
    steering: SteeringProfile = SteeringProfile.zero()
    attack: Optional[AttackConfig] = None
    saturation: SaturationLimits = SaturationLimits()
    detector: detection.DetectorConfig = detection.DetectorConfig()
    grid: TimeGrid = TimeGrid(0.0, 1e-3, 1000)
    plant: str = "linear"
    seed: int = 0
    initial_state: tuple = (0.0, 0.0)
    controller: Optional[YawController] = None
    expect: dict = field(default_factory=dict)
    description: str = ""


_TOP_KEYS = {"schema_version", "name", "description", "vehicle", "output", "steering",
             "attack", "saturation", "detector", "grid", "plant", "seed", "initial_state",
             "controller", "expect"}
_VEHICLE_KEYS = {"preset", "m", "Iz", "a", "b", "Cf", "Cr", "vx", "stiffness_convention"}
_SIGNAL_KEYS = {"kind", "amplitude", "frequency", "phase", "level", "time"}
_EXPECT_KEYS = {"max_stealth_dev", "min_stealth_dev", "max_window_stealth_dev", "infeasible",
                "s0", "branch", "impact_ratio_min", "impact_decay", "alarm_within_window_of_clip",
                "min_clipped", "replay_recorded", "no_alarm", "max_abs_output",
                "max_abs_yaw_rate", "stealth_decay", "track_final"}


def _parse_signal(o: _Obj) -> SteeringProfile:
    kind = o.str("kind", "zero", {"zero", "constant", "step", "sinusoid"})
    try:
        if kind == "zero":
            return SteeringProfile.zero()
        if kind == "constant":
            return SteeringProfile.constant(o.num("level", required=True))
        if kind == "step":
            return SteeringProfile.step(o.num("time", required=True), o.num("level", required=True))
        return SteeringProfile.sinusoid(o.num("amplitude", required=True),
                                        o.num("frequency", required=True), o.num("phase", 0.0))
    except ValueError as exc:
        if isinstance(exc, ParseError):
            raise
        raise ValidationError(f"{o.path}: {exc}") from None


def _parse_vehicle(o: _Obj) -> VehicleParams:
    base = {}
    preset = o.str("preset", None, {"table1"})
    if preset == "table1":
        base = TABLE1.to_dict()
    for key in ("m", "Iz", "a", "b", "Cf", "Cr", "vx"):
        value = o.num(key, base.get(key), required=key not in base)
        base[key] = value
    base["stiffness_convention"] = o.str(
        "stiffness_convention", base.get("stiffness_convention", "per_axle_pair"),
        {c.value for c in StiffnessConvention})
    try:
        return VehicleParams(**base)
    except ValueError as exc:
        raise ValidationError(f"vehicle: {exc}") from None


_ATTACK_KEYS = {
    "replay": {"type", "t_r", "tau", "delta_ss", "injection"},
    "zda": {"type", "t0", "mode", "offset", "tol"},
    "zda_nonlinear": {"type", "t0", "eps", "prepare"},
    "covert": {"type", "t0", "signal", "channel", "limits_aware", "model_error", "tracking"},
    "covert_nonlinear": {"type", "t0", "signal", "channel", "limits_aware", "model_error",
                         "estimator", "observer", "cross_term"},
}


def _parse_attack(o_parent: _Obj) -> AttackConfig:
    raw = o_parent.raw("attack")
    if not isinstance(raw, dict):
        raise ParseError("attack", "expected an object")
    kind = raw.get("type")
    if kind not in _ATTACK_KEYS:
        raise ParseError("attack.type", f"expected one of {sorted(_ATTACK_KEYS)}, got {kind!r}")
    o = o_parent.obj("attack", _ATTACK_KEYS[kind])
    opts: dict = {}
    if kind == "replay":
        opts["t_r"] = o.num("t_r", required=True)
        opts["tau"] = o.num("tau", required=True)
        opts["delta_ss"] = o.num("delta_ss")
        if o.has("injection"):
            inj = o.obj("injection", {"channel", "value", "signal"})
            channel = inj.str("channel", "delta", {"mz", "delta"})
            if inj.has("signal"):
                sig = _parse_signal(inj.obj("signal", _SIGNAL_KEYS))
            else:
                sig = SteeringProfile.constant(inj.num("value", required=True))
            opts["injection"] = (channel, sig)
        if opts["tau"] <= 0:
            raise ValidationError("attack.tau must be > 0")
        if opts["delta_ss"] is not None and opts["delta_ss"] <= 0:
            raise ValidationError("attack.delta_ss must be > 0")
    elif kind == "zda":
        opts["t0"] = o.num("t0", 0.0)
        opts["mode"] = o.str("mode", "on_manifold", {"on_manifold", "injection_only"})
        opts["offset"] = o.num("offset", 0.5)
        opts["tol"] = o.num("tol", 1e-9)
        if opts["tol"] <= 0:
            raise ValidationError("attack.tol must be > 0")
    elif kind == "zda_nonlinear":
        opts["t0"] = o.num("t0", 0.0)
        opts["eps"] = o.num("eps", 1e-6)
        if opts["eps"] <= 0:
            raise ValidationError("attack.eps must be > 0")
        if o.has("prepare"):
            prep = o.obj("prepare", {"gain", "horizon"})
            opts["prepare"] = {"gain": prep.num("gain", 50.0), "horizon": prep.num("horizon", 2.0)}
        else:
            opts["prepare"] = None
    else:
        opts["t0"] = o.num("t0", 0.0)
        opts["signal"] = (_parse_signal(o.obj("signal", _SIGNAL_KEYS)) if o.has("signal")
                          else SteeringProfile.zero())
        opts["channel"] = o.str("channel", "mz", {"mz", "delta"})
        opts["limits_aware"] = o.bool("limits_aware", False)
        if o.has("model_error"):
            me = o.obj("model_error", {"Cf", "Cr"})
            opts["model_error"] = (me.num("Cf", 0.0), me.num("Cr", 0.0))
            if min(opts["model_error"]) <= -1.0:
                raise ValidationError("attack.model_error must stay above -100%")
        else:
            opts["model_error"] = (0.0, 0.0)
        if kind == "covert":
            if o.has("tracking"):
                tr = o.obj("tracking", {"ka", "la", "reference", "channel", "estimator"})
                opts["tracking"] = {
                    "ka": tr.vec("ka", 2, (0.0, 0.0)),
                    "la": tr.num("la", 0.0),
                    "reference": (_parse_signal(tr.obj("reference", _SIGNAL_KEYS))
                                  if tr.has("reference") else SteeringProfile.zero()),
                    "channel": tr.int("channel", 0),
                    "estimator": tr.str("estimator", "exact", {"exact", "observer"}),
                }
            else:
                opts["tracking"] = None
        else:
            opts["estimator"] = o.str("estimator", "exact", {"exact", "observer"})
            opts["cross_term"] = o.num("cross_term", covert_mod.EXACT_CROSS_TERM)
            obs = (o.obj("observer", {"poles", "initial_error", "post_attack"})
                   if o.has("observer") else _Obj({}, "attack.observer", set()))
            opts["observer"] = {
                "poles": obs.vec("poles", 2, (-10.0, -12.0)),
                "initial_error": obs.num("initial_error", 0.0),
                "post_attack": obs.str("post_attack", "corrected", {"corrected", "open_loop"}),
            }
    return AttackConfig(kind, opts)


def parse_scenario(text: str | bytes | dict) -> ScenarioSpec:
    """Parse and validate a scenario document.

    Raises :class:`ParseError` (with the path of the offending field) for
    malformed documents and :class:`ValidationError` for violated invariants.
    """
    if isinstance(text, dict):
        data = text
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError("", f"invalid JSON: {exc}") from None
    root = _Obj(data, "", _TOP_KEYS)
    version = root.int("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ParseError("schema_version", f"unsupported version {version}")
    name = root.str("name", "unnamed")

    if not root.has("vehicle"):
        raise ParseError("vehicle", "missing required object")
    vehicle = _parse_vehicle(root.obj("vehicle", _VEHICLE_KEYS))

    if not root.has("grid"):
        raise ParseError("grid", "missing required object")
    g = root.obj("grid", {"t0", "dt", "duration", "n_steps"})
    dt = g.num("dt", 1e-3)
    t0 = g.num("t0", 0.0)
    if g.has("n_steps") == g.has("duration"):
        raise ParseError("grid", "give exactly one of duration or n_steps")
    try:
        grid = (TimeGrid(t0, dt, g.int("n_steps")) if g.has("n_steps")
                else TimeGrid.from_duration(g.num("duration"), dt, t0))
    except ValueError as exc:
        raise ValidationError(f"grid: {exc}") from None

    output_case = OutputConfig(root.str("output", "yaw_rate", {c.value for c in OutputConfig}))
    steering = (_parse_signal(root.obj("steering", _SIGNAL_KEYS)) if root.has("steering")
                else SteeringProfile.zero())

    sat = SaturationLimits()
    if root.has("saturation"):
        s = root.obj("saturation", {"mz_max", "delta_max", "tire_alpha_sat"})
        try:
            sat = SaturationLimits(s.num("mz_max"), s.num("delta_max"), s.num("tire_alpha_sat"))
        except ValueError as exc:
            raise ValidationError(f"saturation: {exc}") from None

    det = detection.DetectorConfig()
    if root.has("detector"):
        d = root.obj("detector", {"threshold", "window"})
        try:
            det = detection.DetectorConfig(d.num("threshold", det.threshold),
                                           d.num("window", det.window))
        except ValueError as exc:
            raise ValidationError(f"detector: {exc}") from None
        if det.window < grid.dt:
            raise ValidationError("detector.window must be >= grid.dt")

    controller = None
    if root.has("controller"):
        c = root.obj("controller", {"kp", "channel", "reference"})
        controller = YawController(c.num("kp", required=True), c.int("channel", 0),
                                   c.num("reference", 0.0))

    plant = root.str("plant", "linear", {"linear", "nonlinear_tire"})
    attack = _parse_attack(root) if root.has("attack") else None
    expect = {}
    if root.has("expect"):
        e = root.obj("expect", _EXPECT_KEYS)
        expect = dict(e.data)

    spec = ScenarioSpec(
        name=name, vehicle=vehicle, output_case=output_case, steering=steering,
        attack=attack, saturation=sat, detector=det, grid=grid, plant=plant,
        seed=root.int("seed", 0), initial_state=root.vec("initial_state", 2, (0.0, 0.0)),
        controller=controller, expect=expect, description=root.str("description", ""),
    )
    validate(spec)
    return spec


def validate(spec: ScenarioSpec) -> None:
    n_out = 2 if spec.output_case is OutputConfig.COMBINED else 1
    if spec.controller is not None and not 0 <= spec.controller.channel < n_out:
        raise ValidationError("controller.channel out of range for the output case")
    a = spec.attack
    if a is None:
        return
    nonlinear_out = spec.output_case is OutputConfig.LONGITUDINAL_ACCEL
    if a.type in ("zda", "covert") and nonlinear_out:
        raise ValidationError(f"{a.type} attack needs a linear output; use "
                              f"{a.type}_nonlinear with longitudinal_accel")
    if a.type in ("zda_nonlinear", "covert_nonlinear") and not nonlinear_out:
        raise ValidationError(f"{a.type} attack requires output_case longitudinal_accel, "
                              f"got {spec.output_case.value}")
    if a.type == "replay":
        if a.options["t_r"] - a.options["tau"] < spec.grid.t0 - 1e-12:
            raise ValidationError("replay recording window starts before the simulation")
    tr = a.options.get("tracking")
    if tr is not None and not 0 <= tr["channel"] < n_out:
        raise ValidationError("attack.tracking.channel out of range for the output case")


def load_scenario(path) -> ScenarioSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def bundled_names() -> list[str]:
    files = ilr.files(BUNDLE_PACKAGE)
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def bundled_text(name: str) -> str:
    return ilr.files(BUNDLE_PACKAGE).joinpath(f"{name}.json").read_text(encoding="utf-8")


def resolve_scenario(ref: str) -> ScenarioSpec:
    """Load ``ref`` as a bundled scenario name or a file path."""
    if ref in bundled_names():
        return parse_scenario(bundled_text(ref))
    return load_scenario(ref)


# --- running ---------------------------------------------------------------

@dataclass
class RunSummary:
    name: str
    attack_type: Optional[str]
    status: str
    constants: dict
    stealth: detection.StealthReport
    impact: detection.ImpactReport
    clipped_samples: int
    wall_time: float
    events: list = field(default_factory=list)
    window_stealth: Optional[detection.StealthReport] = None
    nominal_peak: float = 0.0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "attack_type": self.attack_type,
            "status": self.status,
            "constants": self.constants,
            "stealth": self.stealth.to_dict(),
            "window_stealth": self.window_stealth.to_dict() if self.window_stealth else None,
            "impact": self.impact.to_dict(),
            "nominal_peak": self.nominal_peak,
            "clipped_samples": self.clipped_samples,
            "wall_time": self.wall_time,
            "events": list(self.events),
        }


@dataclass
class _Built:
    taps: ChannelTaps
    status: str
    constants: dict
    events: list


def synthesize(spec: ScenarioSpec) -> _Built:
    """Build the attack middleware for ``spec`` without simulating."""
    model = build_state_space(spec.vehicle)
    omap = output_map(model, spec.output_case)
    a = spec.attack
    if a is None:
        return _Built(ChannelTaps(), "no_attack", {}, [])
    o = a.options
    if a.type == "zda":
        plan = attacks.zda_synthesize_linear(model, omap, t0=o["t0"], tol=o["tol"])
        if not plan:
            return _Built(ChannelTaps(), "infeasible", {}, [f"infeasible: {plan.reason}"])
        plan = plan.scaled(o["offset"])
        taps = attacks.ZdaTaps(plan, on_manifold=o["mode"] == "on_manifold")
        return _Built(taps, "synthesized", plan.to_dict(), [])
    if a.type == "zda_nonlinear":
        taps = attacks.ZdaNonlinearTaps(t0=o["t0"], eps=o["eps"], prepare=o["prepare"])
        constants = {}
        if o["t0"] <= spec.grid.t0:
            plan = attacks.zda_synthesize_nonlinear(model, spec.initial_state, o["eps"], o["t0"])
            constants = plan.to_dict()
        return _Built(taps, "synthesized", constants, [])
    if a.type == "replay":
        injection = None
        if o.get("injection"):
            channel, sig = o["injection"]
            injection = (channel, sig.function())
        taps = attacks.ReplayTaps(o["t_r"], o["tau"], o["delta_ss"], injection)
        return _Built(taps, "configured", {}, [])
    attacker_model = covert_mod.perturbed_model(model, *o["model_error"])
    signal = o["signal"].function()
    if a.type == "covert":
        tracking = None
        tr = o["tracking"]
        if tr is not None:
            tracking = attacks.Tracking(ka=tr["ka"], la=tr["la"],
                                        reference=tr["reference"].function(),
                                        channel=tr["channel"])
        taps = attacks.CovertTaps(signal, t0=o["t0"], channel=o["channel"],
                                  tracking=tracking,
                                  tracking_estimator=(tr or {}).get("estimator", "exact"),
                                  limits_aware=o["limits_aware"], attacker_model=attacker_model)
    else:
        obs = o["observer"]
        taps = attacks.CovertTaps(signal, t0=o["t0"], channel=o["channel"], nonlinear=True,
                                  estimator=o["estimator"], observer_poles=obs["poles"],
                                  observer_initial_error=obs["initial_error"],
                                  post_attack_estimation=obs["post_attack"],
                                  limits_aware=o["limits_aware"],
                                  attacker_model=attacker_model, cross_term=o["cross_term"])
    return _Built(taps, "configured", {}, [])


def run_scenario(spec: ScenarioSpec) -> tuple[Trace, RunSummary]:
    """Model, output map, attack synthesis, simulation, reports.

    Infeasible synthesis is recorded in the summary and the run continues
    without an attack.
    """
    started = time.perf_counter()
    model = build_state_space(spec.vehicle)
    omap = output_map(model, spec.output_case)
    built = synthesize(spec)
    trace = simulate(model, omap, spec.steering, built.taps, spec.saturation, spec.grid,
                     x0=spec.initial_state, plant=spec.plant, controller=spec.controller)
    status, constants, events = built.status, dict(built.constants), list(built.events)
    window = None
    taps = built.taps
    if isinstance(taps, attacks.ReplayTaps):
        constants["delta_ss"] = taps.used_delta_ss
        if taps.failure is not None:
            status = "not_steady_state"
            events.append(f"recording rejected: {taps.failure}")
        else:
            status = "replayed"
            window = detection.stealth_report(trace.window(taps.t_r, taps.t_r + taps.tau),
                                              spec.detector)
    elif isinstance(taps, attacks.ZdaNonlinearTaps):
        events.extend(taps.events)
        if taps.plan is not None:
            constants = taps.plan.to_dict()
            status = "executed" if taps.plan.branch is attacks.Branch.Z1 else taps.plan.branch.value
        if taps.preparation is not None:
            constants["preparation_time"] = taps.preparation.duration
    elif status in ("synthesized", "configured"):
        status = "executed"
    summary = RunSummary(
        name=spec.name,
        attack_type=spec.attack.type if spec.attack else None,
        status=status,
        constants=constants,
        stealth=detection.stealth_report(trace, spec.detector),
        impact=detection.impact_report(trace),
        clipped_samples=int(np.count_nonzero(trace.clipped)),
        wall_time=time.perf_counter() - started,
        events=events,
        window_stealth=window,
        nominal_peak=float(np.max(np.abs(trace.x_nominal))) if len(trace) else 0.0,
    )
    return trace, summary


# --- expectations ----------------------------------------------------------

def check_expectations(spec: ScenarioSpec, trace: Trace,
                       summary: RunSummary) -> list[tuple[str, bool, str]]:
    """Evaluate the scenario's ``expect`` block; one ``(name, ok, detail)`` per key."""
    out = []
    e = spec.expect
    sup = summary.stealth.sup_dev
    if "max_stealth_dev" in e:
        out.append(("max_stealth_dev", sup <= e["max_stealth_dev"],
                    f"{sup:.3e} <= {e['max_stealth_dev']:.1e}"))
    if "min_stealth_dev" in e:
        out.append(("min_stealth_dev", sup > e["min_stealth_dev"],
                    f"{sup:.3e} > {e['min_stealth_dev']:.1e}"))
    if "max_window_stealth_dev" in e:
        ws = summary.window_stealth.sup_dev if summary.window_stealth else math.inf
        out.append(("max_window_stealth_dev", ws <= e["max_window_stealth_dev"],
                    f"{ws:.3e} <= {e['max_window_stealth_dev']:.1e}"))
    if "infeasible" in e:
        ok = (summary.status == "infeasible") == bool(e["infeasible"])
        out.append(("infeasible", ok, summary.status))
    if "s0" in e:
        model = build_state_space(spec.vehicle)
        target = {"a11": model.a11,
                  "lateral_accel_zero": model.a11 * spec.vehicle.vx / (model.a12 + spec.vehicle.vx)
                  }.get(e["s0"], e["s0"])
        s0 = summary.constants.get("s0", [math.nan])[0]
        ok = abs(s0 - float(target)) <= 1e-9 * max(1.0, abs(float(target)))
        out.append(("s0", ok, f"{s0:.10g} vs {float(target):.10g}"))
    if "branch" in e:
        br = summary.constants.get("branch")
        out.append(("branch", br == e["branch"], str(br)))
    if "impact_ratio_min" in e:
        ratio = summary.impact.sup / max(summary.nominal_peak, 1e-300)
        out.append(("impact_ratio_min", ratio > e["impact_ratio_min"],
                    f"{ratio:.3g} > {e['impact_ratio_min']}"))
    if "impact_decay" in e:
        dev = np.max(np.abs(trace.x_true - trace.x_nominal), axis=1)
        peak = float(dev.max()) if dev.size else 0.0
        ok = float(dev[-1]) <= e["impact_decay"] * peak
        out.append(("impact_decay", ok, f"terminal {dev[-1]:.3e} vs peak {peak:.3e}"))
    if "min_clipped" in e:
        out.append(("min_clipped", summary.clipped_samples >= e["min_clipped"],
                    str(summary.clipped_samples)))
    if e.get("alarm_within_window_of_clip"):
        clipped = np.flatnonzero(trace.clipped)
        fa = summary.stealth.first_alarm
        ok = clipped.size > 0 and fa is not None and \
            fa <= trace.t[clipped[0]] + spec.detector.window + 1e-12
        out.append(("alarm_within_window_of_clip", bool(ok), f"first alarm {fa}"))
    if e.get("no_alarm"):
        out.append(("no_alarm", summary.stealth.first_alarm is None,
                    f"first alarm {summary.stealth.first_alarm}"))
    if "max_abs_output" in e:
        peak = float(np.max(np.abs(trace.y_received)))
        out.append(("max_abs_output", peak <= e["max_abs_output"],
                    f"{peak:.3e} <= {e['max_abs_output']:.1e}"))
    if "max_abs_yaw_rate" in e:
        peak = float(np.max(np.abs(trace.x_true[:, 1])))
        out.append(("max_abs_yaw_rate", peak <= e["max_abs_yaw_rate"],
                    f"{peak:.3e} <= {e['max_abs_yaw_rate']:.1e}"))
    if "stealth_decay" in e:
        dev = detection.output_deviation(trace)
        ok = dev.size > 0 and float(dev[-1]) <= e["stealth_decay"] * float(dev.max())
        out.append(("stealth_decay", bool(ok), f"terminal {dev[-1]:.3e} vs peak {dev.max():.3e}"))
    if "track_final" in e:
        tf = e["track_final"]
        final = float(trace.y_true[-1, tf.get("channel", 0)])
        ok = abs(final - tf["value"]) <= tf["tol"]
        out.append(("track_final", ok, f"{final:.6g} vs {tf['value']} +/- {tf['tol']}"))
    if "replay_recorded" in e:
        ok = (summary.status == "replayed") == bool(e["replay_recorded"])
        out.append(("replay_recorded", ok, summary.status))
    return out

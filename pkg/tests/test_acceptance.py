"""Acceptance criteria, one test each. Every test prints a PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from latsec import TABLE1, SaturationLimits, SteeringProfile, TimeGrid, VehicleParams
from latsec import build_state_space, output_map, simulate
from latsec.attacks import (
    Branch,
    BranchUnsupported,
    CovertTaps,
    Infeasible,
    ReplayTaps,
    ZdaNonlinearTaps,
    ZdaTaps,
    zda_feedback_input,
    zda_nonlinear_input,
    zda_synthesize_linear,
    zda_synthesize_nonlinear,
)
from latsec.cli import main
from latsec.detection import DetectorConfig, calibrate_threshold, impact_report, residual_alarm, stealth_report
from latsec.numerics import TimeGrid as Grid, det_cofactor, eig2x2, integrate_rk4
from latsec.vehicle import PhaseClass, hurwitz_check, rosenbrock, zero_dynamics_stability_classifier

SIN = SteeringProfile.sinusoid(0.05, 0.2)
PER_AXLE = TABLE1.replace(stiffness_convention="per_axle")


def report(n, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
    assert ok, detail


def sup_dev(tr):
    return float(np.max(np.abs(tr.y_received - tr.y_nominal)))


def random_params(rng):
    while True:
        p = VehicleParams(
            m=rng.uniform(800, 3000), Iz=rng.uniform(800, 5000), a=rng.uniform(0.8, 1.8),
            b=rng.uniform(0.8, 1.8), Cf=rng.uniform(2e4, 1.5e5), Cr=rng.uniform(2e4, 1.5e5),
            vx=rng.uniform(5, 40),
            stiffness_convention=rng.choice(["per_axle", "per_axle_pair"]))
        # keep away from the decoupled case a*Cf == b*Cr, where no yaw zero is defined
        if abs(p.b * p.Cr - p.a * p.Cf) > 1e-3 * max(p.a * p.Cf, p.b * p.Cr):
            return p


def rank_deficient(model, omap, s0):
    P = rosenbrock(model, omap.C, s0)
    hadamard = np.prod([np.linalg.norm(row) for row in P])
    return abs(det_cofactor(P)) <= 1e-8 * hadamard


def test_invariant_zeros_on_random_vehicles():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    bad = []
    for i in range(200):
        p = random_params(rng)
        m = build_state_space(p)
        yaw, lat = output_map(m, "yaw_rate"), output_map(m, "lateral_accel")
        py, pl = zda_synthesize_linear(m, yaw), zda_synthesize_linear(m, lat)
        lat_zero = m.a11 * p.vx / (m.a12 + p.vx)
        ok = (bool(py) and bool(pl)
              and abs(py.s0 - m.a11) <= 1e-9 * abs(m.a11)
              and abs(pl.s0 - lat_zero) <= 1e-9 * abs(lat_zero)
              and rank_deficient(m, yaw, py.s0) and rank_deficient(m, lat, pl.s0)
              and isinstance(zda_synthesize_linear(m, output_map(m, "combined")), Infeasible))
        if not ok:
            bad.append(i)
    elapsed = time.perf_counter() - start
    report(1, not bad and elapsed <= 5.0, f"{200 - len(bad)}/200 vehicles, {elapsed:.2f} s")


@pytest.mark.parametrize("convention", ["per_axle", "per_axle_pair"])
def test_zda_output_nulling(convention):
    start = time.perf_counter()
    m = build_state_space(TABLE1.replace(stiffness_convention=convention))
    om = output_map(m, "yaw_rate")
    plan = zda_synthesize_linear(m, om).scaled(0.5)
    tr = simulate(m, om, SIN, ZdaTaps(plan), grid=TimeGrid.from_duration(10.0, 1e-3))
    elapsed = time.perf_counter() - start
    vy0 = tr.x_true[0, 0] - tr.x_nominal[0, 0]
    vy_err = np.max(np.abs(tr.x_true[:, 0] - tr.x_nominal[:, 0] - vy0 * np.exp(m.a11 * tr.t)))
    dev = sup_dev(tr)
    report(2, dev <= 1e-6 and vy_err <= 1e-6 and elapsed <= 1.0,
           f"{convention}: sup_dev {dev:.2e}, v_y error {vy_err:.2e}, {elapsed:.2f} s")


def test_zda_nonlinear():
    m = build_state_space(PER_AXLE)
    om = output_map(m, "longitudinal_accel")
    taps = ZdaNonlinearTaps(t0=0.0)
    tr = simulate(m, om, SteeringProfile.zero(), taps, grid=TimeGrid.from_duration(5.0, 1e-3),
                  x0=(0.5, 0.0))
    r_max = float(np.max(np.abs(tr.x_true[:, 1])))
    y_max = float(np.max(np.abs(tr.y_received)))
    z2 = zda_synthesize_nonlinear(m, (0.0, 0.0))
    try:
        zda_nonlinear_input(z2, m, 1.0)
        z2_ok = False
    except BranchUnsupported:
        z2_ok = z2.branch is Branch.Z2 and z2.M1_bar == 0.0
    plan = taps.plan
    ff_fb = max(abs(zda_nonlinear_input(plan, m, t) - zda_feedback_input(m, tr.x_true[k, 0]))
                for k, t in enumerate(tr.t))
    report(3, plan.branch is Branch.Z1 and r_max <= 1e-8 and y_max <= 1e-8 and z2_ok
           and ff_fb <= 1e-8,
           f"|r| {r_max:.2e}, |y| {y_max:.2e}, Z2 equilibrium {z2_ok}, ff vs fb {ff_fb:.2e}")


def test_covert_linear():
    m = build_state_space(PER_AXLE)
    signals = {"u_c = 1": lambda t: 1.0,
               "chirp": lambda t: 300.0 * math.sin(0.5 * t * t)}
    worst = 0.0
    for case in ("yaw_rate", "lateral_accel", "combined"):
        for sig in signals.values():
            tr = simulate(m, output_map(m, case), SIN, CovertTaps(sig),
                          grid=TimeGrid.from_duration(20.0, 1e-3))
            worst = max(worst, sup_dev(tr))
    report(4, worst <= 1e-8, f"worst sup_dev {worst:.2e} over 3 output cases")


def test_covert_nonlinear():
    m = build_state_space(PER_AXLE)
    om = output_map(m, "longitudinal_accel")
    g = TimeGrid.from_duration(2.0, 1e-3)
    exact = simulate(m, om, SIN, CovertTaps(lambda t: 1.0, nonlinear=True), grid=g, x0=(0.5, 0.1))
    taps = CovertTaps(lambda t: 1.0, nonlinear=True, estimator="observer",
                      observer_initial_error=0.1)
    obs = simulate(m, om, SIN, taps, grid=g, x0=(0.5, 0.1))
    d = np.abs(obs.y_received - obs.y_nominal)[:, 0]
    # observer error against the nominal twin, and the attacker's offset xa
    err = np.abs(np.asarray(taps.xhat_nominal_log) - obs.x_nominal).max(axis=1)
    xa = np.abs(obs.x_true - obs.x_nominal).sum(axis=1)
    tied = bool(np.all(d <= xa * err * (1 + 1e-9) + 1e-15))
    # the same observer started without error sets the integration floor
    clean = CovertTaps(lambda t: 1.0, nonlinear=True, estimator="observer")
    ref = simulate(m, om, SIN, clean, grid=g, x0=(0.5, 0.1))
    floor = np.abs(np.asarray(clean.xhat_nominal_log) - ref.x_nominal).max()
    # 0.1 s envelope of the observer error never grows until it is inside the floor
    env = err.reshape(20, -1).max(axis=1)
    monotone = bool(np.all((np.diff(env) <= 0) | (env[1:] <= floor)))
    decayed = d[-100:].max() <= 1e-3 * d.max()
    ok = sup_dev(exact) <= 1e-8 and d.max() > sup_dev(exact) and tied and monotone and decayed
    report(5, ok, f"exact {sup_dev(exact):.2e}, observer peak {d.max():.2e} -> "
                  f"{d[-100:].max():.2e}, bounded by observer error {tied}, "
                  f"error envelope {env[0]:.2e} -> {env[-1]:.2e} monotone {monotone} "
                  f"(floor {floor:.1e})")


def test_replay():
    m = build_state_space(PER_AXLE)
    om = output_map(m, "yaw_rate")
    g = TimeGrid.from_duration(30.0, 1e-3)
    taps = ReplayTaps(t_r=20.0, tau=10.0, injection=("delta", lambda t: 5.0))
    tr = simulate(m, om, SIN, taps, grid=g)
    baseline = simulate(m, om, SIN, grid=g)
    w = tr.window(20.0, 30.0)
    identical = np.array_equal(w.y_received, taps.buffer.samples[:len(w)])
    impact = float(np.max(impact_report(tr).sup_state_dev))
    base = float(np.max(np.abs(baseline.x_true)))
    window_dev = stealth_report(w).sup_dev
    report(6, identical and impact > 10 * base and window_dev <= 1e-9,
           f"bit-identical {identical}, impact {impact:.3g} vs 10x baseline {10 * base:.3g}, "
           f"window sup_dev {window_dev:.2e}")


def test_saturation_breaks_zda_not_aware_covert():
    m = build_state_space(PER_AXLE)
    om = output_map(m, "yaw_rate")
    plan = zda_synthesize_linear(m, om).scaled(0.5)
    g = TimeGrid.from_duration(10.0, 1e-3)
    free = simulate(m, om, SIN, ZdaTaps(plan), grid=g)
    cfg = DetectorConfig(threshold=calibrate_threshold(free), window=0.01)
    lim = SaturationLimits(mz_max=0.5 * abs(plan.a0))
    tr = simulate(m, om, SIN, ZdaTaps(plan), lim, g)
    dev = stealth_report(tr, cfg).sup_dev
    alarm = residual_alarm(tr, cfg).first_alarm
    t_clip = float(tr.t[np.flatnonzero(tr.clipped)[0]])
    fired = alarm is not None and alarm <= t_clip + cfg.window
    impact = impact_report(tr)
    bounded = max(impact.terminal_dev) <= 1e-3 * impact.sup
    aware = simulate(m, om, SIN, CovertTaps(lambda t: 400.0, limits_aware=True), lim, g)
    report(7, dev > cfg.threshold and fired and bounded and sup_dev(aware) <= 1e-8,
           f"sup_dev {dev:.2e} > threshold {cfg.threshold:.2e}, alarm {alarm} "
           f"(clip {t_clip}), terminal impact {max(impact.terminal_dev):.2e}, "
           f"aware covert {sup_dev(aware):.2e}")


def test_worn_rear_tires_decouple_stability():
    found = []
    for scale in np.linspace(1.0, 0.2, 81):
        p = PER_AXLE.replace(Cr=PER_AXLE.Cr * scale)
        m = build_state_space(p)
        hurwitz = hurwitz_check(m).is_hurwitz
        eig_ok = all(np.linalg.eigvals(m.A).real < 0)
        lat = zda_synthesize_linear(m, output_map(m, "lateral_accel"))
        nmp = zero_dynamics_stability_classifier(p) is PhaseClass.NON_MINIMUM_PHASE
        if nmp and hurwitz and eig_ok and lat.s0.real > 0:
            found.append(scale)
    report(8, bool(found), f"{len(found)} degraded vehicles are Hurwitz and non-minimum phase"
                           + (f", first at Cr x {found[0]:.2f}" if found else ""))


def test_numerics():
    m = build_state_space(PER_AXLE)
    deriv = lambda t, x, u: m.A @ x + m.E * u
    steer = lambda t: 0.05 * math.sin(2 * math.pi * 0.5 * t)
    ends = [integrate_rk4(deriv, [0.5, 0.1], steer, Grid.from_duration(1.0, dt))[-1]
            for dt in (0.04, 0.02, 0.01)]
    order = math.log2(np.linalg.norm(ends[0] - ends[1]) / np.linalg.norm(ends[1] - ends[2]))
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        A = rng.normal(size=(2, 2)) * 10.0 ** rng.uniform(-2, 2)
        l1, l2 = eig2x2(A)
        scale = max(1.0, np.abs(A).max() ** 2)
        worst = max(worst, abs(l1 + l2 - np.trace(A)) / scale,
                    abs(l1 * l2 - np.linalg.det(A)) / scale)
    report(9, order >= 3.9 and worst <= 1e-12,
           f"observed order {order:.3f}, worst eig2x2 identity error {worst:.1e}")


def test_suite_is_fast_and_reproducible(tmp_path, capsys):
    times, codes = [], []
    for run in ("a", "b"):
        start = time.perf_counter()
        codes.append(main(["suite", "--out", str(tmp_path / run)]))
        times.append(time.perf_counter() - start)
    table = capsys.readouterr().out
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    same = files == sorted(p.name for p in (tmp_path / "b").iterdir()) and all(
        (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files)
    print(table.splitlines()[-1])
    report(10, codes == [0, 0] and max(times) <= 60.0 and same,
           f"exit codes {codes}, {max(times):.1f} s per run, {len(files)} files identical {same}")

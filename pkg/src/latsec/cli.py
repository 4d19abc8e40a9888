"""Command-line entry point: ``latsec run|synthesize|suite|list``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from . import export
from .numerics import NonFiniteError
from .scenario import (
    ParseError,
    ValidationError,
    bundled_names,
    check_expectations,
    resolve_scenario,
    run_scenario,
    synthesize,
)

OUT_DIR_ENV = "LATSEC_OUT_DIR"
DEFAULT_OUT_DIR = "latsec_out"

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INFEASIBLE = 2


def _out_dir(arg: Optional[str]) -> Path:
    return Path(arg or os.environ.get(OUT_DIR_ENV) or DEFAULT_OUT_DIR)


def _write_outputs(spec, trace, summary, out: Path) -> None:
    export.emit_csv(trace, out / f"{spec.name}.csv")
    channels = list(trace.channels) + list(export.STATE_CHANNELS)
    export.emit_plot(trace, channels, out / f"{spec.name}.svg", title=spec.name)
    # wall time varies run to run, so it stays out of the file
    data = summary.to_dict()
    data.pop("wall_time")
    text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    export._atomic_write(out / f"{spec.name}.summary.json", text.encode("utf-8"))


def _cmd_run(args) -> int:
    spec = resolve_scenario(args.spec)
    trace, summary = run_scenario(spec)
    out = _out_dir(args.out)
    _write_outputs(spec, trace, summary, out)
    print(f"{spec.name}: {summary.status}")
    for key, value in summary.constants.items():
        print(f"  {key} = {value}")
    print(f"  stealth sup_dev = {summary.stealth.sup_dev:.6e}"
          f"  first_alarm = {summary.stealth.first_alarm}")
    print(f"  impact sup = {summary.impact.sup:.6e}  clipped samples = {summary.clipped_samples}")
    for event in summary.events:
        print(f"  event: {event}")
    print(f"  wall time {summary.wall_time:.3f} s, outputs in {out}")
    return EXIT_OK


def _cmd_synthesize(args) -> int:
    spec = resolve_scenario(args.spec)
    if spec.attack is None:
        print(f"{spec.name}: no attack configured")
        return EXIT_OK
    built = synthesize(spec)
    if built.status == "infeasible":
        reason = built.events[0] if built.events else "infeasible"
        print(f"{spec.name}: no invariant zeros ({reason})", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"{spec.name}: {spec.attack.type}")
    if built.constants:
        print(json.dumps(built.constants, indent=2, sort_keys=True))
    else:
        print("  no synthesized constants for this attack class")
    return EXIT_OK


def run_one(name: str, out: Optional[str]) -> dict:
    """Run a bundled scenario and check its expectations (suite worker)."""
    try:
        spec = resolve_scenario(name)
        trace, summary = run_scenario(spec)
    except Exception as exc:  # a broken scenario is a failed row, not a crash
        return {"name": name, "checks": [("run", False, f"{type(exc).__name__}: {exc}")],
                "wall_time": 0.0, "ok": False}
    checks = check_expectations(spec, trace, summary)
    if out is not None:
        _write_outputs(spec, trace, summary, Path(out))
    return {"name": name, "checks": checks, "wall_time": summary.wall_time,
            "ok": all(ok for _, ok, _ in checks)}


def _cmd_suite(args) -> int:
    names = bundled_names()
    out = str(_out_dir(args.out)) if (args.out or os.environ.get(OUT_DIR_ENV)) else None
    if args.jobs == 1:
        results = [run_one(n, out) for n in names]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(run_one, names, [out] * len(names)))
    width = max(len(n) for n in names)
    failed = 0
    for res in results:
        mark = "PASS" if res["ok"] else "FAIL"
        failed += not res["ok"]
        print(f"{mark}  {res['name']:<{width}}  {res['wall_time']:6.2f} s")
        for check, ok, detail in res["checks"]:
            print(f"        {'ok ' if ok else 'BAD'} {check}: {detail}")
    print(f"{len(results) - failed}/{len(results)} scenarios passed")
    return EXIT_OK if failed == 0 else EXIT_FAIL


def _cmd_list(args) -> int:
    for name in bundled_names():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="latsec", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="simulate one scenario and write CSV, SVG and summary")
    r.add_argument("spec", help="bundled scenario name or path to a JSON file")
    r.add_argument("--out", help=f"output directory (default ${OUT_DIR_ENV} or ./{DEFAULT_OUT_DIR})")
    r.set_defaults(func=_cmd_run)
    s = sub.add_parser("synthesize", help="print attack constants without simulating")
    s.add_argument("spec")
    s.set_defaults(func=_cmd_synthesize)
    su = sub.add_parser("suite", help="run every bundled scenario against its expectations")
    su.add_argument("--out", help="also write per-scenario outputs here")
    su.add_argument("--jobs", type=int, default=None, help="worker processes (default: CPU count)")
    su.set_defaults(func=_cmd_suite)
    ls = sub.add_parser("list", help="list bundled scenarios")
    ls.set_defaults(func=_cmd_list)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    except FileNotFoundError as exc:
        print(f"error: {exc.filename}: no such scenario or file", file=sys.stderr)
    except NonFiniteError as exc:
        print(f"error: {exc}", file=sys.stderr)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

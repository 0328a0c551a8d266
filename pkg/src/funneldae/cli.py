"""Command-line front end: ``funneldae analyze | simulate | selftest | list``.

Exit codes
----------
analyze:  0 success, 2 parse error, 3 structural precondition fails
          (the report is still printed).
simulate: 0 horizon completed inside the funnels, 2 parse error,
          3 rejected before integration (gain condition, initial funnel
          condition or inconsistent initial value), 4 funnel violation,
          5 Newton failure, 6 step size underflow.
selftest: 0 when every case passes, 1 otherwise.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import io, registry
from .closed_loop import integrate, monitor_funnel, preflight
from .dae_analysis import analyze
from .selftest import format_table, run_selftest

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_PRECONDITION = 3
EXIT_FUNNEL = 4
EXIT_NEWTON = 5
EXIT_UNDERFLOW = 6

_STATUS_EXIT = {
    "completed": EXIT_OK,
    "funnel_violation": EXIT_FUNNEL,
    "newton_failure": EXIT_NEWTON,
    "step_underflow": EXIT_UNDERFLOW,
}


def _err(msg: str) -> None:
    print(f"funneldae: {msg}", file=sys.stderr)


def _load_doc(target: str, kind: str) -> dict:
    """A path to an existing file, or the name of a registered system."""
    if os.path.exists(target):
        return io.load_json(target)
    known = registry.names()[kind]
    if target in known:
        return {"kind": kind, "registry": target} if kind == "linear" else \
            {"kind": kind, "plant": target}
    raise io.ConfigError(f"{target!r} is neither a file nor a registered {kind} system "
                         f"(known: {', '.join(known)})")


def cmd_analyze(args) -> int:
    try:
        doc = _load_doc(args.system, "linear")
        sys_ = io.parse_linear(doc)
    except io.ConfigError as exc:
        _err(str(exc))
        return EXIT_PARSE
    report = analyze(sys_)
    out = {"system": sys_.to_json(), "analysis": report.to_json()}
    print(io.dumps(out))
    if not report.preconditions_ok:
        missing = [name for name, ok in (("autonomous zero dynamics", report.zd_autonomous),
                                         ("right-invertibility", report.right_invertible)) if not ok]
        _err("precondition failed: " + ", ".join(missing))
        return EXIT_PRECONDITION
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        doc = _load_doc(args.system, "nonlinear")
        doc = dict(doc)
        ctrl_doc = dict(doc.get("controller") or {})
        if args.k_hat is not None:
            ctrl_doc["k_hat"] = args.k_hat
        doc["controller"] = ctrl_doc
        sim_doc = dict(doc.get("simulation") or {})
        for key in ("t_end", "tol", "method"):
            val = getattr(args, key)
            if val is not None:
                sim_doc[key] = val
        doc["simulation"] = sim_doc
        plant, ctrl, cfg = io.parse_nonlinear(doc)
    except io.ConfigError as exc:
        _err(str(exc))
        return EXIT_PARSE

    pf = preflight(plant, ctrl, cfg.consistency_tol)
    if not pf.ok:
        for msg in pf.messages:
            _err(f"rejected before integration: {msg}")
        return EXIT_PRECONDITION

    traj = integrate(plant, ctrl, cfg, check=False)
    if args.out:
        traj.to_csv(args.out, stride=args.stride)
    summ = traj.summary(cfg.t_min)
    if args.summary:
        with open(args.summary, "w", encoding="utf-8") as fh:
            fh.write(io.dumps(summ))
    if not args.quiet:
        print(io.dumps(summ))
    code = _STATUS_EXIT.get(traj.status, EXIT_UNDERFLOW)
    if code == EXIT_OK and not monitor_funnel(traj, cfg.t_min).inside:
        code = EXIT_FUNNEL
    if code != EXIT_OK:
        _err(f"{traj.status} at t={traj.times[-1]:.6g}: {traj.message}")
    return code


def cmd_selftest(args) -> int:
    results = run_selftest(filter=args.filter)
    if not results:
        _err(f"no case matches {args.filter!r}")
        return 1
    print(format_table(results))
    return EXIT_OK if all(r.passed for r in results) else 1


def cmd_list(args) -> int:
    for kind, names in registry.names().items():
        print(f"{kind}: {', '.join(names)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="funneldae", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="structural analysis of a linear DAE")
    a.add_argument("system", help="JSON file or registered linear system name")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="closed-loop funnel control simulation")
    s.add_argument("system", help="JSON file or registered nonlinear plant name")
    s.add_argument("--t-end", type=float, dest="t_end")
    s.add_argument("--tol", type=float)
    s.add_argument("--method", choices=["bs23", "dopri5"])
    s.add_argument("--k-hat", type=float, dest="k_hat")
    s.add_argument("--out", help="trajectory CSV path")
    s.add_argument("--summary", help="summary JSON path")
    s.add_argument("--stride", type=int, default=1, help="write every n-th accepted step")
    s.add_argument("--quiet", action="store_true", help="do not print the summary")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("selftest", help="golden-example battery")
    t.add_argument("--filter", help="keep cases whose group or name contains this text")
    t.set_defaults(func=cmd_selftest)

    ls = sub.add_parser("list", help="list registered systems")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "stride", 1) < 1:
        _err("--stride must be at least 1")
        return EXIT_PARSE
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Commands: expect, conditional, simulate, verify, report.
Exit codes: 0 success, 1 check failures, 2 usage error, 3 numeric error.
Precedence: command-line flags > config file > built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import RunConfig, load_config
from .gcore import default_scenario_family
from .gheat import gnormal_expect
from .glattice import (
    CylinderFunctional,
    build_lattice,
    conditional_expect,
    ensemble_to_csv,
    extract_worst_policy,
    lattice_expect,
    sample_paths,
)
from .payoff import PayoffSyntaxError, parse
from .verifier import CHECKS, reports_to_json, reports_to_table, run_suite


def _add_global_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="flat key=value config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--sigma0-sq", type=float, default=None,
                   help="lower variance rate of the volatility band")
    p.add_argument("--n-steps", type=int, default=None)
    p.add_argument("--n-paths", type=int, default=None)
    p.add_argument("--out", metavar="DIR", default=None, help="output directory")
    p.add_argument("--nx", type=int, default=None, help="PDE grid nodes")
    p.add_argument("--x-span", type=float, default=None, help="PDE half-width")
    p.add_argument("--cfl-safety", type=float, default=None)
    p.add_argument("--digits", type=int, default=None,
                   help="printing precision (significant digits)")


def _build_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    return cfg.with_overrides(
        seed=args.seed,
        sigma_lower_sq=args.sigma0_sq,
        n_steps=args.n_steps,
        n_paths=args.n_paths,
        out_dir=args.out,
        nx=args.nx,
        x_span=args.x_span,
        cfl_safety=args.cfl_safety,
        digits=args.digits,
    )


def _fmt(cfg: RunConfig, x: float) -> str:
    return f"{x:.{cfg.digits}g}"


def _parse_levels(cfg: RunConfig, times: str | None, n_anchors: int):
    if times is None:
        return tuple(
            round(cfg.n_steps * (i + 1) / n_anchors) for i in range(n_anchors)
        )
    parts = [p for p in times.split(",") if p.strip()]
    return tuple(int(p) for p in parts)


def cmd_expect(args) -> int:
    cfg = _build_config(args)
    phi = parse(args.phi)
    from .payoff import arity

    m = max(arity(phi), 1)
    values = {}
    if args.backend in ("lattice", "both"):
        lat = build_lattice(args.t, cfg.n_steps, cfg.params, cfg.sigma_refinement)
        levels = _parse_levels(cfg, args.times, m)
        X = CylinderFunctional(levels, phi, mode=args.mode)
        values["lattice"] = lattice_expect(lat, X)
    if args.backend in ("pde", "both"):
        if m > 1:
            raise ValueError("the PDE backend handles single-variable payoffs")
        values["pde"] = gnormal_expect(
            phi, args.t, cfg.params, nx=cfg.nx, cfl_safety=cfg.cfl_safety
        )
    for k in ("lattice", "pde"):
        if k in values:
            print(f"{k}: {_fmt(cfg, values[k])}")
    if len(values) == 2:
        print(f"diff: {_fmt(cfg, values['lattice'] - values['pde'])}")
    if args.csv:
        import csv as _csv

        with open(args.csv, "w", newline="") as fh:
            w = _csv.writer(fh)
            w.writerow(["backend", "value"])
            for k, v in values.items():
                w.writerow([k, repr(v)])
    return 0


def cmd_conditional(args) -> int:
    cfg = _build_config(args)
    phi = parse(args.phi)
    from .payoff import arity

    m = max(arity(phi), 1)
    lat = build_lattice(args.t, cfg.n_steps, cfg.params, cfg.sigma_refinement)
    levels = _parse_levels(cfg, args.times, m)
    X = CylinderFunctional(levels, phi, mode=args.mode)
    table = conditional_expect(lat, X, args.j)
    mask = table.valid_mask()
    pos = table.positions()
    rows = sorted(zip(pos[mask].tolist(), table.values[mask].tolist()))
    out = args.csv or os.path.join(cfg.out_dir, "conditional.csv")
    import csv as _csv

    with open(out, "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["node", "psi"])
        for x, v in rows:
            w.writerow([repr(x), repr(v)])
    print(f"wrote {len(rows)} nodes to {out}")
    if args.j == 0:
        print(f"value: {_fmt(cfg, table.value_at_origin())}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _build_config(args)
    lat = build_lattice(args.t, cfg.n_steps, cfg.params, cfg.sigma_refinement)
    if args.policy.startswith("worst:"):
        phi = parse(args.policy[len("worst:"):])
        X = CylinderFunctional((cfg.n_steps,), phi)
        policy = extract_worst_policy(lat, X)
    else:
        family = default_scenario_family(cfg.params)
        policy = family.by_name(args.policy)
    ens = sample_paths(lat, policy, cfg.n_paths, cfg.seed)
    out = args.csv or os.path.join(cfg.out_dir, "paths.csv")
    ensemble_to_csv(ens, out)
    print(f"wrote {ens.n_paths} paths to {out}")
    return 0


def cmd_verify(args) -> int:
    cfg = _build_config(args)
    if args.no_timing:
        cfg = cfg.with_overrides(timing=False)
    only = [c.strip() for c in args.only.split(",")] if args.only else None
    reports, failures = run_suite(cfg, only=only)
    out = args.report or os.path.join(cfg.out_dir, "report.json")
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(reports_to_json(reports))
    print(reports_to_table(reports))
    print(f"\n{len(reports)} checks, {failures} unexpected outcome(s); "
          f"report written to {out}")
    return 1 if failures else 0


def cmd_report(args) -> int:
    cfg = _build_config(args)
    with open(args.input, encoding="utf-8") as fh:
        data = json.load(fh)

    from .verifier import VerificationReport

    reports = [
        VerificationReport(
            check_id=d["id"], kind=d["kind"], lhs=d["lhs"], rhs=d["rhs"],
            tol=d["tol"], passed=d["pass"], backend=d["backend"],
            seed=d.get("seed"), n_paths=d.get("n_paths"),
            wall_ms=d.get("wall_ms", 0.0),
            expected_fail=d.get("expected_fail", False),
            details=d.get("details", {}),
        )
        for d in data
    ]
    print(reports_to_table(reports))
    return 0


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="gexpect",
        description="Sublinear expectations of path functionals under "
                    "uncertain volatility",
    )
    sub = p.add_subparsers(dest="command", required=True)

    pe = sub.add_parser("expect", help="compute an upper expectation")
    pe.add_argument("--phi", required=True, help="payoff expression")
    pe.add_argument("--t", type=float, default=1.0, help="horizon")
    pe.add_argument("--times", default=None,
                    help="comma-separated anchor levels (lattice backend)")
    pe.add_argument("--mode", choices=("increments", "levels"),
                    default="increments")
    pe.add_argument("--backend", choices=("pde", "lattice", "both"),
                    default="both")
    pe.add_argument("--csv", default=None)
    _add_global_flags(pe)
    pe.set_defaults(func=cmd_expect)

    pc = sub.add_parser("conditional", help="conditional expectation node table")
    pc.add_argument("--phi", required=True)
    pc.add_argument("--t", type=float, default=1.0)
    pc.add_argument("--times", default=None)
    pc.add_argument("--mode", choices=("increments", "levels"),
                    default="increments")
    pc.add_argument("--j", type=int, required=True, help="conditioning level")
    pc.add_argument("--csv", default=None)
    _add_global_flags(pc)
    pc.set_defaults(func=cmd_conditional)

    ps = sub.add_parser("simulate", help="sample a seeded path ensemble")
    ps.add_argument("--policy", required=True,
                    help="scenario name or worst:<payoff>")
    ps.add_argument("--t", type=float, default=1.0)
    ps.add_argument("--csv", default=None)
    _add_global_flags(ps)
    ps.set_defaults(func=cmd_simulate)

    pv = sub.add_parser("verify", help="run the verification suite")
    pv.add_argument("--only", default=None, help="comma-separated check ids: "
                    + ", ".join(CHECKS))
    pv.add_argument("--report", default=None, help="JSON report path")
    pv.add_argument("--no-timing", action="store_true",
                    help="zero wall times for byte-identical reports")
    _add_global_flags(pv)
    pv.set_defaults(func=cmd_verify)

    pr = sub.add_parser("report", help="render a JSON report as a table")
    pr.add_argument("--input", required=True)
    _add_global_flags(pr)
    pr.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (PayoffSyntaxError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FloatingPointError, RuntimeError,
            ZeroDivisionError, ArithmeticError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

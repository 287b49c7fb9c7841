"""``ptone`` command line.

Exit codes: 0 when every check passes, 2 when an inequality check fails,
1 on an execution or input error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from typing import List, Optional

from .report import CertificationReport
from .runner import run, write_report
from .scenario import BOUND_METHODS, ScenarioError, parse_scenario, parse_scenario_text


def _add_model_flags(ap: argparse.ArgumentParser, domain_required: bool = True):
    ap.add_argument("--dim", type=int, required=True)
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--curvature", type=float)
    src.add_argument("--warp-table")
    ap.add_argument("--r-max", type=float)
    ap.add_argument("--p", type=float, default=2.0)
    ap.add_argument("--tol", type=float)
    ap.add_argument("--grid", type=int)
    dom = ap.add_mutually_exclusive_group(required=domain_required)
    dom.add_argument("--ball", type=float, metavar="R")
    dom.add_argument("--annulus", type=float, nargs=2, metavar=("R0", "R1"))
    dom.add_argument("--open", type=float, nargs="+", metavar="R")
    ap.add_argument("--inner", type=float, help="inner radius for --open (essential tone)")
    ap.add_argument("--format", choices=("json", "csv"), default="json")
    ap.add_argument("--output", help="write the report here instead of stdout")
    ap.add_argument("--dump-eigenfunction", metavar="PATH", help="two-column r,u CSV of the eigenfunction")


def _scenario_text(ns, tasks: List[str]) -> str:
    """Translate flags into the scenario format so both routes share one parser."""
    lines = ["[model]", f"dim = {ns.dim}"]
    if ns.curvature is not None:
        lines.append(f"curvature = {ns.curvature!r}")
    else:
        lines.append(f"warp_table = {ns.warp_table}")
    if ns.r_max is not None:
        lines.append(f"r_max = {ns.r_max!r}")
    lines += ["[params]", f"p = {ns.p!r}"]
    if ns.tol is not None:
        lines.append(f"tol = {ns.tol!r}")
    if ns.grid is not None:
        lines.append(f"grid = {ns.grid}")
    lines.append("[domain]")
    if ns.ball is not None:
        lines.append(f"ball = {ns.ball!r}")
    elif ns.annulus is not None:
        lines.append(f"annulus = {ns.annulus[0]!r}, {ns.annulus[1]!r}")
    elif ns.open is not None:
        lines.append("open = " + ", ".join(repr(R) for R in ns.open))
    else:
        # growth-only commands still need a radius for the default window
        lines.append(f"ball = {ns.r_hi!r}")
    if ns.inner is not None:
        lines.append(f"inner = {ns.inner!r}")
    if getattr(ns, "field", None):
        lines += ["[field]", f"kind = {ns.field}"]
    if getattr(ns, "r_lo", None) is not None or getattr(ns, "r_hi", None) is not None:
        lines.append("[growth]")
        if ns.r_lo is not None:
            lines.append(f"r_lo = {ns.r_lo!r}")
        if ns.r_hi is not None:
            lines.append(f"r_hi = {ns.r_hi!r}")
    lines += ["[tasks]", "run = " + ", ".join(tasks), "[output]", f"format = {ns.format}"]
    if ns.dump_eigenfunction:
        lines.append(f"eigenfunction = {ns.dump_eigenfunction}")
    return "\n".join(lines) + "\n"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ptone", description="First p-Laplacian tones of radial models and their bounds.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, help_ in (("run", "run a scenario file and write its report"),
                        ("certify", "run a scenario and print pass/fail lines")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("scenario")
        p.add_argument("--format", choices=("json", "csv"))
        p.add_argument("--output")

    p = sub.add_parser("tone", help="first Dirichlet tone of a ball, annulus or exhaustion")
    _add_model_flags(p)

    p = sub.add_parser("bound", help="a lower bound checked against the computed tone")
    _add_model_flags(p)
    p.add_argument("--method", choices=BOUND_METHODS, required=True)
    p.add_argument("--field", help="gradient_distance, canonical_pq or constant:BETA")

    for name, help_ in (("growth", "exponential volume growth and the growth ceiling"),
                        ("cheeger", "radial Cheeger ratio")):
        p = sub.add_parser(name, help=help_)
        _add_model_flags(p, domain_required=False)
        p.add_argument("--r-lo", type=float)
        p.add_argument("--r-hi", type=float)

    p = sub.add_parser("ess-tone", help="essential tone from annuli (inner, R)")
    _add_model_flags(p)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if ns.command in ("run", "certify"):
            sc = parse_scenario(ns.scenario)
            fmt = ns.format
            out = ns.output
        else:
            if ns.command in ("growth", "cheeger") and ns.r_hi is None and not any(
                    (ns.ball, ns.annulus, ns.open)) and not (ns.r_max and math.isfinite(ns.r_max)):
                raise ScenarioError("give --r-hi, --r-max or a domain", "--r-hi")
            if ns.command in ("growth", "cheeger") and ns.r_hi is None and not any((ns.ball, ns.annulus, ns.open)):
                ns.r_hi = ns.r_max
            tasks = {
                "tone": ["tone"],
                "bound": [f"bound:{getattr(ns, 'method', '')}"],
                "growth": ["growth"],
                "cheeger": ["cheeger"],
                "ess-tone": ["ess_tone"],
            }[ns.command]
            sc = parse_scenario_text(_scenario_text(ns, tasks), ns.command)
            fmt, out = ns.format, ns.output
    except (ScenarioError, OSError) as exc:
        print(f"ptone: {exc}", file=sys.stderr)
        return 1
    rep: CertificationReport = run(sc)
    text = write_report(rep, sc, out, fmt)
    if ns.command == "certify":
        print("\n".join(rep.lines()))
    elif not (out or (ns.command == "run" and sc.output_path)):
        sys.stdout.write(text)
    return rep.exit_code


if __name__ == "__main__":
    sys.exit(main())

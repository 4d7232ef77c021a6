"""Command line: ``algebroid-hj {check,integrate,hj,td,catalog}``.

Exit codes: 0 when every requested check passes, 1 when a check fails,
2 on input errors.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .algebroid import AlgebroidError, sample_box, validate_algebroid
from .dynamics import IntegrationError, integrate, verify_theorem5
from .expr import ExprError
from .hamilton_jacobi import (
    cocycle_residual, preimage_points, type1_residual, type2_residuals,
)
from .prolongation import (
    DualPoint, hamiltonian_section_check, omega_cross_check, verify_lemma7, verify_prop4,
)
from .report import ResidualReport, dumps, write_atomic
from .scenario import (
    CATALOG_ORDER, Scenario, ScenarioError, catalog_text, get_scenario,
)
from .time_extension import extend, integrate_extended, lift_section, td_verify

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
CURVE_STARTS = 10


class InputError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _emit(args, command: str, scenario: Scenario, reports: list[ResidualReport], notes: Sequence[str] = ()) -> int:
    ok = bool(reports) and all(r.passed for r in reports)
    for r in reports:
        print(r.summary())
    for note in notes:
        print(f"note: {note}", file=sys.stderr)
    doc = {
        "command": command,
        "scenario": scenario.name,
        "pass": ok,
        "reports": [r.to_dict() for r in reports],
    }
    if args.out == "-":
        sys.stdout.write(dumps(doc))
    elif args.out:
        write_atomic(args.out, dumps(doc))
    return EXIT_OK if ok else EXIT_FAIL


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("scenario", help="catalog name or path to a scenario JSON file")
    p.add_argument("--samples", type=_positive_int, help="number of sample points")
    p.add_argument("--tol", type=_positive_float, help="override the pass/fail tolerance")
    p.add_argument("--seed", type=_seed, help="override the scenario seed")
    p.add_argument("--out", help="write the JSON report here ('-' for stdout)")


# ---------------------------------------------------------------- subcommands

def cmd_check(args) -> int:
    s = get_scenario(args.scenario)
    seed = s.seed if args.seed is None else args.seed
    count = args.samples or s.samples
    tol = s.tolerances
    struct_tol = args.tol or tol.structural
    rng = np.random.default_rng(seed)
    reports = []

    inner = validate_algebroid(s.algebroid, s.sample_base(count, rng)[:, int(s.time_dependent):],
                               tol=struct_tol, seed=seed)
    reports.append(inner)
    A = s.algebroid
    hams = dict(s.hamiltonians)
    sections = {k: (d.section, d.domain, d.hamiltonian) for k, d in s.sections.items()}
    if s.time_dependent:
        ext, _ = extend(s.algebroid, next(iter(hams.values())))
        A = ext.spec
        ext_report = validate_algebroid(A, s.sample_base(count, rng), tol=struct_tol, seed=seed)
        ext_report.check = "validate_extended"
        reports.append(ext_report)
        hams = {k: extend(s.algebroid, h)[1] for k, h in hams.items()}
        sections = {k: (lift_section(s.algebroid, s.hamiltonian(h), g), dom, h)
                    for k, (g, dom, h) in sections.items()}

    def dual_points(n_pts):
        if s.time_dependent:
            base = s.sample_base(n_pts, rng)
            energy = rng.uniform(-2.0, 2.0, size=(n_pts, 1))
            mus = np.hstack([energy, sample_box(s.fiber_domain, n_pts, rng)])
            return [DualPoint.of(x, mu) for x, mu in zip(base, mus)]
        return s.sample_dual(n_pts, rng)

    points = dual_points(count)
    reports.append(omega_cross_check(A, points, tol=args.tol or tol.oracle, seed=seed))
    for name, H in hams.items():
        r = hamiltonian_section_check(A, H, points, tol=args.tol or tol.oracle, seed=seed)
        r.check = f"hamiltonian_section[{name}]"
        reports.append(r)
    for name, (gamma, dom, _) in sections.items():
        xs = s.sample_base(count, rng, dom)
        r4 = verify_prop4(A, gamma, xs, tol=struct_tol, seed=seed)
        r4.check = f"prop4[{name}]"
        r7 = verify_lemma7(A, gamma, xs, tol=struct_tol, seed=seed)
        r7.check = f"lemma7[{name}]"
        reports += [r4, r7]
    return _emit(args, "check", s, reports)


def cmd_integrate(args) -> int:
    s = get_scenario(args.scenario)
    name = args.hamiltonian or next(iter(s.hamiltonians))
    H = s.hamiltonian(name)
    if len(args.start) != s.m + s.n:
        raise InputError(f"--start needs {s.m + s.n} values (x1..x{s.m}, mu1..mu{s.n}), got {len(args.start)}")
    p0 = DualPoint.of(args.start[: s.m], args.start[s.m:])
    if not args.t1 > args.t0:
        raise InputError("--t1 must exceed --t0")
    try:
        if s.time_dependent:
            ext, K, traj = integrate_extended(s.algebroid, H, p0, args.t0, args.t1, args.dt, s.name)
            A, H_out = ext.spec, K
        else:
            traj = integrate(s.algebroid, H, p0, args.t0, args.t1, args.dt, s.name)
            A, H_out = s.algebroid, H
    except IntegrationError as exc:
        print(f"integration failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    text = traj.to_csv(A, H_out)
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        write_atomic(args.out, text)
    if "diagnostic" in traj.meta:
        print(f"integration truncated: {traj.meta['diagnostic']}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _hj_setup(args, s: Scenario):
    decl = s.section(args.gamma)
    H = s.hamiltonian(args.hamiltonian or decl.hamiltonian)
    eps = None
    if args.epsilon is not None:
        eps = s.morphism(args.epsilon)
    seed = s.seed if args.seed is None else args.seed
    return decl, H, eps, seed


def cmd_hj(args) -> int:
    s = get_scenario(args.scenario)
    if s.time_dependent:
        raise InputError(f"{s.name} is time-dependent; use the td subcommand")
    decl, H, eps, seed = _hj_setup(args, s)
    rng = np.random.default_rng(seed)
    A, gamma, tol = s.algebroid, decl.section, s.tolerances
    notes = []
    if args.theorem == "5":
        starts = s.sample_base(args.samples or CURVE_STARTS, rng, decl.domain)
        report = verify_theorem5(A, H, gamma, starts, horizon=args.horizon, dt=args.dt,
                                 tol=args.tol or tol.theorem5, seed=seed)
    elif args.theorem == "type1":
        xs = s.sample_base(args.samples or s.samples, rng, decl.domain)
        report = type1_residual(A, H, gamma, xs, tol=args.tol or tol.theorem, seed=seed)
        report.extra["cocycle_max"] = cocycle_residual(A, gamma, xs).max
    else:
        if eps is None:
            raise InputError("--theorem type2 needs --epsilon")
        xs = s.sample_base(args.samples or s.samples, rng, decl.domain)
        points = preimage_points(A, gamma, eps.morphism, xs)
        report = type2_residuals(A, H, gamma, eps.morphism, points, tol=args.tol or tol.theorem, seed=seed,
                                 alt="alt-type2" in args.flag, symplectic_tol=tol.structural)
        if not report.extra["symplectic"]:
            notes.append(f"morphism {eps.name} fails the symplectic test (max {report.extra['symplectic_max']:.3e})")
    return _emit(args, f"hj --theorem {args.theorem}", s, [report], notes)


def cmd_td(args) -> int:
    s = get_scenario(args.scenario)
    decl, H, eps, seed = _hj_setup(args, s)
    rng = np.random.default_rng(seed)
    tol = s.tolerances
    kind = {"10": "theorem10", "type1": "type1", "type2": "type2"}[args.theorem]
    default_count = CURVE_STARTS if kind == "theorem10" else s.samples
    count = args.samples or default_count
    pts = s.sample_base(count, rng, decl.domain)
    if not s.time_dependent:
        pts = np.hstack([rng.uniform(0.0, 1.0, size=(count, 1)), pts])
    if kind == "type2" and eps is None:
        raise InputError("--theorem type2 needs --epsilon")
    report = td_verify(kind, s.algebroid, H, decl.section, pts,
                       eps=eps.morphism if eps else None,
                       tol=args.tol or (tol.theorem5 if kind == "theorem10" else tol.theorem),
                       seed=seed, horizon=args.horizon, dt=args.dt,
                       eps_energy=eps.energy if eps else None, alt="alt-type2" in args.flag)
    notes = []
    if kind == "type2" and not report.extra["symplectic"]:
        notes.append(f"morphism {eps.name} fails the symplectic test")
    return _emit(args, f"td --theorem {args.theorem}", s, [report], notes)


def cmd_catalog(args) -> int:
    if args.export:
        out = Path(args.export)
        out.mkdir(parents=True, exist_ok=True)
        for name in CATALOG_ORDER:
            write_atomic(out / f"{name}.json", catalog_text(name))
            print(out / f"{name}.json")
        return EXIT_OK
    for name in CATALOG_ORDER:
        s = get_scenario(name)
        kind = "time-dependent" if s.time_dependent else "autonomous"
        print(f"{name}: m={s.m} n={s.n} {kind}; sections {', '.join(s.sections)}; "
              f"morphisms {', '.join(s.morphisms)}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="algebroid-hj",
                                     description="Hamilton-Jacobi residual checks on Lie algebroids.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="structure, Omega oracle, Hamiltonian section and pullback checks")
    _common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("integrate", help="integrate Hamilton's equations with RK4 and write CSV")
    p.add_argument("scenario")
    p.add_argument("--hamiltonian")
    p.add_argument("--start", type=_floats, required=True, help="x1,..,xm,mu1,..,mun")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--t1", type=float, required=True)
    p.add_argument("--dt", type=_positive_float, default=0.01)
    p.add_argument("--out", help="CSV path ('-' or omitted for stdout)")
    p.set_defaults(func=cmd_integrate)

    for name, theorems, help_text in (
        ("hj", ("5", "type1", "type2"), "verify an autonomous Hamilton-Jacobi candidate"),
        ("td", ("10", "type1", "type2"), "verify through the extended time-dependent formalism"),
    ):
        p = sub.add_parser(name, help=help_text)
        _common(p)
        p.add_argument("--theorem", choices=theorems, required=True)
        p.add_argument("--gamma", required=True, help="section name")
        p.add_argument("--epsilon", help="morphism name (type2)")
        p.add_argument("--hamiltonian", help="override the section's Hamiltonian")
        p.add_argument("--flag", action="append", default=[], choices=["alt-type2"])
        p.add_argument("--horizon", type=_positive_float, default=1.0)
        p.add_argument("--dt", type=_positive_float, default=0.01)
        p.set_defaults(func=cmd_hj if name == "hj" else cmd_td)

    p = sub.add_parser("catalog", help="list or export the built-in scenarios")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--list", action="store_true")
    g.add_argument("--export", metavar="DIR")
    p.set_defaults(func=cmd_catalog)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ScenarioError, ExprError, AlgebroidError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

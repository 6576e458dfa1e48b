"""Command-line driver.

Subcommands: ``check`` (invariance verdict for the file's transformation
family), ``solve`` (one of the three routes), ``compare`` (cost agreement
table across every applicable route).  Exit codes are a stable contract:
0 success/agreement, 1 false verdict or disagreement, 2 usage or file
format, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import leitmann, noether, oracle
from .errors import ProblemFormatError, SymocError, UnsupportedError
from .expr import EvalError, NotPolynomialError
from .problem import (
    ProblemSpec,
    Solution,
    _trajectory_at,
    load_problem,
    residuals,
    solution_summary,
    solution_to_csv,
    solution_to_json,
)
from .symmetry import TransformFamily, check_invariance, synthesize_gauge

EXIT_OK = 0
EXIT_VERDICT = 1
EXIT_USAGE = 2
EXIT_SOLVER = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="symoc",
        description="Global solutions of invariant optimal control problems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("problem", help="problem definition file (.ocp)")
        sp.add_argument("--mesh", type=int, default=200, help="oracle mesh size")
        sp.add_argument("--tol", type=float, default=None, help="tolerance override")
        sp.add_argument("--seed", type=int, default=42, help="sampling seed")
        sp.add_argument("--out", default=None, help="directory for report/trajectory files")
        sp.add_argument("--format", choices=("text", "json"), default="text")
        sp.add_argument("--scan-min", type=float, default=-100.0, help="parameter scan lower bound")
        sp.add_argument("--scan-max", type=float, default=100.0, help="parameter scan upper bound")
        sp.add_argument("--f-degree", type=int, default=1, help="transform polynomial degree")

    p_check = sub.add_parser("check", help="verify the declared transformation family")
    common(p_check)
    p_check.set_defaults(fn=cmd_check)

    p_solve = sub.add_parser("solve", help="solve by the chosen method")
    common(p_solve)
    p_solve.add_argument(
        "--method", choices=("noether", "leitmann", "oracle"), default="noether"
    )
    p_solve.set_defaults(fn=cmd_solve)

    p_cmp = sub.add_parser("compare", help="run all applicable methods and compare")
    common(p_cmp)
    p_cmp.set_defaults(fn=cmd_compare)
    return parser


def _load(args) -> tuple[ProblemSpec, TransformFamily | None]:
    return load_problem(args.problem)


def _ensure_out(args) -> Path | None:
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------


def cmd_check(args) -> int:
    spec, family = _load(args)
    if family is None:
        raise ProblemFormatError(
            f"{args.problem} has no [symmetry] section; nothing to check"
        )
    synthesized = None
    if family.gauge is None:
        synthesized = synthesize_gauge(spec, family)
        family = family.with_gauge(synthesized)
    tol = 1e-9 if args.tol is None else args.tol
    report = check_invariance(spec, family, tol=tol, seed=args.seed)
    payload = report.to_json_dict()
    if synthesized is not None:
        payload["synthesized_gauge"] = str(synthesized)
    if args.format == "json":
        _emit(json.dumps(payload, indent=2, sort_keys=True))
    else:
        if synthesized is not None:
            _emit(f"synthesized gauge: {synthesized}")
        _emit(report.to_text())
    out = _ensure_out(args)
    if out is not None:
        (out / "check.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return EXIT_OK if report.verdict else EXIT_VERDICT


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def _solve_by(args, spec: ProblemSpec, family: TransformFamily | None) -> list[Solution]:
    if args.method == "noether":
        if family is None:
            raise ProblemFormatError(
                f"{args.problem} has no [symmetry] section; --method noether needs one"
            )
        return noether.solve(
            spec, family, scan=(args.scan_min, args.scan_max), mesh=args.mesh
        )
    if args.method == "leitmann":
        return [leitmann.leitmann_solve(spec, f_degree=args.f_degree)]
    tol = 1e-9 if args.tol is None else args.tol
    return [oracle.transcribe_and_solve(spec, N=args.mesh, tol=tol).to_solution()]


def _solution_text(spec: ProblemSpec, sol: Solution, index: int) -> str:
    sp = spec.space
    lines = [f"solution {index}: status {sol.status}"]
    cost = sol.cost if isinstance(sol.cost, float) else str(sol.cost)
    lines.append(f"  cost: {cost}")
    if sol.has_closed_form:
        for name, e in zip(sp.states, sol.states):
            lines.append(f"  {name}(t) = {e}")
        for name, e in zip(sp.controls, sol.controls):
            lines.append(f"  {name}(t) = {e}")
    else:
        lines.append(f"  sampled trajectory on {len(sol.samples.times) - 1} intervals")
    for key in ("parameter", "certificate", "kkt_residual", "sign"):
        if key in sol.diagnostics:
            lines.append(f"  {key}: {sol.diagnostics[key]}")
    if spec.is_numeric:
        dyn, bnd = residuals(spec, sol)
        lines.append(f"  residuals: dynamics {dyn:.3e}, boundary {bnd:.3e}")
    return "\n".join(lines)


def cmd_solve(args) -> int:
    spec, family = _load(args)
    solutions = _solve_by(args, spec, family)
    if args.format == "json":
        _emit(
            json.dumps(
                [solution_summary(spec, s) for s in solutions], indent=2, sort_keys=True
            )
        )
    else:
        for i, s in enumerate(solutions):
            _emit(_solution_text(spec, s, i))
    out = _ensure_out(args)
    if out is not None:
        for i, s in enumerate(solutions):
            stem = f"solution_{args.method}_{i}"
            (out / f"{stem}.json").write_text(solution_to_json(spec, s), encoding="utf-8")
            (out / f"{stem}.csv").write_text(
                solution_to_csv(spec, s, mesh=args.mesh), encoding="utf-8"
            )
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------


def _pairwise_sup(spec: ProblemSpec, sa: Solution, sb: Solution, mesh: int) -> float:
    a, b = spec.horizon_floats()
    sup = 0.0
    for k in range(mesh + 1):
        tj = a + k * (b - a) / mesh
        xa, _ = _trajectory_at(spec, sa, tj)
        xb, _ = _trajectory_at(spec, sb, tj)
        sup = max(sup, max(abs(p - q) for p, q in zip(xa, xb)))
    return sup


def cmd_compare(args) -> int:
    spec, family = _load(args)
    if not spec.is_numeric:
        raise ProblemFormatError("compare needs numeric horizon and boundary data")
    tol = 1e-4 if args.tol is None else args.tol
    runs: list[tuple[str, Solution]] = []
    notes: list[str] = []
    failures: list[str] = []

    if family is not None:
        try:
            sols = noether.solve(
                spec, family, scan=(args.scan_min, args.scan_max), mesh=args.mesh
            )
            runs.append(("noether", sols[0]))
        except SymocError as exc:
            failures.append(f"noether: {exc}")
    else:
        notes.append("noether skipped: no [symmetry] section")
    try:
        runs.append(("leitmann", leitmann.leitmann_solve(spec, f_degree=args.f_degree)))
    except UnsupportedError as exc:
        notes.append(f"leitmann not applicable: {exc}")
    except SymocError as exc:
        failures.append(f"leitmann: {exc}")
    try:
        runs.append(
            ("oracle", oracle.transcribe_and_solve(spec, N=args.mesh).to_solution())
        )
    except SymocError as exc:
        failures.append(f"oracle: {exc}")

    if not runs:
        for line in notes + failures:
            sys.stderr.write(f"error: {line}\n")
        sys.stderr.write("error: every method failed; nothing to compare\n")
        return EXIT_SOLVER

    costs = {name: s.cost_float() for name, s in runs}
    gaps = {}
    sups = {}
    for i in range(len(runs)):
        for j in range(i + 1, len(runs)):
            (na, sa), (nb, sb) = runs[i], runs[j]
            gaps[f"{na}/{nb}"] = abs(costs[na] - costs[nb])
            sups[f"{na}/{nb}"] = _pairwise_sup(spec, sa, sb, args.mesh)
    worst = max(gaps.values()) if gaps else 0.0
    agree = worst <= tol

    payload = {
        "agree": agree,
        "tolerance": tol,
        "costs": costs,
        "cost_gaps": gaps,
        "sup_distances": sups,
        "statuses": {name: s.status for name, s in runs},
        "notes": notes,
        "failures": failures,
    }
    if args.format == "json":
        _emit(json.dumps(payload, indent=2, sort_keys=True))
    else:
        lines = ["method      status            cost"]
        for name, s in runs:
            lines.append(f"{name:<10}  {s.status:<16}  {costs[name]!r}")
        for pair, gap in sorted(gaps.items()):
            lines.append(f"cost gap {pair}: {gap:.6e}  (sup distance {sups[pair]:.6e})")
        for note in notes:
            lines.append(f"note: {note}")
        for line in failures:
            lines.append(f"failed: {line}")
        lines.append(
            f"verdict: {'agree' if agree else 'DISAGREE'} at tolerance {tol:g}"
        )
        _emit("\n".join(lines))
    out = _ensure_out(args)
    if out is not None:
        (out / "compare.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    if failures:
        return EXIT_SOLVER
    return EXIT_OK if agree else EXIT_VERDICT


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ProblemFormatError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except (EvalError, NotPolynomialError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_SOLVER
    except SymocError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_SOLVER
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

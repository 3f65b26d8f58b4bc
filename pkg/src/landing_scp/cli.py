"""Command-line entry point: solve, audit, montecarlo, scenarios, dump-subproblem.

Exit codes are the machine contract; human-readable output goes to stderr and
results go to files.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .audit import audit_trajectory
from .constraints import AlignmentMode
from .scenario import (
    BUILTIN_NAMES,
    ArtifactError,
    SchemaError,
    TrajectoryArtifact,
    UnknownScenarioError,
    builtin_scenario,
    load_artifact,
    load_spec,
    save_artifact,
)
from .transcription import dense_sample
from .xptr import Outcome, solve, solve_with_retries

EXIT_OK, EXIT_ERROR, EXIT_MAX_ITER, EXIT_DIVERGENCE = 0, 1, 2, 3
OUTCOME_EXIT = {
    Outcome.SUCCESS: EXIT_OK,
    Outcome.FAIL_MAX_ITERATION: EXIT_MAX_ITER,
    Outcome.FAIL_DIVERGENCE: EXIT_DIVERGENCE,
}


class UsageError(Exception):
    pass


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _name_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def resolve_spec(args) -> "ProblemSpec":  # noqa: F821
    """Scenario/config plus flag overrides."""
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        spec = load_spec(path)
    else:
        spec = builtin_scenario(args.scenario)
    if getattr(args, "alignment", None):
        spec = spec.replace(alignment=dataclasses.replace(spec.alignment, mode=AlignmentMode(args.alignment)))
    if getattr(args, "no_ctcs", False):
        spec = spec.replace(ctcs=False)
    settings = {}
    if getattr(args, "gamma", None) is not None:
        settings["gamma"] = args.gamma
    if getattr(args, "max_iter", None) is not None:
        settings["max_iter"] = args.max_iter
    if getattr(args, "backend", None):
        settings["backend"] = args.backend
    if settings:
        spec = spec.replace(settings=dataclasses.replace(spec.settings, **settings))
    weights = {k: getattr(args, k) for k in ("w_vc", "w_tr") if getattr(args, k, None) is not None}
    if weights:
        spec = spec.replace(weights=dataclasses.replace(spec.weights, **weights))
    return spec


def cmd_solve(args) -> int:
    spec = resolve_spec(args)
    _err(f"solving {spec.name}: N={spec.mesh.n} gamma={spec.settings.gamma} alignment={spec.alignment.mode.value}")
    report = solve_with_retries(spec)
    for r in report.records:
        _err(
            f"  it {r.iteration:3d} {r.status:>10s}  J={r.cost:12.6g}  t_f={r.time:8.3f}"
            f"  J_vc={r.j_vc:9.2e}  J_tr={r.j_tr:9.2e}  {r.wall_ms:7.1f} ms"
        )
    _err(f"{report.outcome.value} after {report.total_iterations} iterations ({report.attempts} attempt(s))")
    if args.out and report.iterate is not None:
        dense = audit = None
        try:
            dense = dense_sample(report.iterate, args.dense, spec.wind, spec.aircraft, spec.mesh)
            audit = audit_trajectory(report.iterate, spec, M=args.dense).to_dict()
        except (ArithmeticError, ValueError) as exc:  # diverged iterate cannot be propagated
            _err(f"dense sampling failed: {exc}")
        out = save_artifact(report, TrajectoryArtifact(report.iterate, dense, audit), args.out, spec)
        _err(f"artifact written to {out}")
    return OUTCOME_EXIT[report.outcome]


def cmd_audit(args) -> int:
    try:
        artifact, spec = load_artifact(args.artifact)
    except (ArtifactError, SchemaError) as exc:
        raise UsageError(str(exc)) from None
    if spec is None:
        raise UsageError(f"{args.artifact}: no spec.json in artifact")
    try:
        rep = audit_trajectory(artifact.iterate, spec, M=args.dense)
    except (ArithmeticError, ValueError) as exc:
        _err(f"audit failed: {exc}")
        return EXIT_ERROR
    d = rep.to_dict()
    for key, val in d.items():
        if key != "checks":
            _err(f"  {key}: {val}")
    for name, ok in rep.checks.items():
        _err(f"  [{'pass' if ok else 'FAIL'}] {name}")
    if args.json:
        Path(args.json).write_text(json.dumps(d, indent=2))
    return EXIT_OK if rep.ok else EXIT_ERROR


def cmd_montecarlo(args) -> int:
    from .montecarlo import BASES, run_study, wall_iteration_correlation

    bad = [b for b in args.bases if b not in BASES]
    if bad:
        raise UsageError(f"unknown base(s) {bad}; choose from {list(BASES)}")
    if args.n < 0:
        raise UsageError("--n must be >= 0")
    if any(g < 1 for g in args.gammas):
        raise UsageError("--gammas must all be >= 1")
    report = run_study(args.bases, args.n, args.gammas, args.seed, workers=args.workers, max_iter=args.max_iter)
    for s in report.summary():
        _err(
            f"gamma={s.gamma:g}: {s.success}/{s.samples} success, {s.fail_divergence} divergence, "
            f"{s.fail_max_iteration} max-iter; mean cost {s.mean_cost:.4g}, mean iterations "
            f"{s.mean_iterations:.2f}, mean wall {s.mean_wall_time:.2f} s; post-rescue {s.post_rescue_success_rate:.3f}"
        )
    _err(f"wall/iteration correlation: {wall_iteration_correlation(report):.3f}")
    if args.out:
        _err(f"study written to {report.write(args.out)}")
    return EXIT_OK


def cmd_scenarios(args) -> int:
    for name in BUILTIN_NAMES:
        spec = builtin_scenario(name)
        p = [c / 1e3 for c in spec.boundary.p_i]
        _err(f"{name:16s} p_i=({p[0]:g}, {p[1]:g}, {p[2]:g}) km  obstacles={len(spec.obstacles)}  wind={spec.wind}")
    return EXIT_OK


class _Captured(Exception):
    pass


def cmd_dump_subproblem(args) -> int:
    if args.iteration < 1:
        raise UsageError("--iteration must be >= 1")
    spec = resolve_spec(args)
    spec = spec.replace(settings=dataclasses.replace(spec.settings, max_iter=args.iteration))
    captured = {}

    def grab(i, qp):
        if i == args.iteration:
            captured["qp"] = qp
            raise _Captured

    try:
        rep = solve(spec, on_subproblem=grab)
    except _Captured:
        pass
    else:
        _err(f"run ended ({rep.outcome.value}) before iteration {args.iteration}")
        return EXIT_ERROR
    captured["qp"].dump(args.out)
    _err(f"subproblem {args.iteration} ({captured['qp'].layout.n_primal} variables) written to {args.out}")
    return EXIT_OK


def _add_source(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", help=f"builtin scenario: {', '.join(BUILTIN_NAMES)}")
    src.add_argument("--config", help="JSON configuration document")
    p.add_argument("--alignment", choices=[m.value for m in AlignmentMode])
    p.add_argument("--gamma", type=float, help="extrapolation parameter (>= 1)")
    p.add_argument("--w-vc", dest="w_vc", type=float)
    p.add_argument("--w-tr", dest="w_tr", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--backend", choices=["clarabel", "osqp"])
    p.add_argument("--no-ctcs", dest="no_ctcs", action="store_true", help="drop the inter-sample path constraints")
    p.add_argument("--seed", type=int, default=0, help="recorded for reproducibility; the solver is deterministic")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="landing-scp", description="6-DoF landing trajectory optimization")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one scenario and write an artifact")
    _add_source(p)
    p.add_argument("--out", help="artifact directory")
    p.add_argument("--dense", type=int, default=10, help="dense samples per interval")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("audit", help="re-check a saved artifact between nodes")
    p.add_argument("--artifact", required=True)
    p.add_argument("--dense", type=int, default=10)
    p.add_argument("--json", help="write the audit report here")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("montecarlo", help="perturbed-initial-condition study")
    p.add_argument("--bases", type=_name_list, default=["A", "B", "C"])
    p.add_argument("--n", type=int, default=30, help="samples per base")
    p.add_argument("--gammas", type=_float_list, default=[1.0, 1.2])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=100)
    p.add_argument("--out")
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("scenarios", help="list builtin scenarios")
    p.set_defaults(func=cmd_scenarios)

    p = sub.add_parser("dump-subproblem", help="write the QP of one iteration as sparse triplets")
    _add_source(p)
    p.add_argument("--iteration", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dump_subproblem)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # argparse: 0 for --help, 2 for usage errors
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    try:
        return args.func(args)
    except (UsageError, SchemaError, UnknownScenarioError, ValueError, OSError) as exc:
        _err(f"error: {exc}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

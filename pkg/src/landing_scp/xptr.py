"""Extrapolated penalized-trust-region SCP driver and the retry ladder."""

from __future__ import annotations

import dataclasses
import enum
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .model import NX, ModelError, pitch_trim_elevator
from .subproblem import (
    QpBackend,
    QpStatus,
    SubproblemBuilder,
    SubproblemSolution,
    Weights,
    discrete_costs,
    make_backend,
    penalty_costs,
)
from .transcription import MeshSpec, TrajectoryIterate, linearize

if TYPE_CHECKING:
    from .scenario import ProblemSpec


@dataclass(frozen=True)
class SolveSettings:
    eps_vc: float = 1e-6
    eps_tr: float = 1e-3
    max_iter: int = 100
    gamma: float = 1.0
    retry_factor: float = 2.0
    max_attempts: int = 2
    gamma_switch_after: int | None = None  # fall back to gamma = 1 after this many iterations
    backend: str = "clarabel"

    def __post_init__(self):
        if not (self.eps_vc > 0 and self.eps_tr > 0):
            raise ValueError("stopping tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.gamma >= 1:
            raise ValueError(f"extrapolation parameter must be >= 1, got {self.gamma}")
        if not self.retry_factor > 1 or self.max_attempts < 1:
            raise ValueError("retry ladder needs factor > 1 and at least one attempt")


class Outcome(str, enum.Enum):
    SUCCESS = "Success"
    FAIL_MAX_ITERATION = "FailMaxIteration"
    FAIL_DIVERGENCE = "FailDivergence"


@dataclass
class IterationRecord:
    iteration: int
    status: str
    cost: float = float("nan")  # J^d: mission costs plus weighted penalties
    time: float = float("nan")
    thr: float = float("nan")
    r: float = float("nan")
    omega: float = float("nan")
    j_vc: float = float("nan")
    j_tr: float = float("nan")
    qp_iterations: int = 0
    wall_ms: float = 0.0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class SolveReport:
    outcome: Outcome
    records: list = field(default_factory=list)
    iterate: TrajectoryIterate | None = None  # last subproblem solution
    attempts: int = 1
    weights: Weights = Weights()
    attempt_outcomes: list = field(default_factory=list)
    solution: SubproblemSolution | None = field(default=None, repr=False)
    total_iterations: int = 0  # over all attempts
    total_wall_time: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def success(self) -> bool:
        return self.outcome is Outcome.SUCCESS

    @property
    def wall_time(self) -> float:
        return sum(r.wall_ms for r in self.records) / 1e3

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome.value,
            "attempts": self.attempts,
            "attempt_outcomes": [o.value for o in self.attempt_outcomes],
            "weights": dataclasses.asdict(self.weights),
            "iterations": self.iterations,
            "records": [r.to_dict() for r in self.records],
        }


def initial_guess(spec: "ProblemSpec", mesh: MeshSpec | None = None, divide_by_n_minus_1: bool = True) -> TrajectoryIterate:
    """Straight-line state guess, constant input, uniform dilation."""
    mesh = mesh or spec.mesh
    lim, bc = spec.limits, spec.boundary
    n = mesh.n
    eta_mid = 0.5 * (lim.u_min[3] + lim.u_max[3])
    x_i = np.append(bc.x_i, eta_mid)
    x_f = np.zeros(NX)
    x_f[3:6] = lim.v_f
    x_f[12] = eta_mid
    frac = np.arange(n + 1)[:, None] / n
    x = (1 - frac) * x_i + frac * x_f
    # elevator that zeroes the initial pitch acceleration; with a neutral elevator the
    # open-loop propagation of a guess interval noses over past the pitch singularity
    u_i = np.array([0.0, 0.0, 0.0, eta_mid])
    u_i[1] = np.clip(pitch_trim_elevator(x_i, u_i, spec.wind, spec.aircraft), lim.u_min[1], lim.u_max[1])
    u = np.tile(u_i, (n + 1, 1))
    d = np.linalg.norm(bc.p_i)
    s_total = d / (2 * np.linalg.norm(lim.v_min)) + d / (2 * np.linalg.norm(lim.v_max))
    s_k = s_total / (n - 1 if divide_by_n_minus_1 else n)
    s = np.full(n, np.clip(s_k, mesh.s_min, mesh.s_max))
    return TrajectoryIterate(x, u, s)


def extrapolate(reference: TrajectoryIterate, solution: TrajectoryIterate, gamma: float, mesh: MeshSpec | None = None) -> TrajectoryIterate:
    """``ref + gamma (sol - ref)``; dilations are clamped to the mesh bounds."""
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    if gamma == 1:
        return solution.copy()
    x = reference.x + gamma * (solution.x - reference.x)
    u = reference.u + gamma * (solution.u - reference.u)
    s = reference.s + gamma * (solution.s - reference.s)
    if mesh is not None:
        s = np.clip(s, mesh.s_min, mesh.s_max)
    return TrajectoryIterate(x, u, s)


def solve(
    spec: "ProblemSpec",
    settings: SolveSettings | None = None,
    weights: Weights | None = None,
    backend: QpBackend | None = None,
    reference: TrajectoryIterate | None = None,
    on_subproblem=None,
) -> SolveReport:
    """Run one xPTR attempt from the straight-line guess (or ``reference``).

    ``on_subproblem(i, qp)`` is called with every assembled QP before it is solved.
    """
    settings = settings or spec.settings
    weights = weights or spec.weights
    backend = backend or make_backend(settings.backend)
    mesh = spec.mesh
    builder = SubproblemBuilder(spec)
    ref = reference.copy() if reference is not None else initial_guess(spec)
    report = SolveReport(Outcome.FAIL_MAX_ITERATION, weights=weights)

    for i in range(1, settings.max_iter + 1):
        t0 = time.perf_counter()
        try:
            blocks = linearize(ref, spec.wind, spec.aircraft, mesh, spec.ctcs_bounds)
        except (ModelError, FloatingPointError):
            report.records.append(IterationRecord(i, "nonfinite_state", wall_ms=_ms(t0)))
            report.outcome = Outcome.FAIL_DIVERGENCE
            break
        qp = builder.assemble(ref, blocks, weights)
        if on_subproblem is not None:
            on_subproblem(i, qp)
        res = backend.solve(qp)
        if res.status is not QpStatus.OPTIMAL:
            report.records.append(IterationRecord(i, res.status.value, qp_iterations=res.iterations, wall_ms=_ms(t0)))
            report.outcome = Outcome.FAIL_DIVERGENCE
            break
        sol = builder.extract(qp, res)
        j_vc, j_tr = penalty_costs(sol, ref, builder.scaling)
        c = discrete_costs(sol.iterate)
        report.records.append(
            IterationRecord(
                i, res.status.value, sol.objective, c.time, c.thr, c.r, c.omega,
                j_vc, j_tr, res.iterations, _ms(t0),
            )
        )
        report.iterate, report.solution = sol.iterate, sol
        if j_vc < settings.eps_vc and j_tr < settings.eps_tr:
            report.outcome = Outcome.SUCCESS
            break
        gamma = settings.gamma
        if settings.gamma_switch_after is not None and i >= settings.gamma_switch_after:
            gamma = 1.0
        ref = extrapolate(ref, sol.iterate, gamma, mesh)
    report.attempt_outcomes = [report.outcome]
    report.total_iterations, report.total_wall_time = report.iterations, report.wall_time
    return report


def _ms(t0) -> float:
    return 1e3 * (time.perf_counter() - t0)


def solve_with_retries(
    spec: "ProblemSpec",
    settings: SolveSettings | None = None,
    weights: Weights | None = None,
    backend: QpBackend | None = None,
) -> SolveReport:
    """Outcome categorization: retry with adapted weights after a failed attempt."""
    settings = settings or spec.settings
    weights = weights or spec.weights
    outcomes = []
    total, wall = 0, 0.0
    for attempt in range(1, settings.max_attempts + 1):
        rep = solve(spec, settings, weights, backend)
        outcomes.append(rep.outcome)
        total += rep.iterations
        wall += rep.wall_time
        rep.attempts, rep.attempt_outcomes = attempt, outcomes
        rep.total_iterations, rep.total_wall_time = total, wall
        if rep.success or attempt == settings.max_attempts:
            return rep
        f = settings.retry_factor
        if rep.outcome is Outcome.FAIL_DIVERGENCE:
            weights = dataclasses.replace(weights, w_tr=f * weights.w_tr)
        else:
            last = rep.records[-1]
            changes = {}
            if not last.j_vc < settings.eps_vc:
                changes["w_vc"] = f * weights.w_vc
            if not last.j_tr < settings.eps_tr:
                changes["w_tr"] = f * weights.w_tr
            weights = dataclasses.replace(weights, **changes)
    return rep


def merit_monotonicity_diagnostic(report_or_costs, tol: float = 1e-9) -> float:
    """Fraction of consecutive iterations whose J^d does not increase."""
    if isinstance(report_or_costs, SolveReport):
        costs = [r.cost for r in report_or_costs.records if np.isfinite(r.cost)]
    else:
        costs = list(report_or_costs)
    if len(costs) < 2:
        return 1.0
    c = np.asarray(costs, dtype=float)
    return float(np.mean(c[1:] <= c[:-1] + tol))

"""Monte Carlo robustness study around the built-in approach conditions."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import DEG
from .scenario import BoundaryConditions, ProblemSpec, builtin_scenario
from .subproblem import Weights
from .xptr import Outcome, SolveSettings, solve_with_retries

BASES = ("A", "B", "C")
RESCUE_WEIGHTS = {"w_vc": 1e3, "w_tr": 20.0}


@dataclass(frozen=True)
class PerturbationRanges:
    position: tuple = (5000.0, 5000.0, 500.0)  # m, half-widths (N, E, D)
    u_velocity: float = 10.0  # m/s
    attitude: tuple = (15 * DEG, 15 * DEG, 90 * DEG)
    wind_radius: float = 5.0  # m/s

    def __post_init__(self):
        vals = [*self.position, self.u_velocity, *self.attitude, self.wind_radius]
        if any(v < 0 for v in vals):
            raise ValueError("perturbation ranges must be nonnegative")

    @classmethod
    def zero(cls) -> "PerturbationRanges":
        return cls((0.0, 0.0, 0.0), 0.0, (0.0, 0.0, 0.0), 0.0)


def _uniform_ball(rng, radius):
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    return radius * rng.uniform() ** (1 / 3) * d


def sample_conditions(base: str, n: int, seed: int, ranges: PerturbationRanges = PerturbationRanges()) -> list[ProblemSpec]:
    """``n`` specs drawn uniformly around the base condition; deterministic in ``seed``."""
    if base not in BASES:
        raise ValueError(f"base must be one of {BASES}, got {base!r}")
    if n < 0:
        raise ValueError("n must be >= 0")
    spec = builtin_scenario(base)
    bc = spec.boundary
    children = np.random.SeedSequence([seed, BASES.index(base)]).spawn(n)
    out = []
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        r = ranges
        dp = rng.uniform(-1, 1, 3) * np.asarray(r.position)
        du = rng.uniform(-1, 1) * r.u_velocity
        datt = rng.uniform(-1, 1, 3) * np.asarray(r.attitude)
        wind = _uniform_ball(rng, r.wind_radius) if r.wind_radius > 0 else np.zeros(3)
        new_bc = BoundaryConditions(
            p_i=tuple(np.asarray(bc.p_i) + dp),
            v_i=(bc.v_i[0] + du, bc.v_i[1], bc.v_i[2]),
            att_i=tuple(np.asarray(bc.att_i) + datt),
            omega_i=bc.omega_i,
        )
        out.append(spec.replace(name=f"{base}-{seed}-{i}", boundary=new_bc, wind=tuple(wind)))
    return out


@dataclass
class SampleRecord:
    base: str
    index: int
    seed: int
    gamma: float
    outcome: str
    iterations: int  # summed over attempts
    attempts: int
    cost: float  # final J^d of the last attempt
    wall_time: float
    rescue_outcome: str | None = None
    rescue_iterations: int | None = None


@dataclass
class GammaSummary:
    gamma: float
    samples: int
    success: int
    fail_divergence: int
    fail_max_iteration: int
    mean_cost: float
    mean_iterations: float
    mean_wall_time: float
    rescued: int
    post_rescue_success_rate: float

    @property
    def success_rate(self) -> float:
        return self.success / self.samples if self.samples else float("nan")


SUMMARY_COLUMNS = [
    "gamma", "samples", "success", "fail_divergence", "fail_max_iteration", "success_rate",
    "mean_cost", "mean_iterations", "mean_wall_time", "rescued", "post_rescue_success_rate",
]


@dataclass
class StudyReport:
    bases: tuple
    n_per_base: int
    gammas: tuple
    seed: int
    samples: list = field(default_factory=list)

    def summary(self) -> list[GammaSummary]:
        rows = []
        for g in self.gammas:
            recs = [r for r in self.samples if r.gamma == g]
            ok = [r for r in recs if r.outcome == Outcome.SUCCESS.value]
            rescued = sum(1 for r in recs if r.rescue_outcome == Outcome.SUCCESS.value)

            def mean(vals):
                return float(np.mean(vals)) if vals else float("nan")

            rows.append(
                GammaSummary(
                    gamma=g,
                    samples=len(recs),
                    success=len(ok),
                    fail_divergence=sum(r.outcome == Outcome.FAIL_DIVERGENCE.value for r in recs),
                    fail_max_iteration=sum(r.outcome == Outcome.FAIL_MAX_ITERATION.value for r in recs),
                    mean_cost=mean([r.cost for r in ok]),
                    mean_iterations=mean([r.iterations for r in ok]),
                    mean_wall_time=mean([r.wall_time for r in ok]),
                    rescued=rescued,
                    post_rescue_success_rate=(len(ok) + rescued) / len(recs) if recs else float("nan"),
                )
            )
        return rows

    def fingerprint(self) -> list:
        """Everything except wall-clock times, for reproducibility checks."""
        return [
            {k: v for k, v in dataclasses.asdict(r).items() if k != "wall_time"} for r in self.samples
        ]

    def to_dict(self) -> dict:
        return {
            "bases": list(self.bases),
            "n_per_base": self.n_per_base,
            "gammas": list(self.gammas),
            "seed": self.seed,
            "summary": [dict(dataclasses.asdict(s), success_rate=s.success_rate) for s in self.summary()],
            "samples": [dataclasses.asdict(r) for r in self.samples],
        }

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "study.json").write_text(json.dumps(self.to_dict(), indent=2))
        with open(out / "summary.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SUMMARY_COLUMNS)
            for s in self.summary():
                d = dataclasses.asdict(s)
                d["success_rate"] = s.success_rate
                w.writerow([d[c] for c in SUMMARY_COLUMNS])
        return out


def _run_one(task):
    spec, settings, weights, rescue = task
    rep = solve_with_retries(spec, settings, weights)
    out = {
        "outcome": rep.outcome.value,
        "iterations": rep.total_iterations,
        "attempts": rep.attempts,
        "cost": rep.records[-1].cost if rep.records else float("nan"),
        "wall_time": rep.total_wall_time,
    }
    if rescue and not rep.success:
        w2 = dataclasses.replace(weights, **RESCUE_WEIGHTS)
        rep2 = solve_with_retries(spec, settings, w2)
        out["rescue_outcome"] = rep2.outcome.value
        out["rescue_iterations"] = rep2.total_iterations
    return out


def run_study(
    bases=BASES,
    n: int = 30,
    gammas=(1.0, 1.2),
    seed: int = 0,
    workers: int | None = None,
    rescue: bool = True,
    ranges: PerturbationRanges = PerturbationRanges(),
    max_iter: int = 100,
) -> StudyReport:
    """Run every sample for every extrapolation parameter; failures are re-run with stiffer weights."""
    bases = tuple(bases)
    gammas = tuple(float(g) for g in gammas)
    report = StudyReport(bases, n, gammas, seed)
    weights = Weights(w_vc=1e2, w_tr=1.0)
    tasks, keys = [], []
    for g in gammas:
        settings = SolveSettings(gamma=g, max_iter=max_iter)
        for b in bases:
            for i, spec in enumerate(sample_conditions(b, n, seed, ranges)):
                tasks.append((spec, settings, weights, rescue))
                keys.append((b, i, g))
    if not tasks:
        return report
    workers = workers or os.cpu_count() or 1
    if workers == 1:
        results = [_run_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as ex:
            results = list(ex.map(_run_one, tasks, chunksize=1))
    for (b, i, g), res in zip(keys, results):
        report.samples.append(
            SampleRecord(
                base=b, index=i, seed=seed, gamma=g,
                outcome=res["outcome"], iterations=res["iterations"], attempts=res["attempts"],
                cost=res["cost"], wall_time=res["wall_time"],
                rescue_outcome=res.get("rescue_outcome"), rescue_iterations=res.get("rescue_iterations"),
            )
        )
    return report


def wall_iteration_correlation(report: StudyReport) -> float:
    """Pearson correlation of per-gamma mean wall time and mean iteration count."""
    s = [r for r in report.summary() if r.success and not math.isnan(r.mean_wall_time)]
    if len(s) < 2:
        return float("nan")
    return float(np.corrcoef([r.mean_iterations for r in s], [r.mean_wall_time for r in s])[0, 1])

"""Post-hoc audit of a trajectory against the continuous-time problem.

Path constraints are checked on multiple-shooting dense samples (each
subinterval restarted at its node, which is what the transcription enforces);
the dynamic-feasibility check re-propagates the inputs by single shooting.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .constraints import AlignmentMode, alignment_c, node_constraints
from .model import DEG
from .subproblem import scale_problem
from .transcription import DenseTrajectory, TrajectoryIterate, dense_sample, switch_time

if TYPE_CHECKING:
    from .scenario import ProblemSpec


@dataclass
class AuditTolerances:
    defect: float = 1e-6  # scaled, per node (1-norm)
    terminal_position: float = 50.0  # m, single shooting
    attitude: float = 0.1 * DEG
    node: float = 1e-6  # scaled
    alignment: float = 1e-6  # scaled (positions / 1e4 m)
    obstacle: float = 1e-3


@dataclass
class AuditReport:
    max_defect: float  # scaled 1-norm, multiple shooting
    terminal_position_error: float  # m, single shooting
    roll_excess: float  # rad beyond limits on dense samples (<= 0 when satisfied)
    pitch_excess: float
    node_violation: float  # scaled
    alignment_violation: float | None  # scaled, nodes k >= k_s; None without multiphase alignment
    altitude_violation: float | None  # m above h_c at nodes k >= k_s
    # (min, max) glide angle on final-phase dense samples, rad; reported only: the touchdown
    # sink-rate bound makes the last segment shallower than the wedge near the threshold
    glide_range: tuple | None
    lateral_range: tuple | None
    min_obstacle_clearance: float | None
    t_s: float
    t_f: float
    checks: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ok"] = self.ok
        return d


def _final_phase_angles(dense: DenseTrajectory, t_s: float, min_dist: float = 1.0):
    sel = dense.t >= t_s - 1e-9
    p = dense.x[sel, :3]
    dist = -p[:, 0]
    keep = dist > min_dist
    if not np.any(keep):
        return None, None
    glide = np.arctan2(-p[keep, 2], dist[keep])
    lateral = np.arctan2(p[keep, 1], dist[keep])
    return (float(glide.min()), float(glide.max())), (float(lateral.min()), float(lateral.max()))


def audit_trajectory(it: TrajectoryIterate, spec: "ProblemSpec", M: int = 10, tol: AuditTolerances | None = None) -> AuditReport:
    tol = tol or AuditTolerances()
    mesh, lim, al = spec.mesh, spec.limits, spec.alignment
    sc = scale_problem(spec)
    ms = dense_sample(it, M, spec.wind, spec.aircraft, mesh, single_shooting=False)
    ss = dense_sample(it, M, spec.wind, spec.aircraft, mesh, single_shooting=True)
    max_defect = float(np.max(np.sum(np.abs(ms.defects / sc.x), axis=1)))
    term_err = float(np.linalg.norm(ss.x[-1, :3] - it.x[-1, :3]))

    phi, th = ms.x[:, 6], ms.x[:, 7]
    roll_excess = float(max(np.max(phi - lim.phi_max), np.max(lim.phi_min - phi)))
    pitch_excess = float(max(np.max(th - lim.theta_max), np.max(lim.theta_min - th)))

    col_scale = np.concatenate([sc.x, sc.u, [sc.s, sc.s]])
    n = it.n
    node_viol = -np.inf
    for k in range(n + 1):
        rs = node_constraints(k, n, lim, al, mesh.k_switch, (mesh.s_min, mesh.s_max), spec.aircraft.tau_t)
        z = np.concatenate([it.x[k], it.u[k], [it.s[min(k, n - 1)], it.s[min(k + 1, n - 1)]]])
        # residual in scaled variables
        Az = (rs.A * col_scale) @ (z / col_scale)
        node_viol = max(node_viol, float(np.max(np.maximum(rs.lo - Az, Az - rs.hi))))

    t_s, t_f = switch_time(it, mesh)
    align_v = alt_v = glide = lateral = None
    if al.mode is AlignmentMode.MULTIPHASE:
        p = it.x[mesh.k_switch :, :3]
        align_v = float(np.max(alignment_c(p, al)) / sc.x[0])
        alt_v = float(np.max(-p[:, 2] - al.h_c))
        glide, lateral = _final_phase_angles(ms, t_s)
    elif al.mode is AlignmentMode.STC:
        # final phase for the triggered formulation: below the trigger altitude
        below = np.nonzero(-ms.x[:, 2] < al.h_c)[0]
        if below.size:
            glide, lateral = _final_phase_angles(ms, float(ms.t[below[0]]))

    clearance = None
    if spec.obstacles:
        clearance = float(min(np.min(o.clearance(ms.x[:, :3])) for o in spec.obstacles))

    checks = {
        "defects": max_defect <= tol.defect,
        "terminal_position": term_err <= tol.terminal_position,
        "attitude": roll_excess <= tol.attitude and pitch_excess <= tol.attitude,
        "node_constraints": node_viol <= tol.node,
    }
    if align_v is not None:
        checks["alignment"] = align_v <= tol.alignment and alt_v <= tol.alignment * sc.x[0]
    if clearance is not None:
        checks["obstacles"] = clearance >= 1 - tol.obstacle
    checks = {k: bool(v) for k, v in checks.items()}
    return AuditReport(
        max_defect, term_err, roll_excess, pitch_excess, node_viol, align_v, alt_v,
        glide, lateral, clearance, t_s, t_f, checks,
    )

"""Convex subproblem: assembly into a sparse QP and pluggable QP backends.

The 1-norm virtual-control penalty is split into nonnegative pairs so the
subproblem is a plain QP::

    minimize    1/2 v'Pv + q'v + const
    subject to  lo <= A v <= hi

Decision variables are scaled (positions by 1e4 m, velocities by 1e2 m/s,
dilations by 10 s, everything else by 1). Trust-region and virtual-control
penalties are measured in scaled units; the mission costs are evaluated in
physical units (seconds, radians).
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass
from typing import TYPE_CHECKING, NamedTuple, Protocol

import numpy as np
import scipy.sparse as sp

from .constraints import (
    COL_S,
    COL_S_NEXT,
    AlignmentMode,
    alignment_stc_residual,
    node_constraints,
    obstacle_row,
)
from .model import NU, NX
from .transcription import LinearBlocks, TrajectoryIterate

if TYPE_CHECKING:
    from .scenario import ProblemSpec


@dataclass(frozen=True)
class Weights:
    w_t: float = 0.02
    w_thr: float = 10.0
    w_r: float = 1.0
    w_omega: float = 10.0
    w_vc: float = 1e2
    w_tr: float = 1.0

    def __post_init__(self):
        for name, val in self.__dict__.items():
            if not val > 0:
                raise ValueError(f"weight {name} must be positive, got {val}")


@dataclass(frozen=True)
class Scaling:
    """Diagonal scaling ``physical = D * scaled`` per variable block."""

    x: np.ndarray
    u: np.ndarray
    s: float

    def scale(self, it: TrajectoryIterate) -> TrajectoryIterate:
        return TrajectoryIterate(it.x / self.x, it.u / self.u, it.s / self.s)

    def unscale(self, it: TrajectoryIterate) -> TrajectoryIterate:
        return TrajectoryIterate(it.x * self.x, it.u * self.u, it.s * self.s)


def scale_problem(spec: "ProblemSpec | None" = None) -> Scaling:
    """Per-variable scaling mapping the flight envelope to O(1) ranges."""
    x = np.array([1e4] * 3 + [1e2] * 3 + [1.0] * 7)
    return Scaling(x=x, u=np.ones(NU), s=10.0)


# Virtual-control units: 1 km, 10 m/s, 1 rad (rad/s, throttle). Each grows into roughly
# a kilometre of position error over a 100 s base-leg segment, so defects in different
# states are priced evenly; the QP penalty is w_vc per unit.
VC_UNITS = np.array([1000.0] * 3 + [10.0] * 3 + [1.0] * 7)


class DiscreteCosts(NamedTuple):
    time: float
    thr: float
    r: float
    omega: float

    def weighted(self, w: Weights) -> float:
        return w.w_t * self.time + w.w_thr * self.thr + w.w_r * self.r + w.w_omega * self.omega


def discrete_costs(it: TrajectoryIterate) -> DiscreteCosts:
    """Minimum-time, thrust, control-rate and angular-rate costs in physical units."""
    du = np.diff(it.u[:, :3], axis=0)
    return DiscreteCosts(
        time=float(np.sum(it.s)),
        thr=float(np.sum(it.u[:, 3] ** 2)),
        r=float(np.sum(du * du)),
        omega=float(np.sum(it.x[:, 9:12] ** 2)),
    )


class QpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class SubproblemSolution:
    iterate: TrajectoryIterate
    nu_d: np.ndarray  # (N, 13), physical units
    nu_c: np.ndarray  # (N,)
    objective: float
    status: QpStatus
    iterations: int = 0


def penalty_costs(solution: SubproblemSolution, reference: TrajectoryIterate, scaling: Scaling | None = None):
    """Return ``(J_vc, J_tr)``; ``J_tr`` is computed in scaled units when ``scaling`` is given."""
    j_vc = float(np.sum(np.abs(solution.nu_d)) + np.sum(np.abs(solution.nu_c)))
    a, b = solution.iterate, reference
    if scaling is not None:
        a, b = scaling.scale(a), scaling.scale(b)
    j_tr = float(np.sum((a.x - b.x) ** 2) + np.sum((a.u - b.u) ** 2) + np.sum((a.s - b.s) ** 2))
    return j_vc, j_tr


class Layout:
    """Offsets of the variable blocks in the QP decision vector."""

    def __init__(self, n: int, ctcs: bool, virtual_control: bool = True):
        self.n, self.ctcs, self.virtual_control = n, ctcs, virtual_control
        self.x = 0
        self.u = (n + 1) * NX
        self.s = self.u + (n + 1) * NU
        end = self.s + n
        nvd = n * NX if virtual_control else 0
        nvc = n if (ctcs and virtual_control) else 0
        self.nud_p, self.nud_m = end, end + nvd
        self.nuc_p, self.nuc_m = end + 2 * nvd, end + 2 * nvd + nvc
        self.size = end + 2 * nvd + 2 * nvc
        self.n_primal = end

    def xcols(self, k):
        return self.x + k * NX + np.arange(NX)

    def ucols(self, k):
        return self.u + k * NU + np.arange(NU)


@dataclass
class QpInstance:
    P: sp.csc_matrix  # symmetric
    q: np.ndarray
    A: sp.csc_matrix
    lo: np.ndarray
    hi: np.ndarray
    const: float = 0.0
    layout: Layout | None = None
    labels: list | None = None

    @property
    def shape(self):
        return self.A.shape

    def objective(self, v) -> float:
        return float(0.5 * v @ (self.P @ v) + self.q @ v + self.const)

    def violation(self, v) -> float:
        r = self.A @ v
        return float(max(np.max(self.lo - r, initial=0.0), np.max(r - self.hi, initial=0.0)))

    def dump(self, path) -> None:
        """Plain-text dump: sparse triplets for P and A, dense vectors one per line."""
        P = sp.triu(self.P).tocoo()
        A = self.A.tocoo()
        with open(path, "w") as fh:
            fh.write(f"# qp n_var={self.A.shape[1]} n_con={self.A.shape[0]} const={self.const!r}\n")
            fh.write(f"P {P.nnz}\n")
            for i, j, v in zip(P.row, P.col, P.data):
                fh.write(f"{i} {j} {float(v)!r}\n")
            fh.write(f"A {A.nnz}\n")
            for i, j, v in zip(A.row, A.col, A.data):
                fh.write(f"{i} {j} {float(v)!r}\n")
            for name, vec in (("q", self.q), ("lo", self.lo), ("hi", self.hi)):
                fh.write(f"{name} {len(vec)}\n")
                fh.writelines(f"{float(v)!r}\n" for v in vec)


def load_dump(path) -> QpInstance:
    with open(path) as fh:
        header = fh.readline().split()
        nv = int(header[2].split("=")[1])
        nc = int(header[3].split("=")[1])
        const = float(header[4].split("=")[1])

        def triplets(shape):
            cnt = int(fh.readline().split()[1])
            data = np.array([fh.readline().split() for _ in range(cnt)], dtype=float).reshape(cnt, 3)
            return sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=shape)

        Pu = triplets((nv, nv))
        A = triplets((nc, nv)).tocsc()
        vecs = {}
        for _ in range(3):
            name, cnt = fh.readline().split()
            vecs[name] = np.array([float(fh.readline()) for _ in range(int(cnt))])
    P = (Pu + sp.triu(Pu, 1).T).tocsc()
    return QpInstance(P, vecs["q"], A, vecs["lo"], vecs["hi"], const)


@dataclass
class QpResult:
    x: np.ndarray | None
    status: QpStatus
    iterations: int = 0
    solve_time: float = 0.0


class QpBackend(Protocol):
    """Anything that minimizes a convex QP in ``lo <= Av <= hi`` form."""

    name: str

    def solve(self, qp: QpInstance) -> QpResult: ...


class ClarabelBackend:
    """Interior-point backend (default)."""

    name = "clarabel"

    def __init__(self, tol: float = 1e-8, max_iter: int = 200):
        self.tol = tol
        self.max_iter = max_iter

    def solve(self, qp: QpInstance) -> QpResult:
        import clarabel

        A = qp.A.tocsr()
        eq = np.isfinite(qp.lo) & np.isfinite(qp.hi) & (qp.lo == qp.hi)
        up = ~eq & np.isfinite(qp.hi)
        dn = ~eq & np.isfinite(qp.lo)
        Ac = sp.vstack([A[eq], A[up], -A[dn]]).tocsc()
        b = np.concatenate([qp.lo[eq], qp.hi[up], -qp.lo[dn]])
        cones = [clarabel.ZeroConeT(int(eq.sum())), clarabel.NonnegativeConeT(int(up.sum() + dn.sum()))]
        s = clarabel.DefaultSettings()
        s.verbose = False
        s.tol_feas = s.tol_gap_abs = s.tol_gap_rel = self.tol
        s.max_iter = self.max_iter
        s.max_threads = 1
        t0 = time.perf_counter()
        solver = clarabel.DefaultSolver(sp.triu(qp.P).tocsc(), qp.q, Ac, b, cones, s)
        sol = solver.solve()
        dt = time.perf_counter() - t0
        status = str(sol.status)
        if status in ("Solved", "AlmostSolved"):
            st = QpStatus.OPTIMAL
        elif "Infeasible" in status:
            st = QpStatus.INFEASIBLE
        else:
            st = QpStatus.NUMERICAL_FAILURE
        x = np.array(sol.x) if st is QpStatus.OPTIMAL else None
        return QpResult(x, st, int(sol.iterations), dt)


class OsqpBackend:
    """First-order ADMM backend with solution polishing."""

    name = "osqp"

    def __init__(self, tol: float = 1e-9, max_iter: int = 200000):
        self.tol = tol
        self.max_iter = max_iter

    def solve(self, qp: QpInstance) -> QpResult:
        import osqp

        lo = np.where(np.isfinite(qp.lo), qp.lo, -np.inf)
        hi = np.where(np.isfinite(qp.hi), qp.hi, np.inf)
        m = osqp.OSQP()
        m.setup(
            sp.triu(qp.P).tocsc(), qp.q, qp.A.tocsc(), lo, hi,
            eps_abs=self.tol, eps_rel=self.tol, max_iter=self.max_iter,
            polishing=True, verbose=False,
        )
        t0 = time.perf_counter()
        res = m.solve(raise_error=False)
        dt = time.perf_counter() - t0
        status = str(res.info.status).lower()
        if status.startswith("solved"):
            st = QpStatus.OPTIMAL
        elif "infeasible" in status:
            st = QpStatus.INFEASIBLE
        else:
            st = QpStatus.NUMERICAL_FAILURE
        x = np.array(res.x) if st is QpStatus.OPTIMAL else None
        return QpResult(x, st, int(res.info.iter), dt)


BACKENDS = {"clarabel": ClarabelBackend, "osqp": OsqpBackend}


def make_backend(name: str) -> QpBackend:
    try:
        return BACKENDS[name]()
    except KeyError:
        raise ValueError(f"unknown QP backend {name!r}; choose from {sorted(BACKENDS)}") from None


class _Triplets:
    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []
        self.lo, self.hi, self.labels = [], [], []
        self.m = 0

    def block(self, rows, cols, vals):
        self.rows.append(np.asarray(rows).ravel())
        self.cols.append(np.asarray(cols).ravel())
        self.vals.append(np.asarray(vals, dtype=float).ravel())

    def new_rows(self, lo, hi, label):
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        idx = self.m + np.arange(lo.size)
        self.m += lo.size
        self.lo.append(lo)
        self.hi.append(hi)
        self.labels.extend([label] * lo.size)
        return idx

    def extend(self, other: "_Triplets"):
        off = self.m
        self.rows.extend(r + off for r in other.rows)
        self.cols.extend(other.cols)
        self.vals.extend(other.vals)
        self.lo.extend(other.lo)
        self.hi.extend(other.hi)
        self.labels.extend(other.labels)
        self.m += other.m

    def matrix(self, ncols):
        rows = np.concatenate(self.rows) if self.rows else np.zeros(0, int)
        cols = np.concatenate(self.cols) if self.cols else np.zeros(0, int)
        vals = np.concatenate(self.vals) if self.vals else np.zeros(0)
        A = sp.csc_matrix((vals, (rows, cols)), shape=(self.m, ncols))
        lo = np.concatenate(self.lo) if self.lo else np.zeros(0)
        hi = np.concatenate(self.hi) if self.hi else np.zeros(0)
        return A, lo, hi


class SubproblemBuilder:
    """Assembles the convex subproblem; reference-independent rows are built once."""

    def __init__(self, spec: "ProblemSpec", virtual_control: bool = True):
        self.spec = spec
        self.mesh = spec.mesh
        self.n = spec.mesh.n
        self.scaling = scale_problem(spec)
        self.layout = Layout(self.n, spec.ctcs, virtual_control)
        self._static = self._static_rows()

    # -- reference-independent rows ---------------------------------------
    def _static_rows(self) -> _Triplets:
        spec, L, n, sc = self.spec, self.layout, self.n, self.scaling
        T = _Triplets()
        col_scale = np.concatenate([sc.x, sc.u, [sc.s, sc.s]])
        for k in range(n + 1):
            rs = node_constraints(
                k, n, spec.limits, spec.alignment, self.mesh.k_switch,
                (self.mesh.s_min, self.mesh.s_max), spec.aircraft.tau_t,
            )
            if rs.A.shape[0] == 0:
                continue
            gcols = np.concatenate([L.xcols(k), L.ucols(k), [L.s + min(k, n - 1), L.s + min(k + 1, n - 1)]])
            As = rs.A * col_scale
            idx = T.new_rows(rs.lo, rs.hi, "node")
            for j, lab in enumerate(rs.labels):
                T.labels[idx[j]] = f"node{k}:{lab}"
                nz = np.nonzero(As[j])[0]
                if k == n:
                    nz = nz[(nz != COL_S) & (nz != COL_S_NEXT)]
                T.block(np.full(nz.size, idx[j]), gcols[nz], As[j, nz])

        b = spec.boundary
        x_init = np.concatenate([b.p_i, b.v_i, b.att_i, b.omega_i]) / sc.x[:12]
        idx = T.new_rows(x_init, x_init, "initial")
        T.block(idx, L.xcols(0)[:12], np.ones(12))
        term = np.r_[0:3, 6:12]
        idx = T.new_rows(np.zeros(term.size), np.zeros(term.size), "terminal")
        T.block(idx, L.xcols(n)[term], np.ones(term.size))
        vf = np.asarray(spec.limits.v_f) / sc.x[3:6]
        idx = T.new_rows(-vf, vf, "terminal_velocity")
        T.block(idx, L.xcols(n)[3:6], np.ones(3))
        return T

    def _objective(self, ref_scaled: TrajectoryIterate, w: Weights):
        L, n, sc = self.layout, self.n, self.scaling
        nv = L.size
        diag = np.zeros(nv)
        q = np.zeros(nv)
        # mission costs in physical units
        q[L.s : L.s + n] = w.w_t * sc.s
        eta = L.u + np.arange(n + 1) * NU + 3
        diag[eta] += 2 * w.w_thr * sc.u[3] ** 2
        for k in range(n + 1):
            diag[L.xcols(k)[9:12]] += 2 * w.w_omega * sc.x[9:12] ** 2
        # control-rate smoothing: sum of squared first differences
        D = sp.diags([-np.ones(n), np.ones(n)], [0, 1], shape=(n, n + 1))
        DtD = (D.T @ D).tocoo()
        rate_blocks = []
        for i in range(3):
            cols = L.u + np.arange(n + 1) * NU + i
            rate_blocks.append(
                sp.coo_matrix(
                    (2 * w.w_r * sc.u[i] ** 2 * DtD.data, (cols[DtD.row], cols[DtD.col])), shape=(nv, nv)
                )
            )
        # trust region
        diag[: L.n_primal] += 2 * w.w_tr
        z_ref = np.concatenate([ref_scaled.x.ravel(), ref_scaled.u.ravel(), ref_scaled.s])
        q[: L.n_primal] += -2 * w.w_tr * z_ref
        const = w.w_tr * float(z_ref @ z_ref)
        if L.virtual_control:
            # virtual controls are measured in VC_UNITS; in the state scaling they
            # would price a 1 m position defect at 1e-4 and the penalty stops being exact
            q[L.nud_p : L.size] += w.w_vc
        P = sp.diags(diag) + sum(rate_blocks)
        return sp.csc_matrix(P), q, const

    def assemble(self, reference: TrajectoryIterate, blocks: LinearBlocks, weights: Weights) -> QpInstance:
        spec, L, n, sc = self.spec, self.layout, self.n, self.scaling
        if blocks.A.shape[0] != n or reference.n != n:
            raise ValueError(f"dimension mismatch: mesh has {n} intervals, blocks {blocks.A.shape[0]}")
        T = _Triplets()
        T.extend(self._static)

        # linearized dynamics: x_{k+1} - A x_k - Bm u_k - Bp u_{k+1} - z s_k - nu = w
        Dx, Du = sc.x, sc.u
        As = blocks.A * Dx[None, :] / Dx[:, None][None]
        Bms = blocks.Bm * Du[None, :] / Dx[:, None][None]
        Bps = blocks.Bp * Du[None, :] / Dx[:, None][None]
        zs = blocks.z * sc.s / Dx
        ws = blocks.w / Dx
        rows = T.new_rows(ws.ravel(), ws.ravel(), "dynamics").reshape(n, NX)
        k = np.arange(n)
        xc = L.x + k[:, None] * NX + np.arange(NX)  # (n, 13)
        uc = L.u + k[:, None] * NU + np.arange(NU)
        T.block(rows, xc + NX, np.ones((n, NX)))
        T.block(np.repeat(rows[:, :, None], NX, 2), np.repeat(xc[:, None, :], NX, 1), -As)
        T.block(np.repeat(rows[:, :, None], NU, 2), np.repeat(uc[:, None, :], NX, 1), -Bms)
        T.block(np.repeat(rows[:, :, None], NU, 2), np.repeat(uc[:, None, :] + NU, NX, 1), -Bps)
        T.block(rows, np.repeat((L.s + k)[:, None], NX, 1), -zs)
        if L.virtual_control:
            vd = L.nud_p + k[:, None] * NX + np.arange(NX)
            vs = np.tile(VC_UNITS / Dx, (n, 1))
            T.block(rows, vd, -vs)
            T.block(rows, vd + n * NX, vs)

        # CTCS: cA x_k + cBm u_k + cBp u_{k+1} + cz s_k + nu_c = -cw
        if spec.ctcs:
            rows = T.new_rows(-blocks.cw, -blocks.cw, "ctcs")
            T.block(np.repeat(rows[:, None], NX, 1), xc, blocks.cA * Dx)
            T.block(np.repeat(rows[:, None], NU, 1), uc, blocks.cBm * Du)
            T.block(np.repeat(rows[:, None], NU, 1), uc + NU, blocks.cBp * Du)
            T.block(rows, L.s + k, blocks.cz * sc.s)
            if L.virtual_control:
                T.block(rows, L.nuc_p + k, np.ones(n))
                T.block(rows, L.nuc_m + k, -np.ones(n))

        Dp = Dx[:3]
        if spec.alignment.mode is AlignmentMode.STC:
            for kk in range(n + 1):
                p_ref = reference.x[kk, :3]
                _, G, g_ref = alignment_stc_residual(p_ref, spec.alignment)
                if not np.any(G):
                    continue
                idx = T.new_rows(np.full(4, -np.inf), G @ p_ref - g_ref, f"stc{kk}")
                T.block(np.repeat(idx[:, None], 3, 1), np.repeat(L.xcols(kk)[None, :3], 4, 0), G * Dp)

        for j, obs in enumerate(spec.obstacles):
            for kk in range(n + 1):
                grad, offset = obstacle_row(reference.x[kk, :3], obs)
                idx = T.new_rows(-np.inf, -offset, f"obstacle{j}:{kk}")
                T.block(np.repeat(idx, 3), L.xcols(kk)[:3], grad * Dp)

        A, lo, hi = T.matrix(L.size)
        if L.virtual_control:
            # nonnegative slack pairs
            nn = np.arange(L.nud_p, L.size)
            S = sp.csc_matrix((np.ones(nn.size), (np.arange(nn.size), nn)), shape=(nn.size, L.size))
            A = sp.vstack([A, S]).tocsc()
            lo = np.concatenate([lo, np.zeros(nn.size)])
            hi = np.concatenate([hi, np.full(nn.size, np.inf)])
            T.labels.extend(["slack>=0"] * nn.size)
        P, q, const = self._objective(sc.scale(reference), weights)
        return QpInstance(P, q, A, lo, hi, const, L, T.labels)

    def extract(self, qp: QpInstance, res: QpResult) -> SubproblemSolution:
        L, n, sc = self.layout, self.n, self.scaling
        v = res.x.copy()
        if L.virtual_control:
            # collapse slack pairs left jointly positive at solver tolerance
            for a, b, c in ((L.nud_p, L.nud_m, L.nuc_p), (L.nuc_p, L.nuc_m, L.size)):
                net = v[a:b] - v[b:c]
                v[a:b], v[b:c] = np.maximum(net, 0.0), np.maximum(-net, 0.0)
        xs = v[L.x : L.u].reshape(n + 1, NX)
        us = v[L.u : L.s].reshape(n + 1, NU)
        ss = v[L.s : L.s + n]
        it = sc.unscale(TrajectoryIterate(xs, us, ss))
        if L.virtual_control:
            nu_d = (v[L.nud_p : L.nud_m] - v[L.nud_m : L.nuc_p]).reshape(n, NX) * VC_UNITS
            nu_c = v[L.nuc_p : L.nuc_m] - v[L.nuc_m : L.size] if self.spec.ctcs else np.zeros(n)
        else:
            nu_d, nu_c = np.zeros((n, NX)), np.zeros(n)
        return SubproblemSolution(it, nu_d, nu_c, qp.objective(v), res.status, res.iterations)


def assemble(reference: TrajectoryIterate, blocks: LinearBlocks, spec: "ProblemSpec", weights: Weights) -> QpInstance:
    """One-shot assembly; the solver loop reuses a ``SubproblemBuilder`` instead."""
    return SubproblemBuilder(spec).assemble(reference, blocks, weights)

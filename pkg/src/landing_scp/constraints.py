"""Node-wise convex constraints, runway alignment and obstacle rows.

Rows are expressed in physical units over the local node variables
``(x_k, u_k, s_k, s_{k+1})`` (see ``NODE_COLS``) as ``lo <= A z <= hi``.
Runway frame: touchdown at the origin, runway along +North, so an approaching
aircraft has ``p_N < 0``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .model import DEG, NU, NX

# local column layout of a node row
NODE_COLS = NX + NU + 2
COL_S = NX + NU
COL_S_NEXT = NX + NU + 1


class CenterCoincidenceError(ValueError):
    """Obstacle linearization requested at the obstacle center."""


def _vec(v, n):
    a = np.asarray(v, dtype=float)
    if a.shape != (n,):
        raise ValueError(f"expected a length-{n} vector, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class OperationalLimits:
    """State and input bounds in SI units with angles in radians."""

    v_min: tuple = (80.0, -4.0, -10.0)
    v_max: tuple = (120.0, 4.0, 10.0)
    phi_min: float = -15 * DEG
    phi_max: float = 15 * DEG
    theta_min: float = -15 * DEG
    theta_max: float = 15 * DEG
    omega_min: tuple = (-10 * DEG, -10 * DEG, -10 * DEG)
    omega_max: tuple = (10 * DEG, 10 * DEG, 10 * DEG)
    alpha_min: float = -11.5 * DEG
    alpha_max: float = 14.5 * DEG
    u_min: tuple = (-25 * DEG, -25 * DEG, -30 * DEG, 0.0)
    u_max: tuple = (25 * DEG, 10 * DEG, 30 * DEG, 10 * DEG)
    thr_min: float = 0.0
    thr_max: float = 10 * DEG
    thr_rate_min: float = -0.53 * DEG
    thr_rate_max: float = 0.53 * DEG
    v_f: tuple = (85.0, 3.0, 3.0)

    def __post_init__(self):
        pairs = [
            ("v", self.v_min, self.v_max),
            ("phi", self.phi_min, self.phi_max),
            ("theta", self.theta_min, self.theta_max),
            ("omega", self.omega_min, self.omega_max),
            ("alpha", self.alpha_min, self.alpha_max),
            ("u", self.u_min, self.u_max),
            ("thr", self.thr_min, self.thr_max),
            ("thr_rate", self.thr_rate_min, self.thr_rate_max),
        ]
        for name, lo, hi in pairs:
            if np.any(np.asarray(lo) >= np.asarray(hi)):
                raise ValueError(f"{name}: every min must be strictly below its max")
        if not (-np.pi / 2 < self.alpha_min and self.alpha_max < np.pi / 2):
            raise ValueError("alpha bounds must lie inside (-pi/2, pi/2)")
        if np.any(np.asarray(self.v_f) < 0):
            raise ValueError("v_f must be nonnegative")

    @property
    def attitude_box(self) -> tuple[float, float, float, float]:
        return (self.phi_min, self.phi_max, self.theta_min, self.theta_max)


class AlignmentMode(str, enum.Enum):
    MULTIPHASE = "multiphase"
    STC = "stc"
    NONE = "none"


@dataclass(frozen=True)
class AlignmentSpec:
    h_c: float = 500.0
    lat_min: float = -2 * DEG
    lat_max: float = 2 * DEG
    ver_min: float = 3 * DEG
    ver_max: float = 5 * DEG
    mode: AlignmentMode = AlignmentMode.MULTIPHASE

    def __post_init__(self):
        object.__setattr__(self, "mode", AlignmentMode(self.mode))
        if not self.lat_min < self.lat_max:
            raise ValueError("lateral alignment bounds must satisfy min < max")
        if not 0 < self.ver_min < self.ver_max < np.pi / 2:
            raise ValueError("vertical alignment bounds must satisfy 0 < min < max < pi/2")
        if not self.h_c > 0:
            raise ValueError("trigger altitude must be positive")

    @property
    def matrix(self) -> np.ndarray:
        """``C`` such that ``alignment_c(p) = C @ p``."""
        tl_max, tl_min = np.tan(self.lat_max), np.tan(self.lat_min)
        tv_max, tv_min = np.tan(self.ver_max), np.tan(self.ver_min)
        return np.array(
            [
                [tl_max, -1.0, 0.0],
                [-tl_min, 1.0, 0.0],
                [tv_max, 0.0, -1.0],
                [-tv_min, 0.0, 1.0],
            ]
        )


@dataclass(frozen=True)
class Obstacle:
    """Ellipsoidal keep-out zone ``||H (p - r)|| >= 1``."""

    H: np.ndarray
    r: np.ndarray
    name: str = field(default="", compare=False)

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        if H.shape != (3, 3):
            raise ValueError("obstacle shape matrix must be 3x3")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "r", _vec(self.r, 3))
        if np.linalg.matrix_rank(H) < 2:
            raise ValueError("obstacle shape matrix must constrain at least two directions")

    @classmethod
    def cylinder(cls, north: float, east: float, radius: float, name: str = "") -> "Obstacle":
        """Vertical cylinder of infinite height (zero Down row)."""
        return cls(np.diag([1.0 / radius, 1.0 / radius, 0.0]), np.array([north, east, 0.0]), name)

    def clearance(self, p) -> np.ndarray:
        """``||H (p - r)||``; >= 1 outside the obstacle."""
        d = np.asarray(p) - self.r
        return np.linalg.norm(d @ self.H.T, axis=-1)


def alignment_c(p, alignment: AlignmentSpec = AlignmentSpec()) -> np.ndarray:
    """Four affine alignment expressions; all <= 0 inside the approach wedge."""
    return np.asarray(p, dtype=float) @ alignment.matrix.T


def alignment_stc_residual(p, alignment: AlignmentSpec = AlignmentSpec(), p_ref=None):
    """State-triggered alignment residual ``g(p)`` and its affine model at ``p_ref``.

    Returns ``(g, G, g_ref)``: the residual at ``p``, the Jacobian at ``p_ref``
    and the residual at ``p_ref``. The affine model ``g_ref + G (p - p_ref)``
    is zero (``G = 0``, ``g_ref = 0``) when the reference is above ``h_c``.
    """
    p = np.asarray(p, dtype=float)
    p_ref = p if p_ref is None else np.asarray(p_ref, dtype=float)
    C = alignment.matrix

    def g(q):
        return -min(-q[2] - alignment.h_c, 0.0) * (C @ q)

    if -p_ref[2] < alignment.h_c:
        # active branch: g = (h_c + p_D) C p
        G = (alignment.h_c + p_ref[2]) * C
        G[:, 2] += C @ p_ref
        g_ref = g(p_ref)
    else:
        G = np.zeros((4, 3))
        g_ref = np.zeros(4)
    return g(p), G, g_ref


def obstacle_row(p_ref, obs: Obstacle):
    """Affine model ``offset + grad @ p`` of ``1 - ||H (p - r)||`` at ``p_ref``."""
    p_ref = np.asarray(p_ref, dtype=float)
    d = obs.H @ (p_ref - obs.r)
    nrm = np.linalg.norm(d)
    if nrm < 1e-9:
        raise CenterCoincidenceError("reference position coincides with obstacle center")
    n = obs.H.T @ d / nrm
    return -n, 1.0 - nrm + n @ p_ref


@dataclass
class RowSet:
    """Rows ``lo <= A z <= hi`` over local node variables, with labels for audits."""

    A: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    labels: list[str]

    def residual(self, z) -> np.ndarray:
        """Max violation per row (positive means violated)."""
        v = self.A @ np.asarray(z)
        return np.maximum(self.lo - v, v - self.hi)


class _Rows:
    def __init__(self):
        self.A, self.lo, self.hi, self.labels = [], [], [], []

    def add(self, coeffs: dict, lo, hi, label):
        row = np.zeros(NODE_COLS)
        for col, c in coeffs.items():
            row[col] = c
        self.A.append(row)
        self.lo.append(lo)
        self.hi.append(hi)
        self.labels.append(label)

    def build(self) -> RowSet:
        A = np.array(self.A) if self.A else np.zeros((0, NODE_COLS))
        return RowSet(A, np.array(self.lo, dtype=float), np.array(self.hi, dtype=float), self.labels)


def node_constraints(
    k: int,
    n: int,
    limits: OperationalLimits,
    alignment: AlignmentSpec,
    k_switch: int,
    s_bounds: tuple[float, float] = (1.0, 60.0),
    tau_t: float = 1.5,
) -> RowSet:
    """Convex rows imposed at node ``k`` of an ``n``-interval mesh."""
    if not 0 <= k <= n:
        raise ValueError(f"node index {k} outside 0..{n}")
    L = limits
    inf = np.inf
    rows = _Rows()
    rows.add({2: 1.0}, -inf, 0.0, "altitude>=0")
    for i in range(3):
        rows.add({3 + i: 1.0}, L.v_min[i], L.v_max[i], f"v[{i}]")
    rows.add({6: 1.0}, L.phi_min, L.phi_max, "phi")
    rows.add({7: 1.0}, L.theta_min, L.theta_max, "theta")
    for i in range(3):
        rows.add({9 + i: 1.0}, L.omega_min[i], L.omega_max[i], f"omega[{i}]")
    rows.add({3: np.tan(L.alpha_min), 5: -1.0}, -inf, 0.0, "alpha_min")
    rows.add({5: 1.0, 3: -np.tan(L.alpha_max)}, -inf, 0.0, "alpha_max")
    for i in range(NU):
        rows.add({NX + i: 1.0}, L.u_min[i], L.u_max[i], f"u[{i}]")
    rows.add({12: 1.0}, L.thr_min, L.thr_max, "throttle")
    rows.add({NX + 3: 1.0 / tau_t, 12: -1.0 / tau_t}, L.thr_rate_min, L.thr_rate_max, "throttle_rate")

    if alignment.mode is AlignmentMode.MULTIPHASE and k >= k_switch:
        rows.add({2: -1.0}, -inf, alignment.h_c, "altitude<=h_c")
        C = alignment.matrix
        for j in range(4):
            rows.add({0: C[j, 0], 1: C[j, 1], 2: C[j, 2]}, -inf, 0.0, f"align[{j}]")

    if k < n:
        rows.add({COL_S: 1.0}, s_bounds[0], s_bounds[1], "dilation")
        if k + 1 < n and k + 1 != k_switch:
            rows.add({COL_S: 1.0, COL_S_NEXT: -1.0}, 0.0, 0.0, "uniform_mesh")
    return rows.build()

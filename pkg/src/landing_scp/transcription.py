"""Multiple-shooting transcription with first-order-hold inputs and time dilation.

Every subinterval is integrated in normalized time tau in [0, 1] with the
dilated dynamics ``x' = s f(x, u(tau))``. The variational equations are carried
along in the same fixed-step RK4 sweep, so the discrete-time blocks are exact
sensitivities of the discrete map actually used (no matrix inverses needed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import NU, NX, AircraftParams, ModelError, rhs_and_jacobians, dynamics_rhs

# column layout of the augmented sensitivity block [x | A | Bm | Bp | z]
_A = slice(1, 1 + NX)
_BM = slice(1 + NX, 1 + NX + NU)
_BP = slice(1 + NX + NU, 1 + NX + 2 * NU)
_Z = 1 + NX + 2 * NU
_NCOL = _Z + 1


class NonfiniteStateError(ModelError):
    """Integration produced NaN or Inf."""


@dataclass(frozen=True)
class MeshSpec:
    n: int = 32
    k_switch: int = 24
    substeps: int = 20
    max_step: float = 0.5  # s; RK4 step cap, the fastest aircraft mode is ~2.2 1/s
    s_min: float = 1.0
    s_max: float = 60.0

    def __post_init__(self):
        if not 0 < self.k_switch <= self.n:
            raise ValueError(f"k_switch must lie in (0, n]; got {self.k_switch} with n={self.n}")
        if self.substeps < 10:
            raise ValueError("substeps must be >= 10")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")
        if not 0 < self.s_min < self.s_max:
            raise ValueError("need 0 < s_min < s_max")

    def steps_for(self, s) -> int:
        """RK4 steps per subinterval for dilation(s) ``s``: at least ``substeps``."""
        return max(self.substeps, math.ceil(float(np.max(s)) / self.max_step))


@dataclass
class TrajectoryIterate:
    """Node states ``x`` (N+1, 13), node inputs ``u`` (N+1, 4), dilations ``s`` (N,)."""

    x: np.ndarray
    u: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        self.s = np.asarray(self.s, dtype=float)
        n = self.s.shape[0]
        if self.x.shape != (n + 1, NX) or self.u.shape != (n + 1, NU):
            raise ValueError(
                f"inconsistent iterate shapes x{self.x.shape} u{self.u.shape} s{self.s.shape}"
            )

    @property
    def n(self) -> int:
        return self.s.shape[0]

    @property
    def times(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.s)])

    def copy(self) -> "TrajectoryIterate":
        return TrajectoryIterate(self.x.copy(), self.u.copy(), self.s.copy())


@dataclass
class LinearBlocks:
    """Per-interval linearization of the shooting map and of the CTCS integrator."""

    A: np.ndarray  # (N, 13, 13)
    Bm: np.ndarray  # (N, 13, 4)
    Bp: np.ndarray  # (N, 13, 4)
    z: np.ndarray  # (N, 13)
    w: np.ndarray  # (N, 13)
    x_end: np.ndarray  # (N, 13)
    cA: np.ndarray  # (N, 13)
    cBm: np.ndarray  # (N, 4)
    cBp: np.ndarray  # (N, 4)
    cz: np.ndarray  # (N,)
    cw: np.ndarray  # (N,)
    ctcs_end: np.ndarray  # (N,)

    def __getitem__(self, k) -> "LinearBlocks":
        return LinearBlocks(**{name: getattr(self, name)[k] for name in self.__dataclass_fields__})

    def defects(self, it: TrajectoryIterate) -> np.ndarray:
        """Nonlinear shooting defects ``x_end_k - x_{k+1}`` of the linearization point."""
        return self.x_end - it.x[1:]


def foh_input(u_k, u_kp1, tau):
    """First-order-hold interpolation at normalized time ``tau`` in [0, 1]."""
    tau = np.asarray(tau, dtype=float)
    return (1.0 - tau)[..., None] * np.asarray(u_k) + tau[..., None] * np.asarray(u_kp1)


def ctcs_h(x, bounds) -> np.ndarray:
    """Roll/pitch path constraints, each component <= 0 when satisfied.

    ``bounds`` is ``(phi_min, phi_max, theta_min, theta_max)`` in radians.
    """
    x = np.asarray(x)
    phi_min, phi_max, th_min, th_max = bounds
    phi, th = x[..., 6], x[..., 7]
    return np.stack([phi_min - phi, phi - phi_max, th_min - th, th - th_max], axis=-1)


def _ctcs_integrand(x, bounds):
    """Sum of squared positive parts of ``ctcs_h`` and its state gradient."""
    viol = np.maximum(ctcs_h(x, bounds), 0.0)
    g = np.sum(viol * viol, axis=-1)
    grad = np.zeros(x.shape[:-1] + (NX,))
    grad[..., 6] = 2.0 * (viol[..., 1] - viol[..., 0])
    grad[..., 7] = 2.0 * (viol[..., 3] - viol[..., 2])
    return g, grad


def _augmented_rhs(tau, M, Y, u_k, u_kp1, s, wind, params, bounds):
    x = M[:, :, 0]
    u = (1.0 - tau) * u_k + tau * u_kp1
    f, A, B = rhs_and_jacobians(x, u, wind, params)
    sens = M[:, :, 1:]
    dM = np.empty_like(M)
    dM[:, :, 0] = s[:, None] * f
    dM[:, :, 1:] = s[:, None, None] * (A @ sens)
    dM[:, :, _BM] += (s * (1.0 - tau))[:, None, None] * B
    dM[:, :, _BP] += (s * tau)[:, None, None] * B
    dM[:, :, _Z] += f

    g, grad = _ctcs_integrand(x, bounds)
    dY = np.empty_like(Y)
    dY[:, 0] = s * g
    dY[:, 1:] = s[:, None] * np.einsum("ki,kij->kj", grad, sens)
    dY[:, _Z] += g
    return dM, dY


def _propagate_batch(x0, u_k, u_kp1, s, wind, params, substeps, bounds):
    K = x0.shape[0]
    M = np.zeros((K, NX, _NCOL))
    M[:, :, 0] = x0
    M[:, :, _A] = np.eye(NX)
    Y = np.zeros((K, _NCOL))
    h = 1.0 / substeps
    for i in range(substeps):
        tau = i * h
        k1 = _augmented_rhs(tau, M, Y, u_k, u_kp1, s, wind, params, bounds)
        k2 = _augmented_rhs(tau + h / 2, M + h / 2 * k1[0], Y + h / 2 * k1[1], u_k, u_kp1, s, wind, params, bounds)
        k3 = _augmented_rhs(tau + h / 2, M + h / 2 * k2[0], Y + h / 2 * k2[1], u_k, u_kp1, s, wind, params, bounds)
        k4 = _augmented_rhs(tau + h, M + h * k3[0], Y + h * k3[1], u_k, u_kp1, s, wind, params, bounds)
        M = M + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        Y = Y + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        if not (np.all(np.isfinite(M[:, :, 0])) and np.all(np.isfinite(Y[:, 0]))):
            raise NonfiniteStateError(f"non-finite state after RK4 step {i + 1}")

    x_end = M[:, :, 0]
    A, Bm, Bp, z = M[:, :, _A], M[:, :, _BM], M[:, :, _BP], M[:, :, _Z]
    w = x_end - (
        np.einsum("kij,kj->ki", A, x0)
        + np.einsum("kij,kj->ki", Bm, u_k)
        + np.einsum("kij,kj->ki", Bp, u_kp1)
        + z * s[:, None]
    )
    y_end = Y[:, 0]
    cA, cBm, cBp, cz = Y[:, _A], Y[:, _BM], Y[:, _BP], Y[:, _Z]
    cw = y_end - (
        np.einsum("ki,ki->k", cA, x0)
        + np.einsum("ki,ki->k", cBm, u_k)
        + np.einsum("ki,ki->k", cBp, u_kp1)
        + cz * s
    )
    return LinearBlocks(A, Bm, Bp, z, w, x_end.copy(), cA, cBm, cBp, cz, cw, y_end.copy())


_NO_BOUNDS = (-np.inf, np.inf, -np.inf, np.inf)


def propagate_interval(
    x_k,
    u_k,
    u_kp1,
    s_k: float,
    wind=(0.0, 0.0, 0.0),
    params: AircraftParams = AircraftParams(),
    mesh: MeshSpec = MeshSpec(),
    bounds=_NO_BOUNDS,
):
    """Integrate one subinterval; returns ``(x_end, ctcs_end, LinearBlocks)`` for it."""
    if not s_k > 0:
        raise ValueError("dilation must be positive")
    blk = _propagate_batch(
        np.asarray(x_k, dtype=float)[None],
        np.asarray(u_k, dtype=float)[None],
        np.asarray(u_kp1, dtype=float)[None],
        np.array([s_k], dtype=float),
        wind,
        params,
        mesh.steps_for(s_k),
        bounds,
    )
    blk = blk[0]
    return blk.x_end, float(blk.ctcs_end), blk


def linearize(
    it: TrajectoryIterate,
    wind=(0.0, 0.0, 0.0),
    params: AircraftParams = AircraftParams(),
    mesh: MeshSpec = MeshSpec(),
    bounds=_NO_BOUNDS,
) -> LinearBlocks:
    """Propagate all subintervals of ``it`` at once (vectorized over k)."""
    if np.any(it.s <= 0):
        raise ValueError("dilation must be positive")
    return _propagate_batch(it.x[:-1], it.u[:-1], it.u[1:], it.s, wind, params, mesh.steps_for(it.s), bounds)


@dataclass
class DenseTrajectory:
    t: np.ndarray  # (N*M,)
    x: np.ndarray  # (N*M, 13)
    u: np.ndarray  # (N*M, 4)
    interval: np.ndarray  # (N*M,) owning subinterval index
    defects: np.ndarray  # (N+1, 13), x(t_k^-) - x_k; row 0 is zero

    def defect_norms(self, scale=None) -> np.ndarray:
        d = self.defects if scale is None else self.defects / np.asarray(scale)
        return np.linalg.norm(d, axis=1)


def dense_sample(
    it: TrajectoryIterate,
    M: int,
    wind=(0.0, 0.0, 0.0),
    params: AircraftParams = AircraftParams(),
    mesh: MeshSpec = MeshSpec(),
    single_shooting: bool = True,
) -> DenseTrajectory:
    """Re-integrate the nonlinear dynamics at ``M`` samples per subinterval.

    With ``single_shooting`` the state is carried across nodes from ``x_0``;
    otherwise every subinterval restarts from its node state.
    """
    if M < 2:
        raise ValueError("need at least 2 samples per interval")
    n = it.n
    taus = np.linspace(0.0, 1.0, M)
    steps = max(1, math.ceil(mesh.steps_for(it.s) / (M - 1)))
    h = 1.0 / ((M - 1) * steps)

    ts, xs, us, owner = [], [], [], []
    defects = np.zeros((n + 1, NX))
    t0 = it.times
    x = it.x[0].copy()
    for k in range(n):
        if not single_shooting:
            x = it.x[k].copy()
        uk, ukp1, s = it.u[k], it.u[k + 1], it.s[k]

        def f(tau, xx):
            return s * dynamics_rhs(xx, (1 - tau) * uk + tau * ukp1, wind, params)

        for j, tau_j in enumerate(taus):
            if j > 0:
                tau = taus[j - 1]
                for _ in range(steps):
                    k1 = f(tau, x)
                    k2 = f(tau + h / 2, x + h / 2 * k1)
                    k3 = f(tau + h / 2, x + h / 2 * k2)
                    k4 = f(tau + h, x + h * k3)
                    x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
                    tau += h
                if not np.all(np.isfinite(x)):
                    raise NonfiniteStateError(f"non-finite state in interval {k}")
            ts.append(t0[k] + s * tau_j)
            xs.append(x.copy())
            us.append((1 - tau_j) * uk + tau_j * ukp1)
            owner.append(k)
        defects[k + 1] = x - it.x[k + 1]
    return DenseTrajectory(np.array(ts), np.array(xs), np.array(us), np.array(owner), defects)


def switch_time(it: TrajectoryIterate, mesh: MeshSpec) -> tuple[float, float]:
    """Return ``(t_s, t_f)``: start time of the final-approach phase and final time."""
    return float(np.sum(it.s[: mesh.k_switch])), float(np.sum(it.s))

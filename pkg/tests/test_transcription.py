import numpy as np
import pytest

import landing_scp.transcription as tr
from landing_scp.model import DEG, NU, NX, PitchSingularityError
from landing_scp.transcription import (
    MeshSpec,
    NonfiniteStateError,
    TrajectoryIterate,
    ctcs_h,
    dense_sample,
    foh_input,
    linearize,
    propagate_interval,
    switch_time,
)

LIMITS = (-15 * DEG, 15 * DEG, -15 * DEG, 15 * DEG)


def cruise_state(phi=0.0, theta=0.02):
    x = np.zeros(NX)
    x[:3] = [-20000, -5000, -3000]
    x[3:6] = [100, 0, 2]
    x[6:9] = [phi, theta, 0.1]
    x[12] = 0.05
    return x


U0 = np.array([0.0, -0.1, 0.0, 0.05])
U1 = np.array([0.02, -0.12, 0.01, 0.06])


class TestMesh:
    def test_defaults(self):
        m = MeshSpec()
        assert (m.n, m.k_switch, m.substeps, m.s_min, m.s_max) == (32, 24, 20, 1.0, 60.0)

    @pytest.mark.parametrize(
        "kw", [dict(k_switch=0), dict(k_switch=40), dict(substeps=5), dict(s_min=0.0), dict(s_min=5, s_max=5), dict(max_step=0)]
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            MeshSpec(**kw)

    def test_step_cap(self):
        m = MeshSpec()
        assert m.steps_for(5.0) == 20
        assert m.steps_for(21.0) == 42


class TestIterate:
    def test_shapes(self):
        with pytest.raises(ValueError):
            TrajectoryIterate(np.zeros((4, NX)), np.zeros((4, NU)), np.ones(4))

    def test_times(self):
        it = TrajectoryIterate(np.zeros((4, NX)), np.zeros((4, NU)), [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(it.times, [0, 1, 3, 6])


class TestFoh:
    def test_endpoints(self):
        np.testing.assert_array_equal(foh_input(U0, U1, 0.0), U0)
        np.testing.assert_array_equal(foh_input(U0, U1, 1.0), U1)

    def test_midpoint(self):
        np.testing.assert_allclose(foh_input(U0, U1, 0.5), (U0 + U1) / 2, rtol=1e-15)

    def test_constant(self):
        c = np.array([0.1, 0.2, 0.3, 0.4])
        for tau in np.linspace(0, 1, 7):
            np.testing.assert_allclose(foh_input(c, c, tau), c, rtol=1e-15)


class TestCtcsH:
    def test_center(self):
        np.testing.assert_allclose(ctcs_h(np.zeros(NX), LIMITS), [-15 * DEG] * 4, rtol=1e-15)

    def test_boundary(self):
        x = np.zeros(NX)
        x[6] = 15 * DEG
        assert ctcs_h(x, LIMITS)[1] == 0

    def test_violation(self):
        x = np.zeros(NX)
        x[6] = 30 * DEG
        assert ctcs_h(x, LIMITS)[1] == pytest.approx(15 * DEG, rel=1e-14)


class TestLinearTestDouble:
    """Linear dynamics x' = a x + b u injected in place of the aircraft model."""

    a, b = -0.3, 0.7

    @pytest.fixture(autouse=True)
    def linear_model(self, monkeypatch):
        a, b = self.a, self.b

        def fake(x, u, wind, params):
            f = a * x + b * np.concatenate([u, np.zeros(u.shape[:-1] + (NX - NU,))], axis=-1)
            A = np.broadcast_to(a * np.eye(NX), x.shape[:-1] + (NX, NX)).copy()
            B = np.zeros(x.shape[:-1] + (NX, NU))
            B[..., :NU, :] = b * np.eye(NU)
            return f, A, B

        monkeypatch.setattr(tr, "rhs_and_jacobians", fake)

    def test_closed_form(self):
        x0 = np.linspace(1, 2, NX)
        u = np.array([0.5, -1.0, 2.0, 0.25])
        s = 3.0
        x_end, _, blk = propagate_interval(x0, u, u, s, mesh=MeshSpec(substeps=40))
        e = np.exp(self.a * s)
        want = e * x0
        want[:NU] += (e - 1) * self.b / self.a * u
        np.testing.assert_allclose(x_end, want, rtol=1e-8)
        np.testing.assert_allclose(blk.A, e * np.eye(NX), rtol=1e-8, atol=1e-12)


class TestPropagation:
    def test_exactness(self):
        x0 = cruise_state()
        x_end, _, blk = propagate_interval(x0, U0, U1, 8.0)
        lin = blk.A @ x0 + blk.Bm @ U0 + blk.Bp @ U1 + blk.z * 8.0 + blk.w
        np.testing.assert_allclose(lin, x_end, rtol=1e-12, atol=1e-9)

    def test_ctcs_zero_inside_limits(self):
        _, y, blk = propagate_interval(cruise_state(), U0, U0, 5.0, bounds=LIMITS)
        assert y == 0.0 and np.all(blk.cA == 0)

    def test_ctcs_positive_when_violating(self):
        _, y, _ = propagate_interval(cruise_state(phi=20 * DEG), U0, U0, 5.0, bounds=LIMITS)
        assert y > 0

    def test_ctcs_linearization_exact_at_reference(self):
        x0 = cruise_state(phi=20 * DEG)
        _, y, b = propagate_interval(x0, U0, U1, 6.0, bounds=LIMITS)
        assert b.cA @ x0 + b.cBm @ U0 + b.cBp @ U1 + b.cz * 6.0 + b.cw == pytest.approx(y, rel=1e-12)

    def test_rk4_order(self):
        x0 = cruise_state()
        ref, _, _ = propagate_interval(x0, U0, U1, 10.0, mesh=MeshSpec(substeps=400, max_step=100))
        e1 = np.linalg.norm(propagate_interval(x0, U0, U1, 10.0, mesh=MeshSpec(substeps=10, max_step=100))[0] - ref)
        e2 = np.linalg.norm(propagate_interval(x0, U0, U1, 10.0, mesh=MeshSpec(substeps=20, max_step=100))[0] - ref)
        assert e1 / e2 >= 12

    def test_directional_derivatives(self):
        # forward differences, residual measured in the solver's scaled units
        rng = np.random.default_rng(0)
        sx = np.array([1e4] * 3 + [1e2] * 3 + [1.0] * 7)
        x0, s, eps = cruise_state(), 8.0, 1e-5
        x_end, _, b = propagate_interval(x0, U0, U1, s)

        def err(fd, lin):
            return np.linalg.norm((fd - lin) / sx)

        for _ in range(3):
            d = rng.normal(size=NX)
            d /= np.linalg.norm(d)
            fd = (propagate_interval(x0 + eps * d, U0, U1, s)[0] - x_end) / eps
            assert err(fd, b.A @ d) < 1e-3
            du = rng.normal(size=NU)
            du /= np.linalg.norm(du)
            fd = (propagate_interval(x0, U0 + eps * du, U1, s)[0] - x_end) / eps
            assert err(fd, b.Bm @ du) < 1e-3
            fd = (propagate_interval(x0, U0, U1 + eps * du, s)[0] - x_end) / eps
            assert err(fd, b.Bp @ du) < 1e-3
        fd = (propagate_interval(x0, U0, U1, s + eps)[0] - x_end) / eps
        assert err(fd, b.z) < 1e-3

    def test_linearization_error_quadratic(self):
        x0, s = cruise_state(), 8.0
        _, _, b = propagate_interval(x0, U0, U1, s)
        d = np.zeros(NX)
        d[6:9] = [1, -1, 0.5]
        errs = []
        for eps in (1e-2, 5e-3):
            x_end = propagate_interval(x0 + eps * d, U0, U1, s)[0]
            lin = b.A @ (x0 + eps * d) + b.Bm @ U0 + b.Bp @ U1 + b.z * s + b.w
            errs.append(np.linalg.norm(x_end - lin))
        assert 3.5 < errs[0] / errs[1] < 4.5

    def test_batch_equals_single(self):
        n = 3
        x = np.array([cruise_state(theta=0.01 * k) for k in range(n + 1)])
        u = np.array([U0, U1, U0, U1])
        it = TrajectoryIterate(x, u, [4.0, 5.0, 6.0])
        blk = linearize(it, mesh=MeshSpec())
        mesh = MeshSpec(substeps=MeshSpec().steps_for(it.s))
        for k in range(n):
            x_end, _, b = propagate_interval(x[k], u[k], u[k + 1], it.s[k], mesh=mesh)
            np.testing.assert_array_equal(blk.x_end[k], x_end)
            np.testing.assert_array_equal(blk.A[k], b.A)

    def test_deterministic(self):
        a = propagate_interval(cruise_state(), U0, U1, 7.0)[0]
        b = propagate_interval(cruise_state(), U0, U1, 7.0)[0]
        assert np.array_equal(a, b)

    def test_errors(self):
        with pytest.raises(ValueError):
            propagate_interval(cruise_state(), U0, U1, 0.0)
        x = cruise_state(theta=np.pi / 2)
        with pytest.raises(PitchSingularityError):
            propagate_interval(x, U0, U1, 1.0)


def _consistent_iterate(n=4, s=6.0, phi0=0.0):
    x = [cruise_state(phi=phi0)]
    u = np.tile(U0, (n + 1, 1))
    for k in range(n):
        x.append(propagate_interval(x[-1], u[k], u[k + 1], s, mesh=MeshSpec(max_step=0.05))[0])
    return TrajectoryIterate(np.array(x), u, np.full(n, s))


class TestDenseSample:
    def test_shapes_and_endpoints(self):
        it = _consistent_iterate()
        d = dense_sample(it, 2, mesh=MeshSpec(max_step=0.05))
        assert d.x.shape == (it.n * 2, NX)
        np.testing.assert_allclose(d.t[::2], it.times[:-1])
        np.testing.assert_allclose(d.t[1::2], it.times[1:])

    def test_consistent_iterate_has_no_defects(self):
        it = _consistent_iterate()
        d = dense_sample(it, 10, mesh=MeshSpec(max_step=0.05))
        scale = np.array([1e4] * 3 + [1e2] * 3 + [1] * 7)
        assert np.max(d.defect_norms(scale)) < 1e-5
        np.testing.assert_allclose(d.x[9::10], it.x[1:], atol=1e-6)

    def test_multiple_shooting_restarts(self):
        it = _consistent_iterate()
        it.x[2, 0] += 50.0
        ss = dense_sample(it, 5, mesh=MeshSpec(max_step=0.05))
        ms = dense_sample(it, 5, mesh=MeshSpec(max_step=0.05), single_shooting=False)
        assert ss.defects[2, 0] == pytest.approx(-50, abs=1e-4)
        assert ss.defects[3, 0] == pytest.approx(0, abs=1e-4)
        assert ms.defects[2, 0] == pytest.approx(-50, abs=1e-4)
        # position does not feed back into the dynamics: the shift is carried through
        assert ms.defects[3, 0] == pytest.approx(50, abs=1e-4)

    def test_ctcs_equivalence(self):
        # inside the limits everywhere <=> integrator stays at zero
        for phi0, inside in ((0.0, True), (18 * DEG, False)):
            it = _consistent_iterate(n=2, s=3.0, phi0=phi0)
            blk = linearize(it, mesh=MeshSpec(), bounds=LIMITS)
            d = dense_sample(it, 20)
            max_h = np.max(ctcs_h(d.x, LIMITS))
            assert (np.all(blk.ctcs_end == 0)) == inside
            assert (max_h <= 1e-6) == inside

    def test_min_samples(self):
        with pytest.raises(ValueError):
            dense_sample(_consistent_iterate(), 1)

    def test_nonfinite(self, monkeypatch):
        it = _consistent_iterate()
        monkeypatch.setattr(tr, "dynamics_rhs", lambda *a, **k: np.full(NX, np.nan))
        with pytest.raises(NonfiniteStateError):
            dense_sample(it, 3)


class TestSwitchTime:
    def test_uniform(self):
        it = TrajectoryIterate(np.zeros((33, NX)), np.zeros((33, NU)), np.full(32, 10.0))
        assert switch_time(it, MeshSpec()) == (240.0, 320.0)

    def test_degenerate(self):
        it = TrajectoryIterate(np.zeros((33, NX)), np.zeros((33, NU)), np.arange(1.0, 33.0))
        t_s, t_f = switch_time(it, MeshSpec(k_switch=32))
        assert t_s == t_f

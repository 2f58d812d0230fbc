import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blowuplab.core import DomainError, InitialData, ProblemSpec, Snapshot, build_grid
from blowuplab.diagnostics import _states
from blowuplab.physical_solver import StepControl, solve_until_blowup
from blowuplab.similarity import (
    NATIVE,
    RhoQuadrature,
    SimilarityFrame,
    contraction_check,
    delayed_smoothing_scan,
    from_similarity_frame,
    mehler_apply,
    random_band_limited,
    rho_mass,
    solve_w_equation,
    to_similarity_frame,
    to_vn_frame,
    w_rhs,
    weighted_norm,
    y_grid,
)

GH = RhoQuadrature(N=1, rule="gauss-hermite")
Y6 = np.linspace(-6.0, 6.0, 241)


def self_similar_snapshot(phi, T, t, p=3.0, R=100.0, n=40001):
    spec = ProblemSpec(N=1, p=p, R=R, boundary="neumann", initial=InitialData("gaussian"))
    g = build_grid(spec, n)
    tau = T - t
    beta = 1.0 / (p - 1.0)
    return Snapshot(g, tau ** (-beta) * phi(g.nodes / math.sqrt(tau)), t, spec)


def constant_frame(value, N=1, Y=12.0, nodes=481, p=3.0):
    radial = N > 1
    y = y_grid(Y, nodes, radial)
    return SimilarityFrame(y=y, w=np.full(y.shape, value), s=0.0, s0=0.0, center=0.0, N=N,
                           p=p, radial=radial, source=NATIVE)


class TestTransforms:
    def test_homogeneous_is_kappa(self):
        kappa = 2 ** -0.5
        for t in (0.0, 0.5, 0.9, 0.999):
            snap = self_similar_snapshot(lambda y: np.full_like(y, kappa), 1.0, t, n=2001)
            frame = to_similarity_frame(snap, 0.0, 1.0)
            np.testing.assert_allclose(frame.w, kappa, rtol=1e-14)
            assert frame.s == pytest.approx(-math.log(1.0 - t))

    def test_self_similar_seed_returns_profile(self):
        def phi(y):
            return 0.7 / (1.0 + y**2) ** (1.0 / 3.0)

        y = np.linspace(-10, 10, 401)
        for t in (0.0, 0.9, 0.99):
            frame = to_similarity_frame(self_similar_snapshot(phi, 1.0, t), 0.0, 1.0, y)
            assert np.max(np.abs(frame.w - phi(y))) < 1e-8

    def test_rejects_time_after_blowup(self):
        snap = self_similar_snapshot(np.cos, 1.0, 0.5, n=101)
        with pytest.raises(DomainError):
            to_similarity_frame(snap, 0.0, 0.5)

    def test_zero_outside_domain(self):
        snap = self_similar_snapshot(lambda y: np.ones_like(y), 1.0, 0.0, R=2.0, n=201)
        frame = to_similarity_frame(snap, 0.0, 1.0)
        assert np.all(frame.w[np.abs(frame.y) > 2.0] == 0.0)

    def test_round_trip(self, blowup_run):
        snap = blowup_run.trace[-5]
        frame = to_similarity_frame(snap, 0.0, blowup_run.T_hat, y_grid(12.0, 24001))
        x = snap.grid.nodes
        overlap = np.abs(x) <= 0.9 * frame.Y_max * math.sqrt(blowup_run.T_hat - snap.time)
        back = from_similarity_frame(frame, x[overlap])
        err = np.max(np.abs(back - snap.values[overlap])) / snap.sup_norm
        assert err < 1e-6


@pytest.fixture(scope="module")
def ode_run():
    spec = ProblemSpec(N=1, p=2.0, R=1.0, boundary="homogeneous",
                       initial=InitialData("constant", {"c": 1.0}))
    return solve_until_blowup(spec, StepControl(u_max=1e6, ode_safety=0.005), node_count=3)


class TestVnFrame:

    def test_homogeneous_is_kappa(self, ode_run):
        y = np.linspace(-5, 5, 41)
        for t_n in (0.99, 0.999):
            v = to_vn_frame(ode_run, t_n, -1.0, y)
            np.testing.assert_allclose(v.w, 1.0, rtol=1e-4)

    def test_bound_check(self, ode_run):
        v = to_vn_frame(ode_run, 0.99, -0.5, np.linspace(-1, 1, 11), M=1.01)
        assert v.meta["bound_ok"]
        v = to_vn_frame(ode_run, 0.99, -0.5, np.linspace(-1, 1, 11), M=0.9)
        assert not v.meta["bound_ok"]

    @pytest.mark.parametrize("s", [0.0, 0.5, -2.0, -3.0])
    def test_rejects_s(self, ode_run, s):
        with pytest.raises(DomainError):
            to_vn_frame(ode_run, 0.99, s)

    def test_concentration_stable_in_n(self, blowup_run):
        T = blowup_run.T_hat
        k = 3.0
        y = np.linspace(-k, k, 6001)
        vals = []
        for frac in (3e-2, 1e-2, 4e-3):
            t_n = T - frac * T
            v = to_vn_frame(blowup_run, t_n, -1.0, y)
            vals.append(np.trapezoid(np.abs(v.w), y))
        assert min(vals) > 0.5 * 2 * k * 2 ** -0.5
        assert (max(vals) - min(vals)) / max(vals) < 0.05

    def test_far_field_bounded(self, blowup_run):
        T = blowup_run.T_hat
        t_n = T - 0.01
        y = np.array([-25.0, 25.0])
        sups = [np.max(np.abs(to_vn_frame(blowup_run, t_n, s, y).w)) for s in (-0.5, -0.1, -0.01)]
        assert max(sups) < 0.1


class TestWeightedNorm:
    def test_constant_one(self):
        n = weighted_norm(constant_frame(1.0, Y=20.0, nodes=2001), 1.0)
        assert n.value == pytest.approx(2 * math.sqrt(math.pi), rel=1e-10)

    def test_zero(self):
        assert weighted_norm(constant_frame(0.0), 2.0).value == 0.0

    @pytest.mark.parametrize("N", [1, 2, 3])
    def test_rho_mass(self, N):
        # radial trapezoid is second order at r = 0 when N = 2
        for rule, rel in (("trapezoid", 1e-5), ("gauss-hermite", 1e-9)):
            quad = RhoQuadrature(N=N, rule=rule, Y_max=20.0, nodes=4001)
            _, c = quad.points_weights()
            assert c.sum() == pytest.approx(rho_mass(N), rel=rel)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_holder(self, seed):
        f = random_band_limited(np.random.default_rng(seed))
        quad = RhoQuadrature(nodes=1201)
        n1 = weighted_norm(f, 1.0, quad).value
        n2 = weighted_norm(f, 2.0, quad).value
        assert n1 <= rho_mass(1) ** 0.5 * n2 * (1 + 1e-12)

    def test_uncertainty_reports_tail(self):
        n = weighted_norm(constant_frame(1.0, Y=3.0, nodes=301), 1.0)
        assert n.uncertainty > 0.1

    def test_quasi_norm_flag(self):
        assert weighted_norm(constant_frame(1.0), 0.5).quasi

    @pytest.mark.parametrize("q", [0.0, -1.0])
    def test_rejects_q(self, q):
        with pytest.raises(DomainError):
            weighted_norm(constant_frame(1.0), q)


class TestMehler:
    @pytest.mark.parametrize("s", [0.01, 0.1, 1.0, 5.0])
    def test_oracles_n1(self, s):
        e = math.exp(-s / 2)
        assert np.max(np.abs(mehler_apply(np.ones_like, s, GH, Y6) - 1.0)) < 1e-8
        assert np.max(np.abs(mehler_apply(lambda y: y, s, GH, Y6) - e * Y6)) < 1e-8
        out = mehler_apply(lambda y: y * y - 2, s, GH, Y6)
        assert np.max(np.abs(out - e * e * (Y6**2 - 2))) < 1e-8

    @pytest.mark.parametrize("N", [2, 3, 5])
    def test_radial_second_moment(self, N):
        quad = RhoQuadrature(N=N, rule="gauss-hermite", gh_nodes=40)
        r = np.linspace(0, 6, 25)
        for s in (0.1, 1.0, 3.0):
            out = mehler_apply(lambda z: z * z, s, quad, r)
            exact = math.exp(-s) * r**2 + 2 * N * (1 - math.exp(-s))
            assert np.max(np.abs(out - exact)) < 1e-9

    def test_identity_at_zero(self):
        np.testing.assert_array_equal(mehler_apply(np.cos, 0.0, GH, Y6), np.cos(Y6))

    def test_rejects_negative_time(self):
        with pytest.raises(DomainError):
            mehler_apply(np.cos, -0.1)

    def test_trapezoid_matches_hermite(self):
        quad = RhoQuadrature(N=1, Y_max=20.0, nodes=4001)
        f = random_band_limited(np.random.default_rng(3))
        a = mehler_apply(f, 0.5, quad, Y6)
        b = mehler_apply(f, 0.5, GH, Y6)
        assert np.max(np.abs(a - b)) < 1e-8

    @given(st.integers(0, 2**32 - 1), st.floats(0.05, 2.0), st.floats(0.05, 2.0))
    @settings(max_examples=15, deadline=None)
    def test_semigroup_law(self, seed, s1, s2):
        f = random_band_limited(np.random.default_rng(seed))
        inner = lambda z: mehler_apply(f, s1, GH, z)  # noqa: E731
        twice = mehler_apply(inner, s2, GH, Y6)
        once = mehler_apply(f, s1 + s2, GH, Y6)
        assert np.max(np.abs(twice - once)) < 1e-6

    def test_invariant_measure(self):
        f = random_band_limited(np.random.default_rng(11))
        y, c = GH.points_weights()
        for s in (0.2, 1.0, 4.0):
            assert c @ mehler_apply(f, s, GH, y) == pytest.approx(c @ f(y), rel=1e-9, abs=1e-9)


class TestContraction:
    def test_constant_equality(self):
        rep = contraction_check(np.ones_like, 1.0, 2.0, RhoQuadrature(N=1, Y_max=20.0, nodes=2001))
        assert abs(rep.margin) < 1e-10 and not rep.violated

    @pytest.mark.parametrize("q", [1.0, 2.0, 4.0])
    def test_sign_alternating_spikes(self, q):
        def phi(y):
            return np.exp(-((y - 1) ** 2) / 0.02) - np.exp(-((y + 1) ** 2) / 0.02)

        quad = RhoQuadrature(N=1, nodes=4801)
        for s in (0.01, 0.5):
            assert not contraction_check(phi, s, q, quad).violated

    def test_rejects_q_below_one(self):
        with pytest.raises(DomainError):
            contraction_check(np.ones_like, 1.0, 0.5)


@pytest.fixture(scope="module")
def scan():
    centers = np.linspace(-6, 6, 25)
    quad = RhoQuadrature(N=1, Y_max=12.0, nodes=4001)
    return delayed_smoothing_scan(2.0, centers, [0.01, 0.5, 1.0, 2.0, 3.0, 5.0], quad)


class TestDelayedSmoothing:
    def test_bounded_at_large_s(self, scan):
        assert scan.bounded[5.0]
        assert scan.s_star is not None and scan.s_star <= 3.0

    def test_monotone_growth_at_small_s(self, scan):
        b, r = scan.ratios(0.01)
        pos = b >= 0
        assert np.all(np.diff(r[pos][np.argsort(b[pos])]) > 0)
        assert not scan.bounded[0.01]

    def test_hypercontractive_threshold(self):
        quad = RhoQuadrature(N=1, Y_max=20.0, nodes=4001)
        s_values = np.round(np.arange(0.8, 1.5, 0.02), 10)
        scan = delayed_smoothing_scan(4.0, np.linspace(0.2, 1.0, 9), s_values, quad, m=2.0,
                                      family="exponential")
        assert scan.s_star == pytest.approx(math.log(3.0), abs=0.05)

    def test_rejects_order(self):
        with pytest.raises(DomainError):
            delayed_smoothing_scan(1.0, [0.0], [1.0])


class TestWEquation:
    def test_kappa_fixed_point(self):
        for p in (2.0, 3.0, 7.0):
            kappa = (1 / (p - 1)) ** (1 / (p - 1))
            frame = constant_frame(kappa, p=p)
            res = w_rhs(frame.w, frame, "neumann" if frame.radial else "dirichlet")
            assert np.max(np.abs(res[1:-1])) <= 1e-12

    def test_kappa_stays_radial(self):
        kappa = 0.5 ** 0.5
        frame = constant_frame(kappa, N=3, Y=8.0, nodes=161)
        out = solve_w_equation(frame, 0.5, boundary="neumann")
        np.testing.assert_allclose(out[-1].w, kappa, rtol=1e-12)

    def test_small_data_follows_linear_semigroup(self):
        y = y_grid(12.0, 961)
        eps = 1e-4
        w0 = eps * np.exp(-(y**2))
        frame = SimilarityFrame(y=y, w=w0, s=0.0, s0=0.0, center=0.0, N=1, p=3.0, radial=False)
        s = 1.0
        out = solve_w_equation(frame, s)[-1]
        exact = math.exp(-0.5 * s) * mehler_apply(lambda z: eps * np.exp(-(z**2)), s, GH, y)
        assert np.max(np.abs(out.w - exact)) <= 1e-3 * eps

    def test_agrees_with_physical_route(self, blowup_run):
        T = blowup_run.T_hat
        s1 = -math.log(T) + 1.0
        s2 = s1 + 1.5
        y = y_grid(4.0 * math.exp(s2 / 2.0), 2001)
        start = to_similarity_frame(blowup_run.state_at(T - math.exp(-s1)), 0.0, T, y)
        native = solve_w_equation(start, s2)[-1]
        physical = to_similarity_frame(blowup_run.state_at(T - math.exp(-s2)), 0.0, T, y)
        assert np.max(np.abs(native.w - physical.w)) <= 1e-3

    def test_output_frames(self):
        frame = constant_frame(0.0)
        out = solve_w_equation(frame, 1.0, output_s=[0.25, 0.5])
        assert [f.s for f in out] == [0.25, 0.5, 1.0]

    def test_neumann_needs_radial(self):
        frame = constant_frame(1.0)
        with pytest.raises(ValueError):
            w_rhs(frame.w, frame, "neumann")

    def test_physical_decay_away_from_blowup(self, blowup_run):
        T = blowup_run.T_hat
        states = [s for s in _states(blowup_run) if s.time < T][-60:]
        y = y_grid(12.0, 2401)
        s = np.array([-math.log(T - st.time) for st in states])
        n = [weighted_norm(to_similarity_frame(st, 2.0, T, y), 1.0).value for st in states]
        rate = -np.polyfit(s, np.log(n), 1)[0]
        assert rate == pytest.approx(0.5, rel=0.15)


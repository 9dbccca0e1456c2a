import numpy as np
import pytest

from busoff import (
    CostSpec,
    LinearSystem,
    backward_closed_loop,
    backward_open_loop,
    modified_riccati_step,
    riccati_fixed_point,
    rho_min_bounds,
    rho_min_empirical,
    stationary_policy,
)


class TestCostSpec:
    def test_R_must_be_pd(self):
        with pytest.raises(ValueError, match="positive definite"):
            CostSpec(Q=[[1.0]], R=[[0.0]])

    def test_Q_may_be_psd(self):
        CostSpec(Q=[[0.0]], R=[[1.0]])
        with pytest.raises(ValueError, match="semidefinite"):
            CostSpec(Q=[[-1.0]], R=[[1.0]])

    def test_symmetry(self):
        with pytest.raises(ValueError, match="symmetric"):
            CostSpec(Q=[[1.0, 0.3], [0.0, 1.0]], R=np.eye(2))

    def test_horizon(self):
        with pytest.raises(ValueError):
            CostSpec(Q=[[1.0]], R=[[1.0]], N=0)


class TestModifiedRiccatiStep:
    def test_scalar_formula(self, scalar_sys, scalar_cost):
        # g_rho(P) = 4P + 1 - rho 4P^2/(P+1) for A=2, B=Q=R=1
        for rho, P in [(0.0, 1.0), (0.5, 3.0), (1.0, 2.0)]:
            expect = 4 * P + 1 - rho * 4 * P**2 / (P + 1)
            got = modified_riccati_step([[P]], scalar_sys, scalar_cost, rho)
            assert got[0, 0] == pytest.approx(expect, abs=1e-12)

    def test_rho_zero_is_open_loop_lyapunov(self):
        sys_ = LinearSystem(A=[[0.9, 0.1], [0.0, 0.8]], B=[[0.0], [1.0]])
        cost = CostSpec(Q=np.eye(2), R=[[1.0]])
        P = np.array([[2.0, 0.3], [0.3, 1.0]])
        got = modified_riccati_step(P, sys_, cost, 0.0)
        assert np.allclose(got, sys_.A.T @ P @ sys_.A + cost.Q, atol=1e-12)

    def test_monotone_in_rho(self, scalar_sys, scalar_cost):
        P = np.array([[5.0]])
        vals = [modified_riccati_step(P, scalar_sys, scalar_cost, r)[0, 0]
                for r in np.linspace(0.0, 1.0, 11)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))

    def test_validation(self, scalar_sys, scalar_cost):
        with pytest.raises(ValueError):
            modified_riccati_step([[1.0]], scalar_sys, scalar_cost, 1.5)
        with pytest.raises(ValueError):
            modified_riccati_step(np.eye(2), scalar_sys, scalar_cost, 0.5)


class TestFixedPoint:
    def test_scalar_closed_form(self, scalar_sys, scalar_cost):
        """At rho = 0.8 the scalar MARE reduces to P^2 - 20P - 5 = 0, so the
        stabilizing fixed point is 10 + sqrt(105)."""
        rep = riccati_fixed_point(scalar_sys, scalar_cost, 0.8)
        assert rep.converged
        assert rep.P_inf[0, 0] == pytest.approx(10 + np.sqrt(105), abs=1e-7)
        assert rep.residuals[-1] <= 1e-9

    def test_divergence_below_threshold(self, scalar_sys, scalar_cost):
        rep = riccati_fixed_point(scalar_sys, scalar_cost, 0.25)
        assert not rep.converged
        assert rep.status == "diverged"

    def test_bounds_attached(self, scalar_sys, scalar_cost):
        rep = riccati_fixed_point(scalar_sys, scalar_cost, 0.8)
        assert (rep.rho_min_lower, rep.rho_min_upper) == (0.75, 0.75)


class TestRhoMinBounds:
    def test_scalar(self):
        assert rho_min_bounds([[2.0]]) == (0.75, 0.75)

    def test_two_unstable_eigenvalues(self):
        lower, upper = rho_min_bounds(np.diag([2.0, 1.5]))
        assert lower == pytest.approx(0.75)
        assert upper == pytest.approx(1.0 - 1.0 / 9.0)

    def test_stable_and_marginal(self):
        assert rho_min_bounds([[0.5]]) == (0.0, 0.0)
        assert rho_min_bounds(np.eye(3)) == (0.0, 0.0)  # spectral radius 1

    def test_empirical_scalar(self, scalar_sys, scalar_cost):
        est = rho_min_empirical(scalar_sys, scalar_cost)
        assert 0.745 <= est <= 0.755

    def test_empirical_stable_is_zero(self):
        sys_ = LinearSystem(A=[[0.5]], B=[[1.0]])
        assert rho_min_empirical(sys_, CostSpec(Q=[[1.0]], R=[[1.0]])) == 0.0

    def test_empirical_requires_controllability(self):
        sys_ = LinearSystem(A=np.diag([2.0, 0.5]), B=[[1.0], [0.0]])
        with pytest.raises(ValueError, match="controllab"):
            rho_min_empirical(sys_, CostSpec(Q=np.eye(2), R=[[1.0]]))


class TestBackwardClosedLoop:
    def test_one_step_oracle(self, scalar_sys):
        """N = 1, A=2, B=Q=R=1, p=1/2: P1_0 = 5, P2_0 = -1, K_0 = -1."""
        cost = CostSpec(Q=[[1.0]], R=[[1.0]], N=1)
        lad = backward_closed_loop(scalar_sys, cost, 0.5)
        assert lad.K[0][0, 0] == pytest.approx(-1.0, abs=1e-12)
        assert lad.P1[0][0, 0] == pytest.approx(5.0, abs=1e-12)
        assert lad.P2[0][0, 0] == pytest.approx(-1.0, abs=1e-12)
        # V_0(x, alpha_prev=1) drops the improvement term
        assert lad.value([2.0], 1) == pytest.approx(20.0, abs=1e-12)
        assert lad.value([2.0], 0) == pytest.approx(16.0, abs=1e-12)

    def test_noise_offset(self, scalar_sys):
        sys_n = LinearSystem(A=[[2.0]], B=[[1.0]], sigma_v=[[0.3]])
        cost = CostSpec(Q=[[1.0]], R=[[1.0]], N=1)
        lad = backward_closed_loop(sys_n, cost, 0.5)
        # c_0 = tr(P_1 Sigma_v) with P_1 = Q
        assert lad.c[0] == pytest.approx(0.3, abs=1e-12)
        assert lad.c[1] == 0.0

    def test_requires_horizon_and_valid_p(self, scalar_sys, scalar_cost):
        with pytest.raises(ValueError, match="finite horizon"):
            backward_closed_loop(scalar_sys, scalar_cost, 0.5)
        with pytest.raises(ValueError, match="p must be"):
            backward_closed_loop(scalar_sys, CostSpec(Q=[[1.0]], R=[[1.0]], N=2), 1.0)


class TestBackwardOpenLoop:
    def test_equals_iterated_map(self, rng):
        """The open-loop ladder is exactly N iterations of g_{p(1-p)}."""
        for _ in range(10):
            n = int(rng.integers(1, 4))
            A = rng.normal(size=(n, n)) * 0.8
            B = rng.normal(size=(n, 1))
            L = rng.normal(size=(n, n)) * 0.5
            Q = L @ L.T
            sys_ = LinearSystem(A=A, B=B)
            N = int(rng.integers(1, 8))
            cost = CostSpec(Q=Q, R=[[1.0 + rng.random()]], N=N)
            p = float(rng.uniform(0.1, 0.9))
            lad = backward_open_loop(sys_, cost, p)
            P = np.array(Q)
            for _ in range(N):
                P = modified_riccati_step(P, sys_, cost, p * (1.0 - p))
            assert np.allclose(lad.P[0], P, atol=1e-12)

    def test_value_and_horizon(self, scalar_sys):
        cost = CostSpec(Q=[[1.0]], R=[[1.0]], N=3)
        lad = backward_open_loop(scalar_sys, cost, 0.5)
        assert lad.horizon == 3
        assert lad.value([1.0], k=3) == pytest.approx(1.0)


class TestStationaryPolicy:
    def test_fixed_point_identity(self, scalar_sys, scalar_cost):
        """Closed kind: P_inf = P1_inf + (1-p) P2_inf and P1 = A'P A + Q."""
        sys_ = LinearSystem(A=[[1.05]], B=[[1.0]])
        pol = stationary_policy(sys_, scalar_cost, 0.5, attacker_kind="closed")
        A, Q = sys_.A, np.array([[1.0]])
        assert np.allclose(pol.P1_inf, A.T @ pol.P_inf @ A + Q, atol=1e-7)
        assert np.allclose(pol.P_inf, pol.P1_inf + 0.5 * pol.P2_inf, atol=1e-6)

    def test_matches_long_horizon_ladder(self, scalar_cost):
        """The stationary gains are the limit of the finite-horizon closed-loop
        recursion."""
        sys_ = LinearSystem(A=[[1.05]], B=[[1.0]])
        pol = stationary_policy(sys_, scalar_cost, 0.5, attacker_kind="closed")
        lad = backward_closed_loop(sys_, CostSpec(Q=[[1.0]], R=[[1.0]], N=200), 0.5)
        assert np.allclose(pol.K, lad.K[0], atol=1e-8)
        assert np.allclose(pol.P_inf, lad.P1[0] + 0.5 * lad.P2[0], atol=1e-7)

    def test_none_kind_uses_p(self, scalar_sys, scalar_cost):
        pol = stationary_policy(scalar_sys, scalar_cost, 0.8, attacker_kind="none")
        assert pol.P_inf[0, 0] == pytest.approx(10 + np.sqrt(105), abs=1e-6)
        assert pol.P1_inf is None

    def test_nonconvergence_raises(self, scalar_sys, scalar_cost):
        with pytest.raises(ValueError, match="transmission probability"):
            stationary_policy(scalar_sys, scalar_cost, 0.5, attacker_kind="closed")

    def test_unknown_kind(self, scalar_sys, scalar_cost):
        with pytest.raises(ValueError, match="attacker_kind"):
            stationary_policy(scalar_sys, scalar_cost, 0.5, attacker_kind="weird")

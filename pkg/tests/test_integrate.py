"""The integrator is verified against scipy: tableau constants against the
reference Dormand-Prince implementation, trajectories against solve_ivp and
closed forms."""

import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.integrate._ivp.rk import RK45

from mfabc import _integrate as ig


class TestTableau:
    def test_matches_scipy_dormand_prince(self):
        A, B, C, E = RK45.A, RK45.B, RK45.C, RK45.E
        assert [ig._C2, ig._C3, ig._C4, ig._C5, ig._C6] == pytest.approx(C[1:6].tolist(), rel=0, abs=0)
        assert [ig._A21] == pytest.approx(A[1][:1].tolist())
        assert [ig._A31, ig._A32] == pytest.approx(A[2][:2].tolist())
        assert [ig._A41, ig._A42, ig._A43] == pytest.approx(A[3][:3].tolist())
        assert [ig._A51, ig._A52, ig._A53, ig._A54] == pytest.approx(A[4][:4].tolist())
        assert [ig._A61, ig._A62, ig._A63, ig._A64, ig._A65] == pytest.approx(A[5][:5].tolist())
        assert [ig._B1, 0.0, ig._B3, ig._B4, ig._B5, ig._B6] == pytest.approx(B.tolist())
        # scipy stores the error weights with the opposite sign convention;
        # only the magnitude enters the error norm.
        ours = [ig._E1, 0.0, ig._E3, ig._E4, ig._E5, ig._E6, ig._E7]
        assert np.abs(ours) == pytest.approx(np.abs(E).tolist())


class TestReducedModel:
    def test_against_solve_ivp(self):
        coupling, gamma, omega0 = 2.0, 0.1, 1.0
        grid = np.linspace(0.0, 30.0, 301)
        r, phi, status = ig.integrate_reduced(coupling, gamma, omega0, grid,
                                              1e-6, 1e-8, 100_000)
        assert status == ig.STATUS_OK

        def rhs(t, y):
            return [(coupling / 2 - gamma) * y[0] - coupling / 2 * y[0] ** 3,
                    omega0]

        ref = solve_ivp(rhs, (0.0, 30.0), [1.0, 0.0], t_eval=grid,
                        rtol=1e-9, atol=1e-12, dense_output=True)
        assert np.allclose(r, ref.y[0], atol=5e-6)
        assert np.allclose(phi, ref.y[1], atol=5e-6)

    def test_phase_is_linear(self):
        grid = np.linspace(0.0, 30.0, 3001)
        _, phi, _ = ig.integrate_reduced(2.0, 0.1, 0.7, grid, 1e-6, 1e-8, 100_000)
        assert np.allclose(phi, 0.7 * grid, atol=1e-9)

    def test_steady_state(self):
        grid = np.linspace(0.0, 30.0, 3001)
        r, _, _ = ig.integrate_reduced(2.0, 0.1, 1.0, grid, 1e-6, 1e-8, 100_000)
        assert abs(r[-1] - math.sqrt(1 - 2 * 0.1 / 2.0)) < 1e-6

    def test_decay_when_dispersion_dominates(self):
        # coupling = 2 * gamma: the linear term vanishes, cubic damping
        # remains, and the closed form is r(t) = 1 / sqrt(1 + coupling * t).
        grid = np.linspace(0.0, 30.0, 3001)
        r, _, _ = ig.integrate_reduced(0.4, 0.2, 1.0, grid, 1e-6, 1e-8, 100_000)
        assert r[-1] == pytest.approx(1.0 / math.sqrt(1 + 0.4 * 30.0), abs=1e-5)
        assert np.all(np.diff(r) <= 1e-12)


class TestNetworkModel:
    def test_against_solve_ivp_small_network(self):
        rng = np.random.default_rng(0)
        m = 8
        omega = rng.normal(1.0, 0.3, m)
        coupling = 1.5
        grid = np.linspace(0.0, 10.0, 101)
        r, phi, status = ig.integrate_network(omega, coupling, grid,
                                              1e-6, 1e-8, 100_000)
        assert status == ig.STATUS_OK

        def rhs(t, y):
            return omega + coupling / m * np.sum(np.sin(y[None, :] - y[:, None]), axis=1)

        ref = solve_ivp(rhs, (0.0, 10.0), np.zeros(m), t_eval=grid,
                        rtol=1e-10, atol=1e-12)
        z = np.exp(1j * ref.y).mean(axis=0)
        assert np.allclose(r, np.abs(z), atol=1e-5)
        # Compare wrapped phases via the complex plane to dodge branch cuts.
        assert np.allclose(np.exp(1j * phi), z / np.abs(z), atol=1e-4)

    def test_rhs_identity_against_double_sum(self):
        # Order-parameter form equals the direct pairwise sum to 1e-12.
        rng = np.random.default_rng(1)
        for m in (2, 3, 16, 64):
            phi = rng.uniform(-40, 40, m)
            omega = rng.normal(0.0, 1.0, m)
            coupling = 2.7
            out = np.empty(m)
            ig.network_rhs(phi, omega, coupling, out, np.empty(m), np.empty(m))
            direct = omega + coupling / m * np.array(
                [np.sum(np.sin(phi - phi[i])) for i in range(m)])
            assert np.allclose(out, direct, rtol=0, atol=1e-12)

    def test_magnitude_stays_in_unit_interval(self):
        rng = np.random.default_rng(2)
        grid = np.linspace(0.0, 30.0, 501)
        for _ in range(5):
            omega = 1.0 + 0.5 * np.tan(np.pi * (rng.random(16) - 0.5))
            r, _, status = ig.integrate_network(omega, 2.0, grid, 1e-6, 1e-8,
                                                200_000)
            assert status == ig.STATUS_OK
            assert np.all(r >= 0.0) and np.all(r <= 1.0 + 1e-12)

    def test_step_budget_failure_is_flagged(self):
        omega = np.array([1.0, 1e9])
        grid = np.linspace(0.0, 30.0, 31)
        r, _, status = ig.integrate_network(omega, 2.0, grid, 1e-6, 1e-8, 500)
        assert status == ig.STATUS_FAILED
        assert np.isnan(r[-1])

import numpy as np
import pytest

from gausspaths import (Grid, LinearSdeModel, ObservationModel, gram_integral,
                        kernel_gaussian_left, make_rng, matrix_exp,
                        simulate_ensemble, simulate_joint_sde, simulate_sde)
from conftest import stable_2x2


class TestMatrixExp:
    def test_zero_matrix(self):
        assert np.array_equal(matrix_exp(np.zeros((2, 2)), 1.0), np.eye(2))

    def test_scalar(self):
        # exp(-1), frozen from the scalar exponential
        got = matrix_exp(np.array([[-1.0]]), 1.0)
        assert abs(got[0, 0] - 0.36787944117144233) < 1e-16

    def test_nilpotent(self):
        a = np.array([[0.0, 1.0], [0.0, 0.0]])
        assert np.allclose(matrix_exp(a, 2.0), [[1.0, 2.0], [0.0, 1.0]], atol=1e-14)

    def test_semigroup(self):
        rng = make_rng(0)
        for _ in range(10):
            a = rng.standard_normal((3, 3))
            s, t = rng.uniform(0, 1, 2)
            lhs = matrix_exp(a, s) @ matrix_exp(a, t)
            assert np.abs(lhs - matrix_exp(a, s + t)).max() < 1e-10

    def test_rejects_nonsquare(self):
        with pytest.raises(ValueError):
            matrix_exp(np.zeros((2, 3)), 1.0)


class TestGramIntegral:
    def test_identity_model(self, bm2):
        assert np.abs(gram_integral(bm2, 0.5) - 0.5 * np.eye(2)).max() < 1e-14

    def test_scalar_closed_form(self):
        # A = -1, B = 1: int_0^1 e^{2r} dr = (e^2 - 1)/2
        model = LinearSdeModel([[-1.0]], [[1.0]])
        got = gram_integral(model, 1.0)[0, 0]
        assert abs(got - 3.194528049465325) < 1e-12

    def test_zero_time(self):
        assert np.array_equal(gram_integral(stable_2x2(3), 0.0), np.zeros((2, 2)))

    def test_rejects_outside_unit_interval(self, bm1):
        with pytest.raises(ValueError):
            gram_integral(bm1, 1.5)
        with pytest.raises(ValueError):
            gram_integral(bm1, -0.1)

    def test_loewner_monotone(self):
        model = stable_2x2(11)
        ts = np.linspace(0.1, 1.0, 7)
        prev = gram_integral(model, 0.0)
        for t in ts:
            cur = gram_integral(model, t)
            assert np.linalg.eigvalsh(cur - prev).min() >= -1e-10
            prev = cur

    def test_symmetric_psd(self):
        g = gram_integral(stable_2x2(5), 0.7)
        assert np.abs(g - g.T).max() < 1e-12
        assert np.linalg.eigvalsh(g).min() >= -1e-12


class TestModelValidation:
    def test_rejects_singular_noise(self):
        with pytest.raises(ValueError, match="BB"):
            LinearSdeModel([[0.0]], [[0.0]])

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            LinearSdeModel(np.zeros((2, 2)), np.eye(3))

    def test_observation_validation(self):
        with pytest.raises(ValueError, match="lam"):
            ObservationModel(a11=[[0.0]], a21=[[1.0]], b11=[[1.0]], b22=[[1.0]],
                             lam=[[-1.0]], x_minus=[0.0])
        with pytest.raises(ValueError, match="b22"):
            ObservationModel(a11=[[0.0]], a21=[[1.0]], b11=[[1.0]], b22=[[0.0]],
                             lam=[[1.0]], x_minus=[0.0])


class TestSimulateSde:
    def test_no_drift_tiny_noise_stays_constant(self):
        # the B = 0 limit is outside the type invariant (BB* must be
        # invertible), so take B small and bound the excursion by it
        model = LinearSdeModel([[0.0]], [[1e-5]])
        path = simulate_sde(model, [3.0], Grid(9), seed=1)
        assert np.abs(path.values - 3.0).max() < 1e-4

    def test_euler_update_rule_exact(self, bm1):
        # reproduce the documented update X_{j+1} = X_j + h A X_j + sqrt(h) B xi_j
        grid = Grid(6)
        path = simulate_sde(bm1, [0.0], grid, seed=7)
        xi = make_rng(7).standard_normal((5, 1))
        x = np.zeros(1)
        expected = [x]
        for j in range(5):
            x = x + grid.h * (bm1.drift @ x) + np.sqrt(grid.h) * (bm1.noise @ xi[j])
            expected.append(x)
        assert np.array_equal(path.values, np.array(expected))

    def test_drift_converges_to_matrix_exp(self):
        # tiny noise isolates the deterministic Euler error, which is O(h)
        errs = []
        for j in (11, 21, 41):
            model = LinearSdeModel([[1.0]], [[1e-5]])
            path = simulate_sde(model, [1.0], Grid(j), seed=0)
            exact = np.exp(Grid(j).nodes)
            errs.append(np.abs(path.values[:, 0] - exact).max())
        assert errs[0] > errs[1] > errs[2]
        assert 1.5 < errs[0] / errs[1] < 2.5
        assert 1.5 < errs[1] / errs[2] < 2.5

    def test_deterministic_given_seed(self, bm2):
        g = Grid(17)
        a = simulate_sde(bm2, [1.0, -1.0], g, seed=42)
        b = simulate_sde(bm2, [1.0, -1.0], g, seed=42)
        c = simulate_sde(bm2, [1.0, -1.0], g, seed=43)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)

    def test_ensemble_variance_matches_kernel(self, bm1):
        # A=0, B=1: Var X(1) = 1 (Euler is exact for Brownian motion)
        grid = Grid(9)
        x = simulate_ensemble(bm1, [0.0], grid, n_paths=100_000, seed=3)
        var = x[:, -1, 0].var(ddof=1)
        stderr = var * np.sqrt(2.0 / (x.shape[0] - 1))
        assert abs(var - 1.0) < 3 * stderr


class TestSimulateJoint:
    def test_no_coupling_no_noise_gives_flat_y(self):
        obs = ObservationModel(a11=[[0.0]], a21=[[0.0]], b11=[[1e-5]], b22=[[1e-5]],
                               lam=[[1e-8]], x_minus=[0.0])
        _, y = simulate_joint_sde(obs, Grid(17), seed=5)
        assert np.abs(y.values).max() < 1e-4

    def test_y_variance_against_brute_force(self):
        # Var Y(1) for the discrete model, by direct enumeration of the
        # Euler recursion: Y(1) = h sum_j X_j + sqrt(h) sum xi^y with
        # Cov(X_i, X_j) = lam + min(i, j) h.
        obs = ObservationModel(a11=[[0.0]], a21=[[1.0]], b11=[[1.0]], b22=[[1.0]],
                               lam=[[1.0]], x_minus=[0.0])
        grid = Grid(51)
        h = grid.h
        n = 100_000
        # vectorised ensemble with the same update rule as simulate_joint_sde
        model, x0, _ = obs.stacked(0.0)
        rng = make_rng(123)
        j = grid.n_nodes
        x = np.zeros((n, 2))
        x[:, 0] = obs.x_minus[0] + rng.standard_normal(n)  # X0 ~ N(x-, 1)
        ysum = np.zeros(n)
        for _ in range(j - 1):
            xi = rng.standard_normal((n, 2))
            ysum += h * x[:, 0] + np.sqrt(h) * xi[:, 1]
            x[:, 0] = x[:, 0] + np.sqrt(h) * xi[:, 0]
        var_mc = ysum.var(ddof=1)
        idx = np.arange(j - 1)
        cov_x = 1.0 + np.minimum.outer(idx, idx) * h
        var_exact = h * h * cov_x.sum() + (j - 1) * h
        stderr = var_exact * np.sqrt(2.0 / (n - 1))
        assert abs(var_mc - var_exact) < 5 * stderr
        # and the grid model variance approaches the continuum kernel value
        kern = kernel_gaussian_left(model, x0, np.diag([1.0, 1e-10]))
        assert abs(var_exact - kern.cov(1.0, 1.0)[1, 1]) < 0.05

    def test_deterministic(self, obs_scalar):
        g = Grid(33)
        x1, y1 = simulate_joint_sde(obs_scalar, g, seed=9)
        x2, y2 = simulate_joint_sde(obs_scalar, g, seed=9)
        assert np.array_equal(x1.values, x2.values)
        assert np.array_equal(y1.values, y2.values)

    def test_initial_conditions(self, obs_scalar):
        g = Grid(9)
        draws = np.array([simulate_joint_sde(obs_scalar, g, seed=s)[0].values[0, 0]
                          for s in range(2000)])
        _, y = simulate_joint_sde(obs_scalar, g, seed=0)
        assert y.values[0, 0] == 0.0
        assert abs(draws.mean() - 0.5) < 5 / np.sqrt(2000)
        assert abs(draws.var(ddof=1) - 1.0) < 5 * np.sqrt(2.0 / 1999)


class TestGrid:
    def test_endpoints_exact(self):
        g = Grid(33)
        assert g.nodes[0] == 0.0 and g.nodes[-1] == 1.0
        assert np.allclose(np.diff(g.nodes), g.h, atol=1e-15)

    def test_rejects_tiny(self):
        with pytest.raises(ValueError):
            Grid(2)

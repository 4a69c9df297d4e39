import numpy as np
import pytest

from gausspaths import (Grid, LinearSdeModel, NumericalError, Path,
                        empirical_stats, kernel_bridge, kernel_fixed_left,
                        kernel_gaussian_left, make_rng, matrix_exp,
                        simulate_ensemble)
from conftest import stable_2x2


class TestFixedLeft:
    def test_brownian_motion(self, bm2):
        kern = kernel_fixed_left(bm2, [1.0, -2.0])
        for u, v in [(0.2, 0.7), (0.5, 0.5), (0.9, 0.1)]:
            assert np.abs(kern.cov(u, v) - min(u, v) * np.eye(2)).max() < 1e-13
            assert np.allclose(kern.mean(u), [1.0, -2.0], atol=1e-14)

    def test_ou_variance(self, ou):
        kern = kernel_fixed_left(ou, [0.0])
        for u in (0.1, 0.4, 1.0):
            assert abs(kern.cov(u, u)[0, 0] - (1 - np.exp(-2 * u))) < 1e-12

    def test_vanishes_at_left_end(self):
        kern = kernel_fixed_left(stable_2x2(2), [1.0, 1.0])
        for v in (0.0, 0.3, 1.0):
            assert np.abs(kern.cov(0.0, v)).max() < 1e-14

    def test_gram_matches_pointwise(self, ou):
        kern = kernel_fixed_left(ou, [1.0])
        us = Grid(7).nodes
        gram = kern.gram(us)
        for i, u in enumerate(us):
            for j, v in enumerate(us):
                assert abs(gram[i, j] - kern.cov(u, v)[0, 0]) < 1e-13


class TestGaussianLeft:
    def test_left_end_covariance_is_sigma_propagated(self):
        # cov(0, v) = Sigma e^{vA*}
        model = stable_2x2(4)
        sig = np.array([[0.5, 0.1], [0.1, 0.8]])
        kern = kernel_gaussian_left(model, [0.0, 0.0], sig)
        for v in (0.0, 0.4, 1.0):
            expected = sig @ matrix_exp(model.drift, v).T
            assert np.abs(kern.cov(0.0, v) - expected).max() < 1e-12

    def test_small_sigma_approaches_fixed_left(self):
        model = stable_2x2(8)
        eps = 1e-6
        kg = kernel_gaussian_left(model, [1.0, 0.0], eps * np.eye(2))
        kf = kernel_fixed_left(model, [1.0, 0.0])
        for u, v in [(0.3, 0.6), (0.8, 0.8)]:
            bound = eps * np.linalg.norm(matrix_exp(model.drift, u), 2) \
                * np.linalg.norm(matrix_exp(model.drift, v), 2)
            assert np.abs(kg.cov(u, v) - kf.cov(u, v)).max() <= bound + 1e-14

    def test_stationary_ou(self, ou):
        # Sigma = -A^{-1} BB*/2 = 1 makes the process stationary with
        # covariance e^{-|u-v|}
        kern = kernel_gaussian_left(ou, [0.0], [[1.0]])
        rng = make_rng(1)
        for _ in range(20):
            u, v = rng.uniform(0, 1, 2)
            assert abs(kern.cov(u, v)[0, 0] - np.exp(-abs(u - v))) < 1e-12

    def test_rejects_non_spd_sigma(self, ou):
        with pytest.raises(ValueError):
            kernel_gaussian_left(ou, [0.0], [[-1.0]])
        with pytest.raises(ValueError):
            kernel_gaussian_left(stable_2x2(0), [0.0, 0.0],
                                 [[1.0, 2.0], [0.0, 1.0]])


class TestBridge:
    def test_brownian_bridge(self, bm1):
        kern = kernel_bridge(bm1, [0.0], [2.0])
        for u, v in [(0.25, 0.75), (0.5, 0.5)]:
            assert abs(kern.cov(u, v)[0, 0] - (min(u, v) - u * v)) < 1e-13
            assert abs(kern.mean(u)[0] - 2.0 * u) < 1e-13

    def test_degenerate_at_both_ends(self):
        kern = kernel_bridge(stable_2x2(6), [1.0, 0.0], [0.0, 1.0])
        for v in (0.0, 0.37, 1.0):
            assert np.abs(kern.cov(0.0, v)).max() < 1e-12
            assert np.abs(kern.cov(1.0, v)).max() < 1e-12
            assert np.abs(kern.cov(v, 1.0)).max() < 1e-12

    def test_mean_hits_both_ends(self):
        model = stable_2x2(9)
        xm, xp = np.array([1.0, -1.0]), np.array([0.5, 2.0])
        kern = kernel_bridge(model, xm, xp)
        assert np.abs(kern.mean(0.0) - xm).max() < 1e-12
        assert np.abs(kern.mean(1.0) - xp).max() < 1e-12

    def test_gram_matches_pointwise(self):
        model = stable_2x2(10)
        kern = kernel_bridge(model, [1.0, 0.0], [0.0, 1.0])
        us = Grid(5).nodes
        gram = kern.gram(us)
        for i, u in enumerate(us):
            for j, v in enumerate(us):
                blk = gram[2 * i:2 * i + 2, 2 * j:2 * j + 2]
                assert np.abs(blk - kern.cov(u, v)).max() < 1e-12


class TestKernelProperties:
    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_symmetry(self, seed):
        model = stable_2x2(seed)
        kernels = [kernel_fixed_left(model, [1.0, 2.0]),
                   kernel_gaussian_left(model, [1.0, 2.0], 0.3 * np.eye(2)),
                   kernel_bridge(model, [1.0, 2.0], [0.0, 0.0])]
        rng = make_rng(100 + seed)
        for kern in kernels:
            for _ in range(100):
                u, v = rng.uniform(0, 1, 2)
                assert np.abs(kern.cov(u, v) - kern.cov(v, u).T).max() < 1e-10

    def test_gram_psd(self):
        model = stable_2x2(12)
        us = Grid(20).nodes
        for kern in (kernel_fixed_left(model, [0.0, 0.0]),
                     kernel_gaussian_left(model, [0.0, 0.0], np.eye(2)),
                     kernel_bridge(model, [0.0, 0.0], [1.0, 1.0])):
            gram = kern.gram(us)
            assert np.linalg.eigvalsh(gram).min() >= -1e-8 * np.linalg.norm(gram, 2)

    def test_derivative_jump_is_minus_diffusion(self, ou):
        # one-sided difference of d/du cov across the diagonal jumps by -BB*
        kern = kernel_fixed_left(ou, [0.0])
        bb = ou.diffusion[0, 0]
        h = 1e-5
        for v in (0.3, 0.6, 0.9):
            above = (kern.cov(v + h, v) - kern.cov(v, v))[0, 0] / h
            below = (kern.cov(v, v) - kern.cov(v - h, v))[0, 0] / h
            assert abs((above - below) - (-bb)) < 50 * h


class TestEmpiricalStats:
    def test_identical_paths_zero_cov(self, bm1):
        g = Grid(5)
        p = Path(g, np.ones((5, 1)))
        stats = empirical_stats([p, p, p], pairs=[(0, 4)])
        assert np.abs(stats.var).max() == 0.0
        assert np.abs(stats.pair_cov[(0, 4)]).max() == 0.0

    def test_two_scalar_paths(self, bm1):
        g = Grid(3)
        a = Path(g, np.zeros((3, 1)))
        b = Path(g, 2.0 * np.ones((3, 1)))
        stats = empirical_stats([a, b])
        assert np.allclose(stats.var, 2.0)          # divisor N-1 = 1
        assert np.allclose(stats.mean.values, 1.0)

    def test_monte_carlo_against_kernel(self, bm1):
        # Euler is exact for Brownian motion, so deviations are pure MC noise
        g = Grid(17)
        vals = simulate_ensemble(bm1, [0.0], g, n_paths=100_000, seed=21)
        paths = [Path(g, v) for v in vals[:2]]  # api smoke for Path inputs
        kern = kernel_fixed_left(bm1, [0.0])
        var = vals.var(axis=0, ddof=1)[:, 0]
        analytic = np.array([kern.cov(u, u)[0, 0] for u in g.nodes])
        stderr = np.maximum(analytic, 1e-12) * np.sqrt(2.0 / (vals.shape[0] - 1))
        ok = np.abs(var - analytic) <= 5 * stderr
        assert ok.mean() >= 0.95
        assert empirical_stats(paths).n_paths == 2

    def test_errors(self, bm1):
        g5, g7 = Grid(5), Grid(7)
        with pytest.raises(ValueError):
            empirical_stats([Path(g5, np.zeros((5, 1)))])
        with pytest.raises(ValueError):
            empirical_stats([Path(g5, np.zeros((5, 1))), Path(g7, np.zeros((7, 1)))])

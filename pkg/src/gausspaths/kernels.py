"""Analytic means and covariance kernels of the conditioned path measures.

For the linear SDE dX = A X du + B dW these are available in closed
form for three conditionings:

  fixed left point     m(u) = e^{uA} x-,   C0(u,v) = e^{uA} G(u^v) e^{vA*}
  Gaussian left point  same mean,          C(u,v)  = e^{uA} S e^{vA*} + C0(u,v)
  bridge               mean and covariance of C0 conditioned on the
                       right end-point (a Schur complement in disguise):
                       m~(u) = m(u) + C0(u,1) C0(1,1)^{-1} (x+ - m(1))
                       C~(u,v) = C0(u,v) - C0(u,1) C0(1,1)^{-1} C0(1,v)

Kernels are exposed as callables in (u, v); grid assembly happens in the
consumers.  `GaussKernel.gram` provides the assembled block matrix with
per-node caching so refinement studies stay cheap.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.linalg

from .model import (Grid, LinearSdeModel, NumericalError, Path, _as_vector,
                    _check_spd, gram_integral, matrix_exp)


class GaussKernel:
    """Mean function and covariance kernel of a Gaussian path measure.

    `mean(u)` returns a (d,) vector, `cov(u, v)` a (d, d) block, both for
    u, v in [0, 1].  `mean_on` and `gram` evaluate them on a node array,
    returning shapes (J, d) and (J*d, J*d) with node-major blocks.
    """

    def __init__(self, dim: int,
                 mean: Callable[[float], np.ndarray],
                 cov: Callable[[float, float], np.ndarray],
                 mean_on=None, gram=None):
        self.dim = dim
        self.mean = mean
        self.cov = cov
        self._mean_on = mean_on
        self._gram = gram

    def mean_on(self, us: np.ndarray) -> np.ndarray:
        us = np.asarray(us, dtype=float)
        if self._mean_on is not None:
            return self._mean_on(us)
        return np.stack([self.mean(u) for u in us])

    def gram(self, us: np.ndarray) -> np.ndarray:
        """Block matrix [cov(u_i, u_j)] flattened to (J*d, J*d)."""
        us = np.asarray(us, dtype=float)
        if self._gram is not None:
            return self._gram(us)
        j, d = len(us), self.dim
        blocks = np.empty((j, d, j, d))
        for p, u in enumerate(us):
            for q, v in enumerate(us):
                blocks[p, :, q, :] = self.cov(u, v)
        return blocks.reshape(j * d, j * d)


def _node_factors(model: LinearSdeModel, us: np.ndarray):
    """Per-node e^{uA} and G(u), stacked as (J, d, d) arrays."""
    es = np.stack([matrix_exp(model.drift, u) for u in us])
    gs = np.stack([gram_integral(model, u) for u in us])
    return es, gs


def _gram_left(model: LinearSdeModel, us: np.ndarray, sigma0: np.ndarray | None):
    """Assembled blocks e^{uA} (sigma0 + G(u^v)) e^{vA*}, shape (J, d, J, d)."""
    es, gs = _node_factors(model, us)
    idx = np.minimum.outer(np.arange(len(us)), np.arange(len(us)))
    core = gs[idx]
    if sigma0 is not None:
        core = core + sigma0
    return np.einsum("iab,ijbc,jdc->iajd", es, core, es)


def _left_kernel(model: LinearSdeModel, x_minus: np.ndarray,
                 sigma0: np.ndarray | None) -> GaussKernel:
    d = model.dim
    a = model.drift

    @lru_cache(maxsize=None)
    def phi(u: float) -> np.ndarray:
        return matrix_exp(a, u)

    @lru_cache(maxsize=None)
    def gram_t(u: float) -> np.ndarray:
        return gram_integral(model, u)

    def mean(u: float) -> np.ndarray:
        return phi(u) @ x_minus

    def cov(u: float, v: float) -> np.ndarray:
        core = gram_t(min(u, v))
        if sigma0 is not None:
            core = core + sigma0
        return phi(u) @ core @ phi(v).T

    def mean_on(us: np.ndarray) -> np.ndarray:
        return np.stack([phi(u) @ x_minus for u in us])

    def gram(us: np.ndarray) -> np.ndarray:
        j = len(us)
        return _gram_left(model, us, sigma0).reshape(j * d, j * d)

    return GaussKernel(d, mean, cov, mean_on=mean_on, gram=gram)


def kernel_fixed_left(model: LinearSdeModel, x_minus) -> GaussKernel:
    """Kernel of the SDE started at the known point X(0) = x_minus.

    mean(u) = e^{uA} x-,  cov(u, v) = e^{uA} G(u^v) e^{vA*}; in particular
    cov(0, v) = 0 for every v.
    """
    x_minus = _as_vector(x_minus, model.dim, "x_minus")
    return _left_kernel(model, x_minus, None)


def kernel_gaussian_left(model: LinearSdeModel, x_minus, sigma) -> GaussKernel:
    """Kernel of the SDE started at X(0) ~ N(x_minus, sigma), sigma SPD."""
    x_minus = _as_vector(x_minus, model.dim, "x_minus")
    sigma = np.array(sigma, dtype=float)
    _check_spd(sigma, "sigma")
    return _left_kernel(model, x_minus, sigma)


def kernel_bridge(model: LinearSdeModel, x_minus, x_plus) -> GaussKernel:
    """Kernel of the SDE pinned at both ends X(0) = x-, X(1) = x+.

    Conditioning the fixed-left process on its value at u = 1 gives

        mean(u) = m(u) + C0(u,1) C0(1,1)^{-1} (x+ - m(1)),
        cov(u,v) = C0(u,v) - C0(u,1) C0(1,1)^{-1} C0(1,v),

    so cov vanishes identically whenever u or v hits an end-point.
    C0(1,1)^{-1} is applied through a Cholesky solve, never formed.
    """
    d = model.dim
    x_minus = _as_vector(x_minus, d, "x_minus")
    x_plus = _as_vector(x_plus, d, "x_plus")
    base = _left_kernel(model, x_minus, None)
    e1 = matrix_exp(model.drift, 1.0)
    c11 = e1 @ gram_integral(model, 1.0) @ e1.T
    try:
        c11_fac = scipy.linalg.cho_factor(c11)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"C0(1,1) is singular: {exc}") from None

    @lru_cache(maxsize=None)
    def col1(u: float) -> np.ndarray:
        # C0(u, 1) = e^{uA} G(u) e^{A*}
        return base.cov(u, 1.0)

    w = scipy.linalg.cho_solve(c11_fac, x_plus - base.mean(1.0))

    def mean(u: float) -> np.ndarray:
        return base.mean(u) + col1(u) @ w

    def cov(u: float, v: float) -> np.ndarray:
        return base.cov(u, v) - col1(u) @ scipy.linalg.cho_solve(c11_fac, col1(v).T)

    def mean_on(us: np.ndarray) -> np.ndarray:
        return np.stack([mean(u) for u in us])

    def gram(us: np.ndarray) -> np.ndarray:
        j = len(us)
        blocks = _gram_left(model, us, None)
        c1 = np.stack([col1(u) for u in us])          # (J, d, d): C0(u_i, 1)
        rhs = np.concatenate([c1[i].T for i in range(j)], axis=1)
        sol = scipy.linalg.cho_solve(c11_fac, rhs)     # C0(1,1)^{-1} C0(1, u_j)
        s = sol.reshape(d, j, d).transpose(1, 0, 2)
        blocks = blocks - np.einsum("iab,jbc->iajc", c1, s)
        return blocks.reshape(j * d, j * d)

    return GaussKernel(d, mean, cov, mean_on=mean_on, gram=gram)


@dataclass(frozen=True)
class EmpiricalStats:
    """Monte Carlo path statistics with divisor N-1 and normal-theory errors."""

    mean: Path
    mean_stderr: np.ndarray
    var: np.ndarray
    var_stderr: np.ndarray
    pair_cov: dict
    n_paths: int


def empirical_stats(paths, pairs=()) -> EmpiricalStats:
    """Sample mean/variance over an ensemble plus covariance blocks.

    `paths` is a sequence of `Path` on identical grids (at least two);
    `pairs` lists (i, j) node index pairs for which the (d, d) sample
    cross-covariance block is returned.
    """
    paths = list(paths)
    if len(paths) < 2:
        raise ValueError("need at least 2 paths")
    grid = paths[0].grid
    for p in paths[1:]:
        if p.grid != grid:
            raise ValueError("paths live on mismatched grids")
    x = np.stack([p.values for p in paths])           # (N, J, d)
    n = x.shape[0]
    mean = x.mean(axis=0)
    resid = x - mean
    var = (resid ** 2).sum(axis=0) / (n - 1)
    mean_stderr = np.sqrt(var / n)
    var_stderr = var * np.sqrt(2.0 / (n - 1))
    pair_cov = {}
    for (i, j) in pairs:
        pair_cov[(i, j)] = resid[:, i, :].T @ resid[:, j, :] / (n - 1)
    return EmpiricalStats(Path(grid, mean), mean_stderr, var, var_stderr,
                          pair_cov, n)

"""Finite-dimensional Gaussian conditioning by Schur complement.

Brute-force ground truth for everything else in the package: given a
joint Gaussian (X1, X2) with mean (m1, m2) and covariance blocks Cij,
the conditional law of X1 given X2 = x2 is Gaussian with

    mean   m1 + C12 C22^{-1} (x2 - m2),
    cov    C11 - C12 C22^{-1} C21.

`schur_condition` realises this on explicit vectors/matrices (C22^{-1}
through a symmetric eigen pseudo-solve with a documented cutoff), and
`kalman_posterior_oracle` applies it to the stacked signal/observation
system on a grid, conditioning on all observed nodes — the reference
the Kalman sweep and the posterior-mean BVP are checked against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import kernel_gaussian_left
from .model import Grid, NumericalError, ObservationModel, Path


@dataclass(frozen=True)
class JointGaussian:
    """Joint Gaussian with an index partition into inferred/observed blocks.

    `block2` lists the observed indices; the inferred block is its
    complement, kept in increasing index order.
    """

    mean: np.ndarray
    cov: np.ndarray
    block2: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, float))
        cov = np.asarray(self.cov, float)
        n = mean.shape[0]
        if cov.shape != (n, n):
            raise ValueError(f"cov must be ({n}, {n}), got {cov.shape}")
        scale = max(np.abs(cov).max(), 1.0)
        if np.abs(cov - cov.T).max() > 1e-10 * scale:
            raise ValueError("cov must be symmetric to 1e-10")
        wmin = np.linalg.eigvalsh(cov).min()
        if wmin < -1e-8 * np.linalg.norm(cov, 2):
            raise NumericalError(f"joint covariance is indefinite (min eig {wmin:.3e})")
        block2 = np.asarray(self.block2, dtype=int).reshape(-1)
        if block2.size and (block2.min() < 0 or block2.max() >= n):
            raise ValueError("block2 indices out of range")
        if len(np.unique(block2)) != len(block2):
            raise ValueError("block2 indices must be unique")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "block2", block2)

    @property
    def block1(self) -> np.ndarray:
        mask = np.ones(len(self.mean), dtype=bool)
        mask[self.block2] = False
        return np.nonzero(mask)[0]


def schur_condition(joint: JointGaussian, observed: np.ndarray,
                    rcond: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Condition block 1 on observed block-2 values.

    C22 is inverted through its eigendecomposition; eigenvalues below
    ``rcond * largest`` are treated as exact zeros (pseudo-inverse), and
    an indefinite or fully degenerate C22 raises.  An empty block 2
    returns the prior marginal unchanged.
    """
    i1, i2 = joint.block1, joint.block2
    m1 = joint.mean[i1]
    c11 = joint.cov[np.ix_(i1, i1)]
    if i2.size == 0:
        return m1.copy(), c11.copy()
    observed = np.atleast_1d(np.asarray(observed, float))
    if observed.shape != (i2.size,):
        raise ValueError(f"observed must have shape ({i2.size},), got {observed.shape}")
    c22 = joint.cov[np.ix_(i2, i2)]
    c12 = joint.cov[np.ix_(i1, i2)]
    w, v = np.linalg.eigh(0.5 * (c22 + c22.T))
    wmax = w.max(initial=0.0)
    if wmax <= 0.0:
        raise NumericalError("C22 has no positive eigenvalue")
    if w.min() < -1e-8 * wmax:
        raise NumericalError(f"C22 is indefinite (min eig {w.min():.3e})")
    keep = w > rcond * wmax
    if not keep.any():
        raise NumericalError("C22 is numerically singular beyond the tolerance")
    winv = np.where(keep, 1.0 / np.where(keep, w, 1.0), 0.0)

    def pinv_apply(rhs):
        return v @ (winv[:, None] * (v.T @ rhs)) if rhs.ndim == 2 \
            else v @ (winv * (v.T @ rhs))

    mean = m1 + c12 @ pinv_apply(observed - joint.mean[i2])
    cov = c11 - c12 @ pinv_apply(c12.T)
    return mean, 0.5 * (cov + cov.T)


def kalman_posterior_oracle(obs: ObservationModel, grid: Grid, y_path: Path,
                            eps: float = 1e-8, rcond: float = 1e-10
                            ) -> tuple[Path, np.ndarray]:
    """Posterior of the signal given all observed nodes, by brute force.

    Builds the joint grid Gaussian of the stacked (signal, observation)
    system from the Gaussian-left-end kernel with initial covariance
    blockdiag(lam, eps I) — eps regularises the degenerate Y(0) = 0 —
    then conditions on every Y node.  Returns the posterior mean over the
    signal nodes and the full posterior covariance of the signal block.
    """
    if y_path.grid != grid:
        raise ValueError("y_path grid does not match the requested grid")
    if y_path.dim != obs.dim_y:
        raise ValueError("y_path dimension does not match the observation model")
    model, x0, sig = obs.stacked(eps)
    kern = kernel_gaussian_left(model, x0, sig)
    us = grid.nodes
    mean = kern.mean_on(us).reshape(-1)
    gram = kern.gram(us)
    m, n = obs.dim_x, obs.dim_y
    d = m + n
    node_offsets = np.arange(grid.n_nodes) * d
    block2 = (node_offsets[:, None] + np.arange(m, d)[None, :]).reshape(-1)
    joint = JointGaussian(mean, gram, block2)
    post_mean, post_cov = schur_condition(joint, y_path.values.reshape(-1), rcond=rcond)
    return Path(grid, post_mean.reshape(grid.n_nodes, m)), post_cov

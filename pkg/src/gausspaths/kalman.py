"""Kalman-Bucy filter/smoother via forward Riccati and backward sweep.

The smoothing mean E(X(u) | Y on [0,1]) is computed the classical way:

  forward Riccati   dS/du = A11 S + S A11* - S A21* S2 A21 S + B11 B11*,
                    S(0) = lam,
  forward filter    dXh/du = (A11 - S A21* S2 A21) Xh + S A21* S2 dY/du,
                    Xh(0) = x-,
  backward smoother dXt/du = A11 Xt + B11 B11* S^{-1} (Xt - Xh),
                    Xt(1) = Xh(1),

with S2 = (B22 B22*)^{-1}.  This factorises the same two-point boundary
value problem the posterior-mean operator solves, so the sweep output is
an independent oracle for `solve_mean_bvp` on observation conditionings.

All three sweeps use fixed-step RK4 on the sampler grid (midpoint stages
take averaged node values), and dY enters as the piecewise-constant
increment density (Y_{j+1} - Y_j)/h on [u_j, u_{j+1}] — the same data
functional the operator source uses.  S^{-1} is applied by solves only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Grid, NumericalError, ObservationModel, Path


@dataclass(frozen=True)
class RiccatiSolution:
    """Filter covariance S(u_j) at every grid node, shape (J, m, m)."""

    grid: Grid
    s: np.ndarray

    def __post_init__(self):
        if self.s.ndim != 3 or self.s.shape[0] != self.grid.n_nodes:
            raise ValueError("S must have shape (n_nodes, m, m)")


def riccati_forward(obs: ObservationModel, grid: Grid) -> RiccatiSolution:
    """Integrate the filter covariance ODE from S(0) = lam with RK4.

    The iterate is symmetrised every step and positive definiteness is
    checked; losing it raises (it cannot happen for exact dynamics with
    SPD lam, so it flags a too-coarse grid or bad model scaling).
    """
    m = obs.dim_x
    c = obs.a21.T @ obs.sigma2() @ obs.a21
    q = obs.b11 @ obs.b11.T
    a = obs.a11

    def f(s):
        return a @ s + s @ a.T - s @ c @ s + q

    h = grid.h
    out = np.empty((grid.n_nodes, m, m))
    out[0] = obs.lam
    s = obs.lam.copy()
    for j in range(grid.n_nodes - 1):
        k1 = f(s)
        k2 = f(s + 0.5 * h * k1)
        k3 = f(s + 0.5 * h * k2)
        k4 = f(s + h * k3)
        s = s + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        s = 0.5 * (s + s.T)
        if np.linalg.eigvalsh(s).min() <= 0.0:
            raise NumericalError(f"Riccati solution lost positive definiteness at node {j + 1}")
        out[j + 1] = s
    return RiccatiSolution(grid, out)


def filter_forward(obs: ObservationModel, s: RiccatiSolution, y_path: Path) -> Path:
    """Filtering mean Xh(u) = E(X(u) | Y up to u), driven by Y increments."""
    if y_path.grid != s.grid:
        raise ValueError("y_path and Riccati solution grids differ")
    if y_path.dim != obs.dim_y:
        raise ValueError("y_path dimension does not match the observation model")
    grid = s.grid
    h = grid.h
    c = obs.a21.T @ obs.sigma2() @ obs.a21
    w = obs.a21.T @ obs.sigma2()
    a = obs.a11

    def f(sj, x, dens):
        return (a - sj @ c) @ x + sj @ (w @ dens)

    out = np.empty((grid.n_nodes, obs.dim_x))
    out[0] = obs.x_minus
    x = obs.x_minus.copy()
    sval = s.s
    for j in range(grid.n_nodes - 1):
        dens = (y_path.values[j + 1] - y_path.values[j]) / h
        smid = 0.5 * (sval[j] + sval[j + 1])
        k1 = f(sval[j], x, dens)
        k2 = f(smid, x + 0.5 * h * k1, dens)
        k3 = f(smid, x + 0.5 * h * k2, dens)
        k4 = f(sval[j + 1], x + h * k3, dens)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[j + 1] = x
    return Path(grid, out)


def smooth_backward(obs: ObservationModel, s: RiccatiSolution, xhat: Path) -> Path:
    """Smoothing mean Xt(u) = E(X(u) | all of Y) by the backward sweep."""
    if xhat.grid != s.grid:
        raise ValueError("filter path and Riccati solution grids differ")
    grid = s.grid
    h = grid.h
    q = obs.b11 @ obs.b11.T
    a = obs.a11

    def f(sj, x, xh):
        try:
            return a @ x + q @ np.linalg.solve(sj, x - xh)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"singular filter covariance in backward sweep: {exc}") from None

    out = np.empty_like(xhat.values)
    out[-1] = xhat.values[-1]
    x = xhat.values[-1].copy()
    sval = s.s
    xh = xhat.values
    for j in range(grid.n_nodes - 2, -1, -1):
        smid = 0.5 * (sval[j] + sval[j + 1])
        xh_mid = 0.5 * (xh[j] + xh[j + 1])
        k1 = f(sval[j + 1], x, xh[j + 1])
        k2 = f(smid, x - 0.5 * h * k1, xh_mid)
        k3 = f(smid, x - 0.5 * h * k2, xh_mid)
        k4 = f(sval[j], x - h * k3, xh[j])
        x = x - (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[j] = x
    return Path(grid, out)


def smoother_boundary_residuals(obs: ObservationModel, s: RiccatiSolution,
                                xtilde: Path) -> tuple[float, float]:
    """Defects of the posterior BVP boundary conditions on the sweep output.

    Left:  d/du Xt(0) - A11 Xt(0) - B11 B11* lam^{-1} (Xt(0) - x-),
    right: d/du Xt(1) - A11 Xt(1),
    both with one-sided first differences; each is O(h) for the exact
    smoother, so the returned pair quantifies the discretisation error.
    """
    grid = xtilde.grid
    h = grid.h
    xt = xtilde.values
    prec = (obs.b11 @ obs.b11.T) @ np.linalg.solve(obs.lam, np.eye(obs.dim_x))
    left = (xt[1] - xt[0]) / h - obs.a11 @ xt[0] - prec @ (xt[0] - obs.x_minus)
    right = (xt[-1] - xt[-2]) / h - obs.a11 @ xt[-1]
    return float(np.abs(left).max()), float(np.abs(right).max())

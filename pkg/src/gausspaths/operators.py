"""Grid discretisation of the second-order operator behind each sampler.

The drift operator of the path-space Langevin equation is

    L = (d/du + A*) (BB*)^{-1} (d/du - A),

equipped with boundary rows that encode the conditioning: Dirichlet rows
for pinned end-points, Robin rows (derivative = drift + end-point
precision term) for free or Gaussian end-points.  The negative inverse
of the assembled operator reproduces the covariance kernel: the kernel
is the Green's function of -L under those boundary conditions, which
`greens_residual` checks directly.

Discretisation: interior rows use (D+ + A*) (BB*)^{-1} (D- - A) with
forward/backward first differences, whose product gives the symmetric
second-difference leading term; boundary rows use first-order one-sided
differences (the dominant O(h) error term).  Dirichlet conditions are
identity rows with known values moved to the right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from .dynamics import drift_from_observation
from .model import (Bridge, Conditioning, FixedLeft, GaussianLeft, Grid,
                    LinearSdeModel, NumericalError, Observation,
                    ObservationModel, Path)


@dataclass(frozen=True)
class BoundaryRow:
    """Descriptor of one boundary row.

    kind "dirichlet": row is the identity, `data` the pinned value.
    kind "robin": row is the one-sided difference of d/du - R, `data`
    the inhomogeneity of the condition (d/du - R) x = data.
    """

    kind: str
    data: np.ndarray
    zero_coef: np.ndarray | None = None


class DiscreteOperator:
    """Block-tridiagonal discretisation of L with its boundary rows.

    The matrix is stored dense (grids are small); an LU factorisation is
    taken at assembly, which doubles as the required invertibility check,
    and is reused by every solve.  Instances are immutable apart from
    private solver caches and safe to share across threads.
    """

    def __init__(self, grid: Grid, block_dim: int, matrix: np.ndarray,
                 bc_left: BoundaryRow, bc_right: BoundaryRow, gen_parts=None):
        self.grid = grid
        self.block_dim = block_dim
        self.matrix = matrix
        self.bc_left = bc_left
        self.bc_right = bc_right
        try:
            self._lu = scipy.linalg.lu_factor(matrix)
        except scipy.linalg.LinAlgError as exc:
            raise NumericalError(f"operator matrix is singular: {exc}") from None
        rcond = lapack.dgecon(self._lu[0], np.linalg.norm(matrix, 1))[0]
        if not np.isfinite(rcond) or rcond == 0.0:
            raise NumericalError("operator matrix is numerically singular")
        self._gen_parts = gen_parts
        self._generator = None
        self._chain_cache: dict = {}

    @property
    def size(self) -> int:
        return self.grid.n_nodes * self.block_dim

    @property
    def dirichlet_left(self) -> bool:
        return self.bc_left.kind == "dirichlet"

    @property
    def dirichlet_right(self) -> bool:
        return self.bc_right.kind == "dirichlet"

    @property
    def interior_dof(self) -> np.ndarray:
        """Degrees of freedom at interior nodes 1..J-2."""
        d = self.block_dim
        return np.arange(d, self.size - d)

    @property
    def free_dof(self) -> np.ndarray:
        """Degrees of freedom not pinned by a Dirichlet row."""
        lo = self.block_dim if self.dirichlet_left else 0
        hi = self.size - self.block_dim if self.dirichlet_right else self.size
        return np.arange(lo, hi)

    def chain_generator(self) -> np.ndarray:
        """Symmetric realisation of L on the free degrees of freedom.

        Time-stepping the one-sided boundary rows as dynamics perturbs
        the invariant covariance at a Robin end by O(1), so the chain
        uses the variational form instead: -P/h with P the free-node
        Hessian of the discrete energy

            h sum_j |(x_j - x_{j-1})/h - A x_j|^2_{(BB*)^{-1}}
              (+ end-point precision and observation terms),

        whose interior rows coincide exactly with the assembled stencil
        and whose boundary rows encode the same Robin conditions as
        natural boundary conditions.  With white noise of covariance I/h
        on every free node the chain's invariant covariance is exactly
        P^{-1}, the discrete-model covariance (an O(h) approximation of
        the kernel Gram matrix).
        """
        if self._generator is not None:
            return self._generator
        if self._gen_parts is None:
            raise NumericalError("operator was built without generator ingredients")
        sb, a, left_prec, data_diag = self._gen_parts
        j, d, h = self.grid.n_nodes, self.block_dim, self.grid.h
        cl_ll = sb / h
        cl_lr = -sb / h + sb @ a
        cl_rr = sb / h - sb @ a - a.T @ sb + h * a.T @ sb @ a
        p = np.zeros((j * d, j * d))
        for k in range(1, j):
            lo, hi = (k - 1) * d, k * d
            p[lo:hi, lo:hi] += cl_ll
            p[lo:hi, hi:hi + d] += cl_lr
            p[hi:hi + d, lo:hi] += cl_lr.T
            p[hi:hi + d, hi:hi + d] += cl_rr
        if left_prec is not None:
            p[:d, :d] += left_prec
        if data_diag is not None:
            for k in range(j):
                w = h if 0 < k < j - 1 else 0.5 * h
                p[k * d:(k + 1) * d, k * d:(k + 1) * d] += w * data_diag
        free = self.free_dof
        gen = -p[np.ix_(free, free)] / h
        self._generator = 0.5 * (gen + gen.T)
        return self._generator

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(x, float).reshape(-1)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return scipy.linalg.lu_solve(self._lu, np.asarray(rhs, float).reshape(-1))

    def to_sparse_text(self, path) -> None:
        """Dump nonzeros as text lines ``row col value`` (0-based indices).

        First line is a comment ``# nrows ncols nnz``.
        """
        rows, cols = np.nonzero(self.matrix)
        with open(path, "w") as fh:
            fh.write(f"# {self.size} {self.size} {len(rows)}\n")
            for i, j in zip(rows, cols):
                fh.write(f"{i} {j} {self.matrix[i, j]:.17g}\n")


def _interior_blocks(sb: np.ndarray, a: np.ndarray, h: float,
                     diag_extra: np.ndarray | None = None):
    """Stencil blocks of (D+ + A*) Sb (D- - A) on sub/diag/super positions."""
    sub = sb / h ** 2 - a.T @ sb / h
    sup = sb / h ** 2 - sb @ a / h
    diag = -2.0 * sb / h ** 2 + (sb @ a + a.T @ sb) / h - a.T @ sb @ a
    if diag_extra is not None:
        diag = diag + diag_extra
    return sub, diag, sup


def _assemble(grid: Grid, d: int, sb: np.ndarray, a: np.ndarray,
              diag_extra, bc_left: BoundaryRow, bc_right: BoundaryRow,
              gen_parts=None) -> DiscreteOperator:
    j, h = grid.n_nodes, grid.h
    sub, diag, sup = _interior_blocks(sb, a, h, diag_extra)
    m = np.zeros((j * d, j * d))
    for k in range(1, j - 1):
        r = k * d
        m[r:r + d, r - d:r] = sub
        m[r:r + d, r:r + d] = diag
        m[r:r + d, r + d:r + 2 * d] = sup
    eye = np.eye(d)
    if bc_left.kind == "dirichlet":
        m[:d, :d] = eye
    else:
        m[:d, :d] = -eye / h - bc_left.zero_coef
        m[:d, d:2 * d] = eye / h
    last = (j - 1) * d
    if bc_right.kind == "dirichlet":
        m[last:, last:] = eye
    else:
        m[last:, last:] = eye / h - bc_right.zero_coef
        m[last:, last - d:last] = -eye / h
    return DiscreteOperator(grid, d, m, bc_left, bc_right, gen_parts=gen_parts)


def assemble_operator(model: LinearSdeModel | None, cond: Conditioning,
                      grid: Grid) -> DiscreteOperator:
    """Assemble the homogeneous operator for one conditioning.

    Inhomogeneous boundary data (and, for observations, the data source
    term) are kept out of the matrix and applied by `solve_mean_bvp`.
    """
    if isinstance(cond, Observation):
        return assemble_kalman_operator(cond.obs, grid)
    if model is None:
        raise ValueError("model is required for end-point conditionings")
    d = model.dim
    a = model.drift
    bb = model.diffusion
    sb = np.linalg.solve(bb, np.eye(d))
    zero = np.zeros(d)
    left_prec = None
    if isinstance(cond, FixedLeft):
        _require_dim(cond.x_minus, d)
        left = BoundaryRow("dirichlet", cond.x_minus.copy())
        right = BoundaryRow("robin", zero, a)
    elif isinstance(cond, GaussianLeft):
        _require_dim(cond.x_minus, d)
        left_prec = np.linalg.solve(cond.sigma, np.eye(d))
        prec = bb @ left_prec
        left = BoundaryRow("robin", -prec @ cond.x_minus, a + prec)
        right = BoundaryRow("robin", zero, a)
    elif isinstance(cond, Bridge):
        _require_dim(cond.x_minus, d)
        left = BoundaryRow("dirichlet", cond.x_minus.copy())
        right = BoundaryRow("dirichlet", cond.x_plus.copy())
    else:
        raise ValueError(f"unsupported conditioning {type(cond).__name__}")
    return _assemble(grid, d, sb, a, None, left, right,
                     gen_parts=(sb, a, left_prec, None))


def assemble_kalman_operator(obs: ObservationModel, grid: Grid) -> DiscreteOperator:
    """Operator acting on the signal block given an observed companion path.

    Interior rows discretise (D+ + A11*) S1 (D- - A11) - A21* S2 A21 with
    S1 = (B11 B11*)^{-1}, S2 = (B22 B22*)^{-1}; both boundary rows are
    Robin, the left one carrying the prior precision B11 B11* lam^{-1}.
    """
    m = obs.dim_x
    s1 = obs.sigma1()
    s2 = obs.sigma2()
    data_diag = obs.a21.T @ s2 @ obs.a21
    lam_inv = np.linalg.solve(obs.lam, np.eye(m))
    prec = (obs.b11 @ obs.b11.T) @ lam_inv
    left = BoundaryRow("robin", -prec @ obs.x_minus, obs.a11 + prec)
    right = BoundaryRow("robin", np.zeros(m), obs.a11)
    return _assemble(grid, m, s1, obs.a11, -data_diag, left, right,
                     gen_parts=(s1, obs.a11, lam_inv, data_diag))


def _require_dim(v: np.ndarray, d: int) -> None:
    if v.shape != (d,):
        raise ValueError(f"conditioning dimension {v.shape} does not match model dimension {d}")


def greens_residual(op: DiscreteOperator, kernel) -> float:
    """Max-abs defect of the Green's-function identity for -L.

    Assembles K = [cov(u_i, u_j)] and returns the larger of

      * interior rows of  L (h K) + I   (delta identity, delta = e_k/h),
      * boundary rows of  L K           (homogeneous conditions on the
        kernel columns, unscaled),

    restricted to columns at interior nodes.  The residual tends to zero
    under refinement exactly when operator and kernel belong to the same
    conditioning; a mismatched pair leaves an O(1) boundary defect.
    """
    d = op.block_dim
    if kernel.dim != d:
        raise ValueError("kernel and operator dimensions differ")
    us = op.grid.nodes
    k = kernel.gram(us)
    h = op.grid.h
    inner = op.interior_dof
    res = op.matrix @ (k * h) + np.eye(op.size)
    interior_res = np.abs(res[inner]).max()
    brows = np.concatenate([np.arange(d), np.arange(op.size - d, op.size)])
    bres = np.abs((op.matrix[brows] @ k)[:, inner]).max()
    return max(interior_res, bres)


def solve_mean_bvp(op: DiscreteOperator, model_or_obs, cond: Conditioning,
                   grid: Grid) -> Path:
    """Stationary mean: solve the discrete BVP with the inhomogeneous data.

    Interior rows carry -g (zero except for observation conditionings,
    where g is the data source from `drift_from_observation`); boundary
    rows carry the conditioning's end-point data.
    """
    if grid != op.grid:
        raise ValueError("operator and grid mismatch")
    d = op.block_dim
    rhs = np.zeros(op.size)
    rhs[:d] = op.bc_left.data
    rhs[-d:] = op.bc_right.data
    if isinstance(cond, Observation):
        g = drift_from_observation(cond.obs, cond.y_path, grid)
        rhs[d:-d] -= g.values[1:-1].reshape(-1)
        return _solve_observation_bvp(op, cond, grid, rhs)
    if isinstance(cond, Bridge):
        if not (op.dirichlet_left and op.dirichlet_right):
            raise ValueError("operator boundary rows do not match a bridge conditioning")
    if isinstance(cond, (FixedLeft, GaussianLeft)):
        want_left = "dirichlet" if isinstance(cond, FixedLeft) else "robin"
        if op.bc_left.kind != want_left or op.dirichlet_right:
            raise ValueError("operator boundary rows do not match the conditioning")
    try:
        sol = op.solve(rhs)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"mean BVP solve failed: {exc}") from None
    return Path(grid, sol.reshape(grid.n_nodes, d))


def _solve_observation_bvp(op: DiscreteOperator, cond: Observation, grid: Grid,
                           rhs: np.ndarray) -> Path:
    """Observation BVP with first-order-consistent boundary data.

    A one-sided difference over the end cell reads x'(edge) plus
    (h/2) x'' there, and for the posterior mean x'' carries the raw data
    density dY/du = O(h^{-1/2}).  Fold that truncation term into the
    boundary data: the data part directly, the smooth part
    x''_s = S1^{-1} [(S1 A - A* S1) x' + (A* S1 A + A21* S2 A21) x]
    through one defect-correction pass on a first solve (the cached
    factorisation makes the second solve free).  Without the correction
    the boundary rows would leave an O(h^{1/2}) defect against the
    Kalman sweep instead of O(h).
    """
    obs = cond.obs
    d = op.block_dim
    h = grid.h
    s1 = obs.sigma1()
    s1inv = obs.b11 @ obs.b11.T
    a = obs.a11
    w = obs.a21.T @ obs.sigma2()
    smooth = a.T @ s1 @ a + obs.a21.T @ obs.sigma2() @ obs.a21
    asym = s1 @ a - a.T @ s1
    prec = s1inv @ np.linalg.solve(obs.lam, np.eye(d))
    dy = np.diff(cond.y_path.values, axis=0)
    rhs0 = rhs.copy()
    rhs0[:d] -= 0.5 * s1inv @ (w @ dy[0])
    rhs0[-d:] += 0.5 * s1inv @ (w @ dy[-1])
    try:
        m0 = op.solve(rhs0).reshape(grid.n_nodes, d)
        xp0 = a @ m0[0] + prec @ (m0[0] - obs.x_minus)
        xp1 = a @ m0[-1]
        x2_left = s1inv @ (-w @ dy[0] / h + asym @ xp0 + smooth @ m0[0])
        x2_right = s1inv @ (-w @ dy[-1] / h + asym @ xp1 + smooth @ m0[-1])
        rhs[:d] += 0.5 * h * x2_left
        rhs[-d:] -= 0.5 * h * x2_right
        sol = op.solve(rhs)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"mean BVP solve failed: {exc}") from None
    return Path(grid, sol.reshape(grid.n_nodes, d))

"""Time-stepping samplers for the discretised path-space Langevin equation.

Three samplers target the same discrete Gaussian measure N(M, C):

  theta_step    implicit theta-method step of dx/dt = L x - L M + sqrt(2) dw
                driven by discrete white noise (covariance I/h per node);
  precond_step  theta-method step of the preconditioned equation
                dx/dt = -x + M + sqrt(2 C) dw, whose noise already carries
                the target covariance — with theta = 1/2, dt = 2 every
                step is an independent exact draw;
  kl_sampler    direct Karhunen-Loeve draws mean + sum alpha_n sqrt(lam_n) phi_n.

`mh_adjust` wraps any proposal with a Metropolis-Hastings accept/reject
so the chain preserves its target exactly.

Conventions: Dirichlet nodes are pinned at their boundary values and
excluded from noise and solve; every free node carries white noise of
covariance I/h (identity covariance in the grid's weighted inner
product).  The drift matrix of the chain is the operator's symmetric
free-node realisation (`DiscreteOperator.chain_generator`), whose
interior rows equal the assembled stencil; see its docstring for why
the one-sided boundary rows cannot be time-stepped directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .model import Grid, NumericalError, ObservationModel, Path, make_rng


@dataclass(frozen=True)
class SamplerConfig:
    """Knobs of one chain run.

    theta in [1/2, 1] keeps the implicit map well-defined; burn_in and
    thin control which steps the running statistics absorb.
    """

    theta: float
    dt: float
    n_steps: int
    burn_in: int = 0
    seed: int = 0
    thin: int = 1

    def __post_init__(self):
        if not 0.5 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0.5, 1], got {self.theta}")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.burn_in < 0 or self.n_steps < 0:
            raise ValueError("burn_in and n_steps must be nonnegative")


class RunningStats:
    """Streaming mean / second-moment / lag-1 accumulator per grid value."""

    def __init__(self, shape):
        self.count = 0
        self.mean = np.zeros(shape)
        self._m2 = np.zeros(shape)
        self._prev = None
        self._cross = np.zeros(shape)
        self._sum_a = np.zeros(shape)
        self._sum_b = np.zeros(shape)
        self.pairs = 0

    def absorb(self, x: np.ndarray) -> None:
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self._m2 += delta * (x - self.mean)
        if self._prev is not None:
            self._cross += self._prev * x
            self._sum_a += self._prev
            self._sum_b += x
            self.pairs += 1
        self._prev = x.copy()

    def variance(self) -> np.ndarray:
        if self.count < 2:
            return np.full_like(self.mean, np.nan)
        return self._m2 / (self.count - 1)

    def lag1_autocorr(self) -> np.ndarray:
        """Lag-1 sample autocorrelation of the absorbed sequence."""
        if self.pairs < 2:
            return np.full_like(self.mean, np.nan)
        m = self.mean
        cov = (self._cross - m * self._sum_a - m * self._sum_b
               + self.pairs * m * m) / self.pairs
        var = self.variance()
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(var > 0, cov / var, np.nan)


@dataclass
class ChainState:
    """Mutable state of one chain: current path, RNG and running statistics."""

    grid: Grid
    x: np.ndarray
    rng: np.random.Generator
    step_index: int = 0
    stats: RunningStats = None
    proposed: int = 0
    accepted: int = 0
    last_log_alpha: float = np.nan

    @property
    def path(self) -> Path:
        return Path(self.grid, self.x.copy())

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else np.nan

    def advance(self, x_new: np.ndarray, cfg: SamplerConfig) -> None:
        self.x = x_new
        self.step_index += 1
        k = self.step_index - cfg.burn_in
        if k > 0 and k % cfg.thin == 0:
            self.stats.absorb(x_new)


def init_chain(x0: Path, seed: int) -> ChainState:
    """Fresh chain at `x0` with its own counter-based RNG stream."""
    x = x0.values.copy()
    return ChainState(x0.grid, x, make_rng(seed), stats=RunningStats(x.shape))


def _theta_cache(op, cfg: SamplerConfig):
    key = ("theta", cfg.theta, cfg.dt)
    cache = op._chain_cache.get(key)
    if cache is None:
        free = op.free_dof
        lff = op.chain_generator()
        ident = np.eye(len(free))
        try:
            lu = scipy.linalg.lu_factor(ident - cfg.theta * cfg.dt * lff)
        except scipy.linalg.LinAlgError as exc:
            raise NumericalError(f"implicit theta matrix is singular: {exc}") from None
        bplus = ident + (1.0 - cfg.theta) * cfg.dt * lff
        cache = (free, lu, bplus)
        op._chain_cache[key] = cache
    return cache


def theta_step(op, mean_path: Path, state: ChainState, cfg: SamplerConfig) -> ChainState:
    """One implicit theta-method step of the Langevin chain.

    Solves (I - theta dt L) x* = (I + (1-theta) dt L) x^k - dt L M
    + sqrt(2 dt) xi on the free degrees of freedom (equivalently, the
    centred update in y = x - M), with xi ~ N(0, I/h) per free node.
    Dirichlet nodes stay pinned at their boundary values.  The implicit
    factorisation is computed on first use and cached on the operator.
    """
    if mean_path.grid != op.grid or state.grid != op.grid:
        raise ValueError("operator, mean path and chain state grids differ")
    free, lu, bplus = _theta_cache(op, cfg)
    h = op.grid.h
    m_flat = mean_path.values.reshape(-1)
    y = (state.x.reshape(-1) - m_flat)[free]
    rhs = bplus @ y
    xi = state.rng.standard_normal(len(free)) / np.sqrt(h)
    rhs += np.sqrt(2.0 * cfg.dt) * xi
    y_star = scipy.linalg.lu_solve(lu, rhs)
    x_new = m_flat.copy()
    x_new[free] += y_star
    state.advance(x_new.reshape(state.x.shape), cfg)
    return state


class CovFactor:
    """Symmetric eigen-factorisation of a covariance Gram matrix.

    Supplies exact N(0, C) draws and the pseudo-inverse quadratic form of
    the same Gaussian; eigenvalues below `rcond * max` count as exact
    zeros (bridge kernels are rank-deficient at the pinned nodes).
    """

    def __init__(self, gram: np.ndarray, rcond: float = 1e-12, tol: float = 1e-8):
        gram = np.asarray(gram, float)
        sym = 0.5 * (gram + gram.T)
        w, v = np.linalg.eigh(sym)
        wmax = w.max(initial=0.0)
        if wmax <= 0.0:
            raise NumericalError("covariance Gram matrix has no positive eigenvalue")
        if w.min() < -tol * wmax:
            raise NumericalError(
                f"covariance Gram matrix is indefinite (min eig {w.min():.3e})")
        w = np.clip(w, 0.0, None)[::-1]
        v = v[:, ::-1]
        self.eigenvalues = w
        self.eigenvectors = v
        self.rank = int(np.sum(w > rcond * wmax))
        self._factor = v[:, :self.rank] * np.sqrt(w[:self.rank])

    @property
    def size(self) -> int:
        return self.eigenvectors.shape[0]

    def sample(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        if n is None:
            return self._factor @ rng.standard_normal(self.rank)
        return rng.standard_normal((n, self.rank)) @ self._factor.T

    def quad_form(self, y: np.ndarray) -> float:
        """y* C^+ y over the retained modes."""
        c = self.eigenvectors[:, :self.rank].T @ y
        return float(np.sum(c * c / self.eigenvalues[:self.rank]))


def cov_factor(gram: np.ndarray, rcond: float = 1e-12) -> CovFactor:
    """Factor a kernel Gram matrix once for repeated exact noise draws."""
    return CovFactor(gram, rcond=rcond)


def precond_step(c_h, mean_path: Path, state: ChainState, cfg: SamplerConfig) -> ChainState:
    """One step of the preconditioned chain dx/dt = -x + M + sqrt(2C) dw.

    x* = [(1 - (1-theta) dt) x^k + dt M + sqrt(2 dt) eta] / (1 + theta dt)
    with eta ~ N(0, C_h).  The invariant measure is N(M, C_h / (1 +
    (theta - 1/2) dt)); theta = 1/2 preserves the target for every dt,
    and dt = 2 then yields independent exact draws.

    `c_h` is the Gram matrix of the target kernel on the grid (or a
    prefactored `CovFactor`; pass one to avoid refactoring every step).
    """
    fac = c_h if isinstance(c_h, CovFactor) else _cached_factor(c_h)
    if mean_path.grid != state.grid:
        raise ValueError("mean path and chain state grids differ")
    if fac.size != state.x.size:
        raise ValueError("covariance Gram size does not match the chain state")
    eta = fac.sample(state.rng)
    x = state.x.reshape(-1)
    m = mean_path.values.reshape(-1)
    x_new = ((1.0 - (1.0 - cfg.theta) * cfg.dt) * x + cfg.dt * m
             + np.sqrt(2.0 * cfg.dt) * eta) / (1.0 + cfg.theta * cfg.dt)
    state.advance(x_new.reshape(state.x.shape), cfg)
    return state


_FACTOR_CACHE: dict = {}


def _cached_factor(gram: np.ndarray) -> CovFactor:
    key = id(gram)
    hit = _FACTOR_CACHE.get(key)
    if hit is None or hit[0] is not gram:
        hit = (gram, CovFactor(gram))
        _FACTOR_CACHE[key] = hit
    return hit[1]


@dataclass(frozen=True)
class KLBasis:
    """Eigenpairs of the discrete covariance operator on the grid.

    `eigenvalues` are the eigenvalues of h K (descending); eigenvector
    columns are orthonormal in the grid inner product <f, g> = h sum f g.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    h: float

    @property
    def n_modes(self) -> int:
        return len(self.eigenvalues)


def kl_basis(kernel_or_gram, grid: Grid, drop_tol: float = 1e-12) -> KLBasis:
    """Karhunen-Loeve basis of a kernel on the grid.

    Modes with eigenvalue <= drop_tol * largest are truncated; an
    indefinite Gram matrix (beyond the PSD tolerance) raises.
    """
    gram = kernel_or_gram if isinstance(kernel_or_gram, np.ndarray) \
        else kernel_or_gram.gram(grid.nodes)
    fac = CovFactor(gram)
    h = grid.h
    lam = h * fac.eigenvalues
    keep = lam > drop_tol * lam[0]
    phi = fac.eigenvectors[:, keep] / np.sqrt(h)
    return KLBasis(lam[keep], phi, h)


def kl_sampler(kernel, grid: Grid, n: int, seed: int) -> list[Path]:
    """Exact independent draws mean + sum alpha_n sqrt(lam_n) phi_n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    basis = kl_basis(kernel, grid)
    mean = kernel.mean_on(grid.nodes)
    d = mean.shape[1]
    rng = make_rng(seed)
    alpha = rng.standard_normal((n, basis.n_modes))
    draws = mean.reshape(-1) + (alpha * np.sqrt(basis.eigenvalues)) @ basis.eigenvectors.T
    return [Path(grid, row.reshape(grid.n_nodes, d)) for row in draws]


def mh_adjust(proposal_step, log_target_density, state: ChainState,
              cfg: SamplerConfig) -> ChainState:
    """Metropolis-Hastings accept/reject around one proposal step.

    `proposal_step(x, rng)` must return the proposed path values and the
    log proposal ratio log q(x | x*) - log q(x* | x); the chain then
    preserves exp(log_target_density) exactly in distribution.
    """
    x = state.x
    x_star, delta_logq = proposal_step(x, state.rng)
    log_alpha = log_target_density(x_star) - log_target_density(x) + delta_logq
    state.proposed += 1
    state.last_log_alpha = float(log_alpha)
    if np.log(state.rng.uniform()) < min(0.0, log_alpha):
        state.accepted += 1
        x_new = x_star
    else:
        x_new = x.copy()
    state.advance(x_new, cfg)
    return state


def make_theta_proposal(op, mean_path: Path, cfg: SamplerConfig):
    """Theta-method proposal with its exact Gaussian transition ratio.

    The proposal noise has full rank on the free degrees of freedom, so
    the Gaussian transition density exists and the returned ratio is
    exact (normalisation constants cancel between the two directions).
    """
    free, lu, bplus = _theta_cache(op, cfg)
    lff = op.chain_generator()
    fminus = np.eye(len(free)) - cfg.theta * cfg.dt * lff
    h = op.grid.h
    m_flat = mean_path.values.reshape(-1)
    shape = mean_path.values.shape
    scale = h / (4.0 * cfg.dt)

    def proposal(x: np.ndarray, rng: np.random.Generator):
        y = (x.reshape(-1) - m_flat)[free]
        rhs = bplus @ y + np.sqrt(2.0 * cfg.dt / h) * rng.standard_normal(len(free))
        y_star = scipy.linalg.lu_solve(lu, rhs)
        fwd = fminus @ y_star - bplus @ y
        bwd = fminus @ y - bplus @ y_star
        delta_logq = scale * (fwd @ fwd - bwd @ bwd)
        x_new = m_flat.copy()
        x_new[free] += y_star
        return x_new.reshape(shape), delta_logq

    return proposal


def make_precond_proposal(c_h, mean_path: Path, cfg: SamplerConfig):
    """Preconditioned proposal with its transition ratio in the C-metric.

    The ratio is computed through the pseudo-inverse quadratic form of
    C_h, so the chain must live in the range of C_h (start it at M).
    """
    fac = c_h if isinstance(c_h, CovFactor) else CovFactor(c_h)
    c1 = (1.0 - (1.0 - cfg.theta) * cfg.dt) / (1.0 + cfg.theta * cfg.dt)
    c3 = np.sqrt(2.0 * cfg.dt) / (1.0 + cfg.theta * cfg.dt)
    m_flat = mean_path.values.reshape(-1)
    shape = mean_path.values.shape

    def proposal(x: np.ndarray, rng: np.random.Generator):
        y = x.reshape(-1) - m_flat
        y_star = c1 * y + c3 * fac.sample(rng)
        delta_logq = -(fac.quad_form(y - c1 * y_star)
                       - fac.quad_form(y_star - c1 * y)) / (2.0 * c3 ** 2)
        return (m_flat + y_star).reshape(shape), delta_logq

    return proposal


def make_operator_log_density(op, mean_path: Path):
    """Discretised Gaussian log-density -1/2 <x - M, (-L)(x - M)> h.

    L is taken in its symmetric free-node realisation, so this is the
    exact log-density (up to constant) of the chain's invariant Gaussian.
    """
    free = op.free_dof
    lff = op.chain_generator()
    h = op.grid.h
    m_flat = mean_path.values.reshape(-1)

    def log_density(x: np.ndarray) -> float:
        y = (x.reshape(-1) - m_flat)[free]
        return 0.5 * h * float(y @ (lff @ y))

    return log_density


def make_gram_log_density(c_h, mean_path: Path):
    """Log-density of N(M, C_h) through the pseudo-inverse quadratic form."""
    fac = c_h if isinstance(c_h, CovFactor) else CovFactor(c_h)
    m_flat = mean_path.values.reshape(-1)

    def log_density(x: np.ndarray) -> float:
        return -0.5 * fac.quad_form(x.reshape(-1) - m_flat)

    return log_density


def default_burn_in(op, dt: float) -> int:
    """Burn-in heuristic 10 / (dt * lambda_min(-L)), the slow-mode timescale."""
    lam_min = scipy.linalg.eigvalsh(-op.chain_generator()).min()
    if lam_min <= 0:
        raise NumericalError("operator is not negative definite on free nodes")
    return int(np.ceil(10.0 / (dt * lam_min)))


def drift_from_observation(obs: ObservationModel, y_path: Path, grid: Grid) -> Path:
    """Constant-in-time source g(u) = A21* S2 dY/du of the posterior equation.

    dY/du is represented by first-order increments (Y_{j+1} - Y_j)/h;
    interior node j receives the average of its two adjacent increment
    densities, the assignment consistent with the composed forward/
    backward differences of the operator stencil (a one-sided assignment
    leaves an O(h^{-1/2}) interior defect against the Kalman sweep, the
    averaged one an O(h) defect).  Boundary rows carry no source.  The
    -A21* S2 A21 x part already lives inside the operator.
    """
    if y_path.grid != grid:
        raise ValueError("y_path grid does not match the target grid")
    if y_path.dim != obs.dim_y:
        raise ValueError("y_path dimension does not match the observation model")
    j, h = grid.n_nodes, grid.h
    w = obs.a21.T @ obs.sigma2()
    g = np.zeros((j, obs.dim_x))
    dy = np.diff(y_path.values, axis=0) / h
    g[1:-1] = 0.5 * (dy[:-1] + dy[1:]) @ w.T
    return Path(grid, g)

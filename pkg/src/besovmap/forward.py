"""Forward maps, Gaussian noise and the data misfit.

Both built-in maps act through a fixed ``J x N`` matrix ``A``.  The linear map
is ``G(u) = A u``; the cubic map applies ``m + m**3/3`` to ``m = A u``
componentwise.  For convolution problems ``A`` samples the circular
convolution of the synthesised function at ``J`` evenly spaced grid points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _random
from .prior import BesovParams
from .wavelets import min_grid_size, synthesis_matrix

LINEAR = "linear_conv"
CUBIC = "nonlinear_cubic"
MODEL_TYPES = (LINEAR, CUBIC)


def box_kernel(grid_size: int, d: int = 1, width: float = 1 / 8) -> np.ndarray:
    """Periodic box filter of the given width, as normalised discrete weights."""
    offsets = np.minimum(np.arange(grid_size), grid_size - np.arange(grid_size))
    inside = (offsets / grid_size <= width / 2).astype(float)
    k = inside
    for _ in range(d - 1):
        k = np.multiply.outer(k, inside)
    return k / k.sum()


def circular_convolve(kernel: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Discrete periodic convolution ``sum_k K[k] f[i - k]`` on the grid."""
    axes = tuple(range(kernel.ndim))
    return np.real(np.fft.ifftn(np.fft.fftn(kernel, axes=axes) * np.fft.fftn(values, axes=axes), axes=axes))


def sample_points(grid_size: int, d: int, obs_dim: int) -> np.ndarray:
    total = grid_size**d
    if not 1 <= obs_dim <= total:
        raise ValueError(f"obs_dim must lie in 1..{total}, got {obs_dim}")
    return (np.arange(obs_dim) * total) // obs_dim


def convolution_matrix(params: BesovParams, kernel=None, obs_dim: int | None = None,
                       grid_size: int | None = None) -> np.ndarray:
    """Matrix of ``u -> (kernel * synthesize(u))`` sampled at ``obs_dim`` points.

    ``kernel`` holds discrete convolution weights on the grid (a delta gives the
    identity); it defaults to a box filter of width 1/8.
    """
    d, N = params.d, params.N
    if kernel is not None:
        kernel = np.asarray(kernel, dtype=float)
        if kernel.ndim == 1 and d == 2:
            side = int(round(np.sqrt(kernel.size)))
            kernel = kernel.reshape(side, side)
        grid_size = grid_size or kernel.shape[0]
    grid_size = grid_size or min_grid_size(N, d)
    if kernel is None:
        kernel = box_kernel(grid_size, d)
    if kernel.shape != (grid_size,) * d:
        raise ValueError(f"kernel must have shape {(grid_size,) * d}, got {kernel.shape}")
    obs_dim = obs_dim or N
    S = synthesis_matrix(N, grid_size, d)
    cols = [circular_convolve(kernel, S[:, i].reshape((grid_size,) * d)).ravel() for i in range(N)]
    full = np.column_stack(cols)
    return full[sample_points(grid_size, d, obs_dim)]


@dataclass(frozen=True, eq=False)
class ForwardProblem:
    matrix: np.ndarray
    noise_cov: np.ndarray
    model: str = LINEAR
    _sqrt: np.ndarray = field(init=False, repr=False)
    _isqrt: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if self.model not in MODEL_TYPES:
            raise ValueError(f"model must be one of {MODEL_TYPES}, got {self.model!r}")
        J = A.shape[0]
        cov = np.asarray(self.noise_cov, dtype=float)
        if cov.ndim == 0:
            cov = float(cov) * np.eye(J)
        if cov.shape != (J, J):
            raise ValueError(f"noise covariance must be {J}x{J}, got {cov.shape}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
            raise ValueError("noise covariance must be symmetric")
        evals, evecs = np.linalg.eigh(cov)
        if evals.min() <= 0:
            raise ValueError("noise covariance must be positive definite")
        A.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "matrix", A)
        object.__setattr__(self, "noise_cov", cov)
        object.__setattr__(self, "_sqrt", (evecs * np.sqrt(evals)) @ evecs.T)
        object.__setattr__(self, "_isqrt", (evecs / np.sqrt(evals)) @ evecs.T)

    @property
    def obs_dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def N(self) -> int:
        return self.matrix.shape[1]

    @property
    def noise_sqrt(self) -> np.ndarray:
        return self._sqrt

    @property
    def whitener(self) -> np.ndarray:
        """``Sigma**-1/2`` from the symmetric eigendecomposition."""
        return self._isqrt

    def _check(self, u: np.ndarray) -> None:
        if u.shape[-1] != self.N:
            raise ValueError(f"state has {u.shape[-1]} coefficients, forward map expects {self.N}")

    def apply(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        self._check(u)
        m = u @ self.matrix.T
        if self.model == CUBIC:
            return m + m**3 / 3
        return m

    def apply_difference(self, x, y) -> np.ndarray:
        """``G(x) - G(y)`` computed without cancelling large terms."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        dm = self.matrix @ (x - y)
        if self.model == CUBIC:
            mx, my = self.matrix @ x, self.matrix @ y
            return dm + dm * (mx * mx + mx * my + my * my) / 3
        return dm

    def jacobian(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        self._check(u)
        if self.model == CUBIC:
            m = self.matrix @ u
            return (1 + m**2)[:, None] * self.matrix
        return self.matrix


@dataclass(frozen=True)
class Observation:
    """Data ``y`` for a problem; ``n > 1`` means ``y`` is the mean of ``n`` i.i.d. observations.

    The misfit of ``n`` repeated observations differs from ``n`` times the
    misfit of their mean only by a constant, so the mean is all the solver needs.
    """

    y: np.ndarray
    problem: ForwardProblem
    n: int = 1

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if y.size != self.problem.obs_dim:
            raise ValueError(f"observation has length {y.size}, problem expects {self.problem.obs_dim}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        object.__setattr__(self, "y", y)

    @classmethod
    def pooled(cls, ys, problem: ForwardProblem) -> "Observation":
        ys = np.atleast_2d(np.asarray(ys, dtype=float))
        return cls(ys.mean(axis=0), problem, n=ys.shape[0])

    def to_json(self) -> dict:
        return {"y": self.y.tolist(), "n": self.n}


def forward_apply(problem: ForwardProblem, u) -> np.ndarray:
    return problem.apply(u)


def forward_jacobian(problem: ForwardProblem, u) -> np.ndarray:
    return problem.jacobian(u)


def potential(u, obs: Observation):
    """Whitened misfit ``n/2 |Sigma^-1/2 (y - G(u))|**2`` (vectorised over rows of u)."""
    r = (obs.y - obs.problem.apply(u)) @ obs.problem.whitener.T
    return 0.5 * obs.n * np.sum(r**2, axis=-1)


def potential_gradient(u, obs: Observation) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    prob = obs.problem
    W = prob.whitener
    resid = obs.y - prob.apply(u)
    return -obs.n * prob.jacobian(u).T @ (W.T @ (W @ resid))


def generate_observations(problem: ForwardProblem, truth, n: int, seed: int,
                          noiseless: bool = False) -> np.ndarray:
    """``n`` draws ``G(truth) + Sigma^1/2 xi_j`` as rows; ``xi_j`` depends only on ``(seed, j)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    clean = problem.apply(np.asarray(truth, dtype=float))
    J = problem.obs_dim
    if noiseless:
        return np.tile(clean, (n, 1))

    def block(b, lo, hi):
        gen = _random.block_generator(seed, _random.NOISE_STREAM, b)
        offset = lo - b * _random.BLOCK
        return gen.standard_normal((offset + hi - lo, J))[offset:]

    xi = np.concatenate(list(_random.map_blocks(block, n)), axis=0)
    return clean + xi @ problem.noise_sqrt.T


def lipschitz_bound(problem: ForwardProblem, radius: float, order: float, d: int = 1) -> float:
    """Upper bound on the Lipschitz constant of G on the weighted-l1 ball of ``radius``.

    Distances are measured in the order-``order`` weighted l1 norm on coefficients
    and the Euclidean norm on data.
    """
    A = problem.matrix
    w = (np.arange(1, problem.N + 1, dtype=float)) ** (order / d - 0.5)
    op_norm = float(np.max(np.linalg.norm(A, axis=0) / w))
    if problem.model == LINEAR:
        return op_norm
    sup_m = float(np.max(np.abs(A) / w)) * radius
    return op_norm * (1 + 3 * sup_m**2)

"""Truncated B^s_1 Besov prior.

The prior on the first ``N`` wavelet coefficients is the product of Laplace
laws ``c_ell = ell**-(s/d - 1/2) * X_ell`` with ``X_ell`` drawn from the density
``exp(-|x|) / 2``.  Its negative log-density is the Besov norm
``sum_ell alpha_ell |c_ell|`` with ``alpha_ell = ell**(s/d - 1/2)``, up to a
constant.  Every density here is handled in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _random
from .wavelets import completes_level


@dataclass(frozen=True)
class BesovParams:
    s: float
    N: int
    d: int = 1
    t: float | None = None
    p: int = 1

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError(f"s must be positive, got {self.s}")
        if self.d not in (1, 2):
            raise ValueError(f"d must be 1 or 2, got {self.d}")
        if self.p != 1:
            raise ValueError("p=1 only")
        if not completes_level(self.N, self.d):
            raise ValueError(f"N={self.N} does not complete a wavelet level for d={self.d}")
        if self.t is None:
            object.__setattr__(self, "t", self.s - self.d - 0.1)
        if not self.t < self.s - self.d:
            raise ValueError(f"t must satisfy t < s - d (got t={self.t}, s - d={self.s - self.d})")

    @property
    def ell(self) -> np.ndarray:
        return np.arange(1, self.N + 1, dtype=float)

    @property
    def alpha(self) -> np.ndarray:
        """Penalty weights ``ell**(s/d - 1/2)``; also the inverse Laplace scales."""
        return self.weights(self.s)

    def weights(self, order: float, integrability: float = 1.0) -> np.ndarray:
        return besov_weight(self.ell, self.d, order, integrability)


@dataclass
class CoefficientField:
    coeffs: np.ndarray
    params: BesovParams = field(repr=False)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.params.N,):
            raise ValueError(f"expected {self.params.N} coefficients, got shape {self.coeffs.shape}")
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("coefficients must be finite")

    def __array__(self, dtype=None, copy=None):
        return self.coeffs if dtype is None else self.coeffs.astype(dtype)

    def to_json(self) -> dict:
        p = self.params
        return {"s": p.s, "d": p.d, "N": p.N, "coeffs": self.coeffs.tolist()}

    @classmethod
    def from_json(cls, obj: dict, params: BesovParams | None = None) -> "CoefficientField":
        missing = {"s", "d", "N", "coeffs"} - set(obj)
        if missing:
            raise ValueError(f"coefficient field is missing keys: {sorted(missing)}")
        if params is None:
            params = BesovParams(s=obj["s"], N=obj["N"], d=obj["d"])
        elif (obj["s"], obj["d"], obj["N"]) != (params.s, params.d, params.N):
            raise ValueError(
                f"coefficient field (s={obj['s']}, d={obj['d']}, N={obj['N']}) does not match "
                f"the configured prior (s={params.s}, d={params.d}, N={params.N})"
            )
        return cls(np.asarray(obj["coeffs"], dtype=float), params)


def besov_weight(ell, d: int, order: float, integrability: float = 1.0):
    """Weight ``ell**(p'(s'/d + 1/2) - 1)`` of the B^{s'}_{p'} sequence norm."""
    return np.asarray(ell, dtype=float) ** (integrability * (order / d + 0.5) - 1.0)


def besov_norm(c, order: float, integrability: float = 1.0, d: int = 1) -> float:
    c = np.asarray(c, dtype=float)
    w = besov_weight(np.arange(1, c.shape[-1] + 1), d, order, integrability)
    if integrability == 1:
        return np.sum(w * np.abs(c), axis=-1)
    return np.sum(w * np.abs(c) ** integrability, axis=-1) ** (1.0 / integrability)


def prior_norm(c, params: BesovParams):
    """The B^s_1 norm, i.e. the negative unnormalised log prior density."""
    return np.sum(params.alpha * np.abs(np.asarray(c, dtype=float)), axis=-1)


def log_density(x, params: BesovParams):
    """Normalised log-density of the truncated prior (vectorised over rows)."""
    alpha = params.alpha
    return np.sum(np.log(alpha / 2)) - np.sum(alpha * np.abs(np.asarray(x, dtype=float)), axis=-1)


def prior_block(params: BesovParams, seed: int, block: int, start: int, stop: int) -> np.ndarray:
    """Rows ``start..stop-1`` of the prior draw stream for ``seed``."""
    gen = _random.block_generator(seed, _random.PRIOR_STREAM, block)
    offset = start - block * _random.BLOCK
    # the block stream is filled row-major, so a prefix of it is stable
    x = _random.unit_laplace(gen, (offset + stop - start, params.N))
    return x[offset:] / params.alpha


def sample_prior(params: BesovParams, seed: int, count: int) -> np.ndarray:
    """``count`` prior draws as a ``(count, N)`` array.

    Draw ``i`` depends only on ``(seed, i)``, so asking for more draws extends the
    sequence without changing earlier rows.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    blocks = _random.map_blocks(lambda b, lo, hi: prior_block(params, seed, b, lo, hi), count)
    return np.concatenate(list(blocks), axis=0)


def log_rn_derivative(h, u, params: BesovParams):
    """Log density of the shifted prior ``lambda_h`` against ``lambda`` at ``u``.

    ``u`` may hold several states as rows.
    """
    alpha = params.alpha
    h = np.asarray(h, dtype=float)
    u = np.asarray(u, dtype=float)
    return np.sum(alpha * (np.abs(u) - np.abs(h - u)), axis=-1)


def hellinger_factor(h_ell, alpha_ell):
    """Hellinger affinity of a Laplace law and its shift by ``h_ell``."""
    a = 0.5 * np.asarray(alpha_ell, dtype=float) * np.abs(h_ell)
    return np.exp(-a) * (1.0 + a)


def hellinger_integral(h, params: BesovParams) -> float:
    """Kakutani product of the per-coordinate Hellinger factors."""
    a = 0.5 * params.alpha * np.abs(np.asarray(h, dtype=float))
    return math.exp(float(np.sum(np.log1p(a) - a)))


def quasi_invariance_diagnostic(h, params: BesovParams) -> float:
    """Truncated ``sum ell**(2s/d - 1) h_ell**2``; finite iff h is an admissible shift."""
    h = np.asarray(h, dtype=float)
    return float(np.sum(params.ell ** (2 * params.s / params.d - 1) * h**2))


def log_derivative(h, u, params: BesovParams):
    """Logarithmic derivative of the prior along ``h`` at ``u``; sign(0) is 0."""
    h = np.asarray(h, dtype=float)
    u = np.asarray(u, dtype=float)
    return -np.sum(params.alpha * np.sign(u) * h, axis=-1)


def log_rn_via_logderivative(h, u, params: BesovParams) -> float:
    """Recover ``log_rn_derivative`` by integrating the logarithmic derivative.

    Along the segment ``u - s*h`` each coordinate changes sign at most once, so
    ``s -> log_derivative(h, u - s*h)`` is piecewise constant on [0, 1].  The
    integral is summed exactly over those pieces.  With the shift convention
    ``lambda_h(A) = lambda(A - h)`` the log density equals minus that integral.
    """
    h = np.asarray(h, dtype=float)
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        cross = np.where(h != 0, u / h, np.inf)
    breaks = np.unique(np.concatenate(([0.0, 1.0], cross[(cross > 0) & (cross < 1)])))
    pieces = []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        mid = 0.5 * (lo + hi)
        pieces.append((hi - lo) * float(log_derivative(h, u - mid * h, params)))
    return -math.fsum(pieces)


def log_concavity_check(a, b, params: BesovParams, lambda_grid: Sequence[float], tol: float = 1e-12):
    """Test the log-concavity inequality of the prior density along the segment [b, a].

    Returns ``(passed, worst_margin)`` where the margin is
    ``log pi(l a + (1-l) b) - l log pi(a) - (1-l) log pi(b)``.
    """
    lam = np.asarray(lambda_grid, dtype=float)
    if np.any((lam < 0) | (lam > 1)):
        raise ValueError("lambda grid values must lie in [0, 1]")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    mix = lam[:, None] * a + (1 - lam[:, None]) * b
    margin = log_density(mix, params) - lam * log_density(a, params) - (1 - lam) * log_density(b, params)
    worst = float(np.min(margin))
    return worst >= -tol, worst

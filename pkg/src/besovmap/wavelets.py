"""Periodic Haar wavelets on the unit torus with a single global index.

The global index ``ell`` runs level-major: ``ell = 1`` is the constant
scaling function, then every level ``j = 0, 1, ...`` contributes
``(2**d - 1) * 2**(d*j)`` detail functions, ordered by wavelet type and then
lexicographically by position.

Grid functions are sampled at cell midpoints ``(i + 1/2) / M``.  Haar
functions are piecewise constant on dyadic cells, so for fine enough grids the
discrete inner products are exact.
"""

from __future__ import annotations

from functools import lru_cache
from typing import NamedTuple

import numpy as np

SUPPORTED_DIMS = (1, 2)


class GlobalIndex(NamedTuple):
    ell: int
    level: int
    position: tuple[int, ...]
    kind: int  # 0 is the scaling function, 1..2**d-1 detail types


def _check_dim(d: int) -> None:
    if d not in SUPPORTED_DIMS:
        raise ValueError(f"dimension d must be 1 or 2, got {d}")


def _level_size(j: int, d: int) -> int:
    return (2**d - 1) * 2 ** (d * j)


def n_levels(N: int, d: int) -> int:
    """Number of complete detail levels in a truncation of size ``N``.

    Raises ``ValueError`` when ``N`` does not end on a level boundary.
    """
    _check_dim(d)
    if N < 1:
        raise ValueError(f"truncation N must be positive, got {N}")
    levels, total = 0, 1
    while total < N:
        total += _level_size(levels, d)
        levels += 1
    if total != N:
        raise ValueError(f"N={N} does not complete a wavelet level for d={d}")
    return levels


def completes_level(N: int, d: int) -> bool:
    try:
        n_levels(N, d)
    except ValueError:
        return False
    return True


def min_grid_size(N: int, d: int) -> int:
    """Smallest dyadic M resolving the first N basis functions exactly."""
    return 2 ** n_levels(N, d)


def index_decode(ell: int, d: int = 1) -> GlobalIndex:
    _check_dim(d)
    if ell < 1:
        raise ValueError(f"global index must be >= 1, got {ell}")
    if ell == 1:
        return GlobalIndex(1, 0, (0,) * d, 0)
    rest = ell - 2
    j = 0
    while rest >= _level_size(j, d):
        rest -= _level_size(j, d)
        j += 1
    per_kind = 2 ** (d * j)
    kind, flat = divmod(rest, per_kind)
    position = tuple(int(k) for k in np.unravel_index(flat, (2**j,) * d))
    return GlobalIndex(ell, j, position, kind + 1)


def index_encode(level: int, position, kind: int, d: int = 1) -> int:
    _check_dim(d)
    position = tuple(int(k) for k in np.atleast_1d(position))
    if len(position) != d:
        raise ValueError("position length must equal d")
    if kind == 0:
        if level != 0 or any(position):
            raise ValueError("the scaling function lives at level 0, position 0")
        return 1
    if not 1 <= kind < 2**d:
        raise ValueError(f"detail kind must be in 1..{2**d - 1}")
    if any(k < 0 or k >= 2**level for k in position):
        raise ValueError("position out of range for level")
    ell = 2 + sum(_level_size(jj, d) for jj in range(level))
    ell += (kind - 1) * 2 ** (d * level)
    ell += int(np.ravel_multi_index(position, (2**level,) * d))
    return ell


def _haar_1d(x: np.ndarray, j: int, k: int, mother: bool) -> np.ndarray:
    t = 2.0**j * x - k
    inside = (t >= 0.0) & (t < 1.0)
    vals = np.where(inside, 2.0 ** (j / 2), 0.0)
    if mother:
        vals = np.where(t < 0.5, vals, -vals)
    return vals


def basis_function(ell: int, grid_size: int, d: int = 1) -> np.ndarray:
    """Samples of the L2-normalised basis function ``psi_ell`` on the grid."""
    idx = index_decode(ell, d)
    x = (np.arange(grid_size) + 0.5) / grid_size
    if idx.kind == 0:
        return np.ones((grid_size,) * d)
    if d == 1:
        return _haar_1d(x, idx.level, idx.position[0], mother=True)
    # kind bit 0 -> wavelet along axis 0, bit 1 -> wavelet along axis 1
    fx = _haar_1d(x, idx.level, idx.position[0], mother=bool(idx.kind & 1))
    fy = _haar_1d(x, idx.level, idx.position[1], mother=bool(idx.kind & 2))
    return np.outer(fx, fy)


def _check_grid(N: int, grid_size: int, d: int) -> None:
    if grid_size < 1 or grid_size & (grid_size - 1):
        raise ValueError(f"grid size must be a power of two, got {grid_size}")
    if grid_size < min_grid_size(N, d):
        raise ValueError(
            f"grid size {grid_size} too coarse for N={N} (need >= {min_grid_size(N, d)})"
        )


@lru_cache(maxsize=32)
def _synthesis_matrix(N: int, grid_size: int, d: int) -> np.ndarray:
    _check_grid(N, grid_size, d)
    cols = [basis_function(ell, grid_size, d).ravel() for ell in range(1, N + 1)]
    S = np.column_stack(cols)
    S.setflags(write=False)
    return S


def synthesis_matrix(N: int, grid_size: int, d: int = 1) -> np.ndarray:
    """The ``M**d x N`` matrix mapping coefficients to flattened grid values."""
    return _synthesis_matrix(int(N), int(grid_size), int(d))


def synthesize(coeffs, grid_size: int, d: int = 1) -> np.ndarray:
    """Evaluate ``sum_ell c_ell psi_ell`` on the grid; returns shape ``(M,)*d``."""
    c = np.asarray(coeffs, dtype=float)
    S = synthesis_matrix(c.size, grid_size, d)
    return (S @ c).reshape((grid_size,) * d)


def analyze(values, N: int, d: int = 1) -> np.ndarray:
    """First ``N`` wavelet coefficients of grid samples ``values``."""
    f = np.asarray(values, dtype=float)
    M = f.shape[0]
    if f.size != M**d:
        raise ValueError(f"expected {M**d} grid values for d={d}, got {f.size}")
    S = synthesis_matrix(N, M, d)
    return S.T @ f.ravel() / M**d

"""Monte Carlo small-ball probabilities under the prior and the posterior.

Balls are open balls of the weighted l1 norm ``sum_ell ell**(t/d - 1/2) |x_ell|``.
Posterior masses use self-normalised importance sampling from the prior with
weights ``exp(-Phi)``.  All centres in one call share the same prior draws
(common random numbers), so ratios and differences between centres are
estimated with their covariance taken into account.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _random
from .forward import Observation, potential
from .prior import BesovParams, log_rn_derivative, prior_block, prior_norm

MIN_ESS = 100.0


@dataclass(frozen=True)
class BallSpec:
    center: np.ndarray
    radius: float
    norm_order: float | None = None

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))


@dataclass
class MonteCarloEstimate:
    value: float
    std_error: float
    n_samples: int
    seed: int
    ess: float = math.nan
    flags: list = field(default_factory=list)


@dataclass
class BallSums:
    """Sufficient statistics of one weighted sample pass over ``K`` balls.

    ``wI[k] = sum w 1_k``, ``w2I[a, b] = sum w**2 1_a 1_b``.
    """

    n: int
    w: float
    w2: float
    wI: np.ndarray
    w2I: np.ndarray

    @property
    def estimates(self) -> np.ndarray:
        return self.wI / self.w

    @property
    def covariance(self) -> np.ndarray:
        """Delta-method covariance of the self-normalised ball estimates."""
        R = self.estimates
        diag = np.diag(self.w2I)
        C = self.w2I - np.outer(R, diag) - np.outer(diag, R) + np.outer(R, R) * self.w2
        return C / self.w**2

    @property
    def ess(self) -> float:
        return self.w**2 / self.w2

    def ratio(self, num: int, den: int) -> tuple[float, float]:
        """Ratio of ball ``num`` to ball ``den`` and its delta-method standard error."""
        if self.wI[den] == 0:
            return math.nan, math.nan
        rho = self.wI[num] / self.wI[den]
        var = (self.w2I[num, num] + rho**2 * self.w2I[den, den] - 2 * rho * self.w2I[num, den]) / self.wI[den] ** 2
        return float(rho), float(math.sqrt(max(var, 0.0)))

    def difference_se(self, a: int, b: int) -> float:
        C = self.covariance
        return float(math.sqrt(max(C[a, a] + C[b, b] - 2 * C[a, b], 0.0)))


def _ball_norm_weights(prior: BesovParams, order: float | None) -> np.ndarray:
    return prior.weights(prior.t if order is None else order)


def ball_sums(centers, radius: float, prior: BesovParams, n_samples: int, seed: int,
              obs: Observation | None = None, norm_order: float | None = None) -> BallSums:
    """One pass over ``n_samples`` prior draws accumulating statistics for every centre.

    ``obs=None`` means a zero potential, i.e. the prior itself.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    C = np.atleast_2d(np.asarray(centers, dtype=float))
    if C.shape[1] != prior.N:
        raise ValueError(f"centres must have {prior.N} coefficients")
    wts = _ball_norm_weights(prior, norm_order)

    def block(b, lo, hi):
        U = prior_block(prior, seed, b, lo, hi)
        if obs is None:
            shift, w = 0.0, np.ones(U.shape[0])
        else:
            phi = potential(U, obs)
            shift = float(phi.min())
            w = np.exp(shift - phi)
        ind = np.stack([np.abs(U - c) @ wts < radius for c in C], axis=1).astype(float)
        w2 = w * w
        return shift, w.sum(), w2.sum(), ind.T @ w, (ind * w2[:, None]).T @ ind

    # weights are stored relative to exp(-min Phi); every estimate is invariant to that scale
    parts = list(_random.map_blocks(block, n_samples))
    base = min(p[0] for p in parts)
    scale = [math.exp(base - p[0]) for p in parts]
    return BallSums(
        n=n_samples,
        w=float(np.sum([c * p[1] for c, p in zip(scale, parts)])),
        w2=float(np.sum([c * c * p[2] for c, p in zip(scale, parts)])),
        wI=np.sum([c * p[3] for c, p in zip(scale, parts)], axis=0),
        w2I=np.sum([c * c * p[4] for c, p in zip(scale, parts)], axis=0),
    )


def _estimate(sums: BallSums, k: int, seed: int, check_ess: bool) -> MonteCarloEstimate:
    flags = []
    ess = sums.ess
    if check_ess and ess < MIN_ESS:
        flags.append("low_ess")
    return MonteCarloEstimate(
        value=float(sums.estimates[k]),
        std_error=float(math.sqrt(max(sums.covariance[k, k], 0.0))),
        n_samples=sums.n,
        seed=seed,
        ess=ess,
        flags=flags,
    )


def estimate_prior_ball(spec: BallSpec, prior: BesovParams, n_samples: int, seed: int) -> MonteCarloEstimate:
    sums = ball_sums([spec.center], spec.radius, prior, n_samples, seed, norm_order=spec.norm_order)
    return _estimate(sums, 0, seed, check_ess=False)


def estimate_posterior_ball(spec: BallSpec, obs: Observation | None, prior: BesovParams,
                            n_samples: int, seed: int) -> MonteCarloEstimate:
    """Self-normalised importance sampling estimate of the posterior ball mass.

    With ``obs=None`` the potential is zero and the result equals
    ``estimate_prior_ball`` exactly.
    """
    sums = ball_sums([spec.center], spec.radius, prior, n_samples, seed, obs=obs, norm_order=spec.norm_order)
    return _estimate(sums, 0, seed, check_ess=obs is not None)


@dataclass
class ExperimentRow:
    eps: float
    estimate: float
    std_error: float
    theory: float
    flags: list = field(default_factory=list)

    @property
    def ratio_error(self) -> float:
        return (self.estimate - self.theory) / self.theory

    def as_csv(self) -> list:
        return [self.eps, self.estimate, self.std_error, self.theory, self.ratio_error]


CSV_HEADER = ["eps", "estimate", "std_error", "theory", "ratio_error"]


def _ratio_rows(num, den, eps_grid, prior, n_samples, seed, theory, obs=None, norm_order=None):
    rows = []
    for eps in eps_grid:
        sums = ball_sums([den, num], eps, prior, n_samples, seed, obs=obs, norm_order=norm_order)
        est, se = sums.ratio(1, 0)
        flags = []
        if sums.wI[0] == 0 or sums.wI[1] == 0:
            flags.append("degenerate_ball")
        if obs is not None and sums.ess < MIN_ESS:
            flags.append("low_ess")
        rows.append(ExperimentRow(float(eps), est, se, theory, flags))
    return rows


def om_ratio_experiment(z1, z2, eps_grid: Sequence[float], prior: BesovParams, obs: Observation | None = None,
                        n_samples: int = 10**6, seed: int = 0, norm_order: float | None = None) -> list[ExperimentRow]:
    """Ball-mass ratios ``mu(B_eps(z2)) / mu(B_eps(z1))`` against ``exp(I(z1) - I(z2))``.

    ``obs=None`` uses the prior, whose functional is the Besov norm alone.
    """
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)

    def I(z):
        val = float(prior_norm(z, prior))
        return val + (float(potential(z, obs)) if obs is not None else 0.0)

    theory = math.exp(I(z1) - I(z2))
    return _ratio_rows(z2, z1, eps_grid, prior, n_samples, seed, theory, obs=obs, norm_order=norm_order)


def rn_limit_experiment(u, h, eps_grid: Sequence[float], prior: BesovParams, n_samples: int = 10**6,
                        seed: int = 0, norm_order: float | None = None) -> list[ExperimentRow]:
    """Shifted-prior ball ratios ``lambda(B_eps(u - h)) / lambda(B_eps(u))`` against ``R_h(u)``."""
    u = np.asarray(u, dtype=float)
    h = np.asarray(h, dtype=float)
    theory = math.exp(float(log_rn_derivative(h, u, prior)))
    return _ratio_rows(u - h, u, eps_grid, prior, n_samples, seed, theory, norm_order=norm_order)


@dataclass
class AndersonRow:
    shift: np.ndarray
    shifted: float
    centered: float
    diff_se: float
    passed: bool


def anderson_check(radius: float, prior: BesovParams, shifts, n_samples: int, seed: int,
                   norm_order: float | None = None, n_se: float = 3.0) -> list[AndersonRow]:
    """Compare shifted-ball masses against the centred ball on common draws."""
    shifts = [np.asarray(x, dtype=float) for x in shifts]
    centers = [np.zeros(prior.N)] + shifts
    sums = ball_sums(centers, radius, prior, n_samples, seed, norm_order=norm_order)
    R = sums.estimates
    rows = []
    for k, x in enumerate(shifts, start=1):
        se = sums.difference_se(k, 0)
        rows.append(AndersonRow(x, float(R[k]), float(R[0]), se, bool(R[k] <= R[0] + n_se * se)))
    return rows


@dataclass
class SweepResult:
    eps: float
    argmax: int
    center: np.ndarray
    tie: bool
    estimates: np.ndarray
    std_errors: np.ndarray


def mode_sweep(eps_grid: Sequence[float], candidates, obs: Observation | None, prior: BesovParams,
               n_samples: int, seed: int, norm_order: float | None = None, n_se: float = 3.0) -> list[SweepResult]:
    """Posterior ball mass maximiser over a finite candidate set, for each radius.

    A result is marked as a tie when the ``n_se`` standard-error intervals of
    the best two candidates overlap.
    """
    C = np.atleast_2d(np.asarray([np.asarray(c, dtype=float) for c in candidates]))
    out = []
    for eps in eps_grid:
        sums = ball_sums(C, eps, prior, n_samples, seed, obs=obs, norm_order=norm_order)
        R = sums.estimates
        se = np.sqrt(np.maximum(np.diag(sums.covariance), 0.0))
        order = np.argsort(-R, kind="stable")
        best = int(order[0])
        tie = False
        if len(order) > 1:
            second = int(order[1])
            tie = bool(R[best] - n_se * se[best] <= R[second] + n_se * se[second])
        out.append(SweepResult(float(eps), best, C[best], tie, R, se))
    return out

"""Repeated-observation consistency experiment.

For each ``n`` in a schedule and each replicate, draw ``n`` observations around
``G(truth)``, compute the MAP estimate of the pooled problem and record how far
its prediction is from the truth's.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .forward import ForwardProblem, Observation, generate_observations
from .prior import BesovParams, besov_norm, prior_norm
from .solver import SolverConfig, solve_map

CSV_HEADER = ["n", "replicate", "residual_sq", "penalty", "drift", "converged"]


@dataclass(frozen=True)
class ConsistencySchedule:
    n_values: tuple
    replicates: int = 20
    seed: int = 0

    def __post_init__(self):
        n_values = tuple(int(n) for n in self.n_values)
        if not n_values or n_values[0] < 1 or any(b <= a for a, b in zip(n_values, n_values[1:])):
            raise ValueError("n_values must be a strictly increasing list of positive integers")
        if self.replicates < 1:
            raise ValueError("replicates must be positive")
        object.__setattr__(self, "n_values", n_values)


@dataclass
class ConsistencyRow:
    n: int
    replicate: int
    residual_sq: float
    penalty: float
    drift: float
    converged: bool
    u_n: np.ndarray = field(repr=False, default=None)

    def as_csv(self) -> list:
        return [self.n, self.replicate, self.residual_sq, self.penalty, self.drift, int(self.converged)]


def cell_seed(base: int, n: int, replicate: int) -> int:
    ss = np.random.SeedSequence(int(base), spawn_key=(int(n), int(replicate)))
    return int(ss.generate_state(2, dtype=np.uint64)[0])


def run_consistency(truth, problem: ForwardProblem, prior: BesovParams, schedule: ConsistencySchedule,
                    solver_cfg: SolverConfig | None = None, noiseless: bool = False,
                    drift_order: float | None = None) -> list[ConsistencyRow]:
    """Solve the pooled MAP problem for each (n, replicate) cell of the schedule.

    ``drift`` is the order ``s - 1/2`` weighted l1 distance from the solution at
    the largest ``n`` of the same replicate.
    """
    truth = np.asarray(truth, dtype=float)
    clean = problem.apply(truth)
    W = problem.whitener
    order = prior.s - 0.5 if drift_order is None else drift_order
    rows = []
    for rep in range(schedule.replicates):
        rep_rows = []
        for n in schedule.n_values:
            ys = generate_observations(problem, truth, n, cell_seed(schedule.seed, n, rep), noiseless=noiseless)
            res = solve_map(Observation.pooled(ys, problem), prior, solver_cfg)
            u_n = res.u_hat.coeffs
            r = W @ (problem.apply(u_n) - clean)
            rep_rows.append(ConsistencyRow(n, rep, float(r @ r), float(prior_norm(u_n, prior)),
                                           0.0, res.converged, u_n))
        u_ref = rep_rows[-1].u_n
        for row in rep_rows:
            row.drift = float(besov_norm(row.u_n - u_ref, order, 1, prior.d))
        rows.extend(rep_rows)
    return rows


@dataclass
class ConsistencySummary:
    n_values: list
    median_residual: list
    iqr_residual: list
    mean_residual: list
    median_penalty: list
    median_drift: list
    all_converged: bool
    monotone: bool

    def to_json(self) -> dict:
        return dict(self.__dict__)


def consistency_summary(rows: Sequence[ConsistencyRow], slack: float = 1.5) -> ConsistencySummary:
    """Per-n medians and IQRs; ``monotone`` allows each median to exceed the previous by ``slack`` times."""
    if not rows:
        raise ValueError("empty consistency table")
    ns = sorted({r.n for r in rows})
    med, iqr, mean, pen, drift = [], [], [], [], []
    for n in ns:
        rs = np.array([r.residual_sq for r in rows if r.n == n])
        q1, q2, q3 = np.percentile(rs, [25, 50, 75])
        med.append(float(q2))
        iqr.append(float(q3 - q1))
        mean.append(float(rs.mean()))
        pen.append(float(np.median([r.penalty for r in rows if r.n == n])))
        drift.append(float(np.median([r.drift for r in rows if r.n == n])))
    monotone = all(b <= slack * a for a, b in zip(med, med[1:]))
    return ConsistencySummary(ns, med, iqr, mean, pen, drift, all(r.converged for r in rows), monotone)


def penalty_bound(truth, problem: ForwardProblem, prior: BesovParams, slack: float = 0.5) -> float:
    """``||truth||_{B^s_1} + 2 E|Sigma^-1/2 xi|**2 + slack``; the expectation equals J."""
    return float(prior_norm(truth, prior)) + 2.0 * problem.obs_dim + slack

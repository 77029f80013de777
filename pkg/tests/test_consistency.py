import math

import numpy as np
import pytest
from scipy import integrate

from besovmap.consistency import (
    CSV_HEADER,
    ConsistencyRow,
    ConsistencySchedule,
    cell_seed,
    consistency_summary,
    penalty_bound,
    run_consistency,
)
from besovmap.forward import ForwardProblem, convolution_matrix
from besovmap.prior import BesovParams

SCALAR_PROBLEM = ForwardProblem([[1.0]], 1.0)
SCALAR = BesovParams(s=1.0, N=1)


def shrunk_mean_mse(truth, n):
    """E (soft(ybar, 1/n) - truth)**2 for ybar ~ N(truth, 1/n)."""
    sd, tau = 1 / math.sqrt(n), 1 / n

    def f(y):
        u = math.copysign(max(abs(y) - tau, 0.0), y)
        return (u - truth) ** 2 * math.exp(-0.5 * ((y - truth) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))

    lo, hi = truth - 12 * sd, truth + 12 * sd
    pts = [p for p in (-tau, tau) if lo < p < hi]
    return integrate.quad(f, lo, hi, points=pts or None, epsabs=1e-14, epsrel=1e-12)[0]


def row(n, r, pen=1.0):
    return ConsistencyRow(n, 0, r, pen, 0.0, True)


class TestSchedule:
    @pytest.mark.parametrize("bad", [(), (4, 4), (4, 1), (0, 2)])
    def test_rejects_invalid(self, bad):
        with pytest.raises(ValueError):
            ConsistencySchedule(bad)

    def test_rejects_zero_replicates(self):
        with pytest.raises(ValueError):
            ConsistencySchedule((1, 2), replicates=0)


def test_cell_seeds_distinct_and_stable():
    seeds = {cell_seed(0, n, r) for n in (1, 4, 16) for r in range(10)}
    assert len(seeds) == 30
    assert cell_seed(5, 4, 2) == cell_seed(5, 4, 2)


def test_noiseless_scalar_shrinkage():
    rows = run_consistency([2.0], SCALAR_PROBLEM, SCALAR, ConsistencySchedule((1, 4, 16), 1), noiseless=True)
    np.testing.assert_allclose([r.u_n[0] for r in rows], [1.0, 1.75, 2 - 1 / 16], atol=1e-10)
    assert [r.residual_sq for r in rows] == sorted((r.residual_sq for r in rows), reverse=True)


def test_noiseless_injective_linear():
    p = BesovParams(s=1.5, N=8)
    prob = ForwardProblem(convolution_matrix(p, obs_dim=8), 0.01)
    truth = np.zeros(8)
    truth[[0, 2]] = [1.0, -0.5]
    rows = run_consistency(truth, prob, p, ConsistencySchedule((1, 16, 256), 1), noiseless=True)
    rs = [r.residual_sq for r in rows]
    assert all(b < a for a, b in zip(rs, rs[1:]))
    assert rows[-1].drift == 0.0


@pytest.mark.parametrize("n", [1, 4])
def test_scalar_mean_square_matches_closed_form(n):
    rows = run_consistency([2.0], SCALAR_PROBLEM, SCALAR, ConsistencySchedule((n,), replicates=2000, seed=3))
    r = np.array([x.residual_sq for x in rows])
    assert abs(r.mean() - shrunk_mean_mse(2.0, n)) <= 3 * r.std(ddof=1) / np.sqrt(r.size)


def test_reproducible():
    sched = ConsistencySchedule((1, 4), replicates=3, seed=7)
    a = run_consistency([2.0], SCALAR_PROBLEM, SCALAR, sched)
    b = run_consistency([2.0], SCALAR_PROBLEM, SCALAR, sched)
    assert [x.as_csv() for x in a] == [x.as_csv() for x in b]


def test_csv_layout():
    assert CSV_HEADER == ["n", "replicate", "residual_sq", "penalty", "drift", "converged"]
    assert row(4, 0.5).as_csv() == [4, 0, 0.5, 1.0, 0.0, 1]


class TestSummary:
    def test_single_row(self):
        s = consistency_summary([row(4, 0.25, 2.0)])
        assert s.n_values == [4] and s.median_residual == [0.25] and s.iqr_residual == [0.0]
        assert s.median_penalty == [2.0] and s.monotone and s.all_converged

    def test_increasing_table_not_monotone(self):
        s = consistency_summary([row(1, 1.0), row(4, 2.0), row(16, 4.0)])
        assert not s.monotone

    def test_slack_allows_small_increase(self):
        assert consistency_summary([row(1, 1.0), row(4, 1.4)]).monotone

    def test_empty(self):
        with pytest.raises(ValueError):
            consistency_summary([])


def test_penalty_bound():
    prob = ForwardProblem(np.ones((3, 2)), 1.0)
    p = BesovParams(s=1.0, N=2)
    assert penalty_bound([1.0, 0], prob, p) == pytest.approx(1 + 6 + 0.5)

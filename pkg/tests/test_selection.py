import itertools

import numpy as np
import pytest

from benchsel.errors import DataError, NumericalError
from benchsel.selection import (
    LOG_2PIE,
    CostModel,
    budgeted_entropy,
    entropy_value,
    greedy_entropy,
    greedy_mi,
    lazy_greedy_entropy,
    mi_value,
    random_select,
    residual_trace,
    spectrum,
)

from conftest import random_spd


def pivoted_cholesky_oracle(S, k):
    """Independent pivoted-Cholesky implementation: at each step pick the
    largest residual diagonal of a dense Schur complement, refactoring
    from scratch each time."""
    S = np.asarray(S, dtype=float)
    N = S.shape[0]
    order = []
    traces = [np.trace(S)]
    for _ in range(k):
        rest = [j for j in range(N) if j not in order]
        if order:
            A = np.array(order)
            schur = {}
            SAA = S[np.ix_(A, A)]
            inv = np.linalg.inv(SAA)
            for j in rest:
                schur[j] = S[j, j] - S[j, A] @ inv @ S[A, j]
        else:
            schur = {j: S[j, j] for j in rest}
        pick = max(rest, key=lambda j: (schur[j], -j))
        order.append(pick)
        A = np.array(order)
        SAA = S[np.ix_(A, A)]
        inv = np.linalg.inv(SAA)
        comp = [j for j in range(N) if j not in order]
        if comp:
            C = np.array(comp)
            resid = S[np.ix_(C, C)] - S[np.ix_(C, A)] @ inv @ S[np.ix_(A, C)]
            traces.append(np.trace(resid))
        else:
            traces.append(0.0)
    return order, traces


class TestGreedyEntropy:
    def test_diagonal(self):
        r = greedy_entropy(np.diag([3.0, 2.0, 1.0]), 2)
        assert r.order == (0, 1)
        assert r.objective == "entropy"

    def test_identity_tie_break(self):
        r = greedy_entropy(np.eye(3), 2)
        assert r.order == (0, 1)

    def test_matches_oracle(self):
        S = random_spd(8, seed=42)
        r = greedy_entropy(S, 5)
        order, traces = pivoted_cholesky_oracle(S, 5)
        assert list(r.order) == order
        assert np.allclose(r.residual_trace, traces, atol=1e-8)

    def test_gains_telescope_to_entropy(self):
        S = random_spd(6, seed=7)
        r = greedy_entropy(S, 4)
        assert sum(r.gains) == pytest.approx(entropy_value(S, r.order), abs=1e-8)

    def test_gains_nonincreasing(self):
        S = random_spd(10, seed=9)
        r = greedy_entropy(S, 10)
        assert (np.diff(r.gains) <= 1e-9).all()

    def test_residual_nonincreasing(self):
        S = random_spd(10, seed=10)
        r = greedy_entropy(S, 10)
        assert (np.diff(r.residual_trace) <= 1e-9).all()

    def test_scale_invariance(self):
        S = random_spd(7, seed=11)
        assert greedy_entropy(S, 5).order == greedy_entropy(3.7 * S, 5).order

    def test_degenerate_truncates(self):
        # rank-2 matrix: third pick has zero residual variance
        A = np.random.default_rng(0).normal(size=(2, 5))
        S = A.T @ A
        r = greedy_entropy(S, 4)
        assert r.truncated
        assert len(r.order) == 2

    def test_k_out_of_range(self):
        with pytest.raises(DataError):
            greedy_entropy(np.eye(3), 0)
        with pytest.raises(DataError):
            greedy_entropy(np.eye(3), 4)

    def test_non_psd_rejected(self):
        with pytest.raises(NumericalError):
            greedy_entropy(np.array([[1.0, 2.0], [2.0, 1.0]]), 2)


class TestGreedyMi:
    def test_identity_zero_gains(self):
        r = greedy_mi(np.eye(4), 3)
        assert r.order == (0, 1, 2)
        assert np.allclose(r.gains, 0.0, atol=1e-12)

    def test_bivariate_closed_form(self):
        S = np.array([[1.0, 0.8], [0.8, 1.0]])
        r = greedy_mi(S, 1)
        assert r.order == (0,)
        assert r.gains[0] == pytest.approx(-0.5 * np.log(1 - 0.64), abs=1e-10)
        assert r.gains[0] == pytest.approx(0.5108256237659907, abs=1e-10)

    def test_prefix_matches_direct_mi(self):
        S = random_spd(7, seed=3)
        r = greedy_mi(S, 5)
        acc = 0.0
        for t in range(5):
            acc += r.gains[t]
            assert acc == pytest.approx(mi_value(S, r.order[: t + 1]), abs=1e-8)

    def test_scale_invariance(self):
        S = random_spd(7, seed=4)
        assert greedy_mi(S, 5).order == greedy_mi(0.2 * S, 5).order

    def test_k_range(self):
        with pytest.raises(DataError):
            greedy_mi(np.eye(3), 3)  # complement must stay nonempty


class TestLazyGreedy:
    def test_identical_to_eager(self):
        for seed in range(20):
            S = random_spd(12, seed=seed)
            eager = greedy_entropy(S, 6)
            lazy = lazy_greedy_entropy(S, 6)
            assert lazy.order == eager.order
            assert np.array_equal(lazy.gains, eager.gains)
            assert np.array_equal(lazy.residual_trace, eager.residual_trace)

    def test_reevaluation_bound(self):
        r = lazy_greedy_entropy(np.diag([5.0, 4.0, 3.0, 2.0, 1.0]), 3)
        assert r.reevaluations <= 5 * 3

    def test_large_savings(self):
        S = random_spd(50, seed=77)
        r = lazy_greedy_entropy(S, 10)
        assert r.reevaluations < 0.5 * 50 * 10


class TestBudgeted:
    def test_unit_costs_match_greedy(self):
        S = random_spd(8, seed=5)
        cm = CostModel(costs=np.ones(8), budget=4.0)
        b = budgeted_entropy(S, cm)
        g = greedy_entropy(S, 4)
        assert set(b.order) == set(g.order)

    def test_singleton_branch_wins(self):
        # cheap low-entropy pair vs one expensive high-variance element
        S = np.diag([np.e**2, np.e**10, np.e**2])
        cm = CostModel(costs=np.array([1.0, 10.0, 1.0]), budget=10.0)
        b = budgeted_entropy(S, cm)
        assert set(b.order) == {1}
        # exhaustive check over feasible subsets under the shifted objective
        shift = cm.resolved_shift(S)
        best, best_val = None, -np.inf
        for r in range(1, 4):
            for A in itertools.combinations(range(3), r):
                if sum(cm.costs[list(A)]) > cm.budget:
                    continue
                val = entropy_value(S, A) + shift * len(A)
                if val > best_val:
                    best, best_val = A, val
        got = entropy_value(S, b.order) + shift * len(b.order)
        assert got >= (1 - 1 / np.e) * best_val - 1e-9

    def test_full_budget_takes_everything(self):
        S = random_spd(5, seed=6)
        cm = CostModel(costs=np.ones(5), budget=100.0)
        b = budgeted_entropy(S, cm)
        assert set(b.order) == set(range(5))

    def test_unaffordable(self):
        S = np.eye(2)
        with pytest.raises(DataError):
            budgeted_entropy(S, CostModel(costs=np.array([5.0, 5.0]), budget=1.0))

    def test_cost_within_budget(self):
        rng = np.random.default_rng(8)
        S = random_spd(10, seed=8)
        costs = rng.uniform(0.5, 3.0, size=10)
        b = budgeted_entropy(S, CostModel(costs=costs, budget=6.0))
        assert b.total_cost <= 6.0 + 1e-12


class TestRandomSelect:
    def test_full_permutation(self):
        r = random_select(6, 6, seed=1)
        assert sorted(r.order) == list(range(6))
        assert r.objective == "random"
        assert r.seed == 1

    def test_deterministic(self):
        assert random_select(9, 4, seed=3).order == random_select(9, 4, seed=3).order

    def test_uniformity(self):
        counts = np.zeros(5)
        for seed in range(10000):
            counts[random_select(5, 1, seed=seed).order[0]] += 1
        expect = 2000
        sigma = np.sqrt(10000 * 0.2 * 0.8)
        assert (np.abs(counts - expect) <= 5 * sigma).all()

    def test_k_too_big(self):
        with pytest.raises(DataError):
            random_select(3, 4, seed=0)


class TestValues:
    def test_unit_singleton_entropy(self):
        v = entropy_value(np.eye(3), [1])
        assert v == pytest.approx(0.5 * LOG_2PIE, abs=1e-12)
        assert v == pytest.approx(1.4189385332046727, abs=1e-10)

    def test_identity_additive(self):
        assert entropy_value(np.eye(5), [0, 2, 4]) == pytest.approx(
            3 * 0.5 * LOG_2PIE, abs=1e-12
        )

    def test_mi_block_diagonal_zero(self):
        S = np.block(
            [[random_spd(2, seed=1), np.zeros((2, 3))],
             [np.zeros((3, 2)), random_spd(3, seed=2)]]
        )
        assert mi_value(S, [0, 1]) == pytest.approx(0.0, abs=1e-10)

    def test_mi_bivariate(self):
        S = np.array([[1.0, 0.8], [0.8, 1.0]])
        assert mi_value(S, [0]) == pytest.approx(-0.5 * np.log(0.36), abs=1e-10)

    def test_mi_symmetry_and_boundaries(self):
        S = random_spd(6, seed=12)
        for r in range(1, 6):
            A = list(range(r))
            comp = list(range(r, 6))
            assert mi_value(S, A) == pytest.approx(mi_value(S, comp), abs=1e-9)
            assert mi_value(S, A) >= -1e-9
        assert mi_value(S, []) == 0.0
        assert mi_value(S, list(range(6))) == 0.0


class TestSpectrum:
    def test_identity(self):
        rep = spectrum(np.eye(4))
        assert np.allclose(rep.explained, [0.25, 0.5, 0.75, 1.0], atol=1e-12)

    def test_rank_one(self):
        rep = spectrum(np.ones((3, 3)))
        assert rep.explained[0] == pytest.approx(1.0, abs=1e-12)

    def test_invariants(self):
        rep = spectrum(random_spd(7, seed=13))
        assert (np.diff(rep.eigenvalues) <= 1e-12).all()
        assert np.allclose(rep.residual_fraction, 1 - rep.explained, atol=1e-12)

    def test_smallest_k(self):
        rep = spectrum(np.diag([9.0, 0.5, 0.5]))
        assert rep.smallest_k(0.9) == 1
        assert rep.smallest_k(0.95) == 2


class TestResidualTrace:
    def test_empty_set(self):
        S = random_spd(5, seed=14)
        assert residual_trace(S, []) == pytest.approx(np.trace(S), abs=1e-12)

    def test_diagonal(self):
        S = np.diag([4.0, 3.0, 2.0, 1.0])
        assert residual_trace(S, [0, 2]) == pytest.approx(4.0, abs=1e-12)

    def test_matches_greedy_run(self):
        S = random_spd(9, seed=15)
        r = greedy_entropy(S, 4)
        assert residual_trace(S, r.order) == pytest.approx(
            r.residual_trace[-1], abs=1e-8
        )

    def test_eigen_tail_lower_bound(self):
        S = random_spd(8, seed=16)
        lam = np.sort(np.linalg.eigvalsh(S))[::-1]
        for k in range(1, 8):
            for A in itertools.combinations(range(8), k):
                assert residual_trace(S, list(A)) >= lam[k:].sum() - 1e-8


class TestSubmodularity:
    def test_conditional_variance_gains(self):
        # diminishing returns of the marginal conditional variance,
        # exhaustively over nested subsets of a 6-element ground set
        S = random_spd(6, seed=20)

        def cond_var(j, A):
            if not A:
                return S[j, j]
            A = list(A)
            return S[j, j] - S[j, A] @ np.linalg.solve(S[np.ix_(A, A)], S[A, j])

        universe = range(6)
        for r_a in range(0, 4):
            for A in itertools.combinations(universe, r_a):
                for B in itertools.combinations(universe, r_a + 1):
                    if not set(A) <= set(B):
                        continue
                    for v in universe:
                        if v in set(B):
                            continue
                        assert cond_var(v, A) >= cond_var(v, B) - 1e-9


class TestSerialization:
    def test_to_dict_names(self):
        S = random_spd(4, seed=21)
        r = greedy_entropy(S, 2)
        d = r.to_dict(["a", "b", "c", "d"])
        assert d["objective"] == "entropy"
        assert len(d["selected"]) == 2
        assert len(d["residual_trace"]) == 3
        assert d["truncated"] is False

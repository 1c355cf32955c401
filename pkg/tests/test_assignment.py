import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from setcontrast import assignment
from setcontrast.errors import ShapeError, SizeGuardError

random_costs = st.tuples(
    st.integers(1, 7), st.integers(0, 2 ** 31 - 1)
).map(lambda t: np.random.default_rng(t[1]).normal(size=(t[0], t[0])))


def enumerate_best(s, sense):
    """Reference optimum: scan all permutations, prefer lexicographically
    smaller on exact cost ties."""
    n = s.shape[0]
    best_perm, best_cost = None, None
    for perm in itertools.permutations(range(n)):
        c = float(s[np.arange(n), perm].sum())
        c = -c if sense == "max" else c
        if best_cost is None or c < best_cost:
            best_perm, best_cost = perm, c
    return best_perm


class TestSolveLap:
    @settings(max_examples=60, deadline=None)
    @given(random_costs)
    def test_agrees_with_enumeration(self, s):
        for sense in ("min", "max"):
            fast = assignment.solve_lap(s, sense)
            slow = assignment.brute_force_lap(s, sense)
            assert fast.cost == slow.cost
            assert fast.perm == slow.perm

    @settings(max_examples=60, deadline=None)
    @given(random_costs)
    def test_returns_valid_permutation_and_consistent_cost(self, s):
        res = assignment.solve_lap(s, "min")
        assert sorted(res.perm) == list(range(s.shape[0]))
        assert res.cost == assignment.lap_cost(s, np.array(res.perm))

    def test_constant_matrix_breaks_ties_to_identity(self):
        s = np.full((5, 5), 3.0)
        for sense in ("min", "max"):
            assert assignment.solve_lap(s, sense).perm == (0, 1, 2, 3, 4)
            assert assignment.brute_force_lap(s, sense).perm == (0, 1, 2, 3, 4)

    def test_tied_block_prefers_lexicographic_perm(self):
        # columns 1 and 2 are duplicates, so two optima exist
        s = np.array([
            [0.0, 5.0, 5.0],
            [9.0, 1.0, 1.0],
            [9.0, 1.0, 1.0],
        ])
        assert assignment.solve_lap(s, "min").perm == (0, 1, 2)

    def test_known_instance(self):
        s = np.array([[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]])
        res = assignment.solve_lap(s, "min")
        assert res.perm == (1, 0, 2)
        assert res.cost == pytest.approx(5.0)

    def test_max_sense_negates(self):
        rng = np.random.default_rng(11)
        s = rng.normal(size=(6, 6))
        hi = assignment.solve_lap(s, "max")
        lo = assignment.solve_lap(-s, "min")
        assert hi.perm == lo.perm
        assert hi.cost == pytest.approx(-lo.cost)

    def test_nonsquare_rejected(self):
        with pytest.raises(ShapeError):
            assignment.solve_lap(np.ones((2, 3)), "min")

    def test_integer_costs_with_many_ties(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            n = int(rng.integers(2, 7))
            s = rng.integers(0, 3, size=(n, n)).astype(float)
            fast = assignment.solve_lap(s, "min")
            slow = assignment.brute_force_lap(s, "min")
            assert fast.cost == slow.cost
            assert fast.perm == slow.perm


class TestBruteForce:
    def test_lap_matches_reference_enumeration(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            n = int(rng.integers(1, 6))
            s = rng.integers(0, 4, size=(n, n)).astype(float)
            for sense in ("min", "max"):
                got = assignment.brute_force_lap(s, sense)
                assert got.perm == enumerate_best(s, sense)

    def test_lap_size_guard(self):
        with pytest.raises(SizeGuardError):
            assignment.brute_force_lap(np.ones((11, 11)), "min")

    def test_qap_size_guard(self):
        with pytest.raises(SizeGuardError):
            assignment.brute_force_qap(
                np.ones((9, 9)), np.ones((9, 9)), np.ones((9, 9)), "min")

    def test_qap_matches_reference_enumeration(self):
        rng = np.random.default_rng(14)
        for _ in range(10):
            n = int(rng.integers(2, 6))
            s = rng.normal(size=(n, n))
            s_a = rng.normal(size=(n, n))
            s_a = (s_a + s_a.T) / 2
            s_b = rng.normal(size=(n, n))
            s_b = (s_b + s_b.T) / 2
            got = assignment.brute_force_qap(s, s_a, s_b, "min")
            best = min(
                (assignment.qap_objective(s, s_a, s_b, np.array(p)), p)
                for p in itertools.permutations(range(n)))
            assert got.cost == pytest.approx(best[0], abs=1e-12)
            assert got.perm == best[1]

    def test_qap_reduces_to_lap_when_quadratic_term_vanishes(self):
        rng = np.random.default_rng(15)
        s = rng.normal(size=(5, 5))
        zero = np.zeros((5, 5))
        qap = assignment.brute_force_qap(s, zero, zero, "min")
        lap = assignment.brute_force_lap(s, "min")
        assert qap.perm == lap.perm
        assert qap.cost == pytest.approx(lap.cost)


class TestObjectives:
    def test_lap_cost_indexing(self):
        s = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert assignment.lap_cost(s, np.array([1, 0])) == 5.0
        assert assignment.lap_cost(s, np.array([0, 1])) == 5.0

    def test_qap_objective_identity_perm(self):
        rng = np.random.default_rng(16)
        s = rng.normal(size=(4, 4))
        s_a = rng.normal(size=(4, 4))
        s_b = rng.normal(size=(4, 4))
        p = np.arange(4)
        want = s[np.arange(4), p].sum() + (s_a * s_b).sum()
        assert assignment.qap_objective(s, s_a, s_b, p) == pytest.approx(want)

    def test_matching_accuracy_counts_fixed_points(self):
        s = np.array([
            [0.0, 1.0, 1.0],
            [1.0, 1.0, 0.0],
            [1.0, 0.0, 1.0],
        ])
        # optimal assignment is (0, 2, 1): only item 0 matches identity
        acc = assignment.matching_accuracy(s, np.arange(3))
        assert acc == pytest.approx(1.0 / 3.0)

    def test_matching_accuracy_perfect(self):
        s = np.eye(4) * -1.0
        assert assignment.matching_accuracy(s, np.arange(4)) == 1.0


class TestExhaustiveSmallCases:
    def test_all_two_by_two_integer_matrices(self):
        # every 2x2 matrix over {0,1,2}: cost and tie-broken permutation
        # agree between the solver and enumeration, both senses
        for flat in itertools.product((0.0, 1.0, 2.0), repeat=4):
            s = np.array(flat).reshape(2, 2)
            for sense in ("min", "max"):
                fast = assignment.solve_lap(s, sense)
                slow = assignment.brute_force_lap(s, sense)
                assert fast.cost == slow.cost
                assert fast.perm == slow.perm

    def test_equidistant_sets_make_all_quadratic_costs_equal(self):
        # constant off-diagonal intra-set distances: the quadratic part of
        # the objective cannot distinguish permutations
        rng = np.random.default_rng(12)
        s = rng.normal(size=(4, 4))
        s_intra = 0.7 * (np.ones((4, 4)) - np.eye(4))
        quad = []
        for p in itertools.permutations(range(4)):
            total = assignment.qap_objective(s, s_intra, s_intra, p)
            quad.append(total - assignment.lap_cost(s, p))
        assert max(quad) - min(quad) <= 1e-12

    def test_random_matrix_matching_accuracy_is_chance_level(self):
        # the optimal assignment of an iid matrix is a uniform random
        # permutation, so expected matches with any fixed alignment is 1
        rng = np.random.default_rng(42)
        accs = np.array([
            assignment.matching_accuracy(rng.normal(size=(50, 50)),
                                         np.arange(50))
            for _ in range(1000)
        ])
        band = 3.0 * accs.std(ddof=1) / np.sqrt(accs.size)
        assert abs(accs.mean() - 1.0 / 50.0) <= band

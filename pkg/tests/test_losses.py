import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from setcontrast import assignment, losses, simgeom, tensor as T
from setcontrast.errors import ContractError, ShapeError

random_square = st.tuples(
    st.integers(2, 8), st.integers(0, 2 ** 31 - 1)
).map(lambda t: np.random.default_rng(t[1]).normal(size=(t[0], t[0])))


def identity(n):
    return losses.GroundTruthAlignment.identity(n)


def random_gt(rng, n):
    return losses.GroundTruthAlignment(tuple(int(j) for j in rng.permutation(n)))


class TestStructuredLapLoss:
    def test_known_2x2_instance(self):
        s = np.array([[0.8, 1.0], [1.0, 0.8]])
        val = losses.structured_lap_loss(s, identity(2), margin=0.5).item()
        assert val == pytest.approx(0.6, abs=1e-12)

    def test_zero_when_gt_undercuts_by_more_than_margin(self):
        s = np.array([[0.0, 5.0], [5.0, 0.0]])
        assert losses.structured_lap_loss(s, identity(2), margin=0.5).item() == 0.0

    def test_zero_on_exact_tie_without_margin(self):
        s = np.full((3, 3), 2.0)
        assert losses.structured_lap_loss(s, identity(3), margin=0.0).item() == 0.0

    @settings(max_examples=40, deadline=None)
    @given(random_square)
    def test_nonnegative_and_zero_iff_gt_optimal(self, s):
        n = s.shape[0]
        gt = identity(n)
        val = losses.structured_lap_loss(s, gt, margin=0.5).item()
        assert val >= 0.0
        sm = s + 0.5 * np.eye(n)
        opt = assignment.solve_lap(sm, "min").cost
        gt_cost = float(np.trace(sm))
        if val == 0.0:
            assert gt_cost == pytest.approx(opt, abs=1e-12)
        else:
            assert gt_cost > opt

    def test_envelope_gradient_is_gt_minus_argmin(self):
        rng = np.random.default_rng(20)
        s = rng.normal(size=(4, 4))
        tape = T.Tape()
        leaf = tape.leaf(s)
        val = losses.structured_lap_loss(leaf, identity(4), margin=0.5)
        g = tape.backward(val)[leaf].data
        sm = s + 0.5 * np.eye(4)
        star = assignment.solve_lap(sm, "min").perm
        y_star = np.zeros((4, 4))
        y_star[np.arange(4), star] = 1.0
        np.testing.assert_allclose(g, np.eye(4) - y_star)


class TestBatchHardLapLoss:
    def test_known_2x2_instance(self):
        s = np.array([[0.8, 1.0], [1.0, 0.8]])
        val = losses.batch_hard_lap_loss(s, identity(2), margin=0.5).item()
        assert val == pytest.approx(0.6, abs=1e-12)

    def test_zero_when_hinges_inactive(self):
        s = np.array([[0.0, 2.0, 2.0], [2.0, 0.0, 2.0], [2.0, 2.0, 0.0]])
        assert losses.batch_hard_lap_loss(s, identity(3), margin=0.5).item() == 0.0

    @settings(max_examples=60, deadline=None)
    @given(random_square, st.sampled_from([0.0, 0.3, 0.5]))
    def test_equals_per_row_hinge_form(self, s, m):
        n = s.shape[0]
        rng = np.random.default_rng(int(abs(s[0, 0]) * 1e6) % (2 ** 31))
        gt = random_gt(rng, n)
        got = losses.batch_hard_lap_loss(s, gt, margin=m).item()
        want = 0.0
        for i in range(n):
            j = gt.perm[i]
            neg = np.delete(s[i], j).min()
            want += max(0.0, s[i, j] + m - neg)
        assert got == pytest.approx(want, abs=1e-12)

    def test_never_exceeds_one_to_one_loss(self):
        # relaxing the bijection constraint can only lower the minimum
        rng = np.random.default_rng(21)
        for _ in range(50):
            n = int(rng.integers(2, 7))
            s = rng.normal(size=(n, n))
            gt = random_gt(rng, n)
            relaxed = losses.batch_hard_lap_loss(s, gt, margin=0.5).item()
            exact = losses.structured_lap_loss(s, gt, margin=0.5).item()
            assert relaxed >= exact - 1e-12


class TestSmoothedBatchHard:
    def test_constant_matrix_closed_form(self):
        for n, tau in ((2, 0.05), (5, 0.5), (7, 1.0)):
            s = np.full((n, n), 1.3)
            val = losses.smoothed_batch_hard_loss(
                s, identity(n), temperature=tau).item()
            assert val == pytest.approx(tau * n * np.log(n), rel=1e-12)

    def test_small_temperature_approaches_hard_loss(self):
        rng = np.random.default_rng(22)
        s = rng.normal(size=(5, 5))
        gt = identity(5)
        smooth = losses.smoothed_batch_hard_loss(s, gt, temperature=1e-3).item()
        hard = losses.batch_hard_lap_loss(s, gt, margin=0.0).item()
        assert abs(smooth - hard) < 1e-2

    @settings(max_examples=60, deadline=None)
    @given(random_square, st.sampled_from([0.05, 0.5, 1.0]))
    def test_equals_temperature_times_sum_form(self, s, tau):
        n = s.shape[0]
        gt = identity(n)
        smooth = losses.smoothed_batch_hard_loss(s, gt, temperature=tau).item()
        rows = losses.infonce_loss(s, gt, temperature=tau, reduction="sum").item()
        assert abs(smooth - tau * rows) <= 1e-10


class TestInfoNCE:
    def test_constant_matrix_gives_log_n(self):
        s = np.full((4, 4), 0.7)
        val = losses.infonce_loss(s, identity(4), temperature=0.05).item()
        assert val == pytest.approx(np.log(4.0), rel=1e-12)

    def test_dominated_softmax_bound(self):
        n, tau = 5, 0.1
        s = np.full((n, n), 10.0 * tau)
        np.fill_diagonal(s, 0.0)
        val = losses.infonce_loss(s, identity(n), temperature=tau).item()
        bound = np.log(1.0 + (n - 1) * np.exp(-10.0))
        assert val == pytest.approx(bound, rel=1e-12)
        assert val <= bound * (1.0 + 1e-12)

    def test_mean_is_sum_over_n(self):
        rng = np.random.default_rng(23)
        s = rng.normal(size=(6, 6))
        gt = identity(6)
        mean = losses.infonce_loss(s, gt, temperature=0.05).item()
        total = losses.infonce_loss(s, gt, temperature=0.05, reduction="sum").item()
        assert mean == pytest.approx(total / 6.0, rel=1e-12)

    def test_is_strictly_positive_at_generic_points(self):
        rng = np.random.default_rng(24)
        s = rng.normal(size=(5, 5))
        assert losses.infonce_loss(s, identity(5)).item() > 0.0


class TestNTLogistic:
    def test_zero_positive_and_far_negative(self):
        s = np.array([[0.0, 100.0]])
        gt = losses.GroundTruthAlignment((0,))
        val = losses.nt_logistic_loss(s, gt, temperature=1.0).item()
        assert val == pytest.approx(np.log(2.0), abs=1e-10)

    def test_uniform_2x2_matches_hand_formula(self):
        c = 0.9
        s = np.full((2, 2), c)
        val = losses.nt_logistic_loss(s, identity(2), temperature=1.0).item()
        want = np.log1p(np.exp(c)) + np.log1p(np.exp(-c))
        assert val == pytest.approx(want, rel=1e-12)

    def test_large_temperature_limit(self):
        rng = np.random.default_rng(25)
        s = rng.normal(size=(4, 4))
        val = losses.nt_logistic_loss(s, identity(4), temperature=1e9).item()
        assert val == pytest.approx(2.0 * np.log(2.0), rel=1e-6)

    def test_picks_hardest_negative(self):
        s = np.array([[0.5, 3.0, 1.0, 2.0]])
        gt = losses.GroundTruthAlignment((0,))
        val = losses.nt_logistic_loss(s, gt, temperature=1.0).item()
        want = np.log1p(np.exp(0.5)) + np.log1p(np.exp(-1.0))
        assert val == pytest.approx(want, rel=1e-12)

    def test_needs_at_least_one_negative(self):
        with pytest.raises(ContractError):
            losses.nt_logistic_loss(np.ones((1, 1)),
                                    losses.GroundTruthAlignment((0,)))


class TestSparsemax:
    def test_uniform_input(self):
        np.testing.assert_allclose(losses.sparsemax(np.full(3, 0.4)),
                                   np.full(3, 1.0 / 3.0))

    def test_two_coordinate_closed_form(self):
        np.testing.assert_allclose(losses.sparsemax(np.array([0.6, 0.2])),
                                   [0.7, 0.3], atol=1e-15)
        assert losses.sparsemax_threshold(np.array([0.7, 0.3])) == pytest.approx(0.0)

    def test_dominated_coordinates_clip_to_vertex(self):
        np.testing.assert_allclose(losses.sparsemax(np.array([5.0, 0.0, 0.0])),
                                   [1.0, 0.0, 0.0])
        assert losses.sparsemax_threshold(np.array([5.0, 0.0, 0.0])) == pytest.approx(4.0)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 9), st.integers(0, 2 ** 31 - 1))
    def test_output_lies_on_simplex_and_threshold_identity(self, k, seed):
        z = np.random.default_rng(seed).normal(size=k) * 3.0
        p = losses.sparsemax(z)
        assert p.min() >= 0.0
        assert p.sum() == pytest.approx(1.0, abs=1e-12)
        t = losses.sparsemax_threshold(z)
        np.testing.assert_allclose(p, np.maximum(z - t, 0.0), atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 7), st.integers(0, 2 ** 31 - 1))
    def test_projection_is_idempotent(self, k, seed):
        z = np.random.default_rng(seed).normal(size=k)
        p = losses.sparsemax(z)
        np.testing.assert_allclose(losses.sparsemax(p), p, atol=1e-12)


class TestSparseCLR:
    def test_single_entry_closed_form(self):
        for s_val in (0.3, 1.7):
            s = np.array([[s_val]])
            got = losses.sparseclr_loss(s, identity(1)).item()
            assert got == pytest.approx(2.0 * s_val + 0.5, rel=1e-12)

    def test_gradient_is_gt_plus_rowwise_sparsemax(self):
        rng = np.random.default_rng(26)
        s = np.abs(rng.normal(size=(4, 4))) + 0.1
        tape = T.Tape()
        leaf = tape.leaf(s)
        val = losses.sparseclr_loss(leaf, identity(4))
        g = tape.backward(val)[leaf].data
        want = np.eye(4)
        for i in range(4):
            want[i] += losses.sparsemax(-s[i])
        np.testing.assert_allclose(g, want, atol=1e-12)

    def test_dominant_negative_zeroes_other_gradients(self):
        # first row: one distance far below the rest, so the support of
        # that row collapses onto it and the other columns get no signal
        rng = np.random.default_rng(31)
        s = np.abs(rng.normal(size=(4, 4))) + 3.0
        s[0] = [5.0, 0.01, 6.0, 7.0]
        tape = T.Tape()
        leaf = tape.leaf(s)
        val = losses.sparseclr_loss(leaf, identity(4))
        g = tape.backward(val)[leaf].data
        assert losses.sparsemax(-s[0])[1] == 1.0
        assert g[0, 2] == 0.0
        assert g[0, 3] == 0.0

    def test_uniform_negatives_keep_dense_support(self):
        s = np.full((1, 4), 2.0)
        p = losses.sparsemax(-s[0])
        np.testing.assert_allclose(p, 0.25)


class TestQare:
    def test_zero_matrices(self):
        z = T.Tensor(np.zeros((3, 3)))
        assert losses.qare(z, z, "euclidean").item() == 0.0

    def test_euclidean_known_instance(self):
        s_a = T.Tensor(np.array([[0.0, 1.0], [1.0, 0.0]]))
        s_b = T.Tensor(np.array([[0.0, 2.0], [2.0, 0.0]]))
        assert losses.qare(s_a, s_b, "euclidean").item() == pytest.approx(4.0)

    def test_cosine_known_instance(self):
        i2 = T.Tensor(np.eye(2))
        assert losses.qare(i2, i2, "cosine").item() == pytest.approx(10.0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 5), st.integers(0, 2 ** 31 - 1))
    def test_invariant_to_simultaneous_relabeling(self, n, seed):
        rng = np.random.default_rng(seed)
        s_a = rng.normal(size=(n, n))
        s_a = (s_a + s_a.T) / 2
        s_b = rng.normal(size=(n, n))
        s_b = (s_b + s_b.T) / 2
        base = losses.qare(T.Tensor(s_a), T.Tensor(s_b), "euclidean").item()
        p = rng.permutation(n)
        pa = s_a[np.ix_(p, p)]
        pb = s_b[np.ix_(p, p)]
        moved = losses.qare(T.Tensor(pa), T.Tensor(pb), "euclidean").item()
        assert moved == pytest.approx(base, abs=1e-9)


class TestCombinedLoss:
    def test_beta_zero_is_pairwise(self):
        pw = T.Tensor(1.7)
        q = T.Tensor(4.0)
        assert losses.combined_loss(pw, q, alpha=1.0, beta=0.0, n=2).item() == 1.7

    def test_weighting_arithmetic(self):
        pw = T.Tensor(0.0)
        q = T.Tensor(4.0)
        got = losses.combined_loss(pw, q, alpha=0.0, beta=1.0, n=2).item()
        assert got == pytest.approx(1.0)

    def test_scales_by_squared_batch(self):
        pw = T.Tensor(2.0)
        q = T.Tensor(9.0)
        got = losses.combined_loss(pw, q, alpha=2.0, beta=3.0, n=3).item()
        assert got == pytest.approx(2.0 * 2.0 + 3.0 * 9.0 / 9.0)


class TestStructuredQapExact:
    def test_vanishing_quadratic_term_reduces_to_lap(self):
        rng = np.random.default_rng(27)
        s = rng.normal(size=(4, 4))
        zero = np.zeros((4, 4))
        gt = identity(4)
        got = losses.structured_qap_loss_exact(s, zero, zero, gt)
        want = losses.structured_lap_loss(s, gt, margin=0.0).item()
        assert got == pytest.approx(want, abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 6), st.integers(0, 2 ** 31 - 1))
    def test_spectral_upper_bound_holds(self, n, seed):
        rng = np.random.default_rng(seed)
        s = rng.normal(size=(n, n))
        s_a = rng.normal(size=(n, n))
        s_a = (s_a + s_a.T) / 2
        s_b = rng.normal(size=(n, n))
        s_b = (s_b + s_b.T) / 2
        gt = random_gt(rng, n)
        lhs = losses.structured_qap_loss_exact(s, s_a, s_b, gt)
        lap = losses.structured_lap_loss(s, gt, margin=0.0).item()
        la = simgeom.sym_eigen(s_a).values
        lb = simgeom.sym_eigen(s_b).values
        assert lhs <= lap - simgeom.eig_dot(la, lb, "min") + 1e-9


class TestTwoViewLoss:
    def test_beta_zero_matches_bare_pairwise(self):
        rng = np.random.default_rng(28)
        za, zb = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
        gt = identity(5)
        cfg = losses.LossConfig(name="x", kind="infonce", beta=0.0)
        total, parts = losses.two_view_loss(za, zb, gt, cfg)
        triple = simgeom.pairwise_distances(za, zb, "euclidean")
        bare = losses.infonce_loss(triple.s, gt, temperature=cfg.temperature).item()
        assert total.item() == bare
        assert parts["qare"] == 0.0
        assert parts["total"] == parts["pairwise"]

    def test_cosine_mode_feeds_negated_similarity(self):
        rng = np.random.default_rng(29)
        za, zb = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
        gt = identity(4)
        cfg = losses.LossConfig(name="x", kind="infonce", beta=0.0, mode="cosine")
        total, _ = losses.two_view_loss(za, zb, gt, cfg)
        triple = simgeom.pairwise_distances(za, zb, "cosine")
        bare = losses.infonce_loss(T.scale(triple.s, -1.0), gt,
                                   temperature=cfg.temperature).item()
        assert total.item() == bare

    def test_dispatch_covers_every_kind(self):
        rng = np.random.default_rng(30)
        za, zb = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
        gt = identity(4)
        for kind in losses.LOSS_KINDS:
            mining = "one-to-one" if kind == "margin" else "batch-hard"
            cfg = losses.LossConfig(name="x", kind=kind, mining=mining, beta=1.0)
            total, parts = losses.two_view_loss(za, zb, gt, cfg)
            assert np.isfinite(total.item())
            assert parts["qare"] != 0.0

    def test_batch_size_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            losses.two_view_loss(np.ones((3, 2)), np.ones((4, 2)),
                                 identity(3), losses.LossConfig(name="x"))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(2, 6), st.integers(0, 2 ** 31 - 1))
    def test_invariant_to_simultaneous_row_permutation(self, n, seed):
        rng = np.random.default_rng(seed)
        za, zb = rng.normal(size=(n, 3)), rng.normal(size=(n, 3))
        p = rng.permutation(n)
        gt = identity(n)
        for kind in losses.LOSS_KINDS:
            mining = "one-to-one" if kind == "margin" else "batch-hard"
            cfg = losses.LossConfig(name="x", kind=kind, mining=mining, beta=1.0)
            base = losses.two_view_loss(za, zb, gt, cfg)[0].item()
            moved = losses.two_view_loss(za[p], zb[p], gt, cfg)[0].item()
            assert moved == pytest.approx(base, abs=1e-12)


class TestLossConfigValidation:
    @pytest.mark.parametrize("kwargs", [
        dict(temperature=0.0),
        dict(margin=-0.1),
        dict(alpha=0.0, beta=0.0),
        dict(beta=-1.0),
        dict(kind="nope"),
        dict(mining="sideways"),
        dict(kind="infonce", mining="one-to-one"),
        dict(mode="manhattan"),
        dict(reduction="median"),
    ])
    def test_invalid_configs_rejected(self, kwargs):
        with pytest.raises(ContractError):
            losses.LossConfig(name="x", **kwargs)

    def test_alignment_must_be_bijection(self):
        with pytest.raises(ContractError):
            losses.structured_lap_loss(np.ones((2, 2)),
                                       losses.GroundTruthAlignment((0, 0)),
                                       margin=0.0)


class TestTiedOptimum:
    def test_structured_lap_zero_when_gt_tied_at_margin_zero(self):
        s = np.full((3, 3), 1.4)
        gt = losses.GroundTruthAlignment((0, 1, 2))
        assert losses.structured_lap_loss(s, gt, margin=0.0).item() == 0.0

"""Losses: frozen value oracles, routing decomposition, gradient agreement."""

import numpy as np
import pytest

from fpmt import losses as ls
from fpmt import numcore as nc
from fpmt.errors import ConfigError, ContractError, DataError, DimensionError
from fpmt.mixing import MixPair

LN2 = 0.6931471805599453
# (ln 2 + ln(4/3)) / 2 and 0.5 ln 2 + 0.5 ln(2/3), both frozen from
# 50-digit evaluations of the definitions
CE_BATCH = 0.49041462650586312
KL_VALUE = 0.14384103622589046
KL_REVERSED = 0.13081203594113694


class TestCrossEntropy:
    def test_perfect_prediction_near_zero(self):
        out = ls.cross_entropy([[1.0, 0.0]], [[1.0 - nc.EPS, nc.EPS]])
        assert 0.0 <= out.item() < 1e-11

    def test_uniform_prediction_ln2(self):
        out = ls.cross_entropy([[1.0, 0.0]], [[0.5, 0.5]])
        assert out.item() == pytest.approx(LN2, abs=1e-9)

    def test_two_row_batch_oracle(self):
        targets = [[1.0, 0.0], [0.0, 1.0]]
        probs = [[0.5, 0.5], [0.25, 0.75]]
        assert ls.cross_entropy(targets, probs).item() == pytest.approx(CE_BATCH, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            ls.cross_entropy([[1.0, 0.0]], [[0.5, 0.25, 0.25]])

    def test_ce_at_least_entropy_of_soft_targets(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            y = nc.softmax_stable(rng.normal(size=(3, 4)))
            p = nc.softmax_stable(rng.normal(size=(3, 4)))
            ce = ls.cross_entropy(y, p).item()
            entropy = -(y * np.log(y)).sum() / 3
            assert ce >= entropy - 1e-9
        y = nc.softmax_stable(rng.normal(size=(2, 3)))
        assert ls.cross_entropy(y, y).item() == pytest.approx(
            -(y * np.log(y)).sum() / 2, abs=1e-9)


class TestKlConsistency:
    def test_equal_rows_exactly_zero(self):
        q = np.array([[0.3, 0.7], [0.6, 0.4]])
        assert ls.kl_consistency(q, q).item() == 0.0

    def test_value_oracle(self):
        out = ls.kl_consistency([[0.5, 0.5]], [[0.25, 0.75]])
        assert out.item() == pytest.approx(KL_VALUE, abs=1e-9)

    def test_reversed_direction_oracle(self):
        out = ls.kl_consistency([[0.5, 0.5]], [[0.25, 0.75]],
                                kl_direction="target-first")
        assert out.item() == pytest.approx(KL_REVERSED, abs=1e-9)

    def test_nonnegative_on_random_simplex_pairs(self):
        rng = np.random.default_rng(9)
        for _ in range(300):
            p = nc.softmax_stable(rng.normal(size=(2, 3)))
            q = nc.softmax_stable(rng.normal(size=(2, 3)))
            assert ls.kl_consistency(p, q).item() >= -1e-12

    def test_bad_direction(self):
        with pytest.raises(ConfigError):
            ls.kl_consistency([[0.5, 0.5]], [[0.5, 0.5]], kl_direction="sideways")


class TestCombine:
    def test_plain_sum(self):
        out = ls.combine(1.0, 0.5, 1.0)
        assert out.l_total == 1.5

    def test_zero_weight_supervised_only(self):
        out = ls.combine(0.7311, 123.4, 0.0)
        assert out.l_total == 0.7311

    def test_forced_arithmetic(self):
        out = ls.combine(0.49, 0.144, 2.0)
        assert out.l_total == pytest.approx(0.778, abs=1e-12)

    def test_identity_to_1e12_with_nodes(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            lx = nc.constant([[rng.uniform(0, 3)]])
            lu = nc.constant([[rng.uniform(0, 3)]])
            w = rng.uniform(0, 2)
            out = ls.combine(lx, lu, w)
            assert abs(out.l_total - (out.l_x + w * out.l_u)) <= 1e-12
            assert out.node is not None

    def test_negative_weight_rejected(self):
        with pytest.raises(ConfigError):
            ls.combine(1.0, 1.0, -0.1)


def _pairs(origins):
    return [MixPair(index_q=i, index_p=i, origin_q=a, origin_p=b)
            for i, (a, b) in enumerate(origins)]


class TestRouteLosses:
    def test_all_labeled_zeroes_consistency(self):
        logits = nc.constant(np.random.default_rng(0).normal(size=(3, 2)))
        y = nc.softmax_stable(np.random.default_rng(1).normal(size=(3, 2)))
        out = ls.route_losses(_pairs([("labeled", "labeled")] * 3), logits, y, w=1.0)
        assert out.l_u == 0.0
        assert out.l_x > 0.0

    def test_all_unlabeled_zeroes_supervised(self):
        logits = nc.constant(np.random.default_rng(2).normal(size=(3, 2)))
        y = nc.softmax_stable(np.random.default_rng(3).normal(size=(3, 2)))
        out = ls.route_losses(_pairs([("unlabeled", "unlabeled")] * 3), logits, y, w=1.0)
        assert out.l_x == 0.0
        assert out.l_u >= 0.0

    def test_one_pair_of_each_kind_hand_summed(self):
        rng = np.random.default_rng(5)
        logits_arr = rng.normal(size=(3, 2))
        y = nc.softmax_stable(rng.normal(size=(3, 2)))
        pairs = _pairs([("labeled", "labeled"),
                        ("unlabeled", "unlabeled"),
                        ("labeled", "unlabeled")])
        w = 0.8
        out = ls.route_losses(pairs, nc.constant(logits_arr), y, w=w)

        # independent recomputation with plain numpy
        p = nc.softmax_stable(logits_arr)
        p = np.maximum(p, nc.EPS)
        ce_rows = -(y * np.log(p)).sum(axis=1)
        kl_rows = (p * (np.log(p) - np.log(np.maximum(y, nc.EPS)))).sum(axis=1)
        expect_lx = (ce_rows[0] + ce_rows[2]) / 2
        expect_lu = (kl_rows[1] + kl_rows[2]) / 2
        assert out.l_x == pytest.approx(expect_lx, abs=1e-12)
        assert out.l_u == pytest.approx(expect_lu, abs=1e-12)
        assert out.l_total == pytest.approx(expect_lx + w * expect_lu, abs=1e-12)

    def test_removing_unlabeled_pairs_preserves_lx(self):
        rng = np.random.default_rng(7)
        logits = rng.normal(size=(4, 2))
        y = nc.softmax_stable(rng.normal(size=(4, 2)))
        mixed = _pairs([("labeled", "labeled"), ("labeled", "labeled"),
                        ("unlabeled", "unlabeled"), ("unlabeled", "unlabeled")])
        full = ls.route_losses(mixed, nc.constant(logits), y, w=1.0)
        only_labeled = ls.route_losses(mixed[:2], nc.constant(logits[:2]), y[:2], w=1.0)
        assert only_labeled.l_x == pytest.approx(full.l_x, abs=1e-12)
        assert only_labeled.l_u == 0.0

    def test_pair_count_mismatch(self):
        with pytest.raises(ContractError):
            ls.route_losses(_pairs([("labeled", "labeled")]),
                            nc.constant(np.zeros((2, 2))),
                            np.full((2, 2), 0.5), w=1.0)


class TestMaskedReconLoss:
    def test_perfect_reconstruction(self):
        x = np.array([[1.0, 2.0]])
        out = ls.masked_recon_loss(x, np.ones_like(x), nc.constant(x))
        assert out.item() == 0.0

    def test_single_masked_position(self):
        out = ls.masked_recon_loss(np.array([[1.0, 2.0]]), np.array([[1.0, 0.0]]),
                                   nc.constant(np.array([[0.0, 0.0]])))
        assert out.item() == 1.0

    def test_both_positions(self):
        out = ls.masked_recon_loss(np.array([[1.0, 2.0]]), np.array([[1.0, 1.0]]),
                                   nc.constant(np.array([[0.0, 0.0]])))
        assert out.item() == 2.5

    def test_empty_mask_rejected(self):
        x = np.ones((2, 2))
        with pytest.raises(DataError):
            ls.masked_recon_loss(x, np.zeros_like(x), nc.constant(x))


class TestGradients:
    def test_ce_gradient_wrt_logits(self):
        rng = np.random.default_rng(21)
        params = nc.ParameterSet()
        z = params.add("logits", rng.normal(size=(4, 3)))
        y = nc.softmax_stable(rng.normal(size=(4, 3)))

        def loss_fn():
            return ls.cross_entropy(y, nc.softmax(z))

        report = nc.grad_check(params, loss_fn, tol=1e-4)
        assert report.passed, str(report)

    def test_kl_gradient_wrt_logits_both_directions(self):
        rng = np.random.default_rng(22)
        for direction in ls.KL_DIRECTIONS:
            params = nc.ParameterSet()
            z = params.add("logits", rng.normal(size=(3, 3)))
            q = nc.softmax_stable(rng.normal(size=(3, 3)))

            def loss_fn():
                return ls.kl_consistency(nc.softmax(z), q, kl_direction=direction)

            report = nc.grad_check(params, loss_fn, tol=1e-4)
            assert report.passed, f"{direction}: {report}"

    def test_route_losses_gradient(self):
        rng = np.random.default_rng(23)
        params = nc.ParameterSet()
        z = params.add("logits", rng.normal(size=(3, 2)))
        y = nc.softmax_stable(rng.normal(size=(3, 2)))
        pairs = _pairs([("labeled", "labeled"), ("unlabeled", "unlabeled"),
                        ("labeled", "unlabeled")])

        def loss_fn():
            return ls.route_losses(pairs, z, y, w=0.7).node

        report = nc.grad_check(params, loss_fn, tol=1e-4)
        assert report.passed, str(report)


class TestConsistencyWeight:
    def test_ramp_shape(self):
        assert ls.consistency_weight(0, 100, w_max=2.0, ramp_fraction=0.2) == 0.0
        assert ls.consistency_weight(10, 100, w_max=2.0, ramp_fraction=0.2) == 1.0
        assert ls.consistency_weight(20, 100, w_max=2.0, ramp_fraction=0.2) == 2.0
        assert ls.consistency_weight(99, 100, w_max=2.0, ramp_fraction=0.2) == 2.0

    def test_zero_ramp_is_constant(self):
        assert ls.consistency_weight(0, 100, w_max=1.5, ramp_fraction=0.0) == 1.5

    def test_invalid_config(self):
        with pytest.raises(ConfigError):
            ls.consistency_weight(0, 10, w_max=-1.0)

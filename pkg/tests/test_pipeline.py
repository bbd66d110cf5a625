"""Pipeline: stage contracts, isolation, determinism, variant wiring."""

import numpy as np
import pytest

from fpmt import data as dt
from fpmt import encoder as enc
from fpmt import numcore as nc
from fpmt import pipeline as pl
from fpmt.errors import ConfigError
from fpmt.gan_augment import GanConfig
from fpmt.losses import masked_recon_loss
from fpmt.mixing import MixPolicy


def tiny_dataset(seed=0, n=150):
    return dt.generate_synthetic(n, n, seed=seed, delta=2.0)


def tiny_config(**kw):
    defaults = dict(stage1_epochs=3, stage2_epochs=5, stage3_epochs=3,
                    batch_size=32, labeled_per_class=10, unlabeled_per_class=60,
                    test_per_class=40, seed=1, depth=3, width=12,
                    lr_scale=300.0, gan=GanConfig(steps=40))
    defaults.update(kw)
    return pl.PipelineConfig(**defaults)


def tiny_encoder(d=8, seed=1, depth=3, width=12):
    return enc.Encoder(enc.EncoderConfig(input_dim=d, depth=depth, width=width),
                       seed=seed)


def params_equal(a, b):
    return all(np.array_equal(na.value, nb.value)
               for (_, na), (_, nb) in zip(a.parameters.items(), b.parameters.items()))


class TestConfig:
    def test_variant_wiring(self):
        assert pl.PipelineConfig(variant="mt").mix_policy.mode == "beta"
        assert not pl.PipelineConfig(variant="mt").gan_enabled
        assert pl.PipelineConfig(variant="pmt").mix_policy.mode == "confidence"
        assert not pl.PipelineConfig(variant="pmt").gan_enabled
        assert pl.PipelineConfig(variant="fpmt").mix_policy.mode == "confidence"
        assert pl.PipelineConfig(variant="fpmt").gan_enabled

    def test_invalid_variant(self):
        with pytest.raises(ConfigError):
            pl.PipelineConfig(variant="bert")

    def test_two_tier_rates(self):
        cfg = pl.PipelineConfig(lr_encoder=1e-5, lr_head=1e-3, lr_scale=100.0)
        assert cfg.trunk_lr == pytest.approx(1e-3)
        assert cfg.head_lr == pytest.approx(0.1)


class TestStage1:
    def test_zero_epochs_leaves_encoder_unchanged(self):
        e = tiny_encoder()
        before = e.parameters.copy_values()
        pl.stage1_pretrain(e, np.random.default_rng(0).normal(size=(50, 8)),
                           tiny_config(stage1_epochs=0))
        for name, arr in before.items():
            np.testing.assert_array_equal(e.parameters[name].value, arr)

    def test_reconstruction_improves_over_epochs(self):
        for seed in range(5):
            ds, _ = dt.standardize(dt.generate_synthetic(600, 600, seed=seed, delta=2.0))
            e = tiny_encoder(seed=seed, width=32)
            _, history = pl.stage1_pretrain(
                e, ds.features,
                tiny_config(stage1_epochs=12, batch_size=64, width=32, seed=seed))
            assert history[-1].l_x < history[0].l_x

    def test_trained_encoder_beats_untrained_on_masked_mse(self):
        ds, _ = dt.standardize(tiny_dataset(3))
        cfg = tiny_config(stage1_epochs=10, seed=3)
        trained = tiny_encoder(seed=3)
        pl.stage1_pretrain(trained, ds.features, cfg)
        fresh = tiny_encoder(seed=3)
        rng = np.random.default_rng(7)
        batch = ds.features[:64]
        mask = (rng.random(batch.shape) < 0.15).astype(float)
        masked = batch * (1.0 - mask)
        mse_trained = masked_recon_loss(batch, mask, enc.reconstruct(trained, masked)).item()
        mse_fresh = masked_recon_loss(batch, mask, enc.reconstruct(fresh, masked)).item()
        assert mse_trained < mse_fresh

    def test_deterministic_per_seed(self):
        ds, _ = dt.standardize(tiny_dataset(4))
        runs = []
        for _ in range(2):
            e = tiny_encoder(seed=4)
            pl.stage1_pretrain(e, ds.features, tiny_config(seed=4))
            runs.append(e)
        assert params_equal(*runs)


class TestStage2:
    def make_labeled(self, seed=5):
        ds, _ = dt.standardize(tiny_dataset(seed))
        res = dt.split(ds, dt.SplitSpec(30, 60, 40, seed=seed))
        return res.labeled

    def test_zero_epochs_unchanged(self):
        e = tiny_encoder()
        before = e.parameters.copy_values()
        pl.stage2_supervised(e, self.make_labeled(), tiny_config(stage2_epochs=0))
        for name, arr in before.items():
            np.testing.assert_array_equal(e.parameters[name].value, arr)

    def test_training_accuracy_trend_nonnegative(self):
        labeled = self.make_labeled(6)
        e = tiny_encoder(seed=6)
        cfg = tiny_config(stage2_epochs=1, seed=6)
        accs = []
        for _ in range(15):
            pl.stage2_supervised(e, labeled, cfg)
            accs.append((enc.predict_labels(e, labeled.features) == labeled.labels).mean())
        # slope over 5-epoch windows stays nonnegative within noise
        windows = [np.mean(accs[i:i + 5]) for i in range(0, 15, 5)]
        assert all(b >= a - 0.02 for a, b in zip(windows, windows[1:]))

    def test_gradient_matches_finite_differences_at_start(self):
        labeled = self.make_labeled(7)
        e = enc.Encoder(enc.EncoderConfig(input_dim=8, depth=2, width=6), seed=7)
        onehot = np.zeros((labeled.n, 2))
        onehot[np.arange(labeled.n), labeled.labels] = 1.0

        def loss_fn():
            from fpmt.losses import cross_entropy
            return cross_entropy(onehot, nc.softmax(enc.forward_full(e, labeled.features)))

        report = nc.grad_check(e.parameters, loss_fn, tol=1e-4,
                               max_entries_per_param=6)
        assert report.passed, str(report)


def split_for_stage3(seed=8):
    ds, _ = dt.standardize(tiny_dataset(seed))
    return dt.split(ds, dt.SplitSpec(10, 60, 40, seed=seed))


class TestStage3:
    def test_both_policies_smoke_decreasing_total(self):
        res = split_for_stage3()
        for policy_cfg in (dict(mix_policy=MixPolicy("beta", beta_alpha=16.0)),
                           dict(variant="pmt")):
            e = tiny_encoder(seed=8)
            pl.stage1_pretrain(e, res.unlabeled.features, tiny_config(seed=8))
            pl.stage2_supervised(e, res.labeled, tiny_config(seed=8))
            cfg = tiny_config(stage3_epochs=8, seed=8, **policy_cfg)
            _, history = pl.stage3_semisupervised(e, res.labeled, res.unlabeled, cfg)
            totals = [b.l_total for b in history]
            assert all(np.isfinite(totals))
            assert np.mean(totals[-3:]) < np.mean(totals[:3])

    def test_w_zero_nullifies_consistency_term(self):
        # with w_max = 0 the KL term cannot influence training: swapping its
        # direction must leave the trained parameters bit-identical
        res = split_for_stage3(9)
        trained = []
        for direction in ("model-first", "target-first"):
            e = tiny_encoder(seed=9)
            cfg = tiny_config(stage3_epochs=3, seed=9, w_max=0.0,
                              kl_direction=direction, variant="pmt")
            pl.stage3_semisupervised(e, res.labeled, res.unlabeled, cfg)
            trained.append(e)
        assert params_equal(*trained)
        _, history = pl.stage3_semisupervised(
            tiny_encoder(seed=9), res.labeled, res.unlabeled,
            tiny_config(stage3_epochs=1, seed=9, w_max=0.0, variant="pmt"))
        assert all(b.l_total == b.l_x for b in history)

    def test_deterministic_reports(self):
        res = split_for_stage3(10)
        histories = []
        for _ in range(2):
            e = tiny_encoder(seed=10)
            _, history = pl.stage3_semisupervised(
                e, res.labeled, res.unlabeled,
                tiny_config(stage3_epochs=2, seed=10, variant="pmt"))
            histories.append(history)
        assert histories[0] == histories[1]

    def test_pseudo_labels_fresh_every_batch(self, monkeypatch):
        res = split_for_stage3(11)
        calls = {"n": 0}
        original = pl.pseudo_label

        def counting(encoder, batch):
            calls["n"] += 1
            return original(encoder, batch)

        monkeypatch.setattr(pl, "pseudo_label", counting)
        cfg = tiny_config(stage3_epochs=3, seed=11, variant="pmt", batch_size=16)
        pl.stage3_semisupervised(tiny_encoder(seed=11), res.labeled,
                                 res.unlabeled, cfg)
        batches_per_epoch = int(np.ceil(res.unlabeled.n / 16))
        assert calls["n"] == 3 * batches_per_epoch

    def test_mix_targets_and_ratios_are_detached_constants(self):
        from fpmt.mixing import MixTarget, ptmix_forward
        e = tiny_encoder(seed=12)
        rng = np.random.default_rng(12)
        x, xp = rng.normal(size=(4, 8)), rng.normal(size=(4, 8))
        t = MixTarget(np.full((4, 2), 0.5), np.full(4, 0.9))
        logits, y_tilde, lams = ptmix_forward(e, x, xp, t, t, 2)
        assert isinstance(logits, nc.Node)
        assert isinstance(y_tilde, np.ndarray)  # not part of the graph
        assert isinstance(lams, np.ndarray)


class TestRunFpmt:
    def test_stage_order_and_history_length(self):
        cfg = tiny_config()
        result = pl.run_fpmt(tiny_dataset(), cfg)
        stages = [r.stage for r in result.report.records]
        assert stages == sorted(stages)
        assert len(stages) == (cfg.stage1_epochs + cfg.stage2_epochs
                               + cfg.stage3_epochs)
        assert result.report.final_metrics is not None

    def test_stage_isolation(self):
        ds = tiny_dataset()
        cfg = tiny_config(stage3_epochs=0)
        full = pl.run_fpmt(ds, cfg)

        std, _ = dt.standardize(ds)
        splits = dt.split(std, dt.SplitSpec(cfg.labeled_per_class,
                                            cfg.unlabeled_per_class,
                                            cfg.test_per_class, seed=cfg.seed))
        manual = enc.Encoder(enc.EncoderConfig(input_dim=std.d, depth=cfg.depth,
                                               width=cfg.width), seed=cfg.seed)
        pool = np.vstack([splits.labeled.features, splits.unlabeled.features])
        pl.stage1_pretrain(manual, pool, cfg)
        pl.stage2_supervised(manual, splits.labeled, cfg)
        assert params_equal(full.encoder, manual)

    def test_all_epochs_zero_keeps_initialization(self):
        cfg = tiny_config(stage1_epochs=0, stage2_epochs=0, stage3_epochs=0)
        result = pl.run_fpmt(tiny_dataset(), cfg)
        fresh = enc.Encoder(enc.EncoderConfig(input_dim=8, depth=cfg.depth,
                                              width=cfg.width), seed=cfg.seed)
        assert params_equal(result.encoder, fresh)

    def test_checkpoint_bytes_reproducible(self, tmp_path):
        ds = tiny_dataset()
        for name in ("a", "b"):
            result = pl.run_fpmt(ds, tiny_config(variant="pmt"))
            enc.save_checkpoint(result.encoder, tmp_path / f"{name}.ckpt",
                                extras=result.norm_extras)
            result.report.save_csv(tmp_path / f"{name}.csv")
        assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_report_csv_format(self, tmp_path):
        result = pl.run_fpmt(tiny_dataset(), tiny_config())
        path = tmp_path / "report.csv"
        result.report.save_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "epoch,stage,L_x,L_u,w,L_total"
        assert len(lines) == 1 + len(result.report.records)

    def test_gan_variant_balances_before_split(self):
        ds = dt.generate_synthetic(260, 110, seed=2, delta=2.0)
        cfg = tiny_config(variant="fpmt", labeled_per_class=10,
                          unlabeled_per_class=100, test_per_class=40)
        result = pl.run_fpmt(ds, cfg)
        # class 1 has only 110 real rows; labeled+unlabeled+test needs 150
        assert result.splits.unlabeled.n == 200

    def test_feasible_unlabeled_helper(self):
        ds = tiny_dataset()  # 150 per class
        assert pl.feasible_unlabeled_per_class(ds, 10, 40) == 100


"""Three-stage trainer: masked pretraining, supervised, semi-supervised.

Stage 1 minimizes a masked-feature reconstruction loss over the whole
training pool (labeled + unlabeled rows). Stage 2 fine-tunes on the labeled
split with cross-entropy. Stage 3 pairs labeled and unlabeled rows, mixes
their hidden states under the configured ratio policy, and routes the mixed
batch into supervised and consistency terms with a ramped weight.

Pseudo-labels are recomputed from the current encoder at the start of every
stage-3 batch and enter the loss as constants, as does the mixing ratio.
The optimizer is plain mini-batch gradient descent with two learning-rate
tiers (trunk vs classification head), each multiplied by ``lr_scale``.

Named variants wire the ablation ladder: ``mt`` = Beta ratios without GAN
balancing, ``pmt`` = confidence ratios without GAN, ``fpmt`` = confidence
ratios on the GAN-balanced pool.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import numcore as nc
from .data import UNLABELED, Dataset, SplitSpec, load_csv, split, standardize
from .encoder import (Encoder, EncoderConfig, forward_full, pseudo_label,
                      predict_labels, reconstruct)
from .errors import ConfigError, NumericError, TrainingError
from .gan_augment import GanConfig, balance_and_expand
from .losses import (LossBreakdown, combine, consistency_weight, cross_entropy,
                     masked_recon_loss, route_losses)
from .metrics import Metrics, compute_metrics
from .mixing import (MixPolicy, assign_lambdas, build_mix_targets, pair_batch,
                     ptmix_forward, tmix_forward)

log = logging.getLogger(__name__)

VARIANTS = ("mt", "pmt", "fpmt")


@dataclass
class PipelineConfig:
    # stage schedule
    stage1_epochs: int = 20
    stage2_epochs: int = 30
    stage3_epochs: int = 50
    batch_size: int = 64
    # two-tier learning rates; the raw reference values times a desk scale
    lr_encoder: float = 1e-5
    lr_head: float = 1e-3
    lr_scale: float = 100.0
    # mixing
    mix_policy: MixPolicy = field(default_factory=MixPolicy)
    mix_layer: int | None = None
    # consistency weight schedule
    w_max: float = 1.0
    w_ramp_fraction: float = 0.2
    kl_direction: str = "model-first"
    # encoder architecture
    depth: int = 6
    width: int = 32
    activation: str = "tanh"
    class_count: int = 2
    # stage-1 masking
    mask_rate: float = 0.15
    # data regime
    labeled_per_class: int = 50
    unlabeled_per_class: int = 5000
    test_per_class: int = 500
    target_per_class: int | None = None  # None: smallest feasible target
    # augmentation
    gan_enabled: bool = False
    gan: GanConfig = field(default_factory=GanConfig)
    seed: int = 0
    variant: str | None = None  # mt | pmt | fpmt; overrides policy + gan flag

    def __post_init__(self):
        if min(self.stage1_epochs, self.stage2_epochs, self.stage3_epochs) < 0:
            raise ConfigError("epoch counts must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if min(self.lr_encoder, self.lr_head, self.lr_scale) <= 0:
            raise ConfigError("learning rates must be > 0")
        if not 0.0 < self.mask_rate < 1.0:
            raise ConfigError("mask_rate must be in (0, 1)")
        if self.variant is not None:
            if self.variant not in VARIANTS:
                raise ConfigError(f"variant must be one of {VARIANTS}")
            self.mix_policy = replace(
                self.mix_policy,
                mode="beta" if self.variant == "mt" else "confidence")
            self.gan_enabled = self.variant == "fpmt"

    @property
    def trunk_lr(self) -> float:
        return self.lr_encoder * self.lr_scale

    @property
    def head_lr(self) -> float:
        return self.lr_head * self.lr_scale


@dataclass
class EpochRecord:
    epoch: int
    stage: int
    breakdown: LossBreakdown


@dataclass
class TrainReport:
    records: list[EpochRecord] = field(default_factory=list)
    wall_clock: dict[int, float] = field(default_factory=dict)
    final_metrics: Metrics | None = None
    seed: int = 0

    def stage_boundaries(self) -> dict[int, tuple[int, int]]:
        bounds: dict[int, tuple[int, int]] = {}
        for rec in self.records:
            lo, hi = bounds.get(rec.stage, (rec.epoch, rec.epoch))
            bounds[rec.stage] = (min(lo, rec.epoch), max(hi, rec.epoch))
        return bounds

    def extend(self, stage: int, losses: list[LossBreakdown]) -> None:
        start = len(self.records)
        for i, breakdown in enumerate(losses):
            self.records.append(EpochRecord(start + i, stage, breakdown))

    def save_csv(self, path) -> None:
        lines = ["epoch,stage,L_x,L_u,w,L_total"]
        for rec in self.records:
            b = rec.breakdown
            lines.append(f"{rec.epoch},{rec.stage},"
                         f"{b.l_x:.17g},{b.l_u:.17g},{b.w:.17g},{b.l_total:.17g}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def _step_encoder(encoder: Encoder, trunk_lr: float, class_lr: float = 0.0,
                  recon_lr: float = 0.0) -> None:
    for name, node in encoder.parameters.items():
        if name.startswith("layer"):
            lr = trunk_lr
        elif name.startswith("class_head"):
            lr = class_lr
        else:
            lr = recon_lr
        if lr:
            encoder.parameters.set_value(name, node.value - lr * node.grad)


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


class _Cycler:
    """Endless reshuffling iterator over row indices."""

    def __init__(self, n: int, rng: np.random.Generator):
        self.n, self.rng = n, rng
        self.order = rng.permutation(n)
        self.pos = 0

    def take(self, k: int) -> np.ndarray:
        out = []
        while k > 0:
            if self.pos == self.n:
                self.order = self.rng.permutation(self.n)
                self.pos = 0
            grab = min(k, self.n - self.pos)
            out.append(self.order[self.pos:self.pos + grab])
            self.pos += grab
            k -= grab
        return np.concatenate(out)


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def stage1_pretrain(encoder: Encoder, all_features: np.ndarray,
                    config: PipelineConfig) -> tuple[Encoder, list[LossBreakdown]]:
    """Masked-feature reconstruction over the whole training pool."""
    features = nc.matrix(all_features)
    rng = np.random.default_rng([config.seed, 1])
    history = []
    for epoch in range(config.stage1_epochs):
        losses = []
        for idx in _batches(features.shape[0], config.batch_size, rng):
            batch = features[idx]
            mask = (rng.random(batch.shape) < config.mask_rate).astype(np.float64)
            if mask.sum() == 0:
                mask[0, rng.integers(batch.shape[1])] = 1.0
            try:
                encoder.parameters.zero_grad()
                loss = masked_recon_loss(batch, mask, reconstruct(encoder, batch * (1.0 - mask)))
                nc.backward(loss)
                _step_encoder(encoder, trunk_lr=config.trunk_lr, recon_lr=config.trunk_lr)
            except NumericError as exc:
                raise TrainingError(f"stage 1 diverged at epoch {epoch}: {exc}") from exc
            losses.append(loss.item())
        history.append(combine(float(np.mean(losses)), 0.0, 0.0))
    return encoder, history


def stage2_supervised(encoder: Encoder, labeled: Dataset,
                      config: PipelineConfig) -> tuple[Encoder, list[LossBreakdown]]:
    """Cross-entropy on the labeled split with two-tier learning rates."""
    if labeled.n == 0:
        raise TrainingError("stage 2 needs a non-empty labeled split")
    rng = np.random.default_rng([config.seed, 2])
    onehot = np.zeros((labeled.n, config.class_count))
    onehot[np.arange(labeled.n), labeled.labels] = 1.0
    history = []
    for epoch in range(config.stage2_epochs):
        losses = []
        for idx in _batches(labeled.n, config.batch_size, rng):
            try:
                encoder.parameters.zero_grad()
                probs = nc.softmax(forward_full(encoder, labeled.features[idx]))
                loss = cross_entropy(onehot[idx], probs)
                nc.backward(loss)
                _step_encoder(encoder, trunk_lr=config.trunk_lr, class_lr=config.head_lr)
            except NumericError as exc:
                raise TrainingError(f"stage 2 diverged at epoch {epoch}: {exc}") from exc
            losses.append(loss.item())
        history.append(combine(float(np.mean(losses)), 0.0, 0.0))
    return encoder, history


def stage3_semisupervised(encoder: Encoder, labeled: Dataset, unlabeled: Dataset,
                          config: PipelineConfig
                          ) -> tuple[Encoder, list[LossBreakdown]]:
    """Paired hidden-space mixing with routed losses and the w ramp."""
    if labeled.n == 0 or unlabeled.n == 0:
        raise TrainingError("stage 3 needs non-empty labeled and unlabeled splits")
    rng = np.random.default_rng([config.seed, 3])
    cycler = _Cycler(labeled.n, rng)
    steps_per_epoch = int(np.ceil(unlabeled.n / config.batch_size))
    total_steps = max(1, config.stage3_epochs * steps_per_epoch)
    mix_layer = config.mix_layer or encoder.config.mix_layer
    history = []
    step = 0
    for epoch in range(config.stage3_epochs):
        epoch_parts: list[LossBreakdown] = []
        for u_idx in _batches(unlabeled.n, config.batch_size, rng):
            w = consistency_weight(step, total_steps, config.w_max,
                                   config.w_ramp_fraction)
            step += 1
            l_idx = cycler.take(min(config.batch_size, labeled.n))
            u_feats = unlabeled.features[u_idx]
            l_feats = labeled.features[l_idx]
            try:
                if u_feats.shape[0] == 0:  # defensive: supervised fallback
                    log.warning("stage 3 epoch %d: empty unlabeled batch, "
                                "training supervised batch only", epoch)
                    onehot = np.zeros((len(l_idx), config.class_count))
                    onehot[np.arange(len(l_idx)), labeled.labels[l_idx]] = 1.0
                    encoder.parameters.zero_grad()
                    loss = cross_entropy(onehot, nc.softmax(forward_full(encoder, l_feats)))
                    nc.backward(loss)
                    _step_encoder(encoder, config.trunk_lr, config.head_lr)
                    epoch_parts.append(combine(loss.item(), 0.0, w))
                    continue

                # fresh pseudo-labels from the encoder state entering this batch
                pseudo = pseudo_label(encoder, u_feats)
                x = np.vstack([l_feats, u_feats])
                batch_labels = np.concatenate(
                    [labeled.labels[l_idx],
                     np.full(u_feats.shape[0], UNLABELED, dtype=np.int64)])
                targets = build_mix_targets(
                    batch_labels,
                    [None] * len(l_idx) + list(pseudo),
                    config.class_count)

                pairs = pair_batch(l_feats, u_feats, rng)
                assign_lambdas(pairs, config.mix_policy, targets.confidence, rng)
                partner = np.array([p.index_p for p in pairs])
                if config.mix_policy.mode == "confidence":
                    logits, y_tilde, _ = ptmix_forward(
                        encoder, x, x[partner], targets, targets.take(partner),
                        mix_layer)
                else:
                    logits, y_tilde = tmix_forward(
                        encoder, x, x[partner], targets.probs,
                        targets.take(partner).probs, pairs[0].lam, mix_layer)

                encoder.parameters.zero_grad()
                breakdown = route_losses(pairs, logits, y_tilde, w,
                                         config.kl_direction)
                nc.backward(breakdown.node)
                _step_encoder(encoder, config.trunk_lr, config.head_lr)
                epoch_parts.append(breakdown)
            except NumericError as exc:
                raise TrainingError(
                    f"stage 3 diverged at epoch {epoch} step {step}: {exc}") from exc
        # per-epoch summary: mean of each term, total rebuilt from the means
        history.append(combine(float(np.mean([b.l_x for b in epoch_parts])),
                               float(np.mean([b.l_u for b in epoch_parts])),
                               float(np.mean([b.w for b in epoch_parts]))))
    return encoder, history


# ---------------------------------------------------------------------------
# End-to-end run
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    encoder: Encoder
    report: TrainReport
    norm_extras: dict[str, np.ndarray]
    splits: object  # SplitResult; kept for diagnostics

    def standardize_features(self, raw: np.ndarray) -> np.ndarray:
        """Apply this run's fitted normalization to external raw features."""
        from .data import NormStats
        stats = NormStats(mean=self.norm_extras["norm.mean"].reshape(-1),
                          std=self.norm_extras["norm.std"].reshape(-1),
                          kept=self.norm_extras["norm.kept"].reshape(-1).astype(int))
        return stats.apply(raw)


def feasible_unlabeled_per_class(dataset: Dataset, labeled_per_class: int,
                                 test_per_class: int) -> int:
    """Largest per-class unlabeled count a GAN-less split can satisfy."""
    counts = dataset.class_counts()
    return max(1, min(counts.values()) - labeled_per_class - test_per_class)


def run_fpmt(dataset_or_csv, config: PipelineConfig) -> RunResult:
    """standardize -> (balance) -> split -> three stages -> test metrics."""
    dataset = (dataset_or_csv if isinstance(dataset_or_csv, Dataset)
               else load_csv(dataset_or_csv, class_count=config.class_count))
    dataset, stats = standardize(dataset)

    if config.gan_enabled:
        need = (config.labeled_per_class + config.unlabeled_per_class
                + config.test_per_class)
        target = config.target_per_class or max(
            need, max(dataset.class_counts().values()))
        gan_cfg = replace(config.gan, seed=config.gan.seed + config.seed)
        dataset = balance_and_expand(dataset, target, gan_cfg)

    splits = split(dataset, SplitSpec(config.labeled_per_class,
                                      config.unlabeled_per_class,
                                      config.test_per_class,
                                      seed=config.seed))

    encoder = Encoder(EncoderConfig(input_dim=dataset.d, depth=config.depth,
                                    width=config.width,
                                    activation=config.activation,
                                    mix_layer=config.mix_layer,
                                    class_count=config.class_count),
                      seed=config.seed)

    report = TrainReport(seed=config.seed)
    pool = np.vstack([splits.labeled.features, splits.unlabeled.features])

    t0 = time.perf_counter()
    encoder, h1 = stage1_pretrain(encoder, pool, config)
    report.wall_clock[1] = time.perf_counter() - t0
    report.extend(1, h1)

    t0 = time.perf_counter()
    encoder, h2 = stage2_supervised(encoder, splits.labeled, config)
    report.wall_clock[2] = time.perf_counter() - t0
    report.extend(2, h2)

    t0 = time.perf_counter()
    encoder, h3 = stage3_semisupervised(encoder, splits.labeled,
                                        splits.unlabeled, config)
    report.wall_clock[3] = time.perf_counter() - t0
    report.extend(3, h3)

    predictions = predict_labels(encoder, splits.test.features)
    report.final_metrics = compute_metrics(predictions, splits.test.labels)

    norm_extras = {"norm.mean": stats.mean.reshape(1, -1),
                   "norm.std": stats.std.reshape(1, -1),
                   "norm.kept": stats.kept.astype(np.float64).reshape(1, -1)}
    return RunResult(encoder=encoder, report=report, norm_extras=norm_extras,
                     splits=splits)

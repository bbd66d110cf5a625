"""Per-class GANs that balance class counts before the semi-supervised split.

One small unconditional GAN is trained per under-represented class on that
class's real (standardized) feature rows. The discriminator ascends
mean log D(x) + mean log(1 - D(G(z))); the generator ascends the
non-saturating objective mean log D(G(z)). Generated rows are clamped to
the per-feature bounds observed in the real data and flagged synthetic so
they can never leak into a test split.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .data import Dataset
from .errors import ConfigError, DataError, NumericError, TrainingError


@dataclass
class GanConfig:
    latent_dim: int = 8
    gen_widths: tuple[int, ...] = (32, 32)
    disc_widths: tuple[int, ...] = (32, 16)
    steps: int = 600
    batch: int = 32
    lr: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ConfigError(f"latent_dim must be >= 1, got {self.latent_dim}")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.batch < 1 or self.lr <= 0:
            raise ConfigError("need batch >= 1 and lr > 0")


@dataclass
class GanModel:
    generator: nc.ParameterSet
    discriminator: nc.ParameterSet
    class_id: int
    feature_bounds: tuple[np.ndarray, np.ndarray]  # per-feature (min, max)
    config: GanConfig


def _init_mlp(rng, widths: list[int], prefix: str) -> nc.ParameterSet:
    params = nc.ParameterSet()
    for i, (fan_in, fan_out) in enumerate(zip(widths, widths[1:]), start=1):
        params.add(f"{prefix}{i}.W", nc.glorot_uniform(rng, fan_in, fan_out))
        params.add(f"{prefix}{i}.b", np.zeros((1, fan_out)))
    return params


def _mlp_forward(params: nc.ParameterSet, x: nc.Node, depth: int, prefix: str,
                 hidden_act) -> nc.Node:
    h = x
    for i in range(1, depth + 1):
        h = nc.add(nc.matmul(h, params[f"{prefix}{i}.W"]), params[f"{prefix}{i}.b"])
        if i < depth:  # last layer stays linear
            h = hidden_act(h)
    return h


def generator_output(model: GanModel, z) -> nc.Node:
    z = z if isinstance(z, nc.Node) else nc.constant(z)
    depth = len(model.config.gen_widths) + 1
    return _mlp_forward(model.generator, z, depth, "gen", nc.tanh)


def discriminator_prob(model: GanModel, x) -> nc.Node:
    x = x if isinstance(x, nc.Node) else nc.constant(x)
    depth = len(model.config.disc_widths) + 1
    logit = _mlp_forward(model.discriminator, x, depth, "disc", nc.relu)
    return nc.sigmoid(logit)


def _mean_log(p: nc.Node) -> nc.Node:
    return nc.sum_all(nc.scale(nc.log(nc.clamp_min(p, nc.EPS)), 1.0 / p.shape[0]))


def discriminator_loss(model: GanModel, real_batch: np.ndarray,
                       z: np.ndarray) -> nc.Node:
    """Negative of mean log D(x) + mean log(1 - D(G(z))); fake rows detached."""
    fake = generator_output(model, z).value
    d_real = discriminator_prob(model, real_batch)
    d_fake = discriminator_prob(model, fake)
    one_minus = nc.add(nc.constant(np.ones(d_fake.shape)), nc.scale(d_fake, -1.0))
    return nc.scale(nc.add(_mean_log(d_real), _mean_log(one_minus)), -1.0)


def generator_loss(model: GanModel, z: np.ndarray) -> nc.Node:
    """Non-saturating objective: negative of mean log D(G(z))."""
    d_fake = discriminator_prob(model, generator_output(model, z))
    return nc.scale(_mean_log(d_fake), -1.0)


def new_gan(d: int, class_id: int, config: GanConfig,
            feature_bounds: tuple[np.ndarray, np.ndarray] | None = None) -> GanModel:
    rng = np.random.default_rng(config.seed)
    gen = _init_mlp(rng, [config.latent_dim, *config.gen_widths, d], "gen")
    disc = _init_mlp(rng, [d, *config.disc_widths, 1], "disc")
    if feature_bounds is None:
        feature_bounds = (np.full(d, -np.inf), np.full(d, np.inf))
    return GanModel(generator=gen, discriminator=disc, class_id=class_id,
                    feature_bounds=feature_bounds, config=config)


def train_gan(real_features: np.ndarray, config: GanConfig,
              class_id: int = 0) -> GanModel:
    """Alternating ascent on one class's standardized feature rows."""
    real = nc.matrix(real_features)
    n, d = real.shape
    if n < 2 * config.batch:
        raise DataError(f"need at least {2 * config.batch} rows to train, got {n}")
    rng = np.random.default_rng(config.seed)
    bounds = (real.min(axis=0), real.max(axis=0))
    model = new_gan(d, class_id, config, feature_bounds=bounds)

    for step in range(config.steps):
        idx = rng.choice(n, size=config.batch, replace=False)
        z_d = rng.standard_normal((config.batch, config.latent_dim))
        z_g = rng.standard_normal((config.batch, config.latent_dim))
        try:
            with np.errstate(over="ignore"):
                model.discriminator.zero_grad()
                loss_d = discriminator_loss(model, real[idx], z_d)
                nc.backward(loss_d)
                model.discriminator.sgd_step(config.lr)

                model.generator.zero_grad()
                model.discriminator.zero_grad()
                loss_g = generator_loss(model, z_g)
                nc.backward(loss_g)
                model.generator.sgd_step(config.lr)
        except NumericError as exc:
            raise TrainingError(f"training diverged at step {step}: {exc}") from exc

    return model


def generate(model: GanModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """n rows from the generator, clamped to the recorded feature bounds."""
    if n < 1:
        raise ConfigError(f"need n >= 1, got {n}")
    z = rng.standard_normal((n, model.config.latent_dim))
    raw = generator_output(model, z).value
    lo, hi = model.feature_bounds
    return np.clip(raw, lo, hi)


def balance_and_expand(dataset: Dataset, target_per_class: int,
                       configs: GanConfig | dict[int, GanConfig] | None = None
                       ) -> Dataset:
    """Raise every class to ``target_per_class`` rows with GAN samples.

    Real rows are preserved byte-identical and keep their positions;
    synthetic rows are appended class by class. Classes already at the
    target are left alone, so re-running at the same target is a no-op.
    """
    counts = dataset.class_counts()
    if min(counts.values()) == 0:
        empty = [c for c, k in counts.items() if k == 0]
        raise DataError(f"classes {empty} have no samples")
    if target_per_class < max(counts.values()):
        raise DataError(
            f"target {target_per_class} below largest class count {max(counts.values())}")

    def config_for(c: int) -> GanConfig:
        if isinstance(configs, dict):
            return configs[c]
        base = configs or GanConfig()
        # distinct per-class seed so the class GANs are independent draws
        return GanConfig(latent_dim=base.latent_dim, gen_widths=base.gen_widths,
                         disc_widths=base.disc_widths, steps=base.steps,
                         batch=base.batch, lr=base.lr, seed=base.seed + 7919 * c)

    new_features, new_labels = [dataset.features], [dataset.labels]
    new_synth = [dataset.synthetic]
    for c in sorted(counts):
        missing = target_per_class - counts[c]
        if missing == 0:
            continue
        real_rows = dataset.features[(dataset.labels == c) & ~dataset.synthetic]
        if real_rows.shape[0] == 0:
            raise DataError(f"class {c} has no real rows to train on")
        cfg = config_for(c)
        batch = min(cfg.batch, real_rows.shape[0] // 2)
        if batch < 1:
            raise DataError(f"class {c} has too few rows ({real_rows.shape[0]})")
        if batch < cfg.batch:
            cfg = GanConfig(latent_dim=cfg.latent_dim, gen_widths=cfg.gen_widths,
                            disc_widths=cfg.disc_widths, steps=cfg.steps,
                            batch=batch, lr=cfg.lr, seed=cfg.seed)
        model = train_gan(real_rows, cfg, class_id=c)
        rows = generate(model, missing, np.random.default_rng(cfg.seed + 1))
        new_features.append(rows)
        new_labels.append(np.full(missing, c, dtype=np.int64))
        new_synth.append(np.ones(missing, dtype=bool))

    return Dataset(np.vstack(new_features), np.concatenate(new_labels),
                   np.concatenate(new_synth), dataset.norm_stats,
                   dataset.class_count)

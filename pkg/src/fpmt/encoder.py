"""Layered feed-forward encoder with a split trunk and two output heads.

The trunk is H affine+activation layers of equal width. A forward pass can
be paused after any layer (the mix layer) and resumed, which is what the
hidden-space interpolation relies on: pausing and resuming performs exactly
the same arithmetic as an uninterrupted pass, so the two are bit-identical.

Heads: a linear classification head (width -> C) and a linear
reconstruction head (width -> d) used by the unsupervised pretraining
stage. Pseudo-labels for unlabeled rows are the class-head softmax rows
together with their max entry as the confidence score.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .errors import ConfigError, DimensionError, ParseError

ACTIVATIONS = {"tanh": nc.tanh, "relu": nc.relu}

CHECKPOINT_MAGIC = "FPMT-CKPT v1"


@dataclass
class EncoderConfig:
    input_dim: int
    depth: int = 6
    width: int = 32
    activation: str = "tanh"
    mix_layer: int | None = None  # default: ceil(0.75 * depth)
    class_count: int = 2

    def __post_init__(self):
        if self.input_dim < 1:
            raise ConfigError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if self.width < 2:
            raise ConfigError(f"width must be >= 2, got {self.width}")
        if self.class_count < 2:
            raise ConfigError(f"class_count must be >= 2, got {self.class_count}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {sorted(ACTIVATIONS)}")
        if self.mix_layer is None:
            self.mix_layer = int(np.ceil(0.75 * self.depth))
        if not 1 <= self.mix_layer <= self.depth:
            raise ConfigError(
                f"mix_layer {self.mix_layer} outside [1, {self.depth}]")


@dataclass
class HiddenState:
    """Activations after trunk layer ``layer_index`` (0 = raw input)."""
    layer_index: int
    activations: nc.Node

    @property
    def array(self) -> np.ndarray:
        return self.activations.value


@dataclass
class PseudoLabel:
    """Predicted class distribution plus its max entry as the confidence."""
    probs: np.ndarray
    confidence: float

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64).reshape(-1)
        if abs(self.probs.sum() - 1.0) > 1e-9 or np.any(self.probs < 0):
            raise ValueError("pseudo-label probs must lie on the simplex")
        if self.confidence != self.probs.max():
            raise ValueError("confidence must equal the max probability")

    @property
    def argmax(self) -> int:
        # ties break toward the lower class index
        return int(np.argmax(self.probs))


class Encoder:
    """H-layer perceptron trunk with classification and reconstruction heads."""

    def __init__(self, config: EncoderConfig, seed: int = 0):
        self.config = config
        self.parameters = nc.ParameterSet()
        rng = np.random.default_rng(seed)
        d, h, w = config.input_dim, config.depth, config.width
        fan_in = d
        for layer in range(1, h + 1):
            self.parameters.add(f"layer{layer}.W", nc.glorot_uniform(rng, fan_in, w))
            self.parameters.add(f"layer{layer}.b", np.zeros((1, w)))
            fan_in = w
        self.parameters.add("class_head.W", nc.glorot_uniform(rng, w, config.class_count))
        self.parameters.add("class_head.b", np.zeros((1, config.class_count)))
        self.parameters.add("recon_head.W", nc.glorot_uniform(rng, w, d))
        self.parameters.add("recon_head.b", np.zeros((1, d)))
        self._act = ACTIVATIONS[config.activation]

    # -- parameter grouping for two-tier learning rates ----------------------

    def trunk_names(self) -> list[str]:
        return [n for n in self.parameters.names() if n.startswith("layer")]

    def class_head_names(self) -> list[str]:
        return [n for n in self.parameters.names() if n.startswith("class_head")]

    def recon_head_names(self) -> list[str]:
        return [n for n in self.parameters.names() if n.startswith("recon_head")]

    # -- forward passes -------------------------------------------------------

    def _as_input(self, batch) -> nc.Node:
        node = batch if isinstance(batch, nc.Node) else nc.constant(batch)
        if node.shape[1] != self.config.input_dim:
            raise DimensionError(
                f"batch has {node.shape[1]} features, encoder expects "
                f"d={self.config.input_dim}")
        return node

    def _trunk_layer(self, h: nc.Node, layer: int) -> nc.Node:
        w = self.parameters[f"layer{layer}.W"]
        b = self.parameters[f"layer{layer}.b"]
        return self._act(nc.add(nc.matmul(h, w), b))


def forward_to_layer(encoder: Encoder, batch, layer: int) -> HiddenState:
    """Run trunk layers 1..layer, returning the paused activations."""
    if not 1 <= layer <= encoder.config.depth:
        raise DimensionError(
            f"layer {layer} outside [1, {encoder.config.depth}]")
    h = encoder._as_input(batch)
    for ell in range(1, layer + 1):
        h = encoder._trunk_layer(h, ell)
    return HiddenState(layer_index=layer, activations=h)


def forward_from_layer(encoder: Encoder, hidden: HiddenState) -> nc.Node:
    """Resume from a paused state: trunk layers layer+1..H, then the class head."""
    if not 0 <= hidden.layer_index <= encoder.config.depth:
        raise DimensionError(
            f"layer_index {hidden.layer_index} outside [0, {encoder.config.depth}]")
    h = hidden.activations
    for ell in range(hidden.layer_index + 1, encoder.config.depth + 1):
        h = encoder._trunk_layer(h, ell)
    w = encoder.parameters["class_head.W"]
    b = encoder.parameters["class_head.b"]
    return nc.add(nc.matmul(h, w), b)


def forward_full(encoder: Encoder, batch) -> nc.Node:
    """Uninterrupted pass: identical arithmetic to any pause/resume split."""
    return forward_from_layer(
        encoder, HiddenState(layer_index=0, activations=encoder._as_input(batch)))


def predict_proba(encoder: Encoder, batch) -> np.ndarray:
    """Class probabilities: softmax over the class-head logits."""
    logits = forward_full(encoder, batch)
    return nc.softmax_stable(logits.value)


def predict_labels(encoder: Encoder, batch) -> np.ndarray:
    """Hard labels; argmax ties break toward the lower class index."""
    return np.argmax(predict_proba(encoder, batch), axis=1)


def pseudo_label(encoder: Encoder, batch) -> list[PseudoLabel]:
    """One (distribution, confidence) pair per unlabeled row."""
    probs = predict_proba(encoder, batch)
    return [PseudoLabel(row, float(row.max())) for row in probs]


def reconstruct(encoder: Encoder, masked_batch) -> nc.Node:
    """Trunk pass then reconstruction head; output is batch x d."""
    hidden = forward_to_layer(encoder, masked_batch, encoder.config.depth)
    w = encoder.parameters["recon_head.W"]
    b = encoder.parameters["recon_head.b"]
    return nc.add(nc.matmul(hidden.activations, w), b)


# ---------------------------------------------------------------------------
# Checkpoint I/O (textual, loss-free at 17 significant digits)
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_checkpoint(encoder: Encoder, path,
                    extras: dict[str, np.ndarray] | None = None) -> None:
    """Write the magic line, one config line, then one line per named array.

    ``extras`` lets callers persist auxiliary arrays (e.g. normalization
    stats) under reserved dotted names using the same line grammar.
    """
    cfg = encoder.config
    lines = [CHECKPOINT_MAGIC,
             (f"d={cfg.input_dim} H={cfg.depth} width={cfg.width} "
              f"activation={cfg.activation} E={cfg.mix_layer} C={cfg.class_count}")]
    payload: list[tuple[str, np.ndarray]] = list(encoder.parameters.copy_values().items())
    for name, arr in (extras or {}).items():
        payload.append((name, nc.matrix(arr)))
    for name, arr in payload:
        rows, cols = arr.shape
        values = " ".join(_fmt(v) for v in arr.reshape(-1))
        lines.append(f"{name} {rows} {cols} {values}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


_CONFIG_RE = re.compile(
    r"^d=(\d+) H=(\d+) width=(\d+) activation=(\w+) E=(\d+) C=(\d+)$")


def load_checkpoint(path) -> tuple[Encoder, dict[str, np.ndarray]]:
    """Inverse of :func:`save_checkpoint`; returns (encoder, extras)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise ParseError(f"line 1: expected {CHECKPOINT_MAGIC!r}")
    if len(lines) < 2:
        raise ParseError("line 2: missing config line")
    m = _CONFIG_RE.match(lines[1])
    if m is None:
        raise ParseError(f"line 2: malformed config line {lines[1]!r}")
    d, h, w, act, e, c = m.groups()
    config = EncoderConfig(input_dim=int(d), depth=int(h), width=int(w),
                           activation=act, mix_layer=int(e), class_count=int(c))
    encoder = Encoder(config, seed=0)
    extras: dict[str, np.ndarray] = {}
    seen: set[str] = set()
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        tokens = line.split()
        if len(tokens) < 3:
            raise ParseError(f"line {lineno}: expected 'name rows cols values...'")
        name, rows, cols = tokens[0], int(tokens[1]), int(tokens[2])
        values = tokens[3:]
        if len(values) != rows * cols:
            raise ParseError(
                f"line {lineno}: expected {rows * cols} values, got {len(values)}")
        arr = np.array([float(v) for v in values], dtype=np.float64).reshape(rows, cols)
        if name in encoder.parameters:
            encoder.parameters.set_value(name, arr)
            seen.add(name)
        else:
            extras[name] = arr
    missing = [n for n in encoder.parameters.names() if n not in seen]
    if missing:
        raise ParseError(f"checkpoint missing parameters: {', '.join(missing)}")
    return encoder, extras

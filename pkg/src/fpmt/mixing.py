"""Interpolation mechanics: input-space mixup, hidden-space mixing, pairing.

Three ways to obtain the mixing ratio:

- a symmetric Beta(alpha, alpha) draw, one per batch;
- the confidence ratio o / (o + o') of the two samples' (pseudo-)labels,
  with true labels carrying confidence 1.0;
- a fixed scalar handed in directly (used by tests and the identity cases).

Hidden-space mixing pauses the encoder at the mix layer, forms the convex
combination of the two activation matrices, and resumes. The ratio is a
constant during backpropagation: gradients flow through both activation
branches but never into the confidences that produced the ratio.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .encoder import Encoder, HiddenState, PseudoLabel, forward_from_layer, forward_to_layer
from .errors import ConfigError, ContractError, DataError, DimensionError, DomainError

LABELED = "labeled"
UNLABELED_ORIGIN = "unlabeled"


@dataclass
class MixPolicy:
    """Source of the mixing ratio: ``beta`` or ``confidence``.

    ``use_lambda_max`` applies the max(lam, 1-lam) variant to Beta draws;
    off by default, and never applied to confidence ratios.
    """
    mode: str = "beta"
    beta_alpha: float = 0.75
    use_lambda_max: bool = False

    def __post_init__(self):
        if self.mode not in ("beta", "confidence"):
            raise ConfigError(f"mix policy mode must be beta|confidence, got {self.mode!r}")
        if self.mode == "beta" and not self.beta_alpha > 0:
            raise ConfigError(f"beta_alpha must be > 0, got {self.beta_alpha}")


@dataclass
class MixPair:
    """Sample ``index_q`` paired with ``index_p`` in the concatenated batch."""
    index_q: int
    index_p: int
    lam: float = 0.5  # overwritten by the active policy before mixing
    origin_q: str = LABELED
    origin_p: str = LABELED

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise DomainError(f"lambda {self.lam} outside [0, 1]")

    @property
    def any_labeled(self) -> bool:
        return LABELED in (self.origin_q, self.origin_p)

    @property
    def any_unlabeled(self) -> bool:
        return UNLABELED_ORIGIN in (self.origin_q, self.origin_p)


@dataclass
class MixTarget:
    """Per-row training targets entering a mix: distribution + confidence.

    True labels are one-hot rows with confidence exactly 1.0; unlabeled
    rows carry their pseudo-label distribution and its max probability.
    """
    probs: np.ndarray        # (n, C), rows on the simplex
    confidence: np.ndarray   # (n,), entries in (0, 1]

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        self.confidence = np.asarray(self.confidence, dtype=np.float64).reshape(-1)
        if self.probs.ndim != 2 or self.probs.shape[0] != self.confidence.shape[0]:
            raise DimensionError("probs must be (n, C) aligned with confidence (n,)")
        if not np.all(np.isfinite(self.probs)) or not np.all(np.isfinite(self.confidence)):
            raise ContractError("mix targets contain non-finite entries; "
                                "was a pseudo-label missing?")
        if np.any(np.abs(self.probs.sum(axis=1) - 1.0) > 1e-9) or np.any(self.probs < 0):
            raise ContractError("mix target rows must lie on the simplex")
        if np.any(self.confidence <= 0) or np.any(self.confidence > 1):
            raise ContractError("confidences must lie in (0, 1]")

    def take(self, indices) -> "MixTarget":
        return MixTarget(self.probs[indices], self.confidence[indices])


def one_hot(labels: np.ndarray, class_count: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if np.any(labels < 0) or np.any(labels >= class_count):
        raise DomainError(f"labels must lie in [0, {class_count})")
    out = np.zeros((labels.shape[0], class_count))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def build_mix_targets(labels: np.ndarray, pseudo, class_count: int,
                      unlabeled_sentinel: int = -1) -> MixTarget:
    """Assemble targets for a batch: one-hot for true labels, pseudo otherwise.

    ``pseudo`` is a sequence aligned with the batch; entries for labeled rows
    are ignored, entries for unlabeled rows must be :class:`PseudoLabel`s.
    """
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    n = labels.shape[0]
    if len(pseudo) != n:
        raise DimensionError(f"pseudo sequence length {len(pseudo)} != batch size {n}")
    probs = np.empty((n, class_count))
    conf = np.empty(n)
    for i, label in enumerate(labels):
        if label == unlabeled_sentinel:
            pl = pseudo[i]
            if not isinstance(pl, PseudoLabel):
                raise ContractError(f"row {i} is unlabeled but has no pseudo-label")
            probs[i] = pl.probs
            conf[i] = pl.confidence
        else:
            probs[i] = one_hot([label], class_count)[0]
            conf[i] = 1.0
    return MixTarget(probs, conf)


# ---------------------------------------------------------------------------
# Ratio sources
# ---------------------------------------------------------------------------

def sample_lambda_beta(alpha: float, rng: np.random.Generator) -> float:
    """One Beta(alpha, alpha) draw; the trainer draws once per batch."""
    if not alpha > 0:
        raise ConfigError(f"beta alpha must be > 0, got {alpha}")
    return float(rng.beta(alpha, alpha))


def confidence_lambda(o: float, o_prime: float) -> float:
    """Ratio o / (o + o'), branch-ordered so lam(a,b) + lam(b,a) == 1 exactly."""
    if o < 0 or o_prime < 0:
        raise DomainError("confidences must be nonnegative")
    total = o + o_prime
    if total == 0:
        raise DomainError("degenerate confidences: o + o' == 0")
    if o <= o_prime:
        return o / total
    return 1.0 - o_prime / total


# ---------------------------------------------------------------------------
# Input-space mixup
# ---------------------------------------------------------------------------

def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"lambda {lam} outside [0, 1]")
    return lam


def mixup_inputs(x_q: np.ndarray, x_p: np.ndarray, lam: float) -> np.ndarray:
    """Convex combination lam * x_q + (1 - lam) * x_p."""
    lam = _check_lambda(lam)
    x_q, x_p = np.asarray(x_q, dtype=np.float64), np.asarray(x_p, dtype=np.float64)
    if x_q.shape != x_p.shape:
        raise DimensionError(f"mixup shapes differ: {x_q.shape} vs {x_p.shape}")
    return lam * x_q + (1.0 - lam) * x_p


def mixup_labels(y_q: np.ndarray, y_p: np.ndarray, lam: float) -> np.ndarray:
    """Same combination for label distributions; stays on the simplex."""
    return mixup_inputs(y_q, y_p, lam)


# ---------------------------------------------------------------------------
# Hidden-space mixing
# ---------------------------------------------------------------------------

def _mix_hidden(h_q: nc.Node, h_p: nc.Node, lam_q: np.ndarray, lam_p: np.ndarray) -> nc.Node:
    """Row-wise lam_q * h_q + lam_p * h_p with constant per-row coefficients."""
    n, w = h_q.shape
    mq = nc.constant(np.broadcast_to(np.asarray(lam_q).reshape(n, 1), (n, w)))
    mp = nc.constant(np.broadcast_to(np.asarray(lam_p).reshape(n, 1), (n, w)))
    return nc.add(nc.mul(h_q, mq), nc.mul(h_p, mp))


def tmix_forward(encoder: Encoder, x, x_prime, y: np.ndarray, y_prime: np.ndarray,
                 lam: float, layer: int) -> tuple[nc.Node, np.ndarray]:
    """Mix hidden states at ``layer`` with a single scalar ratio.

    Returns the resumed class logits for the mixed state and the mixed
    label rows lam * y + (1 - lam) * y'.
    """
    lam = _check_lambda(lam)
    h_q = forward_to_layer(encoder, x, layer)
    h_p = forward_to_layer(encoder, x_prime, layer)
    mixed = nc.add(nc.scale(h_q.activations, lam), nc.scale(h_p.activations, 1.0 - lam))
    logits = forward_from_layer(encoder, HiddenState(layer, mixed))
    y_m = mixup_labels(np.atleast_2d(y), np.atleast_2d(y_prime), lam)
    return logits, y_m


def ptmix_forward(encoder: Encoder, x, x_prime, targets: MixTarget,
                  targets_prime: MixTarget, layer: int
                  ) -> tuple[nc.Node, np.ndarray, np.ndarray]:
    """Mix with per-row confidence ratios instead of a shared scalar.

    The p-side coefficient is computed as confidence_lambda(o', o), which
    equals 1 - lambda exactly and makes the whole operation symmetric under
    swapping the two inputs. Ratios are constants w.r.t. the gradient.
    """
    n = targets.confidence.shape[0]
    if targets_prime.confidence.shape[0] != n:
        raise DimensionError("the two target sets must have equal row counts")
    lam_q = np.array([confidence_lambda(targets.confidence[i], targets_prime.confidence[i])
                      for i in range(n)])
    lam_p = np.array([confidence_lambda(targets_prime.confidence[i], targets.confidence[i])
                      for i in range(n)])
    h_q = forward_to_layer(encoder, x, layer)
    h_p = forward_to_layer(encoder, x_prime, layer)
    mixed = _mix_hidden(h_q.activations, h_p.activations, lam_q, lam_p)
    logits = forward_from_layer(encoder, HiddenState(layer, mixed))
    y_tilde = lam_q[:, None] * targets.probs + lam_p[:, None] * targets_prime.probs
    return logits, y_tilde, lam_q


# ---------------------------------------------------------------------------
# Batch pairing
# ---------------------------------------------------------------------------

def pair_batch(labeled_batch, unlabeled_batch, rng: np.random.Generator) -> list[MixPair]:
    """Concatenate both batches and pair row i with row pi(i), pi uniform.

    Origins are recorded per side so losses can be routed afterwards.
    Either batch may be None or empty; at least one row must exist overall.
    """
    n_l = 0 if labeled_batch is None else np.atleast_2d(labeled_batch).shape[0]
    n_u = 0 if unlabeled_batch is None else np.atleast_2d(unlabeled_batch).shape[0]
    n = n_l + n_u
    if n == 0:
        raise DataError("cannot pair an empty concatenated batch")
    origins = [LABELED] * n_l + [UNLABELED_ORIGIN] * n_u
    perm = rng.permutation(n)
    return [MixPair(index_q=i, index_p=int(perm[i]),
                    origin_q=origins[i], origin_p=origins[int(perm[i])])
            for i in range(n)]


def assign_lambdas(pairs: list[MixPair], policy: MixPolicy,
                   confidences: np.ndarray | None,
                   rng: np.random.Generator) -> list[MixPair]:
    """Fill each pair's ratio from the policy; returns the same list.

    Beta mode draws once for the whole batch; confidence mode needs the
    per-row confidence vector of the concatenated batch.
    """
    if policy.mode == "beta":
        lam = sample_lambda_beta(policy.beta_alpha, rng)
        if policy.use_lambda_max:
            lam = max(lam, 1.0 - lam)
        for pair in pairs:
            pair.lam = lam
    else:
        if confidences is None:
            raise ContractError("confidence policy needs per-row confidences")
        conf = np.asarray(confidences, dtype=np.float64).reshape(-1)
        for pair in pairs:
            pair.lam = confidence_lambda(conf[pair.index_q], conf[pair.index_p])
    return pairs

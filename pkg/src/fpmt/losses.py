"""Loss functions and the per-pair routing rule.

Supervised loss is soft-target cross-entropy; the consistency loss is a KL
divergence with the model distribution as the left argument by default
(``kl_direction="model-first"``; ``"target-first"`` swaps the arguments).
Mixed pairs route into one or both terms depending on where the two parents
came from: labeled x labeled feeds only the supervised term, unlabeled x
unlabeled only the consistency term, and cross-origin pairs feed both.
Probabilities are clamped to >= numcore.EPS before every log.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numcore as nc
from .errors import ConfigError, ContractError, DataError, DimensionError
from .mixing import MixPair

KL_DIRECTIONS = ("model-first", "target-first")


@dataclass
class LossBreakdown:
    l_x: float
    l_u: float
    w: float
    l_total: float
    node: nc.Node | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if abs(self.l_total - (self.l_x + self.w * self.l_u)) > 1e-12:
            raise ContractError("l_total must equal l_x + w * l_u")


def _as_prob_node(probs) -> nc.Node:
    node = probs if isinstance(probs, nc.Node) else nc.constant(probs)
    if node.shape[0] == 0:
        raise DimensionError("empty probability matrix")
    return node


def _clamped_const_log(q: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(np.asarray(q, dtype=np.float64), nc.EPS))


def cross_entropy(targets: np.ndarray, probs) -> nc.Node:
    """-(1/N) sum_i sum_j y_ij log p_ij; accepts soft target rows."""
    p = _as_prob_node(probs)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != p.shape:
        raise DimensionError(f"targets {targets.shape} vs probs {p.shape}")
    n = p.shape[0]
    log_p = nc.log(nc.clamp_min(p, nc.EPS))
    return nc.scale(nc.sum_all(nc.mul(nc.constant(targets), log_p)), -1.0 / n)


def kl_consistency(model_probs, targets_u: np.ndarray,
                   kl_direction: str = "model-first") -> nc.Node:
    """Batch-mean KL divergence between model rows and target rows.

    ``model-first`` computes KL(model || target), gradients flowing through
    both occurrences of the model distribution; ``target-first`` swaps the
    arguments.
    """
    if kl_direction not in KL_DIRECTIONS:
        raise ConfigError(f"kl_direction must be one of {KL_DIRECTIONS}")
    p = _as_prob_node(model_probs)
    q = np.asarray(targets_u, dtype=np.float64)
    if q.shape != p.shape:
        raise DimensionError(f"targets {q.shape} vs model probs {p.shape}")
    n = p.shape[0]
    p_c = nc.clamp_min(p, nc.EPS)
    log_p = nc.log(p_c)
    if kl_direction == "model-first":
        # sum p * (log p - log q)
        diff = nc.add(log_p, nc.constant(-_clamped_const_log(q)))
        per_entry = nc.mul(p_c, diff)
    else:
        # sum q * (log q - log p)
        q_log_q = np.where(q > 0, q * _clamped_const_log(q), 0.0)
        per_entry = nc.add(nc.constant(q_log_q),
                           nc.mul(nc.constant(-q), log_p))
    return nc.scale(nc.sum_all(per_entry), 1.0 / n)


def combine(l_x, l_u, w: float) -> LossBreakdown:
    """Total = l_x + w * l_u. Node inputs keep the graph alive in ``node``."""
    if w < 0:
        raise ConfigError(f"consistency weight must be >= 0, got {w}")
    if isinstance(l_x, nc.Node) or isinstance(l_u, nc.Node):
        lx_node = l_x if isinstance(l_x, nc.Node) else nc.constant([[float(l_x)]])
        lu_node = l_u if isinstance(l_u, nc.Node) else nc.constant([[float(l_u)]])
        total = nc.add(lx_node, nc.scale(lu_node, w))
        return LossBreakdown(lx_node.item(), lu_node.item(), w, total.item(), node=total)
    return LossBreakdown(float(l_x), float(l_u), float(w), float(l_x) + w * float(l_u))


def route_losses(pairs: list[MixPair], mixed_logits: nc.Node,
                 mixed_targets: np.ndarray, w: float,
                 kl_direction: str = "model-first") -> LossBreakdown:
    """Split the mixed batch into supervised and consistency contributions.

    Row ``pair.index_q`` of ``mixed_logits``/``mixed_targets`` is the mix of
    that pair. Pure labeled pairs feed cross-entropy, pure unlabeled pairs
    feed the KL term, cross-origin pairs feed both; each term is averaged
    over its own contributing rows.
    """
    y = np.asarray(mixed_targets, dtype=np.float64)
    if y.shape != mixed_logits.shape:
        raise DimensionError(f"targets {y.shape} vs logits {mixed_logits.shape}")
    n = y.shape[0]
    if len(pairs) != n:
        raise ContractError(f"{len(pairs)} pairs for {n} mixed rows")

    mask_x = np.zeros(n)
    mask_u = np.zeros(n)
    for pair in pairs:
        if pair.any_labeled:
            mask_x[pair.index_q] = 1.0
        if pair.any_unlabeled:
            mask_u[pair.index_q] = 1.0

    probs = nc.clamp_min(nc.softmax(mixed_logits), nc.EPS)
    log_p = nc.log(probs)

    n_x = mask_x.sum()
    if n_x > 0:
        weights = -(mask_x[:, None] * y) / n_x
        l_x = nc.sum_all(nc.mul(nc.constant(weights), log_p))
    else:
        l_x = nc.constant([[0.0]])

    n_u = mask_u.sum()
    if n_u > 0:
        row_w = np.repeat(mask_u[:, None], y.shape[1], axis=1) / n_u
        if kl_direction == "model-first":
            diff = nc.add(log_p, nc.constant(-_clamped_const_log(y)))
            weighted = nc.mul(nc.constant(row_w), nc.mul(probs, diff))
        else:
            q_log_q = np.where(y > 0, y * _clamped_const_log(y), 0.0)
            weighted = nc.add(nc.constant(row_w * q_log_q),
                              nc.mul(nc.constant(-(row_w * y)), log_p))
        l_u = nc.sum_all(weighted)
    else:
        l_u = nc.constant([[0.0]])

    return combine(l_x, l_u, w)


def masked_recon_loss(original: np.ndarray, mask: np.ndarray,
                      reconstruction: nc.Node) -> nc.Node:
    """Mean squared error over the positions where ``mask`` is 1."""
    original = np.asarray(original, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if original.shape != mask.shape or original.shape != reconstruction.shape:
        raise DimensionError(
            f"shapes differ: original {original.shape}, mask {mask.shape}, "
            f"reconstruction {reconstruction.shape}")
    if not np.all((mask == 0) | (mask == 1)):
        raise DataError("mask must be 0/1")
    n_masked = mask.sum()
    if n_masked == 0:
        raise DataError("mask selects no positions")
    diff = nc.add(reconstruction, nc.constant(-original))
    sq = nc.mul(diff, diff)
    return nc.scale(nc.sum_all(nc.mul(nc.constant(mask), sq)), 1.0 / n_masked)


def consistency_weight(step: int, total_steps: int, w_max: float = 1.0,
                       ramp_fraction: float = 0.2) -> float:
    """Linear ramp 0 -> w_max over the first ``ramp_fraction`` of steps."""
    if w_max < 0 or not 0.0 <= ramp_fraction <= 1.0:
        raise ConfigError("need w_max >= 0 and ramp_fraction in [0, 1]")
    ramp_steps = ramp_fraction * total_steps
    if ramp_steps <= 0:
        return w_max
    return w_max * min(1.0, step / ramp_steps)

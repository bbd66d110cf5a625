"""CR / DR / F1 on the incident (positive) class.

CR is plain accuracy, DR is recall on the incident class, and F1 is the
harmonic mean of incident precision and DR. All three are reported in
percent. A test set without positive rows is a protocol violation, not a
zero score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ProtocolError

POSITIVE = 1  # incident class


@dataclass
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class Metrics:
    cr: float   # percent
    dr: float   # percent
    f1: float   # percent
    counts: ConfusionCounts


@dataclass
class MetricRow:
    variant: str
    labels_per_class: int
    seed: int
    cr: float
    dr: float
    f1: float

    def __post_init__(self):
        for value in (self.cr, self.dr, self.f1):
            if not 0.0 <= value <= 100.0:
                raise ValueError(f"metric {value} outside [0, 100]")


def confusion(predictions, truths) -> ConfusionCounts:
    predictions = np.asarray(predictions, dtype=np.int64).reshape(-1)
    truths = np.asarray(truths, dtype=np.int64).reshape(-1)
    if predictions.shape != truths.shape or predictions.size == 0:
        raise DimensionError(
            f"predictions ({predictions.shape}) and truths ({truths.shape}) "
            "must be equal-length and non-empty")
    pos_p, pos_t = predictions == POSITIVE, truths == POSITIVE
    return ConfusionCounts(tp=int((pos_p & pos_t).sum()),
                           fp=int((pos_p & ~pos_t).sum()),
                           tn=int((~pos_p & ~pos_t).sum()),
                           fn=int((~pos_p & pos_t).sum()))


def compute_metrics(predictions, truths) -> Metrics:
    """CR = accuracy, DR = incident recall, F1 on the incident class."""
    c = confusion(predictions, truths)
    if c.tp + c.fn == 0:
        raise ProtocolError("test set contains no positive (incident) rows")
    cr = (c.tp + c.tn) / c.total
    dr = c.tp / (c.tp + c.fn)
    precision = c.tp / (c.tp + c.fp) if (c.tp + c.fp) > 0 else 0.0
    f1 = 2 * precision * dr / (precision + dr) if (precision + dr) > 0 else 0.0
    return Metrics(cr=100.0 * cr, dr=100.0 * dr, f1=100.0 * f1, counts=c)

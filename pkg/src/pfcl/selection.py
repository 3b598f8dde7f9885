"""Reliable sample selection by logit discrepancy.

Candidates whose logits moved most between the new and old model (L1
distance per row) are the ones worth regularizing; the rest contribute
little consistency signal and are dropped.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError
from .linalg import Matrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiscrepancyScore:
    index: int
    score: float


def l1_discrepancy(z_new: Matrix, z_old: Matrix) -> list[DiscrepancyScore]:
    """Per-row L1 distance between two logit matrices, in row order."""
    if z_new.shape != z_old.shape:
        raise ShapeError(f"logit shape mismatch: {z_new.shape} vs {z_old.shape}")
    d = np.abs(z_new - z_old).sum(axis=1)
    return [DiscrepancyScore(index=i, score=float(s)) for i, s in enumerate(d)]


def select_top_k(scores: list[DiscrepancyScore], k: int) -> list[int]:
    """Indices of the k largest scores, returned in ascending index order.

    Ties break toward the smaller index so identical inputs always select
    the identical set. Asking for more candidates than exist selects all of
    them (short tail batches do this) with a logged warning.
    """
    if not scores:
        raise DomainError("cannot select from an empty score list")
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    m = len(scores)
    if k >= m:
        if k > m:
            logger.warning("top-k selection asked for %d of %d candidates; keeping all", k, m)
        return [s.index for s in sorted(scores, key=lambda s: s.index)]
    values = np.array([s.score for s in scores])
    idx = np.array([s.index for s in scores])
    # primary key: score descending; secondary: index ascending
    order = np.lexsort((idx, -values))[:k]
    return sorted(int(idx[i]) for i in order)

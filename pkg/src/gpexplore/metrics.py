"""Map quality and exploration metrics."""
from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from .gpom import EPS, bernoulli_entropy


def cell_entropy(p):
    """Bernoulli entropy in nats, probabilities clamped to [eps, 1 - eps]."""
    return bernoulli_entropy(p)


def map_entropy(p, resolution: float) -> float:
    """Area-weighted map entropy: ``res**2 * sum(h(p))``."""
    return float(resolution ** 2 * np.sum(cell_entropy(p)))


def auc(p, truth, mask=None) -> float:
    """Rank-based ROC AUC of occupancy predictions, ties counted half.

    Only cells where ``mask`` is true are scored.
    """
    p = np.asarray(p, dtype=float)
    truth = np.asarray(truth, dtype=bool)
    if p.shape != truth.shape:
        raise ValueError("prediction and truth differ in shape")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        p, truth = p[mask], truth[mask]
    p, truth = p.ravel(), truth.ravel()
    n_pos = int(truth.sum())
    n_neg = truth.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both occupied and free cells")
    ranks = rankdata(p)  # average ranks give ties half credit
    u = ranks[truth].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def entropy_rate(h_initial: float, h_final: float, steps: int) -> float:
    """Map entropy rate, nats per exploration step (negative is better)."""
    if steps <= 0:
        return 0.0
    return (h_final - h_initial) / steps


__all__ = ["EPS", "auc", "cell_entropy", "entropy_rate", "map_entropy"]

"""Ranking metrics: rank of the first valid placement, precision at 5, AUC."""
from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from ..errors import SingleClass


def metric_r0(ranked_labels):
    """1-based rank of the first positive, or None when there is none."""
    hits = np.flatnonzero(np.asarray(ranked_labels, dtype=bool))
    return int(hits[0]) + 1 if len(hits) else None


def metric_p_at_5(ranked_labels):
    """Fraction of positives among the top five (missing slots count as misses)."""
    top = np.asarray(ranked_labels, dtype=bool)[:5]
    return float(top.sum()) / 5.0


def metric_auc(scores, labels):
    """Normalized Mann-Whitney statistic; tied scores count one half."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    n_pos, n_neg = int(labels.sum()), int((~labels).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUC needs at least one positive and one negative")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def rank_by_scores(scores):
    """Indices by descending score, ties by index."""
    scores = np.asarray(scores, dtype=float)
    return np.lexsort((np.arange(len(scores)), -scores))


def evaluate_ranking(scores, labels):
    """``{"r0", "p_at_5", "auc"}`` for one task; AUC is None for one class."""
    labels = np.asarray(labels, dtype=bool)
    order = rank_by_scores(scores)
    try:
        auc = metric_auc(scores, labels)
    except SingleClass:
        auc = None
    return {"r0": metric_r0(labels[order]), "p_at_5": metric_p_at_5(labels[order]), "auc": auc}

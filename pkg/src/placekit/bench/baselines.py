"""Hand-written ranking rules that use no training data (except ``prior``)."""
from __future__ import annotations

import math

import numpy as np

from ..geometry import Placement, PointCloud, Rotation, octahedral_rotations

BASELINES = ("chance", "flat_upright", "lowest_point", "vertical", "horizontal", "prior")
UPRIGHT_TOL = math.radians(15.0)
FLAT_BAND = 0.005
FLAT_VARIATION = 0.01


def _up_axis(rotation: Rotation):
    return rotation.matrix()[:, 2]


def is_upright(rotation: Rotation, tol=UPRIGHT_TOL):
    return math.acos(min(1.0, _up_axis(rotation)[2])) <= tol


def has_flat_patch(placed: np.ndarray, base: PointCloud):
    """Base material under the footprint forms a level surface covering it."""
    lo, hi = placed[:, :2].min(axis=0), placed[:, :2].max(axis=0)
    B = base.points
    under = B[np.all((B[:, :2] >= lo) & (B[:, :2] <= hi), axis=1)]
    if len(under) < 3:
        return False
    top = under[under[:, 2] >= under[:, 2].max() - FLAT_BAND]
    if len(top) < 3:
        return False
    span = top[:, :2].max(axis=0) - top[:, :2].min(axis=0)
    if np.any(span < 0.5 * (hi - lo)):
        return False
    lam = np.linalg.eigvalsh(np.cov(top.T, bias=True))
    total = lam.sum()
    return total > 0 and lam[0] / total < FLAT_VARIATION


def config_index(rotation: Rotation):
    """Index of the nearest of the 24 axis-aligned rotations."""
    return int(np.argmin([rotation.angle_to(r) for r in octahedral_rotations()]))


def fit_prior(rotations, labels, smoothing=1.0):
    """Positive rate per axis-aligned configuration, Laplace smoothed."""
    pos = np.zeros(24)
    tot = np.zeros(24)
    for r, y in zip(rotations, labels):
        k = config_index(r)
        tot[k] += 1
        pos[k] += bool(y)
    return (pos + smoothing) / (tot + 2.0 * smoothing)


def baseline_scores(kind, candidates, seed=0, prior=None):
    """Score per ``(object, base, placement)`` candidate; higher is better."""
    if kind not in BASELINES:
        raise ValueError("unknown baseline %r" % kind)
    n = len(candidates)
    if kind == "chance":
        return np.random.default_rng(seed).random(n)
    out = np.zeros(n)
    for k, (obj, base, pl) in enumerate(candidates):
        pl: Placement
        if kind == "prior":
            out[k] = 0.5 if prior is None else prior[config_index(pl.rotation)]
            continue
        placed = pl.rotation.apply(obj.points) + pl.location
        ext = placed.max(axis=0) - placed.min(axis=0)
        if kind == "lowest_point":
            out[k] = -placed[:, 2].min()
        elif kind == "vertical":
            # taller than its narrow side: an edge-on plate counts, a flat one does not
            out[k] = float(ext[2] > min(ext[0], ext[1]))
        elif kind == "horizontal":
            out[k] = float(ext[2] <= min(ext[0], ext[1]))
        elif kind == "flat_upright":
            out[k] = float(is_upright(pl.rotation) and has_flat_patch(placed, base))
    return out


def baseline_rank(kind, candidates, seed=0, prior=None):
    """Candidate indices best first; score ties are broken by a seeded shuffle."""
    scores = baseline_scores(kind, candidates, seed, prior)
    tiebreak = np.random.default_rng(seed).permutation(len(scores))
    return np.lexsort((tiebreak, -scores))

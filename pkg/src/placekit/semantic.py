"""Semantic preference features of an (object, base) pair.

Each of five per-cloud groups is computed for the object and the base and then
expanded to ``[g(O) | g(B) | g(O) * g(B) | min(g(O), g(B))]``. The base's
support height above the ground closes the vector.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import TooSparse
from .fpfh import BowVocabulary, bow_histogram, local_covariances
from .geometry import PointCloud, covariance_eigenvalues
from .zernike import zernike_descriptor

HS_BINS = 6
V_BINS = 10
CURVATURE_BINS = 12
CURVATURE_K = 10
RATIO_EPS = 1e-12
GROUPS = (("zernike", 37), ("bow", 100), ("color", 46), ("curvature", 12), ("shape", 5))
LENGTH = 4 * sum(n for _, n in GROUPS) + 1


def rgb_to_hsv(rgb):
    """Hexcone HSV for an ``(n, 3)`` array in [0, 1]; hue in [0, 1)."""
    rgb = np.asarray(rgb, dtype=float)
    r, g, b = rgb[:, 0], rgb[:, 1], rgb[:, 2]
    v = rgb.max(axis=1)
    c = v - rgb.min(axis=1)
    s = np.where(v > 0, c / np.where(v > 0, v, 1.0), 0.0)
    safe = np.where(c > 0, c, 1.0)
    h = np.where(v == r, ((g - b) / safe) % 6.0,
                 np.where(v == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0))
    h = np.where(c > 0, h / 6.0, 0.0)
    return np.stack([h % 1.0, s, v], axis=1)


def color_histogram(cloud: PointCloud):
    """6x6 hue-saturation histogram plus a 10-bin value histogram.

    Returns ``(values, has_color)``. Both blocks sum to 1 when colors exist;
    a cloud without colors gives zeros and ``has_color = False``.
    """
    if cloud.colors is None or len(cloud) == 0:
        return np.zeros(HS_BINS * HS_BINS + V_BINS), False
    hsv = rgb_to_hsv(cloud.colors)
    hb = np.minimum((hsv[:, 0] * HS_BINS).astype(int), HS_BINS - 1)
    sb = np.minimum((hsv[:, 1] * HS_BINS).astype(int), HS_BINS - 1)
    vb = np.minimum((hsv[:, 2] * V_BINS).astype(int), V_BINS - 1)
    n = float(len(hsv))
    hs = np.bincount(hb * HS_BINS + sb, minlength=HS_BINS * HS_BINS) / n
    val = np.bincount(vb, minlength=V_BINS) / n
    return np.concatenate([hs, val]), True


def surface_variation(points, k=CURVATURE_K):
    """Per-point ``lambda_min / sum(lambda)`` of the k-NN covariance."""
    points = np.asarray(points, dtype=float)
    if len(points) < k + 1:
        raise TooSparse("need at least %d points for curvature" % (k + 1))
    lam = np.clip(np.linalg.eigvalsh(local_covariances(points, k)), 0.0, None)
    total = lam.sum(axis=1)
    return np.where(total > 0, lam[:, 0] / np.where(total > 0, total, 1.0), 0.0)


def curvature_histogram(cloud: PointCloud, k_neighbors=CURVATURE_K):
    """Normalized 12-bin histogram of surface variation over [0, 1/3]."""
    sigma = surface_variation(cloud.points, k_neighbors)
    b = np.clip((sigma * 3.0 * CURVATURE_BINS).astype(int), 0, CURVATURE_BINS - 1)
    return np.bincount(b, minlength=CURVATURE_BINS) / float(len(b))


def overall_shape(cloud: PointCloud):
    """Covariance eigenvalues (descending) and the ratios l2/l1, l3/l2."""
    lam = covariance_eigenvalues(cloud.points)
    r1 = lam[1] / lam[0] if lam[0] >= RATIO_EPS else 0.0
    r2 = lam[2] / lam[1] if lam[1] >= RATIO_EPS else 0.0
    return np.array([lam[0], lam[1], lam[2], r1, r2])


def support_height(base: PointCloud, ground_z=0.0):
    """Mean height of the top decile of base points above ``ground_z``."""
    z = np.sort(base.points[:, 2])[::-1]
    top = z[: max(1, int(np.ceil(0.1 * len(z))))]
    return float(top.mean()) - float(ground_z)


def cloud_groups(cloud: PointCloud, vocab: BowVocabulary):
    """Per-cloud group vectors in fixed order, plus metadata flags."""
    color, has_color = color_histogram(cloud)
    groups = {
        "zernike": zernike_descriptor(cloud),
        "bow": bow_histogram(cloud, vocab),
        "color": color,
        "curvature": curvature_histogram(cloud),
        "shape": overall_shape(cloud),
    }
    return groups, {"NoColor": not has_color}


@dataclass(frozen=True)
class SemanticFeatures:
    values: np.ndarray
    offsets: dict
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.shape != (LENGTH,) or not np.all(np.isfinite(self.values)):
            raise ValueError("semantic vector must be %d finite values" % LENGTH)

    def block(self, name):
        start, n = self.offsets[name]
        return self.values[start:start + n]


def group_offsets():
    offsets, pos = {}, 0
    for name, n in GROUPS:
        for part in ("object", "base", "product", "min"):
            offsets["%s.%s" % (name, part)] = (pos, n)
            pos += n
    offsets["base_height"] = (pos, 1)
    return offsets


def combine_groups(obj_groups, base_groups, base_height):
    parts = []
    for name, _ in GROUPS:
        o, b = obj_groups[name], base_groups[name]
        parts += [o, b, o * b, np.minimum(o, b)]
    parts.append([float(base_height)])
    return np.concatenate(parts)


def semantic_vector(object: PointCloud, base: PointCloud, vocab: BowVocabulary,
                    base_height: float, cache=None) -> SemanticFeatures:
    """The 801-value semantic vector for placing ``object`` on ``base``.

    ``cache`` may map ``id(cloud)`` to precomputed ``cloud_groups`` output,
    since the per-cloud groups do not depend on the placement.
    """
    def groups(c):
        if cache is None:
            return cloud_groups(c, vocab)
        key = id(c)
        if key not in cache:
            cache[key] = cloud_groups(c, vocab)
        return cache[key]

    og, oflags = groups(object)
    bg, bflags = groups(base)
    flags = {"object.NoColor": oflags["NoColor"], "base.NoColor": bflags["NoColor"]}
    return SemanticFeatures(combine_groups(og, bg, base_height), group_offsets(), flags)


class SemanticFeaturizer(TransformerMixin, BaseEstimator):
    """Transformer from ``(object, base, base_height)`` triples to 801-vectors.

    Parameters
    ----------
    vocab : BowVocabulary
        Trained bag-of-words vocabulary.
    """

    def __init__(self, vocab=None):
        self.vocab = vocab

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        cache = {}
        return np.vstack([semantic_vector(o, b, self.vocab, h, cache).values for o, b, h in X])

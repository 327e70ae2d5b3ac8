"""Fast Point Feature Histograms and the bag-of-words vocabulary over them."""
from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.cluster import KMeans

from .errors import CloudFormatError, TooSparse, VocabularyMissing
from .geometry import PointCloud

N_BINS = 11
FPFH_DIM = 3 * N_BINS
N_WORDS = 100
NORMAL_K = 10
RADIUS_FACTOR = 2.5
TIE_TOL = 1e-12
ANGLE_TOL = 1e-12


def knn_with_ties(points, k, tree=None):
    """The ``k`` nearest other points of each point, plus any tied with the k-th.

    Returns ``(idx, mask)`` of shape ``(n, q)``: row ``i`` lists candidate
    neighbor indices and ``mask`` selects the admitted ones.
    """
    n = len(points)
    tree = tree if tree is not None else cKDTree(points)
    dist, idx = tree.query(points, k=min(n, k + 9))
    dist = np.where(idx == np.arange(n)[:, None], np.inf, dist)
    kth = np.sort(dist, axis=1)[:, min(k, dist.shape[1] - 1) - 1]
    mask = dist <= (kth + TIE_TOL * np.maximum(1.0, kth))[:, None]
    return idx, mask


def local_covariances(points, k):
    """Covariance of each point together with its k-NN (ties included)."""
    idx, mask = knn_with_ties(points, k)
    idx = np.concatenate([np.arange(len(points))[:, None], idx], axis=1)
    mask = np.concatenate([np.ones((len(points), 1), bool), mask], axis=1)
    rel = (points[idx] - points[:, None, :]) * mask[..., None]
    cnt = mask.sum(axis=1)[:, None]
    mean = rel.sum(axis=1) / cnt
    second = np.einsum("nki,nkj->nij", rel, rel) / cnt[..., None]
    return second - mean[:, :, None] * mean[:, None, :]


def estimate_normals(points, k=NORMAL_K):
    """Unit normals from k-NN covariance, oriented away from the centroid.

    Points lying in the tangent plane through the centroid fall back to the
    +Z hemisphere (then +X, then +Y).
    """
    points = np.asarray(points, dtype=float)
    if len(points) < k + 1:
        raise TooSparse("need at least %d points for normals" % (k + 1))
    _, vecs = np.linalg.eigh(local_covariances(points, k))
    normals = vecs[:, :, 0].copy()
    center = points.mean(axis=0)
    tol = 1e-9 * max(float(np.ptp(points, axis=0).max()), 1e-12)
    side = np.einsum("ij,ij->i", normals, points - center)
    flip = side < -tol
    undecided = np.abs(side) <= tol
    for axis in (2, 0, 1):
        comp = normals[:, axis]
        flip |= undecided & (comp < -1e-9)
        undecided &= np.abs(comp) <= 1e-9
    normals[flip] *= -1
    return normals


def default_radius(points):
    """Neighborhood radius scaled to the median nearest-neighbor spacing."""
    tree = cKDTree(points)
    d, _ = tree.query(points, k=2)
    return RADIUS_FACTOR * float(np.median(d[:, 1]))


def pair_features(p1, n1, p2, n2):
    """Darboux-frame angles ``(alpha, phi, theta)`` and a validity mask.

    The source of each pair is the point whose normal makes the smaller angle
    with the connecting line, as in the reference FPFH implementation.
    """
    dp = p2 - p1
    d = np.linalg.norm(dp, axis=-1)
    ok = d > 0
    d = np.where(ok, d, 1.0)
    a1 = np.einsum("ij,ij->i", n1, dp) / d
    a2 = np.einsum("ij,ij->i", n2, dp) / d
    # exact ties (e.g. parallel normals) keep the given order, so round-off
    # under a rigid motion cannot flip the frame
    swap = np.abs(a1) < np.abs(a2) - ANGLE_TOL
    src = np.where(swap[:, None], n2, n1)
    dst = np.where(swap[:, None], n1, n2)
    dp = np.where(swap[:, None], -dp, dp)
    phi = np.where(swap, -a2, a1)
    v = np.cross(dp, src)
    vn = np.linalg.norm(v, axis=-1)
    ok &= vn > 1e-12 * d
    v = v / np.where(vn > 0, vn, 1.0)[:, None]
    w = np.cross(src, v)
    alpha = np.einsum("ij,ij->i", v, dst)
    wd = np.einsum("ij,ij->i", w, dst)
    # opposite normals give theta = +-pi; a zero of either sign maps to +pi
    wd = np.where(np.abs(wd) <= ANGLE_TOL, 0.0, wd)
    theta = np.arctan2(wd, np.einsum("ij,ij->i", src, dst))
    return alpha, phi, theta, ok


def _bins(alpha, phi, theta):
    b = np.stack([np.floor(N_BINS * (alpha + 1.0) / 2.0),
                  np.floor(N_BINS * (phi + 1.0) / 2.0),
                  np.floor(N_BINS * (theta + np.pi) / (2 * np.pi))], axis=1)
    return np.clip(b, 0, N_BINS - 1).astype(np.intp)


def _neighbor_pairs(points, radius):
    """Ordered pairs ``(i, j)``, ``i != j``, within ``radius``, sorted by ``i``."""
    pairs = cKDTree(points).query_pairs(radius, output_type="ndarray")
    src = np.concatenate([pairs[:, 0], pairs[:, 1]])
    dst = np.concatenate([pairs[:, 1], pairs[:, 0]])
    order = np.lexsort((dst, src))
    return src[order], dst[order]


def _scatter_rows(rows, values, n):
    """Sum ``values`` (m, d) into ``n`` rows by index."""
    out = np.empty((n, values.shape[1]))
    for c in range(values.shape[1]):
        out[:, c] = np.bincount(rows, weights=values[:, c], minlength=n)
    return out


def _normalize_blocks(h):
    h = h.reshape(len(h), 3, N_BINS)
    s = h.sum(axis=2, keepdims=True)
    h = np.where(s > 0, 100.0 * h / np.where(s > 0, s, 1.0), 0.0)
    return h.reshape(len(h), FPFH_DIM)


def spfh_signatures(points, normals, radius, pairs=None):
    """Simplified histograms of each point against its radius neighbors."""
    src, dst = _neighbor_pairs(points, radius) if pairs is None else pairs
    alpha, phi, theta, ok = pair_features(points[src], normals[src], points[dst], normals[dst])
    src, b = src[ok], _bins(alpha[ok], phi[ok], theta[ok])
    n = len(points)
    h = np.zeros((n, FPFH_DIM))
    for f in range(3):
        flat = np.bincount(src * FPFH_DIM + f * N_BINS + b[:, f], minlength=n * FPFH_DIM)
        h += flat.reshape(n, FPFH_DIM)
    return _normalize_blocks(h)


def fpfh_signatures(cloud: PointCloud, radius=None, normals=None):
    """Per-point 33-bin FPFH: own SPFH plus distance-weighted neighbor SPFHs.

    Each 11-bin block is rescaled to sum 100, so rows sum to 300. Points with
    no neighbor inside ``radius`` get the zero vector.
    """
    pts = cloud.points
    if len(pts) < 10:
        raise TooSparse("FPFH needs at least 10 points")
    if radius is None:
        radius = default_radius(pts)
        if radius <= 0:
            return np.zeros((len(pts), FPFH_DIM))
    elif radius <= 0:
        raise ValueError("radius must be positive")
    normals = estimate_normals(pts) if normals is None else np.asarray(normals, dtype=float)
    src, dst = _neighbor_pairs(pts, radius)
    dist = np.linalg.norm(pts[dst] - pts[src], axis=1)
    valid = dist > 0
    src, dst, dist = src[valid], dst[valid], dist[valid]
    spfh = spfh_signatures(pts, normals, radius, (src, dst))
    count = np.bincount(src, minlength=len(pts)).astype(float)
    acc = _scatter_rows(src, spfh[dst] / dist[:, None], len(pts))
    acc /= np.where(count > 0, count, 1.0)[:, None]
    out = _normalize_blocks(spfh + acc)
    out[count == 0] = 0.0
    return out


def corpus_fingerprint(features):
    return hashlib.sha256(np.ascontiguousarray(features, dtype=float).tobytes()).hexdigest()


class BowVocabulary(TransformerMixin, BaseEstimator):
    """Bag-of-words codebook over FPFH signatures.

    Parameters
    ----------
    n_words : int
        Number of cluster centers.
    seed : int
        Seed for k-means++ initialization.
    max_iter : int
        Lloyd iteration cap.
    radius : float or None
        FPFH neighborhood radius; ``None`` adapts to each cloud's spacing.

    Attributes
    ----------
    centers_ : ndarray of shape (n_words, 33)
    fingerprint_ : str
        SHA-256 of the stacked training signatures.
    """

    def __init__(self, n_words=N_WORDS, seed=0, max_iter=100, radius=None):
        self.n_words = n_words
        self.seed = seed
        self.max_iter = max_iter
        self.radius = radius

    def fit(self, X, y=None):
        feats = np.vstack([fpfh_signatures(c, self.radius) for c in X])
        return self.fit_signatures(feats)

    def fit_signatures(self, feats):
        feats = np.asarray(feats, dtype=float)
        if feats.ndim != 2 or feats.shape[1] != FPFH_DIM:
            raise ValueError("expected signatures of shape (n, %d)" % FPFH_DIM)
        if len(np.unique(feats, axis=0)) < self.n_words:
            raise TooSparse("fewer distinct signatures than vocabulary words")
        km = KMeans(n_clusters=self.n_words, init="k-means++", n_init=1,
                    max_iter=self.max_iter, random_state=self.seed)
        km.fit(feats)
        centers = km.cluster_centers_
        d = np.linalg.norm(centers[:, None] - centers[None], axis=2)
        if (d[np.triu_indices(len(centers), 1)] <= 1e-9).any():
            raise TooSparse("duplicate vocabulary centers")
        self.centers_ = centers
        self.fingerprint_ = corpus_fingerprint(feats)
        return self

    def _check(self):
        if getattr(self, "centers_", None) is None:
            raise VocabularyMissing("vocabulary has not been trained")

    def assign(self, feats):
        """Nearest center per row; exact ties go to the lowest index."""
        self._check()
        feats = np.asarray(feats, dtype=float)
        d = ((feats[:, None, :] - self.centers_[None]) ** 2).sum(axis=2)
        return np.argmin(d, axis=1)

    def transform(self, X):
        return np.vstack([bow_histogram(c, self) for c in X])

    def save(self, path):
        self._check()
        k, dim = self.centers_.shape
        lines = ["bow-vocab v1 %d %d %d" % (k, dim, self.seed)]
        lines += [" ".join(format(v, ".17g") for v in row) for row in self.centers_]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path):
        text = Path(path).read_text().splitlines()
        head = text[0].split() if text else []
        if len(head) != 5 or head[:2] != ["bow-vocab", "v1"]:
            raise CloudFormatError("not a bow-vocab v1 file")
        k, dim, seed = int(head[2]), int(head[3]), int(head[4])
        rows = [l.split() for l in text[1:] if l.strip()]
        if len(rows) != k or any(len(r) != dim for r in rows):
            raise CloudFormatError("vocabulary size does not match header")
        vocab = cls(n_words=k, seed=seed)
        vocab.centers_ = np.array(rows, dtype=float)
        vocab.fingerprint_ = corpus_fingerprint(vocab.centers_)
        return vocab


def bow_histogram(cloud: PointCloud, vocab: BowVocabulary, signatures=None):
    """Normalized histogram of nearest-center assignments over the cloud."""
    vocab._check()
    sig = fpfh_signatures(cloud, vocab.radius) if signatures is None else signatures
    words = vocab.assign(sig)
    h = np.bincount(words, minlength=len(vocab.centers_)).astype(float)
    return h / h.sum()

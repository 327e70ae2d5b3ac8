"""Stability features of a placed object relative to its base.

Three blocks, always concatenated in this order:

* supporting contacts (12 values)
* caging: per-region heights, directional gaps and a polar height
  histogram (37 values), or the polar histogram alone (4 values)
* cylindrical placement histograms of object and base points, with or
  without the per-cell count ratio (96 or 162 values)
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import DegenerateHull, DegenerateObject
from .geometry import (
    CONTACT_RADIUS,
    Placement,
    PointCloud,
    convex_hull_2d,
    covariance_eigenvalues,
    distance_to_boundary,
    require_points,
    xy_pairs,
)

TIE_TOL = 1e-6
RATIO_EPS = 1e-12
BIN_SNAP = 1e-9


@dataclass(frozen=True)
class StabilityConfig:
    variant: str = "single145"
    n_r: int = 4
    n_theta: int = 4
    n_z: int = 4
    n_rho: int = 8
    contact_fraction: float = 0.05
    ratio_cap: float = 10.0
    min_contacts: int = 3
    max_contacts: int = 200
    max_gap: float = 1.0
    contact_radius: float = CONTACT_RADIUS
    cage_scale: float = 1.6
    center_scale: float = 1.05
    floor_tolerance: float = 0.002

    def __post_init__(self):
        if self.variant == "single145":
            ok = (self.n_r, self.n_theta, self.n_z, self.n_rho) == (4, 4, 4, 8)
        elif self.variant == "multi178":
            ok = (self.n_r, self.n_theta, self.n_z, self.n_rho) == (1, 4, 9, 9)
        else:
            raise ValueError("unknown stability variant %r" % self.variant)
        if not ok:
            raise ValueError("histogram divisions do not match variant %s" % self.variant)

    @classmethod
    def named(cls, variant, **kw):
        if variant == "single145":
            return cls("single145", 4, 4, 4, 8, **kw)
        if variant == "multi178":
            return cls("multi178", 1, 4, 9, 9, **kw)
        raise ValueError("unknown stability variant %r" % variant)

    @property
    def full_caging(self):
        return self.variant == "single145"

    @property
    def with_ratios(self):
        return self.variant == "single145"

    @property
    def caging_length(self):
        h = self.n_r * self.n_theta
        return 9 + 12 + h if self.full_caging else h

    @property
    def histogram_length(self):
        cells = self.n_z * self.n_rho
        return cells * (3 if self.with_ratios else 2)

    @property
    def length(self):
        return 12 + self.caging_length + self.histogram_length

    @property
    def fingerprint(self):
        return self.variant


@dataclass(frozen=True, eq=False)
class StabilityFeatures:
    values: np.ndarray
    config: StabilityConfig

    @property
    def fingerprint(self):
        return self.config.fingerprint

    def blocks(self):
        c = self.config
        a, b = 12, 12 + c.caging_length
        return {"contacts": self.values[:a], "caging": self.values[a:b],
                "histograms": self.values[b:]}


# --------------------------------------------------------------------------- #
# supporting contacts
# --------------------------------------------------------------------------- #


def vertical_gaps(object_points, base_points, radius=CONTACT_RADIUS):
    """Gap below the object for every base point (inf where nothing overhead).

    The gap of base point ``x`` is the lowest object point within ``radius`` of
    ``x`` in XY, minus the height of ``x``.
    """
    gaps = np.full(len(base_points), np.inf)
    lo = object_points[:, :2].min(axis=0) - radius
    hi = object_points[:, :2].max(axis=0) + radius
    cand = np.flatnonzero(np.all((base_points[:, :2] >= lo) & (base_points[:, :2] <= hi), axis=1))
    if len(cand) == 0:
        return gaps
    i, j = xy_pairs(base_points[cand], object_points, radius)
    low = np.full(len(cand), np.inf)
    np.minimum.at(low, i, object_points[j, 2])
    gaps[cand] = low - base_points[cand, 2]
    return gaps


def select_contacts(gaps, n_base, config: StabilityConfig):
    """Indices of the supporting contacts, ordered by (gap, index).

    The quota is ``contact_fraction`` of the base size clipped to
    ``[min_contacts, max_contacts]``; points tied with the last admitted gap
    are admitted too.
    """
    k = int(math.ceil(config.contact_fraction * n_base))
    k = min(max(k, config.min_contacts), config.max_contacts)
    finite = np.flatnonzero(np.isfinite(gaps))
    if len(finite) == 0:
        return finite
    order = finite[np.lexsort((finite, gaps[finite]))]
    k = min(k, len(order))
    cutoff = gaps[order[k - 1]] + TIE_TOL
    return order[gaps[order] <= cutoff]


def _ratio(num, den):
    return num / den if abs(den) >= RATIO_EPS else 0.0


def xy_radius(points, center_xy):
    return float(np.sqrt(((points[:, :2] - center_xy) ** 2).sum(axis=1)).max())


def supporting_contacts(object: PointCloud, base: PointCloud,
                        contact_fraction: float = 0.05, config: StabilityConfig = None):
    """12 features of the support set under a placed object."""
    require_points(object)
    require_points(base)
    if config is None:
        config = StabilityConfig.named("single145", contact_fraction=contact_fraction)
    P, B = object.points, base.points
    gaps = vertical_gaps(P, B, config.contact_radius)
    idx = select_contacts(gaps, len(B), config)
    com = P[:, :2].mean(axis=0)
    radius = xy_radius(P, com)
    out = np.zeros(12)
    if len(idx) == 0:
        out[0] = config.max_gap
        out[8] = -radius
        out[11] = 1.0
        return out
    X = B[idx]
    out[0] = float(gaps[idx].min())
    xy = X[:, :2] - X[:, :2].mean(axis=0)
    out[1] = float((xy ** 2).sum(axis=1).mean())
    out[2] = float(((X[:, 2] - X[:, 2].mean()) ** 2).mean())
    if len(X) >= 2:
        l1, l2, l3 = covariance_eigenvalues(X)
        out[3:8] = [l1, l2, l3, _ratio(l2, l1), _ratio(l3, l2)]
    try:
        hull = convex_hull_2d(X[:, :2])
    except DegenerateHull:
        hull = None
    if hull is None:
        out[8], out[9] = -radius, 0.0
    else:
        out[8] = distance_to_boundary(hull, com)
        try:
            obj_area = convex_hull_2d(P[:, :2]).area
        except DegenerateHull:
            obj_area = 0.0
        out[9] = _ratio(hull.area, obj_area)
    plane = float(X[:, 2].max())
    out[10] = float(np.mean(P[:, 2] < plane - TIE_TOL))
    out[11] = float(np.mean(P[:, 2] > plane + TIE_TOL))
    return out


# --------------------------------------------------------------------------- #
# caging
# --------------------------------------------------------------------------- #

# direction offsets on the horizontal zone grid: -e2, +e2, -e3, +e3
_DIRS = [(-1, 0), (1, 0), (0, -1), (0, 1)]
# quarter turns acting on (a, b) grid offsets
_C4 = [np.array([[1, 0], [0, 1]]), np.array([[0, -1], [1, 0]]),
       np.array([[-1, 0], [0, -1]]), np.array([[0, 1], [-1, 0]])]


def _zone_index(rel, inner, outer):
    inside = np.all(np.abs(rel) <= outer, axis=1)
    idx = np.where(rel < -inner, 0, np.where(rel > inner, 2, 1))
    return inside, idx


def caging_zones(object: PointCloud, base: PointCloud, config: StabilityConfig):
    """Region heights (3x3 grid over e2, e3) and gaps (3 levels x 4 directions)."""
    P, B = object.points, base.points
    lo, hi = P.min(axis=0), P.max(axis=0)
    center, ext = 0.5 * (lo + hi), hi - lo
    outer = 0.5 * config.cage_scale * ext
    inner = 0.5 * config.center_scale * ext
    inside, zone = _zone_index(B - center, inner, outer)
    Bz, zone = B[inside], zone[inside]
    # the surface the object rests on is floor, not a wall
    wall = np.abs(Bz[:, 2] - lo[2]) > config.floor_tolerance
    heights = np.zeros((3, 3))
    for j in range(3):
        for k in range(3):
            m = (zone[:, 0] == j) & (zone[:, 1] == k)
            if m.any():
                heights[j, k] = Bz[m, 2].max() - lo[2]
    gaps = np.full((3, 4), config.max_gap)
    for i in range(3):
        lvl = (zone[:, 2] == i) & wall
        side = [lvl & (zone[:, 0] == 0), lvl & (zone[:, 0] == 2),
                lvl & (zone[:, 1] == 0), lvl & (zone[:, 1] == 2)]
        if side[0].any():
            gaps[i, 0] = lo[0] - Bz[side[0], 0].max()
        if side[1].any():
            gaps[i, 1] = Bz[side[1], 0].min() - hi[0]
        if side[2].any():
            gaps[i, 2] = lo[1] - Bz[side[2], 1].max()
        if side[3].any():
            gaps[i, 3] = Bz[side[3], 1].min() - hi[1]
    return heights, gaps


def _canonical_zone_block(heights, gaps):
    """Orientation-free arrangement of the zone features under quarter turns."""
    best, best_key = None, None
    for M in _C4:
        Minv = M.T
        h = np.empty(9)
        for n, (a, b) in enumerate((a, b) for a in (-1, 0, 1) for b in (-1, 0, 1)):
            sa, sb = Minv @ np.array([a, b])
            h[n] = heights[sa + 1, sb + 1]
        g = np.empty((3, 4))
        for d, u in enumerate(_DIRS):
            src = tuple(Minv @ np.array(u))
            g[:, d] = gaps[:, _DIRS.index(src)]
        vec = np.concatenate([h, g.ravel()])
        key = tuple(np.round(vec, 9))
        if best_key is None or key > best_key:
            best, best_key = vec, key
    return best


def height_histogram(object: PointCloud, base: PointCloud, config: StabilityConfig):
    """Polar max-height histogram of base points around the object, aligned so
    the highest point opens the first azimuth sector."""
    P, B = object.points, base.points
    com = P[:, :2].mean(axis=0)
    radius = max(config.cage_scale * xy_radius(P, com), 1e-9)
    h_obj = max(float(P[:, 2].max() - P[:, 2].min()), 1e-9)
    d = B[:, :2] - com
    rho = np.sqrt((d ** 2).sum(axis=1))
    m = rho < radius
    H = np.zeros((config.n_r, config.n_theta))
    if not m.any():
        return H.ravel()
    d, rho, z = d[m], rho[m], B[m, 2]
    ref = z.min()
    top = int(np.argmax(z))
    phi = np.arctan2(d[:, 1], d[:, 0])
    rel = np.mod(phi - phi[top], 2 * np.pi)
    sector = np.minimum((rel / (2 * np.pi / config.n_theta)).astype(int), config.n_theta - 1)
    sector[top] = 0
    ring = np.minimum((rho / radius * config.n_r).astype(int), config.n_r - 1)
    vals = (z - ref) / h_obj
    for r, s, v in zip(ring, sector, vals):
        if v > H[r, s]:
            H[r, s] = v
    return H.ravel()


def caging_features(object: PointCloud, base: PointCloud, config: StabilityConfig = None):
    require_points(object)
    require_points(base)
    config = config or StabilityConfig.named("single145")
    H = height_histogram(object, base, config)
    if not config.full_caging:
        return H
    heights, gaps = caging_zones(object, base, config)
    return np.concatenate([_canonical_zone_block(heights, gaps), H])


# --------------------------------------------------------------------------- #
# cylindrical placement histograms
# --------------------------------------------------------------------------- #


def _cyl_counts(points, center, radius, z0, height, n_z, n_rho):
    d = points - center
    # bin coordinates; the object's own extremes sit exactly on bin edges, so
    # nudge by BIN_SNAP to keep them in one bin under rigid-motion round-off
    tr = np.sqrt(d[:, 0] ** 2 + d[:, 1] ** 2) / radius * n_rho + BIN_SNAP
    tz = (points[:, 2] - z0) / height * n_z + BIN_SNAP
    m = (tr < n_rho) & (tz >= 0) & (tz < n_z)
    counts = np.zeros((n_z, n_rho))
    if m.any():
        np.add.at(counts, (tz[m].astype(int), tr[m].astype(int)), 1)
    return counts


def placement_histograms(object: PointCloud, base: PointCloud, config: StabilityConfig = None):
    require_points(object)
    require_points(base)
    config = config or StabilityConfig.named("single145")
    P = object.points
    c = P.mean(axis=0)
    h_obj = float(P[:, 2].max() - P[:, 2].min())
    rho_max = xy_radius(P, c[:2])
    if h_obj <= 1e-9 or rho_max <= 1e-9:
        raise DegenerateObject("object has zero height or zero radius")
    radius = rho_max * config.n_rho / (config.n_rho - 2)
    height = h_obj * config.n_z / (config.n_z - 2)
    z0 = c[2] - 0.5 * height
    obj = _cyl_counts(P, c, radius, z0, height, config.n_z, config.n_rho).ravel()
    env = _cyl_counts(base.points, c, radius, z0, height, config.n_z, config.n_rho).ravel()
    if not config.with_ratios:
        return np.concatenate([obj, env])
    ratio = np.zeros_like(obj)
    pos = env > 0
    ratio[pos] = np.minimum(obj[pos] / env[pos], config.ratio_cap)
    ratio[~pos & (obj > 0)] = config.ratio_cap
    return np.concatenate([obj, env, ratio])


def stability_vector(object: PointCloud, base: PointCloud, placement: Placement,
                     config: StabilityConfig = None) -> StabilityFeatures:
    """Place ``object`` and concatenate contact, caging and histogram blocks."""
    config = config or StabilityConfig.named("single145")
    placed = placement.apply(object)
    values = np.concatenate([
        supporting_contacts(placed, base, config.contact_fraction, config),
        caging_features(placed, base, config),
        placement_histograms(placed, base, config),
    ])
    return StabilityFeatures(values, config)


class StabilityFeaturizer(TransformerMixin, BaseEstimator):
    """Transformer turning ``(object, base, placement)`` triples into rows."""

    def __init__(self, variant="single145"):
        self.variant = variant

    def fit(self, X=None, y=None):
        self.config_ = StabilityConfig.named(self.variant)
        self.n_features_out_ = self.config_.length
        return self

    def transform(self, X):
        config = getattr(self, "config_", None) or StabilityConfig.named(self.variant)
        rows = [stability_vector(o, b, p, config).values for o, b, p in X]
        return np.vstack(rows) if rows else np.zeros((0, config.length))

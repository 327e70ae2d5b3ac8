"""Point clouds, rigid transforms, planar hulls and candidate placement sampling.

Gravity is the global -Z axis throughout the package. All lengths are meters.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .errors import (
    CloudFormatError,
    DegenerateCovariance,
    DegenerateHull,
    EmptyCloud,
)

HULL_RESOLUTION = 1e-7
DEFAULT_CLEARANCE = 0.005
# XY radius under which an object point "covers" a base point; kept off the
# 5 mm grid pitch of the generators so grid distances never sit on it.
CONTACT_RADIUS = 0.0045


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    colors: Optional[np.ndarray] = None
    frame: str = "world"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise CloudFormatError("point coordinates must be finite")
        object.__setattr__(self, "points", pts)
        if self.colors is not None:
            cols = np.asarray(self.colors, dtype=float).reshape(-1, 3)
            if len(cols) != len(pts):
                raise CloudFormatError("colors and points differ in length")
            if not np.all(np.isfinite(cols)):
                raise CloudFormatError("colors must be finite")
            object.__setattr__(self, "colors", cols)

    def __len__(self):
        return len(self.points)

    @property
    def has_color(self):
        return self.colors is not None

    def centroid(self):
        require_points(self)
        return self.points.mean(axis=0)

    def bounds(self):
        require_points(self)
        return self.points.min(axis=0), self.points.max(axis=0)

    def with_frame(self, frame):
        return PointCloud(self.points, self.colors, frame)


def require_points(cloud: PointCloud, minimum: int = 1):
    if cloud is None or len(cloud.points) < max(minimum, 1):
        raise EmptyCloud("point cloud is empty")


# --------------------------------------------------------------------------- #
# rotations
# --------------------------------------------------------------------------- #


@dataclass(frozen=True, eq=False)
class Rotation:
    """Unit quaternion ``(w, x, y, z)``; the sign is canonicalized so w >= 0."""

    quat: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        q = np.asarray(self.quat, dtype=float).reshape(4)
        n = np.linalg.norm(q)
        if not np.isfinite(n) or n < 1e-12:
            raise ValueError("quaternion must be non-zero and finite")
        q = q / n
        if q[0] < 0 or (q[0] == 0 and _first_nonzero(q[1:]) < 0):
            q = -q
        object.__setattr__(self, "quat", q)

    @classmethod
    def identity(cls):
        return cls(np.array([1.0, 0.0, 0.0, 0.0]))

    @classmethod
    def from_axis_angle(cls, axis, angle):
        axis = np.asarray(axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        half = 0.5 * angle
        return cls(np.concatenate([[math.cos(half)], math.sin(half) * axis]))

    @classmethod
    def about_z(cls, angle):
        return cls(np.array([math.cos(0.5 * angle), 0.0, 0.0, math.sin(0.5 * angle)]))

    @classmethod
    def from_matrix(cls, R):
        R = np.asarray(R, dtype=float)
        tr = np.trace(R)
        if tr > 0:
            s = 2.0 * math.sqrt(1.0 + tr)
            q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s,
                 (R[1, 0] - R[0, 1]) / s]
        elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
            s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
            q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s,
                 (R[0, 2] + R[2, 0]) / s]
        elif R[1, 1] > R[2, 2]:
            s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
            q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s,
                 (R[1, 2] + R[2, 1]) / s]
        else:
            s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
            q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s,
                 (R[1, 2] + R[2, 1]) / s, 0.25 * s]
        return cls(np.array(q))

    def matrix(self):
        w, x, y, z = self.quat
        return np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ])

    def apply(self, points):
        return np.asarray(points, dtype=float) @ self.matrix().T

    def __mul__(self, other: "Rotation") -> "Rotation":
        w1, x1, y1, z1 = self.quat
        w2, x2, y2, z2 = other.quat
        return Rotation(np.array([
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]))

    def inverse(self):
        w, x, y, z = self.quat
        return Rotation(np.array([w, -x, -y, -z]))

    def angle_to(self, other: "Rotation") -> float:
        d = abs(float(np.dot(self.quat, other.quat)))
        return 2.0 * math.acos(min(1.0, d))

    def __repr__(self):
        return "Rotation(%s)" % np.array2string(self.quat, precision=6)


def _first_nonzero(v):
    for x in v:
        if x != 0:
            return x
    return 0.0


def octahedral_rotations():
    """The 24 proper rotations mapping the coordinate axes onto themselves.

    Identity first; the rest in a fixed order (signed permutation matrices
    enumerated lexicographically).
    """
    mats = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1, -1), repeat=3):
            R = np.zeros((3, 3))
            for row, (col, s) in enumerate(zip(perm, signs)):
                R[row, col] = s
            if np.linalg.det(R) > 0:
                mats.append(R)
    return [Rotation.from_matrix(R) for R in mats]


# --------------------------------------------------------------------------- #
# placements and transforms
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class BaseRef:
    kind: str  # "area" or "object"
    index: int

    def __post_init__(self):
        if self.kind not in ("area", "object"):
            raise ValueError("base kind must be 'area' or 'object'")


@dataclass(frozen=True, eq=False)
class Placement:
    location: np.ndarray
    rotation: Rotation
    base: BaseRef = BaseRef("area", 0)

    def __post_init__(self):
        loc = np.asarray(self.location, dtype=float).reshape(3)
        object.__setattr__(self, "location", loc)

    def as_vector(self):
        """``[x, y, z, qw, qx, qy, qz]``."""
        return np.concatenate([self.location, self.rotation.quat])

    @classmethod
    def from_vector(cls, vec, base=BaseRef("area", 0)):
        vec = np.asarray(vec, dtype=float)
        return cls(vec[:3], Rotation(vec[3:7]), base)

    def apply(self, cloud: PointCloud) -> PointCloud:
        return transform_cloud(cloud, self.rotation, self.location)


def transform_cloud(cloud: PointCloud, rot: Rotation, trans) -> PointCloud:
    require_points(cloud)
    pts = rot.apply(cloud.points) + np.asarray(trans, dtype=float).reshape(1, 3)
    return PointCloud(pts, cloud.colors, cloud.frame)


# --------------------------------------------------------------------------- #
# planar geometry
# --------------------------------------------------------------------------- #


@dataclass(frozen=True, eq=False)
class ConvexPolygon2D:
    """Strictly convex polygon with counter-clockwise vertices."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        if len(v) < 3:
            raise DegenerateHull("polygon needs at least 3 vertices")
        object.__setattr__(self, "vertices", v)
        if self.area <= 0:
            raise DegenerateHull("polygon must have positive signed area")

    @property
    def area(self):
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))

    def edges(self):
        return self.vertices, np.roll(self.vertices, -1, axis=0)

    def contains(self, p, tol=0.0):
        return distance_to_boundary(self, p) >= -tol


def _scaled(points):
    return np.rint(np.asarray(points, dtype=float) / HULL_RESOLUTION).astype(np.int64)


def convex_hull_2d(points) -> ConvexPolygon2D:
    """Monotone-chain hull with exact integer orientation tests.

    Coordinates are snapped to a 1e-7 m lattice for the orientation predicate;
    the returned vertices are the original input coordinates.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        raise DegenerateHull("need at least 3 points")
    q = _scaled(pts)
    _, first = np.unique(q, axis=0, return_index=True)
    first = np.sort(first)
    q, pts = q[first], pts[first]
    if len(q) < 3:
        raise DegenerateHull("need at least 3 distinct points")
    keep = _akl_toussaint(q)
    q, pts = q[keep], pts[keep]
    order = np.lexsort((q[:, 1], q[:, 0]))
    q = [(int(a), int(b)) for a, b in q[order]]
    pts = pts[order]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for i in range(len(q)):
        while len(lower) >= 2 and cross(q[lower[-2]], q[lower[-1]], q[i]) <= 0:
            lower.pop()
        lower.append(i)
    for i in range(len(q) - 1, -1, -1):
        while len(upper) >= 2 and cross(q[upper[-2]], q[upper[-1]], q[i]) <= 0:
            upper.pop()
        upper.append(i)
    idx = lower[:-1] + upper[:-1]
    if len(idx) < 3:
        raise DegenerateHull("points are collinear")
    return ConvexPolygon2D(pts[idx])


def _akl_toussaint(q):
    """Indices that may be hull vertices.

    Large inputs are reduced to qhull's vertices, which the exact pass then
    filters. If qhull fails, points strictly inside the extreme-point
    octagon are dropped instead.
    """
    if len(q) < 16:
        return np.arange(len(q))
    if len(q) > 64:
        try:
            v = ConvexHull(q.astype(float)).vertices
        except QhullError:
            v = None
        if v is not None:
            return np.sort(v)
    s, d = q[:, 0] + q[:, 1], q[:, 0] - q[:, 1]
    ext = [int(np.argmin(q[:, 0])), int(np.argmin(d)), int(np.argmax(q[:, 1])),
           int(np.argmax(s)), int(np.argmax(q[:, 0])), int(np.argmax(d)),
           int(np.argmin(q[:, 1])), int(np.argmin(s))]
    # octagon order: left, top-left, top, top-right, right, bottom-right, bottom, bottom-left
    poly = []
    for i in ext:
        if not poly or poly[-1] != i:
            poly.append(i)
    if poly[0] == poly[-1]:
        poly.pop()
    if len(poly) < 3:
        return np.arange(len(q))
    poly = poly[::-1]  # counter-clockwise
    inside = np.ones(len(q), dtype=bool)
    for a, b in zip(poly, poly[1:] + poly[:1]):
        ax, ay = q[a]
        bx, by = q[b]
        c = (bx - ax) * (q[:, 1] - ay) - (by - ay) * (q[:, 0] - ax)
        inside &= c > 0
    if _signed_area2(q[poly]) <= 0:
        return np.arange(len(q))
    return np.flatnonzero(~inside)


def _signed_area2(v):
    x, y = v[:, 0], v[:, 1]
    return int(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _segment_distances(poly: ConvexPolygon2D, p):
    a, b = poly.edges()
    ab = b - a
    ap = np.asarray(p, dtype=float) - a
    t = np.clip(np.einsum("ij,ij->i", ap, ab) / np.einsum("ij,ij->i", ab, ab), 0, 1)
    closest = a + t[:, None] * ab
    return np.linalg.norm(np.asarray(p, dtype=float) - closest, axis=1), ab, ap


def distance_to_boundary(poly: ConvexPolygon2D, p) -> float:
    """Signed distance from ``p`` to the polygon boundary (positive inside)."""
    d, ab, ap = _segment_distances(poly, p)
    dist = float(d.min())
    cross = ab[:, 0] * ap[:, 1] - ab[:, 1] * ap[:, 0]
    return dist if np.all(cross >= 0) else -dist


def polygon_distance(p: ConvexPolygon2D, q: ConvexPolygon2D) -> float:
    """Euclidean distance between two convex polygons (0 when they intersect)."""
    if _polygons_intersect(p, q):
        return 0.0
    best = math.inf
    for a, b in ((p, q), (q, p)):
        for v in a.vertices:
            d, _, _ = _segment_distances(b, v)
            best = min(best, float(d.min()))
    return best


def _polygons_intersect(p, q):
    for poly in (p, q):
        a, b = poly.edges()
        normals = np.stack([-(b - a)[:, 1], (b - a)[:, 0]], axis=1)
        pa, qa = p.vertices @ normals.T, q.vertices @ normals.T
        if np.any(pa.max(axis=0) < qa.min(axis=0)) or np.any(qa.max(axis=0) < pa.min(axis=0)):
            return False
    return True


def footprint(cloud: PointCloud) -> ConvexPolygon2D:
    """Convex hull of the cloud projected onto the XY plane."""
    require_points(cloud)
    return convex_hull_2d(cloud.points[:, :2])


def footprint_area(cloud: PointCloud) -> float:
    try:
        return footprint(cloud).area
    except DegenerateHull:
        return 0.0


# --------------------------------------------------------------------------- #
# eigen-analysis
# --------------------------------------------------------------------------- #


def covariance_eigenvalues(points):
    """Eigenvalues of the (1/N) covariance matrix, descending, clamped at 0."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 2:
        raise DegenerateCovariance("need at least 2 points")
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / len(pts)
    lam = np.linalg.eigvalsh(cov)[::-1]
    return tuple(float(max(v, 0.0)) for v in lam)


# --------------------------------------------------------------------------- #
# sampling and collision checks
# --------------------------------------------------------------------------- #


def grid_shape(extent, grid_step):
    return tuple(max(1, int(math.ceil(e / grid_step - 1e-9))) for e in extent)


def xy_pairs(a, b, radius, b_tree=None):
    """Index pairs ``(i, j)`` with ``|a[i] - b[j]| <= radius`` in XY."""
    b_tree = b_tree if b_tree is not None else cKDTree(np.asarray(b)[:, :2])
    m = cKDTree(np.asarray(a)[:, :2]).sparse_distance_matrix(b_tree, radius, output_type="ndarray")
    return m["i"].astype(np.intp), m["j"].astype(np.intp)


def drop_offset(points, base: PointCloud, base_tree=None, radius=CONTACT_RADIUS):
    """Vertical offset that lowers ``points`` onto ``base`` until first contact.

    Returns the translation along Z to add to ``points``; ``None`` when no base
    point lies under the object.
    """
    i, j = xy_pairs(points, base.points, radius, base_tree)
    if len(i) == 0:
        return None
    return float(np.max(base.points[j, 2] - points[i, 2]))


def sample_placements(object: PointCloud, base: PointCloud, grid_step: float,
                      configs: Sequence[Rotation], seed: int = 0,
                      base_ref: BaseRef = BaseRef("area", 0)):
    """Grid x configuration candidate placements over the base's XY box.

    One uniformly jittered XY point per grid cell is shared by every
    configuration. The object's XY centroid is put on that point and the
    object is lowered onto the base until first contact.
    """
    require_points(object)
    require_points(base)
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    if not configs:
        raise ValueError("configs must be non-empty")
    lo, hi = base.bounds()
    nx, ny = grid_shape(hi[:2] - lo[:2], grid_step)
    rng = np.random.default_rng(seed)
    tree = cKDTree(base.points[:, :2])
    base_top = float(hi[2])
    rotated = [cfg.apply(object.points) for cfg in configs]
    out = []
    for ix in range(nx):
        for iy in range(ny):
            x0 = lo[0] + ix * grid_step
            y0 = lo[1] + iy * grid_step
            jit = rng.uniform(0.0, 1.0, size=2)
            xy = np.array([min(x0 + jit[0] * grid_step, hi[0]),
                           min(y0 + jit[1] * grid_step, hi[1])])
            for cfg, pts in zip(configs, rotated):
                shift = xy - pts[:, :2].mean(axis=0)
                moved = pts + np.array([shift[0], shift[1], 0.0])
                dz = drop_offset(moved, base, tree)
                if dz is None:
                    dz = base_top - float(moved[:, 2].min())
                out.append(Placement(np.array([shift[0], shift[1], dz]), cfg, base_ref))
    return out


def collision_free(object: PointCloud, base: PointCloud, placement: Placement,
                   clearance: float = DEFAULT_CLEARANCE) -> bool:
    """True iff no base point sits within ``clearance`` of the placed object
    while being above the object's local lower surface.

    The local lower surface at a base point is the lowest object point within
    ``clearance`` of it in XY.
    """
    if clearance < 0:
        raise ValueError("clearance must be non-negative")
    placed = placement.apply(object).points
    bp = base.points
    lo, hi = placed.min(axis=0) - clearance, placed.max(axis=0) + clearance
    near = np.all((bp >= lo) & (bp <= hi), axis=1)
    if not near.any() or clearance == 0:
        return True
    cand = bp[near]
    obj_tree = cKDTree(placed)
    d, _ = obj_tree.query(cand, distance_upper_bound=clearance)
    close = cand[d < clearance]
    if len(close) == 0:
        return True
    i, j = xy_pairs(close, placed, clearance)
    low = np.full(len(close), np.inf)
    np.minimum.at(low, i, placed[j, 2])
    return not np.any(close[:, 2] > low + 1e-6)


# --------------------------------------------------------------------------- #
# pcd-rgb v1 text format
# --------------------------------------------------------------------------- #


def _fmt(x):
    return format(float(x), ".17g")


def write_pcd(cloud: PointCloud, path):
    has_color = cloud.colors is not None
    lines = ["pcd-rgb v1 %d %d" % (len(cloud), int(has_color))]
    for i, p in enumerate(cloud.points):
        vals = list(p) + (list(cloud.colors[i]) if has_color else [])
        lines.append(" ".join(_fmt(v) for v in vals))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_pcd(path, frame=None) -> PointCloud:
    path = Path(path)
    text = path.read_text(encoding="utf-8").splitlines()
    if not text:
        raise CloudFormatError("empty file")
    head = text[0].split()
    if len(head) != 4 or head[0] != "pcd-rgb" or head[1] != "v1":
        raise CloudFormatError("bad header: %r" % text[0])
    try:
        n, has_color = int(head[2]), int(head[3])
    except ValueError as exc:
        raise CloudFormatError("bad header counts") from exc
    if has_color not in (0, 1):
        raise CloudFormatError("has_color must be 0 or 1")
    rows = [ln for ln in text[1:] if ln.strip()]
    if len(rows) != n:
        raise CloudFormatError("expected %d points, found %d" % (n, len(rows)))
    width = 6 if has_color else 3
    data = np.empty((n, width))
    for i, ln in enumerate(rows):
        parts = ln.split()
        if len(parts) != width:
            raise CloudFormatError("line %d: expected %d values" % (i + 2, width))
        try:
            data[i] = [float(v) for v in parts]
        except ValueError as exc:
            raise CloudFormatError("line %d: not a number" % (i + 2)) from exc
    if not np.all(np.isfinite(data)):
        raise CloudFormatError("NaN/Inf values are not allowed")
    colors = data[:, 3:6] if has_color else None
    if colors is not None and (colors.min(initial=0) < 0 or colors.max(initial=0) > 1):
        raise CloudFormatError("colors must lie in [0, 1]")
    return PointCloud(data[:, :3], colors, frame or path.stem)

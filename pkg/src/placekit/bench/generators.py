"""Parametric point-cloud generators for placing areas and objects.

Every generator samples surfaces with spacing at most ``spacing`` (5 mm by
default) and adds a small seeded jitter so that no two runs with different
seeds share exact coordinates. Areas sit on the ground plane ``z = 0``;
objects are built in their canonical upright pose with the XY centroid near
the origin and the lowest point at ``z = 0``.
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import BadParams
from ..geometry import PointCloud, Rotation

SPACING = 0.005
JITTER = 1e-4

SCENE_KINDS = ("dish_rack", "flat_table", "pen_holder", "stemware_holder", "rod", "hook", "shelf")
OBJECT_KINDS = ("plate", "bowl", "mug", "martini", "box", "book", "pen", "hanger_clothes")

SCENE_DEFAULTS = {
    "flat_table": {"size_x": 0.4, "size_y": 0.3, "height": 0.0},
    "dish_rack": {"nx": 6, "ny": 4, "pitch": 0.04, "spike_height": 0.10, "margin": 0.02},
    "pen_holder": {"radius": 0.03, "height": 0.10, "floor": 0.005},
    "stemware_holder": {"n_rails": 3, "pitch": 0.08, "length": 0.3, "rail_height": 0.04},
    "rod": {"length": 0.5, "height": 0.4, "radius": 0.01},
    "hook": {"width": 0.3, "height": 0.4, "peg_length": 0.08, "peg_height": 0.3},
    "shelf": {"width": 0.4, "depth": 0.25, "wall_height": 0.25, "n_dividers": 1},
}

OBJECT_DEFAULTS = {
    "plate": {"radius": 0.08, "thickness": 0.012},
    "bowl": {"radius": 0.07, "depth": 0.05, "foot_radius": 0.03},
    "mug": {"radius": 0.04, "height": 0.10, "handle": 0.03},
    "martini": {"rim_radius": 0.05, "depth": 0.06, "stem": 0.08, "foot_radius": 0.035},
    "box": {"size_x": 0.08, "size_y": 0.06, "size_z": 0.05},
    "book": {"size_x": 0.2, "size_y": 0.14, "size_z": 0.03},
    "pen": {"radius": 0.005, "length": 0.14},
    "hanger_clothes": {"width": 0.4, "height": 0.2, "hook": 0.04},
}

# (lower, upper) bounds on every numeric parameter, as a multiple of the default
_RANGE = (0.25, 4.0)

COLORS = {
    "flat_table": (0.55, 0.35, 0.2), "dish_rack": (0.7, 0.7, 0.72),
    "pen_holder": (0.1, 0.3, 0.8), "stemware_holder": (0.3, 0.3, 0.3),
    "rod": (0.8, 0.8, 0.1), "hook": (0.2, 0.6, 0.2), "shelf": (0.6, 0.45, 0.3),
    "plate": (0.95, 0.95, 0.92), "bowl": (0.9, 0.6, 0.3), "mug": (0.8, 0.1, 0.1),
    "martini": (0.75, 0.9, 0.95), "box": (0.4, 0.25, 0.1), "book": (0.1, 0.2, 0.6),
    "pen": (0.05, 0.05, 0.05), "hanger_clothes": (0.6, 0.3, 0.7),
}


def _params(kind, defaults, params):
    if kind not in defaults:
        raise BadParams("unknown kind %r" % kind)
    out = dict(defaults[kind])
    for key, val in (params or {}).items():
        if key not in out:
            raise BadParams("%s has no parameter %r" % (kind, key))
        ref = defaults[kind][key]
        if isinstance(ref, int) and not isinstance(ref, bool):
            if int(val) != val or not 1 <= val <= 4 * max(ref, 1) + 4:
                raise BadParams("%s.%s=%r out of range" % (kind, key, val))
            out[key] = int(val)
            continue
        if not np.isfinite(val):
            raise BadParams("%s.%s must be finite" % (kind, key))
        if ref == 0:
            if abs(val) > 2.0:
                raise BadParams("%s.%s=%r out of range" % (kind, key, val))
        elif not _RANGE[0] * ref <= val <= _RANGE[1] * ref:
            raise BadParams("%s.%s=%r outside [%g, %g]" % (kind, key, val,
                            _RANGE[0] * ref, _RANGE[1] * ref))
        out[key] = float(val)
    return out


# --------------------------------------------------------------------------- #
# surface samplers
# --------------------------------------------------------------------------- #


def _count(length, spacing):
    return max(2, int(math.ceil(length / spacing)) + 1)


def _rect(x0, x1, y0, y1, z, s=SPACING):
    xs = np.linspace(x0, x1, _count(x1 - x0, s))
    ys = np.linspace(y0, y1, _count(y1 - y0, s))
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, z)])


def _vrect_x(x0, x1, y, z0, z1, s=SPACING):
    """Vertical rectangle in the plane y = const."""
    xs = np.linspace(x0, x1, _count(x1 - x0, s))
    zs = np.linspace(z0, z1, _count(z1 - z0, s))
    X, Z = np.meshgrid(xs, zs, indexing="ij")
    return np.column_stack([X.ravel(), np.full(X.size, y), Z.ravel()])


def _vrect_y(x, y0, y1, z0, z1, s=SPACING):
    ys = np.linspace(y0, y1, _count(y1 - y0, s))
    zs = np.linspace(z0, z1, _count(z1 - z0, s))
    Y, Z = np.meshgrid(ys, zs, indexing="ij")
    return np.column_stack([np.full(Y.size, x), Y.ravel(), Z.ravel()])


def _circle(r, z, s=SPACING, cx=0.0, cy=0.0):
    n = max(3, int(math.ceil(2 * math.pi * r / s)))
    t = np.arange(n) * 2 * math.pi / n
    return np.column_stack([cx + r * np.cos(t), cy + r * np.sin(t), np.full(n, z)])


def _disk(r, z, s=SPACING):
    rings = [np.array([[0.0, 0.0, z]])]
    nr = int(math.ceil(r / s))
    for k in range(1, nr + 1):
        rings.append(_circle(r * k / nr, z, s))
    return np.vstack(rings)


def _cyl_wall(r, z0, z1, s=SPACING):
    zs = np.linspace(z0, z1, _count(z1 - z0, s))
    return np.vstack([_circle(r, z, s) for z in zs])


def _box(sx, sy, sz, s=SPACING):
    hx, hy = sx / 2, sy / 2
    faces = [
        _rect(-hx, hx, -hy, hy, 0.0, s), _rect(-hx, hx, -hy, hy, sz, s),
        _vrect_x(-hx, hx, -hy, 0.0, sz, s), _vrect_x(-hx, hx, hy, 0.0, sz, s),
        _vrect_y(-hx, -hy, hy, 0.0, sz, s), _vrect_y(hx, -hy, hy, 0.0, sz, s),
    ]
    return _dedupe(np.vstack(faces))


def _segment(a, b, s=SPACING):
    a, b = np.asarray(a, float), np.asarray(b, float)
    n = _count(float(np.linalg.norm(b - a)), s)
    t = np.linspace(0, 1, n)[:, None]
    return a + t * (b - a)


def _tube(a, b, r, s=SPACING):
    """Thin tube around segment a-b sampled as rings."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    axis = b - a
    length = float(np.linalg.norm(axis))
    axis = axis / length
    helper = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(axis, helper)
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)
    n = max(4, int(math.ceil(2 * math.pi * r / s)))
    t = np.arange(n) * 2 * math.pi / n
    ring = np.cos(t)[:, None] * u + np.sin(t)[:, None] * v
    pts = [c + r * ring for c in _segment(a, b, s)]
    return np.vstack(pts)


def _dedupe(pts):
    _, idx = np.unique(np.round(pts, 9), axis=0, return_index=True)
    return pts[np.sort(idx)]


def _finish(pts, kind, seed, frame):
    rng = np.random.default_rng(seed)
    pts = _dedupe(np.asarray(pts, float))
    pts = pts + rng.uniform(-JITTER, JITTER, size=pts.shape)
    base = np.array(COLORS[kind])
    cols = np.clip(base + rng.uniform(-0.03, 0.03, size=pts.shape), 0.0, 1.0)
    return PointCloud(pts, cols, frame)


# --------------------------------------------------------------------------- #
# placing areas
# --------------------------------------------------------------------------- #


def generate_scene(kind, params=None, seed=0) -> PointCloud:
    """Sample the placing area ``kind``; identical seeds give identical clouds."""
    p = _params(kind, SCENE_DEFAULTS, params)
    if kind == "flat_table":
        hx, hy = p["size_x"] / 2, p["size_y"] / 2
        pts = _rect(-hx, hx, -hy, hy, p["height"])
    elif kind == "dish_rack":
        nx, ny, pitch, m = p["nx"], p["ny"], p["pitch"], p["margin"]
        hx, hy = (nx - 1) * pitch / 2 + m, (ny - 1) * pitch / 2 + m
        parts = [_rect(-hx, hx, -hy, hy, 0.0)]
        for i in range(nx):
            for j in range(ny):
                x = (i - (nx - 1) / 2) * pitch
                y = (j - (ny - 1) / 2) * pitch
                parts.append(_segment((x, y, 0.0), (x, y, p["spike_height"]))[1:])
        pts = np.vstack(parts)
    elif kind == "pen_holder":
        r, h, f = p["radius"], p["height"], p["floor"]
        pts = np.vstack([_disk(r, 0.0), _disk(r, f), _cyl_wall(r, 0.0, h)])
    elif kind == "stemware_holder":
        n, pitch, length, hr = p["n_rails"], p["pitch"], p["length"], p["rail_height"]
        hx = length / 2
        hy = (n - 1) * pitch / 2 + pitch / 2
        parts = [_rect(-hx, hx, -hy, hy, 0.0)]
        for j in range(n):
            y = (j - (n - 1) / 2) * pitch
            parts.append(_vrect_x(-hx, hx, y, SPACING, hr))
        pts = np.vstack(parts)
    elif kind == "rod":
        L, H, r = p["length"], p["height"], p["radius"]
        pts = np.vstack([
            _rect(-L / 2, L / 2, -0.1, 0.1, 0.0),
            _tube((-L / 2, 0, 0.0), (-L / 2, 0, H), r),
            _tube((L / 2, 0, 0.0), (L / 2, 0, H), r),
            _tube((-L / 2, 0, H), (L / 2, 0, H), r),
        ])
    elif kind == "hook":
        w, H, pl, ph = p["width"], p["height"], p["peg_length"], p["peg_height"]
        pts = np.vstack([
            _vrect_y(0.0, -w / 2, w / 2, 0.0, H),
            _rect(0.0, 0.15, -w / 2, w / 2, 0.0),
            _tube((0.0, 0.0, ph), (pl, 0.0, ph + 0.02), 0.005),
        ])
    else:  # shelf
        w, d, h, nd = p["width"], p["depth"], p["wall_height"], p["n_dividers"]
        parts = [_rect(-w / 2, w / 2, -d / 2, d / 2, 0.0),
                 _vrect_x(-w / 2, w / 2, d / 2, 0.0, h),
                 _vrect_y(-w / 2, -d / 2, d / 2, 0.0, h),
                 _vrect_y(w / 2, -d / 2, d / 2, 0.0, h)]
        for k in range(nd):
            x = -w / 2 + w * (k + 1) / (nd + 1)
            parts.append(_vrect_y(x, -d / 2, d / 2, 0.0, h))
        pts = np.vstack(parts)
    return _finish(pts, kind, seed, kind)


# --------------------------------------------------------------------------- #
# objects
# --------------------------------------------------------------------------- #


def generate_object(kind, params=None, seed=0) -> PointCloud:
    """Sample object ``kind`` in its canonical upright pose."""
    p = _params(kind, OBJECT_DEFAULTS, params)
    if kind == "plate":
        r, t = p["radius"], p["thickness"]
        pts = np.vstack([_disk(r, 0.0), _disk(r, t), _cyl_wall(r, 0.0, t)])
    elif kind == "bowl":
        R, depth, fr = p["radius"], p["depth"], p["foot_radius"]
        # spherical cap with opening radius R and given depth, resting on a foot
        sphere_r = (R ** 2 + depth ** 2) / (2 * depth)
        zc = sphere_r
        parts = [_disk(fr, 0.0)]
        zs = np.linspace(0.0, depth, _count(depth * 2, SPACING))
        for z in zs:
            rr = math.sqrt(max(sphere_r ** 2 - (zc - z) ** 2, 0.0))
            if rr >= fr:
                parts.append(_circle(rr, z))
        pts = np.vstack(parts)
    elif kind == "mug":
        r, h, hd = p["radius"], p["height"], p["handle"]
        handle = []
        for t in np.linspace(-math.pi / 2, math.pi / 2, _count(math.pi * hd, SPACING)):
            c = (r + hd * math.cos(t), 0.0, h / 2 + hd * math.sin(t))
            handle.append(c)
        pts = np.vstack([_disk(r, 0.0), _cyl_wall(r, 0.0, h), np.array(handle)])
    elif kind == "martini":
        rr, depth, stem, fr = p["rim_radius"], p["depth"], p["stem"], p["foot_radius"]
        parts = [_disk(fr, 0.0), _segment((0, 0, 0), (0, 0, stem))]
        zs = np.linspace(stem, stem + depth, _count(math.hypot(depth, rr), SPACING))
        for z in zs[1:]:
            parts.append(_circle(rr * (z - stem) / depth, z))
        pts = np.vstack(parts)
    elif kind == "box":
        pts = _box(p["size_x"], p["size_y"], p["size_z"])
    elif kind == "book":
        pts = _box(p["size_x"], p["size_y"], p["size_z"])
    elif kind == "pen":
        r, L = p["radius"], p["length"]
        pts = np.vstack([_disk(r, 0.0), _disk(r, L), _cyl_wall(r, 0.0, L)])
    else:  # hanger_clothes
        w, h, hk = p["width"], p["height"], p["hook"]
        apex = (0.0, 0.0, h)
        pts = np.vstack([
            _segment((-w / 2, 0, 0), (w / 2, 0, 0)),
            _segment((-w / 2, 0, 0), apex),
            _segment((w / 2, 0, 0), apex),
            _segment(apex, (0, 0, h + hk)),
            np.array([(hk / 2 * (1 - math.cos(t)), 0.0, h + hk + hk / 2 * math.sin(t))
                      for t in np.linspace(0, math.pi, 12)]),
        ])
    pts = np.asarray(pts, float)
    pts[:, :2] -= pts[:, :2].mean(axis=0)
    pts[:, 2] -= pts[:, 2].min()
    return _finish(pts, kind, seed, kind)


# --------------------------------------------------------------------------- #
# preference metadata
# --------------------------------------------------------------------------- #

# Directions (world frame) that the object's canonical up axis may take in a
# preferred placement; "horizontal" means any direction in the XY plane.
PREFERRED_UP = {
    ("plate", "flat_table"): ("up",),
    ("plate", "dish_rack"): ("horizontal",),
    ("bowl", "flat_table"): ("up",),
    ("bowl", "dish_rack"): ("horizontal", "down"),
    ("mug", "flat_table"): ("up",),
    ("mug", "dish_rack"): ("down",),
    ("mug", "shelf"): ("up",),
    ("martini", "flat_table"): ("up",),
    ("martini", "stemware_holder"): ("down",),
    ("box", "flat_table"): ("up",),
    ("box", "shelf"): ("up",),
    ("book", "flat_table"): ("up",),
    ("book", "shelf"): ("horizontal",),
    ("pen", "pen_holder"): ("up", "down"),
    ("pen", "flat_table"): ("horizontal",),
    ("hanger_clothes", "rod"): ("up",),
    ("hanger_clothes", "hook"): ("up",),
}

_UP = {"up": np.array([0.0, 0.0, 1.0]), "down": np.array([0.0, 0.0, -1.0])}


def semantic_preference(object_kind, scene_kind) -> bool:
    """Generator-assigned semantic label: does this area suit this object?"""
    return (object_kind, scene_kind) in PREFERRED_UP


def preferred_orientation(object_kind, scene_kind, rotation: Rotation, tol_deg=15.0) -> bool:
    """True if the rotated up axis is within ``tol_deg`` of a preferred direction.

    Pairs without metadata fall back to "upright".
    """
    allowed = PREFERRED_UP.get((object_kind, scene_kind), ("up",))
    up = rotation.matrix()[:, 2]
    tol = math.radians(tol_deg)
    for name in allowed:
        if name == "horizontal":
            if abs(math.asin(max(-1.0, min(1.0, up[2])))) <= tol + 1e-12:
                return True
        else:
            cosang = float(np.clip(np.dot(up, _UP[name]), -1.0, 1.0))
            if math.acos(cosang) <= tol + 1e-12:
                return True
    return False

"""Quasi-static stability oracle used to label synthetic placements."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import CollidingPlacement, DegenerateHull
from ..geometry import (
    CONTACT_RADIUS,
    DEFAULT_CLEARANCE,
    Placement,
    PointCloud,
    collision_free,
    convex_hull_2d,
    distance_to_boundary,
    xy_pairs,
)
from ..stability import vertical_gaps
from .generators import preferred_orientation

MARGIN = 0.01
CONTACT_TOL = 0.002
CAGE_DILATION = 0.03


@dataclass(frozen=True)
class OracleLabel:
    stable: bool
    preferred: bool
    reason: str = ""


def settle(placed: PointCloud, base: PointCloud, radius=CONTACT_RADIUS):
    """Drop the placed object along -Z onto the base.

    Returns ``(points, gaps)`` after settling, or ``(None, gaps)`` when nothing
    lies beneath the object.
    """
    gaps = vertical_gaps(placed.points, base.points, radius)
    finite = np.isfinite(gaps)
    if not finite.any():
        return None, gaps
    fall = float(gaps[finite].min())
    pts = placed.points.copy()
    if fall > 0:
        pts[:, 2] -= fall
        gaps = gaps - fall
    return pts, gaps


def support_margin(points, base: PointCloud, tol=CONTACT_TOL, radius=CONTACT_RADIUS):
    """Signed distance of the COM projection to the contact polygon, or None.

    Contacts are object points resting within ``tol`` of a base point below
    them; the polygon is their XY hull, so it is not widened by ``radius``.
    """
    i, j = xy_pairs(points, base.points, radius)
    touch = np.unique(i[np.abs(points[i, 2] - base.points[j, 2]) <= tol])
    if len(touch) < 3:
        return None
    try:
        hull = convex_hull_2d(points[touch, :2])
    except DegenerateHull:
        return None
    return distance_to_boundary(hull, points[:, :2].mean(axis=0))


def caged(points, base: PointCloud, dilation=CAGE_DILATION):
    """Base material above COM height on all four horizontal sides."""
    com = points.mean(axis=0)
    lo, hi = points[:, :2].min(axis=0), points[:, :2].max(axis=0)
    B = base.points
    region = np.all((B[:, :2] >= lo - dilation) & (B[:, :2] <= hi + dilation), axis=1)
    outside = ~np.all((B[:, :2] >= lo) & (B[:, :2] <= hi), axis=1)
    wall = B[region & outside & (B[:, 2] > com[2])]
    if len(wall) == 0:
        return False
    d = wall[:, :2] - com[:2]
    ang = np.degrees(np.arctan2(d[:, 1], d[:, 0]))
    sectors = [np.abs(ang) <= 45, (ang >= 45) & (ang <= 135),
               np.abs(ang) >= 135, (ang <= -45) & (ang >= -135)]
    return all(s.any() for s in sectors)


def stability_oracle(object: PointCloud, base: PointCloud, placement: Placement,
                     object_kind=None, scene_kind=None, margin=MARGIN,
                     clearance=DEFAULT_CLEARANCE) -> OracleLabel:
    """Label a placement as stable and/or preferred.

    Stable when, after settling, the COM projection lies at least ``margin``
    inside the contact hull, or the object is caged on all four sides.
    Preferred when stable and the orientation matches the generator's
    preferred set within 15 degrees.
    """
    if not collision_free(object, base, placement, clearance):
        raise CollidingPlacement("placement intersects the base")
    placed = placement.apply(object)
    pts, _ = settle(placed, base)
    if pts is None:
        return OracleLabel(False, False, "no support")
    m = support_margin(pts, base)
    if m is not None and m >= margin:
        stable, reason = True, "support"
    elif caged(pts, base):
        stable, reason = True, "caged"
    else:
        stable, reason = False, "tips" if m is not None else "degenerate support"
    preferred = stable and (
        object_kind is None
        or preferred_orientation(object_kind, scene_kind, placement.rotation))
    return OracleLabel(stable, bool(preferred), reason)


def orientation_error_deg(a, b):
    return math.degrees(a.angle_to(b))

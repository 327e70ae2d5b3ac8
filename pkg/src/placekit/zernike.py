"""3D Zernike moment magnitudes of a point cloud.

The cloud is centered on its centroid and scaled into the unit ball; every
point carries mass ``1/N``. The descriptor entry for ``(n, l)`` is the norm of
the moment vector over ``m``, which is unchanged by rotations of the cloud.
"""
from __future__ import annotations

from functools import lru_cache
from math import comb, pi, sqrt

import numpy as np
from scipy.special import sph_harm_y

from .errors import TooSparse
from .geometry import PointCloud

MAX_ORDER = 11
N_VALUES = 37


def moment_indices(max_order=MAX_ORDER):
    """(n, l) pairs with l <= n and n - l even, lexicographic."""
    return [(n, l) for n in range(max_order + 1) for l in range(n + 1) if (n - l) % 2 == 0]


@lru_cache(maxsize=None)
def radial_coefficients(n, l):
    """Coefficients ``q`` with ``R_nl(r) = sum_v q[v] r^(2v + l)``."""
    if (n - l) % 2 or l > n:
        raise ValueError("invalid (n, l) = (%d, %d)" % (n, l))
    k = (n - l) // 2
    front = (-1) ** k / 2 ** (2 * k) * sqrt((2 * l + 4 * k + 3) / 3.0) * comb(2 * k, k)
    return tuple(
        front * (-1) ** v * comb(k, v) * comb(2 * (k + l + v) + 1, 2 * k) / comb(k + l + v, k)
        for v in range(k + 1)
    )


def radial(n, l, r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    for v, q in enumerate(radial_coefficients(n, l)):
        out += q * r ** (2 * v + l)
    return out


def zernike_descriptor(cloud: PointCloud, n_values=N_VALUES, max_order=MAX_ORDER):
    """The first ``n_values`` moment magnitudes in (n, l) lexicographic order."""
    pts = cloud.points
    if len(pts) < 10:
        raise TooSparse("Zernike descriptor needs at least 10 points")
    x = pts - pts.mean(axis=0)
    r = np.sqrt((x ** 2).sum(axis=1))
    scale = r.max()
    if scale <= 0:
        raise TooSparse("all points coincide")
    x, r = x / scale, r / scale
    safe = np.where(r > 0, r, 1.0)
    theta = np.arccos(np.clip(x[:, 2] / safe, -1.0, 1.0))
    phi = np.arctan2(x[:, 1], x[:, 0])
    w = 1.0 / len(pts)
    index = moment_indices(max_order)[:n_values]
    harmonics = {}
    out = np.empty(len(index))
    for i, (n, l) in enumerate(index):
        if l not in harmonics:
            m = np.arange(-l, l + 1)
            harmonics[l] = np.conj(sph_harm_y(l, m[None, :], theta[:, None], phi[:, None]))
        moments = (3.0 / (4.0 * pi)) * w * (radial(n, l, r) @ harmonics[l])
        out[i] = float(np.sqrt(np.sum(np.abs(moments) ** 2)))
    return out

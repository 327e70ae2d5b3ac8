"""Small random placing instances with box objects and random candidate scores."""
from __future__ import annotations

import numpy as np

from ..geometry import BaseRef, PointCloud, octahedral_rotations
from ..infer import Candidate
from ..model import Scene, gate_log_potentials


def _box(rng):
    dims = rng.uniform(0.03, 0.10, size=3)
    corners = np.array([[x, y, z] for x in (-.5, .5) for y in (-.5, .5) for z in (0, 1)]) * dims
    return PointCloud(corners)


def _table(size=0.4, step=0.05):
    g = np.arange(0.0, size + 1e-9, step)
    xx, yy = np.meshgrid(g, g)
    return PointCloud(np.column_stack([xx.ravel(), yy.ravel(), np.zeros(xx.size)]))


def random_instance(seed, max_objects=3, max_areas=2, max_configs=4, max_locations=3,
                    stacking=True, score_scale=2.0):
    """A seeded ``(scene, candidates)`` pair.

    Locations are random points shared by all objects on an area, so
    footprints of neighboring locations may overlap. Stability and semantic
    margins are drawn from a normal distribution and passed through the gate.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, max_objects + 1))
    m = int(rng.integers(1, max_areas + 1))
    n_cfg = int(rng.integers(1, max_configs + 1))
    n_loc = int(rng.integers(1, max_locations + 1))
    rots = octahedral_rotations()
    configs = [rots[k] for k in sorted(rng.choice(len(rots), size=n_cfg, replace=False))]
    objects = [_box(rng) for _ in range(n)]
    areas = [_table() for _ in range(m)]
    scene = Scene(objects, areas)
    locs = rng.uniform(0.05, 0.35, size=(m, n_loc, 2))
    stack_offsets = rng.uniform(-0.01, 0.01, size=(n_loc, 2))

    def margins():
        ms, mp = rng.normal(0.0, score_scale, size=2)
        return gate_log_potentials(ms, mp)

    cands = []
    for i, obj in enumerate(objects):
        for j, rot in enumerate(configs):
            pts = rot.apply(obj.points)
            cxy = pts[:, :2].mean(axis=0)
            for a in range(m):
                for k in range(n_loc):
                    t = np.array([locs[a, k, 0] - cxy[0], locs[a, k, 1] - cxy[1], -pts[:, 2].min()])
                    l1, l0 = margins()
                    cands.append(Candidate(i, j, rot, BaseRef("area", a), k, t, l1, l0))
            if not stacking:
                continue
            for r, base in enumerate(objects):
                if r == i:
                    continue
                for t_idx, brot in enumerate(configs):
                    bp = brot.apply(base.points)
                    bxy = bp[:, :2].mean(axis=0)
                    for k in range(n_loc):
                        xy = bxy + stack_offsets[k] - cxy
                        t = np.array([xy[0], xy[1], bp[:, 2].max() - pts[:, 2].min()])
                        l1, l0 = margins()
                        cands.append(Candidate(i, j, rot, BaseRef("object", r), k, t, l1, l0,
                                               base_config=t_idx, base_rotation=brot))
    return scene, cands

"""Scene manifests and the end-to-end placing pipeline.

A scene manifest is JSON::

    {"format_version": 1, "ground_z": 0.0,
     "objects": [{"id": "plate1", "cloud": "plate.pcd", "kind": "plate"}, ...],
     "environments": [{"id": "rack", "generator": {"kind": "dish_rack", "seed": 0}}, ...]}

Each entry gives a cloud file (relative to the manifest) or a generator
spec; ``kind`` is optional metadata used by evaluation.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import DEFAULT_CLEARANCE, BaseRef, PointCloud, collision_free, octahedral_rotations, read_pcd, sample_placements
from .infer import Candidate, build_ilp, solve_placing
from .model import Scene, gate_log_potentials, semantic_potential, stability_potential
from .semantic import support_height

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1


def _entry_cloud(entry, root, generate):
    if "cloud" in entry:
        return read_pcd(Path(root) / entry["cloud"])
    if "generator" in entry:
        g = entry["generator"]
        return generate(g["kind"], g.get("params"), g.get("seed", 0))
    raise ValueError("manifest entry %r needs 'cloud' or 'generator'" % entry.get("id"))


def load_scene(path) -> Scene:
    from .bench.generators import generate_object, generate_scene

    path = Path(path)
    d = json.loads(path.read_text())
    if d.get("format_version") != MANIFEST_VERSION:
        raise ValueError("unsupported manifest format_version %r" % d.get("format_version"))
    objs, envs = d["objects"], d["environments"]
    return Scene(
        [_entry_cloud(e, path.parent, generate_object) for e in objs],
        [_entry_cloud(e, path.parent, generate_scene) for e in envs],
        [e["id"] for e in objs], [e["id"] for e in envs],
        float(d.get("ground_z", 0.0)),
        [e.get("kind") or e.get("generator", {}).get("kind") for e in objs],
        [e.get("kind") or e.get("generator", {}).get("kind") for e in envs])


def scene_manifest(objects, environments, ground_z=0.0):
    """Manifest dict from ``(id, kind, seed)`` generator triples."""
    def entry(i, k, s):
        return {"id": i, "kind": k, "generator": {"kind": k, "seed": int(s)}}
    return {"format_version": MANIFEST_VERSION, "ground_z": float(ground_z),
            "objects": [entry(*o) for o in objects],
            "environments": [entry(*e) for e in environments]}


def random_scene_manifest(seed, object_kinds=("box", "book", "mug", "plate", "bowl"),
                          scene_kinds=("flat_table", "shelf"), max_objects=3, max_areas=2):
    """A seeded multi-object scene built from generators."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, max_objects + 1))
    m = int(rng.integers(1, max_areas + 1))
    objs = [("o%d_%s" % (i, k), k, int(rng.integers(0, 1000)))
            for i, k in enumerate(rng.choice(object_kinds, size=n))]
    envs = [("a%d_%s" % (i, k), k, int(rng.integers(0, 1000)))
            for i, k in enumerate(rng.choice(scene_kinds, size=m))]
    return scene_manifest(objs, envs)


@dataclass
class PipelineConfig:
    grid: float = 0.1
    configs: tuple = None
    top_k: int = 5
    stacking: bool = True
    clearance: float = DEFAULT_CLEARANCE
    seed: int = 0

    def rotations(self):
        rots = octahedral_rotations()
        return [rots[k] for k in (self.configs if self.configs is not None else range(len(rots)))]


def _resting(cloud: PointCloud):
    """Cloud shifted so its lowest point sits at z = 0."""
    pts = cloud.points.copy()
    pts[:, 2] -= pts[:, 2].min()
    return PointCloud(pts, cloud.colors, cloud.frame)


def candidate_set(scene: Scene, model_s, model_p, vocab, config: PipelineConfig = None):
    """Scored candidates for every object on every area and, optionally,
    on every other object in every configuration.

    Only the ``top_k`` candidates by ``log Psi(1) - log Psi(0)`` are kept per
    (object, base, base configuration); the rest are dropped from the
    program, so their unset terms are dropped from the objective as well.

    Every semantic descriptor group is rotation invariant, so a stacking base
    rotated into configuration ``t`` shares the unrotated cloud's groups;
    only its support height depends on ``t``.
    """
    config = config or PipelineConfig()
    rots = config.rotations()
    sem_cache = {}
    out = []
    rotated_bases = {}
    if config.stacking:
        for r, base in enumerate(scene.objects):
            for t, rot in enumerate(rots):
                rotated_bases[r, t] = PointCloud(rot.apply(base.points), base.colors, base.frame)

    def add(i, base_cloud, base_ref, base_height, base_cfg=-1, base_rot=None, semantic_base=None):
        obj = scene.objects[i]
        mp = semantic_potential(model_p, obj, semantic_base or base_cloud, vocab, base_height,
                                sem_cache)
        scored = []
        placements = sample_placements(obj, base_cloud, config.grid, rots, seed=config.seed,
                                       base_ref=base_ref)
        for k, pl in enumerate(placements):
            if not collision_free(obj, base_cloud, pl, config.clearance):
                continue
            ms = stability_potential(model_s, obj, base_cloud, pl)
            l1, l0 = gate_log_potentials(ms, mp)
            j = k % len(rots)
            scored.append(Candidate(i, j, rots[j], base_ref, k // len(rots), pl.location, l1, l0,
                                    base_cfg, base_rot))
        scored.sort(key=lambda c: (-c.coefficient, c.location, c.config))
        out.extend(scored[:config.top_k])

    for i in range(scene.n):
        for a, env in enumerate(scene.environments):
            add(i, env, BaseRef("area", a), support_height(env, scene.ground_z))
        if not config.stacking:
            continue
        for r, base in enumerate(scene.objects):
            if r == i:
                continue
            for t, rot in enumerate(rots):
                rotated = rotated_bases[r, t]
                add(i, rotated, BaseRef("object", r), support_height(_resting(rotated), 0.0), t, rot,
                    base)
    return out


def infer_scene(scene: Scene, model_s, model_p, vocab, config: PipelineConfig = None,
                mode="exact"):
    """``(strategy, objective, problem)`` for a scene."""
    config = config or PipelineConfig()
    cands = candidate_set(scene, model_s, model_p, vocab, config)
    problem = build_ilp(scene, cands, config.clearance)
    log.info("%d candidates, %d variables, %d rows", len(cands), problem.n_vars, len(problem.rows))
    strategy, objective = solve_placing(problem, mode)
    return strategy, objective, problem

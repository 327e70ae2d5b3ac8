"""Oracle-labeled placement datasets with cached feature matrices.

Layout of a dataset directory::

    dataset.jsonl          one labeled placement per line
    counts.json            per-task positive / negative / collision counts
    vocab.txt              bag-of-words vocabulary used for semantic features
    <task>/object.pcd      clouds, for recomputation
    <task>/base.pcd
    <task>/stability_<variant>.npy
    <task>/semantic.npy    one row; semantic features do not depend on pose

Feature paths in rows have the form ``<task>/<file>.npy#<row>``.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import CollidingPlacement
from ..fpfh import BowVocabulary
from ..geometry import (
    BaseRef,
    Placement,
    PointCloud,
    Rotation,
    octahedral_rotations,
    read_pcd,
    sample_placements,
    write_pcd,
)
from ..semantic import semantic_vector, support_height
from ..stability import StabilityConfig, stability_vector
from .generators import generate_object, generate_scene
from .oracle import stability_oracle

log = logging.getLogger(__name__)

VARIANTS = ("single145", "multi178")


@dataclass(frozen=True, eq=False)
class LabeledPlacement:
    task: str
    object_id: str
    area_id: str
    placement: Placement
    stable: bool
    preferred: bool
    stability_features_path: dict
    semantic_features_path: str

    def __post_init__(self):
        if self.preferred and not self.stable:
            raise ValueError("a preferred placement must be stable")

    def to_json(self):
        return {
            "task": self.task,
            "object_id": self.object_id,
            "area_id": self.area_id,
            "location": [float(v) for v in self.placement.location],
            "quaternion": [float(v) for v in self.placement.rotation.quat],
            "stable": self.stable,
            "preferred": self.preferred,
            "stability_features_path": self.stability_features_path,
            "semantic_features_path": self.semantic_features_path,
        }

    @classmethod
    def from_json(cls, d):
        pl = Placement(d["location"], Rotation(d["quaternion"]), BaseRef("area", 0))
        return cls(d["task"], d["object_id"], d["area_id"], pl, bool(d["stable"]),
                   bool(d["preferred"]), d["stability_features_path"], d["semantic_features_path"])


def task_name(object_kind, scene_kind):
    return "%s__%s" % (object_kind, scene_kind)


def pair_seed(seed, index):
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def grid_for(base: PointCloud, n_configs, n_samples):
    """Grid step giving roughly twice ``n_samples`` grid x configuration slots."""
    lo, hi = base.bounds()
    ext = np.maximum(hi[:2] - lo[:2], 1e-3)
    cells = max(1, math.ceil(2 * n_samples / n_configs))
    return float(min(max(ext), math.sqrt(ext[0] * ext[1] / cells)))


def label_pair(obj: PointCloud, base: PointCloud, object_kind, scene_kind, n_samples, seed,
               configs=None):
    """Sample, drop colliding placements, and label the rest.

    Returns ``(placements, labels, n_collisions)``.
    """
    configs = configs or octahedral_rotations()
    step = grid_for(base, len(configs), n_samples)
    pool = sample_placements(obj, base, step, configs, seed=seed)
    rng = np.random.default_rng(seed)
    pick = np.sort(rng.choice(len(pool), size=min(n_samples, len(pool)), replace=False))
    placements, labels, collisions = [], [], 0
    for k in pick:
        p = pool[k]
        try:
            lab = stability_oracle(obj, base, p, object_kind, scene_kind)
        except CollidingPlacement:
            collisions += 1
            continue
        placements.append(p)
        labels.append(lab)
    return placements, labels, collisions


def train_vocabulary(clouds, seed=0):
    return BowVocabulary(seed=seed).fit(clouds)


def build_dataset(pairs, per_pair, seed, out_dir, variants=("single145",), vocab=None,
                  ground_z=0.0):
    """Generate, label and featurize placements for each (object, scene) pair.

    Writes the directory layout described in the module docstring and
    returns the list of :class:`LabeledPlacement` rows.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for v in variants:
        StabilityConfig.named(v)
    objects = {k: generate_object(k, seed=seed) for k in dict.fromkeys(o for o, _ in pairs)}
    scenes = {k: generate_scene(k, seed=seed) for k in dict.fromkeys(s for _, s in pairs)}
    if vocab is None:
        vocab = train_vocabulary(list(objects.values()) + list(scenes.values()), seed)
    vocab.save(out / "vocab.txt")
    rows, counts = [], {}
    for index, (ok, sk) in enumerate(pairs):
        task = task_name(ok, sk)
        tdir = out / task
        tdir.mkdir(exist_ok=True)
        obj, base = objects[ok], scenes[sk]
        write_pcd(obj, tdir / "object.pcd")
        write_pcd(base, tdir / "base.pcd")
        placements, labels, collisions = label_pair(obj, base, ok, sk, per_pair, pair_seed(seed, index))
        stab_paths = {}
        for v in variants:
            config = StabilityConfig.named(v)
            feats = np.array([stability_vector(obj, base, p, config).values for p in placements])
            feats = feats.reshape(len(placements), config.length)
            np.save(tdir / ("stability_%s.npy" % v), feats)
            stab_paths[v] = "%s/stability_%s.npy" % (task, v)
        sem = semantic_vector(obj, base, vocab, support_height(base, ground_z)).values
        np.save(tdir / "semantic.npy", sem[None, :])
        for r, (p, lab) in enumerate(zip(placements, labels)):
            rows.append(LabeledPlacement(
                task, ok, sk, p, lab.stable, lab.preferred,
                {v: "%s#%d" % (path, r) for v, path in stab_paths.items()},
                "%s/semantic.npy#0" % task))
        pos = sum(l.preferred for l in labels)
        counts[task] = {"rows": len(labels), "positive": pos, "negative": len(labels) - pos,
                        "stable": sum(l.stable for l in labels), "collisions": collisions}
        log.info("%s: %s", task, counts[task])
    with open(out / "dataset.jsonl", "w") as f:
        for row in rows:
            f.write(json.dumps(row.to_json(), sort_keys=True) + "\n")
    (out / "counts.json").write_text(json.dumps(counts, indent=1, sort_keys=True))
    return rows


def _resolve(root, ref, cache):
    path, _, row = ref.partition("#")
    if path not in cache:
        cache[path] = np.load(Path(root) / path)
    return cache[path][int(row or 0)]


class Dataset:
    """A loaded dataset directory with feature lookup."""

    def __init__(self, root):
        self.root = Path(root)
        with open(self.root / "dataset.jsonl") as f:
            self.rows = [LabeledPlacement.from_json(json.loads(line)) for line in f if line.strip()]
        self._cache = {}

    @property
    def tasks(self):
        return list(dict.fromkeys(r.task for r in self.rows))

    def vocab(self):
        return BowVocabulary.load(self.root / "vocab.txt")

    def clouds(self, task):
        return read_pcd(self.root / task / "object.pcd"), read_pcd(self.root / task / "base.pcd")

    def features(self, rows=None, variant="single145", semantic=False):
        rows = self.rows if rows is None else rows
        X = [_resolve(self.root, r.stability_features_path[variant], self._cache) for r in rows]
        if semantic:
            X = [np.concatenate([x, _resolve(self.root, r.semantic_features_path, self._cache)])
                 for x, r in zip(X, rows)]
        return np.array(X)

    def labels(self, rows=None, target="preferred"):
        rows = self.rows if rows is None else rows
        return np.array([1 if getattr(r, target) else -1 for r in rows])

    def task_rows(self, task):
        return [r for r in self.rows if r.task == task]


def semantic_training_set(object_kinds, scene_kinds, vocab, seed=0, ground_z=0.0):
    """One semantic row per (object, scene) pair labeled by the generators'
    preference metadata. Returns ``(X, y, pairs)``."""
    from .generators import semantic_preference

    objects = {k: generate_object(k, seed=seed) for k in object_kinds}
    scenes = {k: generate_scene(k, seed=seed) for k in scene_kinds}
    cache, X, y, pairs = {}, [], [], []
    for sk, base in scenes.items():
        h = support_height(base, ground_z)
        for ok, obj in objects.items():
            X.append(semantic_vector(obj, base, vocab, h, cache).values)
            y.append(1 if semantic_preference(ok, sk) else -1)
            pairs.append((ok, sk))
    return np.array(X), np.array(y), pairs

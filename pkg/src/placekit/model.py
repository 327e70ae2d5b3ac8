"""Placing-strategy model: potentials, the stability/preference gate, scoring."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InfeasibleStrategy
from .geometry import BaseRef, Placement, PointCloud, Rotation
from .learn import score
from .semantic import semantic_vector
from .stability import StabilityConfig, stability_vector

SEMANTIC_PREFIX = "semantic801"


def semantic_config(vocab):
    """Feature fingerprint of semantic vectors built with ``vocab``."""
    return "%s:%s" % (SEMANTIC_PREFIX, vocab.fingerprint_[:16])


@dataclass(frozen=True)
class Scene:
    """Objects to place and the placing areas available for them."""

    objects: Sequence[PointCloud]
    environments: Sequence[PointCloud]
    object_ids: Sequence[str] = None
    environment_ids: Sequence[str] = None
    ground_z: float = 0.0
    object_kinds: Sequence[str] = None
    environment_kinds: Sequence[str] = None

    def __post_init__(self):
        if len(self.objects) < 1 or len(self.environments) < 1:
            raise ValueError("a scene needs at least one object and one placing area")
        oids = self.object_ids or ["o%d" % i for i in range(len(self.objects))]
        eids = self.environment_ids or ["e%d" % i for i in range(len(self.environments))]
        if len(oids) != len(self.objects) or len(eids) != len(self.environments):
            raise ValueError("one id per object and per placing area")
        if len(set(oids) | set(eids)) != len(oids) + len(eids):
            raise ValueError("scene ids must be unique")
        object.__setattr__(self, "object_ids", list(oids))
        object.__setattr__(self, "environment_ids", list(eids))

    @property
    def n(self):
        return len(self.objects)

    @property
    def m(self):
        return len(self.environments)


@dataclass(frozen=True, eq=False)
class PlacingStrategy:
    """``S[i, r] = 1`` stacks object i on object r; ``T[i, r] = 1`` puts it on
    area r; ``C[i]`` and ``L[i]`` are its world rotation and translation."""

    S: np.ndarray
    T: np.ndarray
    C: Sequence[Rotation]
    L: np.ndarray
    log_potentials: np.ndarray = None
    candidate_index: Sequence[int] = field(default=None)

    def base_of(self, i):
        """Base of object ``i`` as a BaseRef, or None when unassigned."""
        on_obj = np.flatnonzero(self.S[i])
        on_area = np.flatnonzero(self.T[i])
        if len(on_obj) + len(on_area) != 1:
            return None
        return BaseRef("object", int(on_obj[0])) if len(on_obj) else BaseRef("area", int(on_area[0]))

    def placement(self, i):
        return Placement(self.L[i], self.C[i], self.base_of(i) or BaseRef("area", 0))

    def to_dict(self, scene: Scene):
        rows = []
        for i in range(len(self.C)):
            base = self.base_of(i)
            bid = None
            if base is not None:
                bid = (scene.object_ids if base.kind == "object" else scene.environment_ids)[base.index]
            rows.append({
                "object_id": scene.object_ids[i],
                "base": bid,
                "base_kind": base.kind if base else None,
                "location": [float(v) for v in self.L[i]],
                "quaternion": [float(v) for v in self.C[i].quat],
                "log_potential": None if self.log_potentials is None else float(self.log_potentials[i]),
            })
        return {"format_version": 1, "placements": rows}

    @classmethod
    def from_dict(cls, d, scene: Scene):
        n, m = scene.n, scene.m
        S, T = np.zeros((n, n), int), np.zeros((n, m), int)
        C, L, lp = [None] * n, np.zeros((n, 3)), np.full(n, np.nan)
        for row in d["placements"]:
            i = scene.object_ids.index(row["object_id"])
            if row["base"] in scene.object_ids:
                S[i, scene.object_ids.index(row["base"])] = 1
            elif row["base"] in scene.environment_ids:
                T[i, scene.environment_ids.index(row["base"])] = 1
            C[i] = Rotation(row["quaternion"])
            L[i] = row["location"]
            if row.get("log_potential") is not None:
                lp[i] = row["log_potential"]
        C = [c if c is not None else Rotation.identity() for c in C]
        return cls(S, T, C, L, lp)


def save_strategy(strategy: PlacingStrategy, scene: Scene, path):
    Path(path).write_text(json.dumps(strategy.to_dict(scene), indent=1))


def load_strategy(path, scene: Scene) -> PlacingStrategy:
    return PlacingStrategy.from_dict(json.loads(Path(path).read_text()), scene)


# --------------------------------------------------------------------------- #
# potentials
# --------------------------------------------------------------------------- #


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def gate_log_potentials(margin_s, margin_p):
    """``(log Psi(1), log Psi(0))`` of the stable-and-preferred gate.

    With ``p_s = sigmoid(margin_s)`` and ``p_p = sigmoid(margin_p)``, the gate
    is on with probability ``p_s p_p``; both logs are computed without
    cancellation.
    """
    a, b = float(margin_s), float(margin_p)
    log1 = _log_sigmoid(a) + _log_sigmoid(b)
    log0 = (np.logaddexp(np.logaddexp(-a, -b), -a - b)
            - np.logaddexp(0.0, -a) - np.logaddexp(0.0, -b))
    return float(log1), float(log0)


def stability_potential(model_s, object: PointCloud, base: PointCloud, placement: Placement):
    """``theta_s . phi_s`` for the placed object; the feature variant comes from
    the model's feature configuration."""
    config = StabilityConfig.named(model_s.feature_config or "multi178")
    phi = stability_vector(object, base, placement, config).values
    return score(model_s, phi, config.fingerprint)


def semantic_potential(model_p, object: PointCloud, base: PointCloud, vocab, base_height,
                       cache=None):
    """``theta_p . phi_p``; depends only on the two clouds and the base height."""
    phi = semantic_vector(object, base, vocab, base_height, cache).values
    return score(model_p, phi, semantic_config(vocab))


@dataclass(frozen=True, eq=False)
class ScoredPlacement:
    placement: Placement
    stability: float
    semantic: float
    log_psi1: float
    log_psi0: float


def score_placement(model_s, model_p, object, base, placement, vocab, base_height,
                    cache=None) -> ScoredPlacement:
    ms = stability_potential(model_s, object, base, placement)
    mp = semantic_potential(model_p, object, base, vocab, base_height, cache)
    return ScoredPlacement(placement, ms, mp, *gate_log_potentials(ms, mp))


def strategy_score(scene: Scene, strategy: PlacingStrategy, candidates) -> float:
    """``f(S, T)``: ``log Psi(1)`` of every chosen candidate plus ``log Psi(0)``
    of every other sampled candidate.

    Chosen candidates are ``strategy.candidate_index`` when present, otherwise
    they are matched by base, rotation and world location.
    """
    from .infer import check_feasibility

    violations = check_feasibility(scene, strategy)
    if violations:
        raise InfeasibleStrategy(violations)
    chosen = strategy.candidate_index
    if chosen is None:
        chosen = _match_candidates(strategy, candidates)
    chosen = set(chosen)
    return float(sum(c.log_psi1 if k in chosen else c.log_psi0 for k, c in enumerate(candidates)))


def _match_candidates(strategy, candidates):
    n = len(strategy.C)
    found = [None] * n
    by_obj = {}
    for k, c in enumerate(candidates):
        by_obj.setdefault(c.obj, []).append(k)
    # resolve area placements first, then stacked ones on resolved bases
    pending = list(range(n))
    while pending:
        progress = False
        for i in list(pending):
            base = strategy.base_of(i)
            if base.kind == "object" and found[base.index] is None:
                continue
            for k in by_obj.get(i, []):
                c = candidates[k]
                if c.base != base or c.rotation.angle_to(strategy.C[i]) > 1e-9:
                    continue
                loc = c.translation
                if base.kind == "object":
                    b = candidates[found[base.index]]
                    if b.config != c.base_config:
                        continue
                    loc = loc + strategy.L[base.index]
                if np.allclose(loc, strategy.L[i], atol=1e-9):
                    found[i] = k
                    break
            pending.remove(i)
            progress = True
        if not progress:
            break
    return [k for k in found if k is not None]

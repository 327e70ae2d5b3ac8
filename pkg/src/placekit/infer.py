"""MAP inference over placing strategies as a 0-1 integer program.

Each sampled candidate (object, configuration, base, base configuration,
location) is a binary variable whose objective coefficient is
``log Psi(1) - log Psi(0)``; the constant ``sum log Psi(0)`` is carried as an
offset so objective values equal the strategy score.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateHull, Infeasible, NoCandidates, ProblemTooLarge
from .geometry import (
    DEFAULT_CLEARANCE,
    BaseRef,
    ConvexPolygon2D,
    PointCloud,
    Rotation,
    convex_hull_2d,
    footprint_area,
    polygon_distance,
)
from .model import PlacingStrategy, Scene

MAX_VARIABLES = 20_000
MAX_PIVOTS = 1_000_000
TOPO_BUCKET = math.log(1.01)
INT_TOL = 1e-6
ROW_KINDS = ("coverage", "chain", "slot", "overlap", "topo")


@dataclass(frozen=True, eq=False)
class Candidate:
    """One sampled placement of object ``obj``.

    For area bases ``translation`` is in world coordinates. For object bases
    it is relative to the base object's cloud rotated by its configuration
    (``base_config``) before that object's own translation is added.
    """

    obj: int
    config: int
    rotation: Rotation
    base: BaseRef
    location: int
    translation: np.ndarray
    log_psi1: float = 0.0
    log_psi0: float = 0.0
    base_config: int = -1
    base_rotation: Optional[Rotation] = None

    @property
    def coefficient(self):
        return self.log_psi1 - self.log_psi0


@dataclass(eq=False)
class IlpProblem:
    scene: Scene
    candidates: List[Candidate]
    c: np.ndarray
    offset: float
    rows: List[Tuple[str, Dict[int, float], str, float]]
    pruned: int = 0
    footprints: Dict[int, ConvexPolygon2D] = field(default_factory=dict)

    @property
    def n_vars(self):
        return len(self.candidates)

    def rows_of(self, kind):
        return [r for r in self.rows if r[0] == kind]

    def matrices(self):
        """Dense ``(A_ub, b_ub, A_eq, b_eq)``."""
        ub = [r for r in self.rows if r[2] == "<="]
        eq = [r for r in self.rows if r[2] == "=="]

        def dense(rs):
            A = np.zeros((len(rs), self.n_vars))
            for k, (_, coefs, _, _) in enumerate(rs):
                for j, v in coefs.items():
                    A[k, j] = v
            return A, np.array([r[3] for r in rs], dtype=float)

        return dense(ub) + dense(eq)

    def objective(self, x):
        return float(self.offset + self.c @ np.asarray(x, dtype=float))

    def violations(self, x, tol=1e-7):
        x = np.asarray(x, dtype=float)
        out = []
        for kind, coefs, sense, rhs in self.rows:
            lhs = sum(v * x[j] for j, v in coefs.items())
            if (sense == "<=" and lhs > rhs + tol) or (sense == "==" and abs(lhs - rhs) > tol):
                out.append((kind, sorted(coefs), lhs, rhs))
        return out


# --------------------------------------------------------------------------- #
# building
# --------------------------------------------------------------------------- #


def _safe_footprint(points):
    try:
        return convex_hull_2d(points[:, :2])
    except DegenerateHull:
        lo, hi = points[:, :2].min(axis=0) - 1e-6, points[:, :2].max(axis=0) + 1e-6
        return ConvexPolygon2D(np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]]))


def placed_footprint(cloud: PointCloud, rotation: Rotation, translation):
    pts = rotation.apply(cloud.points) + np.asarray(translation, dtype=float)
    return _safe_footprint(pts)


def topo_key(area, index):
    """Strict total order used for stacking: larger footprint (in 1% buckets)
    first, lower object index breaking ties."""
    return (math.floor(math.log(max(area, 1e-300)) / TOPO_BUCKET), -index)


def build_ilp(scene: Scene, candidates: Sequence[Candidate], clearance=DEFAULT_CLEARANCE,
              max_vars=MAX_VARIABLES) -> IlpProblem:
    """Binary program over collision-free candidates.

    Rows: one coverage equality per object; a chain row per (base object,
    base configuration) bounding what rests on it by whether it is placed in
    that configuration; a slot row per (area, location); an overlap row per
    pair of candidates of different objects on one area, at different
    locations, whose footprints come within ``clearance``. Stacking
    candidates that break the footprint order are pruned.
    """
    areas = {}

    def area_of(i, rot):
        key = (i, tuple(np.round(rot.quat, 12)))
        if key not in areas:
            areas[key] = footprint_area(PointCloud(rot.apply(scene.objects[i].points)))
        return areas[key]

    kept, pruned = [], 0
    for c in candidates:
        if c.base.kind == "object":
            r = c.base.index
            if r == c.obj or c.base_rotation is None:
                pruned += 1
                continue
            if topo_key(area_of(r, c.base_rotation), r) <= topo_key(area_of(c.obj, c.rotation), c.obj):
                pruned += 1
                continue
        kept.append(c)
    for i, oid in enumerate(scene.object_ids):
        if not any(c.obj == i for c in kept):
            raise NoCandidates(oid)
    if len(kept) > max_vars:
        raise ProblemTooLarge("%d variables exceed the cap of %d; use a coarser grid or "
                              "fewer configurations" % (len(kept), max_vars))
    c = np.array([k.coefficient for k in kept], dtype=float)
    if not np.all(np.isfinite(c)):
        raise ValueError("candidate scores must be finite")
    offset = float(sum(k.log_psi0 for k in kept))
    rows = []
    for i in range(scene.n):
        rows.append(("coverage", {v: 1.0 for v, k in enumerate(kept) if k.obj == i}, "==", 1.0))
    chain = {}
    for v, k in enumerate(kept):
        if k.base.kind == "object":
            chain.setdefault((k.base.index, k.base_config), {})[v] = 1.0
    for (r, t), coefs in sorted(chain.items()):
        for v, k in enumerate(kept):
            if k.obj == r and k.config == t:
                coefs[v] = coefs.get(v, 0.0) - 1.0
        rows.append(("chain", coefs, "<=", 0.0))
    slots = {}
    for v, k in enumerate(kept):
        if k.base.kind == "area":
            slots.setdefault((k.base.index, k.location), {})[v] = 1.0
    for key in sorted(slots):
        rows.append(("slot", slots[key], "<=", 1.0))
    prints = {}
    on_area = [v for v, k in enumerate(kept) if k.base.kind == "area"]
    for v in on_area:
        k = kept[v]
        prints[v] = placed_footprint(scene.objects[k.obj], k.rotation, k.translation)
    for a_pos, v in enumerate(on_area):
        kv = kept[v]
        for w in on_area[a_pos + 1:]:
            kw = kept[w]
            if kv.obj == kw.obj or kv.base != kw.base or kv.location == kw.location:
                continue
            if polygon_distance(prints[v], prints[w]) < clearance:
                rows.append(("overlap", {v: 1.0, w: 1.0}, "<=", 1.0))
    return IlpProblem(scene, kept, c, offset, rows, pruned, prints)


# --------------------------------------------------------------------------- #
# LP relaxation: bounded-variable primal simplex, Bland's rule
# --------------------------------------------------------------------------- #


@dataclass(frozen=True, eq=False)
class LpSolution:
    x: np.ndarray
    objective: float
    status: str
    pivots: int = 0


def _simplex(T, xb, basis, at_upper, upper, cost, max_pivots, eps=1e-9):
    """Maximize ``cost . x`` over the tableau ``T = B^-1 A`` in place.

    ``xb`` are basic values, ``upper`` per-variable upper bounds (lower
    bounds are zero), ``at_upper`` marks nonbasic variables at their upper
    bound. Returns ``(status, pivots)``.
    """
    m, N = T.shape
    pivots = 0
    basic = np.zeros(N, bool)
    basic[basis] = True
    while True:
        d = cost - cost[basis] @ T
        cand = np.flatnonzero(~basic & (((~at_upper) & (d > eps)) | (at_upper & (d < -eps))))
        if len(cand) == 0:
            return "optimal", pivots
        if pivots >= max_pivots:
            return "iteration-limit", pivots
        enter = int(cand[0])
        sign = 1.0 if not at_upper[enter] else -1.0
        col = T[:, enter] * sign
        best, leave, leave_to_upper = upper[enter], -1, False
        dec = col > eps
        inc = col < -eps
        ratios = np.full(m, np.inf)
        ratios[dec] = xb[dec] / col[dec]
        ub_b = upper[basis]
        fin = inc & np.isfinite(ub_b)
        ratios[fin] = (ub_b[fin] - xb[fin]) / (-col[fin])
        ratios = np.maximum(ratios, 0.0)
        rmin = ratios.min() if m else np.inf
        if rmin < best - eps or (not np.isfinite(best) and np.isfinite(rmin)):
            ties = np.flatnonzero(ratios <= rmin + eps)
            leave = int(ties[np.argmin(np.asarray(basis)[ties])])
            best = ratios[leave]
            leave_to_upper = bool(inc[leave])
        if not np.isfinite(best):
            return "unbounded", pivots
        xb -= best * col
        if leave < 0:
            at_upper[enter] = not at_upper[enter]
            pivots += 1
            continue
        out = basis[leave]
        entering_value = (upper[enter] - best) if at_upper[enter] else best
        piv = T[leave, enter]
        T[leave] /= piv
        others = np.arange(m) != leave
        T[others] -= np.outer(T[others, enter], T[leave])
        xb[leave] = entering_value
        basic[out], basic[enter] = False, True
        at_upper[out] = leave_to_upper
        at_upper[enter] = False
        basis[leave] = enter
        pivots += 1


def solve_lp(problem: IlpProblem, lower=None, upper=None, max_pivots=MAX_PIVOTS) -> LpSolution:
    """Relaxation ``max c.x`` with ``lower <= x <= upper`` (default [0, 1])."""
    n = problem.n_vars
    lo = np.zeros(n) if lower is None else np.asarray(lower, dtype=float)
    hi = np.ones(n) if upper is None else np.asarray(upper, dtype=float)
    if np.any(lo > hi + 1e-12):
        return LpSolution(np.full(n, np.nan), -np.inf, "infeasible")
    A_ub, b_ub, A_eq, b_eq = problem.matrices()
    A = np.vstack([A_ub, A_eq])
    b = np.concatenate([b_ub, b_eq]) - A @ lo
    n_ub, m = len(b_ub), len(b_ub) + len(b_eq)
    # columns: shifted x | slacks for <= rows | artificials
    need_art = [k for k in range(m) if k >= n_ub or b[k] < 0]
    N = n + n_ub + len(need_art)
    T = np.zeros((m, N))
    T[:, :n] = A
    T[np.arange(n_ub), n + np.arange(n_ub)] = 1.0
    basis = list(n + np.arange(n_ub)) + [0] * len(b_eq)
    basis = np.array(basis[:m], dtype=np.intp)
    for a, k in enumerate(need_art):
        if b[k] < 0:
            T[k] *= -1.0
            b[k] *= -1.0
        T[k, n + n_ub + a] = 1.0
        basis[k] = n + n_ub + a
    upper_b = np.concatenate([hi - lo, np.full(n_ub, np.inf), np.full(len(need_art), np.inf)])
    at_upper = np.zeros(N, bool)
    T0, b0 = T.copy(), b.copy()
    xb = b.copy()
    pivots = 0
    if need_art:
        cost1 = np.zeros(N)
        cost1[n + n_ub:] = -1.0
        status, p = _simplex(T, xb, basis, at_upper, upper_b, cost1, max_pivots)
        pivots += p
        if status == "iteration-limit":
            return LpSolution(np.full(n, np.nan), -np.inf, status, pivots)
        art_total = sum(xb[r] for r in range(m) if basis[r] >= n + n_ub)
        if art_total > 1e-7:
            return LpSolution(np.full(n, np.nan), -np.inf, "infeasible", pivots)
        upper_b[n + n_ub:] = 0.0
    cost2 = np.zeros(N)
    cost2[:n] = problem.c
    status, p = _simplex(T, xb, basis, at_upper, upper_b, cost2, max_pivots - pivots)
    pivots += p
    if status != "optimal":
        return LpSolution(np.full(n, np.nan), -np.inf, status, pivots)
    full = np.where(at_upper, upper_b, 0.0)
    full[basis] = xb
    # refine basic values against the original rows to keep residuals small
    nonbasic = np.ones(N, bool)
    nonbasic[basis] = False
    try:
        refined = np.linalg.solve(T0[:, basis], b0 - T0[:, nonbasic] @ full[nonbasic])
        if np.all(np.isfinite(refined)) and np.max(np.abs(refined - xb), initial=0.0) < 1e-6:
            full[basis] = refined
    except np.linalg.LinAlgError:
        pass
    x = np.clip(full[:n], 0.0, hi - lo) + lo
    return LpSolution(x, problem.objective(x), "optimal", pivots)


# --------------------------------------------------------------------------- #
# integer solutions
# --------------------------------------------------------------------------- #


def _integral(x):
    return np.all(np.minimum(np.abs(x), np.abs(1 - x)) <= INT_TOL)


def _branch_and_bound(problem, lower, upper):
    best_val, best_x = -np.inf, None
    stack = [(lower.copy(), upper.copy())]
    while stack:
        lo, hi = stack.pop()
        sol = solve_lp(problem, lo, hi)
        if sol.status != "optimal" or sol.objective <= best_val + 1e-9:
            continue
        x = sol.x
        if _integral(x):
            xr = np.round(x)
            if not problem.violations(xr):
                best_val, best_x = problem.objective(xr), xr
            continue
        frac = np.flatnonzero(np.minimum(np.abs(x), np.abs(1 - x)) > INT_TOL)
        v = int(frac[np.lexsort((frac, -x[frac]))[0]])
        lo0, hi0 = lo.copy(), hi.copy()
        hi0[v] = 0.0
        lo1, hi1 = lo.copy(), hi.copy()
        lo1[v] = 1.0
        stack.append((lo0, hi0))
        stack.append((lo1, hi1))  # explored first
    return best_val, best_x


def _relax_round(problem, max_backtracks=3):
    n = problem.n_vars
    lo, hi = np.zeros(n), np.ones(n)
    sol = solve_lp(problem, lo, hi)
    if sol.status != "optimal":
        return None
    while not _integral(sol.x):
        x = sol.x
        frac = np.flatnonzero(np.minimum(np.abs(x), np.abs(1 - x)) > INT_TOL)
        order = frac[np.lexsort((frac, -x[frac]))]
        accepted = False
        for attempt, v in enumerate(order[:max_backtracks + 1]):
            trial = lo.copy()
            trial[v] = 1.0
            s = solve_lp(problem, trial, hi)
            if s.status == "optimal":
                lo, sol, accepted = trial, s, True
                break
            hi[v] = 0.0
        if not accepted:
            val, xb = _branch_and_bound(problem, lo, hi)
            return xb
    xr = np.round(sol.x)
    return xr if not problem.violations(xr) else _branch_and_bound(problem, lo, hi)[1]


def solve_placing(problem: IlpProblem, mode="exact"):
    """MAP strategy. ``mode`` is ``"exact"`` (branch and bound) or
    ``"relax-round"`` (fix the largest fractional variable, re-solve).

    Returns ``(strategy, objective)``.
    """
    if mode == "exact":
        _, x = _branch_and_bound(problem, np.zeros(problem.n_vars), np.ones(problem.n_vars))
    elif mode in ("relax-round", "relax"):
        x = _relax_round(problem)
        if x is None or problem.violations(x):
            _, x = _branch_and_bound(problem, np.zeros(problem.n_vars), np.ones(problem.n_vars))
    else:
        raise ValueError("mode must be 'exact' or 'relax-round'")
    if x is None:
        cover = problem.rows_of("coverage")
        raise Infeasible("no feasible strategy; coverage rows: %s" %
                         [problem.scene.object_ids[i] for i in range(len(cover))])
    choice = [int(v) for v in np.flatnonzero(x > 0.5)]
    return decode(problem, choice), problem.objective(x)


# --------------------------------------------------------------------------- #
# decoding and reference solvers
# --------------------------------------------------------------------------- #


def world_translations(candidates, choice_by_obj):
    """World translation of each object, composing stacked offsets."""
    out = {}

    def resolve(i, depth=0):
        if i in out:
            return out[i]
        if depth > len(choice_by_obj):
            raise Infeasible("stacking cycle")
        c = candidates[choice_by_obj[i]]
        t = np.asarray(c.translation, dtype=float)
        if c.base.kind == "object":
            t = t + resolve(c.base.index, depth + 1)
        out[i] = t
        return t

    for i in choice_by_obj:
        resolve(i)
    return out


def decode(problem: IlpProblem, choice) -> PlacingStrategy:
    scene, cands = problem.scene, problem.candidates
    by_obj = {cands[v].obj: v for v in choice}
    n, m = scene.n, scene.m
    S, T = np.zeros((n, n), int), np.zeros((n, m), int)
    C, L, lp = [Rotation.identity()] * n, np.zeros((n, 3)), np.zeros(n)
    C = list(C)
    world = world_translations(cands, by_obj)
    for i, v in by_obj.items():
        c = cands[v]
        if c.base.kind == "object":
            S[i, c.base.index] = 1
        else:
            T[i, c.base.index] = 1
        C[i] = c.rotation
        L[i] = world[i]
        lp[i] = c.log_psi1
    return PlacingStrategy(S, T, C, L, lp, [by_obj[i] for i in sorted(by_obj)])


def _compatible(problem, chosen, v, conflict):
    """Can candidate ``v`` join the partial choice ``chosen`` (obj -> var)?"""
    cands = problem.candidates
    c = cands[v]
    for i, w in chosen.items():
        d = cands[w]
        if c.base.kind == "area" and d.base == c.base:
            if d.location == c.location or conflict(v, w):
                return False
        if c.base.kind == "object" and d.base == c.base:
            return False  # at most one object per base object
        if c.base.kind == "object" and i == c.base.index and d.config != c.base_config:
            return False
        if d.base.kind == "object" and d.base.index == c.obj and c.config != d.base_config:
            return False
    return True


def _acyclic(problem, chosen):
    cands = problem.candidates
    for start in chosen:
        seen, i = set(), start
        while True:
            c = cands[chosen[i]]
            if c.base.kind != "object":
                break
            if i in seen:
                return False
            seen.add(i)
            i = c.base.index
    return True


def _pair_conflicts(problem, clearance=DEFAULT_CLEARANCE):
    cache = {}

    def conflict(v, w):
        key = (min(v, w), max(v, w))
        if key not in cache:
            pv, pw = problem.footprints[v], problem.footprints[w]
            cache[key] = polygon_distance(pv, pw) < clearance
        return cache[key]

    return conflict


def brute_force(problem: IlpProblem):
    """Exhaustive search over one candidate per object.

    Returns ``(objective, choice)``, or ``(-inf, None)`` when infeasible.
    """
    n = problem.scene.n
    per_obj = [[v for v, c in enumerate(problem.candidates) if c.obj == i] for i in range(n)]
    conflict = _pair_conflicts(problem)
    best = [-np.inf, None]

    def rec(i, chosen, total):
        if i == n:
            if _acyclic(problem, chosen):
                val = problem.offset + total
                if val > best[0] + 1e-12:
                    best[0], best[1] = val, sorted(chosen.values())
            return
        for v in per_obj[i]:
            if _compatible(problem, chosen, v, conflict):
                chosen[i] = v
                rec(i + 1, chosen, total + problem.c[v])
                del chosen[i]

    rec(0, {}, 0.0)
    return best[0], best[1]


def greedy_strategy(problem: IlpProblem):
    """Heuristic baseline: objects in index order each take their best-scoring
    compatible candidate, backtracking only when an object is left without one.

    Returns ``(objective, choice)``.
    """
    n = problem.scene.n
    per_obj = [sorted((v for v, c in enumerate(problem.candidates) if c.obj == i),
                      key=lambda v: (-problem.c[v], v)) for i in range(n)]
    conflict = _pair_conflicts(problem)

    def rec(i, chosen):
        if i == n:
            return dict(chosen) if _acyclic(problem, chosen) else None
        for v in per_obj[i]:
            if _compatible(problem, chosen, v, conflict):
                chosen[i] = v
                got = rec(i + 1, chosen)
                del chosen[i]
                if got is not None:
                    return got
        return None

    got = rec(0, {})
    if got is None:
        return -np.inf, None
    choice = sorted(got.values())
    x = np.zeros(problem.n_vars)
    x[choice] = 1.0
    return problem.objective(x), choice


# --------------------------------------------------------------------------- #
# feasibility report
# --------------------------------------------------------------------------- #


def _find_cycle(S):
    n = len(S)
    color = [0] * n
    path = []

    def dfs(u):
        color[u] = 1
        path.append(u)
        for v in np.flatnonzero(S[u]):
            v = int(v)
            if color[v] == 1:
                return path[path.index(v):] + [v]
            if color[v] == 0:
                cyc = dfs(v)
                if cyc:
                    return cyc
        path.pop()
        color[u] = 2
        return None

    for u in range(n):
        if color[u] == 0:
            cyc = dfs(u)
            if cyc:
                return cyc
    return None


def check_feasibility(scene: Scene, strategy: PlacingStrategy, clearance=DEFAULT_CLEARANCE):
    """Every violated placing constraint, as human-readable strings.

    Checks coverage (one base per object), chain stacking (at most one object
    on each object), slots (distinct locations per area), footprint overlap
    on each area, and stacking cycles by depth-first search.
    """
    ids = scene.object_ids
    S, T = np.asarray(strategy.S), np.asarray(strategy.T)
    out = []
    for i in range(scene.n):
        k = int(S[i].sum() + T[i].sum())
        if k != 1:
            out.append("coverage: object %s has %d bases" % (ids[i], k))
        if S[i, i]:
            out.append("chain: object %s stacked on itself" % ids[i])
    for r in range(scene.n):
        k = int(S[:, r].sum())
        if k > 1:
            out.append("chain: object %s supports %d objects" % (ids[r], k))
    for a in range(scene.m):
        on = [i for i in range(scene.n) if T[i, a] and S[i].sum() + T[i].sum() == 1]
        prints = {i: placed_footprint(scene.objects[i], strategy.C[i], strategy.L[i]) for i in on}
        for x, i in enumerate(on):
            for j in on[x + 1:]:
                if np.allclose(strategy.L[i][:2], strategy.L[j][:2], atol=1e-9):
                    out.append("slot: objects %s and %s share a location on %s"
                               % (ids[i], ids[j], scene.environment_ids[a]))
                if polygon_distance(prints[i], prints[j]) < clearance:
                    out.append("overlap: objects %s and %s on %s"
                               % (ids[i], ids[j], scene.environment_ids[a]))
    cyc = _find_cycle(S)
    if cyc:
        out.append("cycle: " + " -> ".join(ids[i] for i in cyc))
    return out

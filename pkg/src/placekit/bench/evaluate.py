"""Train/test protocols and the evaluation report.

``seso`` splits each task's rows in half (same environment, same object);
``neno`` holds out one task at a time and trains on the rest (new
environment, new object).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..learn import KernelSVM, LinearSVM, SharedSparsitySVM, vote_rank
from .baselines import baseline_scores, fit_prior
from .dataset import Dataset
from .metrics import evaluate_ranking

SESO_METHODS = ("chance", "flat_upright", "lowest_point", "vertical", "horizontal", "prior",
                "svm", "poly")
NENO_METHODS = ("chance", "flat_upright", "lowest_point", "vertical", "horizontal", "prior",
                "joint", "independent", "shared")
METRICS = ("r0", "p_at_5", "auc")

# multi-task setting used by the benchmark; chosen on tuning seeds 100-104,
# which the acceptance runs never use
SHARED_PARAMS = {"C": 1.0, "lambda_s": 1.0, "lambda_b": 10.0}


@dataclass
class EvalReport:
    """Per-task metrics for each method, plus means over tasks."""

    scenario: str
    per_task: dict = field(default_factory=dict)
    seeds: list = field(default_factory=list)

    @property
    def tasks(self):
        out = []
        for rows in self.per_task.values():
            out.extend(t for t in rows if t not in out)
        return out

    def aggregate(self):
        agg = {}
        for method, rows in self.per_task.items():
            agg[method] = {}
            for k in METRICS:
                vals = [r[k] for r in rows.values() if r.get(k) is not None]
                agg[method][k] = float(np.mean(vals)) if vals else None
        return agg

    def add(self, method, task, metrics):
        self.per_task.setdefault(method, {})[task] = dict(metrics)

    def to_dict(self):
        return {"scenario": self.scenario, "seeds": list(self.seeds),
                "per_task": self.per_task, "aggregate": self.aggregate()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["scenario"], d["per_task"], d.get("seeds", []))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))

    def table(self):
        """Methods as rows, a (R0, P@5, AUC) column group per task and the average."""
        tasks = self.tasks
        agg = self.aggregate()
        head1 = "%-14s" % "" + "".join("| %-20s" % t[:20] for t in tasks + ["average"])
        head2 = "%-14s" % "method" + "| R0    P@5   AUC    " * (len(tasks) + 1)

        def cell(m):
            def f(v, fmt):
                return fmt % v if v is not None else "  -  "
            return "| %s %s %s " % (f(m.get("r0"), "%5.1f"), f(m.get("p_at_5"), "%4.2f "),
                                    f(m.get("auc"), "%5.2f"))

        lines = ["[%s]" % self.scenario, head1, head2, "-" * len(head2)]
        for method, rows in self.per_task.items():
            line = "%-14s" % method
            for t in tasks:
                line += cell(rows.get(t, {}))
            lines.append(line + cell(agg[method]))
        return "\n".join(lines)


def order_scores(order):
    """Scores that reproduce a ranking: the first index gets the highest."""
    s = np.empty(len(order))
    s[np.asarray(order)] = -np.arange(len(order), dtype=float)
    return s


def _candidates(ds: Dataset, rows):
    out, clouds = [], {}
    for r in rows:
        if r.task not in clouds:
            clouds[r.task] = ds.clouds(r.task)
        obj, base = clouds[r.task]
        out.append((obj, base, r.placement))
    return out


def _baselines(ds, train_rows, test_rows, seed, report, task, methods):
    cands = _candidates(ds, test_rows)
    y = ds.labels(test_rows) > 0
    prior = fit_prior([r.placement.rotation for r in train_rows],
                      [r.preferred for r in train_rows])
    for kind in methods:
        if kind in ("chance", "flat_upright", "lowest_point", "vertical", "horizontal", "prior"):
            s = baseline_scores(kind, cands, seed, prior)
            if kind != "chance":
                # break ties with a seeded shuffle so constant rules score like chance
                s = s + 1e-9 * np.random.default_rng(seed).random(len(s))
            report.add(kind, task, evaluate_ranking(s, y))


def split_rows(rows, seed, fraction=0.5):
    """Seeded split stratified by label."""
    rng = np.random.default_rng(seed)
    train, test = [], []
    for label in (True, False):
        idx = [k for k, r in enumerate(rows) if r.preferred == label]
        idx = [idx[k] for k in rng.permutation(len(idx))]
        cut = int(round(fraction * len(idx)))
        train += idx[:cut]
        test += idx[cut:]
    return [rows[k] for k in sorted(train)], [rows[k] for k in sorted(test)]


def seso(ds: Dataset, seed=0, variant="single145", methods=SESO_METHODS, C=1.0, tasks=None):
    """Train and test on disjoint halves of each task (or of ``tasks``)."""
    report = EvalReport("SESO", seeds=[seed])
    for task in tasks or ds.tasks:
        train, test = split_rows(ds.task_rows(task), seed)
        X, y = ds.features(train, variant), ds.labels(train)
        Xt, yt = ds.features(test, variant), ds.labels(test) > 0
        if len(set(y)) < 2 or len(set(yt)) < 2:
            continue
        _baselines(ds, train, test, seed, report, task, methods)
        if "svm" in methods:
            m = LinearSVM(C=C, class_weight="balanced", feature_scaling=True, seed=seed).fit(X, y)
            report.add("svm", task, evaluate_ranking(m.decision_function(Xt), yt))
        if "poly" in methods:
            m = KernelSVM(C=C, class_weight="balanced", feature_scaling=True, seed=seed).fit(X, y)
            report.add("poly", task, evaluate_ranking(m.decision_function(Xt), yt))
    return report


def neno(ds: Dataset, seed=0, variant="single145", methods=NENO_METHODS, C=1.0,
         shared_params=None):
    """Leave one task out; voting methods rank by mean per-task rank."""
    shared_params = dict(SHARED_PARAMS, **(shared_params or {}))
    report = EvalReport("NENO", seeds=[seed])
    for held in ds.tasks:
        train = [r for r in ds.rows if r.task != held]
        test = ds.task_rows(held)
        yt = ds.labels(test) > 0
        if len(set(yt)) < 2:
            continue
        X, y = ds.features(train, variant), ds.labels(train)
        tasks = [r.task for r in train]
        Xt = ds.features(test, variant)
        _baselines(ds, train, test, seed, report, held, methods)
        if "joint" in methods:
            m = LinearSVM(C=C, class_weight="balanced", feature_scaling=True, seed=seed).fit(X, y)
            report.add("joint", held, evaluate_ranking(m.decision_function(Xt), yt))
        if "independent" in methods:
            models = []
            for t in dict.fromkeys(tasks):
                idx = [k for k, s in enumerate(tasks) if s == t]
                if len(set(y[idx])) == 2:
                    models.append(LinearSVM(C=C, class_weight="balanced", feature_scaling=True,
                                            seed=seed).fit(X[idx], y[idx]))
            report.add("independent", held, evaluate_ranking(order_scores(vote_rank(models, Xt)), yt))
        if "shared" in methods:
            # tasks without both labels carry no margin information
            labels = {}
            for t, v in zip(tasks, y):
                labels.setdefault(t, set()).add(v)
            keep = [k for k, t in enumerate(tasks) if len(labels[t]) == 2]
            m = SharedSparsitySVM(class_weight="balanced", feature_scaling=True, seed=seed,
                                  **shared_params).fit(X[keep], y[keep], np.asarray(tasks)[keep])
            models = [m.task_model(t) for t in m.tasks_]
            report.add("shared", held, evaluate_ranking(order_scores(vote_rank(models, Xt)), yt))
    return report


def merge_reports(reports):
    """Mean of each per-task metric over reports (e.g. several seeds)."""
    out = EvalReport(reports[0].scenario)
    for r in reports:
        out.seeds.extend(r.seeds)
    methods = list(dict.fromkeys(m for r in reports for m in r.per_task))
    for m in methods:
        tasks = list(dict.fromkeys(t for r in reports for t in r.per_task.get(m, {})))
        for t in tasks:
            rows = [r.per_task[m][t] for r in reports if t in r.per_task.get(m, {})]
            merged = {}
            for k in METRICS:
                vals = [row[k] for row in rows if row.get(k) is not None]
                merged[k] = float(np.mean(vals)) if vals else None
            out.add(m, t, merged)
    return out


def strategy_report(scene, strategy, clearance=None):
    """Feasibility plus oracle-checkable proxies for a placing strategy.

    ``stable`` is the oracle's stability label of each placed object on its
    base (stacked bases are moved to their own placement first). ``correct``
    additionally needs the generators' semantic preference for the
    (object kind, area kind) pair and a preferred orientation, so stacked
    objects never count as correct.
    """
    from ..errors import CollidingPlacement
    from ..geometry import DEFAULT_CLEARANCE, Placement
    from ..infer import check_feasibility
    from .generators import semantic_preference
    from .oracle import stability_oracle

    clearance = DEFAULT_CLEARANCE if clearance is None else clearance
    rows = []
    for i in range(scene.n):
        base_ref = strategy.base_of(i)
        row = {"object_id": scene.object_ids[i], "stable": False, "correct": False}
        rows.append(row)
        if base_ref is None:
            continue
        okind = (scene.object_kinds or [None] * scene.n)[i]
        if base_ref.kind == "area":
            base = scene.environments[base_ref.index]
            skind = (scene.environment_kinds or [None] * scene.m)[base_ref.index]
        else:
            base = strategy.placement(base_ref.index).apply(scene.objects[base_ref.index])
            skind = None
        try:
            lab = stability_oracle(scene.objects[i], base, Placement(strategy.L[i], strategy.C[i]),
                                   okind if skind else None, skind, clearance=clearance)
        except CollidingPlacement:
            row["reason"] = "collision"
            continue
        row["stable"] = lab.stable
        row["reason"] = lab.reason
        row["correct"] = bool(lab.preferred and skind is not None and okind is not None
                              and semantic_preference(okind, skind))
    n = max(1, len(rows))
    return {"violations": check_feasibility(scene, strategy, clearance),
            "objects": rows,
            "stable_fraction": sum(r["stable"] for r in rows) / n,
            "correct_fraction": sum(r["correct"] for r in rows) / n}

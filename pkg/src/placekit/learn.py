"""Max-margin learners: linear SVM, quadratic-kernel SVM, shared-sparsity SVM.

Decision conventions:

* ``LinearSVM``: ``coef_ . x - intercept_``
* ``KernelSVM``: ``sum_i dual_coef_[i] K(sv_i, x) + intercept_``
* ``SharedSparsitySVM`` task ``t``: ``(S_[t] + B_[t]) . x + intercepts_[t]``
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .errors import BadFeature, FeatureMismatch, NeedMultipleTasks, SingleClass

FORMAT_VERSION = 1
TAU = 1e-12


# --------------------------------------------------------------------------- #
# input handling
# --------------------------------------------------------------------------- #


def _check_X(X, n_features=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise BadFeature("feature matrix must be 2-D")
    if not np.all(np.isfinite(X)):
        raise BadFeature("features contain NaN or Inf")
    if n_features is not None and X.shape[1] != n_features:
        raise FeatureMismatch("expected %d features, got %d" % (n_features, X.shape[1]))
    return X


def _check_labels(y, n):
    y = np.asarray(y)
    if y.shape != (n,):
        raise ValueError("labels must have one entry per example")
    y = np.where(y.astype(float) > 0, 1.0, -1.0)
    if len(np.unique(y)) < 2:
        raise SingleClass("training data needs both labels")
    return y


def _class_costs(C, y, class_weight):
    if C <= 0:
        raise ValueError("C must be positive")
    if class_weight is None:
        return np.full(len(y), float(C))
    if class_weight == "balanced":
        n = len(y)
        counts = {v: np.sum(y == v) for v in (-1.0, 1.0)}
        return np.array([C * n / (2.0 * counts[v]) for v in y])
    raise ValueError("class_weight must be None or 'balanced'")


def _scaler(X, enabled):
    if not enabled:
        return np.zeros(X.shape[1]), np.ones(X.shape[1])
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    return mu, np.where(sd > 1e-12, sd, 1.0)


# --------------------------------------------------------------------------- #
# solvers
# --------------------------------------------------------------------------- #


def best_offset(f, y, costs):
    """Exact minimizer ``b`` of ``sum_j c_j max(0, 1 - y_j (f_j + b))``.

    The loss is convex and piecewise linear with kinks at ``y_j - f_j``; when
    the minimum is attained on an interval its midpoint is returned.
    """
    kinks = y - f
    order = np.argsort(kinks, kind="stable")
    k, yk, ck = kinks[order], y[order], costs[order]
    pos = yk > 0
    # loss at each kink via prefix sums
    cp = np.where(pos, ck, 0.0)
    cn = np.where(pos, 0.0, ck)
    cp_suf = np.cumsum((cp)[::-1])[::-1]
    cpk_suf = np.cumsum((cp * k)[::-1])[::-1]
    cn_pre = np.cumsum(cn)
    cnk_pre = np.cumsum(cn * k)
    uniq, first = np.unique(k, return_index=True)
    last = np.searchsorted(k, uniq, side="right") - 1
    loss = np.zeros(len(uniq))
    above = last + 1
    has_above = above < len(k)
    loss[has_above] += cpk_suf[above[has_above]] - uniq[has_above] * cp_suf[above[has_above]]
    loss += uniq * cn_pre[last] - cnk_pre[last]
    best = loss.min()
    tied = np.flatnonzero(loss <= best + 1e-12 * max(1.0, abs(best)))
    return 0.5 * (uniq[tied[0]] + uniq[tied[-1]]), float(best)


class _Columns:
    """Columns of ``Q = (y y^T) * K`` with a dense cache when affordable."""

    DENSE_LIMIT = 4000

    def __init__(self, kernel, X, y):
        self.kernel, self.X, self.y = kernel, X, y
        n = len(y)
        self.dense = None
        if n <= self.DENSE_LIMIT:
            self.dense = (y[:, None] * y[None, :]) * kernel(X, X)
            self.diag = np.diag(self.dense).copy()
        else:
            self.cache = {}
            self.diag = np.array([kernel(X[i:i + 1], X[i:i + 1])[0, 0] for i in range(n)])

    def __call__(self, i):
        if self.dense is not None:
            return self.dense[i]
        col = self.cache.get(i)
        if col is None:
            if len(self.cache) > 512:
                self.cache.pop(next(iter(self.cache)))
            col = self.y[i] * self.y * self.kernel(self.X, self.X[i:i + 1])[:, 0]
            self.cache[i] = col
        return col


def smo(Q: _Columns, y, costs, eps, alpha=None, G=None, max_iter=10_000_000):
    """Minimize ``1/2 a'Qa - 1'a`` s.t. ``y'a = 0``, ``0 <= a <= costs``.

    Second-order working-set selection. Returns ``(alpha, G, n_iter,
    violation)``; warm starts pass back ``alpha`` and ``G``.
    """
    n = len(y)
    alpha = np.zeros(n) if alpha is None else alpha
    G = -np.ones(n) if G is None else G
    QD = Q.diag
    it = 0
    viol = np.inf
    while it < max_iter:
        v = -y * G
        up = ((y > 0) & (alpha < costs)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < costs))
        if not up.any() or not low.any():
            viol = 0.0
            break
        i = int(np.flatnonzero(up)[np.argmax(v[up])])
        gmax = v[i]
        viol = gmax - v[low].min()
        if viol < eps:
            break
        Qi = Q(i)
        cand = low & (v < gmax)
        b = gmax - v
        a = QD[i] + QD - 2.0 * y[i] * y * Qi
        a = np.where(a > 0, a, TAU)
        score = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(score))
        Qj = Q(j)
        ai, aj = alpha[i], alpha[j]
        Ci, Cj = costs[i], costs[j]
        if y[i] != y[j]:
            quad = QD[i] + QD[j] + 2.0 * Qi[j]
            quad = quad if quad > 0 else TAU
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ni, nj = ai + delta, aj + delta
            if diff > 0:
                if nj < 0:
                    nj, ni = 0.0, diff
            elif ni < 0:
                ni, nj = 0.0, -diff
            if diff > Ci - Cj:
                if ni > Ci:
                    ni, nj = Ci, Ci - diff
            elif nj > Cj:
                nj, ni = Cj, Cj + diff
        else:
            quad = QD[i] + QD[j] - 2.0 * Qi[j]
            quad = quad if quad > 0 else TAU
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            ni, nj = ai - delta, aj + delta
            if total > Ci:
                if ni > Ci:
                    ni, nj = Ci, total - Ci
            elif nj < 0:
                nj, ni = 0.0, total
            if total > Cj:
                if nj > Cj:
                    nj, ni = Cj, total - Cj
            elif ni < 0:
                ni, nj = 0.0, total
        alpha[i], alpha[j] = ni, nj
        G += Qi * (ni - ai) + Qj * (nj - aj)
        it += 1
    return alpha, G, it, float(viol)


def linear_kernel(A, B):
    return A @ B.T


def poly_kernel(A, B, degree=2, coef0=1.0):
    return (A @ B.T + coef0) ** degree


# --------------------------------------------------------------------------- #
# single-task estimators
# --------------------------------------------------------------------------- #


class _Base(ClassifierMixin, BaseEstimator):
    def predict(self, X):
        return np.where(self.decision_function(X) >= 0, 1, -1)

    def _prepare(self, X, y):
        X = _check_X(X)
        y = _check_labels(y, len(X))
        return X, y, _class_costs(self.C, y, self.class_weight)


class LinearSVM(_Base):
    """Soft-margin linear SVM with an unpenalized bias.

    Parameters
    ----------
    C : float
        Hinge-loss weight.
    tol : float
        Target relative duality gap.
    class_weight : None or 'balanced'
        Per-class scaling of ``C`` by inverse class frequency.
    feature_scaling : bool
        Standardize features internally; the learned weights are mapped back
        so ``decision_function`` always takes raw features.
    feature_config : str
        Fingerprint of the featurizer that produced the inputs.
    seed : int
        Recorded for provenance; the solver is deterministic.

    Attributes
    ----------
    coef_, intercept_ : decision is ``coef_ . x - intercept_``
    alpha_ : dual variables
    duality_gap_, primal_objective_, dual_objective_, n_iter_
    """

    kind = "linear"

    def __init__(self, C=1.0, tol=1e-3, class_weight=None, feature_scaling=False,
                 feature_config="", seed=0):
        self.C = C
        self.tol = tol
        self.class_weight = class_weight
        self.feature_scaling = feature_scaling
        self.feature_config = feature_config
        self.seed = seed

    def fit(self, X, y):
        X, y, costs = self._prepare(X, y)
        mu, sd = _scaler(X, self.feature_scaling)
        Z = (X - mu) / sd
        Q = _Columns(linear_kernel, Z, y)
        alpha, G, eps, total = None, None, 1e-3, 0
        while True:
            alpha, G, it, _ = smo(Q, y, costs, eps, alpha, G)
            total += it
            w = (alpha * y) @ Z
            f = Z @ w
            b_plus, loss = best_offset(f, y, costs)
            primal = 0.5 * w @ w + loss
            dual = alpha.sum() - 0.5 * w @ w
            gap = primal - dual
            if gap <= self.tol * (1.0 + abs(primal)) or eps < 1e-12:
                break
            eps /= 10.0
        self.alpha_ = alpha
        self.coef_ = w / sd
        self.intercept_ = float(-b_plus + self.coef_ @ mu)
        self.primal_objective_, self.dual_objective_ = float(primal), float(dual)
        self.duality_gap_ = float(gap)
        self.n_iter_ = total
        self.classes_ = np.array([-1, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        X = _check_X(X, len(self.coef_))
        return X @ self.coef_ - self.intercept_


class KernelSVM(_Base):
    """Soft-margin SVM with the polynomial kernel ``(x . z + coef0) ** degree``.

    Parameters
    ----------
    C, class_weight, feature_scaling, feature_config, seed
        As for :class:`LinearSVM`.
    degree : int
    coef0 : float
    tol : float
        Stopping bound on the maximal KKT violation.

    Attributes
    ----------
    support_vectors_, dual_coef_ (``alpha_i y_i``), intercept_
    scale_mean_, scale_std_ : feature standardization applied before the kernel
    """

    kind = "kernel"

    def __init__(self, C=1.0, degree=2, coef0=1.0, tol=1e-3, class_weight=None,
                 feature_scaling=False, feature_config="", seed=0):
        self.C = C
        self.degree = degree
        self.coef0 = coef0
        self.tol = tol
        self.class_weight = class_weight
        self.feature_scaling = feature_scaling
        self.feature_config = feature_config
        self.seed = seed

    def _kernel(self, A, B):
        return poly_kernel(A, B, self.degree, self.coef0)

    def fit(self, X, y):
        X, y, costs = self._prepare(X, y)
        mu, sd = _scaler(X, self.feature_scaling)
        Z = (X - mu) / sd
        Q = _Columns(self._kernel, Z, y)
        alpha, G, it, viol = smo(Q, y, costs, self.tol)
        sv = alpha > 0
        f = y * (G + 1.0)
        b_plus, loss = best_offset(f, y, costs)
        self.alpha_ = alpha
        self.support_ = np.flatnonzero(sv)
        self.support_vectors_ = Z[sv] * sd + mu
        self.dual_coef_ = (alpha * y)[sv]
        self.intercept_ = float(b_plus)
        self.scale_mean_, self.scale_std_ = mu, sd
        self.kkt_violation_ = viol
        self.n_iter_ = it
        self.classes_ = np.array([-1, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        X = _check_X(X, self.n_features_in_)
        Zs = (self.support_vectors_ - self.scale_mean_) / self.scale_std_
        Z = (X - self.scale_mean_) / self.scale_std_
        return self._kernel(Z, Zs) @ self.dual_coef_ + self.intercept_


# --------------------------------------------------------------------------- #
# shared sparsity
# --------------------------------------------------------------------------- #


def project_capped_l1(V, cap, radius):
    """Euclidean projection of each column of ``V`` (tasks x features) onto
    ``{u : |u_i| <= cap, sum_i |u_i| <= radius}``."""
    a = np.abs(V)
    clipped = np.minimum(a, cap)
    need = clipped.sum(axis=0) > radius
    out = clipped.copy()
    if need.any():
        A = a[:, need]
        # s(tau) = sum clip(a - tau, 0, cap) is piecewise linear; locate tau
        knots = np.sort(np.concatenate([A, np.maximum(A - cap, 0.0)], axis=0), axis=0)
        s = np.clip(A[None, :, :] - knots[:, None, :], 0.0, cap).sum(axis=1)
        # s is non-increasing along knots; find the last knot with s >= radius
        idx = np.maximum((s >= radius).sum(axis=0) - 1, 0)
        cols = np.arange(A.shape[1])
        t0 = knots[idx, cols]
        s0 = s[idx, cols]
        t1 = knots[np.minimum(idx + 1, len(knots) - 1), cols]
        s1 = s[np.minimum(idx + 1, len(knots) - 1), cols]
        frac = np.where(s0 > s1, (s0 - radius) / np.where(s0 > s1, s0 - s1, 1.0), 0.0)
        tau = t0 + frac * (t1 - t0)
        out[:, need] = np.clip(A - tau[None, :], 0.0, cap)
    return np.sign(V) * out


def split_shared(theta, lambda_s, lambda_b):
    """Cheapest ``S + B = theta`` under ``lambda_s |S|_11 + lambda_b |B|_1inf``.

    Per feature, ``B`` clips ``theta`` at ``t``, the ``(m+1)``-th largest
    magnitude with ``m = floor(lambda_b / lambda_s)``.
    """
    r = theta.shape[0]
    m = int(np.floor(lambda_b / lambda_s + 1e-12))
    if m >= r:
        B = np.zeros_like(theta)
    else:
        mags = -np.sort(-np.abs(theta), axis=0)
        t = mags[m]
        B = np.clip(theta, -t, t)
    return theta - B, B


def shared_objective(S, B, b, tasks, Xs, ys, cs, lambda_s, lambda_b):
    theta = S + B
    total = 0.5 * float(np.sum(theta * theta))
    for t in range(len(tasks)):
        margin = ys[t] * (Xs[t] @ theta[t] + b[t])
        total += float(cs[t] @ np.maximum(0.0, 1.0 - margin))
    return total + lambda_s * float(np.abs(S).sum()) + lambda_b * float(np.abs(B).max(axis=0).sum())


class SharedSparsitySVM(BaseEstimator):
    """Multi-task SVM with weights ``theta_t = S_t + B_t``.

    Minimizes ``sum_t (1/2 |theta_t|^2 + C sum hinge) + lambda_s |S|_11 +
    lambda_b |B|_1inf``, where ``|B|_1inf`` sums, over features, the largest
    magnitude across tasks. The solver works on the dual, where the combined
    regularizer becomes half the squared distance to a capped l1 set; pair
    steps use a curvature bound so every step is an ascent step. The primal
    is rebuilt after each outer sweep, and the best primal point so far is kept.

    Parameters
    ----------
    C, lambda_s, lambda_b : float
    max_iter : int
        Outer sweep cap.
    tol : float
        Relative improvement threshold for stopping.
    inner_steps : int or None
        Pair steps per task per sweep (default: task size).
    class_weight, feature_scaling, feature_config, seed
        As for :class:`LinearSVM`.

    Attributes
    ----------
    tasks_ : list of task identifiers
    S_, B_ : arrays (n_tasks, n_features)
    intercepts_ : array (n_tasks,)
    objective_history_ : stored (best-so-far) objective after each sweep
    """

    kind = "multitask"

    def __init__(self, C=1.0, lambda_s=0.1, lambda_b=0.1, max_iter=500, tol=1e-5,
                 inner_steps=None, class_weight=None, feature_scaling=False,
                 feature_config="", seed=0):
        self.C = C
        self.lambda_s = lambda_s
        self.lambda_b = lambda_b
        self.max_iter = max_iter
        self.tol = tol
        self.inner_steps = inner_steps
        self.class_weight = class_weight
        self.feature_scaling = feature_scaling
        self.feature_config = feature_config
        self.seed = seed

    def fit(self, X, y, tasks):
        X = _check_X(X)
        tasks = np.asarray(tasks)
        if tasks.shape != (len(X),):
            raise ValueError("tasks must have one entry per example")
        ids = list(dict.fromkeys(tasks.tolist()))
        if len(ids) < 2:
            raise NeedMultipleTasks("shared sparsity needs at least two tasks")
        if min(self.C, self.lambda_s, self.lambda_b) <= 0:
            raise ValueError("hyperparameters must be positive")
        mu, sd = _scaler(X, self.feature_scaling)
        Z = (X - mu) / sd
        Xs, ys, cs = [], [], []
        for t in ids:
            rows = tasks == t
            yt = np.asarray(y)[rows]
            try:
                yt = _check_labels(yt, rows.sum())
            except SingleClass:
                raise SingleClass("task %r needs both labels" % (t,)) from None
            Xs.append(Z[rows])
            ys.append(yt)
            cs.append(_class_costs(self.C, yt, self.class_weight))
        r, p = len(ids), X.shape[1]
        alphas = [np.zeros(len(v)) for v in ys]
        W = np.zeros((r, p))
        ls, lb = float(self.lambda_s), float(self.lambda_b)

        def theta_of(W):
            return W - project_capped_l1(W, ls, lb)

        def rebuild(theta):
            S, B = split_shared(theta, ls, lb)
            th = S + B
            b = np.array([best_offset(Xs[t] @ th[t], ys[t], cs[t])[0] for t in range(r)])
            return S, B, b

        best = None
        history = []
        for _ in range(self.max_iter):
            max_viol = 0.0
            for t in range(r):
                Xt, yt, ct, at = Xs[t], ys[t], cs[t], alphas[t]
                steps = self.inner_steps or len(yt)
                for _ in range(steps):
                    theta_t = theta_of(W)[t]
                    G = yt * (Xt @ theta_t) - 1.0
                    v = -yt * G
                    up = ((yt > 0) & (at < ct)) | ((yt < 0) & (at > 0))
                    low = ((yt > 0) & (at > 0)) | ((yt < 0) & (at < ct))
                    if not up.any() or not low.any():
                        break
                    i = int(np.flatnonzero(up)[np.argmax(v[up])])
                    j = int(np.flatnonzero(low)[np.argmin(v[low])])
                    gap = v[i] - v[j]
                    if gap < 1e-3:
                        break
                    max_viol = max(max_viol, gap)
                    d = Xt[i] - Xt[j]
                    dd = float(d @ d)
                    lim_i = ct[i] - at[i] if yt[i] > 0 else at[i]
                    lim_j = at[j] if yt[j] > 0 else ct[j] - at[j]
                    s = min(gap / dd if dd > 0 else np.inf, lim_i, lim_j)
                    if s <= 0:
                        break
                    at[i] += yt[i] * s
                    at[j] -= yt[j] * s
                    W[t] += s * d
            S, B, b = rebuild(theta_of(W))
            obj = shared_objective(S, B, b, ids, Xs, ys, cs, ls, lb)
            prev = best[0] if best is not None else None
            if best is None or obj < best[0]:
                best = (obj, S, B, b)
            history.append(best[0])
            if max_viol < 1e-3:
                break
            if prev is not None and prev - best[0] <= self.tol * max(1.0, abs(prev)):
                break
        obj, S, B, b = best
        self.tasks_ = ids
        self.S_ = S / sd
        self.B_ = B / sd
        self.intercepts_ = b - (self.S_ + self.B_) @ mu
        self.objective_ = obj
        self.objective_history_ = history
        theta = theta_of(W)
        self.dual_objective_ = float(sum(a.sum() for a in alphas) - 0.5 * np.sum(theta * theta))
        self.n_features_in_ = p
        return self

    @property
    def coef_(self):
        return self.S_ + self.B_

    def decision_function(self, X, task=None):
        """Scores of shape (n, n_tasks), or (n,) for one ``task``."""
        X = _check_X(X, self.n_features_in_)
        scores = X @ self.coef_.T + self.intercepts_
        if task is None:
            return scores
        return scores[:, self.tasks_.index(task)]

    def task_model(self, task):
        """A :class:`LinearSVM` view of one task's weights."""
        k = self.tasks_.index(task)
        m = LinearSVM(C=self.C, feature_config=self.feature_config, seed=self.seed)
        m.coef_ = self.coef_[k].copy()
        m.intercept_ = float(-self.intercepts_[k])
        m.classes_ = np.array([-1, 1])
        m.n_features_in_ = self.n_features_in_
        return m

    def rank(self, X):
        return vote_rank([self.task_model(t) for t in self.tasks_], X)


# --------------------------------------------------------------------------- #
# scoring and voting
# --------------------------------------------------------------------------- #


def score(model, phi, feature_config=None):
    """Decision value(s) of ``model`` on ``phi``.

    Raises FeatureMismatch when ``feature_config`` is given and differs from
    the model's, or when the feature length is wrong. A multi-task model
    scores with the mean of its task decision values.
    """
    if feature_config is not None and feature_config != model.feature_config:
        raise FeatureMismatch("model trained on %r, got %r" % (model.feature_config, feature_config))
    phi = np.asarray(phi, dtype=float)
    out = model.decision_function(np.atleast_2d(phi))
    if isinstance(model, SharedSparsitySVM):
        out = out.mean(axis=1)
    return float(out[0]) if phi.ndim == 1 and np.ndim(out) == 1 else out


def vote_rank(models, candidates):
    """Candidate indices ordered by mean per-model rank (ties by index)."""
    if len(models) == 0:
        raise ValueError("need at least one model")
    X = np.asarray(candidates, dtype=float)
    n = len(X)
    ranks = np.zeros(n)
    for m in models:
        s = np.asarray(m.decision_function(X), dtype=float)
        order = np.lexsort((np.arange(n), -s))
        r = np.empty(n)
        r[order] = np.arange(n)
        ranks += r
    return np.lexsort((np.arange(n), ranks / len(models)))


# --------------------------------------------------------------------------- #
# persistence
# --------------------------------------------------------------------------- #


def _hyper(model):
    return {k: v for k, v in model.get_params().items() if k not in ("feature_config", "seed")}


def model_to_dict(model):
    if isinstance(model, LinearSVM):
        weights = {"coef": model.coef_.tolist(), "intercept": model.intercept_}
    elif isinstance(model, KernelSVM):
        weights = {"support_vectors": model.support_vectors_.tolist(),
                   "dual_coef": model.dual_coef_.tolist(),
                   "intercept": model.intercept_,
                   "scale_mean": model.scale_mean_.tolist(),
                   "scale_std": model.scale_std_.tolist(),
                   "kernel": {"type": "poly", "degree": model.degree, "coef0": model.coef0}}
    elif isinstance(model, SharedSparsitySVM):
        weights = {"tasks": [{"id": t, "S": model.S_[k].tolist(), "B": model.B_[k].tolist(),
                              "b": float(model.intercepts_[k])}
                             for k, t in enumerate(model.tasks_)]}
    else:
        raise TypeError("unsupported model type %s" % type(model).__name__)
    return {"format_version": FORMAT_VERSION, "kind": model.kind,
            "feature_config": model.feature_config, "weights": weights,
            "hyperparameters": _hyper(model), "seed": model.seed}


def model_from_dict(d):
    if d.get("format_version") != FORMAT_VERSION:
        raise ValueError("unsupported model format_version %r" % d.get("format_version"))
    kind, w = d["kind"], d["weights"]
    common = dict(feature_config=d.get("feature_config", ""), seed=d.get("seed", 0))
    if kind == "linear":
        m = LinearSVM(**d["hyperparameters"], **common)
        m.coef_ = np.array(w["coef"], dtype=float)
        m.intercept_ = float(w["intercept"])
        m.n_features_in_ = len(m.coef_)
    elif kind == "kernel":
        m = KernelSVM(**d["hyperparameters"], **common)
        m.support_vectors_ = np.array(w["support_vectors"], dtype=float)
        m.dual_coef_ = np.array(w["dual_coef"], dtype=float)
        m.intercept_ = float(w["intercept"])
        m.scale_mean_ = np.array(w["scale_mean"], dtype=float)
        m.scale_std_ = np.array(w["scale_std"], dtype=float)
        m.n_features_in_ = len(m.scale_mean_)
    elif kind == "multitask":
        m = SharedSparsitySVM(**d["hyperparameters"], **common)
        tasks = w["tasks"]
        m.tasks_ = [t["id"] for t in tasks]
        m.S_ = np.array([t["S"] for t in tasks], dtype=float)
        m.B_ = np.array([t["B"] for t in tasks], dtype=float)
        m.intercepts_ = np.array([t["b"] for t in tasks], dtype=float)
        m.n_features_in_ = m.S_.shape[1]
    else:
        raise ValueError("unknown model kind %r" % kind)
    m.classes_ = np.array([-1, 1])
    return m


def save_model(model, path):
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1))


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text()))

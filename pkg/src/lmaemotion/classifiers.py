"""CART trees, random forests and a one-vs-rest linear SVM written from scratch,
plus grouped k-fold plans, grid search and model serialization.

The estimators follow the scikit-learn conventions (constructor stores the
hyperparameters, ``fit`` returns ``self``, learned state ends in ``_``) so they
can be cloned, grid-searched and pipelined like any other estimator.
"""

from __future__ import annotations

import itertools
import json
import math
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from joblib import Parallel, delayed
from numba import njit
from sklearn.base import BaseEstimator, ClassifierMixin, clone
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .io_utils import atomic_write_text

MODEL_FORMAT = "lmaemotion-model"
MODEL_VERSION = 1


class IncompatibleModelError(ValueError):
    """The feature vector was produced under a different schema than the model."""


# ---------------------------------------------------------------- trees

@dataclass
class Tree:
    """Array-backed binary tree.

    Node ``i`` is a leaf when ``feature[i] == -1``; otherwise samples with
    ``x[feature[i]] < threshold[i]`` go to ``left[i]`` and the rest to
    ``right[i]``.  ``value[i]`` holds the (bootstrap-weighted) training class
    counts reaching the node and ``cover[i]`` their total.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def cover(self) -> np.ndarray:
        return self.value.sum(axis=1)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_classes(self) -> int:
        return self.value.shape[1]

    @property
    def leaf_probabilities(self) -> np.ndarray:
        cover = self.cover
        return self.value / np.where(cover > 0, cover, 1.0)[:, None]

    def is_leaf(self, i: int) -> bool:
        return self.feature[i] < 0

    def depth(self) -> int:
        best, stack = 0, [(0, 0)]
        while stack:
            i, d = stack.pop()
            if self.feature[i] < 0:
                best = max(best, d)
            else:
                stack += [(self.left[i], d + 1), (self.right[i], d + 1)]
        return best

    def used_features(self) -> set[int]:
        return {int(f) for f in self.feature if f >= 0}

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row of ``X``."""
        node = np.zeros(X.shape[0], dtype=np.intp)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            cur = node[active]
            go_left = X[active, self.feature[cur]] < self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.leaf_probabilities[self.apply(X)]

    def to_dict(self) -> dict:
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "value": self.value.tolist()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Tree":
        return cls(np.asarray(d["feature"], dtype=np.intp),
                   np.asarray(d["threshold"], dtype=float),
                   np.asarray(d["left"], dtype=np.intp),
                   np.asarray(d["right"], dtype=np.intp),
                   np.asarray(d["value"], dtype=float).reshape(len(d["feature"]), -1))


@njit(cache=True)
def _best_split(X, idx, y, w, n_classes, features, min_leaf):
    m = idx.shape[0]
    total = np.zeros(n_classes)
    for i in range(m):
        total[y[idx[i]]] += w[idx[i]]
    n = total.sum()
    parent = n - np.dot(total, total) / n
    best_gain, best_f, best_thr = -np.inf, -1, 0.0
    col = np.empty(m)
    left = np.empty(n_classes)
    for f in features:
        for i in range(m):
            col[i] = X[idx[i], f]
        order = np.argsort(col, kind="mergesort")
        left[:] = 0.0
        n_left = 0.0
        best_imp, best_i = np.inf, -1
        for pos in range(m - 1):
            s = idx[order[pos]]
            left[y[s]] += w[s]
            n_left += w[s]
            lo = col[order[pos]]
            hi = col[order[pos + 1]]
            if not hi > lo:
                continue
            n_right = n - n_left
            if n_left < min_leaf or n_right < min_leaf:
                continue
            sq_l = 0.0
            sq_r = 0.0
            for c in range(n_classes):
                sq_l += left[c] * left[c]
                r = total[c] - left[c]
                sq_r += r * r
            imp = n_left - sq_l / n_left + n_right - sq_r / n_right
            if imp < best_imp:
                best_imp, best_i = imp, pos
        if best_i < 0:
            continue
        gain = (parent - best_imp) / n
        if gain > best_gain:
            lo = col[order[best_i]]
            hi = col[order[best_i + 1]]
            thr = lo + (hi - lo) / 2.0
            if not (lo < thr and thr <= hi):
                thr = hi
            best_gain, best_f, best_thr = gain, f, thr
    return best_f, best_thr, best_gain


def build_tree(X: np.ndarray, y: np.ndarray, n_classes: int, *, sample_weight=None,
               max_depth: int | None = None, min_leaf_samples: int = 1,
               features_per_split: int | None = None, rng: np.random.Generator | None = None) -> Tree:
    """Greedy CART with Gini impurity.

    Each node tries ``features_per_split`` randomly chosen features (all of
    them when None) and keeps the split with the largest impurity decrease;
    ties go to the lower feature index, then the lower threshold.  A node
    becomes a leaf when it is pure, reaches ``max_depth``, or has no split
    leaving ``min_leaf_samples`` on both sides.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    y = np.asarray(y, dtype=np.int64)
    w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    keep = w > 0
    X, y, w = np.ascontiguousarray(X[keep], dtype=float), y[keep], w[keep]
    n_features = X.shape[1]
    k = n_features if features_per_split is None else max(1, min(int(features_per_split), n_features))

    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(counts):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(counts)
        return len(feature) - 1

    root = new_node(np.bincount(y, weights=w, minlength=n_classes))
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        counts = value[node]
        if (max_depth is not None and depth >= max_depth) or np.count_nonzero(counts) <= 1 \
                or counts.sum() < 2 * min_leaf_samples:
            continue
        feats = np.arange(n_features) if k == n_features else np.sort(
            rng.choice(n_features, size=k, replace=False))
        f, thr, _ = _best_split(X, idx, y, w, n_classes, feats.astype(np.int64),
                                float(min_leaf_samples))
        if f < 0:
            continue
        go_left = X[idx, f] < thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = f, thr
        lnode = new_node(np.bincount(y[li], weights=w[li], minlength=n_classes))
        rnode = new_node(np.bincount(y[ri], weights=w[ri], minlength=n_classes))
        left[node], right[node] = lnode, rnode
        # right pushed first so the left subtree is numbered first
        stack.append((rnode, ri, depth + 1))
        stack.append((lnode, li, depth + 1))
    return Tree(np.array(feature, dtype=np.intp), np.array(threshold, dtype=float),
                np.array(left, dtype=np.intp), np.array(right, dtype=np.intp),
                np.array(value, dtype=float).reshape(-1, n_classes))


def _resolve_features_per_split(value, n_features: int) -> int | None:
    if value is None:
        return None
    if value == "sqrt":
        return max(1, int(round(math.sqrt(n_features))))
    return int(value)


def _canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    # sort rows by (label, features) so fitting ignores the input order
    keys = [X[:, j] for j in range(X.shape[1] - 1, -1, -1)] + [y]
    return np.lexsort(keys)


class _TreeModelMixin:
    schema_hash: str | None

    def _encode(self, X, y):
        X, y = check_X_y(X, y, dtype=float, ensure_all_finite=True)
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        self.n_features_in_ = X.shape[1]
        return X, y_enc

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]


class DecisionTreeClassifier(_TreeModelMixin, ClassifierMixin, BaseEstimator):
    def __init__(self, max_depth=None, min_leaf_samples=1, features_per_split=None,
                 random_state=0, schema_hash=None):
        self.max_depth = max_depth
        self.min_leaf_samples = min_leaf_samples
        self.features_per_split = features_per_split
        self.random_state = random_state
        self.schema_hash = schema_hash

    def fit(self, X, y, sample_weight=None):
        X, y_enc = self._encode(X, y)
        rng = np.random.default_rng(self.random_state)
        self.tree_ = build_tree(
            X, y_enc, len(self.classes_), sample_weight=sample_weight, max_depth=self.max_depth,
            min_leaf_samples=self.min_leaf_samples,
            features_per_split=_resolve_features_per_split(self.features_per_split, X.shape[1]),
            rng=rng)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "tree_")
        X = check_array(X, dtype=float)
        return self.tree_.predict_proba(X)


def _fit_one_tree(X, y, n_classes, seed, tree_index, bootstrap, params):
    rng = np.random.default_rng([seed, tree_index])
    n = len(y)
    weight = np.bincount(rng.integers(0, n, n), minlength=n).astype(float) if bootstrap else None
    return build_tree(X, y, n_classes, sample_weight=weight, rng=rng, **params)


class RandomForestClassifier(_TreeModelMixin, ClassifierMixin, BaseEstimator):
    """Bagged CART ensemble.

    Tree ``t`` draws its bootstrap sample and split features from an RNG
    seeded with ``(random_state, t)``, and rows are put in a canonical order
    before sampling, so the fitted forest depends only on the data set and
    the seed (not on row order or ``n_jobs``).  Probabilities are the mean
    of the per-tree leaf class frequencies.
    """

    def __init__(self, n_trees=100, max_depth=None, min_leaf_samples=1, features_per_split="sqrt",
                 bootstrap=True, oob_score=False, random_state=0, n_jobs=1, schema_hash=None):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf_samples = min_leaf_samples
        self.features_per_split = features_per_split
        self.bootstrap = bootstrap
        self.oob_score = oob_score
        self.random_state = random_state
        self.n_jobs = n_jobs
        self.schema_hash = schema_hash

    def fit(self, X, y):
        if int(self.n_trees) < 1:
            raise ValueError("n_trees must be >= 1")
        X, y_enc = self._encode(X, y)
        order = _canonical_order(X, y_enc)
        X, y_enc = X[order], y_enc[order]
        params = dict(max_depth=self.max_depth, min_leaf_samples=self.min_leaf_samples,
                      features_per_split=_resolve_features_per_split(self.features_per_split,
                                                                     X.shape[1]))
        args = (X, y_enc, len(self.classes_), int(self.random_state))
        if self.n_jobs == 1:
            trees = [_fit_one_tree(*args, t, self.bootstrap, params) for t in range(self.n_trees)]
        else:
            trees = Parallel(n_jobs=self.n_jobs)(
                delayed(_fit_one_tree)(*args, t, self.bootstrap, params) for t in range(self.n_trees))
        self.trees_ = trees
        if self.oob_score and self.bootstrap:
            self.oob_score_ = self._oob_accuracy(X, y_enc)
        return self

    def _oob_accuracy(self, X, y_enc):
        n = len(y_enc)
        votes = np.zeros((n, len(self.classes_)))
        for t, tree in enumerate(self.trees_):
            rng = np.random.default_rng([int(self.random_state), t])
            drawn = np.bincount(rng.integers(0, n, n), minlength=n)
            out = drawn == 0
            if out.any():
                votes[out] += tree.predict_proba(X[out])
        seen = votes.sum(axis=1) > 0
        return float(np.mean(np.argmax(votes[seen], axis=1) == y_enc[seen])) if seen.any() else float("nan")

    def predict_proba(self, X):
        check_is_fitted(self, "trees_")
        X = check_array(X, dtype=float)
        return np.mean([t.predict_proba(X) for t in self.trees_], axis=0)

    def tree_votes(self, X) -> np.ndarray:
        """Class index chosen by each tree, shape (n_samples, n_trees)."""
        X = check_array(X, dtype=float)
        return np.stack([np.argmax(t.predict_proba(X), axis=1) for t in self.trees_], axis=1)


# ---------------------------------------------------------------- linear SVM

class LinearSVMClassifier(ClassifierMixin, BaseEstimator):
    """One-vs-rest linear SVM trained by mini-batch stochastic subgradient descent.

    Each binary problem minimises ``mean(hinge) + lam * ||w||^2`` (bias not
    regularised) on features standardised with training statistics.  The
    step size decays as ``eta0 / (1 + 2 * lam * eta0 * t)`` and the epoch
    order comes from a generator seeded with ``random_state``.

    An epoch that ends with a larger full-data objective than it started
    with is rolled back and the step size halved, so ``objective_history_``
    never increases.
    """

    def __init__(self, lam=1e-3, epochs=20, eta0=0.1, batch_size=8, random_state=0,
                 schema_hash=None):
        self.lam = lam
        self.epochs = epochs
        self.eta0 = eta0
        self.batch_size = batch_size
        self.random_state = random_state
        self.schema_hash = schema_hash

    def _standardize(self, X):
        return (X - self.mean_) / self.scale_

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, ensure_all_finite=True)
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("LinearSVMClassifier needs at least 2 classes")
        self.n_features_in_ = X.shape[1]
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.feature_mask_ = std > 0
        self.scale_ = np.where(self.feature_mask_, std, 1.0)
        Z = self._standardize(X) * self.feature_mask_
        n, d = Z.shape
        K = len(self.classes_)
        Y = -np.ones((n, K))
        Y[np.arange(n), y_enc] = 1.0
        W = np.zeros((K, d))
        b = np.zeros(K)
        lam, eta0, bs = float(self.lam), float(self.eta0), int(self.batch_size)
        rng = np.random.default_rng(self.random_state)
        t = 0
        shrink = 1.0
        current = self._objective(Z, Y, W, b, lam)
        history = []
        for _ in range(int(self.epochs)):
            perm = rng.permutation(n)
            W_new, b_new = W.copy(), b.copy()
            for start in range(0, n, bs):
                batch = perm[start:start + bs]
                Zb, Yb = Z[batch], Y[batch]
                active = (Yb * (Zb @ W_new.T + b_new)) < 1.0
                coef = active * Yb
                eta = shrink * eta0 / (1.0 + 2.0 * lam * eta0 * t)
                W_new -= eta * (2.0 * lam * W_new - coef.T @ Zb / len(batch))
                b_new += eta * coef.sum(axis=0) / len(batch)
                t += 1
            value = self._objective(Z, Y, W_new, b_new, lam)
            if value <= current:
                W, b, current = W_new, b_new, value
            else:
                shrink *= 0.5
            history.append(current)
        self.coef_, self.intercept_ = W, b
        self.objective_history_ = history
        return self

    @staticmethod
    def _objective(Z, Y, W, b, lam):
        hinge = np.maximum(0.0, 1.0 - Y * (Z @ W.T + b)).mean(axis=0)
        return float(np.sum(hinge + lam * np.sum(W * W, axis=1)))

    def objective(self, X, y) -> float:
        """Summed one-vs-rest objective of the fitted weights on ``(X, y)``."""
        check_is_fitted(self, "coef_")
        Z = self._standardize(check_array(X, dtype=float)) * self.feature_mask_
        y_enc = np.searchsorted(self.classes_, y)
        Y = -np.ones((len(y_enc), len(self.classes_)))
        Y[np.arange(len(y_enc)), y_enc] = 1.0
        return self._objective(Z, Y, self.coef_, self.intercept_, float(self.lam))

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float)
        return (self._standardize(X) * self.feature_mask_) @ self.coef_.T + self.intercept_

    def predict_proba(self, X):
        m = self.decision_function(X)
        m = m - m.max(axis=1, keepdims=True)
        e = np.exp(m)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]


# ---------------------------------------------------------------- prediction API

@dataclass(frozen=True)
class Prediction:
    label: Any
    class_probabilities: dict


def predict(model, fv) -> Prediction:
    """Classify a single feature vector, checking that its schema matches the model."""
    model_hash = getattr(model, "schema_hash", None)
    if model_hash is not None and fv.schema.hash != model_hash:
        raise IncompatibleModelError(
            f"feature schema {fv.schema.hash} does not match the model's {model_hash}")
    if len(fv.values) != model.n_features_in_:
        raise IncompatibleModelError(
            f"model expects {model.n_features_in_} features, got {len(fv.values)}")
    proba = model.predict_proba(np.asarray(fv.values)[None, :])[0]
    label = model.classes_[int(np.argmax(proba))]
    return Prediction(_plain(label), {_plain(c): float(p) for c, p in zip(model.classes_, proba)})


def _plain(v):
    return v.item() if isinstance(v, np.generic) else v


# ---------------------------------------------------------------- cross-validation

@dataclass
class CvPlan:
    """Fold assignment that keeps every group (sequence id) inside a single fold."""

    fold_of: np.ndarray
    groups: np.ndarray
    k: int = 3

    @classmethod
    def grouped(cls, groups, y=None, k: int = 3, seed: int = 0) -> "CvPlan":
        """Assign whole groups to ``k`` folds.

        When labels are given, the groups of each class are dealt round-robin
        over the folds (in a seeded shuffle) so every fold sees every class
        whenever the class has at least ``k`` groups.
        """
        groups = np.asarray(groups, dtype=object)
        uniq = sorted(set(groups.tolist()), key=str)
        if len(uniq) < k:
            raise ValueError(f"need at least {k} groups for {k}-fold CV, got {len(uniq)}")
        rng = np.random.default_rng(seed)
        if y is None:
            strata = {None: uniq}
        else:
            y = np.asarray(y, dtype=object)
            label_of = {}
            for g in uniq:
                labels, counts = np.unique(y[groups == g].astype(str), return_counts=True)
                label_of[g] = labels[np.argmax(counts)]
            strata = {}
            for g in uniq:
                strata.setdefault(label_of[g], []).append(g)
        fold_of_group = {}
        load = np.zeros(k)
        size = {g: int(np.sum(groups == g)) for g in uniq}
        for key in sorted(strata, key=str):
            members = [strata[key][i] for i in rng.permutation(len(strata[key]))]
            # start each stratum on the currently lightest folds
            folds = list(np.argsort(load, kind="stable"))
            for i, g in enumerate(members):
                f = int(folds[i % k])
                fold_of_group[g] = f
                load[f] += size[g]
        fold_of = np.array([fold_of_group[g] for g in groups.tolist()], dtype=int)
        return cls(fold_of, groups, k)

    def splits(self):
        idx = np.arange(len(self.fold_of))
        for f in range(self.k):
            yield idx[self.fold_of != f], idx[self.fold_of == f]

    def check(self) -> None:
        for g in set(self.groups.tolist()):
            if len(set(self.fold_of[self.groups == g].tolist())) != 1:
                raise AssertionError(f"group {g!r} straddles folds")


@dataclass
class GridResult:
    best_params: dict | None
    best_score: float
    cells: list = field(default_factory=list)

    def table(self) -> list[dict]:
        rows = []
        for c in self.cells:
            row = dict(c["params"])
            row.update(mean_accuracy=c["mean"], status=c["status"])
            for i, s in enumerate(c["fold_scores"]):
                row[f"fold{i}"] = s
            rows.append(row)
        return rows


def grid_cells(grid: Mapping[str, Sequence]) -> list[dict]:
    keys = list(grid)
    if not keys:
        return [{}]
    return [dict(zip(keys, values)) for values in itertools.product(*(grid[k] for k in keys))]


def _evaluate_cell(estimator, params, X, y, splits):
    scores = []
    try:
        for train, val in splits:
            model = clone(estimator).set_params(**params)
            model.fit(X[train], y[train])
            scores.append(float(np.mean(model.predict(X[val]) == y[val])))
    except Exception as exc:  # a failing cell is reported, not fatal
        return {"params": params, "fold_scores": scores, "mean": float("nan"),
                "status": f"failed: {type(exc).__name__}: {exc}"}
    return {"params": params, "fold_scores": scores, "mean": float(np.mean(scores)), "status": "ok"}


def grid_search_cv(estimator, X, y, grid: Mapping[str, Sequence], plan: CvPlan,
                   n_jobs: int = 1) -> GridResult:
    """Evaluate every cell of ``grid`` on the same folds; best mean validation
    accuracy wins, earlier cells win ties."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    cells = grid_cells(grid)
    if not cells:
        raise ValueError("empty parameter grid")
    splits = list(plan.splits())
    if n_jobs == 1:
        results = [_evaluate_cell(estimator, p, X, y, splits) for p in cells]
    else:
        results = Parallel(n_jobs=n_jobs)(delayed(_evaluate_cell)(estimator, p, X, y, splits)
                                          for p in cells)
    best, best_score = None, -np.inf
    for r in results:
        if r["status"] != "ok":
            warnings.warn(f"grid cell {r['params']} {r['status']}", RuntimeWarning, stacklevel=2)
            continue
        if r["mean"] > best_score:
            best, best_score = r["params"], r["mean"]
    return GridResult(best, float(best_score), results)


def cross_val_predict(estimator, X, y, plan: CvPlan) -> np.ndarray:
    """Out-of-fold predictions for every sample."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    pred = np.empty(len(y), dtype=y.dtype)
    for train, val in plan.splits():
        model = clone(estimator).fit(X[train], y[train])
        pred[val] = model.predict(X[val])
    return pred


# ---------------------------------------------------------------- serialization

_MODEL_TYPES = {"random_forest": RandomForestClassifier, "decision_tree": DecisionTreeClassifier,
                "linear_svm": LinearSVMClassifier}


def _model_type(model) -> str:
    for name, cls in _MODEL_TYPES.items():
        if type(model) is cls:
            return name
    raise TypeError(f"cannot serialize {type(model).__name__}")


def _json_value(v):
    if isinstance(v, np.generic):
        return v.item()
    return v


def model_to_json(model) -> str:
    """Self-describing JSON document: a header followed by the payload.

    Layout::

        {"format": "lmaemotion-model", "version": 1, "model_type": ...,
         "schema_hash": ..., "hyperparams": {...}, "seed": ...,
         "classes": [...], "n_features": ..., "payload": {...}}

    Forest payload: ``{"trees": [{"feature", "threshold", "left", "right",
    "value"}, ...]}``; SVM payload: ``{"coef", "intercept", "mean", "scale",
    "feature_mask"}``.  Floats are written with ``repr`` precision so the
    round trip is exact.
    """
    kind = _model_type(model)
    params = {k: _json_value(v) for k, v in model.get_params().items()
              if k not in ("schema_hash", "n_jobs")}
    doc = {"format": MODEL_FORMAT, "version": MODEL_VERSION, "model_type": kind,
           "schema_hash": model.schema_hash, "hyperparams": params,
           "seed": _json_value(model.random_state),
           "classes": [_json_value(c) for c in model.classes_],
           "n_features": int(model.n_features_in_)}
    if kind == "random_forest":
        doc["payload"] = {"trees": [t.to_dict() for t in model.trees_]}
    elif kind == "decision_tree":
        doc["payload"] = {"trees": [model.tree_.to_dict()]}
    else:
        doc["payload"] = {"coef": model.coef_.tolist(), "intercept": model.intercept_.tolist(),
                          "mean": model.mean_.tolist(), "scale": model.scale_.tolist(),
                          "feature_mask": model.feature_mask_.tolist()}
    return json.dumps(doc, separators=(",", ":"))


def model_from_json(text: str):
    doc = json.loads(text)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError("not a serialized lmaemotion model")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model format version {doc.get('version')}")
    cls = _MODEL_TYPES[doc["model_type"]]
    model = cls(**doc["hyperparams"], schema_hash=doc["schema_hash"])
    model.classes_ = np.array(doc["classes"])
    model.n_features_in_ = doc["n_features"]
    payload = doc["payload"]
    if doc["model_type"] == "random_forest":
        model.trees_ = [Tree.from_dict(t) for t in payload["trees"]]
    elif doc["model_type"] == "decision_tree":
        model.tree_ = Tree.from_dict(payload["trees"][0])
    else:
        model.coef_ = np.asarray(payload["coef"], dtype=float)
        model.intercept_ = np.asarray(payload["intercept"], dtype=float)
        model.mean_ = np.asarray(payload["mean"], dtype=float)
        model.scale_ = np.asarray(payload["scale"], dtype=float)
        model.feature_mask_ = np.asarray(payload["feature_mask"], dtype=bool)
    return model


def save_model(model, path: str | os.PathLike) -> Path:
    return atomic_write_text(path, model_to_json(model))


def load_model(path: str | os.PathLike):
    return model_from_json(Path(path).read_text(encoding="utf-8"))

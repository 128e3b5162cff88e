"""Shapley-value attributions.

* :func:`tree_shap` - exact path-dependent Shapley values for CART trees and
  forests, polynomial in tree size.
* :func:`kernel_shap` - weighted least-squares estimate over feature
  coalitions for any model, with missing features imputed from a background
  set.
* :func:`brute_force_shapley` - enumeration of every coalition; the test
  oracle for the two above.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Sequence

import numpy as np
from numba import njit

from .classifiers import DecisionTreeClassifier, IncompatibleModelError, RandomForestClassifier, Tree
from .io_utils import atomic_write_text

MAX_BRUTE_FORCE_FEATURES = 12


class ShapleyError(ValueError):
    pass


@dataclass
class Attribution:
    base_value: float
    phi: np.ndarray
    predicted_class: object = None
    sample_id: object = None
    output: float = float("nan")

    @property
    def total(self) -> float:
        return float(self.base_value + np.sum(self.phi))


# ---------------------------------------------------------------- tree SHAP

@njit(cache=True)
def _extend(feat, zero, one, pw, off, depth, pz, po, pi):
    feat[off + depth] = pi
    zero[off + depth] = pz
    one[off + depth] = po
    pw[off + depth] = 1.0 if depth == 0 else 0.0
    for i in range(depth - 1, -1, -1):
        pw[off + i + 1] += po * pw[off + i] * (i + 1) / (depth + 1)
        pw[off + i] = pz * pw[off + i] * (depth - i) / (depth + 1)


@njit(cache=True)
def _unwind(feat, zero, one, pw, off, depth, index):
    o = one[off + index]
    z = zero[off + index]
    nxt = pw[off + depth]
    for i in range(depth - 1, -1, -1):
        if o != 0.0:
            tmp = pw[off + i]
            pw[off + i] = nxt * (depth + 1) / ((i + 1) * o)
            nxt = tmp - pw[off + i] * z * (depth - i) / (depth + 1)
        else:
            pw[off + i] = pw[off + i] * (depth + 1) / (z * (depth - i))
    for i in range(index, depth):
        feat[off + i] = feat[off + i + 1]
        zero[off + i] = zero[off + i + 1]
        one[off + i] = one[off + i + 1]


@njit(cache=True)
def _unwound_sum(zero, one, pw, off, depth, index):
    o = one[off + index]
    z = zero[off + index]
    nxt = pw[off + depth]
    total = 0.0
    for i in range(depth - 1, -1, -1):
        if o != 0.0:
            tmp = nxt * (depth + 1) / ((i + 1) * o)
            total += tmp
            nxt = pw[off + i] - tmp * z * (depth - i) / (depth + 1)
        else:
            total += (pw[off + i] / z) / ((depth - i) / (depth + 1))
    return total


@njit(cache=True)
def _recurse(node, x, feature, threshold, left, right, cover, values, phi,
             feat, zero, one, pw, off, depth, pz, po, pi):
    # copy the parent's path into a fresh segment so siblings do not clash
    new_off = off + depth + 1
    for i in range(depth + 1 if off >= 0 else 0):
        feat[new_off + i] = feat[off + i]
        zero[new_off + i] = zero[off + i]
        one[new_off + i] = one[off + i]
        pw[new_off + i] = pw[off + i]
    off = new_off
    _extend(feat, zero, one, pw, off, depth, pz, po, pi)
    f = feature[node]
    if f < 0:
        for i in range(1, depth + 1):
            w = _unwound_sum(zero, one, pw, off, depth, i)
            scale = w * (one[off + i] - zero[off + i])
            for c in range(values.shape[1]):
                phi[feat[off + i], c] += scale * values[node, c]
        return
    if x[f] < threshold[node]:
        hot, cold = left[node], right[node]
    else:
        hot, cold = right[node], left[node]
    iz = 1.0
    io = 1.0
    k = 0
    while k <= depth:
        if feat[off + k] == f:
            break
        k += 1
    if k <= depth:
        iz = zero[off + k]
        io = one[off + k]
        _unwind(feat, zero, one, pw, off, depth, k)
        depth -= 1
    _recurse(hot, x, feature, threshold, left, right, cover, values, phi,
             feat, zero, one, pw, off, depth + 1, cover[hot] / cover[node] * iz, io, f)
    _recurse(cold, x, feature, threshold, left, right, cover, values, phi,
             feat, zero, one, pw, off, depth + 1, cover[cold] / cover[node] * iz, 0.0, f)


def tree_shap_values(tree: Tree, x: np.ndarray, n_features: int) -> tuple[np.ndarray, np.ndarray]:
    """Path-dependent Shapley values of every class probability for one tree.

    Returns ``(phi, base)`` with ``phi`` of shape (n_features, n_classes) and
    ``base`` the cover-weighted mean leaf probability per class.
    """
    values = tree.leaf_probabilities
    cover = tree.cover
    phi = np.zeros((n_features, values.shape[1]))
    leaves = tree.feature < 0
    base = (cover[leaves] @ values[leaves]) / cover[0]
    if tree.n_nodes > 1:
        d = tree.depth() + 2
        size = (d * (d + 1)) // 2 + d + 1
        feat = np.full(size, -1, dtype=np.int64)
        zero = np.zeros(size)
        one = np.zeros(size)
        pw = np.zeros(size)
        _recurse(0, np.ascontiguousarray(x, dtype=float), tree.feature.astype(np.int64),
                 tree.threshold, tree.left.astype(np.int64), tree.right.astype(np.int64),
                 cover, values, phi, feat, zero, one, pw, -1, 0, 1.0, 1.0, -1)
    return phi, base


def _trees_of(model) -> list[Tree]:
    if isinstance(model, RandomForestClassifier):
        return model.trees_
    if isinstance(model, DecisionTreeClassifier):
        return [model.tree_]
    if isinstance(model, Tree):
        return [model]
    raise TypeError(f"tree_shap does not support {type(model).__name__}")


def _class_index(model, cls) -> int:
    classes = getattr(model, "classes_", None)
    if classes is None:
        return int(cls)
    hits = np.flatnonzero(classes == cls)
    if hits.size:
        return int(hits[0])
    if isinstance(cls, (int, np.integer)) and 0 <= cls < len(classes):
        return int(cls)
    raise KeyError(f"unknown class {cls!r}")


def _unpack(model, fv):
    values = getattr(fv, "values", fv)
    schema = getattr(fv, "schema", None)
    model_hash = getattr(model, "schema_hash", None)
    if schema is not None and model_hash is not None and schema.hash != model_hash:
        raise IncompatibleModelError(
            f"feature schema {schema.hash} does not match the model's {model_hash}")
    return np.asarray(values, dtype=float)


def tree_shap_all(model, fv) -> tuple[np.ndarray, np.ndarray]:
    """Per-class attributions of a tree model: ``phi`` (n_features, n_classes), ``base`` (n_classes,).

    A forest's attribution is the mean of its trees' attributions.
    """
    x = _unpack(model, fv)
    trees = _trees_of(model)
    phi = np.zeros((len(x), trees[0].n_classes))
    base = np.zeros(trees[0].n_classes)
    for tree in trees:
        p, b = tree_shap_values(tree, x, len(x))
        phi += p
        base += b
    return phi / len(trees), base / len(trees)


def tree_shap(model, fv, cls=None, sample_id=None) -> Attribution:
    """Exact path-dependent Shapley attribution of one class probability.

    ``cls`` defaults to the predicted class.
    """
    x = _unpack(model, fv)
    phi, base = tree_shap_all(model, x)
    trees = _trees_of(model)
    proba = np.mean([t.predict_proba(x[None, :])[0] for t in trees], axis=0)
    k = int(np.argmax(proba)) if cls is None else _class_index(model, cls)
    label = model.classes_[k] if hasattr(model, "classes_") else k
    if sample_id is None and hasattr(fv, "window_origin"):
        sample_id = fv.window_origin
    return Attribution(float(base[k]), phi[:, k].copy(), label, sample_id, float(proba[k]))


# ---------------------------------------------------------------- value functions

def tree_path_value_function(model, x, cls: int = 0) -> Callable[[np.ndarray], float]:
    """Coalition value for the path-dependent tree game.

    For a mask of known features, walk the tree following ``x`` on known
    features and averaging children by training cover on unknown ones.
    """
    x = np.asarray(x, dtype=float)
    trees = _trees_of(model)
    k = _class_index(model, cls) if hasattr(model, "classes_") else int(cls)

    def expected(tree, node, mask):
        f = tree.feature[node]
        if f < 0:
            return tree.leaf_probabilities[node, k]
        l, r = tree.left[node], tree.right[node]
        if mask[f]:
            return expected(tree, l if x[f] < tree.threshold[node] else r, mask)
        cov = tree.cover
        return (cov[l] * expected(tree, l, mask) + cov[r] * expected(tree, r, mask)) / cov[node]

    def value(mask):
        return float(np.mean([expected(t, 0, mask) for t in trees]))

    return value


def background_value_function(model_fn: Callable, x, background) -> Callable[[np.ndarray], float]:
    """Coalition value with absent features drawn from each background row."""
    x = np.asarray(x, dtype=float)
    bg = np.atleast_2d(np.asarray(background, dtype=float))

    def value(mask):
        rows = np.where(mask[None, :], x[None, :], bg)
        return float(np.mean(model_fn(rows)))

    return value


def shapley_from_values(value_fn: Callable[[np.ndarray], float], n_features: int,
                        features: Sequence[int] | None = None) -> tuple[float, np.ndarray, float]:
    """Exact Shapley values of ``features`` by enumerating all coalitions.

    Features outside ``features`` stay present in every coalition.  Returns
    ``(base, phi, full)`` where ``base`` is the value with every listed
    feature absent and ``full`` the value with all present.
    """
    features = list(range(n_features)) if features is None else [int(f) for f in features]
    k = len(features)
    if k > MAX_BRUTE_FORCE_FEATURES:
        raise ShapleyError(f"brute-force Shapley is limited to {MAX_BRUTE_FORCE_FEATURES} "
                           f"features, got {k}")
    fixed = np.ones(n_features, dtype=bool)
    fixed[features] = False
    v = np.empty(1 << k)
    for code in range(1 << k):
        mask = fixed.copy()
        for b in range(k):
            if code >> b & 1:
                mask[features[b]] = True
        v[code] = value_fn(mask)
    fact = [math.factorial(i) for i in range(k + 1)]
    phi = np.zeros(n_features)
    for b, f in enumerate(features):
        bit = 1 << b
        total = 0.0
        for code in range(1 << k):
            if code & bit:
                continue
            s = bin(code).count("1")
            total += fact[s] * fact[k - s - 1] / fact[k] * (v[code | bit] - v[code])
        phi[f] = total
    return float(v[0]), phi, float(v[-1])


def brute_force_shapley(model_fn: Callable | None, fv, background=None,
                        features: Sequence[int] | None = None, *,
                        value_function: Callable | None = None) -> Attribution:
    """Shapley values by full coalition enumeration (at most 12 features).

    Pass either ``model_fn`` (maps an (n, d) array to n outputs) together
    with a background set, or a ready-made ``value_function``.
    """
    x = np.asarray(getattr(fv, "values", fv), dtype=float)
    if value_function is None:
        if model_fn is None or background is None:
            raise ShapleyError("need a model function and background, or a value function")
        value_function = background_value_function(model_fn, x, background)
    base, phi, full = shapley_from_values(value_function, len(x), features)
    return Attribution(base, phi, None, getattr(fv, "window_origin", None), full)


# ---------------------------------------------------------------- kernel SHAP

def shapley_kernel_weight(n_features: int, size: int) -> float:
    if size == 0 or size == n_features:
        return math.inf
    return (n_features - 1) / (math.comb(n_features, size) * size * (n_features - size))


def _coalitions(n_features: int, n_samples: int, rng: np.random.Generator):
    """Coalition masks and their regression weights.

    Enumerates every proper non-empty coalition when the budget allows;
    otherwise samples sizes in proportion to the kernel mass of each size
    and pairs every draw with its complement.
    """
    M = n_features
    if n_samples >= (1 << M) - 2:
        masks, weights = [], []
        for s in range(1, M):
            w = shapley_kernel_weight(M, s)
            for combo in combinations(range(M), s):
                m = np.zeros(M, dtype=bool)
                m[list(combo)] = True
                masks.append(m)
                weights.append(w)
        return np.array(masks), np.array(weights)
    sizes = np.arange(1, M)
    mass = (M - 1) / (sizes * (M - sizes))
    mass /= mass.sum()
    counts: dict[bytes, list] = {}
    for _ in range(n_samples // 2):
        s = int(rng.choice(sizes, p=mass))
        m = np.zeros(M, dtype=bool)
        m[rng.choice(M, size=s, replace=False)] = True
        for mm in (m, ~m):
            key = mm.tobytes()
            if key in counts:
                counts[key][1] += 1.0
            else:
                counts[key] = [mm, 1.0]
    keys = sorted(counts)
    return np.array([counts[k][0] for k in keys]), np.array([counts[k][1] for k in keys])


def _constrained_wls(Z, y, w, total):
    """Minimise sum w (y - Z phi)^2 subject to sum(phi) == total."""
    last = Z[:, -1]
    A = Z[:, :-1] - last[:, None]
    b = y - last * total
    lhs = (A * w[:, None]).T @ A
    rhs = (A * w[:, None]).T @ b
    if np.linalg.matrix_rank(lhs) < lhs.shape[0]:
        raise np.linalg.LinAlgError("singular coalition system")
    head = np.linalg.solve(lhs, rhs)
    return np.append(head, total - head.sum())


def kernel_shap(model_fn: Callable, fv, background, n_samples: int | None = None,
                seed: int = 0, sample_id=None, predicted_class=None) -> Attribution:
    """Kernel SHAP with exact additivity: ``base + sum(phi) == f(x)``."""
    x = np.asarray(getattr(fv, "values", fv), dtype=float)
    bg = np.atleast_2d(np.asarray(background, dtype=float))
    if bg.shape[0] == 0:
        raise ShapleyError("background set is empty")
    M = len(x)
    n_samples = n_samples if n_samples is not None else max(2 * M + 2, 2048)
    if n_samples < 2 * M + 2:
        raise ShapleyError(f"n_samples must be at least {2 * M + 2}")
    base = float(np.mean(model_fn(bg)))
    fx = float(np.asarray(model_fn(x[None, :])).ravel()[0])
    if M == 1:
        return Attribution(base, np.array([fx - base]), predicted_class, sample_id, fx)
    rng = np.random.default_rng(seed)
    budget = n_samples
    for attempt in range(2):
        masks, weights = _coalitions(M, budget, rng)
        rows = np.where(masks[:, None, :], x[None, None, :], bg[None, :, :]).reshape(-1, M)
        y = np.asarray(model_fn(rows), dtype=float).reshape(len(masks), bg.shape[0]).mean(axis=1)
        try:
            phi = _constrained_wls(masks.astype(float), y - base, weights, fx - base)
            break
        except np.linalg.LinAlgError:
            if attempt == 1:
                raise ShapleyError("coalition regression stayed singular after resampling") from None
            budget *= 2
    return Attribution(base, phi, predicted_class,
                       sample_id if sample_id is not None else getattr(fv, "window_origin", None), fx)


def class_probability_fn(model, cls) -> Callable[[np.ndarray], np.ndarray]:
    k = _class_index(model, cls)
    return lambda X: model.predict_proba(X)[:, k]


# ---------------------------------------------------------------- background

def kmedoids_background(X, k: int = 16, seed: int = 0, max_rows: int = 1000,
                        max_iter: int = 50) -> np.ndarray:
    """``k`` representative rows of ``X`` picked by seeded k-medoids on
    standardised features."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n <= k:
        return X.copy()
    rng = np.random.default_rng(seed)
    pool = np.sort(rng.choice(n, size=min(n, max_rows), replace=False))
    Z = X[pool]
    std = Z.std(axis=0)
    Z = (Z - Z.mean(axis=0)) / np.where(std > 0, std, 1.0)
    sq = np.einsum("ij,ij->i", Z, Z)
    D = np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2.0 * Z @ Z.T, 0.0))
    medoids = [int(rng.integers(len(pool)))]
    for _ in range(1, k):
        d = D[:, medoids].min(axis=1) ** 2
        if d.sum() == 0:
            remaining = np.setdiff1d(np.arange(len(pool)), medoids)
            medoids.append(int(remaining[0]))
            continue
        medoids.append(int(rng.choice(len(pool), p=d / d.sum())))
    medoids = np.array(medoids)
    for _ in range(max_iter):
        assign = np.argmin(D[:, medoids], axis=1)
        new = medoids.copy()
        for c in range(k):
            members = np.flatnonzero(assign == c)
            if members.size:
                new[c] = members[np.argmin(D[np.ix_(members, members)].sum(axis=1))]
        if np.array_equal(new, medoids):
            break
        medoids = new
    return X[pool[np.sort(medoids)]]


# ---------------------------------------------------------------- summaries

@dataclass
class SummaryTable:
    feature_names: list
    mean_abs: np.ndarray
    mean: np.ndarray
    ranking: np.ndarray
    per_class: dict = field(default_factory=dict)

    def top(self, k: int = 10) -> list[tuple[str, float]]:
        return [(self.feature_names[i], float(self.mean_abs[i])) for i in self.ranking[:k]]

    def to_csv(self, path: str | os.PathLike | None = None) -> str:
        classes = sorted(self.per_class, key=str)
        lines = ["rank,feature,mean_abs_phi,mean_phi" + "".join(f",mean_abs_phi[{c}]" for c in classes)]
        for r, i in enumerate(self.ranking, start=1):
            extra = "".join(f",{float(self.per_class[c][i])!r}" for c in classes)
            lines.append(f"{r},{self.feature_names[i]},{float(self.mean_abs[i])!r},"
                         f"{float(self.mean[i])!r}{extra}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            atomic_write_text(path, text)
        return text


def _rank(mean_abs: np.ndarray) -> np.ndarray:
    # descending by value, ascending index on ties
    return np.lexsort((np.arange(len(mean_abs)), -mean_abs))


def summarize(attrs: Sequence[Attribution], feature_names: Sequence[str] | None = None) -> SummaryTable:
    if not attrs:
        raise ShapleyError("nothing to summarize")
    P = np.array([a.phi for a in attrs])
    names = list(feature_names) if feature_names is not None else [f"f{i}" for i in range(P.shape[1])]
    if len(names) != P.shape[1]:
        raise ShapleyError("feature names do not match the attribution length")
    mean_abs = np.abs(P).mean(axis=0)
    per_class = {}
    labels = [a.predicted_class for a in attrs]
    for c in sorted(set(labels), key=str):
        rows = [i for i, lab in enumerate(labels) if lab == c]
        per_class[c] = np.abs(P[rows]).mean(axis=0)
    return SummaryTable(names, mean_abs, P.mean(axis=0), _rank(mean_abs), per_class)


def attributions_csv(attrs: Sequence[Attribution], feature_names: Sequence[str],
                     path: str | os.PathLike | None = None) -> str:
    lines = ["sample_id," + ",".join(feature_names) + ",base_value,predicted_class"]
    for a in attrs:
        sid = a.sample_id
        if isinstance(sid, tuple):
            sid = ":".join(str(s) for s in sid)
        lines.append(f"{'' if sid is None else sid}," + ",".join(repr(float(v)) for v in a.phi)
                     + f",{a.base_value!r},{'' if a.predicted_class is None else a.predicted_class}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        atomic_write_text(path, text)
    return text


def summary_svg(attrs: Sequence[Attribution], X: np.ndarray, feature_names: Sequence[str],
                top_k: int = 10, path: str | os.PathLike | None = None) -> str:
    """Beeswarm-style plot: one row per top feature, one dot per sample at its
    Shapley value, coloured from blue (low feature value) to red (high)."""
    table = summarize(attrs, feature_names)
    idx = table.ranking[:top_k]
    P = np.array([a.phi for a in attrs])
    X = np.asarray(X, dtype=float)
    width, row_h, left, right_pad, top_pad = 720, 28, 240, 30, 30
    height = top_pad * 2 + row_h * len(idx)
    span = float(np.max(np.abs(P[:, idx]))) if P.size else 1.0
    span = span if span > 0 else 1.0
    plot_w = width - left - right_pad

    def px(v):
        return left + (v + span) / (2 * span) * plot_w

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'font-family="sans-serif" font-size="12">',
             f'<line x1="{px(0):.1f}" y1="{top_pad - 10}" x2="{px(0):.1f}" y2="{height - top_pad + 10}" '
             'stroke="#999"/>']
    rng = np.random.default_rng(0)
    for r, f in enumerate(idx):
        y = top_pad + r * row_h + row_h / 2
        parts.append(f'<text x="{left - 8}" y="{y + 4:.1f}" text-anchor="end">{feature_names[f]}</text>')
        col = X[:, f]
        lo, hi = float(col.min()), float(col.max())
        for i in range(len(P)):
            t = 0.5 if hi == lo else (col[i] - lo) / (hi - lo)
            color = f"rgb({int(255 * t)},60,{int(255 * (1 - t))})"
            jitter = (rng.random() - 0.5) * row_h * 0.6
            parts.append(f'<circle cx="{px(P[i, f]):.1f}" cy="{y + jitter:.1f}" r="2.5" '
                         f'fill="{color}" fill-opacity="0.7"/>')
    parts.append(f'<text x="{left + plot_w / 2:.1f}" y="{height - 6}" text-anchor="middle">'
                 'Shapley value (impact on class probability)</text>')
    parts.append("</svg>")
    text = "\n".join(parts) + "\n"
    if path is not None:
        atomic_write_text(path, text)
    return text

"""Gradient-boosted regression trees with scalar or vector leaves.

Squared-error boosting: every round fits one tree to the current residuals.
With several outputs a single tree is shared by all of them, its split gain is
the variance reduction summed over the outputs and each leaf stores the
per-output residual mean.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

MODEL_FORMAT = "gradectl-gbdt"
MODEL_VERSION = 1


class RegressionTree:
    """Flat-array binary tree. ``feature[i] == -1`` marks a leaf."""

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.intp)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.intp)
        self.right = np.asarray(right, dtype=np.intp)
        self.value = np.asarray(value, dtype=float).reshape(len(self.feature), -1)

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        """Number of split levels (a lone leaf has depth 0)."""
        depths = np.zeros(self.node_count, dtype=int)
        for i in range(self.node_count):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.intp)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            n = node[rows]
            go_left = X[rows, self.feature[n]] <= self.threshold[n]
            node[rows] = np.where(go_left, self.left[n], self.right[n])
            active[rows] = self.feature[node[rows]] >= 0
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self, i: int = 0) -> dict:
        if self.feature[i] < 0:
            return {"value": self.value[i].tolist()}
        return {
            "feature": int(self.feature[i]),
            "threshold": float(self.threshold[i]),
            "left": self.to_dict(int(self.left[i])),
            "right": self.to_dict(int(self.right[i])),
        }

    @classmethod
    def from_dict(cls, root: dict) -> "RegressionTree":
        feature, threshold, left, right, value = [], [], [], [], []

        def add(node):
            i = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(None)
            if "value" in node:
                value[i] = node["value"]
                return i
            feature[i] = node["feature"]
            threshold[i] = node["threshold"]
            left[i] = add(node["left"])
            right[i] = add(node["right"])
            value[i] = [0.0] * len(value[left[i]])
            return i

        add(root)
        return cls(feature, threshold, left, right, value)


def _best_split(X, residual, orders, min_leaf):
    """Exact greedy search; returns ``(gain, feature, threshold)`` or ``None``.

    ``orders[f]`` lists the node's sample indices sorted by feature ``f``.
    Ties go to the lowest feature index, then the lowest threshold.
    """
    n = len(orders[0])
    if n < 2 * min_leaf:
        return None
    total = residual[orders[0]].sum(axis=0)
    parent = float(total @ total) / n
    left_n = np.arange(min_leaf, n - min_leaf + 1)
    best = None
    for f, order in enumerate(orders):
        xs = X[order, f]
        # candidate split after position i-1 (left gets the first i samples)
        valid = xs[left_n - 1] < xs[np.minimum(left_n, n - 1)]
        if not valid.any():
            continue
        cum = np.cumsum(residual[order], axis=0)[left_n - 1]
        right = total - cum
        gain = (np.einsum("ij,ij->i", cum, cum) / left_n
                + np.einsum("ij,ij->i", right, right) / (n - left_n) - parent)
        gain[~valid] = -np.inf
        k = int(np.argmax(gain))
        g = gain[k]
        if g > 0 and (best is None or g > best[0]):
            i = left_n[k]
            lo, hi = xs[i - 1], xs[i]
            thr = lo + (hi - lo) / 2.0
            if not lo <= thr < hi:
                thr = lo
            best = (float(g), f, float(thr))
    return best


def fit_tree(X, residual, orders, max_depth, min_leaf) -> RegressionTree:
    feature, threshold, left, right, value = [], [], [], [], []

    def grow(orders, depth):
        i = len(feature)
        idx = orders[0]
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(residual[idx].mean(axis=0))
        if depth >= max_depth:
            return i
        split = _best_split(X, residual, orders, min_leaf)
        if split is None:
            return i
        _, f, thr = split
        goes_left = X[:, f] <= thr
        feature[i] = f
        threshold[i] = thr
        left[i] = grow([o[goes_left[o]] for o in orders], depth + 1)
        right[i] = grow([o[~goes_left[o]] for o in orders], depth + 1)
        return i

    grow(orders, 0)
    return RegressionTree(feature, threshold, left, right, value)


class GradientBoostedTrees(RegressorMixin, BaseEstimator):
    """Squared-error gradient boosting over exact-greedy regression trees.

    Parameters
    ----------
    n_estimators : int
        Maximum number of boosting rounds.
    learning_rate : float
        Shrinkage applied to every tree.
    max_depth : int
        Maximum number of split levels per tree.
    min_samples_leaf : int
        Minimum training samples in each leaf.
    validation_fraction : float or None
        Share of the data held out for early stopping. ``None`` or ``0``
        trains on everything for exactly ``n_estimators`` rounds.
    n_iter_no_change : int or None
        Patience, in rounds, of early stopping on the held-out MSE.
    random_state : int or None
        Seed of the held-out split.
    """

    def __init__(
        self,
        n_estimators=500,
        learning_rate=0.1,
        max_depth=6,
        min_samples_leaf=5,
        validation_fraction=0.1,
        n_iter_no_change=25,
        random_state=None,
    ):
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.validation_fraction = validation_fraction
        self.n_iter_no_change = n_iter_no_change
        self.random_state = random_state

    def _validate_params(self):
        if int(self.n_estimators) < 0:
            raise ValueError("n_estimators must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if int(self.max_depth) < 0:
            raise ValueError("max_depth must be >= 0")
        if int(self.min_samples_leaf) < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.validation_fraction and not 0 < self.validation_fraction < 1:
            raise ValueError("validation_fraction must be in (0, 1)")

    def _split(self, n):
        frac = self.validation_fraction
        if not frac or not self.n_iter_no_change:
            return np.arange(n), None
        n_val = int(round(n * frac))
        if n_val < 1 or n - n_val < 2:
            return np.arange(n), None
        perm = np.random.default_rng(self.random_state).permutation(n)
        return np.sort(perm[n_val:]), np.sort(perm[:n_val])

    def fit(self, X, y, feature_names=None):
        self._validate_params()
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True, dtype=float)
        if len(X) < 2:
            raise ValueError("need at least 2 samples")
        Y = y.reshape(len(y), -1).astype(float)
        self._y_ndim = y.ndim
        self.n_features_in_ = X.shape[1]
        self.output_dims_ = Y.shape[1]
        if feature_names is None:
            feature_names = [f"x{i}" for i in range(X.shape[1])]
        if len(feature_names) != X.shape[1]:
            raise ValueError("feature_names length does not match X")
        self.feature_names_ = list(feature_names)

        train, val = self._split(len(X))
        Xt, Yt = X[train], Y[train]
        self.base_prediction_ = Yt.mean(axis=0)
        pred = np.tile(self.base_prediction_, (len(Xt), 1))
        orders = [np.argsort(Xt[:, f], kind="stable") for f in range(X.shape[1])]
        self.train_score_ = [float(np.mean((Yt - pred) ** 2))]
        self.validation_score_ = []
        if val is not None:
            Xv, Yv = X[val], Y[val]
            pred_v = np.tile(self.base_prediction_, (len(Xv), 1))
            self.validation_score_.append(float(np.mean((Yv - pred_v) ** 2)))
            best, since_best = 0, 0

        trees = []
        for _ in range(int(self.n_estimators)):
            tree = fit_tree(Xt, Yt - pred, orders, int(self.max_depth), int(self.min_samples_leaf))
            trees.append(tree)
            pred = pred + self.learning_rate * tree.predict(Xt)
            self.train_score_.append(float(np.mean((Yt - pred) ** 2)))
            if val is not None:
                pred_v = pred_v + self.learning_rate * tree.predict(Xv)
                score = float(np.mean((Yv - pred_v) ** 2))
                self.validation_score_.append(score)
                if score < self.validation_score_[best]:
                    best, since_best = len(trees), 0
                else:
                    since_best += 1
                    if since_best >= self.n_iter_no_change:
                        break
        if val is not None:
            trees = trees[:best]
            self.train_score_ = self.train_score_[: best + 1]
        self.trees_ = trees
        return self

    @property
    def n_trees_(self) -> int:
        check_is_fitted(self, "trees_")
        return len(self.trees_)

    def _raw(self, X):
        check_is_fitted(self, "trees_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, model expects {self.n_features_in_}")
        return X

    def _shape(self, out):
        return out[:, 0] if self._y_ndim == 1 else out

    def predict(self, X):
        X = self._raw(X)
        out = np.tile(self.base_prediction_, (len(X), 1))
        for tree in self.trees_:
            out += self.learning_rate * tree.predict(X)
        return self._shape(out)

    def staged_predict(self, X):
        """Yield predictions after 0, 1, ..., n_trees_ rounds."""
        X = self._raw(X)
        out = np.tile(self.base_prediction_, (len(X), 1))
        yield self._shape(out.copy())
        for tree in self.trees_:
            out += self.learning_rate * tree.predict(X)
            yield self._shape(out.copy())

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        check_is_fitted(self, "trees_")
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "params": self.get_params(),
            "feature_schema": self.feature_names_,
            "output_dims": self.output_dims_,
            "y_ndim": self._y_ndim,
            "base_prediction": self.base_prediction_.tolist(),
            "learning_rate": self.learning_rate,
            "max_depth": self.max_depth,
            "trees": [t.to_dict() for t in self.trees_],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "GradientBoostedTrees":
        if obj.get("format") != MODEL_FORMAT:
            raise ValueError("not a serialized gradient-boosted tree model")
        if obj.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {obj.get('version')!r}")
        model = cls(**obj["params"])
        model.feature_names_ = list(obj["feature_schema"])
        model.n_features_in_ = len(model.feature_names_)
        model.output_dims_ = int(obj["output_dims"])
        model._y_ndim = int(obj["y_ndim"])
        model.base_prediction_ = np.asarray(obj["base_prediction"], dtype=float)
        model.trees_ = [RegressionTree.from_dict(t) for t in obj["trees"]]
        return model

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "GradientBoostedTrees":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

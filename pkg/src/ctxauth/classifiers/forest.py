"""CART trees with Gini splits and a bagged random forest.

Works for any number of integer class labels: the forest serves both as
the binary authentication model and as the multi-class context identifier.
"""
from __future__ import annotations

import math

import numpy as np


def gini(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    n = counts.sum()
    if n == 0:
        return 0.0
    return float(1.0 - np.sum((counts / n) ** 2))


def _best_split(Xn: np.ndarray, yn: np.ndarray, n_classes: int, feats: np.ndarray):
    """Best Gini split over ``feats``; returns (score, feature, threshold) or None.

    Candidate thresholds are midpoints between consecutive distinct values.
    """
    n = Xn.shape[0]
    sub = Xn[:, feats]
    order = np.argsort(sub, axis=0, kind="stable")
    vals = np.take_along_axis(sub, order, axis=0)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), yn] = 1.0
    left = np.cumsum(onehot[order], axis=0)[:-1]          # (n-1, f, C)
    total = left[-1] + onehot[order[-1]]                  # (f, C)
    right = total[None, :, :] - left
    nl = np.arange(1, n, dtype=np.float64)[:, None]
    nr = n - nl
    score = (nl - np.sum(left ** 2, axis=2) / nl) + (nr - np.sum(right ** 2, axis=2) / nr)
    valid = vals[1:] > vals[:-1]
    if not valid.any():
        return None
    score = np.where(valid, score, np.inf)
    # column-major scan so ties favour the earlier feature, then the earlier cut
    flat = int(np.argmin(score.T))
    fpos, cut = divmod(flat, n - 1)
    lo, hi = vals[cut, fpos], vals[cut + 1, fpos]
    thr = (lo + hi) / 2.0
    if not thr < hi:
        thr = lo
    return float(score[cut, fpos]), int(feats[fpos]), float(thr)


class DecisionTree:
    """Array-backed CART tree; leaves hold a class index."""

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=np.int64)

    @classmethod
    def grow(cls, X, y, n_classes, max_features, rng, min_samples_split=2):
        feature, threshold, left, right, value = [], [], [], [], []

        def new_node():
            for lst, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1), (value, 0)):
                lst.append(v)
            return len(feature) - 1

        d = X.shape[1]
        stack = [(new_node(), np.arange(X.shape[0]))]
        while stack:
            node, idx = stack.pop()
            yn = y[idx]
            counts = np.bincount(yn, minlength=n_classes)
            value[node] = int(np.argmax(counts))
            if len(idx) < min_samples_split or np.count_nonzero(counts) <= 1:
                continue
            Xn = X[idx]
            perm = rng.permutation(d)
            found = _best_split(Xn, yn, n_classes, perm[:max_features])
            # keep drawing features until one can split, like common CART codes
            pos = max_features
            while found is None and pos < d:
                found = _best_split(Xn, yn, n_classes, perm[pos:pos + max_features])
                pos += max_features
            if found is None:
                continue
            _, f, thr = found
            go_left = Xn[:, f] <= thr
            feature[node], threshold[node] = f, thr
            li, ri = new_node(), new_node()
            left[node], right[node] = li, ri
            stack.append((ri, idx[~go_left]))
            stack.append((li, idx[go_left]))
        return cls(feature, threshold, left, right, value)

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                return node
            r = rows[internal]
            n_int = node[internal]
            go_left = X[r, f[internal]] <= self.threshold[n_int]
            node[internal] = np.where(go_left, self.left[n_int], self.right[n_int])

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def to_dict(self):
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "value": self.value.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["feature"], d["threshold"], d["left"], d["right"], d["value"])


def resolve_max_features(spec, d: int) -> int:
    if spec in (None, "sqrt"):
        return max(1, int(math.sqrt(d)))
    if spec == "log2":
        return max(1, int(math.log2(d)))
    return max(1, min(d, int(spec)))


class RandomForest:
    """Bagged CART trees with ``max_features`` candidates per node."""

    def __init__(self, n_trees=100, max_features="sqrt", min_samples_split=2):
        self.n_trees = n_trees
        self.max_features = max_features
        self.min_samples_split = min_samples_split
        self.classes_ = None
        self.trees: list[DecisionTree] = []

    def fit(self, X, y, seed=0):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        n, d = X.shape
        mtry = resolve_max_features(self.max_features, d)
        self.trees = []
        for child in np.random.SeedSequence(seed).spawn(self.n_trees):
            rng = np.random.default_rng(child)
            boot = rng.integers(0, n, n)
            self.trees.append(DecisionTree.grow(X[boot], y_idx[boot], len(self.classes_), mtry,
                                                rng, self.min_samples_split))
        return self

    def vote_fractions(self, X) -> np.ndarray:
        """(n_samples, n_classes) share of trees voting for each class."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        votes = np.zeros((X.shape[0], len(self.classes_)))
        rows = np.arange(X.shape[0])
        for tree in self.trees:
            votes[rows, tree.predict(X)] += 1.0
        return votes / len(self.trees)

    def predict(self, X) -> np.ndarray:
        return self.classes_[np.argmax(self.vote_fractions(X), axis=1)]

    def score(self, X) -> np.ndarray:
        """Share of trees voting for the positive (largest) label."""
        frac = self.vote_fractions(X)
        return frac[:, -1] if len(self.classes_) > 1 else np.full(frac.shape[0], float(self.classes_[0] == 1))

    def to_dict(self):
        return {"n_trees": self.n_trees, "max_features": self.max_features,
                "min_samples_split": self.min_samples_split,
                "classes": self.classes_.tolist(), "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d):
        rf = cls(d["n_trees"], d["max_features"], d["min_samples_split"])
        rf.classes_ = np.asarray(d["classes"])
        rf.trees = [DecisionTree.from_dict(t) for t in d["trees"]]
        return rf

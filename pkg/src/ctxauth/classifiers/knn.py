"""k-nearest-neighbour vote share."""
from __future__ import annotations

import numpy as np


class KNN:
    def __init__(self, k=10):
        self.k = k
        self.X_ = None
        self.y_ = None

    def fit(self, X, y, seed=0):
        self.X_ = np.asarray(X, dtype=np.float64).copy()
        self.y_ = np.asarray(y, dtype=np.float64).copy()
        return self

    def score(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        k = min(self.k, len(self.y_))
        out = np.empty(X.shape[0])
        for a in range(0, X.shape[0], 256):
            diff = X[a:a + 256, None, :] - self.X_[None, :, :]
            d2 = np.einsum("ijk,ijk->ij", diff, diff)
            # stable sort: equal distances keep training order
            nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
            out[a:a + 256] = self.y_[nearest].mean(axis=1)
        return out

    def to_dict(self):
        return {"k": self.k, "X": self.X_.tolist(), "y": self.y_.tolist()}

    @classmethod
    def from_dict(cls, d):
        m = cls(d["k"])
        m.X_ = np.asarray(d["X"], dtype=np.float64).reshape(len(d["y"]), -1)
        m.y_ = np.asarray(d["y"], dtype=np.float64)
        return m

"""C-SVM with an RBF kernel, solved by SMO with maximal-violating-pair selection."""
from __future__ import annotations

import numpy as np

from .logreg import sigmoid


def rbf_kernel(A, B, gamma):
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    d2 = np.sum(A * A, axis=1)[:, None] - 2.0 * A @ B.T + np.sum(B * B, axis=1)[None, :]
    return np.exp(-gamma * np.maximum(d2, 0.0))


class SVM:
    """Labels are {0, 1}; internally mapped to {-1, +1}."""

    def __init__(self, C=1.0, gamma=None, tol=1e-3, max_iter=10000):
        self.C = C
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter
        self.gamma_ = None
        self.sv_ = None
        self.coef_ = None
        self.b_ = 0.0
        self.n_iter_ = 0
        self.alpha_ = None

    def fit(self, X, y, seed=0):
        X = np.asarray(X, dtype=np.float64)
        ys = np.where(np.asarray(y) > 0, 1.0, -1.0)
        n, d = X.shape
        self.gamma_ = float(self.gamma) if self.gamma is not None else 1.0 / d
        C = self.C
        K = rbf_kernel(X, X, self.gamma_)
        alpha = np.zeros(n)
        grad = -np.ones(n)  # gradient of 0.5 a'Qa - e'a
        it = 0
        while it < self.max_iter:
            v = -ys * grad
            up = ((ys > 0) & (alpha < C)) | ((ys < 0) & (alpha > 0))
            low = ((ys > 0) & (alpha > 0)) | ((ys < 0) & (alpha < C))
            if not up.any() or not low.any():
                break
            i = int(np.argmax(np.where(up, v, -np.inf)))
            j = int(np.argmin(np.where(low, v, np.inf)))
            if v[i] - v[j] < self.tol:
                break
            it += 1
            curv = K[i, i] + K[j, j] - 2.0 * K[i, j]
            delta = (v[i] - v[j]) / max(curv, 1e-12)
            delta = min(delta, C - alpha[i] if ys[i] > 0 else alpha[i])
            delta = min(delta, alpha[j] if ys[j] > 0 else C - alpha[j])
            di, dj = ys[i] * delta, -ys[j] * delta
            alpha[i] = min(max(alpha[i] + di, 0.0), C)
            alpha[j] = min(max(alpha[j] + dj, 0.0), C)
            grad += ys * (ys[i] * K[:, i] * di + ys[j] * K[:, j] * dj)
        self.n_iter_ = it
        v = -ys * grad
        free = (alpha > 0) & (alpha < C)
        if free.any():
            b = float(np.mean(v[free]))
        else:
            up = ((ys > 0) & (alpha < C)) | ((ys < 0) & (alpha > 0))
            low = ((ys > 0) & (alpha > 0)) | ((ys < 0) & (alpha < C))
            hi = np.max(v[up]) if up.any() else np.min(v[low])
            lo = np.min(v[low]) if low.any() else hi
            b = float((hi + lo) / 2.0)
        self.alpha_ = alpha
        sv = alpha > 0
        self.sv_ = X[sv].copy()
        self.coef_ = (alpha * ys)[sv]
        self.b_ = b
        return self

    def decision_function(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if len(self.coef_) == 0:
            return np.full(X.shape[0], self.b_)
        return rbf_kernel(X, self.sv_, self.gamma_) @ self.coef_ + self.b_

    def score(self, X):
        return sigmoid(self.decision_function(X))

    def to_dict(self):
        return {"C": self.C, "gamma": self.gamma_, "tol": self.tol, "max_iter": self.max_iter,
                "support_vectors": self.sv_.tolist(), "coef": self.coef_.tolist(), "b": self.b_,
                "n_features": None if self.sv_ is None else int(self.sv_.shape[1])}

    @classmethod
    def from_dict(cls, d):
        m = cls(d["C"], d["gamma"], d["tol"], d["max_iter"])
        m.gamma_ = float(d["gamma"])
        m.coef_ = np.asarray(d["coef"], dtype=np.float64)
        m.sv_ = np.asarray(d["support_vectors"], dtype=np.float64).reshape(len(m.coef_), d["n_features"])
        m.b_ = float(d["b"])
        return m

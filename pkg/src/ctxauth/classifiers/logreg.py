"""Binomial logistic regression fit by damped IRLS."""
from __future__ import annotations

import numpy as np


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _penalized_nll(beta, Xd, y, l2):
    z = Xd @ beta
    # log(1 + exp(z)) - y z, computed stably
    return float(np.sum(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * beta @ beta)


class LogisticRegression:
    def __init__(self, l2=1e-6, max_iter=100, tol=1e-8):
        self.l2 = l2
        self.max_iter = max_iter
        self.tol = tol
        self.coef_ = None
        self.intercept_ = 0.0
        self.n_iter_ = 0
        self.solver_ = "irls"

    def fit(self, X, y, seed=0):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        Xd = np.column_stack([np.ones(len(X)), X])
        beta = np.zeros(Xd.shape[1])
        eye = np.eye(Xd.shape[1])
        loss = _penalized_nll(beta, Xd, y, self.l2)
        diverged = False
        for it in range(1, self.max_iter + 1):
            p = sigmoid(Xd @ beta)
            w = p * (1.0 - p)
            grad = Xd.T @ (p - y) + self.l2 * beta
            hess = (Xd * w[:, None]).T @ Xd + self.l2 * eye
            try:
                step = np.linalg.solve(hess, grad)
            except np.linalg.LinAlgError:
                diverged = True
                break
            if not np.all(np.isfinite(step)):
                diverged = True
                break
            t = 1.0
            while t > 1e-12:
                cand = beta - t * step
                new_loss = _penalized_nll(cand, Xd, y, self.l2)
                if np.isfinite(new_loss) and new_loss <= loss + 1e-12 * abs(loss):
                    break
                t *= 0.5
            else:
                break
            change = np.max(np.abs(cand - beta))
            beta, loss = cand, new_loss
            self.n_iter_ = it
            if change < self.tol:
                break
        if diverged or not np.all(np.isfinite(beta)):
            beta = self._gradient_descent(Xd, y)
            self.solver_ = "gradient_descent"
        self.intercept_ = float(beta[0])
        self.coef_ = beta[1:].copy()
        return self

    def _gradient_descent(self, Xd, y, lr=0.1, n_iter=2000):
        beta = np.zeros(Xd.shape[1])
        n = len(y)
        for _ in range(n_iter):
            p = sigmoid(Xd @ beta)
            beta -= lr * (Xd.T @ (p - y) / n + self.l2 * beta / n)
        return beta

    def decision_function(self, X):
        return np.asarray(X, dtype=np.float64) @ self.coef_ + self.intercept_

    def score(self, X):
        return sigmoid(self.decision_function(np.atleast_2d(X)))

    def log_loss(self, X, y):
        p = np.clip(self.score(X), 1e-300, 1.0)
        q = np.clip(1.0 - self.score(X), 1e-300, 1.0)
        y = np.asarray(y, dtype=np.float64)
        return float(-np.mean(y * np.log(p) + (1 - y) * np.log(q)))

    def to_dict(self):
        return {"l2": self.l2, "max_iter": self.max_iter, "tol": self.tol,
                "coef": self.coef_.tolist(), "intercept": self.intercept_}

    @classmethod
    def from_dict(cls, d):
        m = cls(d["l2"], d["max_iter"], d["tol"])
        m.coef_ = np.asarray(d["coef"], dtype=np.float64)
        m.intercept_ = float(d["intercept"])
        return m

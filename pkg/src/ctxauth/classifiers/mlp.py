"""Single-hidden-layer perceptron trained with full-batch gradient descent."""
from __future__ import annotations

import numpy as np

from .logreg import sigmoid


def unpack(params, n_in, n_hidden):
    a = n_in * n_hidden
    W1 = params[:a].reshape(n_in, n_hidden)
    b1 = params[a:a + n_hidden]
    w2 = params[a + n_hidden:a + 2 * n_hidden]
    b2 = params[a + 2 * n_hidden]
    return W1, b1, w2, b2


def loss_and_grad(params, X, y, n_hidden):
    """Mean binary cross-entropy and its gradient w.r.t. the flat parameters."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    W1, b1, w2, b2 = unpack(params, X.shape[1], n_hidden)
    h = np.tanh(X @ W1 + b1)
    z = h @ w2 + b2
    p = sigmoid(z)
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    dz = (p - y) / n
    gw2 = h.T @ dz
    gb2 = dz.sum()
    dh = np.outer(dz, w2) * (1.0 - h * h)
    gW1 = X.T @ dh
    gb1 = dh.sum(axis=0)
    return loss, np.concatenate([gW1.ravel(), gb1, gw2, [gb2]])


class MLP:
    def __init__(self, hidden=10, lr=0.1, epochs=500):
        self.hidden = hidden
        self.lr = lr
        self.epochs = epochs
        self.params_ = None
        self.n_in_ = None
        self.loss_curve_ = []

    def fit(self, X, y, seed=0):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        self.n_in_ = X.shape[1]
        rng = np.random.default_rng(seed)
        size = self.n_in_ * self.hidden + 2 * self.hidden + 1
        params = rng.uniform(-0.5, 0.5, size)
        self.loss_curve_ = []
        for _ in range(self.epochs):
            loss, grad = loss_and_grad(params, X, y, self.hidden)
            self.loss_curve_.append(loss)
            params -= self.lr * grad
        self.params_ = params
        return self

    def score(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        W1, b1, w2, b2 = unpack(self.params_, self.n_in_, self.hidden)
        return sigmoid(np.tanh(X @ W1 + b1) @ w2 + b2)

    def to_dict(self):
        return {"hidden": self.hidden, "lr": self.lr, "epochs": self.epochs,
                "n_in": self.n_in_, "params": self.params_.tolist()}

    @classmethod
    def from_dict(cls, d):
        m = cls(d["hidden"], d["lr"], d["epochs"])
        m.n_in_ = int(d["n_in"])
        m.params_ = np.asarray(d["params"], dtype=np.float64)
        return m

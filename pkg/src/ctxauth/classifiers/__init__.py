"""Authentication classifiers behind one train/score interface.

Every model maps a feature vector to a genuine-likeness score in [0, 1].
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .forest import RandomForest
from .knn import KNN
from .logreg import LogisticRegression
from .mlp import MLP
from .svm import SVM

ALGORITHMS = ("LOGREG", "MLP", "KNN", "SVM", "RF")


class SingleClassDataset(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ClassifierParams:
    logreg_l2: float = 1e-6
    logreg_max_iter: int = 100
    logreg_tol: float = 1e-8
    mlp_hidden: int = 10
    mlp_lr: float = 0.1
    mlp_epochs: int = 500
    knn_k: int = 10
    svm_c: float = 1.0
    svm_gamma: float | None = None
    svm_tol: float = 1e-3
    svm_max_iter: int = 10000
    rf_trees: int = 100
    rf_max_features: str | int = "sqrt"
    rf_min_samples_split: int = 2

    def build(self, algorithm: str):
        if algorithm == "LOGREG":
            return LogisticRegression(self.logreg_l2, self.logreg_max_iter, self.logreg_tol)
        if algorithm == "MLP":
            return MLP(self.mlp_hidden, self.mlp_lr, self.mlp_epochs)
        if algorithm == "KNN":
            return KNN(self.knn_k)
        if algorithm == "SVM":
            return SVM(self.svm_c, self.svm_gamma, self.svm_tol, self.svm_max_iter)
        if algorithm == "RF":
            return RandomForest(self.rf_trees, self.rf_max_features, self.rf_min_samples_split)
        raise ValueError(f"unknown algorithm {algorithm!r}")


_ESTIMATORS = {"LOGREG": LogisticRegression, "MLP": MLP, "KNN": KNN, "SVM": SVM, "RF": RandomForest}


@dataclass(frozen=True)
class LabeledDataset:
    """Vectors with boolean genuine labels; ``subset`` maps columns back to the full layout."""

    vectors: np.ndarray
    labels: np.ndarray
    subset: tuple[int, ...] | None = None
    n_features: int | None = None

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vectors, dtype=np.float64))
        if len(v) != len(self.labels):
            raise DimensionMismatch(f"{len(v)} vectors but {len(self.labels)} labels")
        if self.subset is not None and v.shape[1] != len(self.subset):
            raise DimensionMismatch("vector width differs from the subset size")


@dataclass
class AuthModel:
    algorithm: str
    subset: tuple[int, ...]
    n_features: int
    estimator: object = field(repr=False)

    def score(self, vectors) -> np.ndarray:
        """Scores for full-layout vectors (1-D input gives a length-1 array)."""
        v = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
        if v.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {v.shape[1]}")
        return np.clip(self.estimator.score(v[:, list(self.subset)]), 0.0, 1.0)

    def to_dict(self):
        return {"algorithm": self.algorithm, "subset": list(self.subset),
                "n_features": self.n_features, "estimator": self.estimator.to_dict()}

    @classmethod
    def from_dict(cls, d):
        est = _ESTIMATORS[d["algorithm"]].from_dict(d["estimator"])
        return cls(d["algorithm"], tuple(int(i) for i in d["subset"]), int(d["n_features"]), est)


def train(algorithm: str, dataset: LabeledDataset, seed: int = 0,
          params: ClassifierParams | None = None) -> AuthModel:
    params = params or ClassifierParams()
    X = np.atleast_2d(np.asarray(dataset.vectors, dtype=np.float64))
    y = np.asarray(dataset.labels).astype(bool).astype(np.int64)
    if len(np.unique(y)) < 2:
        raise SingleClassDataset("training needs genuine and impostor samples")
    subset = dataset.subset if dataset.subset is not None else tuple(range(X.shape[1]))
    n_features = dataset.n_features if dataset.n_features is not None else X.shape[1]
    if max(subset) >= n_features:
        raise DimensionMismatch("subset index outside the feature layout")
    est = params.build(algorithm).fit(X, y, seed=seed)
    return AuthModel(algorithm, tuple(int(i) for i in subset), int(n_features), est)


def score(model: AuthModel, vector) -> float:
    return float(model.score(vector)[0])


def params_to_dict(params: ClassifierParams) -> dict:
    return asdict(params)

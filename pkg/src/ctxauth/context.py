"""Per-user context discovery (k-means), the context identification model, and
impostor routing through a candidate's contexts."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classifiers.forest import RandomForest


class TooFewVectors(ValueError):
    pass


class InsufficientImpostors(ValueError):
    pass


@dataclass
class Clustering:
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    inertia_history: list = field(default_factory=list)
    n_iter: int = 0
    retained: tuple[int, ...] = ()

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=len(self.centroids))


def _sq_dists(X, C):
    diff = X[:, None, :] - C[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _kmeans_pp(X, k, rng):
    n = X.shape[0]
    centroids = [X[rng.integers(n)]]
    d2 = np.sum((X - centroids[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))
        centroids.append(X[idx])
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    return np.array(centroids, dtype=np.float64)


def kmeans(vectors, k: int = 8, seed: int = 0, max_iter: int = 300, tol: float = 1e-6) -> Clustering:
    """Lloyd iterations from k-means++ seeds.

    ``inertia_history`` holds the objective after every assignment step;
    empty clusters are moved onto the point farthest from its centroid.
    """
    X = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    n = X.shape[0]
    if k < 1:
        raise ValueError("k must be positive")
    if n < k:
        raise TooFewVectors(f"{n} vectors for k={k}")
    rng = np.random.default_rng(seed)
    C = _kmeans_pp(X, k, rng)
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        d2 = _sq_dists(X, C)
        assign = np.argmin(d2, axis=1)
        point_d2 = d2[np.arange(n), assign]
        history.append(float(point_d2.sum()))
        newC = C.copy()
        counts = np.bincount(assign, minlength=k)
        for c in range(k):
            if counts[c]:
                newC[c] = X[assign == c].mean(axis=0)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            taken = set()
            for c in empty:
                for idx in np.argsort(-point_d2, kind="stable"):
                    if idx not in taken:
                        taken.add(int(idx))
                        newC[c] = X[idx]
                        break
        shift = float(np.max(np.sqrt(np.sum((newC - C) ** 2, axis=1))))
        C = newC
        if shift < tol:
            break
    d2 = _sq_dists(X, C)
    assign = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(n), assign].sum())
    history.append(inertia)
    return Clustering(C, assign, inertia, history, it)


def prune_clusters(clustering: Clustering, min_fraction: float = 0.02, min_count: int = 30) -> tuple[int, ...]:
    """Cluster ids with at least ``max(min_count, min_fraction * N)`` members.

    The largest cluster always survives.
    """
    counts = clustering.counts
    limit = max(min_count, min_fraction * counts.sum())
    retained = tuple(int(c) for c in np.flatnonzero(counts >= limit))
    if not retained:
        retained = (int(np.argmax(counts)),)
    clustering.retained = retained
    return retained


class ContextModel:
    """Routes a normalised feature vector to one of a user's retained contexts."""

    def __init__(self, user_id, retained, forest=None, constant=None, train_accuracy=1.0):
        self.user_id = user_id
        self.retained = tuple(int(c) for c in retained)
        self.forest = forest
        self.constant = constant
        self.train_accuracy = train_accuracy

    def predict(self, vectors) -> np.ndarray:
        X = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
        if self.forest is None:
            return np.full(X.shape[0], self.constant, dtype=np.int64)
        return self.forest.predict(X).astype(np.int64)

    def to_dict(self):
        return {"user_id": self.user_id, "retained": list(self.retained),
                "constant": self.constant, "train_accuracy": self.train_accuracy,
                "forest": self.forest.to_dict() if self.forest is not None else None}

    @classmethod
    def from_dict(cls, d):
        forest = RandomForest.from_dict(d["forest"]) if d["forest"] is not None else None
        return cls(d["user_id"], d["retained"], forest, d["constant"], d["train_accuracy"])


def train_cim(vectors, assignments, retained, seed: int = 0, user_id: str = "",
              n_trees: int = 100, max_features="sqrt") -> ContextModel:
    X = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    assignments = np.asarray(assignments, dtype=np.int64)
    retained = tuple(sorted(int(c) for c in retained))
    if len(retained) < 2:
        return ContextModel(user_id, retained, constant=retained[0])
    mask = np.isin(assignments, retained)
    forest = RandomForest(n_trees, max_features).fit(X[mask], assignments[mask], seed=seed)
    acc = float(np.mean(forest.predict(X[mask]) == assignments[mask]))
    return ContextModel(user_id, retained, forest, train_accuracy=acc)


def predict_context(cim: ContextModel, vector) -> int:
    return int(cim.predict(vector)[0])


def route_contexts(cim: ContextModel, centroids, vectors) -> np.ndarray:
    """CIM prediction, with any non-retained output sent to the nearest retained centroid."""
    X = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    pred = cim.predict(X)
    bad = ~np.isin(pred, cim.retained)
    if bad.any():
        ret = np.asarray(cim.retained)
        d2 = _sq_dists(X[bad], np.asarray(centroids)[ret])
        pred[bad] = ret[np.argmin(d2, axis=1)]
    return pred


def balanced_allocation(counts, cap: int) -> np.ndarray:
    """Split ``cap`` across groups as evenly as their sizes allow (water filling)."""
    counts = np.asarray(counts, dtype=np.int64)
    alloc = np.zeros_like(counts)
    remaining = min(int(cap), int(counts.sum()))
    while remaining > 0:
        open_ = np.flatnonzero(alloc < counts)
        share = remaining // len(open_)
        if share == 0:
            # hand out the remainder one by one, in group order
            for g in open_[:remaining]:
                alloc[g] += 1
            break
        for g in open_:
            give = min(share, counts[g] - alloc[g])
            alloc[g] += give
            remaining -= give
    return alloc


def map_impostor_samples(cim: ContextModel, impostor_vectors, target: int, cap: int, seed: int = 0,
                         impostor_users=None, min_matches: int = 10, centroids=None):
    """Impostor vectors the candidate's CIM places in ``target``, subsampled to ``cap``.

    Returns ``(vectors, row_indices)``. Sampling is balanced over impostor
    users and uniform within each user.
    """
    X = np.atleast_2d(np.asarray(impostor_vectors, dtype=np.float64))
    users = np.asarray(impostor_users if impostor_users is not None else np.zeros(len(X)), dtype=object)
    pred = route_contexts(cim, centroids, X) if centroids is not None else cim.predict(X)
    match = np.flatnonzero(pred == target)
    if match.size < min_matches:
        raise InsufficientImpostors(f"only {match.size} impostor vectors map to context {target}")
    rng = np.random.default_rng(seed)
    groups = sorted(set(users[match].tolist()), key=str)
    members = [match[users[match] == g] for g in groups]
    alloc = balanced_allocation([len(m) for m in members], cap)
    chosen = []
    for m, a in zip(members, alloc):
        if a:
            chosen.append(np.sort(rng.choice(m, size=int(a), replace=False)))
    idx = np.sort(np.concatenate(chosen)) if chosen else np.zeros(0, dtype=np.int64)
    return X[idx], idx

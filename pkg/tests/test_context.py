import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ctxauth.context import (Clustering, ContextModel, InsufficientImpostors, TooFewVectors, balanced_allocation,
                             kmeans, map_impostor_samples, predict_context, prune_clusters, route_contexts,
                             train_cim)


def exhaustive_kmeans(X, k):
    """Minimum-inertia partition by brute force over all labelings."""
    best = None
    for labels in itertools.product(range(k), repeat=len(X)):
        labels = np.array(labels)
        if len(set(labels.tolist())) < k:
            continue
        inertia = sum(np.sum((X[labels == c] - X[labels == c].mean(axis=0)) ** 2) for c in range(k))
        if best is None or inertia < best[0] - 1e-12:
            best = (inertia, labels)
    return best


def blobs(seed=0, n=100, centres=((0.2, 0.2), (0.8, 0.8))):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(c, 0.03, (n, len(c))) for c in centres])
    return X, np.repeat(np.arange(len(centres)), n)


def test_kmeans_1d_example():
    X = np.array([[0.0], [1.0], [10.0], [11.0]])
    cl = kmeans(X, 2, seed=0)
    assert sorted(cl.centroids[:, 0].tolist()) == [0.5, 10.5]
    inertia, _ = exhaustive_kmeans(X, 2)
    assert cl.inertia == pytest.approx(inertia)


def test_kmeans_k1_is_mean():
    X = np.random.default_rng(1).uniform(size=(20, 3))
    cl = kmeans(X, 1, seed=0)
    np.testing.assert_allclose(cl.centroids[0], X.mean(axis=0))


def test_kmeans_deterministic_and_errors():
    X, _ = blobs()
    a, b = kmeans(X, 4, seed=3), kmeans(X, 4, seed=3)
    np.testing.assert_array_equal(a.assignments, b.assignments)
    with pytest.raises(TooFewVectors):
        kmeans(X[:3], 4)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_kmeans_invariants(seed, k):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(int(rng.integers(k, 60)), 3))
    cl = kmeans(X, k, seed=seed)
    hist = np.asarray(cl.inertia_history)
    assert np.all(np.diff(hist) <= 1e-12 * max(1.0, hist[0]))
    assert cl.assignments.min() >= 0 and cl.assignments.max() < len(cl.centroids)
    direct = np.sum((X - cl.centroids[cl.assignments]) ** 2)
    assert cl.inertia == pytest.approx(direct, rel=1e-9, abs=1e-12)


def test_kmeans_is_lloyd_fixed_point_above_optimum():
    # Lloyd only reaches a local optimum; check that instead of global optimality
    rng = np.random.default_rng(11)
    for _ in range(15):
        X = rng.uniform(size=(7, 2))
        best, _ = exhaustive_kmeans(X, 2)
        cl = kmeans(X, 2, seed=0)
        assert cl.inertia >= best - 1e-12
        d2 = ((X[:, None, :] - cl.centroids[None]) ** 2).sum(axis=2)
        assert np.all(d2[np.arange(7), cl.assignments] <= d2.min(axis=1) + 1e-12)
        for c in range(2):
            np.testing.assert_allclose(cl.centroids[c], X[cl.assignments == c].mean(axis=0), atol=1e-6)


def clustering_with_counts(counts):
    assignments = np.repeat(np.arange(len(counts)), counts)
    return Clustering(np.zeros((len(counts), 1)), assignments, 0.0)


def test_prune_examples():
    assert prune_clusters(clustering_with_counts([500, 400, 3])) == (0, 1)
    assert prune_clusters(clustering_with_counts([50, 50, 50, 50])) == (0, 1, 2, 3)
    assert prune_clusters(clustering_with_counts([10, 5])) == (0,)
    assert prune_clusters(clustering_with_counts([5, 10])) == (1,)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 200), min_size=1, max_size=8))
def test_prune_nonempty(counts):
    kept = prune_clusters(clustering_with_counts(counts))
    assert kept
    limit = max(30, 0.02 * sum(counts))
    assert all(counts[c] >= limit for c in kept) or kept == (int(np.argmax(counts)),)


def test_cim_constant_when_single_context():
    X, labels = blobs()
    cim = train_cim(X, labels, (1,), seed=0)
    assert np.all(cim.predict(X) == 1)


def test_cim_separated_blobs():
    X, labels = blobs(centres=((0.1, 0.1, 0.1), (0.9, 0.9, 0.9), (0.1, 0.9, 0.5)))
    cim = train_cim(X, labels, (0, 1, 2), seed=5, n_trees=30)
    assert cim.train_accuracy >= 0.95
    assert np.mean(cim.predict(X) == labels) >= 0.9
    for c, centre in enumerate(((0.1, 0.1, 0.1), (0.9, 0.9, 0.9), (0.1, 0.9, 0.5))):
        assert predict_context(cim, np.array(centre)) == c
    assert predict_context(cim, X[0]) == predict_context(cim, X[0])


def test_cim_only_predicts_retained():
    X, labels = blobs(centres=((0.1, 0.1), (0.9, 0.9), (0.1, 0.9)))
    cim = train_cim(X, labels, (0, 2), seed=1, n_trees=20)
    q = np.random.default_rng(0).uniform(size=(200, 2))
    assert set(cim.predict(q).tolist()) <= {0, 2}
    back = ContextModel.from_dict(cim.to_dict())
    np.testing.assert_array_equal(back.predict(q), cim.predict(q))


def test_route_fallback_to_nearest_retained():
    cim = ContextModel("u", (0, 1), constant=2)  # deliberately broken: emits a pruned id
    centroids = np.array([[0.0, 0.0], [1.0, 1.0], [0.5, 0.5]])
    out = route_contexts(cim, centroids, np.array([[0.1, 0.0], [0.9, 1.0]]))
    assert out.tolist() == [0, 1]


def test_balanced_allocation():
    assert balanced_allocation([200] * 5, 200).tolist() == [40] * 5
    assert balanced_allocation([5, 100, 100], 100).tolist() == [5, 48, 47]
    assert balanced_allocation([3, 4], 100).tolist() == [3, 4]
    assert balanced_allocation([10, 10, 10], 4).tolist() == [2, 1, 1]


def test_map_impostors():
    cim = ContextModel("u", (0,), constant=0)
    X = np.random.default_rng(2).uniform(size=(1000, 3))
    users = np.repeat([f"i{k}" for k in range(5)], 200)
    got, idx = map_impostor_samples(cim, X, 0, 200, seed=1, impostor_users=users)
    assert len(got) == 200
    _, per_user = np.unique(users[idx], return_counts=True)
    assert per_user.tolist() == [40] * 5
    np.testing.assert_array_equal(got, X[idx])
    assert len(set(idx.tolist())) == 200


def test_map_impostors_filters_and_fails():
    X, labels = blobs(centres=((0.1, 0.1), (0.9, 0.9)))
    cim = train_cim(X, labels, (0, 1), seed=0, n_trees=20)
    got, idx = map_impostor_samples(cim, X, 1, 50, seed=0)
    assert np.all(cim.predict(got) == 1)
    assert len(got) == 50
    with pytest.raises(InsufficientImpostors):
        map_impostor_samples(ContextModel("u", (0,), constant=0), X, 1, 50)
    with pytest.raises(InsufficientImpostors):
        map_impostor_samples(cim, X[labels == 0][:50], 1, 50)

"""Enrollment, context-routed verification, EER and population summaries."""
from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import classifiers as clf
from .config import RunConfig
from .context import (Clustering, ContextModel, InsufficientImpostors, kmeans, map_impostor_samples,
                      prune_clusters, route_contexts, train_cim)
from .features import (N_FEATURES, FeatureSubset, MinMaxNormalizer, cfs_select, extract_matrix,
                       fit_minmax, window_trace)
from .preprocess import EmptyAfterFilter, median_filter, remove_unattended
from .traceio import AccelTrace

logger = logging.getLogger(__name__)


class EnrollmentFailure(RuntimeError):
    def __init__(self, user_id, reason):
        self.user_id = user_id
        self.reason = reason
        super().__init__(f"{user_id}: {reason}")


class EmptyScores(ValueError):
    pass


class DataLeak(AssertionError):
    pass


# -- EER -----------------------------------------------------------------------

def compute_eer(genuine_scores, impostor_scores):
    """(eer, threshold) from a sweep over every distinct score and +-inf.

    FAR(t) counts impostor scores >= t, FRR(t) genuine scores < t. The
    threshold minimising |FAR - FRR| wins, the smallest one on ties, and the
    EER is the mean of the two rates there.
    """
    g = np.sort(np.asarray(genuine_scores, dtype=np.float64))
    i = np.sort(np.asarray(impostor_scores, dtype=np.float64))
    if g.size == 0 or i.size == 0:
        raise EmptyScores("both score lists must be non-empty")
    thr = np.concatenate([[-np.inf], np.unique(np.concatenate([g, i])), [np.inf]])
    far = (i.size - np.searchsorted(i, thr, side="left")) / i.size
    frr = np.searchsorted(g, thr, side="left") / g.size
    gap = np.abs(far - frr)
    best = int(np.argmin(gap))
    return float((far[best] + frr[best]) / 2.0), float(thr[best])


# -- per-user feature data ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class UserData:
    """Raw (un-normalised) window vectors of one user in chronological order."""

    user_id: str
    vectors: np.ndarray
    starts: np.ndarray

    def __len__(self):
        return len(self.starts)

    def split(self, train_fraction: float = 0.5):
        n_train = int(math.floor(len(self) * train_fraction))
        return (UserData(self.user_id, self.vectors[:n_train], self.starts[:n_train]),
                UserData(self.user_id, self.vectors[n_train:], self.starts[n_train:]))


def prepare_user(trace: AccelTrace, cfg: RunConfig | None = None) -> UserData:
    """Preprocess a trace and extract one feature vector per valid window."""
    cfg = cfg or RunConfig()
    try:
        clean = remove_unattended(trace, cfg.preprocess.thresholds)
    except EmptyAfterFilter:
        return UserData(trace.user_id, np.zeros((0, N_FEATURES)), np.zeros(0, dtype=np.int64))
    clean = median_filter(clean, cfg.preprocess.median_span)
    w = cfg.windows
    windows = window_trace(clean, w.win_ms, w.step_ms, w.min_samples, w.max_gap_ms)
    vectors, starts = extract_matrix(windows)
    return UserData(trace.user_id, vectors, starts)


def derive_seed(seed: int, *parts) -> int:
    """Stable 32-bit seed from a master seed and labels."""
    words = [int(seed) & 0xFFFFFFFF] + [zlib.crc32(str(p).encode()) for p in parts]
    return int(np.random.SeedSequence(words).generate_state(1)[0])


# -- profiles -------------------------------------------------------------------------

@dataclass
class ContextProfile:
    context_id: int
    subset: FeatureSubset
    models: dict
    n_genuine: int
    n_impostor: int

    def to_dict(self):
        return {"context_id": self.context_id, "subset": list(self.subset.indices),
                "merit": self.subset.merit, "n_genuine": self.n_genuine,
                "n_impostor": self.n_impostor,
                "models": {a: m.to_dict() for a, m in self.models.items()}}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["context_id"]), FeatureSubset(tuple(d["subset"]), float(d["merit"])),
                   {a: clf.AuthModel.from_dict(m) for a, m in d["models"].items()},
                   int(d["n_genuine"]), int(d["n_impostor"]))


@dataclass
class UserProfile:
    user_id: str
    normalizer: MinMaxNormalizer
    centroids: np.ndarray
    cluster_counts: tuple[int, ...]
    retained: tuple[int, ...]
    cim: ContextModel
    contexts: dict
    algorithms: tuple[str, ...]
    impostor_train_users: tuple[str, ...] = ()
    train_starts: tuple[int, ...] = ()
    unevaluable: dict = field(default_factory=dict)

    def route(self, raw_vectors):
        """Normalise raw vectors and return (normalised, context ids)."""
        norm = self.normalizer.apply(np.atleast_2d(raw_vectors))
        return norm, route_contexts(self.cim, self.centroids, norm)

    def score(self, raw_vectors, algorithm: str):
        """Context id and score for each raw vector (NaN where the context has no model)."""
        norm, ctx = self.route(raw_vectors)
        scores = np.full(len(ctx), np.nan)
        for c, cp in self.contexts.items():
            sel = ctx == c
            if sel.any():
                scores[sel] = cp.models[algorithm].score(norm[sel])
        return ctx, scores

    def to_dict(self):
        return {
            "user_id": self.user_id,
            "normalizer": self.normalizer.to_dict(),
            "centroids": self.centroids.tolist(),
            "cluster_counts": list(self.cluster_counts),
            "retained": list(self.retained),
            "cim": self.cim.to_dict(),
            "contexts": [self.contexts[c].to_dict() for c in sorted(self.contexts)],
            "algorithms": list(self.algorithms),
            "impostor_train_users": list(self.impostor_train_users),
            "train_starts": list(self.train_starts),
            "unevaluable": {str(k): v for k, v in sorted(self.unevaluable.items())},
        }

    @classmethod
    def from_dict(cls, d):
        contexts = {}
        for c in d["contexts"]:
            cp = ContextProfile.from_dict(c)
            contexts[cp.context_id] = cp
        return cls(
            d["user_id"], MinMaxNormalizer.from_dict(d["normalizer"]),
            np.asarray(d["centroids"], dtype=np.float64), tuple(d["cluster_counts"]),
            tuple(d["retained"]), ContextModel.from_dict(d["cim"]), contexts,
            tuple(d["algorithms"]), tuple(d["impostor_train_users"]),
            tuple(int(s) for s in d["train_starts"]),
            {int(k): v for k, v in d["unevaluable"].items()},
        )


def _stack_impostors(impostors):
    vecs, users = [], []
    for ud in impostors:
        if len(ud):
            vecs.append(ud.vectors)
            users.extend([ud.user_id] * len(ud))
    if not vecs:
        return np.zeros((0, N_FEATURES)), np.zeros(0, dtype=object)
    return np.vstack(vecs), np.asarray(users, dtype=object)


def enroll_user(candidate: UserData, impostors, algorithms=None, cfg: RunConfig | None = None,
                seed: int | None = None) -> UserProfile:
    """Build a profile from the chronologically first part of ``candidate``.

    ``impostors`` are other users' data; only their training parts are used.
    """
    cfg = cfg or RunConfig()
    algorithms = tuple(algorithms or cfg.evaluation.algorithms)
    seed = cfg.seed if seed is None else seed
    uid = candidate.user_id
    if len(candidate) < cfg.enrollment.min_windows:
        raise EnrollmentFailure(uid, f"too few windows ({len(candidate)} < {cfg.enrollment.min_windows})")
    train, _ = candidate.split(cfg.enrollment.train_fraction)
    imp_train = [ud.split(cfg.enrollment.train_fraction)[0] for ud in impostors if ud.user_id != uid]

    norm = fit_minmax(train.vectors)
    Xg = norm.apply(train.vectors)
    cc = cfg.context
    k = min(cc.k, len(Xg))
    clustering: Clustering = kmeans(Xg, k, derive_seed(seed, uid, "kmeans"), cc.max_iter, cc.tol)
    retained = prune_clusters(clustering, cc.prune_min_fraction, cc.prune_min_count)
    cim = train_cim(Xg, clustering.assignments, retained, derive_seed(seed, uid, "cim"), uid,
                    n_trees=cc.cim_trees, max_features=cfg.classifiers.rf_max_features)

    imp_raw, imp_users = _stack_impostors(imp_train)
    imp_norm = norm.apply(imp_raw) if len(imp_raw) else imp_raw
    contexts, unevaluable = {}, {}
    for c in retained:
        genuine = Xg[clustering.assignments == c]
        cap = cfg.enrollment.impostor_cap or len(genuine)
        try:
            if len(imp_norm) == 0:
                raise InsufficientImpostors("no impostor data")
            impostor, _ = map_impostor_samples(cim, imp_norm, c, cap, derive_seed(seed, uid, c, "impostors"),
                                               imp_users, cfg.enrollment.min_impostor_matches,
                                               centroids=clustering.centroids)
        except InsufficientImpostors as exc:
            unevaluable[c] = str(exc)
            continue
        X = np.vstack([genuine, impostor])
        y = np.r_[np.ones(len(genuine), dtype=bool), np.zeros(len(impostor), dtype=bool)]
        subset = cfs_select(X, y, cfg.selection.cfs_width, cfg.selection.cfs_patience)
        ds = clf.LabeledDataset(X[:, list(subset.indices)], y, subset.indices, N_FEATURES)
        models = {a: clf.train(a, ds, derive_seed(seed, uid, c, a), cfg.classifiers) for a in algorithms}
        contexts[c] = ContextProfile(c, subset, models, len(genuine), len(impostor))
    if not contexts:
        raise EnrollmentFailure(uid, "no context could be evaluated: " + "; ".join(unevaluable.values()))
    return UserProfile(uid, norm, clustering.centroids, tuple(int(v) for v in clustering.counts), retained,
                       cim, contexts, algorithms, tuple(sorted({ud.user_id for ud in imp_train})),
                       tuple(int(s) for s in train.starts), unevaluable)


# -- verification ---------------------------------------------------------------------

@dataclass
class EvalResult:
    user_id: str
    context: int
    algorithm: str
    genuine_scores: np.ndarray
    impostor_scores: np.ndarray
    eer: float
    threshold_at_eer: float
    reused_impostors: bool = False

    def to_record(self):
        return {"user_id": self.user_id, "context": self.context, "algorithm": self.algorithm,
                "eer": self.eer,
                "threshold": self.threshold_at_eer if math.isfinite(self.threshold_at_eer) else None,
                "n_genuine": int(len(self.genuine_scores)),
                "n_impostor": int(len(self.impostor_scores)),
                "reused_impostors": self.reused_impostors}


def verify_and_score(profile: UserProfile, candidate_test: UserData, impostor_tests) -> list[EvalResult]:
    """Score held-out windows through the profile's context routing.

    Contexts lacking genuine or impostor test windows are omitted.
    """
    leaked = set(int(s) for s in candidate_test.starts) & set(profile.train_starts)
    if leaked:
        raise DataLeak(f"{profile.user_id}: {len(leaked)} test windows were used in training")
    imp_raw, imp_users = _stack_impostors([u for u in impostor_tests if u.user_id != profile.user_id])
    reused = bool(set(imp_users.tolist()) & set(profile.impostor_train_users))
    empty = (np.zeros((0, N_FEATURES)), np.zeros(0, dtype=np.int64))
    g_norm, g_ctx = profile.route(candidate_test.vectors) if len(candidate_test) else empty
    i_norm, i_ctx = profile.route(imp_raw) if len(imp_raw) else empty
    results = []
    for alg in profile.algorithms:
        for c in sorted(profile.contexts):
            g_sel, i_sel = g_ctx == c, i_ctx == c
            if not g_sel.any() or not i_sel.any():
                logger.debug("%s context %s: no test samples (genuine %d, impostor %d)",
                             profile.user_id, c, g_sel.sum(), i_sel.sum())
                continue
            model = profile.contexts[c].models[alg]
            g, i = model.score(g_norm[g_sel]), model.score(i_norm[i_sel])
            eer, thr = compute_eer(g, i)
            results.append(EvalResult(profile.user_id, c, alg, g, i, eer, thr, reused))
    return results


# -- population summaries ----------------------------------------------------------------

@dataclass
class PopulationSummary:
    algorithms: tuple[str, ...]
    user_eer: dict          # (user_id, algorithm) -> mean EER over evaluated contexts

    @property
    def users(self) -> list[str]:
        return sorted({u for u, _ in self.user_eer})

    def values(self, algorithm: str) -> np.ndarray:
        return np.array([self.user_eer[(u, algorithm)] for u in self.users if (u, algorithm) in self.user_eer])

    def mean(self, algorithm: str) -> float:
        v = self.values(algorithm)
        return float(v.mean()) if v.size else float("nan")

    def std(self, algorithm: str) -> float:
        v = self.values(algorithm)
        return float(v.std()) if v.size else float("nan")

    def user_mean(self, user: str) -> float:
        v = [self.user_eer[(user, a)] for a in self.algorithms if (user, a) in self.user_eer]
        return float(np.mean(v))

    def complete_matrix(self):
        users = [u for u in self.users if all((u, a) in self.user_eer for a in self.algorithms)]
        m = np.array([[self.user_eer[(u, a)] for a in self.algorithms] for u in users]).reshape(
            len(users), len(self.algorithms))
        return users, m

    def restrict(self, users) -> "PopulationSummary":
        keep = set(users)
        return PopulationSummary(self.algorithms, {k: v for k, v in self.user_eer.items() if k[0] in keep})

    def to_records(self):
        return [{"user_id": u, "algorithm": a, "mean_eer": self.user_eer[(u, a)]}
                for u in self.users for a in self.algorithms if (u, a) in self.user_eer]

    def population_records(self):
        return [{"algorithm": a, "n_users": int(self.values(a).size), "mean_eer": self.mean(a),
                 "std_eer": self.std(a)} for a in self.algorithms]

    @classmethod
    def from_records(cls, records, algorithms=None):
        user_eer = {(r["user_id"], r["algorithm"]): float(r["mean_eer"]) for r in records}
        algs = algorithms or tuple(dict.fromkeys(r["algorithm"] for r in records))
        return cls(tuple(algs), user_eer)


def aggregate(results, algorithms=None) -> PopulationSummary:
    """Unweighted mean EER over each user's contexts, per algorithm."""
    results = list(results)
    if not results:
        raise ValueError("nothing to aggregate")
    algs = tuple(algorithms) if algorithms else tuple(dict.fromkeys(r.algorithm for r in results))
    buckets: dict = {}
    for r in results:
        buckets.setdefault((r.user_id, r.algorithm), []).append(r.eer)
    return PopulationSummary(algs, {k: float(np.mean(v)) for k, v in sorted(buckets.items())})


@dataclass
class FTEOutcome:
    fraction: float
    removed: list
    summary: PopulationSummary

    def cdf(self, algorithm: str):
        """Empirical CDF points (eer, cumulative fraction) of per-user EERs."""
        v = np.sort(self.summary.values(algorithm))
        return [(float(e), (i + 1) / len(v)) for i, e in enumerate(v)]


def failure_to_enroll(summary: PopulationSummary, fractions=(0.05, 0.10, 0.15)) -> list[FTEOutcome]:
    """Drop the worst ``ceil(fraction * N)`` users (by EER averaged over algorithms).

    The zero-removal baseline is always the first entry.
    """
    users = summary.users
    if len(users) < 2:
        raise ValueError("failure-to-enroll analysis needs at least 2 users")
    ranked = sorted(users, key=lambda u: (-summary.user_mean(u), u))
    out = []
    for f in (0.0, *[f for f in fractions if f != 0.0]):
        n_drop = min(math.ceil(round(f * len(users), 9)), len(users) - 1)
        removed = ranked[:n_drop]
        out.append(FTEOutcome(f, removed, summary.restrict(set(users) - set(removed))))
    return out


# -- population runs ------------------------------------------------------------------

def impostor_pools(user_id: str, all_users) -> tuple[list, list]:
    """Split the other users into disjoint training and testing impostor pools.

    Users are taken cyclically after ``user_id``; the first half (rounded up)
    trains, the rest tests. With a single other user both pools hold it.
    """
    ordered = sorted(all_users)
    pos = ordered.index(user_id)
    others = ordered[pos + 1:] + ordered[:pos]
    if len(others) < 2:
        return others, others
    n_train = (len(others) + 1) // 2
    return others[:n_train], others[n_train:]


@dataclass
class RunResult:
    profiles: dict
    results: list
    failures: dict
    summary: PopulationSummary | None


def _run_one(uid, data, cfg, seed):
    train_ids, test_ids = impostor_pools(uid, list(data))
    try:
        profile = enroll_user(data[uid], [data[u] for u in train_ids], cfg.evaluation.algorithms, cfg, seed)
    except EnrollmentFailure as exc:
        return uid, None, [], exc.reason
    _, test = data[uid].split(cfg.enrollment.train_fraction)
    imp_tests = [data[u].split(cfg.enrollment.train_fraction)[1] for u in test_ids]
    return uid, profile, verify_and_score(profile, test, imp_tests), None


def run_population(data: dict, cfg: RunConfig | None = None, seed: int | None = None) -> RunResult:
    """Enroll and verify every user of ``data`` (user_id -> UserData)."""
    cfg = cfg or RunConfig()
    seed = cfg.seed if seed is None else seed
    uids = sorted(data)
    if cfg.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            outs = list(pool.map(_run_one, uids, [data] * len(uids), [cfg] * len(uids), [seed] * len(uids)))
    else:
        outs = [_run_one(uid, data, cfg, seed) for uid in uids]
    profiles, results, failures = {}, [], {}
    for uid, profile, res, reason in sorted(outs, key=lambda o: o[0]):
        if profile is None:
            failures[uid] = reason
            logger.warning("skipping %s: %s", uid, reason)
            continue
        profiles[uid] = profile
        results.extend(res)
    summary = aggregate(results, cfg.evaluation.algorithms) if results else None
    return RunResult(profiles, results, failures, summary)

"""Windowing, per-window feature vectors, normalisation and feature selection.

Vector layout (110 components):

* 4 axis blocks in the order x, y, z, m, each of 25 values: mean, std, iqr,
  range, energy, peak_to_rms, band_power, median_freq, spectral_entropy,
  hist00 .. hist15
* 3 pair blocks in the order (x,y), (x,z), (y,z), each of 3 values: dtw,
  mutual_info, corr
* screen_on fraction
"""
from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .preprocess import compute_magnitude
from .traceio import AccelTrace

AXES = ("x", "y", "z", "m")
PAIRS = (("x", "y"), ("x", "z"), ("y", "z"))
AXIS_FEATURES = (
    "mean", "std", "iqr", "range", "energy", "peak_to_rms",
    "band_power", "median_freq", "spectral_entropy",
) + tuple(f"hist{i:02d}" for i in range(16))
PAIR_FEATURES = ("dtw", "mutual_info", "corr")
FEATURE_NAMES = tuple(
    [f"{a}_{f}" for a in AXES for f in AXIS_FEATURES]
    + [f"{p}{q}_{f}" for p, q in PAIRS for f in PAIR_FEATURES]
    + ["screen_on"]
)
N_FEATURES = len(FEATURE_NAMES)
assert N_FEATURES == 110

HIST_BINS = 16
DTW_MAX_POINTS = 200


class TooFewSamples(ValueError):
    pass


class EmptySequence(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class DegenerateLabels(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Window:
    user_id: str
    start_ms: int
    end_ms: int
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    screen_on: np.ndarray

    @property
    def m(self) -> np.ndarray:
        return compute_magnitude(self.x, self.y, self.z)

    @property
    def duration_ms(self) -> int:
        return self.end_ms - self.start_ms

    def __len__(self):
        return len(self.t)


@dataclass(frozen=True, eq=False)
class WindowFeatures:
    values: np.ndarray
    user_id: str
    start_ms: int


def window_trace(trace: AccelTrace, win_ms: int = 10000, step_ms: int = 5000,
                 min_samples: int = 8, max_gap_ms: int = 2500) -> list[Window]:
    """Slice a trace into windows ``[k*step_ms, k*step_ms + win_ms)``.

    The trace is taken to end one typical sample interval after its last
    timestamp; windows running past that are dropped. Windows with fewer
    than ``min_samples`` samples or a gap longer than ``max_gap_ms``
    (including the stretch before the first and after the last sample)
    are dropped as well.
    """
    t = trace.t
    if len(t) == 0:
        return []
    dt = int(np.median(np.diff(t))) if len(t) > 1 else 0
    t_end = int(t[-1]) + dt
    windows = []
    k = int(t[0]) // step_ms
    while k * step_ms + win_ms <= t_end:
        start = k * step_ms
        end = start + win_ms
        k += 1
        a, b = np.searchsorted(t, [start, end], side="left")
        if b - a < min_samples:
            continue
        wt = t[a:b]
        if wt[0] - start > max_gap_ms or end - wt[-1] > max_gap_ms:
            continue
        if b - a > 1 and np.max(np.diff(wt)) > max_gap_ms:
            continue
        windows.append(Window(trace.user_id, start, end, wt, trace.x[a:b], trace.y[a:b],
                              trace.z[a:b], trace.screen_on[a:b]))
    return windows


# -- spectral ------------------------------------------------------------------

def _next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def padded_dft(series) -> np.ndarray:
    """Full DFT of the mean-removed series zero-padded to a power of two."""
    s = np.asarray(series, dtype=np.float64)
    s = s - s.mean()
    return np.fft.fft(s, n=_next_pow2(len(s)))


def power_spectrum(series, duration_ms):
    """One-sided power spectrum of a window.

    ``powers`` is scaled so that it sums to the energy of the mean-removed
    series. Frequencies use the effective rate ``len(series) / duration``.
    """
    s = np.asarray(series, dtype=np.float64)
    n = len(s)
    if n < 8:
        raise TooFewSamples(f"need at least 8 samples, got {n}")
    nfft = _next_pow2(n)
    spec = np.fft.rfft(s - s.mean(), n=nfft)
    powers = np.abs(spec) ** 2 / nfft
    powers[1:nfft // 2] *= 2.0
    fs = n / (duration_ms / 1000.0)
    freqs = np.arange(len(powers)) * fs / nfft
    return freqs, powers


def spectral_features(series, duration_ms):
    """(band_power, median_frequency, spectral_entropy), DC excluded."""
    freqs, powers = power_spectrum(series, duration_ms)
    f, p = freqs[1:], powers[1:]
    total = p.sum()
    if total <= 0 or len(p) == 0:
        return 0.0, 0.0, 0.0
    band_power = float(p.mean())
    cum = np.cumsum(p)
    median_freq = float(f[np.searchsorted(cum, total / 2.0, side="left")])
    if len(p) == 1:
        return band_power, median_freq, 0.0
    q = p / total
    nz = q[q > 0]
    entropy = float(-np.sum(nz * np.log(nz)) / math.log(len(p)))
    return band_power, median_freq, min(max(entropy, 0.0), 1.0)


# -- pairwise ------------------------------------------------------------------

@njit(cache=True)
def _dtw_kernel(a, b):
    n, m = a.shape[0], b.shape[0]
    prev = np.full(m + 1, np.inf)
    cur = np.full(m + 1, np.inf)
    prev[0] = 0.0
    for i in range(1, n + 1):
        cur[0] = np.inf
        ai = a[i - 1]
        for j in range(1, m + 1):
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = abs(ai - b[j - 1]) + best
        prev, cur = cur, prev
    return prev[m]


def dtw_distance(a, b) -> float:
    """Unconstrained DTW with absolute-difference cost and unit steps."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise EmptySequence("DTW needs non-empty sequences")
    return float(_dtw_kernel(a, b))


def standardize(series) -> np.ndarray:
    s = np.asarray(series, dtype=np.float64)
    sd = s.std()
    return (s - s.mean()) / sd if sd > 0 else np.zeros_like(s)


def mean_pool(series, max_points: int = DTW_MAX_POINTS) -> np.ndarray:
    s = np.asarray(series, dtype=np.float64)
    if len(s) <= max_points:
        return s
    factor = math.ceil(len(s) / max_points)
    n_full = len(s) // factor
    pooled = s[: n_full * factor].reshape(n_full, factor).mean(axis=1)
    if len(s) > n_full * factor:
        pooled = np.r_[pooled, s[n_full * factor:].mean()]
    return pooled


def _bin_index(s: np.ndarray, bins: int = HIST_BINS) -> np.ndarray:
    lo, hi = s.min(), s.max()
    if hi <= lo:
        return np.zeros(len(s), dtype=np.int64)
    idx = np.floor((s - lo) / (hi - lo) * bins).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def mutual_information(a, b) -> float:
    """Plug-in MI in bits from a 16x16 equal-width joint histogram."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) != len(b):
        raise LengthMismatch(f"{len(a)} != {len(b)}")
    if len(a) == 0:
        return 0.0
    ia, ib = _bin_index(a), _bin_index(b)
    joint = np.bincount(ia * HIST_BINS + ib, minlength=HIST_BINS * HIST_BINS)
    joint = joint.reshape(HIST_BINS, HIST_BINS) / len(a)
    pa, pb = joint.sum(axis=1), joint.sum(axis=0)
    nz = joint > 0
    mi = np.sum(joint[nz] * np.log2(joint[nz] / np.outer(pa, pb)[nz]))
    return float(max(mi, 0.0))


def correlation(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    da, db = a - a.mean(), b - b.mean()
    denom = math.sqrt(float(np.dot(da, da)) * float(np.dot(db, db)))
    if denom == 0:
        return 0.0
    return float(np.clip(np.dot(da, db) / denom, -1.0, 1.0))


# -- descriptive ---------------------------------------------------------------

def descriptive_features(series):
    s = np.asarray(series, dtype=np.float64)
    q1, q3 = np.percentile(s, [25, 75])
    energy = float(np.mean(s * s))
    rms = math.sqrt(energy)
    peak_to_rms = float(np.max(np.abs(s)) / rms) if rms > 0 else 0.0
    return (float(s.mean()), float(s.std()), float(q3 - q1), float(s.max() - s.min()),
            energy, peak_to_rms)


def histogram16(series) -> np.ndarray:
    s = np.asarray(series, dtype=np.float64)
    counts = np.bincount(_bin_index(s), minlength=HIST_BINS)
    return counts / len(s)


def screen_on_fraction(window: Window) -> float:
    return float(np.mean(window.screen_on))


def extract_features(window: Window) -> WindowFeatures:
    dur = window.duration_ms
    series = {"x": np.asarray(window.x, float), "y": np.asarray(window.y, float),
              "z": np.asarray(window.z, float)}
    series["m"] = compute_magnitude(series["x"], series["y"], series["z"])
    out = np.empty(N_FEATURES)
    pos = 0
    for axis in AXES:
        s = series[axis]
        out[pos:pos + 6] = descriptive_features(s)
        out[pos + 6:pos + 9] = spectral_features(s, dur)
        out[pos + 9:pos + 25] = histogram16(s)
        pos += 25
    pooled = {a: mean_pool(standardize(series[a])) for a in ("x", "y", "z")}
    for p, q in PAIRS:
        out[pos] = dtw_distance(pooled[p], pooled[q])
        out[pos + 1] = mutual_information(series[p], series[q])
        out[pos + 2] = correlation(series[p], series[q])
        pos += 3
    out[pos] = screen_on_fraction(window)
    return WindowFeatures(out, window.user_id, window.start_ms)


def extract_matrix(windows) -> tuple[np.ndarray, np.ndarray]:
    """Stack feature vectors; returns (matrix, start_ms array)."""
    if not windows:
        return np.zeros((0, N_FEATURES)), np.zeros(0, dtype=np.int64)
    vecs = [extract_features(w).values for w in windows]
    return np.vstack(vecs), np.array([w.start_ms for w in windows], dtype=np.int64)


def write_feature_csv(path, user_ids, starts, matrix) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "start_ms", *FEATURE_NAMES])
        for uid, st, row in zip(user_ids, starts, matrix):
            w.writerow([uid, int(st), *(repr(float(v)) for v in row)])


# -- normalisation ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MinMaxNormalizer:
    lo: np.ndarray
    hi: np.ndarray

    def apply(self, vectors) -> np.ndarray:
        v = np.asarray(vectors, dtype=np.float64)
        span = self.hi - self.lo
        safe = np.where(span > 0, span, 1.0)
        out = np.clip((v - self.lo) / safe, 0.0, 1.0)
        return np.where(span > 0, out, 0.0)

    def to_dict(self):
        return {"min": self.lo.tolist(), "max": self.hi.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["min"], dtype=np.float64), np.asarray(d["max"], dtype=np.float64))


def fit_minmax(train) -> MinMaxNormalizer:
    train = np.atleast_2d(np.asarray(train, dtype=np.float64))
    if train.shape[0] == 0:
        raise ValueError("need at least one training vector")
    return MinMaxNormalizer(train.min(axis=0), train.max(axis=0))


def apply_minmax(norm: MinMaxNormalizer, vector) -> np.ndarray:
    return norm.apply(vector)


def ks_normality_screen(columns, alpha: float = 0.05) -> np.ndarray:
    """True where a standardised column fails the standard-normal KS test."""
    from .stats import ks_test_standard_normal

    cols = np.asarray(columns, dtype=np.float64)
    return np.array([ks_test_standard_normal(standardize(cols[:, j])).p_value < alpha
                     for j in range(cols.shape[1])])


# -- correlation-based feature selection -------------------------------------------

@dataclass(frozen=True)
class FeatureSubset:
    indices: tuple[int, ...]
    merit: float


def _abs_corr_matrix(X: np.ndarray) -> np.ndarray:
    Xc = X - X.mean(axis=0)
    norms = np.sqrt(np.sum(Xc * Xc, axis=0))
    ok = norms > 0
    Xn = np.zeros_like(Xc)
    Xn[:, ok] = Xc[:, ok] / norms[ok]
    return np.clip(np.abs(Xn.T @ Xn), 0.0, 1.0)


def _abs_label_corr(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.array([abs(correlation(X[:, j], y)) for j in range(X.shape[1])])


def cfs_merit(subset, rcf: np.ndarray, rff: np.ndarray) -> float:
    idx = list(subset)
    k = len(idx)
    if k == 0:
        return 0.0
    mean_cf = float(np.mean(rcf[idx]))
    if k == 1:
        mean_ff = 0.0
    else:
        sub = rff[np.ix_(idx, idx)]
        mean_ff = float((sub.sum() - np.trace(sub)) / (k * (k - 1)))
    denom = math.sqrt(k + k * (k - 1) * mean_ff)
    return k * mean_cf / denom if denom > 0 else 0.0


def cfs_select(vectors, labels, width: int = 5, patience: int = 5, tol: float = 1e-12) -> FeatureSubset:
    """Forward best-first search over the CFS merit.

    The open list keeps at most ``width`` subsets; search stops after
    ``patience`` expansions in a row fail to beat the best merit. Only strict
    improvements (beyond ``tol``) replace the incumbent, so ties favour the
    smaller, earlier subset.
    """
    X = np.asarray(vectors, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if X.shape[0] < 2 or len(np.unique(y)) < 2:
        raise DegenerateLabels("feature selection needs both classes")
    d = X.shape[1]
    rcf = _abs_label_corr(X, y)
    rff = _abs_corr_matrix(X)

    best_set: tuple[int, ...] = ()
    best_merit = -1.0
    # heap entries: (-merit, size, subset, sum_cf, sum_ff)
    open_list = [(-0.0, 0, (), 0.0, 0.0)]
    visited = {frozenset()}
    stale = 0
    while open_list and stale < patience:
        _, k, subset, sum_cf, sum_ff = heapq.heappop(open_list)
        members = list(subset)
        cand = np.setdiff1d(np.arange(d), members)
        if cand.size == 0:
            stale += 1
            continue
        kk = k + 1
        new_cf = sum_cf + rcf[cand]
        new_ff = sum_ff + (rff[np.ix_(cand, members)].sum(axis=1) if members else 0.0)
        mean_cf = new_cf / kk
        mean_ff = new_ff / (kk * (kk - 1) / 2) if kk > 1 else np.zeros_like(new_cf)
        denom = np.sqrt(kk + kk * (kk - 1) * mean_ff)
        merits = np.where(denom > 0, kk * mean_cf / np.where(denom > 0, denom, 1.0), 0.0)
        improved = False
        order = np.lexsort((cand, -merits))
        for pos in order:
            child = tuple(sorted(members + [int(cand[pos])]))
            key = frozenset(child)
            if key in visited:
                continue
            visited.add(key)
            m = float(merits[pos])
            heapq.heappush(open_list, (-m, kk, child, float(new_cf[pos]),
                                       float(new_ff[pos]) if kk > 1 else 0.0))
            if m > best_merit + tol:
                best_merit, best_set = m, child
                improved = True
        if len(open_list) > width:
            open_list = heapq.nsmallest(width, open_list)
            heapq.heapify(open_list)
        stale = 0 if improved else stale + 1
    if not best_set:
        j = int(np.argmax(rcf))
        return FeatureSubset((j,), float(rcf[j]))
    return FeatureSubset(tuple(sorted(best_set)), best_merit)

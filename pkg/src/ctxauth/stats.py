"""Nonparametric tests used for the normality screen and classifier comparison."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaincc


class EmptySample(ValueError):
    pass


class DegenerateMatrix(ValueError):
    pass


class AllZeroDifferences(ValueError):
    pass


@dataclass(frozen=True)
class TestOutcome:
    statistic: float
    p_value: float
    method: str
    n: int
    k: int | None = None
    extra: dict = field(default_factory=dict, compare=False)

    __test__ = False  # keep pytest from collecting this class


def normal_cdf(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def kolmogorov_q(lam: float, eps: float = 1e-10, max_terms: int = 100) -> float:
    """Survival function of the asymptotic Kolmogorov distribution.

    Summation stops once a term is negligible relative to the running sum
    (``eps``) or to the previous term (1e-3).
    """
    if lam <= 0:
        return 1.0
    total = 0.0
    sign = 1.0
    prev_term = 0.0
    for j in range(1, max_terms + 1):
        term = sign * 2.0 * math.exp(-2.0 * j * j * lam * lam)
        total += term
        if abs(term) <= eps * total or abs(term) <= 1e-3 * prev_term:
            return min(max(total, 0.0), 1.0)
        prev_term = abs(term)
        sign = -sign
    # the alternating series has not converged: lambda is tiny
    return 1.0


def ks_test_standard_normal(samples) -> TestOutcome:
    x = np.sort(np.asarray(samples, dtype=np.float64))
    n = len(x)
    if n == 0:
        raise EmptySample("KS test needs at least one value")
    cdf = np.array([normal_cdf(v) for v in x])
    i = np.arange(1, n + 1)
    d = float(max(np.max(np.abs(i / n - cdf)), np.max(np.abs((i - 1) / n - cdf))))
    sqn = math.sqrt(n)
    p = kolmogorov_q((sqn + 0.12 + 0.11 / sqn) * d)
    return TestOutcome(d, p, "ks_standard_normal", n)


def midranks(values) -> np.ndarray:
    """1-based ranks with ties sharing the average rank."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v))
    sv = v[order]
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def chi2_sf(x: float, df: int) -> float:
    if x <= 0:
        return 1.0
    return float(gammaincc(df / 2.0, x / 2.0))


def friedman_test(matrix) -> TestOutcome:
    """Friedman rank test; rows are blocks (users), columns treatments."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 2 or m.shape[1] < 2:
        raise DegenerateMatrix(f"need at least 2x2, got shape {m.shape}")
    n, k = m.shape
    ranks = np.vstack([midranks(row) for row in m])
    rsum = ranks.sum(axis=0)
    stat = 12.0 / (n * k * (k + 1)) * float(np.sum(rsum ** 2)) - 3.0 * n * (k + 1)
    ties = 0.0
    for row in m:
        _, counts = np.unique(row, return_counts=True)
        ties += float(np.sum(counts ** 3 - counts))
    correction = 1.0 - ties / (n * k * (k * k - 1))
    if correction <= 1e-12:
        return TestOutcome(0.0, 1.0, "friedman", n, k)
    stat = max(stat / correction, 0.0)
    return TestOutcome(stat, chi2_sf(stat, k - 1), "friedman", n, k)


def _signed_rank_parts(a, b):
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    d = d[d != 0]
    if d.size == 0:
        raise AllZeroDifferences("every paired difference is zero")
    r = midranks(np.abs(d))
    return d, r, float(r[d > 0].sum()), float(r[d < 0].sum())


def wilcoxon_signed_rank(a, b, exact_max_n: int = 12) -> TestOutcome:
    """Two-sided Wilcoxon signed-rank test.

    Exact p by enumerating every sign pattern when the number of non-zero
    differences is at most ``exact_max_n``; otherwise the normal
    approximation with continuity and tie corrections.
    """
    if len(a) != len(b):
        raise ValueError("paired samples must have equal length")
    d, r, w_plus, w_minus = _signed_rank_parts(a, b)
    n = len(d)
    w = min(w_plus, w_minus)
    total = float(r.sum())
    if n <= exact_max_n:
        signs = np.array(list(itertools.product((0.0, 1.0), repeat=n)))
        dist = signs @ r
        centre = total / 2.0
        obs = abs(w_plus - centre)
        p = float(np.mean(np.abs(dist - centre) >= obs - 1e-9))
        method = "wilcoxon_exact"
    else:
        mu = n * (n + 1) / 4.0
        _, counts = np.unique(np.abs(d), return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(counts ** 3 - counts)) / 48.0
        z = max(abs(w_plus - mu) - 0.5, 0.0) / math.sqrt(var) if var > 0 else 0.0
        p = math.erfc(z / math.sqrt(2.0))
        method = "wilcoxon_normal"
    return TestOutcome(w, min(max(p, 0.0), 1.0), method, n,
                       extra={"w_plus": w_plus, "w_minus": w_minus})


# -- classifier comparison ---------------------------------------------------------

@dataclass
class ComparisonRow:
    algo_a: str
    algo_b: str
    ks: TestOutcome | None
    friedman: TestOutcome | None
    wilcoxon: TestOutcome | None
    errors: dict

    @property
    def pair(self) -> str:
        return f"{self.algo_a}-{self.algo_b}"


@dataclass
class ComparisonReport:
    rows: list
    omnibus: TestOutcome | None = None
    n_users: int = 0

    def to_records(self):
        def p(o):
            return o.p_value if o is not None else None

        return [
            {"pair": r.pair, "ks_p": p(r.ks), "friedman_p": p(r.friedman),
             "wilcoxon_p": p(r.wilcoxon),
             "wilcoxon_w": r.wilcoxon.statistic if r.wilcoxon is not None else None,
             "errors": "; ".join(f"{k}: {v}" for k, v in sorted(r.errors.items()))}
            for r in self.rows
        ]


def compare_classifiers(summary) -> ComparisonReport:
    """Pairwise KS / Friedman / Wilcoxon over per-user mean EERs.

    ``summary`` is a :class:`~ctxauth.evaluation.PopulationSummary`; only users
    with an EER for every algorithm take part.
    """
    algos = list(summary.algorithms)
    users, matrix = summary.complete_matrix()
    if len(users) < 2 or len(algos) < 2:
        raise DegenerateMatrix("comparison needs at least 2 users and 2 algorithms")
    rows = []
    for i, j in itertools.combinations(range(len(algos)), 2):
        a, b = matrix[:, i], matrix[:, j]
        errors = {}
        ks = fr = wx = None
        diff = a - b
        sd = diff.std()
        z = (diff - diff.mean()) / sd if sd > 0 else np.zeros_like(diff)
        try:
            ks = ks_test_standard_normal(z)
        except ValueError as exc:
            errors["ks"] = f"{type(exc).__name__}: {exc}"
        try:
            fr = friedman_test(np.column_stack([a, b]))
        except ValueError as exc:
            errors["friedman"] = f"{type(exc).__name__}: {exc}"
        try:
            wx = wilcoxon_signed_rank(a, b)
        except ValueError as exc:
            errors["wilcoxon"] = f"{type(exc).__name__}: {exc}"
        rows.append(ComparisonRow(algos[i], algos[j], ks, fr, wx, errors))
    try:
        omnibus = friedman_test(matrix)
    except ValueError:
        omnibus = None
    return ComparisonReport(rows, omnibus, len(users))

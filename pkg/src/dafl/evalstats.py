"""Bootstrap confidence intervals and the rank-based significance battery.

The confidence interval is mu +/- z * sigma / sqrt(N) over N accuracies
measured on test sets resampled with replacement.  Method comparison
uses the Friedman chi-square test over rank rows, pairwise Wilcoxon
signed-rank tests, and Holm's step-down correction; average ranks plus
non-significant cliques are exported as the data behind a critical
difference diagram.
"""

from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.special

from .errors import ContractError


@dataclass(frozen=True)
class BootstrapCI:
    mu: float
    sigma: float
    n_tests: int
    z: float
    halfwidth: float


def bootstrap_accuracy_samples(
    predictions: np.ndarray, labels: np.ndarray, n_resamples: int = 1000, seed: int = 0
) -> np.ndarray:
    """Accuracy of fixed prediction/label pairs on resampled index sets.

    RNG contract (relied on by reimplementations sharing a seed): one
    ``default_rng(seed).integers(0, n, size=(n_resamples, n))`` draw
    supplies every resample index.
    """
    preds = np.asarray(predictions)
    y = np.asarray(labels)
    if preds.shape != y.shape or preds.size == 0:
        raise ContractError("bootstrap: predictions and labels must match and be nonempty")
    if n_resamples < 2:
        raise ContractError("bootstrap: need at least 2 resamples")
    correct = (preds == y).astype(np.float64)
    n = correct.size
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(n_resamples, n))
    return correct[idx].mean(axis=1)


def ci_from_samples(accs: np.ndarray, z: float = 1.96) -> BootstrapCI:
    """mu, sample standard deviation (divisor N-1), halfwidth z*sigma/sqrt(N)."""
    accs = np.asarray(accs, dtype=np.float64)
    n = accs.size
    if n < 2:
        raise ContractError("bootstrap: need at least 2 resamples")
    sigma = float(accs.std(ddof=1))
    return BootstrapCI(
        mu=float(accs.mean()),
        sigma=sigma,
        n_tests=n,
        z=z,
        halfwidth=z * sigma / math.sqrt(n),
    )


def bootstrap_from_pairs(
    predictions: np.ndarray,
    labels: np.ndarray,
    n_resamples: int = 1000,
    z: float = 1.96,
    seed: int = 0,
) -> BootstrapCI:
    """Resample fixed prediction/label pairs with replacement."""
    return ci_from_samples(
        bootstrap_accuracy_samples(predictions, labels, n_resamples, seed), z
    )


def bootstrap_ci(
    predict: Callable[[np.ndarray], np.ndarray],
    test_set: tuple[np.ndarray, np.ndarray],
    n_resamples: int = 1000,
    z: float = 1.96,
    seed: int = 0,
) -> BootstrapCI:
    """Predictions are computed once; only the index resampling repeats."""
    x, y = test_set
    if len(x) == 0:
        raise ContractError("bootstrap: empty test set")
    return bootstrap_from_pairs(predict(x), np.asarray(y), n_resamples, z, seed)


# ---------------------------------------------------------------------------
# Ranks


def average_ranks(values: Sequence[float], descending: bool = False) -> np.ndarray:
    """Ranks 1..n with ties averaged; descending=True ranks the largest 1."""
    v = np.asarray(values, dtype=np.float64)
    if descending:
        v = -v
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size)
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


@dataclass
class RankMatrix:
    """Per-block accuracies and their within-block ranks (rank 1 = best)."""

    methods: list[str]
    blocks: list[str]
    accuracies: np.ndarray
    ranks: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.accuracies = np.asarray(self.accuracies, dtype=np.float64)
        n, m = self.accuracies.shape
        if n != len(self.blocks) or m != len(self.methods):
            raise ContractError("rank matrix dimensions do not match labels")
        self.ranks = np.vstack(
            [average_ranks(row, descending=True) for row in self.accuracies]
        )
        expected = m * (m + 1) / 2
        if np.abs(self.ranks.sum(axis=1) - expected).max() > 1e-9:
            raise AssertionError("rank rows must sum to m(m+1)/2")

    @property
    def avg_ranks(self) -> np.ndarray:
        return self.ranks.mean(axis=0)


def friedman_test(matrix: RankMatrix) -> tuple[float, float]:
    """Friedman chi-square over the rank rows.

    stat = 12 / (n m (m+1)) * sum_j R_j^2 - 3 n (m+1), with R_j the rank
    sums; p is the upper chi-square tail with m-1 degrees of freedom via
    the regularized incomplete gamma function.
    """
    n, m = matrix.ranks.shape
    if n < 2 or m < 2:
        raise ContractError("friedman_test needs at least 2 blocks and 2 methods")
    r = matrix.ranks.sum(axis=0)
    stat = 12.0 / (n * m * (m + 1)) * float((r**2).sum()) - 3.0 * n * (m + 1)
    p = float(scipy.special.gammaincc((m - 1) / 2.0, max(stat, 0.0) / 2.0))
    return stat, p


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank


def _signed_rank_distribution(double_ranks: Sequence[int]) -> np.ndarray:
    """Counts of sign assignments per doubled positive-rank sum.

    Subset-sum convolution over 2^n assignments; identical to literal
    enumeration but polynomial time.  Ranks are doubled so tied average
    ranks (halves) become integers.
    """
    total = int(sum(double_ranks))
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r2 in double_ranks:
        nxt = counts.copy()
        nxt[r2:] += counts[: total + 1 - r2]
        counts = nxt
    return counts


def wilcoxon_signed_rank(
    x: Sequence[float], y: Sequence[float], exact_limit: int = 25
) -> tuple[float, float]:
    """Two-sided Wilcoxon signed-rank test on paired scores.

    Zero differences are dropped; |d| is ranked with average ties and
    W = min(W+, W-).  The p-value is P(min(W+, W-) <= W) under random
    signs: exact for effective n <= exact_limit, otherwise a normal
    approximation with continuity and tie corrections.  All-zero
    differences give p = 1.
    """
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    if a.shape != b.shape or a.size == 0:
        raise ContractError("wilcoxon: inputs must be nonempty and equal length")
    d = a - b
    d = d[d != 0]
    n = d.size
    if n == 0:
        return 0.0, 1.0
    ranks = average_ranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)
    if n <= exact_limit:
        double_ranks = [int(round(2 * r)) for r in ranks]
        counts = _signed_rank_distribution(double_ranks)
        total2 = int(sum(double_ranks))
        w2 = int(round(2 * w))
        sums = np.arange(total2 + 1)
        mask = np.minimum(sums, total2 - sums) <= w2
        p = float(counts[mask].sum() / 2.0**n)
        return w, min(p, 1.0)
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(((tie_counts**3 - tie_counts).sum())) / 48.0
    if var <= 0:
        return w, 1.0
    zscore = (w - mean + 0.5) / math.sqrt(var)
    p = 2.0 * 0.5 * math.erfc(-zscore / math.sqrt(2.0))
    return w, float(min(max(p, 0.0), 1.0))


def holm_adjust(
    pvals: Sequence[float], alpha: float = 0.05
) -> tuple[np.ndarray, np.ndarray]:
    """Holm's step-down correction.

    Sorted ascending, adjusted_(i) = min(1, max_{j<=i} (m-j+1) p_(j)).
    Rejections proceed through the sorted sequence while adjusted <=
    alpha and stop at the first failure.  Returned in input order.
    """
    p = np.asarray(pvals, dtype=np.float64)
    if np.any((p < 0) | (p > 1)):
        raise ContractError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    adjusted_sorted = np.empty(m)
    running = 0.0
    for i, idx in enumerate(order):
        running = max(running, (m - i) * p[idx])
        adjusted_sorted[i] = min(1.0, running)
    reject_sorted = np.zeros(m, dtype=bool)
    for i in range(m):
        if adjusted_sorted[i] <= alpha:
            reject_sorted[i] = True
        else:
            break
    adjusted = np.empty(m)
    reject = np.zeros(m, dtype=bool)
    adjusted[order] = adjusted_sorted
    reject[order] = reject_sorted
    return adjusted, reject


# ---------------------------------------------------------------------------
# Combined report


@dataclass
class SignificanceReport:
    methods: list[str]
    alpha: float
    friedman_stat: float
    friedman_p: float
    raw_p: np.ndarray  # (m, m) symmetric, 1.0 on the diagonal
    adjusted_p: np.ndarray
    reject: np.ndarray
    avg_ranks: np.ndarray


def significance_report(matrix: RankMatrix, alpha: float = 0.05) -> SignificanceReport:
    """Friedman test plus pairwise Wilcoxon with Holm correction."""
    m = len(matrix.methods)
    stat, p = friedman_test(matrix)
    pairs = list(itertools.combinations(range(m), 2))
    raw = np.ones((m, m))
    for i, j in pairs:
        _, pij = wilcoxon_signed_rank(matrix.accuracies[:, i], matrix.accuracies[:, j])
        raw[i, j] = raw[j, i] = pij
    flat = np.array([raw[i, j] for i, j in pairs])
    adj_flat, rej_flat = holm_adjust(flat, alpha)
    adjusted = np.ones((m, m))
    reject = np.zeros((m, m), dtype=bool)
    for k, (i, j) in enumerate(pairs):
        adjusted[i, j] = adjusted[j, i] = adj_flat[k]
        reject[i, j] = reject[j, i] = rej_flat[k]
    return SignificanceReport(
        methods=list(matrix.methods),
        alpha=alpha,
        friedman_stat=stat,
        friedman_p=p,
        raw_p=raw,
        adjusted_p=adjusted,
        reject=reject,
        avg_ranks=matrix.avg_ranks,
    )


def nonsignificant_cliques(report: SignificanceReport) -> list[list[str]]:
    """Maximal sets of methods that are pairwise non-significant."""
    m = len(report.methods)
    compatible = ~report.reject
    cliques: list[tuple[int, ...]] = []
    for size in range(m, 0, -1):
        for combo in itertools.combinations(range(m), size):
            if all(compatible[i, j] for i, j in itertools.combinations(combo, 2)):
                if not any(set(combo) <= set(kept) for kept in cliques):
                    cliques.append(combo)
    ordered = sorted(cliques, key=lambda c: (len(c) * -1, c))
    return [[report.methods[i] for i in combo] for combo in ordered]


def export_report(report: SignificanceReport, path) -> None:
    """JSON dump with everything needed to draw a CD diagram externally."""
    methods = report.methods
    doc = {
        "alpha": report.alpha,
        "methods": methods,
        "friedman": {"stat": report.friedman_stat, "p": report.friedman_p},
        "average_ranks": {m: float(r) for m, r in zip(methods, report.avg_ranks)},
        "pairwise_raw_p": {
            a: {b: float(report.raw_p[i, j]) for j, b in enumerate(methods) if j != i}
            for i, a in enumerate(methods)
        },
        "pairwise_adjusted_p": {
            a: {b: float(report.adjusted_p[i, j]) for j, b in enumerate(methods) if j != i}
            for i, a in enumerate(methods)
        },
        "rejected": {
            a: {b: bool(report.reject[i, j]) for j, b in enumerate(methods) if j != i}
            for i, a in enumerate(methods)
        },
        "cliques": nonsignificant_cliques(report),
    }
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    tmp = str(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)

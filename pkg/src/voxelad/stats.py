"""Bootstrap comparisons, Wilcoxon signed-rank tests, Bonferroni correction.

The bootstrap is paired: each iteration draws one set of sample indices
(with replacement) and applies it to every method, so difference intervals
reflect method differences rather than resampling noise. Iteration i draws
from its own substream seeded by (seed, i); results are therefore
independent of any scheduling or batching.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import erfc, sqrt

import numpy as np
from scipy.stats import rankdata

from .metrics import _ap_from_groups, _auc_from_groups, _group_counts, _group_layout

METRIC_FUNCS = {"ap": _ap_from_groups, "auc": _auc_from_groups}

EXACT_MAX_N = 20  # full sign enumeration up to here, normal approximation beyond
_BLOCK = 4096  # bootstrap iterations vectorized per block


@dataclass
class BootstrapResult:
    methods: tuple[str, ...]
    metric: str
    iters: int
    seed: int
    point: dict[str, float]
    # per-method summaries: mean and the 2.5 / 50 / 97.5 percentiles
    summary: dict[str, dict[str, float]]
    # pairwise "a-b" difference summaries with percentile CIs
    differences: dict[str, dict[str, float]]
    n_redraws: int = 0
    ci_level: float = 0.95

    def to_dict(self) -> dict:
        return {
            "methods": list(self.methods), "metric": self.metric,
            "iters": self.iters, "seed": self.seed, "ci_level": self.ci_level,
            "point": self.point, "summary": self.summary,
            "differences": self.differences, "n_redraws": self.n_redraws,
        }


@dataclass
class PairedTestResult:
    method_a: str
    method_b: str
    n: int  # pairs remaining after dropping zero differences
    statistic: float  # W, the sum of signed ranks
    p_two_sided: float
    p_bonferroni: float
    n_zeros_dropped: int
    exact: bool

    def to_dict(self) -> dict:
        return {
            "method_a": self.method_a, "method_b": self.method_b,
            "n": self.n, "statistic": self.statistic,
            "p_two_sided": self.p_two_sided, "p_bonferroni": self.p_bonferroni,
            "n_zeros_dropped": self.n_zeros_dropped, "exact": self.exact,
        }


def _draw_counts(seed: int, iteration: int, labels: np.ndarray) -> tuple[np.ndarray, int]:
    """Multiplicity counts for one bootstrap resample; resamples missing a
    class are redrawn from the same substream."""
    rng = np.random.default_rng([seed, iteration])
    n = labels.size
    redraws = 0
    while True:
        idx = rng.integers(0, n, n)
        counts = np.bincount(idx, minlength=n)
        n_pos = counts @ labels
        if 0 < n_pos < n:
            return counts, redraws
        redraws += 1


def bootstrap_compare(
    scores_by_method: dict[str, np.ndarray],
    labels,
    metric: str = "auc",
    iters: int = 10000,
    seed: int = 0,
    ci_level: float = 0.95,
) -> BootstrapResult:
    """Paired bootstrap of a ranking metric across methods.

    scores_by_method maps method name -> per-sample score vector; all
    vectors share the label vector. Percentile CIs are reported for each
    method and for every pairwise difference (in method order, "a-b").
    """
    if metric not in METRIC_FUNCS:
        raise ValueError(f"unknown metric {metric!r} (use 'ap' or 'auc')")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    labels = np.asarray(labels, dtype=np.float64)
    n = labels.size
    n_pos = int(labels.sum())
    if n_pos < 2 or n - n_pos < 2:
        raise ValueError("need at least 2 samples of each class")
    methods = tuple(scores_by_method)
    metric_fn = METRIC_FUNCS[metric]

    layouts = {}
    for name in methods:
        s = np.asarray(scores_by_method[name], dtype=np.float64)
        if s.shape != labels.shape:
            raise ValueError(f"method {name!r}: scores and labels differ in length")
        order, starts = _group_layout(s)
        layouts[name] = (order, starts, labels[order])

    point = {}
    ones = np.ones((1, n))
    for name, (order, starts, y) in layouts.items():
        pos, tot = _group_counts(ones, y, starts)
        point[name] = float(metric_fn(pos, tot)[0])

    values = {name: np.empty(iters) for name in methods}
    n_redraws = 0
    counts_block = np.empty((min(_BLOCK, iters), n))
    for lo in range(0, iters, _BLOCK):
        hi = min(lo + _BLOCK, iters)
        block = counts_block[: hi - lo]
        for i in range(lo, hi):
            counts, redraws = _draw_counts(seed, i, labels)
            block[i - lo] = counts
            n_redraws += redraws
        for name, (order, starts, y) in layouts.items():
            pos, tot = _group_counts(block[:, order], y, starts)
            values[name][lo:hi] = metric_fn(pos, tot)

    lo_q, hi_q = 100 * (1 - ci_level) / 2, 100 * (1 + ci_level) / 2
    summary = {}
    for name in methods:
        v = values[name]
        q = np.percentile(v, [2.5, 50, 97.5])
        summary[name] = {
            "mean": float(v.mean()),
            "p2_5": float(q[0]), "median": float(q[1]), "p97_5": float(q[2]),
        }

    differences = {}
    for i, a in enumerate(methods):
        for b in methods[i + 1:]:
            d = values[a] - values[b]
            q = np.percentile(d, [lo_q, 50, hi_q])
            differences[f"{a}-{b}"] = {
                "mean": float(d.mean()),
                "ci_lo": float(q[0]), "median": float(q[1]), "ci_hi": float(q[2]),
                "point": point[a] - point[b],
            }

    return BootstrapResult(
        methods=methods, metric=metric, iters=iters, seed=seed,
        point=point, summary=summary, differences=differences,
        n_redraws=n_redraws, ci_level=ci_level,
    )


def _exact_two_sided_p(doubled_ranks: np.ndarray, w_doubled: int) -> float:
    """P(|W'| >= |W|) under uniform random signs, by dynamic programming
    over the distribution of the (doubled) positive-rank sum; equivalent to
    enumerating all 2^n sign patterns."""
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for rho in doubled_ranks:
        rho = int(rho)
        new = counts.copy()
        new[rho:] += counts[: total + 1 - rho]
        counts = new
    support = 2 * np.arange(total + 1) - total  # doubled W for each R+
    tail = counts[np.abs(support) >= abs(w_doubled)].sum()
    return float(tail / counts.sum())


def wilcoxon_signed_rank(a, b=None, m_tests: int = 1) -> PairedTestResult:
    """Signed-rank test on paired values (or differences if b is None).

    W is the sum of signed midranks of |a-b| after dropping zero
    differences. The two-sided p-value is exact (full sign enumeration) for
    n <= 20 and a normal approximation with tie and continuity correction
    beyond that.
    """
    a = np.asarray(a, dtype=np.float64)
    d = a if b is None else a - np.asarray(b, dtype=np.float64)
    nonzero = d != 0
    n_zeros = int((~nonzero).sum())
    d = d[nonzero]
    n = d.size
    if n == 0:
        raise ValueError("all differences are zero")
    if n < 5:
        raise ValueError(f"need at least 5 nonzero differences, got {n}")

    ranks = rankdata(np.abs(d), method="average")
    w = float(np.sum(np.sign(d) * ranks))

    if n <= EXACT_MAX_N:
        doubled = np.rint(2 * ranks).astype(np.int64)
        p = _exact_two_sided_p(doubled, int(round(2 * w)))
        exact = True
    else:
        # Var(W) = sum of squared midranks (ties shrink it automatically);
        # continuity correction of one W-lattice step
        sigma = sqrt(float(np.sum(ranks * ranks)))
        z = max(abs(w) - 1.0, 0.0) / sigma
        p = min(1.0, erfc(z / sqrt(2.0)))
        exact = False

    return PairedTestResult(
        method_a="a", method_b="b", n=n, statistic=w,
        p_two_sided=p, p_bonferroni=bonferroni_adjust(p, m_tests),
        n_zeros_dropped=n_zeros, exact=exact,
    )


def bonferroni_adjust(p: float, m: int) -> float:
    """Family-wise adjusted p-value: min(1, m*p)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0,1], got {p}")
    if m < 1:
        raise ValueError("m must be >= 1")
    return min(1.0, m * p)


def bonferroni_threshold(alpha: float, m: int) -> float:
    """Per-test significance threshold alpha/m."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return alpha / m

"""Independent brute-force oracles used to pin expected values.

These deliberately avoid the implementation's sort/group machinery:
metrics are computed by direct per-element comparisons, the projection
residual by dense least squares, and the signed-rank tail by explicit
enumeration of sign patterns.
"""

from __future__ import annotations

from itertools import product

import numpy as np


def auc_pairs_oracle(scores, labels) -> float:
    """Fraction of (positive, negative) pairs won by the positive; ties 0.5."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


def ap_precision_at_k_oracle(scores, labels) -> float:
    """Mean precision at each positive, evaluated at its tie-group boundary."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    precisions = []
    for s in scores[labels == 1]:
        above = scores > s
        tied = scores == s
        tp = labels[above].sum() + labels[tied].sum()
        total = above.sum() + tied.sum()
        precisions.append(tp / total)
    return float(np.mean(precisions))


def lstsq_residual_oracle(train_vectors: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Residual of z against span(train_vectors) via dense least squares.

    train_vectors: (N, D) rows; z: (D,).
    """
    A = np.asarray(train_vectors, dtype=np.float64).T  # (D, N)
    coef, *_ = np.linalg.lstsq(A, np.asarray(z, dtype=np.float64), rcond=None)
    return z - A @ coef


def wilcoxon_tail_enumeration(diffs) -> tuple[float, float]:
    """(W, two-sided p) by brute enumeration of every sign pattern.

    Only feasible for small n; ranks of |d| use midranks for ties.
    """
    diffs = np.asarray(diffs, dtype=np.float64)
    diffs = diffs[diffs != 0]
    n = len(diffs)
    absd = np.abs(diffs)
    order = np.argsort(absd)
    ranks = np.empty(n)
    i = 0
    sorted_abs = absd[order]
    while i < n:
        j = i
        while j < n and sorted_abs[j] == sorted_abs[i]:
            j += 1
        ranks[order[i:j]] = (i + j + 1) / 2.0  # midrank of 1-based positions
        i = j
    w_obs = float(np.sum(np.sign(diffs) * ranks))
    count = 0
    for signs in product((-1.0, 1.0), repeat=n):
        w = float(np.dot(signs, ranks))
        if abs(w) >= abs(w_obs) - 1e-12:
            count += 1
    return w_obs, count / 2.0**n

"""Ranking metrics (tie-aware AP and AUC) and score aggregation.

Both metrics treat tied scores as a single group, so results never depend
on sort stability. AUC is the Mann-Whitney pair fraction with ties counted
half; AP averages, over positives in descending score order, the precision
at each positive's tie-group boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import HeadMask, ScoreMap, check_same_grid


@dataclass
class EvalReport:
    method: str
    task: str  # "voxel" or "sample"
    ap: float
    auc: float
    n_pos: int
    n_neg: int

    def __post_init__(self):
        if not (0.0 <= self.ap <= 1.0 and 0.0 <= self.auc <= 1.0):
            raise ValueError(f"metric out of [0,1]: ap={self.ap} auc={self.auc}")

    def to_dict(self) -> dict:
        return {
            "method": self.method, "task": self.task,
            "ap": self.ap, "auc": self.auc,
            "n_pos": self.n_pos, "n_neg": self.n_neg,
        }


def _validate(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 1 or scores.shape != labels.shape:
        raise ValueError("scores and labels must be 1-D and of equal length")
    if scores.size < 1:
        raise ValueError("empty input")
    if not np.isfinite(scores).all():
        raise ValueError("scores must be finite")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return scores, labels.astype(np.float64)


def _group_layout(scores: np.ndarray):
    """Descending sort order plus tie-group start offsets."""
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    return order, starts


def _group_counts(weights: np.ndarray, labels_sorted: np.ndarray, starts: np.ndarray):
    """Per tie-group positive and total counts; weights is (B, n) sorted
    the same way as labels_sorted."""
    pos = np.add.reduceat(weights * labels_sorted, starts, axis=1)
    tot = np.add.reduceat(weights, starts, axis=1)
    return pos, tot


def _ap_from_groups(pos: np.ndarray, tot: np.ndarray) -> np.ndarray:
    cum_pos = np.cumsum(pos, axis=1)
    cum_tot = np.cumsum(tot, axis=1)
    precision = cum_pos / np.maximum(cum_tot, 1.0)
    total_pos = cum_pos[:, -1]
    contrib = np.where(pos > 0, pos * precision, 0.0)
    return contrib.sum(axis=1) / total_pos


def _auc_from_groups(pos: np.ndarray, tot: np.ndarray) -> np.ndarray:
    neg = tot - pos
    total_pos = pos.sum(axis=1)
    total_neg = neg.sum(axis=1)
    cum_neg = np.cumsum(neg, axis=1)
    # negatives strictly below each group, plus half the in-group ties
    below = total_neg[:, None] - cum_neg
    num = (pos * below).sum(axis=1) + 0.5 * (pos * neg).sum(axis=1)
    return num / (total_pos * total_neg)


def average_precision(scores, labels) -> float:
    scores, labels = _validate(scores, labels)
    if labels.sum() < 1:
        raise ValueError("average precision needs at least one positive label")
    order, starts = _group_layout(scores)
    pos, tot = _group_counts(np.ones((1, scores.size)), labels[order], starts)
    return float(_ap_from_groups(pos, tot)[0])


def auc(scores, labels) -> float:
    scores, labels = _validate(scores, labels)
    n_pos = labels.sum()
    if n_pos < 1 or n_pos > labels.size - 1:
        raise ValueError("AUC needs at least one positive and one negative label")
    order, starts = _group_layout(scores)
    pos, tot = _group_counts(np.ones((1, scores.size)), labels[order], starts)
    return float(_auc_from_groups(pos, tot)[0])


def sample_score(score_map: ScoreMap, mask: HeadMask) -> float:
    """Sum of voxel scores over the mask: the study-level score."""
    check_same_grid(score_map, mask, "score map and mask")
    return float(score_map.flat()[mask.flat()].astype(np.float64).sum())


def voxel_task_eval(
    pairs: list[tuple[ScoreMap, ScoreMap, HeadMask]],
    mask: HeadMask,
    method: str = "",
    pool_all_voxels: bool = False,
) -> list[EvalReport]:
    """Balanced per-pair voxel evaluation.

    Each pair is (healthy score map, pathological score map, lesion mask).
    Voxels of both studies are pooled (over the head mask by default, over
    the whole array with pool_all_voxels=True); lesion voxels are the
    positives, everything else negative.
    """
    if not pairs:
        raise ValueError("need at least one (healthy, pathological) pair")
    reports = []
    m = np.ones(mask.dims, dtype=bool).reshape(-1) if pool_all_voxels else mask.flat()
    for healthy, pathological, lesion in pairs:
        check_same_grid(healthy, mask, "healthy map and mask")
        check_same_grid(pathological, mask, "pathological map and mask")
        check_same_grid(lesion, mask, "lesion mask and head mask")
        lesion_in = lesion.flat()[m]
        if not lesion_in.any():
            raise ValueError("pathological study with empty lesion mask")
        scores = np.concatenate([healthy.flat()[m], pathological.flat()[m]])
        labels = np.concatenate([np.zeros(int(m.sum()), dtype=int), lesion_in.astype(int)])
        reports.append(
            EvalReport(
                method=method, task="voxel",
                ap=average_precision(scores, labels), auc=auc(scores, labels),
                n_pos=int(labels.sum()), n_neg=int((1 - labels).sum()),
            )
        )
    return reports


def roc_points(scores, labels) -> np.ndarray:
    """(threshold, fpr, tpr) rows at each tie-group boundary, descending."""
    scores, labels = _validate(scores, labels)
    order, starts = _group_layout(scores)
    y = labels[order]
    pos, tot = _group_counts(np.ones((1, scores.size)), y, starts)
    cum_pos = np.cumsum(pos[0])
    cum_neg = np.cumsum(tot[0] - pos[0])
    thresholds = scores[order][starts]
    tpr = cum_pos / max(cum_pos[-1], 1.0)
    fpr = cum_neg / max(cum_neg[-1], 1.0)
    return np.column_stack([thresholds, fpr, tpr])


def pr_points(scores, labels) -> np.ndarray:
    """(threshold, recall, precision) rows at each tie-group boundary."""
    scores, labels = _validate(scores, labels)
    order, starts = _group_layout(scores)
    y = labels[order]
    pos, tot = _group_counts(np.ones((1, scores.size)), y, starts)
    cum_pos = np.cumsum(pos[0])
    cum_tot = np.cumsum(tot[0])
    thresholds = scores[order][starts]
    recall = cum_pos / max(cum_pos[-1], 1.0)
    precision = cum_pos / cum_tot
    return np.column_stack([thresholds, recall, precision])

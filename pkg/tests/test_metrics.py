import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxelad.grids import HeadMask, ScoreMap
from voxelad.metrics import (
    EvalReport,
    auc,
    average_precision,
    pr_points,
    roc_points,
    sample_score,
    voxel_task_eval,
)

from conftest import make_mask
from oracles import ap_precision_at_k_oracle, auc_pairs_oracle


class TestAveragePrecision:
    def test_perfect_ranking(self):
        assert average_precision([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0]) == 1.0

    def test_interleaved_hand_case(self):
        got = average_precision([0.9, 0.8, 0.3, 0.1], [1, 0, 1, 0])
        assert got == pytest.approx(5 / 6, abs=1e-12)

    def test_all_positive(self):
        assert average_precision([0.5, 0.2, 0.9], [1, 1, 1]) == 1.0

    def test_no_positives_errors(self):
        with pytest.raises(ValueError, match="positive"):
            average_precision([0.5, 0.2], [0, 0])

    def test_ties_form_single_group(self):
        # both tied items evaluated at the group boundary: precision 1/2
        assert average_precision([0.7, 0.7], [1, 0]) == 0.5


class TestAuc:
    def test_perfectly_separated(self):
        assert auc([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0]) == 1.0
        assert auc([0.9, 0.8, 0.3, 0.1], [0, 0, 1, 1]) == 0.0

    def test_interleaved_hand_case(self):
        assert auc([0.9, 0.8, 0.3, 0.1], [1, 0, 1, 0]) == pytest.approx(0.75, abs=1e-12)

    def test_all_equal_scores(self):
        assert auc([1.0, 1.0, 1.0, 1.0], [1, 0, 1, 0]) == 0.5

    def test_single_class_errors(self):
        with pytest.raises(ValueError, match="positive and one negative"):
            auc([0.5, 0.2], [1, 1])


def _random_instance(rng, n, tie_prob=0.5):
    if rng.random() < tie_prob:
        scores = rng.integers(0, max(2, n // 3), n).astype(float)
    else:
        scores = rng.standard_normal(n)
    labels = rng.integers(0, 2, n)
    if labels.sum() == 0:
        labels[rng.integers(0, n)] = 1
    if labels.sum() == n:
        labels[rng.integers(0, n)] = 0
    return scores, labels


def test_matches_brute_force_oracles():
    rng = np.random.default_rng(42)
    for _ in range(60):
        scores, labels = _random_instance(rng, int(rng.integers(2, 200)))
        assert average_precision(scores, labels) == pytest.approx(
            ap_precision_at_k_oracle(scores, labels), abs=1e-12
        )
        assert auc(scores, labels) == pytest.approx(
            auc_pairs_oracle(scores, labels), abs=1e-12
        )


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_monotone_invariance_exact(seed):
    rng = np.random.default_rng(seed)
    scores, labels = _random_instance(rng, 30)
    transformed = np.exp(scores / 4) * 3 + 1  # strictly increasing
    assert auc(scores, labels) == auc(transformed, labels)
    assert average_precision(scores, labels) == average_precision(transformed, labels)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_label_swap_negate_preserves_auc(seed):
    rng = np.random.default_rng(seed)
    scores, labels = _random_instance(rng, 25)
    assert auc(scores, labels) == auc(-scores, 1 - labels)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_metrics_within_unit_interval(seed):
    rng = np.random.default_rng(seed)
    scores, labels = _random_instance(rng, 40)
    assert 0.0 <= auc(scores, labels) <= 1.0
    assert 0.0 <= average_precision(scores, labels) <= 1.0


class TestSampleScore:
    def test_zero_map(self, small_mask):
        sm = ScoreMap(np.zeros(small_mask.dims, dtype=np.float32))
        assert sample_score(sm, small_mask) == 0.0

    def test_unit_scores_over_ten_voxel_mask(self):
        mask_data = np.zeros((5, 5, 1), dtype=bool)
        mask_data.reshape(-1)[:10] = True
        mask = HeadMask(mask_data)
        sm = ScoreMap(np.ones((5, 5, 1), dtype=np.float32))
        assert sample_score(sm, mask) == 10.0

    def test_scores_outside_mask_ignored(self):
        mask_data = np.zeros((4, 4, 1), dtype=bool)
        mask_data[0, 0, 0] = True
        mask = HeadMask(mask_data)
        scores = np.full((4, 4, 1), 7.0, dtype=np.float32)
        scores[0, 0, 0] = 0.0
        assert sample_score(ScoreMap(scores), mask) == 0.0

    def test_dims_mismatch(self, small_mask):
        with pytest.raises(ValueError, match="shape mismatch"):
            sample_score(ScoreMap(np.zeros((2, 2, 2), dtype=np.float32)), small_mask)


class TestVoxelTask:
    def _pair(self, rng, mask, lesion_boost=None):
        dims = mask.dims
        healthy = ScoreMap(np.abs(rng.standard_normal(dims)).astype(np.float32))
        path_scores = np.abs(rng.standard_normal(dims)).astype(np.float32)
        lesion_data = rng.random(dims) < 0.2
        lesion_data &= mask.data
        if not lesion_data.any():
            lesion_data[tuple(np.argwhere(mask.data)[0])] = True
        if lesion_boost is not None:
            path_scores[lesion_data] += lesion_boost
        return healthy, ScoreMap(path_scores), HeadMask(lesion_data)

    def test_dominant_lesion_scores_reach_auc_one(self, rng):
        mask = make_mask(dims=(6, 6, 2), frac=0.8)
        pairs = [self._pair(rng, mask, lesion_boost=100.0) for _ in range(3)]
        reports = voxel_task_eval(pairs, mask, method="test")
        assert all(r.auc == 1.0 for r in reports)

    def test_matches_pooled_oracle(self, rng):
        mask = make_mask(dims=(4, 4, 4), frac=0.9)
        pairs = [self._pair(rng, mask) for _ in range(2)]
        reports = voxel_task_eval(pairs, mask)
        m = mask.flat()
        for (healthy, path, lesion), report in zip(pairs, reports):
            scores = np.concatenate([healthy.flat()[m], path.flat()[m]])
            labels = np.concatenate(
                [np.zeros(mask.n_set, dtype=int), lesion.flat()[m].astype(int)]
            )
            assert report.ap == pytest.approx(ap_precision_at_k_oracle(scores, labels), abs=1e-12)
            assert report.auc == pytest.approx(auc_pairs_oracle(scores, labels), abs=1e-12)

    def test_cardinality(self, rng):
        mask = make_mask(dims=(5, 5, 2), frac=0.8)
        pairs = [self._pair(rng, mask) for _ in range(44)]
        assert len(voxel_task_eval(pairs, mask)) == 44

    def test_empty_lesion_errors(self, rng):
        mask = make_mask(dims=(4, 4, 2), frac=0.8)
        healthy, path, _ = self._pair(rng, mask)
        outside = ~mask.data
        assert outside.any()
        lesion = HeadMask(outside)  # nonempty, but nothing inside the head mask
        with pytest.raises(ValueError, match="empty lesion mask"):
            voxel_task_eval([(healthy, path, lesion)], mask)


def test_curve_points_endpoints(rng):
    scores, labels = _random_instance(rng, 50, tie_prob=1.0)
    roc = roc_points(scores, labels)
    assert roc[-1, 1] == 1.0 and roc[-1, 2] == 1.0  # ends at (1, 1)
    assert np.all(np.diff(roc[:, 1]) >= 0) and np.all(np.diff(roc[:, 2]) >= 0)
    pr = pr_points(scores, labels)
    assert pr[-1, 1] == 1.0  # full recall at the end
    assert np.all((pr[:, 2] >= 0) & (pr[:, 2] <= 1))


def test_eval_report_bounds():
    with pytest.raises(ValueError, match="out of"):
        EvalReport(method="x", task="sample", ap=1.2, auc=0.5, n_pos=1, n_neg=1)

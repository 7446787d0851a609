"""Max-softmax scoring, temperature search, partition, and AUROC."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from expecta.annot import Annotation, LabelDistribution, sample_expected
from expecta.detector import (
    DEFAULT_GRID,
    DEFAULT_SCORE_TARGET,
    CalibrationResult,
    auroc,
    calibrate_temperature,
    compute_logits,
    load_calibration_json,
    load_scores_csv,
    partition_outliers,
    save_calibration_json,
    save_scores_csv,
    score,
    score_from_logits,
    temperature_grid,
)
from expecta.exceptions import SpecificationError


class TestScoreFromLogits:
    def test_two_class_softmax_values(self):
        s = score_from_logits(np.array([[2.0, 0.0]]), 1.0)[0]
        assert s == pytest.approx(np.e**2 / (np.e**2 + 1), abs=1e-12)
        s2 = score_from_logits(np.array([[2.0, 0.0]]), 2.0)[0]
        assert s2 == pytest.approx(np.e / (np.e + 1), abs=1e-12)

    def test_equal_logits_score_half_at_any_temperature(self):
        for t in (0.5, 1.0, 7.0):
            assert score_from_logits(np.array([[3.3, 3.3]]), t)[0] == 0.5

    def test_large_temperature_flattens_to_half(self):
        s = score_from_logits(np.array([[9.0, -4.0]]), 1e6)[0]
        assert s == pytest.approx(0.5, abs=1e-5)

    def test_extreme_logits_stable(self):
        s = score_from_logits(np.array([[1000.0, -1000.0]]), 1.0)[0]
        assert s == 1.0

    @given(a=st.floats(-50, 50), b=st.floats(-50, 50),
           t1=st.floats(1.0, 30.0), t2=st.floats(1.0, 30.0))
    def test_score_decreases_with_temperature(self, a, b, t1, t2):
        if abs(a - b) < 1e-9 or abs(t1 - t2) < 1e-9:
            return
        lo_t, hi_t = min(t1, t2), max(t1, t2)
        s_lo = score_from_logits(np.array([[a, b]]), lo_t)[0]
        s_hi = score_from_logits(np.array([[a, b]]), hi_t)[0]
        assert s_hi < s_lo


class TestTemperatureGrid:
    def test_default_grid(self):
        grid = temperature_grid(*DEFAULT_GRID)
        assert grid[0] == 1.0 and grid[-1] == 20.0
        assert len(grid) == 77
        assert np.all(np.diff(grid) > 0)

    def test_includes_endpoint_when_step_divides(self):
        grid = temperature_grid(1.0, 2.0, 0.5)
        assert grid.tolist() == [1.0, 1.5, 2.0]

    def test_validation(self):
        with pytest.raises(SpecificationError):
            temperature_grid(0.0, 10.0, 0.25)
        with pytest.raises(SpecificationError):
            temperature_grid(5.0, 1.0, 0.25)
        with pytest.raises(SpecificationError):
            temperature_grid(1.0, 10.0, 0.0)


class TestCalibration:
    def test_degenerate_equal_logits_pick_smallest_t(self, tiny_trained):
        # every sample scores 0.5 at every temperature, so the objective is
        # constant and the tie breaks toward the smallest grid value
        anns = sample_expected(tiny_trained["spec"], 3, 8)

        class EqualLogits:
            n_params = 0

            def forward(self, x):
                return np.zeros((x.shape[0], 2), np.float32)

        result = calibrate_temperature(
            EqualLogits(), anns, tiny_trained["renderer"], 0.7, np.asarray([2.0, 3.0, 4.0])
        )
        assert result.t_star == 2.0

    def test_grid_rows_and_objective(self, tiny_trained):
        anns = sample_expected(tiny_trained["spec"], 4, 32)
        result = calibrate_temperature(
            tiny_trained["model"], anns, tiny_trained["renderer"],
            DEFAULT_SCORE_TARGET, np.asarray([1.0, 4.0, 16.0])
        )
        assert [r[0] for r in result.grid] == [1.0, 4.0, 16.0]
        logits = compute_logits(tiny_trained["model"], anns, tiny_trained["renderer"])
        for t, mean, var, obj in result.grid:
            s = score_from_logits(logits, t)
            assert mean == pytest.approx(float(s.mean()), abs=1e-12)
            assert var == pytest.approx(float(s.var()), abs=1e-12)
            assert obj == pytest.approx((mean - 0.7) ** 2 - var, abs=1e-12)
        best = min(result.grid, key=lambda r: r[3])
        assert result.row(result.t_star)[3] == best[3]

    def test_calibration_json_round_trip(self, tmp_path):
        result = CalibrationResult(
            t_star=2.5, target=0.7,
            grid=((1.0, 0.9, 0.01, 0.03), (2.5, 0.7, 0.05, -0.05)),
        )
        path = tmp_path / "calibration.json"
        save_calibration_json(result, path)
        back = load_calibration_json(path)
        assert back == result


class TestPartition:
    def test_supported_annotation_is_familiar(self, tiny_trained):
        support = tiny_trained["support"]
        anns = sample_expected(tiny_trained["spec"], 5, 200)
        part = partition_outliers(anns, support)
        assert len(part.familiar) + len(part.outliers) == 200
        # an annotation drawn from the biased collection itself must be familiar
        from expecta.dataset import autolabel_dataset

        collected_anns = autolabel_dataset(tiny_trained["collected"])
        part2 = partition_outliers(collected_anns[:50], support)
        assert len(part2.outliers) == 0

    def test_small_size_is_outlier(self, tiny_trained):
        # biased collection only contains sizes >= 23, so size 10 is unseen
        ann = Annotation(0, 5, 5, 15, 15, 220)
        part = partition_outliers([ann], tiny_trained["support"])
        assert part.outliers == (0,)

    def test_missing_class_raises(self, tiny_trained):
        squares_only = LabelDistribution(
            {k: v for k, v in tiny_trained["support"].supports.items() if k[0] == 1},
            tiny_trained["support"].n,
        )
        circle = Annotation(0, 5, 5, 28, 28, 220)
        with pytest.raises(SpecificationError):
            partition_outliers([circle], squares_only)

    def test_no_support_classes_all_outliers(self):
        empty = LabelDistribution({}, 0)
        anns = [Annotation(0, 5, 5, 15, 15, 220)]
        part = partition_outliers(anns, empty)
        assert part.outliers == (0,)

    @given(seed=st.integers(0, 2**31))
    def test_enlarging_support_never_removes_familiar(self, tiny_trained, seed):
        spec = tiny_trained["spec"]
        small = LabelDistribution.from_annotations(sample_expected(spec, 1, 40))
        grown = LabelDistribution.from_annotations(
            sample_expected(spec, 1, 40) + sample_expected(spec, 2, 40)
        )
        anns = sample_expected(spec, seed, 30)
        fam_small = set(partition_outliers(anns, small).familiar)
        fam_grown = set(partition_outliers(anns, grown).familiar)
        assert fam_small <= fam_grown


class TestAuroc:
    def test_perfect_separation(self):
        assert auroc([1, 2, 3, 4], [False, False, True, True]) == 1.0
        assert auroc([4, 3, 2, 1], [False, False, True, True]) == 0.0

    def test_identical_score_multisets(self):
        assert auroc([1, 2, 1, 2], [True, True, False, False]) == 0.5

    def test_single_class_raises(self):
        with pytest.raises(SpecificationError):
            auroc([1, 2, 3], [True, True, True])

    @given(st.integers(0, 2**31))
    def test_matches_pairwise_oracle_with_ties(self, seed):
        rng = np.random.default_rng(seed)
        n = 60
        scores = np.round(rng.normal(size=n), 1)  # coarse grid forces ties
        flags = rng.random(n) < 0.4
        if flags.all() or not flags.any():
            return
        a = auroc(scores, flags)
        pos, neg = scores[flags], scores[~flags]
        wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
        assert a == pytest.approx(wins / (len(pos) * len(neg)), abs=1e-9)

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(0)
        scores = rng.normal(size=100)
        flags = rng.random(100) < 0.5
        a1 = auroc(scores, flags)
        a2 = auroc(np.tanh(scores) * 3 + 1, flags)
        assert a1 == pytest.approx(a2, abs=1e-12)


class TestScoreRoundTrips:
    def test_scores_csv_round_trip(self, tiny_trained, tmp_path):
        anns = sample_expected(tiny_trained["spec"], 6, 20)
        records = score(tiny_trained["model"], anns, tiny_trained["renderer"], 2.0)
        flags = np.zeros(20, bool)
        flags[::3] = True
        path = tmp_path / "scores.csv"
        save_scores_csv(records, path, familiar=flags)
        back, back_flags = load_scores_csv(path)
        assert back == records
        assert back_flags == flags.tolist()

    def test_scores_csv_without_flags(self, tiny_trained, tmp_path):
        anns = sample_expected(tiny_trained["spec"], 6, 5)
        records = score(tiny_trained["model"], anns, tiny_trained["renderer"], 1.0)
        path = tmp_path / "scores.csv"
        save_scores_csv(records, path)
        back, back_flags = load_scores_csv(path)
        assert back == records and back_flags is None

    def test_score_orderings_stable_across_temperature(self, tiny_trained):
        anns = sample_expected(tiny_trained["spec"], 6, 50)
        logits = compute_logits(tiny_trained["model"], anns, tiny_trained["renderer"])
        s1 = score_from_logits(logits, 1.0)
        s9 = score_from_logits(logits, 9.0)
        assert np.array_equal(np.argsort(s1, kind="stable"), np.argsort(s9, kind="stable"))

    def test_empty_annotations_raise(self, tiny_trained):
        with pytest.raises(SpecificationError):
            compute_logits(tiny_trained["model"], [], tiny_trained["renderer"])

"""Annotation vectors, binned supports, and the signed overlap index."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from expecta.annot import (
    LABELS,
    Annotation,
    BinnedSupport,
    ExpectationSpec,
    LabelDistribution,
    estimate_support,
    mean_overlap,
    overlap_index,
    per_label_overlap,
    sample_expected,
)
from expecta.exceptions import SpecificationError, UndefinedOverlapError


def ann(y1=0, y2=2, y3=3, y4=10, y5=11, y6=128):
    return Annotation(y1, y2, y3, y4, y5, y6)


class TestAnnotation:
    def test_fields_and_size(self):
        a = ann()
        assert a.astuple() == (0, 2, 3, 10, 11, 128)
        assert a.size() == 8
        assert a.label_value(2) == 2 and a.label_value(6) == 128

    def test_rejects_non_square_box(self):
        with pytest.raises(SpecificationError):
            Annotation(0, 0, 0, 10, 12, 128)

    def test_rejects_degenerate_box(self):
        with pytest.raises(SpecificationError):
            Annotation(0, 5, 5, 5, 5, 128)

    def test_rejects_negative_corner(self):
        with pytest.raises(SpecificationError):
            Annotation(0, -1, 0, 9, 10, 128)

    def test_rejects_brightness_out_of_range(self):
        with pytest.raises(SpecificationError):
            Annotation(0, 0, 0, 10, 10, 0)
        with pytest.raises(SpecificationError):
            Annotation(0, 0, 0, 10, 10, 256)

    def test_canvas_validation(self):
        a = ann()
        a.validate_canvas((11, 11))
        with pytest.raises(SpecificationError):
            a.validate_canvas((10, 10))


class TestExpectationSpec:
    def test_restricted_keeps_ranges(self):
        spec = ExpectationSpec()
        only_squares = spec.restricted(1)
        assert only_squares.classes == (1,)
        assert only_squares.size_range == spec.size_range
        with pytest.raises(SpecificationError):
            spec.restricted(7)

    def test_size_range_must_fit_canvas(self):
        with pytest.raises(SpecificationError):
            ExpectationSpec(canvas=(32, 32), size_range=(8, 40))

    def test_jsonable_round_trip(self):
        spec = ExpectationSpec(canvas=(64, 64), size_range=(15, 60))
        assert ExpectationSpec.from_jsonable(spec.to_jsonable()) == spec


class TestSampleExpected:
    def test_count_and_determinism(self):
        spec = ExpectationSpec(canvas=(32, 32), size_range=(8, 30))
        a = sample_expected(spec, 7, 50)
        b = sample_expected(spec, 7, 50)
        assert len(a) == 50
        assert [x.astuple() for x in a] == [x.astuple() for x in b]
        c = sample_expected(spec, 8, 50)
        assert [x.astuple() for x in a] != [x.astuple() for x in c]

    @given(seed=st.integers(0, 2**32 - 1))
    def test_samples_respect_spec(self, seed):
        spec = ExpectationSpec(canvas=(32, 32), size_range=(8, 30),
                               brightness_range=(100, 255), classes=(0, 1))
        for a in sample_expected(spec, seed, 20):
            assert a.y1 in spec.classes
            assert spec.size_range[0] <= a.size() <= spec.size_range[1]
            assert spec.brightness_range[0] <= a.y6 <= spec.brightness_range[1]
            a.validate_canvas(spec.canvas)

    def test_class_restriction(self):
        spec = ExpectationSpec(canvas=(32, 32), size_range=(8, 30)).restricted(1)
        assert all(a.y1 == 1 for a in sample_expected(spec, 0, 30))


class TestEstimateSupport:
    def test_occupancy_and_measure(self):
        sup = estimate_support([0.5, 1.5, 1.7, 5.0])
        assert sup.measure() == 3.0
        assert sup.contains(1.9) and not sup.contains(2.5)

    def test_min_count_threshold(self):
        sup = estimate_support([1, 1, 2], min_count=2)
        assert sup.contains(1.0) and not sup.contains(2.0)

    def test_empty_input(self):
        sup = estimate_support([])
        assert sup.is_empty() and sup.measure() == 0.0

    @given(st.lists(st.floats(-100, 100), max_size=40), st.floats(-100, 100))
    def test_monotone_adding_values(self, values, extra):
        before = set(estimate_support(values).bin_indices().tolist())
        after = set(estimate_support(values + [extra]).bin_indices().tolist())
        assert before <= after


class TestOverlapIndex:
    def test_identical_is_zero(self):
        a = BinnedSupport.from_interval(0, 10)
        assert overlap_index(a, a) == 0.0

    def test_disjoint_is_one(self):
        a = BinnedSupport.from_interval(0, 10)
        b = BinnedSupport.from_interval(20, 30)
        assert overlap_index(a, b) == 1.0

    def test_strict_containment_is_negative(self):
        outer = BinnedSupport.from_interval(0, 10)
        inner = BinnedSupport.from_interval(2, 8)
        assert overlap_index(outer, inner) == pytest.approx(-0.4, abs=1e-12)
        assert overlap_index(inner, outer) == pytest.approx(0.4, abs=1e-12)

    def test_partial_overlap(self):
        a = BinnedSupport.from_interval(0, 10)
        b = BinnedSupport.from_interval(5, 15)
        assert overlap_index(a, b) == pytest.approx(2 / 3, abs=1e-12)

    def test_empty_candidate_counts_as_disjoint(self):
        a = BinnedSupport.from_interval(0, 10)
        empty = estimate_support([])
        assert overlap_index(a, empty) == 1.0
        assert overlap_index(empty, a) == 1.0

    def test_both_empty_is_undefined(self):
        empty = estimate_support([])
        with pytest.raises(UndefinedOverlapError):
            overlap_index(empty, empty)

    def test_bin_width_mismatch(self):
        with pytest.raises(SpecificationError):
            overlap_index(BinnedSupport.from_interval(0, 4, 1.0),
                          BinnedSupport.from_interval(0, 4, 2.0))

    @given(
        st.sets(st.integers(-20, 20), min_size=1, max_size=15),
        st.sets(st.integers(-20, 20), min_size=1, max_size=15),
    )
    def test_swap_symmetry_in_magnitude(self, ia, ib):
        a = _support_from_bins(ia)
        b = _support_from_bins(ib)
        assert abs(overlap_index(a, b)) == pytest.approx(abs(overlap_index(b, a)), abs=1e-15)

    @given(
        st.sets(st.integers(-20, 20), min_size=1, max_size=15),
        st.sets(st.integers(-20, 20), min_size=1, max_size=15),
    )
    def test_sign_and_range(self, ia, ib):
        v = overlap_index(_support_from_bins(ia), _support_from_bins(ib))
        if ia == ib:
            assert v == 0.0
        elif not (ia & ib):
            assert v == 1.0
        elif ib < ia:
            assert -1 < v < 0
        else:
            assert 0 < v <= 1


def _support_from_bins(bins):
    lo = min(bins)
    counts = np.zeros(max(bins) - lo + 1, np.int64)
    for b in bins:
        counts[b - lo] = 1
    return BinnedSupport(0, 1.0, float(lo), counts)


@pytest.fixture(scope="module")
def dist():
    spec = ExpectationSpec(canvas=(32, 32), size_range=(8, 30))
    return LabelDistribution.from_annotations(sample_expected(spec, 3, 300))


class TestLabelDistribution:
    def test_classes_and_get(self, dist):
        assert dist.classes() == (0, 1)
        assert dist.n == 300
        sup = dist.get(0, 6)
        assert sup.bin_width == 1.0
        with pytest.raises(SpecificationError):
            dist.get(2, 6)

    def test_csv_round_trip(self, dist, tmp_path):
        path = tmp_path / "dist.csv"
        dist.save_csv(path)
        back = LabelDistribution.load_csv(path)
        assert set(back.supports) == set(dist.supports)
        for key, sup in dist.supports.items():
            other = back.supports[key]
            assert np.array_equal(sup.counts, other.counts)
            assert sup.origin == other.origin and sup.bin_width == other.bin_width

    def test_jsonable_round_trip(self, dist):
        back = LabelDistribution.from_jsonable(dist.to_jsonable())
        assert back.n == dist.n
        for key, sup in dist.supports.items():
            assert np.array_equal(sup.counts, back.supports[key].counts)

    def test_mean_overlap_self_is_zero(self, dist):
        assert mean_overlap(dist, dist) == 0.0

    def test_per_label_overlap_missing_class(self, dist):
        squares_only = LabelDistribution(
            {k: v for k, v in dist.supports.items() if k[0] == 1}, dist.n
        )
        with pytest.raises(SpecificationError):
            per_label_overlap(dist, squares_only, 0)

    def test_narrow_candidate_overlaps_positively(self, dist):
        spec = ExpectationSpec(canvas=(32, 32), size_range=(8, 30))
        narrow = ExpectationSpec(canvas=(32, 32), size_range=(24, 30),
                                 brightness_range=(220, 255))
        cand = LabelDistribution.from_annotations(sample_expected(narrow, 5, 300))
        vals = per_label_overlap(dist, cand, 0)
        assert set(vals) == set(LABELS)
        assert all(0 < abs(v) <= 1 for v in vals.values())
        # corner labels: the narrow support is strictly inside the dense
        # reference, so containment flips the sign
        assert all(vals[j] < 0 for j in (2, 3, 4, 5))

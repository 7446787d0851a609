"""Exact Shapley attribution and the marginal representation estimate."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from expecta.annot import (
    LABELS,
    Annotation,
    ExpectationSpec,
    LabelDistribution,
    sample_expected,
)
from expecta.attribution import (
    COALITIONS,
    AttributionRecord,
    MaskingPolicy,
    attribute_testset,
    attribute_testset_multi,
    audit_overlap,
    compose,
    load_attributions_csv,
    marginal_representation,
    merge_distributions,
    nonnegative_incidence,
    project_valid,
    save_attributions_csv,
    shapley_exact,
    shapley_from_game,
)
from expecta.exceptions import SpecificationError

CANVAS = (32, 32)


class TestCoalitions:
    def test_all_subsets_of_labels(self):
        assert len(COALITIONS) == 32
        assert len(set(COALITIONS)) == 32
        assert frozenset() in COALITIONS
        assert frozenset(LABELS) in COALITIONS
        for c in COALITIONS:
            assert c <= frozenset(LABELS)


class TestShapleyFromGame:
    def test_linear_game_recovers_weights(self):
        game = {c: 1.5 + sum(0.1 * j for j in c) for c in COALITIONS}
        phi0, phis = shapley_from_game(game)
        assert phi0 == pytest.approx(1.5, abs=1e-12)
        for j in LABELS:
            assert phis[j] == pytest.approx(0.1 * j, abs=1e-12)

    def test_constant_game_gives_zero_phis(self):
        game = {c: 3.25 for c in COALITIONS}
        phi0, phis = shapley_from_game(game)
        assert phi0 == 3.25
        assert all(abs(p) < 1e-15 for p in phis.values())

    def test_dummy_feature_gets_zero(self):
        game = {c: float(sum(j for j in c if j != 4)) for c in COALITIONS}
        _, phis = shapley_from_game(game)
        assert abs(phis[4]) < 1e-12

    def test_missing_coalition_rejected(self):
        game = {c: 0.0 for c in COALITIONS[:-1]}
        with pytest.raises(SpecificationError):
            shapley_from_game(game)

    @given(st.integers(0, 2**31))
    def test_efficiency_on_random_games(self, seed):
        rng = np.random.default_rng(seed)
        game = {c: float(v) for c, v in zip(COALITIONS, rng.normal(size=32))}
        phi0, phis = shapley_from_game(game)
        assert phi0 == game[frozenset()]
        total = phi0 + sum(phis.values())
        assert total == pytest.approx(game[frozenset(LABELS)], abs=1e-10)

    @given(st.integers(0, 2**31))
    def test_symmetry_of_interchangeable_labels(self, seed):
        # value depends only on |coalition|, so all labels are symmetric
        rng = np.random.default_rng(seed)
        by_size = rng.normal(size=6)
        game = {c: float(by_size[len(c)]) for c in COALITIONS}
        _, phis = shapley_from_game(game)
        vals = list(phis.values())
        assert max(vals) - min(vals) < 1e-12


class TestProjection:
    def test_valid_annotation_unchanged(self):
        a = Annotation(0, 3, 4, 13, 14, 100)
        assert project_valid(a.astuple(), CANVAS).astuple() == a.astuple()

    def test_swapped_corners_ordered(self):
        got = project_valid((1, 13, 14, 3, 4, 100), CANVAS)
        assert got.astuple() == (1, 3, 4, 13, 14, 100)

    def test_clamps_to_canvas_and_brightness(self):
        got = project_valid((0, -5, -5, 40, 40, 999), CANVAS)
        assert got.y2 == 0 and got.y3 == 0
        assert got.y4 <= CANVAS[0] and got.y5 <= CANVAS[1]
        assert got.y6 == 255

    def test_rectangle_squared_toward_top_left(self):
        got = project_valid((0, 2, 2, 12, 22, 50), CANVAS)
        assert got.size() == 10
        assert (got.y2, got.y3) == (2, 2)

    @given(values=st.tuples(
        st.sampled_from([0, 1]),
        st.integers(-40, 70), st.integers(-40, 70),
        st.integers(-40, 70), st.integers(-40, 70),
        st.integers(-300, 600),
    ))
    def test_idempotent_and_always_valid(self, values):
        first = project_valid(values, CANVAS)
        first.validate_canvas(CANVAS)
        again = project_valid(first.astuple(), CANVAS)
        assert again.astuple() == first.astuple()


class TestCompose:
    def test_full_coalition_keeps_annotation(self):
        ann = Annotation(0, 2, 3, 12, 13, 90)
        bg = Annotation(0, 5, 6, 25, 26, 200)
        got = compose(ann, bg, frozenset(LABELS), CANVAS)
        assert got.astuple() == ann.astuple()

    def test_empty_coalition_takes_background_labels(self):
        ann = Annotation(1, 2, 3, 12, 13, 90)
        bg = Annotation(1, 5, 6, 25, 26, 200)
        got = compose(ann, bg, frozenset(), CANVAS)
        assert got.y1 == 1  # class always comes from the sample
        assert got.astuple()[1:] == bg.astuple()[1:]

    def test_partial_coalition_mixes(self):
        ann = Annotation(0, 2, 3, 12, 13, 90)
        bg = Annotation(0, 5, 6, 25, 26, 200)
        got = compose(ann, bg, frozenset({6}), CANVAS)
        assert got.y6 == 90
        assert (got.y2, got.y3) == (5, 6)


class TestShapleyExact:
    def test_brightness_only_value_isolates_y6(self):
        # a value function reading only y6 must attribute everything to it
        spec = ExpectationSpec(canvas=CANVAS, size_range=(8, 30))
        policy = MaskingPolicy(spec, background_count=4)
        ann = Annotation(0, 4, 4, 24, 24, 250)
        rec = shapley_exact(lambda a: a.y6 / 255.0, ann, policy, seed=5)
        assert rec.score == pytest.approx(250 / 255.0, abs=1e-12)
        assert rec.additivity_gap < 1e-10
        for j in (2, 3, 4, 5):
            assert abs(rec.phi(j)) < 1e-10
        assert rec.phi(6) == pytest.approx(rec.score - rec.phi0, abs=1e-10)

    def test_deterministic_in_seed(self):
        spec = ExpectationSpec(canvas=CANVAS, size_range=(8, 30))
        policy = MaskingPolicy(spec, background_count=4)
        ann = Annotation(1, 4, 4, 24, 24, 180)

        def value(a):
            return (a.size() + a.y6) / 300.0

        r1 = shapley_exact(value, ann, policy, seed=5)
        r2 = shapley_exact(value, ann, policy, seed=5)
        r3 = shapley_exact(value, ann, policy, seed=6)
        assert r1 == r2
        assert r1.phis != r3.phis


@pytest.fixture(scope="module")
def attributed(tiny_trained):
    policy = MaskingPolicy(tiny_trained["spec"], background_count=3)
    return attribute_testset_multi(
        tiny_trained["model"], [1.0, 4.0], tiny_trained["test"], policy,
        seed=2, subset_size=24,
    )


@pytest.fixture(scope="module")
def synthetic_records():
    rng = np.random.default_rng(3)
    spec = ExpectationSpec(canvas=CANVAS, size_range=(8, 30))
    anns = sample_expected(spec, 9, 120)
    recs = []
    for i in range(len(anns)):
        phis = rng.normal(0.02, 0.05, size=5)
        recs.append(AttributionRecord(i, 0.5, tuple(phis), 0.5 + phis.sum()))
    return anns, recs


class TestAttributeTestset:
    def test_additivity_every_sample(self, attributed):
        for records in attributed.values():
            assert records
            for rec in records:
                assert rec.additivity_gap <= 1e-5

    def test_temperatures_share_subset(self, attributed):
        idx1 = [r.index for r in attributed[1.0]]
        idx4 = [r.index for r in attributed[4.0]]
        assert idx1 == idx4
        assert len(idx1) == 24

    def test_single_temperature_wrapper(self, tiny_trained):
        policy = MaskingPolicy(tiny_trained["spec"], background_count=2)
        records = attribute_testset(
            tiny_trained["model"], 2.0, tiny_trained["test"], policy,
            seed=2, subset_size=8,
        )
        multi = attribute_testset_multi(
            tiny_trained["model"], [2.0], tiny_trained["test"], policy,
            seed=2, subset_size=8,
        )
        assert records == multi[2.0]

    def test_subset_is_class_stratified(self, tiny_trained, attributed):
        anns = tiny_trained["test"].annotations()
        classes = [anns[r.index].y1 for r in attributed[1.0]]
        assert abs(classes.count(0) - classes.count(1)) <= 1

    def test_csv_round_trip(self, attributed, tmp_path, tiny_trained):
        anns = tiny_trained["test"].annotations()
        path = tmp_path / "attr.csv"
        save_attributions_csv(attributed[1.0], anns, path)
        back = load_attributions_csv(path)
        assert back == attributed[1.0]


class TestRepresentation:
    def test_keeps_only_nonnegative_contributions(self, synthetic_records):
        anns, recs = synthetic_records
        est = marginal_representation(recs, anns, k=0)
        assert est.classes() == (0,)
        kept = [r for r, a in zip(recs, anns) if a.y1 == 0]
        for j_pos, j in enumerate(LABELS):
            n_nonneg = sum(1 for r in kept if r.phis[j_pos] >= 0)
            assert int(est.get(0, j).counts.sum()) == n_nonneg

    def test_missing_class_raises(self, synthetic_records):
        anns, recs = synthetic_records
        with pytest.raises(SpecificationError):
            marginal_representation(recs, anns, k=2)

    def test_merge_and_duplicate_rejection(self, synthetic_records):
        anns, recs = synthetic_records
        est0 = marginal_representation(recs, anns, k=0)
        est1 = marginal_representation(recs, anns, k=1)
        merged = merge_distributions([est0, est1])
        assert merged.classes() == (0, 1)
        with pytest.raises(SpecificationError):
            merge_distributions([est0, est0])

    def test_nonnegative_incidence_fractions(self, synthetic_records):
        _, recs = synthetic_records
        inc = nonnegative_incidence(recs)
        assert set(inc) == set(LABELS)
        for j_pos, j in enumerate(LABELS):
            expect = np.mean([r.phis[j_pos] >= 0 for r in recs])
            assert inc[j] == pytest.approx(expect, abs=1e-12)

    def test_audit_overlap_tables(self, synthetic_records):
        anns, recs = synthetic_records
        collected = LabelDistribution.from_annotations(anns)
        est = merge_distributions([
            marginal_representation(recs, anns, k=0),
            marginal_representation(recs, anns, k=1),
        ])
        table = audit_overlap(est, collected, expected=collected)
        assert table["labels"] == list(LABELS)
        assert set(table["estimated"]) == {"0", "1"}
        mean_est = np.mean([
            table["estimated"][k][str(j)] for k in ("0", "1") for j in LABELS
        ])
        assert table["estimated_mean"] == pytest.approx(float(mean_est), abs=1e-12)
        assert table["expected_mean"] == 0.0

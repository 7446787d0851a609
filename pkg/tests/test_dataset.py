"""Dataset generation, the directory container, and corpus import."""

import json

import numpy as np
import pytest

from expecta.annot import ExpectationSpec
from expecta.dataset import (
    BiasSpec,
    autolabel_dataset,
    gen_collected,
    gen_test,
    import_drawing_corpus,
    load,
    save,
)
from expecta.exceptions import FormatError, MappingError, SpecificationError
from expecta.validation import validate_json

CANVAS = (32, 32)


@pytest.fixture(scope="module")
def spec():
    return ExpectationSpec(canvas=CANVAS, size_range=(8, 30))


@pytest.fixture(scope="module")
def bias():
    return BiasSpec(size_range=(23, 30), brightness_range=(200, 255), center_slack=4)


@pytest.fixture(scope="module")
def collected(bias):
    return gen_collected(bias, 60, seed=3, canvas=CANVAS)


@pytest.fixture(scope="module")
def test_set(spec):
    return gen_test(spec, 41, seed=4)


class TestGenCollected:
    def test_shapes_and_mask(self, collected):
        assert collected.n == 60
        assert collected.images.shape == (60, 32, 32)
        assert collected.label_mask == (True, False, False, False, False, False)
        assert set(collected.labels[:, 0].tolist()) == {0, 1}
        assert (collected.labels[:, 1:] == -1).all()

    def test_truth_respects_bias(self, collected, bias):
        sizes = collected.truth[:, 3] - collected.truth[:, 1]
        bright = collected.truth[:, 5]
        assert sizes.min() >= bias.size_range[0] and sizes.max() <= bias.size_range[1]
        assert bright.min() >= bias.brightness_range[0]
        assert bright.max() <= bias.brightness_range[1]

    def test_classes_balanced(self, collected):
        counts = np.bincount(collected.labels[:, 0])
        assert abs(int(counts[0]) - int(counts[1])) <= 1

    def test_deterministic(self, bias):
        a = gen_collected(bias, 20, seed=3, canvas=CANVAS)
        b = gen_collected(bias, 20, seed=3, canvas=CANVAS)
        assert np.array_equal(a.images, b.images)
        assert np.array_equal(a.truth, b.truth)

    def test_annotations_refused_without_full_trust(self, collected):
        with pytest.raises(SpecificationError):
            collected.annotations()

    def test_bias_must_fit_canvas(self, bias):
        with pytest.raises(SpecificationError):
            gen_collected(bias, 4, seed=0, canvas=(16, 16))


class TestGenTest:
    def test_shapes_and_mask(self, test_set, spec):
        assert test_set.n == 41
        assert test_set.label_mask == (True,) * 6
        anns = test_set.annotations()
        assert len(anns) == 41
        for a in anns:
            assert spec.size_range[0] <= a.size() <= spec.size_range[1]

    def test_class_split_near_even(self, test_set):
        counts = np.bincount(test_set.labels[:, 0])
        assert abs(int(counts[0]) - int(counts[1])) <= 1

    def test_clean_render_matches_labels(self, test_set):
        # pixels of sample 0 should carry exactly its labeled brightness
        a = test_set.annotation(0)
        on = test_set.images[0][test_set.images[0] > 0]
        assert set(np.unique(on).tolist()) == {a.y6}


class TestContainer:
    def test_round_trip_collected(self, collected, tmp_path):
        save(collected, tmp_path / "ds")
        back = load(tmp_path / "ds")
        assert np.array_equal(back.images, collected.images)
        assert np.array_equal(back.labels, collected.labels)
        assert back.label_mask == collected.label_mask
        assert back.truth is None
        both = load(tmp_path / "ds", load_truth=True)
        assert np.array_equal(both.truth, collected.truth)

    def test_round_trip_test_set_has_no_truth_file(self, test_set, tmp_path):
        save(test_set, tmp_path / "ds")
        assert not (tmp_path / "ds" / "truth.csv").exists()
        back = load(tmp_path / "ds")
        assert np.array_equal(back.labels, test_set.labels)

    def test_meta_matches_schema(self, collected, tmp_path):
        save(collected, tmp_path / "ds")
        meta = json.loads((tmp_path / "ds" / "meta.json").read_text())
        validate_json(meta, "dataset_meta")

    def test_missing_meta_raises(self, tmp_path):
        (tmp_path / "ds").mkdir()
        with pytest.raises(FormatError):
            load(tmp_path / "ds")

    def test_bad_schema_version(self, collected, tmp_path):
        save(collected, tmp_path / "ds")
        meta_path = tmp_path / "ds" / "meta.json"
        meta = json.loads(meta_path.read_text())
        meta["schema_version"] = 99
        meta_path.write_text(json.dumps(meta))
        with pytest.raises(FormatError):
            load(tmp_path / "ds")

    def test_truncated_payload(self, collected, tmp_path):
        save(collected, tmp_path / "ds")
        img_path = tmp_path / "ds" / "images.u8"
        img_path.write_bytes(img_path.read_bytes()[:-5])
        with pytest.raises(FormatError):
            load(tmp_path / "ds")


class TestImportCorpus:
    def test_import_and_skip(self, tmp_path):
        path = tmp_path / "corpus.ndjson"
        rows = [
            {"word": "circle", "drawing": [[[0, 100, 200], [0, 50, 0]]]},
            {"word": "square", "drawing": []},
            {"word": "circle", "drawing": [[[10, 30], [10, 30]], [[40, 60], [40, 20]]]},
        ]
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        ds = import_drawing_corpus(path, {"circle": 0, "square": 1}, canvas=CANVAS)
        assert ds.n == 2
        assert ds.meta["skipped"] == 1
        assert ds.labels[:, 0].tolist() == [0, 0]
        assert (ds.images.reshape(2, -1).max(axis=1) > 0).all()

    def test_unknown_class_raises(self, tmp_path):
        path = tmp_path / "corpus.ndjson"
        path.write_text(json.dumps({"word": "triangle", "drawing": [[[0, 1], [0, 1]]]}))
        with pytest.raises(MappingError):
            import_drawing_corpus(path, {"circle": 0})

    def test_bad_json_raises(self, tmp_path):
        path = tmp_path / "corpus.ndjson"
        path.write_text("{not json}\n")
        with pytest.raises(FormatError):
            import_drawing_corpus(path, {"circle": 0})


class TestAutolabel:
    def test_autolabel_uses_trusted_classes(self, collected):
        anns = autolabel_dataset(collected)
        assert len(anns) == collected.n
        assert [a.y1 for a in anns] == collected.labels[:, 0].tolist()

    def test_autolabel_near_truth(self, collected):
        anns = autolabel_dataset(collected)
        # handdrawn stroke jitter keeps auto labels within a few pixels
        truth_sizes = collected.truth[:, 3] - collected.truth[:, 1]
        got_sizes = np.asarray([a.size() for a in anns])
        assert np.abs(got_sizes - truth_sizes).max() <= 8

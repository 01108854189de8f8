"""Dataset loading, filtering, statistics and metric computations."""
from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from askmodel.data import (
    DatasetConfig,
    countdata,
    describe_metadata,
    filter_id,
    filter_includes,
    label_distribution,
    load_dataset,
    make_dataset,
    mistakes_count,
    mistakes_sample,
    score,
    show,
)
from askmodel.errors import ArgumentError, DatasetError

from oracles import metrics_oracle


class FixedModel:
    """Predicts a fixed label per exact text; lets tests pin confusion matrices."""

    def __init__(self, mapping: dict[str, int], class_names):
        self.mapping = mapping
        self.class_names = tuple(class_names)

    def predict(self, text: str):
        index = self.mapping[text]
        return self.class_names[index], index


def write_jsonl(path, records):
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")


BASIC_CONFIG = DatasetConfig(class_names=("offensive", "non-offensive"))


# --- load_dataset ---------------------------------------------------------


def test_load_dataset_basic(tmp_path):
    records = [
        {"id": 0, "fields": {"text": "you are ugly"}, "label": "offensive"},
        {"id": 1, "fields": {"text": "have a nice day"}, "label": "non-offensive"},
        {"id": 2, "fields": {"text": "what a liar"}, "label": "offensive"},
        {"id": 3, "fields": {"text": "thanks a lot"}, "label": "non-offensive"},
    ]
    path = tmp_path / "toy.jsonl"
    write_jsonl(path, records)
    ds = load_dataset(path, BASIC_CONFIG)
    assert len(ds) == 4
    assert ds.class_names == ("offensive", "non-offensive")
    assert ds.get(2).text() == "what a liar"
    assert ds.get(0).gold_label == 0
    assert ds.ids() == (0, 1, 2, 3)


def test_load_dataset_unknown_label_names_line(tmp_path):
    records = [
        {"id": 0, "fields": {"text": "a"}, "label": "offensive"},
        {"id": 1, "fields": {"text": "b"}, "label": "non-offensive"},
        {"id": 2, "fields": {"text": "c"}, "label": "neutral"},
    ]
    path = tmp_path / "bad.jsonl"
    write_jsonl(path, records)
    with pytest.raises(DatasetError, match="unknown label 'neutral' at line 3"):
        load_dataset(path, BASIC_CONFIG)


def test_load_dataset_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    with pytest.raises(DatasetError, match="dataset has zero instances"):
        load_dataset(path, BASIC_CONFIG)


def test_load_dataset_duplicate_id(tmp_path):
    records = [
        {"id": 0, "fields": {"text": "a"}, "label": "offensive"},
        {"id": 0, "fields": {"text": "b"}, "label": "offensive"},
    ]
    path = tmp_path / "dup.jsonl"
    write_jsonl(path, records)
    with pytest.raises(DatasetError, match="duplicate id 0 at line 2"):
        load_dataset(path, BASIC_CONFIG)


def test_load_dataset_malformed_json_names_line(tmp_path):
    path = tmp_path / "mal.jsonl"
    path.write_text('{"id": 0, "fields": {"text": "a"}, "label": "offensive"}\n{oops\n', encoding="utf-8")
    with pytest.raises(DatasetError, match="line 2"):
        load_dataset(path, BASIC_CONFIG)


def test_load_dataset_missing_field_names_line(tmp_path):
    config = DatasetConfig(class_names=("yes", "no"), field_order=("question", "passage"))
    records = [{"id": 0, "fields": {"question": "why"}, "label": "yes"}]
    path = tmp_path / "mf.jsonl"
    write_jsonl(path, records)
    with pytest.raises(DatasetError, match="missing field 'passage' at line 1"):
        load_dataset(path, config)


def test_multi_field_text_joined_with_separator(tmp_path):
    config = DatasetConfig(class_names=("yes", "no"), field_order=("question", "passage"))
    records = [{"id": 0, "fields": {"question": "is it blue", "passage": "the sky is blue"}, "label": "yes"}]
    path = tmp_path / "bq.jsonl"
    write_jsonl(path, records)
    ds = load_dataset(path, config)
    assert ds.get(0).text() == "is it blue [SEP] the sky is blue"


def test_load_dataset_reads_metadata_files(tmp_path):
    (tmp_path / "sheet.txt").write_text("Split sizes: train 4, dev 0, test 0.", encoding="utf-8")
    (tmp_path / "card.txt").write_text("Classifier family: linear bag-of-words.", encoding="utf-8")
    config = DatasetConfig(
        class_names=("offensive", "non-offensive"),
        datasheet_path="sheet.txt",
        model_card_path="card.txt",
    )
    path = tmp_path / "toy.jsonl"
    write_jsonl(path, [{"id": 0, "fields": {"text": "a"}, "label": "offensive"}])
    ds = load_dataset(path, config)
    assert "Split sizes" in ds.datasheet
    assert "Classifier family" in ds.model_card


# --- filters ---------------------------------------------------------------


def fixture_dataset():
    texts = [
        "have a great day",
        "you are wonderful",
        "you are so ugly",
        "nice weather today",
    ]
    return make_dataset("fix", texts, [1, 1, 0, 1], ("offensive", "non-offensive"))


def test_filter_id_present_absent():
    sel = fixture_dataset().all_selection()
    assert filter_id(sel, 42).ids == ()
    assert filter_id(sel, 3).ids == (3,)
    singleton = filter_id(sel, 3)
    assert filter_id(singleton, 3).ids == (3,)  # idempotent
    assert filter_id(singleton, 2).ids == ()


def test_filter_includes_whole_word_case_insensitive():
    sel = fixture_dataset().all_selection()
    assert filter_includes(sel, "ugly").ids == (2,)
    assert filter_includes(sel, "UGLY").ids == (2,)
    assert filter_includes(sel, "uglyness-not-present").ids == ()
    # substring of a word does not match: "you" yes, "yo" no
    assert filter_includes(sel, "you").ids == (1, 2)
    assert filter_includes(sel, "yo").ids == ()


def test_filter_includes_empty_token_rejected():
    sel = fixture_dataset().all_selection()
    with pytest.raises(ArgumentError):
        filter_includes(sel, "   ")


@given(st.text(alphabet="abcdefg uy", max_size=20))
@settings(max_examples=50, deadline=None)
def test_filter_includes_subset_property(token):
    sel = fixture_dataset().all_selection()
    try:
        narrowed = filter_includes(sel, token)
    except ArgumentError:
        return
    assert set(narrowed.ids) <= set(sel.ids)
    assert countdata(narrowed) <= countdata(sel)


# --- show / countdata -------------------------------------------------------


def test_show_first_page_default_ten():
    texts = [f"text number {i}" for i in range(25)]
    ds = make_dataset("big", texts, [0] * 25, ("a", "b"))
    page = show(ds.all_selection(), page=0)
    assert [inst.id for inst in page.items] == list(range(10))
    assert page.total == 25


def test_show_later_and_out_of_range_pages():
    texts = [f"text number {i}" for i in range(25)]
    ds = make_dataset("big", texts, [0] * 25, ("a", "b"))
    sel = ds.all_selection()
    page2 = show(sel, page=2)
    assert [inst.id for inst in page2.items] == [20, 21, 22, 23, 24]
    beyond = show(sel, page=9)
    assert beyond.items == ()
    assert beyond.total == 25
    single = show(filter_id(sel, 7), page=0)
    assert [inst.id for inst in single.items] == [7]


def test_countdata():
    sel = fixture_dataset().all_selection()
    assert countdata(sel) == 4
    assert countdata(filter_id(sel, 1)) == 1
    assert countdata(filter_id(sel, 99)) == 0


# --- label distribution ------------------------------------------------------


def test_label_distribution_hand_counts():
    ds = make_dataset("d", ["a", "b", "c", "d"], [0, 0, 0, 1], ("offensive", "non-offensive"))
    dist = label_distribution(ds.all_selection())
    assert dist == {"offensive": (3, 0.75), "non-offensive": (1, 0.25)}


def test_label_distribution_singleton_and_balanced():
    ds = make_dataset("d", ["a", "b", "c", "d"], [0, 1, 0, 1], ("x", "y"))
    sel = ds.all_selection()
    assert label_distribution(filter_id(sel, 1)) == {"x": (0, 0.0), "y": (1, 1.0)}
    dist = label_distribution(sel)
    assert dist["x"][1] == 0.5 and dist["y"][1] == 0.5
    assert abs(sum(frac for _, frac in dist.values()) - 1.0) <= 1e-9


def test_label_distribution_empty_selection():
    sel = filter_id(fixture_dataset().all_selection(), 99)
    with pytest.raises(ArgumentError, match="no instances match"):
        label_distribution(sel)


# --- score / mistakes ---------------------------------------------------------

# Frozen from tests/oracles.py metrics_oracle on golds [0,0,1,1,2,2],
# preds [0,1,1,1,2,0]: accuracy 2/3, macro precision 13/18, recall 2/3,
# f1 59/90.
THREE_CLASS_GOLDS = [0, 0, 1, 1, 2, 2]
THREE_CLASS_PREDS = [0, 1, 1, 1, 2, 0]
THREE_CLASS_EXPECTED = {
    "accuracy": 2 / 3,
    "precision": 13 / 18,
    "recall": 2 / 3,
    "f1": 59 / 90,
}


def three_class_fixture():
    texts = [f"unique text {i}" for i in range(6)]
    ds = make_dataset("tri", texts, THREE_CLASS_GOLDS, ("a", "b", "c"))
    model = FixedModel({t: p for t, p in zip(texts, THREE_CLASS_PREDS)}, ("a", "b", "c"))
    return ds, model


def test_score_matches_frozen_oracle_values():
    ds, model = three_class_fixture()
    sel = ds.all_selection()
    oracle = metrics_oracle(THREE_CLASS_GOLDS, THREE_CLASS_PREDS, 3)
    for metric, expected in THREE_CLASS_EXPECTED.items():
        got = score(sel, model, metric)
        assert got == pytest.approx(expected, abs=1e-12)
        assert got == pytest.approx(float(oracle[metric]), abs=1e-12)


def test_score_zero_division_rule():
    # Class 1 never predicted: its precision/recall/f1 count as 0.
    texts = ["t0", "t1", "t2"]
    ds = make_dataset("z", texts, [0, 0, 1], ("a", "b"))
    model = FixedModel({"t0": 0, "t1": 0, "t2": 0}, ("a", "b"))
    sel = ds.all_selection()
    assert score(sel, model, "accuracy") == pytest.approx(2 / 3, abs=1e-12)
    assert score(sel, model, "precision") == pytest.approx(1 / 3, abs=1e-12)
    assert score(sel, model, "recall") == pytest.approx(1 / 2, abs=1e-12)
    assert score(sel, model, "f1") == pytest.approx(2 / 5, abs=1e-12)


def test_score_unknown_metric_lists_valid_ones():
    ds, model = three_class_fixture()
    with pytest.raises(ArgumentError, match="accuracy, precision, recall, f1"):
        score(ds.all_selection(), model, "auroc")


def test_perfect_model_all_metrics_one():
    texts = ["t0", "t1", "t2", "t3"]
    ds = make_dataset("p", texts, [0, 1, 0, 1], ("a", "b"))
    model = FixedModel({"t0": 0, "t1": 1, "t2": 0, "t3": 1}, ("a", "b"))
    sel = ds.all_selection()
    for metric in ("accuracy", "precision", "recall", "f1"):
        assert score(sel, model, metric) == 1.0


def test_mistakes_count_and_sample():
    ds, model = three_class_fixture()
    sel = ds.all_selection()
    assert mistakes_count(sel, model) == 2
    sample = mistakes_sample(sel, model, n=3)
    assert [inst.id for inst in sample] == [1, 5]
    assert [inst.id for inst in mistakes_sample(sel, model, n=1)] == [1]


def test_mistakes_zero_for_perfect_model():
    texts = ["t0", "t1"]
    ds = make_dataset("p", texts, [0, 1], ("a", "b"))
    model = FixedModel({"t0": 0, "t1": 1}, ("a", "b"))
    assert mistakes_count(ds.all_selection(), model) == 0
    assert mistakes_sample(ds.all_selection(), model) == []


@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=30))
@settings(max_examples=100, deadline=None)
def test_accuracy_exactly_complements_mistakes(pairs):
    texts = [f"row {i}" for i in range(len(pairs))]
    golds = [g for g, _ in pairs]
    preds = [p for _, p in pairs]
    ds = make_dataset("r", texts, golds, ("a", "b", "c"))
    model = FixedModel({t: p for t, p in zip(texts, preds)}, ("a", "b", "c"))
    sel = ds.all_selection()
    assert score(sel, model, "accuracy") == 1.0 - mistakes_count(sel, model) / len(sel)


@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=20))
@settings(max_examples=100, deadline=None)
def test_metrics_match_fraction_oracle(pairs):
    texts = [f"row {i}" for i in range(len(pairs))]
    golds = [g for g, _ in pairs]
    preds = [p for _, p in pairs]
    ds = make_dataset("r", texts, golds, ("a", "b", "c"))
    model = FixedModel({t: p for t, p in zip(texts, preds)}, ("a", "b", "c"))
    sel = ds.all_selection()
    oracle = metrics_oracle(golds, preds, 3)
    for metric in ("precision", "recall", "f1"):
        assert score(sel, model, metric) == pytest.approx(float(oracle[metric]), abs=1e-12)
    assert score(sel, model, "accuracy") == pytest.approx(float(oracle["accuracy"]), abs=1e-12)


# --- metadata -----------------------------------------------------------------


def test_describe_metadata_verbatim(tmp_path):
    (tmp_path / "sheet.txt").write_text("Split sizes: train 4.", encoding="utf-8")
    (tmp_path / "card.txt").write_text("Family: linear. lr=0.5 epochs=200", encoding="utf-8")
    config = DatasetConfig(
        class_names=("offensive", "non-offensive"),
        datasheet_path="sheet.txt",
        model_card_path="card.txt",
    )
    path = tmp_path / "toy.jsonl"
    write_jsonl(path, [{"id": 0, "fields": {"text": "a"}, "label": "offensive"}])
    ds = load_dataset(path, config)
    assert describe_metadata(ds, "data") == "Split sizes: train 4."
    assert "lr=0.5" in describe_metadata(ds, "model")


def test_describe_metadata_auto_summary():
    class VocabModel:
        vocabulary = {f"w{i}": i for i in range(12)}

    ds = make_dataset("t", ["a b", "c d", "e f", "g h"], [0, 0, 1, 1], ("x", "y"))
    text = describe_metadata(ds, "model", model=VocabModel())
    assert "4 instances, 2 classes, vocab 12" in text
    with pytest.raises(ArgumentError):
        describe_metadata(ds, "nonsense")

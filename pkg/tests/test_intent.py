"""Utterance understanding: retrieval ranking, slot tagging, parse composition."""
from __future__ import annotations

import time

import numpy as np
import pytest
import requests
from hypothesis import given, settings
from hypothesis import strategies as st

from askmodel.errors import ConfigError
from askmodel.grammar import canonicalize, parse_string, registry
from askmodel.intent import (
    AMBIGUITY_EPSILON,
    Ambiguous,
    BankEntry,
    EmbeddingProvider,
    ExternalParser,
    MissingSlot,
    Parsed,
    PromptBank,
    SlotMap,
    Smalltalk,
    compose_parse,
    parse_utterance,
    tag_slots,
)

# Filler tokens chosen to be absent from the bank's fitted vocabulary, so they
# carry no weight in retrieval. Guarded by test_fillers_out_of_vocabulary.
FILLERS = ("hmm", "um", "uh", "erm", "basically", "actually")

# A wording blend of two operations' bank entries that scores almost equally
# for both; pinned as the canonical ambiguous utterance for clarification flows.
BLENDED_AMBIGUOUS_UTTERANCE = "Generate an augmented neighbor of this sample"


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b) / (na * nb)


def entry_index(bank: PromptBank, entry: BankEntry) -> int:
    return next(i for i, e in enumerate(bank.entries) if e is entry)


# --- bank loading and validation ----------------------------------------------


def test_bank_is_large_and_well_formed(prompt_bank):
    known_ops = {sig.name for sig in registry()}
    assert len(prompt_bank.entries) >= 100
    for entry in prompt_bank.entries:
        assert entry.utterance and entry.parse_template
        assert entry.intent in known_ops


def test_bank_covers_every_action_operation(prompt_bank):
    covered = {entry.intent for entry in prompt_bank.entries}
    # every operation that can head a request is reachable via retrieval
    expected = {sig.name for sig in registry()} - {"filter", "includes", "and", "or", "custominput"}
    assert expected <= covered


def test_bank_rejects_line_without_tab(tmp_path):
    path = tmp_path / "bank.tsv"
    path.write_text("show me everything\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="line 1.*tab"):
        PromptBank.load(path)


def test_bank_rejects_empty_fields(tmp_path):
    path = tmp_path / "bank.tsv"
    path.write_text("how are you?\t\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="line 1"):
        PromptBank.load(path)


def test_bank_rejects_template_that_does_not_parse(tmp_path):
    path = tmp_path / "bank.tsv"
    path.write_text(
        "what is the score?\tscore {metric}\nflip it\tfilter id {id} and frobnicate\n",
        encoding="utf-8",
    )
    with pytest.raises(ConfigError, match="line 2"):
        PromptBank.load(path)


def test_bank_skips_blank_and_comment_lines(tmp_path):
    path = tmp_path / "bank.tsv"
    path.write_text(
        "# a comment\n\nwhat is the score?\tscore {metric}\nhow accurate?\tscore {metric}\n",
        encoding="utf-8",
    )
    bank = PromptBank.load(path)
    assert [e.utterance for e in bank.entries] == ["what is the score?", "how accurate?"]


def test_empty_bank_rejected():
    with pytest.raises(ConfigError):
        PromptBank([])


# --- embedding and retrieval ----------------------------------------------------


def test_bank_vectors_are_unit_norm(prompt_bank):
    norms = np.linalg.norm(prompt_bank.matrix, axis=1)
    assert np.allclose(norms, 1.0, atol=1e-9)


def test_self_retrieval_is_perfect(prompt_bank):
    """Every bank utterance retrieves itself with similarity 1."""
    for entry in prompt_bank.entries:
        top = prompt_bank.rank_intents(entry.utterance, k=1)[0]
        assert top.entry.utterance == entry.utterance
        assert abs(top.score - 1.0) <= 1e-9


def test_ranking_matches_brute_force_cosine(prompt_bank, dev_pairs):
    """rank_intents must agree with explicit cosine similarity, pair by pair."""
    entry_vectors = [prompt_bank.embed(e.utterance) for e in prompt_bank.entries]
    for utterance, _ in dev_pairs:
        query = prompt_bank.embed(utterance)
        expected_scores = np.array([cosine(query, v) for v in entry_vectors])
        expected_order = np.argsort(-expected_scores, kind="stable")[:5]
        got = prompt_bank.rank_intents(utterance, k=5)
        assert [entry_index(prompt_bank, c.entry) for c in got] == list(expected_order)
        for candidate, position in zip(got, expected_order):
            assert candidate.score == pytest.approx(expected_scores[position], abs=1e-9)


def test_empty_utterance_scores_zero_in_bank_order(prompt_bank):
    candidates = prompt_bank.rank_intents("", k=5)
    assert [c.score for c in candidates] == [0.0] * 5
    assert [c.entry for c in candidates] == prompt_bank.entries[:5]


def test_out_of_vocabulary_utterance_scores_zero(prompt_bank):
    candidates = prompt_bank.rank_intents("zzz qqq xxx", k=3)
    assert all(c.score == 0.0 for c in candidates)


def test_numbers_do_not_affect_retrieval(prompt_bank):
    a = prompt_bank.embed("please show me instance 5")
    b = prompt_bank.embed("please show me instance 987654")
    assert np.array_equal(a, b)


def test_token_importance_query_lands_on_attribution(prompt_bank):
    """The nearest entry is an attribution request, strictly closer than every
    free-text-explanation entry."""
    utterance = "show me the most important tokens"
    top = prompt_bank.rank_intents(utterance, k=1)[0]
    assert top.intent == "nlpattribute"
    query = prompt_bank.embed(utterance)
    for entry in prompt_bank.entries:
        if entry.intent == "rationalize":
            assert cosine(query, prompt_bank.embed(entry.utterance)) < top.score


def test_custom_embedding_provider_is_honored():
    """The bank ranks with whatever provider it is given, not a built-in one."""

    class FixedVectors:
        table = {
            "alpha question": np.array([1.0, 0.0]),
            "beta question": np.array([0.0, 1.0]),
        }

        def fit(self, texts):
            pass

        def transform(self, text):
            return self.table.get(text, np.array([0.8, 0.6]))

    entries = [
        BankEntry("alpha question", "score {metric}", "score"),
        BankEntry("beta question", "countdata", "countdata"),
    ]
    bank = PromptBank(entries, embedder=FixedVectors())
    top = bank.rank_intents("anything else", k=2)
    assert top[0].intent == "score" and top[0].score == pytest.approx(0.8)
    assert top[1].intent == "countdata" and top[1].score == pytest.approx(0.6)
    assert isinstance(EmbeddingProvider, type)  # default provider stays importable


# --- robustness to irrelevant trailing words --------------------------------------


def test_fillers_out_of_vocabulary(prompt_bank):
    vocabulary = prompt_bank.embedder.vectorizer.vocabulary_
    for filler in FILLERS:
        assert filler not in vocabulary


def test_appending_fillers_never_changes_top_choice(prompt_bank, dev_pairs):
    for utterance, _ in dev_pairs:
        baseline = prompt_bank.rank_intents(utterance, k=1)[0]
        for suffix in (" hmm", " um uh", " basically actually erm"):
            shifted = prompt_bank.rank_intents(utterance + suffix, k=1)[0]
            assert shifted.entry is baseline.entry
            assert shifted.score == pytest.approx(baseline.score, abs=1e-9)


@settings(deadline=None, max_examples=60)
@given(pick=st.integers(min_value=0, max_value=10**9), fillers=st.lists(st.sampled_from(FILLERS), min_size=1, max_size=4))
def test_filler_suffix_property(prompt_bank, dev_pairs, pick, fillers):
    utterance = dev_pairs[pick % len(dev_pairs)][0]
    baseline = prompt_bank.rank_intents(utterance, k=1)[0]
    shifted = prompt_bank.rank_intents(utterance + " " + " ".join(fillers), k=1)[0]
    assert shifted.entry is baseline.entry


# --- slot tagging -------------------------------------------------------------------


def test_tag_id_after_cue(demo_dataset):
    slots, issues = tag_slots("show me id 42", demo_dataset)
    assert slots.id == 42 and issues == []


def test_tag_number_and_class_alias(demo_dataset):
    slots, _ = tag_slots(
        "What are the three most important keywords for the hate speech label?",
        demo_dataset,
    )
    assert slots.number == 3
    assert slots.class_names == "offensive"


def test_tag_metric(demo_dataset):
    slots, _ = tag_slots("what's the f1 score", demo_dataset)
    assert slots.metric == "f1"


def test_tag_quoted_include_token(demo_dataset):
    slots, _ = tag_slots("how many texts contain 'idiot'?", demo_dataset)
    assert slots.include_token == "idiot"


def test_tag_include_token_after_cue(demo_dataset):
    slots, _ = tag_slots("count the texts containing the word ugly", demo_dataset)
    assert slots.include_token == "ugly"
    slots, _ = tag_slots("count the texts mentioning insults", demo_dataset)
    assert slots.include_token == "insults"


def test_tag_longer_class_name_wins(demo_dataset):
    slots, _ = tag_slots("show me non-offensive examples", demo_dataset)
    assert slots.class_names == "non-offensive"


def test_tag_id_and_number_together(demo_dataset):
    slots, _ = tag_slots("give me 2 counterfactuals for instance 9", demo_dataset)
    assert slots.id == 9 and slots.number == 2


def test_tag_unknown_id_reported(demo_dataset):
    slots, issues = tag_slots("show me id 999", demo_dataset)
    assert slots.id is None
    assert any("999" in issue for issue in issues)


def test_tag_word_number_not_after_demonstrative(demo_dataset):
    slots, _ = tag_slots("explain that one to me", demo_dataset)
    assert slots.number is None
    slots, _ = tag_slots("give me one keyword", demo_dataset)
    assert slots.number == 1


def test_tag_sentence_flag_and_split_name(demo_dataset):
    slots, _ = tag_slots("sentence level attribution on the test data", demo_dataset)
    assert slots.sentence_level is True
    assert slots.data_type == "test"


@settings(deadline=None, max_examples=50)
@given(instance_id=st.integers(min_value=0, max_value=49))
def test_tag_every_dataset_id(demo_dataset, instance_id):
    slots, issues = tag_slots(f"please show me instance {instance_id}", demo_dataset)
    assert slots.id == instance_id and issues == []


# --- parse composition -----------------------------------------------------------------


def make_entry(template: str) -> BankEntry:
    from askmodel.intent import _intent_of_template

    return BankEntry("placeholder wording", template, _intent_of_template(template, 1, "test"))


def test_compose_uses_previous_instance_for_missing_id():
    entry = make_entry("filter id {id} and nlpcfe {number}")
    out = compose_parse(entry, SlotMap(), previous_id=42)
    assert isinstance(out, Parsed)
    assert out.parse == "filter id 42 and nlpcfe 1"


def test_compose_fills_metric_default():
    entry = make_entry("score {metric}")
    out = compose_parse(entry, SlotMap(), previous_id=None)
    assert isinstance(out, Parsed)
    assert out.parse == "score accuracy"


def test_compose_missing_id_without_context():
    entry = make_entry("filter id {id} and show")
    out = compose_parse(entry, SlotMap(), previous_id=None)
    assert isinstance(out, MissingSlot)
    assert out.slot == "id" and out.intent == "show"
    assert out.entry is not None  # enough context kept to finish after a follow-up


def test_compose_explicit_id_beats_context():
    entry = make_entry("filter id {id} and predict")
    out = compose_parse(entry, SlotMap(id=7), previous_id=42)
    assert isinstance(out, Parsed)
    assert out.parse == "filter id 7 and predict"


def test_compose_drops_unfilled_optional_group():
    entry = make_entry('globaltopk {number} ["{class_names}"]')
    out = compose_parse(entry, SlotMap(number=5), previous_id=None)
    assert isinstance(out, Parsed)
    assert out.parse == "globaltopk 5"


def test_compose_keeps_filled_optional_group():
    entry = make_entry('globaltopk {number} ["{class_names}"]')
    out = compose_parse(entry, SlotMap(number=5, class_names="offensive"), previous_id=None)
    assert isinstance(out, Parsed)
    assert out.parse == 'globaltopk 5 "offensive"'


def test_every_bank_template_composes_to_canonical_parse(prompt_bank):
    full = SlotMap(
        id=1,
        number=2,
        class_names="offensive",
        data_type="train",
        metric="accuracy",
        include_token="ugly",
        sentence_level=True,
    )
    for entry in prompt_bank.entries:
        out = compose_parse(entry, full, previous_id=1)
        assert isinstance(out, Parsed), entry.parse_template
        assert canonicalize(parse_string(out.parse)) == out.parse


# --- end-to-end utterance parsing ---------------------------------------------------------


def test_every_bank_utterance_resolves_cleanly(prompt_bank, demo_dataset):
    """With a context instance available, no bank wording is ambiguous or stuck."""
    for entry in prompt_bank.entries:
        out = parse_utterance(entry.utterance, prompt_bank, demo_dataset, previous_id=1)
        assert isinstance(out, Parsed), (entry.utterance, out)


def test_dev_set_accuracy_and_speed(prompt_bank, demo_dataset, dev_pairs):
    assert len(dev_pairs) >= 100
    started = time.monotonic()
    hits = 0
    for utterance, gold in dev_pairs:
        out = parse_utterance(utterance, prompt_bank, demo_dataset, previous_id=None)
        if isinstance(out, Parsed) and out.parse == canonicalize(parse_string(gold)):
            hits += 1
    elapsed = time.monotonic() - started
    assert elapsed < 5.0
    assert hits / len(dev_pairs) >= 0.85  # regression floor; currently ~0.91


def test_parsed_results_are_canonical(prompt_bank, demo_dataset, dev_pairs):
    for utterance, _ in dev_pairs:
        out = parse_utterance(utterance, prompt_bank, demo_dataset, previous_id=1)
        if isinstance(out, Parsed):
            assert canonicalize(parse_string(out.parse)) == out.parse


def test_blended_wording_is_ambiguous(prompt_bank, demo_dataset):
    out = parse_utterance(BLENDED_AMBIGUOUS_UTTERANCE, prompt_bank, demo_dataset, previous_id=3)
    assert isinstance(out, Ambiguous)
    assert {c.intent for c in out.candidates} == {"augment", "similar"}
    top, runner_up = out.candidates
    assert top.score - runner_up.score < AMBIGUITY_EPSILON


def test_zero_epsilon_disables_ambiguity(prompt_bank, demo_dataset):
    out = parse_utterance(
        BLENDED_AMBIGUOUS_UTTERANCE, prompt_bank, demo_dataset, previous_id=3, epsilon=0.0
    )
    assert isinstance(out, Parsed)


def test_close_same_intent_scores_are_not_ambiguous(prompt_bank, demo_dataset):
    """Paraphrases of one operation score near each other; that is not ambiguity."""
    out = parse_utterance("How big is the dataset?", prompt_bank, demo_dataset)
    assert isinstance(out, Parsed)
    assert out.intent == "countdata"


def test_unknown_instance_id_asks_for_id(prompt_bank, demo_dataset):
    out = parse_utterance("Please show me instance 999", prompt_bank, demo_dataset)
    assert isinstance(out, MissingSlot)
    assert out.slot == "id"
    assert "999" in out.note


def test_smalltalk_short_circuits_retrieval(prompt_bank, demo_dataset):
    out = parse_utterance("hello there!", prompt_bank, demo_dataset)
    assert isinstance(out, Smalltalk)
    assert out.kind == "greeting"


def test_external_parser_takes_priority(prompt_bank, demo_dataset, monkeypatch):
    class FakeResponse:
        def raise_for_status(self):
            pass

        def json(self):
            return {"parse": "score accuracy"}

    import askmodel.intent as intent_module

    monkeypatch.setattr(intent_module.requests, "post", lambda *a, **k: FakeResponse())
    out = parse_utterance(
        "how many instances are in the data?",
        prompt_bank,
        demo_dataset,
        external=ExternalParser("http://parser.invalid"),
    )
    assert isinstance(out, Parsed)
    assert out.parse == "score accuracy" and out.source == "external"


def test_external_parser_failure_falls_back_to_bank(prompt_bank, demo_dataset, monkeypatch):
    import askmodel.intent as intent_module

    def boom(*args, **kwargs):
        raise requests.ConnectionError("unreachable")

    monkeypatch.setattr(intent_module.requests, "post", boom)
    out = parse_utterance(
        "How big is the dataset?",
        prompt_bank,
        demo_dataset,
        external=ExternalParser("http://parser.invalid"),
    )
    assert isinstance(out, Parsed)
    assert out.intent == "countdata" and out.source == "bank"


def test_external_parser_invalid_output_falls_back(prompt_bank, demo_dataset, monkeypatch):
    class FakeResponse:
        def raise_for_status(self):
            pass

        def json(self):
            return {"parse": "frobnicate everything"}

    import askmodel.intent as intent_module

    monkeypatch.setattr(intent_module.requests, "post", lambda *a, **k: FakeResponse())
    out = parse_utterance(
        "How big is the dataset?",
        prompt_bank,
        demo_dataset,
        external=ExternalParser("http://parser.invalid"),
    )
    assert isinstance(out, Parsed)
    assert out.source == "bank"

"""Utterance understanding: nearest-neighbor intent retrieval over a prompt
bank, rule-based slot tagging, and parse composition.

Prompt-bank file format: TSV lines `utterance<TAB>parse-template`. Parse
templates may contain `{slot}` placeholders and optional groups in square
brackets that are dropped when their slot is unresolved, e.g.
`globaltopk {number} ["{class_names}"]`.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import requests
from sklearn.feature_extraction.text import TfidfVectorizer

from .data import Dataset
from .errors import ConfigError, ParseError
from .grammar import canonicalize, parse_string, signature

AMBIGUITY_EPSILON = 0.05

_WORD_NUMBERS = {
    "one": 1, "two": 2, "three": 3, "four": 4, "five": 5,
    "six": 6, "seven": 7, "eight": 8, "nine": 9, "ten": 10,
}
_METRICS = ("accuracy", "precision", "recall", "f1")
_ID_CUES = frozenset({"id", "instance", "sample", "example", "row", "number"})
_INCLUDE_CUES = frozenset(
    {"contain", "contains", "containing", "include", "includes", "including",
     "mention", "mentions", "mentioning", "word", "token"}
)
_DATA_TYPES = ("train", "dev", "test")

_OPTIONAL_GROUP = re.compile(r"\[([^\[\]]*)\]")
_PLACEHOLDER = re.compile(r"\{(\w+)\}")

_DUMMY_SLOTS = {
    "id": "1",
    "number": "2",
    "include_token": "word",
    "class_names": "x",
    "metric": "accuracy",
    "sentence_level": "sentence",
    "data_type": "train",
}


# --- prompt bank ----------------------------------------------------------------


@dataclass(frozen=True)
class BankEntry:
    utterance: str
    parse_template: str
    intent: str


@dataclass(frozen=True)
class IntentCandidate:
    intent: str
    score: float
    entry: BankEntry


def _intent_of_template(template: str, lineno: int, source: str) -> str:
    """Validate a parse template with dummy slot values; return its intent label."""
    rendered = render_template(template, _DUMMY_SLOTS)
    try:
        tree = parse_string(rendered)
    except ParseError as exc:
        raise ConfigError(
            f"{source} line {lineno}: template does not parse with dummy slots: {exc}"
        ) from None
    action = tree.action()
    return action.op_name if action else tree.clauses[-1].op_name


def render_template(template: str, values: dict[str, str]) -> str:
    """Substitute {slot} values; optional [group] segments drop when unresolved."""

    def fill_group(match: re.Match) -> str:
        group = match.group(1)
        names = _PLACEHOLDER.findall(group)
        if all(name in values for name in names):
            return _PLACEHOLDER.sub(lambda m: values[m.group(1)], group)
        return ""

    out = _OPTIONAL_GROUP.sub(fill_group, template)
    out = _PLACEHOLDER.sub(
        lambda m: values.get(m.group(1), "{" + m.group(1) + "}"), out
    )
    return " ".join(out.split())


def unresolved_slots(template: str, values: dict[str, str]) -> list[str]:
    """Required (non-group) placeholders that `values` does not cover."""
    without_groups = _OPTIONAL_GROUP.sub("", template)
    return [name for name in _PLACEHOLDER.findall(without_groups) if name not in values]


def _normalize_digits(text: str) -> str:
    return re.sub(r"\d+", "0", text.lower())


class TfidfEmbedding:
    """Default embedding provider: TF-IDF over unigrams+bigrams, L2-normalized.

    Any object with the same fit/transform surface can replace it (for example
    a client for an external sentence encoder).
    """

    def __init__(self):
        self.vectorizer = TfidfVectorizer(
            ngram_range=(1, 2), norm="l2", preprocessor=_normalize_digits
        )

    def fit(self, texts: list[str]) -> None:
        self.vectorizer.fit(texts)

    def transform(self, text: str) -> np.ndarray:
        return self.vectorizer.transform([text]).toarray()[0]


EmbeddingProvider = TfidfEmbedding  # structural alias for type annotations


class PromptBank:
    """Nearest-neighbor retrieval index over utterance/parse-template pairs."""

    def __init__(self, entries: list[BankEntry], embedder: Optional[TfidfEmbedding] = None):
        if not entries:
            raise ConfigError("prompt bank is empty")
        self.entries = entries
        self.embedder = embedder if embedder is not None else TfidfEmbedding()
        self.embedder.fit([entry.utterance for entry in entries])
        self.matrix = np.stack([self.embedder.transform(e.utterance) for e in entries])

    @staticmethod
    def load(path: str | Path) -> "PromptBank":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"prompt bank file not found: {path}")
        entries = []
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            if "\t" not in line:
                raise ConfigError(f"prompt bank line {lineno}: missing tab separator")
            utterance, _, template = line.partition("\t")
            utterance, template = utterance.strip(), template.strip()
            if not utterance or not template:
                raise ConfigError(f"prompt bank line {lineno}: empty utterance or parse")
            intent = _intent_of_template(template, lineno, path.name)
            entries.append(BankEntry(utterance, template, intent))
        return PromptBank(entries)

    def embed(self, text: str) -> np.ndarray:
        return self.embedder.transform(text)

    def rank_intents(self, utterance: str, k: int = 5) -> list[IntentCandidate]:
        """Top-k bank entries by cosine; ties keep bank order (stable sort)."""
        scores = self.matrix @ self.embed(utterance)
        order = np.argsort(-scores, kind="stable")[:k]
        return [
            IntentCandidate(
                intent=self.entries[i].intent,
                score=float(scores[i]),
                entry=self.entries[i],
            )
            for i in order
        ]


# --- slot tagging ------------------------------------------------------------------


@dataclass(frozen=True)
class SlotMap:
    id: Optional[int] = None
    number: Optional[int] = None
    class_names: Optional[str] = None
    data_type: Optional[str] = None
    metric: Optional[str] = None
    include_token: Optional[str] = None
    sentence_level: Optional[bool] = None


def _utterance_words(utterance: str) -> list[str]:
    return re.findall(r"[a-z0-9']+", utterance.lower())


def tag_slots(
    utterance: str, dataset: Dataset, intent: str = ""
) -> tuple[SlotMap, list[str]]:
    """Rule-based slot extraction; returns the map plus validation issues.

    The tagging rules are intent-independent; `intent` is accepted so callers
    can pass the retrieved intent for future op-specific rules.
    """
    lowered = utterance.lower()
    words = _utterance_words(utterance)
    issues: list[str] = []

    slot_id: Optional[int] = None
    number: Optional[int] = None
    for position, word in enumerate(words):
        if word.isdigit():
            value = int(word)
            previous = words[position - 1] if position > 0 else ""
            if slot_id is None and previous in _ID_CUES:
                slot_id = value
            elif number is None:
                number = value
        elif word in _WORD_NUMBERS and number is None:
            previous = words[position - 1] if position > 0 else ""
            if previous not in ("that", "this"):
                number = _WORD_NUMBERS[word]
    if slot_id is not None and slot_id not in dataset.instances:
        issues.append(f"id {slot_id} is not in the dataset")
        slot_id = None

    include_token: Optional[str] = None
    quoted = re.search(r"[\"']([^\"']+)[\"']", utterance)
    if quoted:
        include_token = quoted.group(1).strip().lower()
    else:
        for position, word in enumerate(words[:-1]):
            if word in _INCLUDE_CUES:
                candidate = words[position + 1]
                if candidate in ("the", "a", "an") and position + 2 < len(words):
                    candidate = words[position + 2]
                if not candidate.isdigit() and candidate not in _INCLUDE_CUES:
                    include_token = candidate
                    break

    class_name: Optional[str] = None
    for alias, label in sorted(
        dataset.label_aliases.items(), key=lambda kv: -len(kv[0])
    ):
        if alias in lowered and label in dataset.class_names:
            class_name = label
            break
    if class_name is None:
        # Longer names first so "non-offensive" wins over its substring "offensive".
        for label in sorted(dataset.class_names, key=len, reverse=True):
            if label.lower() in lowered:
                class_name = label
                break

    metric = next((m for m in _METRICS if m in words), None)
    data_type = next((d for d in _DATA_TYPES if d in words), None)
    sentence_level = True if "sentence" in words else None

    return (
        SlotMap(
            id=slot_id,
            number=number,
            class_names=class_name,
            data_type=data_type,
            metric=metric,
            include_token=include_token,
            sentence_level=sentence_level,
        ),
        issues,
    )


# --- parse composition ----------------------------------------------------------------


@dataclass(frozen=True)
class Parsed:
    parse: str
    intent: str
    source: str  # "bank" | "external"


@dataclass(frozen=True)
class Ambiguous:
    candidates: tuple[IntentCandidate, ...]


@dataclass(frozen=True)
class MissingSlot:
    slot: str
    intent: str
    note: str = ""
    entry: Optional[BankEntry] = None
    slots: Optional[SlotMap] = None


@dataclass(frozen=True)
class Smalltalk:
    kind: str  # "greeting" | "farewell" | "acknowledgment"


ParseResult = object  # union of the four result dataclasses above


def _signature_default(intent: str, slot_name: str) -> Optional[str]:
    if slot_name == "metric":
        return "accuracy"
    try:
        sig = signature(intent)
    except ParseError:
        return None
    for slot in sig.slots:
        if slot.type == slot_name and not slot.required and slot.default is not None:
            if isinstance(slot.default, bool):
                return None
            return str(slot.default)
    return None


def compose_parse(
    entry: BankEntry,
    slots: SlotMap,
    previous_id: Optional[int] = None,
) -> Parsed | MissingSlot:
    """Fill the entry's parse template from slots, deixis context and defaults."""
    values: dict[str, str] = {}
    if slots.id is not None:
        values["id"] = str(slots.id)
    if slots.number is not None:
        values["number"] = str(slots.number)
    if slots.class_names is not None:
        values["class_names"] = slots.class_names
    if slots.metric is not None:
        values["metric"] = slots.metric
    if slots.include_token is not None:
        values["include_token"] = slots.include_token
    if slots.sentence_level:
        values["sentence_level"] = "sentence"
    if slots.data_type is not None:
        values["data_type"] = slots.data_type

    for name in unresolved_slots(entry.parse_template, values):
        if name == "id" and previous_id is not None:
            values["id"] = str(previous_id)
            continue
        default = _signature_default(entry.intent, name)
        if default is not None:
            values[name] = default
            continue
        return MissingSlot(slot=name, intent=entry.intent, entry=entry, slots=slots)

    rendered = render_template(entry.parse_template, values)
    try:
        parse = canonicalize(parse_string(rendered))
    except ParseError as exc:
        return MissingSlot(slot="parse", intent=entry.intent, note=str(exc))
    return Parsed(parse=parse, intent=entry.intent, source="bank")


# --- external parser ---------------------------------------------------------------------


class ExternalParser:
    """HTTP parser: POST {utterance, context_id} → {parse}."""

    def __init__(self, url: str, timeout: float = 10.0):
        self.url = url
        self.timeout = timeout

    def parse(self, utterance: str, context_id: str) -> Optional[str]:
        try:
            response = requests.post(
                self.url,
                json={"utterance": utterance, "context_id": context_id},
                timeout=self.timeout,
            )
            response.raise_for_status()
            parse = response.json().get("parse")
            if not isinstance(parse, str):
                return None
            return canonicalize(parse_string(parse))
        except (requests.RequestException, ParseError, ValueError):
            return None


# --- top-level utterance parsing ------------------------------------------------------------


def parse_utterance(
    utterance: str,
    bank: PromptBank,
    dataset: Dataset,
    previous_id: Optional[int] = None,
    epsilon: float = AMBIGUITY_EPSILON,
    smalltalk_detector: Optional[Callable[[str], Optional[str]]] = None,
    external: Optional[ExternalParser] = None,
    context_id: str = "",
) -> ParseResult:
    """Smalltalk first, then the external parser when configured, then NN retrieval."""
    if smalltalk_detector is None:
        from .dialogue import detect_smalltalk

        smalltalk_detector = detect_smalltalk
    kind = smalltalk_detector(utterance)
    if kind is not None:
        return Smalltalk(kind=kind)

    if external is not None:
        parse = external.parse(utterance, context_id)
        if parse is not None:
            tree = parse_string(parse)
            action = tree.action()
            intent = action.op_name if action else tree.clauses[-1].op_name
            return Parsed(parse=parse, intent=intent, source="external")

    candidates = bank.rank_intents(utterance, k=5)
    best = candidates[0]
    if best.score <= 0.0 and len(candidates) > 1:
        # zero overlap with the bank: no evidence for any operation
        runner = next((c for c in candidates[1:] if c.intent != best.intent), candidates[1])
        return Ambiguous(candidates=(best, runner))
    distinct = [c for c in candidates if c.intent != best.intent]
    if distinct and best.score - distinct[0].score < epsilon:
        return Ambiguous(candidates=(best, distinct[0]))

    slots, issues = tag_slots(utterance, dataset)
    if issues and "{id}" in best.entry.parse_template:
        return MissingSlot(
            slot="id",
            intent=best.intent,
            note="; ".join(issues),
            entry=best.entry,
            slots=slots,
        )
    return compose_parse(best.entry, slots, previous_id)

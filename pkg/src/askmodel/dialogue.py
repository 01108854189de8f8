"""Per-conversation state machine: turn history, previous-instance binding,
clarification follow-ups, custom-input storage, and smalltalk handling.
"""
from __future__ import annotations

import hashlib
import random
import re
from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .data import Dataset, Selection
from .errors import ArgumentError
from .grammar import CUSTOM_INPUT_ACTIONS, canonicalize, parse_string
from .intent import (
    AMBIGUITY_EPSILON,
    Ambiguous,
    BankEntry,
    IntentCandidate,
    MissingSlot,
    Parsed,
    PromptBank,
    Smalltalk,
    SlotMap,
    compose_parse,
    parse_utterance,
    tag_slots,
)

CUSTOM_MARKER = "custom"

# Deictic cues that refer back to the previously named instance.  These are the
# primary trigger; whenever an id slot is unresolved and a previous id exists,
# the previous id is bound (a documented superset of cue-gated binding).
DEICTIC_CUES = ("this sample", "this instance", "that one", "this", "it")

_GREETING_WORDS = frozenset({"hello", "hi", "hey", "greetings", "howdy", "yo"})
_GREETING_FILLERS = frozenset({"there", "again", "everyone", "bot", "all"})
_FAREWELL_WORDS = frozenset({"bye", "goodbye", "farewell", "quit", "exit", "cya"})
_FAREWELL_FILLERS = frozenset(
    {"good", "now", "then", "see", "you", "for", "all", "done", "that", "thats", "that's", "is", "it"}
)
_FAREWELL_PHRASES = frozenset(
    {"good bye", "see you", "see ya", "that's all", "that is all", "i'm done",
     "im done", "good night", "gotta go", "i have to go"}
)
_ACK_CORE = frozenset(
    {"thanks", "thank", "thx", "ok", "okay", "cool", "great", "nice", "perfect",
     "awesome", "good", "alright", "wow", "helpful", "wonderful", "excellent",
     "interesting", "understood"}
)
_ACK_FILLERS = frozenset(
    {"you", "very", "so", "that", "thats", "really", "looks", "sounds", "is",
     "much", "a", "lot", "makes", "sense", "got", "sure", "fine", "yes", "yeah",
     "all", "right"}
)

_SMALLTALK_POOLS = {
    "greeting": (
        "Hello! Ask me anything about the model or the data.",
        "Hi there! How can I help you explore the model?",
        "Hey! What would you like to know about the model or its predictions?",
    ),
    "farewell": (
        "Goodbye! Come back any time.",
        "Bye! Happy to help again later.",
        "See you next time!",
    ),
    "acknowledgment": (
        "Glad to help!",
        "You're welcome!",
        "Happy to help! Anything else you would like to know?",
    ),
}

# Human words a follow-up may use to name a candidate operation.
_INTENT_ALIASES: dict[str, frozenset[str]] = {
    "nlpcfe": frozenset({"nlpcfe", "counterfactual", "counterfactuals", "flip"}),
    "nlpattribute": frozenset({"nlpattribute", "attribution", "attributions", "importance", "important", "saliency"}),
    "adversarial": frozenset({"adversarial", "attack"}),
    "augment": frozenset({"augment", "augmentation", "augmented", "paraphrase"}),
    "similar": frozenset({"similar", "similarity", "nearest", "closest"}),
    "rationalize": frozenset({"rationalize", "rationale", "reason", "why"}),
    "keywords": frozenset({"keywords", "keyword"}),
    "globaltopk": frozenset({"globaltopk", "global", "overall"}),
    "predict": frozenset({"predict", "prediction", "predictions"}),
    "likelihood": frozenset({"likelihood", "confidence", "probability"}),
    "mistakes": frozenset({"mistakes", "mistake", "errors", "wrong"}),
    "score": frozenset({"score", "accuracy", "performance", "metric"}),
    "show": frozenset({"show", "display"}),
    "countdata": frozenset({"countdata", "count"}),
    "label": frozenset({"label", "labels", "distribution"}),
    "data": frozenset({"data", "dataset"}),
    "model": frozenset({"model"}),
    "function": frozenset({"function", "functionality", "capabilities"}),
    "self": frozenset({"self", "yourself", "who"}),
    "includes": frozenset({"includes", "contain", "containing"}),
    "filter": frozenset({"filter"}),
}

_CLARIFY_VERBS = {
    "nlpcfe": "provide a counterfactual",
    "show": "show the text",
    "nlpattribute": "compute the attributions",
    "adversarial": "construct an adversarial example",
    "augment": "augment the text",
    "rationalize": "explain the prediction",
    "similar": "look for similar instances",
    "likelihood": "report the prediction confidence",
    "predict": "make a prediction",
}

_SLOT_QUESTIONS = {
    "include_token": "Could you please specify which word the texts should contain?",
    "metric": "Could you please specify which metric I should compute?",
    "number": "Could you please specify how many results you would like?",
    "class_names": "Could you please specify which class you mean?",
}


def _normalize_words(utterance: str) -> list[str]:
    cleaned = re.sub(r"[:;=8][-~']?[)(DPp/\\|]", " ", utterance)
    return re.findall(r"[a-z']+", cleaned.lower())


def detect_smalltalk(utterance: str) -> Optional[str]:
    """Closed-lexicon detection; fires only when the whole utterance is smalltalk."""
    words = _normalize_words(utterance)
    if not words:
        return None
    joined = " ".join(words)
    if joined in ("good morning", "good afternoon", "good evening", "hi there", "hello there"):
        return "greeting"
    if joined in _FAREWELL_PHRASES:
        return "farewell"
    if any(w in _GREETING_WORDS for w in words) and all(
        w in _GREETING_WORDS or w in _GREETING_FILLERS for w in words
    ):
        return "greeting"
    if any(w in _FAREWELL_WORDS for w in words) and all(
        w in _FAREWELL_WORDS or w in _FAREWELL_FILLERS for w in words
    ):
        return "farewell"
    if any(w in _ACK_CORE for w in words) and all(
        w in _ACK_CORE or w in _ACK_FILLERS for w in words
    ):
        return "acknowledgment"
    return None


def smalltalk_response(kind: str, rng: random.Random) -> str:
    return rng.choice(_SMALLTALK_POOLS[kind])


def clarification_question(intent: str, slot: str, note: str = "") -> str:
    if slot == "id":
        verb = _CLARIFY_VERBS.get(intent, f"run {intent}")
        question = f"Could you please specify for which instance I should {verb}?"
    else:
        question = _SLOT_QUESTIONS.get(
            slot, f"Could you please specify the {slot} for {intent}?"
        )
    if note:
        return f"{note.capitalize()}. {question}"
    return question


def ambiguity_question(candidates: tuple[IntentCandidate, ...]) -> str:
    names = " or ".join(c.intent for c in candidates)
    return (
        f"I am not quite sure what you would like me to do: {names}? "
        "Could you please tell me which one you mean?"
    )


# --- actions & state -------------------------------------------------------------------


@dataclass(frozen=True)
class Execute:
    parse: str
    intent: str


@dataclass(frozen=True)
class AskClarification:
    text: str


@dataclass(frozen=True)
class SmalltalkReply:
    kind: str
    text: str


Action = Union[Execute, AskClarification, SmalltalkReply]


@dataclass
class Pending:
    kind: str  # "ambiguous" | "missing_slot"
    slot: str = ""
    intent: str = ""
    entry: Optional[BankEntry] = None
    slots: Optional[SlotMap] = None
    candidates: tuple[IntentCandidate, ...] = ()
    question: str = ""
    reasked: bool = False


@dataclass
class TurnRecord:
    utterance: str
    outcome: str  # canonical parse, or "clarification" / "smalltalk:<kind>"
    response: str = ""
    rating: Optional[int] = None


@dataclass
class DialogueState:
    conversation_id: str
    seed: int = 0
    turns: list[TurnRecord] = field(default_factory=list)
    last_instance_id: Union[int, str, None] = None
    pending: Optional[Pending] = None
    custom_input: Optional[str] = None
    active_filter: Optional[Selection] = None
    finished: bool = False

    def __post_init__(self):
        digest = hashlib.sha256(
            f"{self.conversation_id}:{self.seed}".encode("utf-8")
        ).digest()
        self.rng = random.Random(int.from_bytes(digest[:8], "big"))

    @property
    def previous_id(self) -> Optional[int]:
        return self.last_instance_id if isinstance(self.last_instance_id, int) else None

    def record(self, utterance: str, outcome: str, response: str = "") -> TurnRecord:
        record = TurnRecord(utterance=utterance, outcome=outcome, response=response)
        self.turns.append(record)
        return record

    def finish_turn(self, response: str) -> None:
        if self.turns:
            self.turns[-1].response = response


def set_custom_input(state: DialogueState, text: str) -> DialogueState:
    text = text.strip()
    if not text:
        raise ArgumentError("custom input must not be empty")
    state.custom_input = text
    state.last_instance_id = CUSTOM_MARKER
    return state


def _update_reference(state: DialogueState, parse: str) -> None:
    ids = re.findall(r"\bfilter id (\d+)\b", parse)
    if ids:
        state.last_instance_id = int(ids[-1])
    elif re.search(r"\bcustominput\b", parse):
        state.last_instance_id = CUSTOM_MARKER


def _merge_slots(base: Optional[SlotMap], update: SlotMap) -> SlotMap:
    if base is None:
        return update
    return SlotMap(
        id=update.id if update.id is not None else base.id,
        number=update.number if update.number is not None else base.number,
        class_names=update.class_names if update.class_names is not None else base.class_names,
        data_type=update.data_type if update.data_type is not None else base.data_type,
        metric=update.metric if update.metric is not None else base.metric,
        include_token=update.include_token if update.include_token is not None else base.include_token,
        sentence_level=update.sentence_level if update.sentence_level is not None else base.sentence_level,
    )


def _custom_template(entry: BankEntry) -> Optional[str]:
    """Rewrite an instance-scoped template to bind to the stored custom input."""
    if entry.intent not in CUSTOM_INPUT_ACTIONS:
        return None
    rewritten = re.sub(r"^filter id \{id\}\s+and\s+", "custominput and ", entry.parse_template)
    if "{id}" in rewritten:
        return None
    return rewritten


def _resolve_missing(
    state: DialogueState, result: MissingSlot, dataset: Dataset
) -> tuple[Optional[Action], Optional[Pending]]:
    """Turn a MissingSlot outcome into an action, consulting custom-input mode."""
    custom_mode = state.custom_input is not None and state.last_instance_id == CUSTOM_MARKER
    if result.slot == "id" and custom_mode and result.entry is not None and not result.note:
        template = _custom_template(result.entry)
        if template is None:
            supported = ", ".join(sorted(CUSTOM_INPUT_ACTIONS))
            return (
                AskClarification(
                    f"Custom inputs are supported only by these operations: {supported}. "
                    f"To run {result.intent}, please name a dataset instance id."
                ),
                None,
            )
        composed = compose_parse(
            BankEntry(result.entry.utterance, template, result.intent),
            result.slots or SlotMap(),
        )
        if isinstance(composed, Parsed):
            return Execute(parse=composed.parse, intent=composed.intent), None
    question = clarification_question(result.intent, result.slot, result.note)
    pending = Pending(
        kind="missing_slot",
        slot=result.slot,
        intent=result.intent,
        entry=result.entry,
        slots=result.slots,
        question=question,
    )
    return AskClarification(question), pending


def _try_answer_pending(
    state: DialogueState, utterance: str, dataset: Dataset
) -> Optional[Action]:
    """Check whether the utterance answers the pending clarification."""
    pending = state.pending
    assert pending is not None
    slots, _ = tag_slots(utterance, dataset)

    if pending.kind == "ambiguous":
        words = set(_normalize_words(utterance))
        chosen: Optional[IntentCandidate] = None
        for candidate in pending.candidates:
            aliases = _INTENT_ALIASES.get(candidate.intent, frozenset({candidate.intent}))
            if words & aliases:
                chosen = candidate
                break
        if chosen is None:
            return None
        composed = compose_parse(
            chosen.entry, _merge_slots(pending.slots, slots), state.previous_id
        )
        if isinstance(composed, Parsed):
            return Execute(parse=composed.parse, intent=composed.intent)
        return None

    # missing_slot: did the follow-up supply the value?
    merged = _merge_slots(pending.slots, slots)
    if pending.slot == "id":
        candidate_id = slots.id if slots.id is not None else slots.number
        if candidate_id is None or candidate_id not in dataset.instances:
            return None
        if slots.id is None:
            # a bare number answered the id question; it must not fill {number} too
            original_number = pending.slots.number if pending.slots is not None else None
            merged = replace(merged, number=original_number)
        merged = _merge_slots(merged, SlotMap(id=candidate_id))
    elif pending.slot == "number":
        if slots.number is None:
            return None
    elif pending.slot == "include_token":
        if slots.include_token is None:
            words = _normalize_words(utterance)
            if len(words) == 1:
                merged = _merge_slots(merged, SlotMap(include_token=words[0]))
            else:
                return None
    elif pending.slot == "metric":
        if slots.metric is None:
            return None
    elif pending.slot == "class_names":
        if slots.class_names is None:
            return None
    else:
        return None
    if pending.entry is None:
        return None
    composed = compose_parse(pending.entry, merged, state.previous_id)
    if isinstance(composed, Parsed):
        return Execute(parse=composed.parse, intent=composed.intent)
    return None


def step(
    state: DialogueState,
    utterance: str,
    bank: PromptBank,
    dataset: Dataset,
    external=None,
    epsilon: float = AMBIGUITY_EPSILON,
) -> tuple[DialogueState, Action]:
    """Process one user turn; returns the updated state and the action to take."""
    pending = state.pending

    if pending is not None:
        answer = _try_answer_pending(state, utterance, dataset)
        if answer is not None:
            state.pending = None
            _update_reference(state, answer.parse)
            state.record(utterance, answer.parse)
            return state, answer

    result = parse_utterance(
        utterance,
        bank,
        dataset,
        previous_id=state.previous_id,
        epsilon=epsilon,
        external=external,
        context_id=state.conversation_id,
    )

    if isinstance(result, Smalltalk):
        state.pending = None
        text = smalltalk_response(result.kind, state.rng)
        if result.kind == "farewell":
            state.finished = True
        state.record(utterance, f"smalltalk:{result.kind}", response=text)
        return state, SmalltalkReply(kind=result.kind, text=text)

    if isinstance(result, Parsed):
        state.pending = None
        parse = result.parse
        custom_mode = (
            state.custom_input is not None and state.last_instance_id == CUSTOM_MARKER
        )
        if custom_mode:
            tree = parse_string(parse)
            action_clause = tree.action()
            if (
                action_clause is not None
                and not tree.filters()
                and action_clause.op_name in CUSTOM_INPUT_ACTIONS
            ):
                parse = canonicalize(parse_string(f"custominput and {parse}"))
        _update_reference(state, parse)
        state.record(utterance, parse)
        return state, Execute(parse=parse, intent=result.intent)

    if isinstance(result, Ambiguous):
        if pending is not None and not pending.reasked:
            pending.reasked = True
            state.record(utterance, "clarification", response=pending.question)
            return state, AskClarification(pending.question)
        if all(c.score <= 0.0 for c in result.candidates):
            # no retrieval evidence at all: ask for a rephrase, keep no pending
            state.pending = None
            text = (
                "I could not relate your question to anything I can do. "
                "Could you please rephrase it?"
            )
            state.record(utterance, "clarification", response=text)
            return state, AskClarification(text)
        question = ambiguity_question(result.candidates)
        state.pending = Pending(
            kind="ambiguous", candidates=result.candidates, question=question
        )
        state.record(utterance, "clarification", response=question)
        return state, AskClarification(question)

    if isinstance(result, MissingSlot):
        if pending is not None and not pending.reasked:
            pending.reasked = True
            state.record(utterance, "clarification", response=pending.question)
            return state, AskClarification(pending.question)
        action, new_pending = _resolve_missing(state, result, dataset)
        state.pending = new_pending
        if isinstance(action, Execute):
            _update_reference(state, action.parse)
            state.record(utterance, action.parse)
            return state, action
        state.record(utterance, "clarification", response=action.text)
        return state, action

    raise AssertionError(f"unhandled parse result: {result!r}")

"""Text perturbations: counterfactual edits, PWWS adversarial attack, augmentation."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from itertools import combinations, product
from typing import Optional

import numpy as np

from ..errors import ArgumentError
from ..model import SEPARATOR_TOKEN, LinearTextModel, tokenize
from .lexicon import SynonymLexicon

# Safety valve so a depth-3 search over a long text cannot hang the service;
# normal fixtures stay far below this.
DEFAULT_EVAL_BUDGET = 200_000

DELETE = None  # an edit whose replacement is None deletes the token


@dataclass(frozen=True)
class EditedText:
    original_tokens: tuple[str, ...]
    edits: tuple[tuple[int, Optional[str]], ...]  # (position, replacement) — None deletes
    result_tokens: tuple[str, ...]
    result_text: str
    predicted_label: str
    predicted_index: int
    likelihood: dict[str, float]

    def edit_count(self) -> int:
        return len(self.edits)

    def replaced_positions(self) -> tuple[int, ...]:
        """Positions in result_tokens that hold a substituted word (for bolding)."""
        positions = []
        deleted_before = 0
        for position, replacement in sorted(self.edits):
            if replacement is None:
                deleted_before += 1
            else:
                positions.append(position - deleted_before)
        return tuple(positions)


@dataclass(frozen=True)
class NoFlipFound:
    original_tokens: tuple[str, ...]
    predicted_label: str
    max_edits: int


@dataclass(frozen=True)
class AttackFailed:
    original_tokens: tuple[str, ...]
    gold_label: str


@dataclass(frozen=True)
class AlreadyMisclassified:
    instance_id: int
    gold_label: str
    predicted_label: str


def apply_edits(
    tokens: tuple[str, ...], edits: tuple[tuple[int, Optional[str]], ...]
) -> tuple[str, ...]:
    by_position = dict(edits)
    out = []
    for position, token in enumerate(tokens):
        if position in by_position:
            replacement = by_position[position]
            if replacement is not None:
                out.append(replacement)
        else:
            out.append(token)
    return tuple(out)


def _edited(
    model: LinearTextModel,
    tokens: tuple[str, ...],
    edits: tuple[tuple[int, Optional[str]], ...],
) -> EditedText:
    result_tokens = apply_edits(tokens, edits)
    result_text = " ".join(result_tokens)
    label, index = model.predict(result_text)
    return EditedText(
        original_tokens=tokens,
        edits=tuple(sorted(edits)),
        result_tokens=result_tokens,
        result_text=result_text,
        predicted_label=label,
        predicted_index=index,
        likelihood=model.likelihood(result_text),
    )


def nlpcfe(
    model: LinearTextModel,
    text: str,
    number: int = 1,
    max_edits: int = 3,
    synonyms: Optional[SynonymLexicon] = None,
    antonyms: Optional[SynonymLexicon] = None,
    eval_budget: int = DEFAULT_EVAL_BUDGET,
) -> list[EditedText] | NoFlipFound:
    """Breadth-first label-flipping edit search over substitute/delete edits."""
    if number < 1:
        raise ArgumentError("number must be >= 1")
    synonyms = synonyms or SynonymLexicon({})
    antonyms = antonyms or SynonymLexicon({})
    tokens = tokenize(text).tokens
    if not tokens:
        raise ArgumentError("nothing to edit: the text has no tokens")
    original_label, original_index = model.predict(" ".join(tokens))

    actions: dict[int, list[Optional[str]]] = {}
    for position, token in enumerate(tokens):
        if token == SEPARATOR_TOKEN:
            continue
        candidates: list[Optional[str]] = []
        for substitute in (*synonyms.get(token), *antonyms.get(token)):
            if substitute != token and substitute not in candidates:
                candidates.append(substitute)
        candidates.append(DELETE)
        actions[position] = candidates

    results: list[EditedText] = []
    evaluations = 0
    for depth in range(1, max_edits + 1):
        found_at_depth: list[EditedText] = []
        for positions in combinations(sorted(actions), depth):
            for choice in product(*(actions[p] for p in positions)):
                if evaluations >= eval_budget:
                    break
                evaluations += 1
                edits = tuple(zip(positions, choice))
                candidate = _edited(model, tokens, edits)
                if candidate.predicted_index != original_index:
                    found_at_depth.append(candidate)
            if evaluations >= eval_budget:
                break
        found_at_depth.sort(
            key=lambda e: (
                -e.likelihood[e.predicted_label],
                tuple((p, r or "") for p, r in e.edits),
            )
        )
        results.extend(found_at_depth)
        if len(results) >= number or evaluations >= eval_budget:
            break
    if not results:
        return NoFlipFound(tokens, original_label, max_edits)
    # distinct edit sets, best-first: (fewest edits, highest flipped probability)
    seen = set()
    unique = []
    for item in results:
        key = frozenset(item.edits)
        if key not in seen:
            seen.add(key)
            unique.append(item)
    return unique[:number]


def adversarial(
    model: LinearTextModel,
    text: str,
    gold_label: int,
    synonyms: SynonymLexicon,
    instance_id: int = -1,
) -> EditedText | AttackFailed | AlreadyMisclassified:
    """PWWS: probability-weighted word saliency greedy synonym substitution."""
    tokens = tokenize(text).tokens
    if not tokens:
        raise ArgumentError("nothing to attack: the text has no tokens")
    _, predicted = model.predict(" ".join(tokens))
    if predicted != gold_label:
        return AlreadyMisclassified(
            instance_id=instance_id,
            gold_label=model.class_names[gold_label],
            predicted_label=model.class_names[predicted],
        )
    base_prob = model.likelihood(" ".join(tokens))[model.class_names[gold_label]]

    positions = [p for p, token in enumerate(tokens) if token != SEPARATOR_TOKEN]
    # word saliency: probability drop when the token is deleted
    saliency = []
    for position in positions:
        without = tokens[:position] + tokens[position + 1 :]
        prob = model.likelihood(" ".join(without))[model.class_names[gold_label]]
        saliency.append(base_prob - prob)

    # best substitute per position by probability drop on the original text
    best_substitute: dict[int, tuple[str, float]] = {}
    for position in positions:
        token = tokens[position]
        best: Optional[tuple[str, float]] = None
        for substitute in synonyms.get(token):
            swapped = tokens[:position] + (substitute,) + tokens[position + 1 :]
            prob = model.likelihood(" ".join(swapped))[model.class_names[gold_label]]
            delta = base_prob - prob
            if best is None or delta > best[1]:
                best = (substitute, delta)
        if best is not None:
            best_substitute[position] = best

    if not best_substitute:
        return AttackFailed(tokens, model.class_names[gold_label])

    softmax_saliency = np.exp(np.array(saliency) - max(saliency))
    softmax_saliency = softmax_saliency / softmax_saliency.sum()
    weight_by_position = dict(zip(positions, softmax_saliency))
    order = sorted(
        best_substitute,
        key=lambda p: (-(weight_by_position[p] * best_substitute[p][1]), p),
    )

    applied: list[tuple[int, Optional[str]]] = []
    for position in order:
        applied.append((position, best_substitute[position][0]))
        candidate = _edited(model, tokens, tuple(applied))
        if candidate.predicted_index != gold_label:
            return candidate
    return AttackFailed(tokens, model.class_names[gold_label])


def augment(
    model: LinearTextModel,
    text: str,
    synonyms: SynonymLexicon,
    stopwords: frozenset[str],
    ratio: float = 0.3,
    seed: int = 0,
) -> EditedText:
    """Replace ceil(ratio × eligible) non-stopword tokens with their nearest neighbor."""
    tokens = tokenize(text).tokens
    eligible = [
        position
        for position, token in enumerate(tokens)
        if token != SEPARATOR_TOKEN and token not in stopwords and synonyms.get(token)
    ]
    if not eligible:
        raise ArgumentError("cannot augment: no eligible tokens")
    count = math.ceil(ratio * len(eligible))
    rng = random.Random(seed)
    chosen = sorted(rng.sample(eligible, count))
    edits = tuple((position, synonyms.get(tokens[position])[0]) for position in chosen)
    return _edited(model, tokens, edits)

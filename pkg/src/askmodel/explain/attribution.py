"""Integrated-gradients token/sentence attribution and its verbalization."""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from ..errors import ArgumentError
from ..model import PUNCTUATION_CHARS, SEPARATOR_TOKEN, LinearTextModel, tokenize

_SENTENCE_END = re.compile(r"[.!?]+[\"')\]]*$")
_ORDINALS = (
    "first", "second", "third", "fourth", "fifth",
    "sixth", "seventh", "eighth", "ninth", "tenth",
)


@dataclass(frozen=True)
class Attribution:
    instance_ref: object  # instance id or the string "custom"
    target_class: int
    target_label: str
    tokens: tuple[str, ...]
    token_scores: tuple[float, ...]
    sentence_ids: tuple[int, ...]
    level: str  # "token" | "sentence"
    mode: str  # "topk" | "all"
    topk: int

    def sentence_scores(self) -> tuple[float, ...]:
        """Signed sums of token scores per sentence, in sentence order."""
        if not self.sentence_ids:
            return ()
        totals = [0.0] * (max(self.sentence_ids) + 1)
        for sid, score in zip(self.sentence_ids, self.token_scores):
            totals[sid] += score
        return tuple(totals)

    def top_tokens(self) -> tuple[tuple[str, float], ...]:
        """The displayed ranking: k most positive scores (or all), stable by position."""
        order = sorted(range(len(self.tokens)), key=lambda i: (-self.token_scores[i], i))
        if self.mode == "topk":
            order = order[: self.topk]
        return tuple((self.tokens[i], self.token_scores[i]) for i in order)


def _sentence_ids_for(text: str) -> tuple[int, ...]:
    """Sentence index per produced token, split on chunks ending in . ! ?"""
    ids = []
    sentence = 0
    for chunk in text.lower().split():
        produced = chunk == SEPARATOR_TOKEN or chunk.strip(PUNCTUATION_CHARS)
        if produced:
            ids.append(sentence)
        if _SENTENCE_END.search(chunk):
            sentence += 1
    return tuple(ids)


def integrated_gradients(
    model: LinearTextModel, counts: dict[str, float], target_class: int, steps: int = 32
) -> dict[str, float]:
    """Midpoint-rule IG from the all-zero baseline; per-feature attributions."""
    if steps < 1:
        raise ArgumentError("ig_steps must be >= 1")
    mean_gradient: dict[str, float] = {token: 0.0 for token in counts}
    for j in range(steps):
        alpha = (j + 0.5) / steps
        point = {token: alpha * count for token, count in counts.items()}
        gradient = model.logit_gradient(point, target_class)
        for token, value in gradient.items():
            mean_gradient[token] += value / steps
    return {token: counts[token] * mean_gradient[token] for token in counts}


def nlpattribute(
    model: LinearTextModel,
    text: str,
    target_class: int,
    mode: str = "topk",
    topk: int = 3,
    level: str = "token",
    ig_steps: int = 32,
    instance_ref: object = "custom",
) -> Attribution:
    tokenized = tokenize(text)
    if not tokenized.tokens:
        raise ArgumentError("nothing to attribute: the text has no tokens")
    feature_attr = integrated_gradients(model, dict(tokenized.counts), target_class, ig_steps)
    scores = []
    for token in tokenized.tokens:
        total = feature_attr.get(token, 0.0)
        occurrences = tokenized.counts[token]
        scores.append(total / occurrences if token in model.vocabulary else 0.0)
    return Attribution(
        instance_ref=instance_ref,
        target_class=target_class,
        target_label=model.class_names[target_class],
        tokens=tokenized.tokens,
        token_scores=tuple(scores),
        sentence_ids=_sentence_ids_for(text),
        level=level,
        mode=mode,
        topk=topk,
    )


def globaltopk(
    model: LinearTextModel,
    dataset,
    k: int = 3,
    target_class: int = 0,
    min_occurrence: int = 2,
    ig_steps: int = 32,
) -> tuple[tuple[str, float], ...]:
    """Mean per-occurrence attribution toward a class across the whole dataset."""
    if k < 1:
        raise ArgumentError("k must be >= 1")
    totals: dict[str, float] = {}
    occurrences: dict[str, int] = {}
    for instance_id in dataset.ids():
        inst = dataset.instances[instance_id]
        tokenized = tokenize(inst.text())
        if not tokenized.tokens:
            continue
        feature_attr = integrated_gradients(
            model, dict(tokenized.counts), target_class, ig_steps
        )
        for token, count in tokenized.counts.items():
            if token == SEPARATOR_TOKEN or token not in model.vocabulary:
                continue
            totals[token] = totals.get(token, 0.0) + feature_attr.get(token, 0.0)
            occurrences[token] = occurrences.get(token, 0) + count
    qualifying = [
        (token, totals[token] / occurrences[token])
        for token in totals
        if occurrences[token] >= min_occurrence
    ]
    qualifying.sort(key=lambda pair: (-pair[1], pair[0]))
    return tuple(qualifying[:k])


def verbalize_attribution(
    attribution: Attribution,
    global_ranks: tuple[tuple[str, float], ...],
) -> list[str]:
    """Position descriptor + local-vs-global salience comparison sentences."""
    if not attribution.tokens:
        raise ArgumentError("empty attribution")
    sentences: list[str] = []
    best = max(
        range(len(attribution.tokens)),
        key=lambda i: (attribution.token_scores[i], -i),
    )
    sentence_count = (max(attribution.sentence_ids) + 1) if attribution.sentence_ids else 1
    if sentence_count >= 2:
        sid = attribution.sentence_ids[best]
        if sid == 0:
            where = "first"
        elif sid == sentence_count - 1:
            where = "last"
        else:
            where = _ORDINALS[sid] if sid < len(_ORDINALS) else f"{sid + 1}th"
        sentences.append(f"The {where} sentence contains the most salient token.")
    top_token = attribution.tokens[best]
    global_position: Optional[int] = None
    for rank, (token, _) in enumerate(global_ranks):
        if token == top_token:
            global_position = rank
            break
    if global_position is None or global_position > 0:
        sentences.append(
            f"The word '{top_token}' is more salient for this instance "
            f"than it is across the dataset."
        )
    else:
        sentences.append(
            f"The word '{top_token}' is also the most salient token across the dataset."
        )
    return sentences

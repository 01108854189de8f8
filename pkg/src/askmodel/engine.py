"""Executes canonical parses against a dataset/model pair, producing typed
result objects for response rendering.

Filter clauses fold into or-groups of and-chains; each group narrows the full
dataset left to right and the groups' selections are unioned (ascending id).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import data as data_ops
from .data import Dataset, Instance, Selection, ShowPage
from .errors import ArgumentError
from .explain import (
    Attribution,
    EditedText,
    SimilarityIndex,
    SynonymLexicon,
    adversarial,
    augment,
    globaltopk,
    keywords,
    nlpattribute,
    nlpcfe,
    rationalize,
    verbalize_attribution,
)
from .grammar import Clause, ParseTree, parse_string
from .model import LinearTextModel, predict_distribution


# --- result types -------------------------------------------------------------


@dataclass(frozen=True)
class PredictionResult:
    subject: str
    text: str
    label: str
    probabilities: dict[str, float]


@dataclass(frozen=True)
class PredictionSummary:
    fractions: dict[str, float]
    total: int


@dataclass(frozen=True)
class LikelihoodResult:
    subject: str
    label: str
    probabilities: dict[str, float]


@dataclass(frozen=True)
class CountResult:
    count: int
    total: int


@dataclass(frozen=True)
class DistributionResult:
    rows: dict[str, tuple[int, float]]
    total: int


@dataclass(frozen=True)
class ScoreResult:
    metric: str
    value: float
    count: int


@dataclass(frozen=True)
class MistakesCountResult:
    count: int
    total: int


@dataclass(frozen=True)
class MistakesSampleResult:
    items: tuple[Instance, ...]
    count: int
    total: int


@dataclass(frozen=True)
class MetadataCard:
    kind: str  # "data" | "model"
    text: str


@dataclass(frozen=True)
class AboutResult:
    kind: str  # "function" | "self"


@dataclass(frozen=True)
class AttributionResult:
    subject: str
    label: str
    attribution: Attribution
    commentary: tuple[str, ...]


@dataclass(frozen=True)
class GlobalTopKResult:
    label: str
    items: tuple[tuple[str, float], ...]


@dataclass(frozen=True)
class CounterfactualResult:
    subject: str
    original_label: str
    flips: tuple  # of EditedText


@dataclass(frozen=True)
class AdversarialResult:
    subject: str
    original_label: str
    edited: object  # EditedText


@dataclass(frozen=True)
class AugmentResult:
    subject: str
    edited: object  # EditedText


@dataclass(frozen=True)
class SimilarResult:
    subject: str
    neighbors: tuple[tuple[Instance, float], ...]


@dataclass(frozen=True)
class KeywordsResult:
    items: tuple[tuple[str, int], ...]
    count: int


@dataclass(frozen=True)
class RationaleResult:
    subject: str
    label: str
    rationale: object  # Rationale


@dataclass(frozen=True)
class NoResult:
    message: str


# --- execution context -----------------------------------------------------------


@dataclass
class EngineContext:
    dataset: Dataset
    model: LinearTextModel
    similarity: SimilarityIndex
    synonyms: SynonymLexicon
    antonyms: SynonymLexicon
    stopwords: frozenset[str]
    rationale_backend: Optional[str] = None
    cache: Optional[object] = None  # duck-typed: get(op, instance_id, params), put(...)
    custom_input: Optional[str] = None
    seed: int = 0
    _global_ranks: dict[int, tuple] = field(default_factory=dict)

    def global_ranks(self, target_class: int) -> tuple[tuple[str, float], ...]:
        """All-token global attribution ranking for a class, memoized."""
        if target_class not in self._global_ranks:
            self._global_ranks[target_class] = globaltopk(
                self.model,
                self.dataset,
                k=len(self.model.vocabulary),
                target_class=target_class,
                min_occurrence=1,
            )
        return self._global_ranks[target_class]

    def class_index(self, name: str) -> int:
        lowered = name.lower()
        resolved = self.dataset.label_aliases.get(lowered, lowered)
        for index, class_name in enumerate(self.dataset.class_names):
            if class_name.lower() == resolved:
                return index
        raise ArgumentError(f"unknown class '{name}'")


# --- helpers ------------------------------------------------------------------------


def _ints(clause: Clause) -> list[int]:
    return [int(a.value) for a in clause.args if a.kind == "int"]


def _strs(clause: Clause) -> list[str]:
    return [str(a.value) for a in clause.args if a.kind == "str"]


def _kws(clause: Clause) -> list[str]:
    return [str(a.value) for a in clause.args if a.kind == "kw"]


def resolve_selection(tree: ParseTree, ctx: EngineContext) -> Selection:
    """Fold filter clauses into or-groups of and-chains and union the groups."""
    filters = tree.filters()
    if not filters or (len(filters) == 1 and filters[0].op_name == "custominput"):
        return ctx.dataset.all_selection()

    groups: list[list[Clause]] = [[filters[0]]]
    filter_connectives = tree.connectives[: len(filters) - 1]
    for connective, clause in zip(filter_connectives, filters[1:]):
        if connective == "or":
            groups.append([clause])
        else:
            groups[-1].append(clause)

    merged: Optional[Selection] = None
    for group in groups:
        selection = ctx.dataset.all_selection()
        for clause in group:
            if clause.op_name == "filter":
                selection = data_ops.filter_id(selection, _ints(clause)[0])
            elif clause.op_name == "includes":
                selection = data_ops.filter_includes(selection, _strs(clause)[0])
        merged = selection if merged is None else merged.union(selection)
    return merged if merged is not None else ctx.dataset.all_selection()


def _subject_text(tree: ParseTree, selection: Selection, ctx: EngineContext) -> tuple[str, str]:
    """(subject label, raw text) for the instance an instance-scoped op acts on."""
    if tree.has_custom_input():
        if not ctx.custom_input:
            raise ArgumentError("no custom input has been provided yet")
        return "your input", ctx.custom_input
    if len(selection) != 1:
        raise ArgumentError("no instances match")
    instance = selection.instances()[0]
    return f"instance {instance.id}", instance.text()


def _single_instance(selection: Selection) -> Instance:
    if len(selection) != 1:
        raise ArgumentError("no instances match")
    return selection.instances()[0]


# --- executor -----------------------------------------------------------------------


def execute(parse: str, ctx: EngineContext) -> object:
    """Run a canonical parse; returns one of the result dataclasses above."""
    tree = parse_string(parse)
    selection = resolve_selection(tree, ctx)
    action = tree.action()

    if action is None:
        return data_ops.show(selection, page=0)

    op = action.op_name
    try:
        return _run_action(op, action, tree, selection, ctx)
    except ArgumentError as exc:
        if str(exc) == "no instances match":
            return NoResult(message="No instances match that filter.")
        raise


def _run_action(
    op: str,
    action: Clause,
    tree: ParseTree,
    selection: Selection,
    ctx: EngineContext,
) -> object:
    model, dataset = ctx.model, ctx.dataset

    if op == "show":
        if len(selection) == 0:
            return NoResult(message="No instances match that filter.")
        return data_ops.show(selection, page=0)

    if op == "countdata":
        return CountResult(count=len(selection), total=len(dataset.instances))

    if op == "label":
        rows = data_ops.label_distribution(selection)
        return DistributionResult(rows=rows, total=len(selection))

    if op == "predict":
        if tree.has_custom_input() or len(selection) == 1:
            subject, text = _subject_text(tree, selection, ctx)
            label, _ = model.predict(text)
            return PredictionResult(
                subject=subject,
                text=text,
                label=label,
                probabilities=model.likelihood(text),
            )
        fractions = predict_distribution(model, selection)
        return PredictionSummary(fractions=fractions, total=len(selection))

    if op == "likelihood":
        instance = _single_instance(selection)
        label, _ = model.predict(instance.text())
        return LikelihoodResult(
            subject=f"instance {instance.id}",
            label=label,
            probabilities=model.likelihood(instance.text()),
        )

    if op == "mistakes":
        mode = (_kws(action) or ["count"])[0]
        if len(selection) == 0:
            return NoResult(message="No instances match that filter.")
        count = data_ops.mistakes_count(selection, model)
        if mode == "count":
            return MistakesCountResult(count=count, total=len(selection))
        return MistakesSampleResult(
            items=tuple(data_ops.mistakes_sample(selection, model)),
            count=count,
            total=len(selection),
        )

    if op == "score":
        metric = _kws(action)[0]
        if len(selection) == 0:
            return NoResult(message="No instances match that filter.")
        return ScoreResult(
            metric=metric,
            value=data_ops.score(selection, model, metric),
            count=len(selection),
        )

    if op == "data":
        return MetadataCard(kind="data", text=data_ops.describe_metadata(dataset, "data"))

    if op == "model":
        return MetadataCard(
            kind="model", text=data_ops.describe_metadata(dataset, "model", model)
        )

    if op in ("function", "self"):
        return AboutResult(kind=op)

    if op == "nlpattribute":
        subject, text = _subject_text(tree, selection, ctx)
        topk = (_ints(action) or [3])[0]
        level = "sentence" if "sentence" in _kws(action) else "token"
        label, target = model.predict(text)
        cached = _cache_get(ctx, tree, "nlpattribute", action)
        if cached is not None:
            return cached
        attribution = nlpattribute(
            model,
            text,
            target_class=target,
            mode="topk",
            topk=topk,
            level=level,
            instance_ref=subject,
        )
        commentary = tuple(verbalize_attribution(attribution, ctx.global_ranks(target)))
        result = AttributionResult(
            subject=subject, label=label, attribution=attribution, commentary=commentary
        )
        _cache_put(ctx, tree, "nlpattribute", action, result)
        return result

    if op == "globaltopk":
        k = (_ints(action) or [3])[0]
        names = _strs(action)
        target = ctx.class_index(names[0]) if names else 0
        items = globaltopk(model, dataset, k=k, target_class=target)
        return GlobalTopKResult(label=dataset.class_names[target], items=items)

    if op == "nlpcfe":
        subject, text = _subject_text(tree, selection, ctx)
        number = (_ints(action) or [1])[0]
        label, _ = model.predict(text)
        outcome = nlpcfe(
            model, text, number=number, synonyms=ctx.synonyms, antonyms=ctx.antonyms
        )
        if isinstance(outcome, list):
            return CounterfactualResult(
                subject=subject, original_label=label, flips=tuple(outcome)
            )
        return outcome  # NoFlipFound

    if op == "adversarial":
        instance = _single_instance(selection)
        outcome = adversarial(
            model, instance.text(), instance.gold_label, ctx.synonyms, instance_id=instance.id
        )
        if isinstance(outcome, EditedText):
            return AdversarialResult(
                subject=f"instance {instance.id}",
                original_label=dataset.class_names[instance.gold_label],
                edited=outcome,
            )
        return outcome  # AttackFailed | AlreadyMisclassified

    if op == "augment":
        instance = _single_instance(selection)
        edited = augment(
            model, instance.text(), ctx.synonyms, ctx.stopwords, seed=ctx.seed
        )
        return AugmentResult(subject=f"instance {instance.id}", edited=edited)

    if op == "rationalize":
        instance = _single_instance(selection)
        text = instance.text()
        label, target = model.predict(text)
        cached = _cache_get(ctx, tree, "rationalize", action)
        if cached is not None:
            return cached
        attribution = nlpattribute(
            model, text, target_class=target, mode="topk", topk=3,
            instance_ref=f"instance {instance.id}",
        )
        rationale = rationalize(text, label, attribution, backend_url=ctx.rationale_backend)
        result = RationaleResult(
            subject=f"instance {instance.id}", label=label, rationale=rationale
        )
        if not rationale.fallback:
            _cache_put(ctx, tree, "rationalize", action, result)
        return result

    if op == "similar":
        number = (_ints(action) or [1])[0]
        if tree.has_custom_input():
            if not ctx.custom_input:
                raise ArgumentError("no custom input has been provided yet")
            subject: str | int = ctx.custom_input
            subject_name = "your input"
        else:
            instance = _single_instance(selection)
            subject = instance.id
            subject_name = f"instance {instance.id}"
        cached = _cache_get(ctx, tree, "similar", action)
        if cached is not None:
            return cached
        ranked = ctx.similarity.similar(subject, number=number)
        neighbors = tuple(
            (dataset.instances[instance_id], cosine) for instance_id, cosine in ranked
        )
        result = SimilarResult(subject=subject_name, neighbors=neighbors)
        _cache_put(ctx, tree, "similar", action, result)
        return result

    if op == "keywords":
        n = (_ints(action) or [3])[0]
        if len(selection) == 0:
            return NoResult(message="No instances match that filter.")
        items = tuple(keywords(selection, n=n, stopwords=ctx.stopwords))
        return KeywordsResult(items=items, count=len(selection))

    raise ArgumentError(f"operation '{op}' cannot be executed")


# --- cache hooks ------------------------------------------------------------------------


def _cache_instance_id(tree: ParseTree, ctx: EngineContext) -> Optional[int]:
    if tree.has_custom_input():
        return None
    filters = tree.filters()
    if len(filters) == 1 and filters[0].op_name == "filter":
        return _ints(filters[0])[0]
    return None


def _cache_params(action: Clause) -> str:
    return action.render()


def _cache_get(ctx: EngineContext, tree: ParseTree, op: str, action: Clause):
    if ctx.cache is None:
        return None
    instance_id = _cache_instance_id(tree, ctx)
    if instance_id is None:
        return None
    return ctx.cache.get(op, instance_id, _cache_params(action))


def _cache_put(ctx: EngineContext, tree: ParseTree, op: str, action: Clause, result) -> None:
    if ctx.cache is None:
        return
    instance_id = _cache_instance_id(tree, ctx)
    if instance_id is None:
        return
    ctx.cache.put(op, instance_id, _cache_params(action), result)

"""Template-filling response generation: deterministic text plus a structured
payload derived from the same result object.

Template files live in assets/templates/, one file per result kind; variants
are separated by lines containing only `---`. Placeholders use `{name}` syntax
and are validated against each kind's declared vocabulary at load time.
"""
from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .data import Instance, ShowPage
from .engine import (
    AboutResult,
    AdversarialResult,
    AttributionResult,
    AugmentResult,
    CountResult,
    CounterfactualResult,
    DistributionResult,
    GlobalTopKResult,
    KeywordsResult,
    LikelihoodResult,
    MetadataCard,
    MistakesCountResult,
    MistakesSampleResult,
    NoResult,
    PredictionResult,
    PredictionSummary,
    RationaleResult,
    ScoreResult,
    SimilarResult,
)
from .errors import ConfigError
from .explain import AlreadyMisclassified, AttackFailed, EditedText, NoFlipFound
from .grammar import registry

TEMPLATES_DIR = Path(__file__).parent / "assets" / "templates"

_PLACEHOLDER = re.compile(r"\{(\w+)\}")

# Declared placeholder vocabulary per template kind; a template using any
# other placeholder is rejected at load time.
TEMPLATE_SPECS: dict[str, frozenset[str]] = {
    "show_page": frozenset({"count_shown", "total", "listing"}),
    "count": frozenset({"count", "total"}),
    "distribution": frozenset({"rows", "total"}),
    "score": frozenset({"metric", "value", "count"}),
    "mistakes_count": frozenset({"count", "total"}),
    "mistakes_sample": frozenset({"count", "total", "listing"}),
    "prediction": frozenset({"subject", "label", "probability"}),
    "prediction_summary": frozenset({"rows", "total"}),
    "likelihood": frozenset({"subject", "label", "rows"}),
    "metadata": frozenset({"text"}),
    "attribution": frozenset({"subject", "label", "top_words", "details", "commentary"}),
    "global_topk": frozenset({"label", "top_words"}),
    "counterfactual": frozenset({"subject", "original_label", "listing"}),
    "no_flip": frozenset({"max_edits", "label"}),
    "adversarial": frozenset({"subject", "changed", "original_label", "new_label", "result"}),
    "attack_failed": frozenset({"label"}),
    "already_misclassified": frozenset({"id", "gold", "predicted"}),
    "augment": frozenset({"subject", "result", "label"}),
    "similar": frozenset({"subject", "listing"}),
    "keywords": frozenset({"count", "listing"}),
    "rationale": frozenset({"subject", "text"}),
    "no_result": frozenset({"message"}),
}


def load_templates(directory: Path = TEMPLATES_DIR) -> dict[str, tuple[str, ...]]:
    """Load and validate every template file; reject unknown placeholders."""
    templates: dict[str, tuple[str, ...]] = {}
    for kind, allowed in TEMPLATE_SPECS.items():
        path = directory / f"{kind}.txt"
        if not path.exists():
            raise ConfigError(f"missing template file: {path.name}")
        variants: list[str] = []
        current: list[str] = []
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip() == "---":
                variants.append("\n".join(current).strip())
                current = []
            else:
                current.append(line)
        variants.append("\n".join(current).strip())
        variants = [v for v in variants if v]
        if not variants:
            raise ConfigError(f"template file {path.name} has no variants")
        for variant in variants:
            used = set(_PLACEHOLDER.findall(variant))
            unknown = used - allowed
            if unknown:
                raise ConfigError(
                    f"template {path.name} uses unknown placeholders: {sorted(unknown)}"
                )
        templates[kind] = tuple(variants)
    return templates


TEMPLATES = load_templates()


# --- formatting helpers ----------------------------------------------------------


def percent(value: float) -> str:
    return f"{value * 100:.2f}%"


def probability(value: float) -> str:
    return f"{value:.2f}"


def bold(word: str) -> str:
    return f"**{word}**"


def _bolded_text(edited: EditedText) -> str:
    tokens = list(edited.result_tokens)
    for position in edited.replaced_positions():
        tokens[position] = bold(tokens[position])
    return " ".join(tokens)


def _instance_line(instance: Instance) -> str:
    return f"- id {instance.id} ({instance.label()}): \"{instance.text()}\""


def _join_words(words: list[str]) -> str:
    if not words:
        return ""
    if len(words) == 1:
        return words[0]
    return ", ".join(words[:-1]) + " and " + words[-1]


@dataclass(frozen=True)
class Flags:
    fallback_used: bool = False
    clarification: bool = False
    no_result: bool = False


@dataclass(frozen=True)
class TurnResponse:
    text: str
    payload: dict
    parse: str = ""
    flags: Flags = field(default_factory=Flags)


# --- per-result renderers -----------------------------------------------------------
# Each returns (template kind, values, payload, flags). `values` must cover the
# kind's full placeholder vocabulary.

Renderer = Callable[[object], tuple[str, dict, dict, Flags]]


def _render_show(result: ShowPage):
    listing = "\n".join(_instance_line(i) for i in result.items) or "(empty page)"
    values = {"count_shown": len(result.items), "total": result.total, "listing": listing}
    payload = {
        "type": "instances",
        "items": [
            {"id": i.id, "label": i.label(), "text": i.text()} for i in result.items
        ],
        "total": result.total,
        "page": result.page,
    }
    return "show_page", values, payload, Flags(no_result=result.total == 0)


def _render_count(result: CountResult):
    values = {"count": result.count, "total": result.total}
    payload = {"type": "count", "count": result.count, "total": result.total}
    return "count", values, payload, Flags(no_result=result.count == 0)


def _render_distribution(result: DistributionResult):
    rows = "\n".join(
        f"- {label}: {count} ({percent(fraction)})"
        for label, (count, fraction) in result.rows.items()
    )
    values = {"rows": rows, "total": result.total}
    payload = {
        "type": "distribution",
        "rows": {label: {"count": c, "fraction": f} for label, (c, f) in result.rows.items()},
        "total": result.total,
    }
    return "distribution", values, payload, Flags()


def _render_score(result: ScoreResult):
    values = {"metric": result.metric, "value": percent(result.value), "count": result.count}
    payload = {
        "type": "score",
        "metric": result.metric,
        "value": result.value,
        "count": result.count,
    }
    return "score", values, payload, Flags()


def _render_mistakes_count(result: MistakesCountResult):
    values = {"count": result.count, "total": result.total}
    payload = {"type": "mistakes_count", "count": result.count, "total": result.total}
    return "mistakes_count", values, payload, Flags()


def _render_mistakes_sample(result: MistakesSampleResult):
    listing = "\n".join(_instance_line(i) for i in result.items) or "(none)"
    values = {"count": result.count, "total": result.total, "listing": listing}
    payload = {
        "type": "mistakes_sample",
        "items": [
            {"id": i.id, "label": i.label(), "text": i.text()} for i in result.items
        ],
        "count": result.count,
        "total": result.total,
    }
    return "mistakes_sample", values, payload, Flags(no_result=result.count == 0)


def _render_prediction(result: PredictionResult):
    values = {
        "subject": result.subject,
        "label": result.label,
        "probability": probability(result.probabilities[result.label]),
    }
    payload = {
        "type": "prediction",
        "subject": result.subject,
        "label": result.label,
        "probabilities": result.probabilities,
    }
    return "prediction", values, payload, Flags()


def _render_prediction_summary(result: PredictionSummary):
    rows = "\n".join(
        f"- {label}: {percent(fraction)}" for label, fraction in result.fractions.items()
    )
    values = {"rows": rows, "total": result.total}
    payload = {"type": "prediction_summary", "fractions": result.fractions, "total": result.total}
    return "prediction_summary", values, payload, Flags()


def _render_likelihood(result: LikelihoodResult):
    rows = "\n".join(
        f"- {label}: {probability(p)}" for label, p in result.probabilities.items()
    )
    values = {"subject": result.subject, "label": result.label, "rows": rows}
    payload = {
        "type": "likelihood",
        "subject": result.subject,
        "label": result.label,
        "probabilities": result.probabilities,
    }
    return "likelihood", values, payload, Flags()


def _render_metadata(result: MetadataCard):
    values = {"text": result.text}
    payload = {"type": "metadata", "kind": result.kind, "text": result.text}
    return "metadata", values, payload, Flags()


def _render_attribution(result: AttributionResult):
    attribution = result.attribution
    top = attribution.top_tokens()
    top_words = _join_words([bold(token) for token, _ in top])
    details = ""
    if attribution.level == "sentence":
        scores = attribution.sentence_scores()
        details = " Sentence scores: " + "; ".join(
            f"sentence {i + 1}: {s:+.2f}" for i, s in enumerate(scores)
        ) + "."
    commentary = (" " + " ".join(result.commentary)) if result.commentary else ""
    values = {
        "subject": result.subject,
        "label": result.label,
        "top_words": top_words,
        "details": details,
        "commentary": commentary,
    }
    payload = {
        "type": "attribution",
        "subject": result.subject,
        "label": result.label,
        "level": attribution.level,
        "tokens": list(attribution.tokens),
        "scores": list(attribution.token_scores),
        "sentence_ids": list(attribution.sentence_ids),
        "top": [{"token": t, "score": s} for t, s in top],
        "commentary": list(result.commentary),
    }
    return "attribution", values, payload, Flags()


def _render_global_topk(result: GlobalTopKResult):
    top_words = _join_words([bold(token) for token, _ in result.items])
    values = {"label": result.label, "top_words": top_words}
    payload = {
        "type": "global_topk",
        "label": result.label,
        "items": [{"token": t, "score": s} for t, s in result.items],
    }
    return "global_topk", values, payload, Flags()


def _describe_edit(edited: EditedText, position: int, replacement) -> str:
    original = edited.original_tokens[position]
    if replacement is None:
        return f"remove \"{original}\""
    return f"replace \"{original}\" with {bold(replacement)}"


def _render_counterfactual(result: CounterfactualResult):
    lines = []
    for flip in result.flips:
        edits = ", ".join(_describe_edit(flip, p, r) for p, r in flip.edits)
        lines.append(f"- {edits}: \"{_bolded_text(flip)}\" is predicted {flip.predicted_label}")
    values = {
        "subject": result.subject,
        "original_label": result.original_label,
        "listing": "\n".join(lines),
    }
    payload = {
        "type": "counterfactual",
        "subject": result.subject,
        "original_label": result.original_label,
        "flips": [
            {
                "text": flip.result_text,
                "edits": [
                    {"position": p, "replacement": r} for p, r in flip.edits
                ],
                "label": flip.predicted_label,
            }
            for flip in result.flips
        ],
    }
    return "counterfactual", values, payload, Flags()


def _render_no_flip(result: NoFlipFound):
    values = {"max_edits": result.max_edits, "label": result.predicted_label}
    payload = {
        "type": "no_flip",
        "label": result.predicted_label,
        "max_edits": result.max_edits,
    }
    return "no_flip", values, payload, Flags(no_result=True)


def _render_adversarial(result: AdversarialResult):
    edited: EditedText = result.edited
    changed = _join_words(
        [bold(r) for _, r in sorted(edited.edits) if r is not None]
        or ["nothing"]
    )
    values = {
        "subject": result.subject,
        "changed": changed,
        "original_label": result.original_label,
        "new_label": edited.predicted_label,
        "result": _bolded_text(edited),
    }
    payload = {
        "type": "adversarial",
        "subject": result.subject,
        "original_label": result.original_label,
        "new_label": edited.predicted_label,
        "text": edited.result_text,
        "edits": [{"position": p, "replacement": r} for p, r in edited.edits],
    }
    return "adversarial", values, payload, Flags()


def _render_attack_failed(result: AttackFailed):
    values = {"label": result.gold_label}
    payload = {"type": "attack_failed", "label": result.gold_label}
    return "attack_failed", values, payload, Flags(no_result=True)


def _render_already_misclassified(result: AlreadyMisclassified):
    values = {
        "id": result.instance_id,
        "gold": result.gold_label,
        "predicted": result.predicted_label,
    }
    payload = {
        "type": "already_misclassified",
        "id": result.instance_id,
        "gold": result.gold_label,
        "predicted": result.predicted_label,
    }
    return "already_misclassified", values, payload, Flags(no_result=True)


def _render_augment(result: AugmentResult):
    edited: EditedText = result.edited
    values = {
        "subject": result.subject,
        "result": _bolded_text(edited),
        "label": edited.predicted_label,
    }
    payload = {
        "type": "augment",
        "subject": result.subject,
        "text": edited.result_text,
        "edits": [{"position": p, "replacement": r} for p, r in edited.edits],
        "label": edited.predicted_label,
    }
    return "augment", values, payload, Flags()


def _render_similar(result: SimilarResult):
    listing = "\n".join(
        f"- id {inst.id} (cosine {cosine:.2f}, {inst.label()}): \"{inst.text()}\""
        for inst, cosine in result.neighbors
    )
    values = {"subject": result.subject, "listing": listing}
    payload = {
        "type": "similar",
        "subject": result.subject,
        "neighbors": [
            {"id": inst.id, "cosine": cosine, "label": inst.label(), "text": inst.text()}
            for inst, cosine in result.neighbors
        ],
    }
    return "similar", values, payload, Flags()


def _render_keywords(result: KeywordsResult):
    listing = _join_words([f"\"{token}\" ({count})" for token, count in result.items])
    values = {"count": result.count, "listing": listing}
    payload = {
        "type": "keywords",
        "items": [{"token": t, "count": c} for t, c in result.items],
        "count": result.count,
    }
    return "keywords", values, payload, Flags()


def _render_rationale(result: RationaleResult):
    rationale = result.rationale
    values = {"subject": result.subject, "text": rationale.text}
    payload = {
        "type": "rationale",
        "subject": result.subject,
        "label": result.label,
        "text": rationale.text,
        "source": rationale.source,
    }
    return "rationale", values, payload, Flags(fallback_used=rationale.fallback)


def _render_no_result(result: NoResult):
    values = {"message": result.message}
    payload = {"type": "no_result", "message": result.message}
    return "no_result", values, payload, Flags(no_result=True)


RESULT_TYPES: dict[type, Renderer] = {
    ShowPage: _render_show,
    CountResult: _render_count,
    DistributionResult: _render_distribution,
    ScoreResult: _render_score,
    MistakesCountResult: _render_mistakes_count,
    MistakesSampleResult: _render_mistakes_sample,
    PredictionResult: _render_prediction,
    PredictionSummary: _render_prediction_summary,
    LikelihoodResult: _render_likelihood,
    MetadataCard: _render_metadata,
    AttributionResult: _render_attribution,
    GlobalTopKResult: _render_global_topk,
    CounterfactualResult: _render_counterfactual,
    NoFlipFound: _render_no_flip,
    AdversarialResult: _render_adversarial,
    AttackFailed: _render_attack_failed,
    AlreadyMisclassified: _render_already_misclassified,
    AugmentResult: _render_augment,
    SimilarResult: _render_similar,
    KeywordsResult: _render_keywords,
    RationaleResult: _render_rationale,
    NoResult: _render_no_result,
}


def render(result: object, seed: int, parse: str = "") -> TurnResponse:
    """Render a result object; the variant is chosen by a seeded RNG."""
    renderer = RESULT_TYPES.get(type(result))
    if renderer is None:
        if isinstance(result, AboutResult):
            about = render_about(result.kind)
            return TurnResponse(
                text=about.text, payload=about.payload, parse=parse, flags=about.flags
            )
        raise RuntimeError(
            f"no renderer registered for result type {type(result).__name__}"
        )
    kind, values, payload, flags = renderer(result)
    rng = random.Random(seed)
    template = rng.choice(TEMPLATES[kind])
    text = template.format_map(values)
    return TurnResponse(text=text, payload=payload, parse=parse, flags=flags)


def render_about(kind: str) -> TurnResponse:
    """Static capability summary / self-description; deterministic."""
    if kind == "function":
        by_category: dict[str, list[str]] = {}
        for signature in registry():
            by_category.setdefault(signature.category, []).append(signature.name)
        lines = ["Here is what you can ask me to do:"]
        for category in sorted(by_category):
            ops = ", ".join(sorted(by_category[category]))
            lines.append(f"- {category}: {ops}")
        lines.append(
            "Filter to one instance with \"filter id <n>\", search texts with "
            "\"includes '<word>'\", or send a custom input and ask about it."
        )
        text = "\n".join(lines)
        payload = {
            "type": "about",
            "kind": "function",
            "categories": {c: sorted(ops) for c, ops in by_category.items()},
        }
        return TurnResponse(text=text, payload=payload)
    if kind == "self":
        text = (
            "I am an interactive assistant for exploring a text classification "
            "model and its training data. You can ask me what the model predicts, "
            "why it predicts it, how to change a text so the prediction flips, and "
            "how the dataset looks — all in plain language."
        )
        payload = {"type": "about", "kind": "self", "text": text}
        return TurnResponse(text=text, payload=payload)
    raise RuntimeError(f"unknown about kind: {kind}")

"""Natural-language rationales: extractive templates plus an optional HTTP backend."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional

import requests

from .attribution import Attribution

EXTERNAL_TIMEOUT_SECONDS = 10.0

# Each template receives {label} and {words}; chosen deterministically per text
# so rationale responses are stable and cacheable.
_TEMPLATES = (
    "The text was classified as {label} mainly because of the words {words}.",
    "Looking at the text, the words {words} carry the most weight, which leads the model to the label {label}.",
    "The model assigns the label {label} here; the strongest signals for that decision are {words}.",
    "Key evidence for the {label} label comes from the words {words}.",
)


@dataclass(frozen=True)
class Rationale:
    text: str
    source: str  # "builtin" | "external"
    fallback: bool = False


def _join_words(words: list[str]) -> str:
    quoted = [f"'{w}'" for w in words]
    if len(quoted) == 1:
        return quoted[0]
    return ", ".join(quoted[:-1]) + " and " + quoted[-1]


def _template_index(text: str) -> int:
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return digest[0] % len(_TEMPLATES)


def build_prompt(text: str, predicted_label: str) -> str:
    return (
        f"Text: {text}\n"
        f"The model classified this text as: {predicted_label}\n"
        f"Explain in one or two sentences why the text may belong to that class."
    )


def builtin_rationale(text: str, predicted_label: str, attribution: Attribution) -> str:
    ranked = [token for token, _ in attribution.top_tokens()]
    top = []
    for token in ranked:
        if token not in top:
            top.append(token)
        if len(top) == 3:
            break
    template = _TEMPLATES[_template_index(text)]
    return template.format(label=predicted_label, words=_join_words(top))


def rationalize(
    text: str,
    predicted_label: str,
    attribution: Attribution,
    backend_url: Optional[str] = None,
) -> Rationale:
    """Template rationale, or the external completion endpoint when configured."""
    if backend_url:
        try:
            response = requests.post(
                backend_url,
                json={"prompt": build_prompt(text, predicted_label)},
                timeout=EXTERNAL_TIMEOUT_SECONDS,
            )
            response.raise_for_status()
            completion = response.json()["completion"]
            if not isinstance(completion, str) or not completion.strip():
                raise ValueError("empty completion")
            return Rationale(text=completion, source="external")
        except Exception:
            return Rationale(
                text=builtin_rationale(text, predicted_label, attribution),
                source="builtin",
                fallback=True,
            )
    return Rationale(
        text=builtin_rationale(text, predicted_label, attribution),
        source="builtin",
    )

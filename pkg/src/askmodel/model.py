"""Bag-of-words multinomial logistic classifier with exact gradients."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import ModelError

# Multi-field instance texts join their fields with " [SEP] "; the separator
# token must survive tokenization unchanged so downstream code can recognize
# and skip it (it is never a real vocabulary word).
SEPARATOR_TOKEN = "[sep]"

PUNCTUATION_CHARS = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~«»‹›‘’“”…"


@dataclass(frozen=True)
class TokenizedText:
    tokens: tuple[str, ...]
    counts: dict[str, int]


def tokenize(text: str) -> TokenizedText:
    """Lowercase, split on whitespace, strip surrounding punctuation per token."""
    tokens = []
    for raw in text.lower().split():
        if raw == SEPARATOR_TOKEN:
            tokens.append(raw)
            continue
        token = raw.strip(PUNCTUATION_CHARS)
        if token:
            tokens.append(token)
    counts: dict[str, int] = {}
    for token in tokens:
        counts[token] = counts.get(token, 0) + 1
    return TokenizedText(tokens=tuple(tokens), counts=counts)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 200
    l2: float = 1e-3
    seed: int = 13


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


@dataclass
class LinearTextModel:
    vocabulary: dict[str, int]
    weights: np.ndarray  # shape (C, V)
    biases: np.ndarray  # shape (C,)
    class_names: tuple[str, ...]
    train_config: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self) -> None:
        c = len(self.class_names)
        v = len(self.vocabulary)
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(c, v)
        self.biases = np.asarray(self.biases, dtype=np.float64).reshape(c)

    # --- feature plumbing -------------------------------------------------

    def count_vector(self, counts: dict[str, float]) -> np.ndarray:
        """Dense feature vector from a token->count map; OOV entries dropped."""
        x = np.zeros(len(self.vocabulary), dtype=np.float64)
        for token, count in counts.items():
            idx = self.vocabulary.get(token)
            if idx is not None:
                x[idx] = count
        return x

    def logits_from_vector(self, x: np.ndarray) -> np.ndarray:
        return self.weights @ x + self.biases

    def logits(self, counts: dict[str, float]) -> np.ndarray:
        return self.logits_from_vector(self.count_vector(counts))

    # --- prediction API ----------------------------------------------------

    def predict(self, text: str) -> tuple[str, int]:
        """Argmax class; ties go to the lowest class index."""
        index = int(np.argmax(self.logits(tokenize(text).counts)))
        return self.class_names[index], index

    def likelihood(self, text: str) -> dict[str, float]:
        probs = _softmax(self.logits(tokenize(text).counts))
        return {name: float(p) for name, p in zip(self.class_names, probs)}

    def probabilities(self, counts: dict[str, float]) -> np.ndarray:
        return _softmax(self.logits(counts))

    def logit_gradient(self, counts: dict[str, float], class_index: int) -> dict[str, float]:
        """Exact gradient of the class logit w.r.t. present in-vocabulary counts."""
        if not 0 <= class_index < len(self.class_names):
            raise ModelError(f"class index {class_index} out of range")
        gradient = {}
        for token in counts:
            idx = self.vocabulary.get(token)
            if idx is not None:
                gradient[token] = float(self.weights[class_index, idx])
        return gradient

    # --- persistence -------------------------------------------------------

    def content_hash(self) -> str:
        """Stable sha256 over the model contents; used as a cache-key component."""
        payload = self._payload()
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def _payload(self) -> dict:
        return {
            "vocabulary": self.vocabulary,
            "weights": [[float(w) for w in row] for row in self.weights],
            "biases": [float(b) for b in self.biases],
            "class_names": list(self.class_names),
            "train_config": {
                "learning_rate": self.train_config.learning_rate,
                "epochs": self.train_config.epochs,
                "l2": self.train_config.l2,
                "seed": self.train_config.seed,
            },
        }

    def save(self, path: str | Path) -> None:
        payload = self._payload()
        payload["content_hash"] = self.content_hash()
        Path(path).write_text(json.dumps(payload, indent=1), encoding="utf-8")

    @staticmethod
    def load(path: str | Path) -> "LinearTextModel":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        model = LinearTextModel(
            vocabulary=dict(raw["vocabulary"]),
            weights=np.asarray(raw["weights"], dtype=np.float64),
            biases=np.asarray(raw["biases"], dtype=np.float64),
            class_names=tuple(raw["class_names"]),
            train_config=TrainConfig(**raw["train_config"]),
        )
        stored = raw.get("content_hash")
        if stored and stored != model.content_hash():
            raise ModelError(f"model file {path} content hash mismatch")
        return model


def predict_distribution(model: LinearTextModel, sel) -> dict[str, float]:
    """Fraction of the selection predicted as each class."""
    from .errors import ArgumentError

    if len(sel) == 0:
        raise ArgumentError("no instances match")
    counts = {name: 0 for name in model.class_names}
    for inst in sel.instances():
        counts[model.predict(inst.text())[0]] += 1
    total = len(sel)
    return {name: count / total for name, count in counts.items()}


def build_vocabulary(dataset: Dataset) -> dict[str, int]:
    """Sorted token->index map over all instance texts; separator excluded."""
    tokens = set()
    for inst in dataset.instances.values():
        tokens.update(tokenize(inst.text()).tokens)
    tokens.discard(SEPARATOR_TOKEN)
    return {token: i for i, token in enumerate(sorted(tokens))}


def train(dataset: Dataset, config: TrainConfig | None = None) -> LinearTextModel:
    """Full-batch gradient descent on L2-regularized multinomial cross-entropy.

    Deterministic: weights start at zero and all arithmetic is fixed-order,
    so equal configs give bit-identical models. The seed is recorded for
    bookkeeping but the procedure itself has no random choices.
    """
    config = config or TrainConfig()
    class_count = len(dataset.class_names)
    if class_count < 2:
        raise ModelError("training requires at least 2 classes")
    present = {inst.gold_label for inst in dataset.instances.values()}
    if len(present) < 2:
        raise ModelError("training requires at least 2 classes with instances")
    if config.epochs < 0:
        raise ModelError("epochs must be >= 0")

    vocabulary = build_vocabulary(dataset)
    ids = dataset.ids()
    n = len(ids)
    features = np.zeros((n, len(vocabulary)), dtype=np.float64)
    labels = np.zeros(n, dtype=np.int64)
    for row, instance_id in enumerate(ids):
        inst = dataset.instances[instance_id]
        for token, count in tokenize(inst.text()).counts.items():
            idx = vocabulary.get(token)
            if idx is not None:
                features[row, idx] = count
        labels[row] = inst.gold_label

    weights = np.zeros((class_count, len(vocabulary)), dtype=np.float64)
    biases = np.zeros(class_count, dtype=np.float64)
    one_hot = np.zeros((n, class_count), dtype=np.float64)
    one_hot[np.arange(n), labels] = 1.0

    for _ in range(config.epochs):
        probs = _softmax(features @ weights.T + biases)
        error = (probs - one_hot) / n  # (n, C)
        grad_w = error.T @ features + config.l2 * weights
        grad_b = error.sum(axis=0)
        weights -= config.learning_rate * grad_w
        biases -= config.learning_rate * grad_b

    return LinearTextModel(
        vocabulary=vocabulary,
        weights=weights,
        biases=biases,
        class_names=dataset.class_names,
        train_config=config,
    )


def training_loss(model: LinearTextModel, dataset: Dataset) -> float:
    """Mean L2-regularized cross-entropy of the model on the dataset."""
    total = 0.0
    ids = dataset.ids()
    for instance_id in ids:
        inst = dataset.instances[instance_id]
        probs = model.probabilities(tokenize(inst.text()).counts)
        total -= math.log(max(probs[inst.gold_label], 1e-300))
    penalty = 0.5 * model.train_config.l2 * float((model.weights**2).sum())
    return total / len(ids) + penalty

"""Shared fixtures: hand-built datasets, trained models, and the bundled demo assets."""
from __future__ import annotations

import time
from pathlib import Path

import numpy as np
import pytest

# Wall-clock start of the test session, read by the suite-runtime acceptance check.
SESSION_START = time.perf_counter()


def pytest_collection_modifyitems(config, items):
    """Run the acceptance module last so its suite-runtime check covers the rest."""
    items.sort(key=lambda item: "test_acceptance" in item.nodeid)

import askmodel
from askmodel.data import DatasetConfig, load_dataset, make_dataset
from askmodel.intent import PromptBank
from askmodel.model import LinearTextModel, TrainConfig, train

ASSETS_DIR = Path(askmodel.__file__).parent / "assets"


def build_hand_model(
    weights_by_token: dict[str, tuple[float, ...]],
    biases: tuple[float, ...],
    class_names: tuple[str, ...],
) -> LinearTextModel:
    """A model with explicitly chosen per-token class weights."""
    vocabulary = {token: i for i, token in enumerate(sorted(weights_by_token))}
    weights = np.zeros((len(class_names), len(vocabulary)))
    for token, class_weights in weights_by_token.items():
        for class_index, value in enumerate(class_weights):
            weights[class_index, vocabulary[token]] = value
    return LinearTextModel(
        vocabulary=vocabulary,
        weights=weights,
        biases=np.asarray(biases, dtype=float),
        class_names=class_names,
    )

# Six linearly separable texts: insult words mark the offensive class,
# kindness words the other. Used anywhere a trained model is needed.
SEPARABLE_TEXTS = [
    "you are ugly and stupid",
    "she is a nasty liar",
    "what a dumb awful person",
    "you are kind and smart",
    "she is a lovely friend",
    "what a wonderful helpful person",
]
SEPARABLE_LABELS = [0, 0, 0, 1, 1, 1]
CLASS_NAMES = ("offensive", "non-offensive")


@pytest.fixture(scope="session")
def separable_dataset():
    return make_dataset("toy", SEPARABLE_TEXTS, SEPARABLE_LABELS, CLASS_NAMES)


@pytest.fixture(scope="session")
def trained_model(separable_dataset):
    return train(separable_dataset, TrainConfig())


@pytest.fixture(scope="session")
def demo_dataset():
    config = DatasetConfig.from_file(ASSETS_DIR / "demo" / "config.json")
    return load_dataset(ASSETS_DIR / "demo" / "dataset.jsonl", config, name="demo")


@pytest.fixture(scope="session")
def demo_model(demo_dataset):
    return train(demo_dataset, TrainConfig())


@pytest.fixture(scope="session")
def prompt_bank():
    return PromptBank.load(ASSETS_DIR / "prompt_bank.tsv")


@pytest.fixture(scope="session")
def dev_pairs():
    """Held-out (utterance, gold parse) pairs; none appear verbatim in the bank."""
    pairs = []
    for line in (ASSETS_DIR / "dev_utterances.tsv").read_text(encoding="utf-8").splitlines():
        line = line.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        utterance, _, parse = line.partition("\t")
        pairs.append((utterance, parse))
    return pairs

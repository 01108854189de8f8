"""TF-IDF nearest-neighbor retrieval and frequent-keyword extraction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.feature_extraction.text import TfidfVectorizer

from ..data import Dataset, Selection
from ..errors import ArgumentError
from ..model import SEPARATOR_TOKEN, tokenize


def _analyzer(text: str) -> list[str]:
    return [t for t in tokenize(text).tokens if t != SEPARATOR_TOKEN]


@dataclass
class SimilarityIndex:
    """Dataset-fitted TF-IDF vectors with cosine ranking."""

    dataset: Dataset
    vectorizer: TfidfVectorizer
    matrix: np.ndarray  # (n_instances, n_features), L2-normalized rows
    row_of_id: dict[int, int]

    @staticmethod
    def fit(dataset: Dataset) -> "SimilarityIndex":
        ids = dataset.ids()
        texts = [dataset.instances[i].text() for i in ids]
        vectorizer = TfidfVectorizer(analyzer=_analyzer, norm="l2")
        matrix = vectorizer.fit_transform(texts).toarray()
        return SimilarityIndex(
            dataset=dataset,
            vectorizer=vectorizer,
            matrix=matrix,
            row_of_id={instance_id: row for row, instance_id in enumerate(ids)},
        )

    def vector_for_text(self, text: str) -> np.ndarray:
        return self.vectorizer.transform([text]).toarray()[0]

    def similar(
        self, subject: int | str, number: int = 1
    ) -> list[tuple[int, float]]:
        """Top `number` (instance id, cosine) pairs; the subject id is excluded."""
        if number < 1:
            raise ArgumentError("number must be >= 1")
        if isinstance(subject, int):
            if subject not in self.row_of_id:
                raise ArgumentError(f"no instance with id {subject}")
            query = self.matrix[self.row_of_id[subject]]
            excluded = subject
        else:
            query = self.vector_for_text(subject)
            excluded = None
        cosines = self.matrix @ query  # rows are L2-normalized
        ranked = [
            (instance_id, float(cosines[row]))
            for instance_id, row in self.row_of_id.items()
            if instance_id != excluded
        ]
        ranked.sort(key=lambda pair: (-pair[1], pair[0]))
        return ranked[:number]


def keywords(sel: Selection, n: int = 3, stopwords: frozenset[str] = frozenset()) -> list[tuple[str, int]]:
    """Top-n stopword-filtered token frequencies; ties broken lexicographically."""
    if n < 1:
        raise ArgumentError("n must be >= 1")
    counts: dict[str, int] = {}
    for inst in sel.instances():
        for token in tokenize(inst.text()).tokens:
            if token == SEPARATOR_TOKEN or token in stopwords:
                continue
            counts[token] = counts.get(token, 0) + 1
    ranked = sorted(counts.items(), key=lambda pair: (-pair[1], pair[0]))
    return ranked[:n]

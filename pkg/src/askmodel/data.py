"""Datasets: loading, filtering, paging, statistics and metadata."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .errors import ArgumentError, DatasetError

VALID_METRICS = ("accuracy", "precision", "recall", "f1")

FIELD_SEPARATOR = " [SEP] "


@dataclass(frozen=True)
class Instance:
    """A single labelled text record. `fields` keeps the configured field order."""

    id: int
    fields: tuple[tuple[str, str], ...]
    gold_label: int
    label_name: str = ""

    def __post_init__(self) -> None:
        if self.id < 0:
            raise DatasetError(f"instance id must be non-negative, got {self.id}")
        if not self.fields:
            raise DatasetError(f"instance {self.id} has no text fields")

    def label(self) -> str:
        """Human-readable gold label; falls back to the raw class index."""
        return self.label_name or str(self.gold_label)

    def text(self) -> str:
        """Model input text: all fields joined by the separator token."""
        return FIELD_SEPARATOR.join(value for _, value in self.fields)


@dataclass(frozen=True)
class DatasetConfig:
    class_names: tuple[str, ...]
    field_order: tuple[str, ...] = ("text",)
    split_tag: str = "train"
    datasheet_path: Optional[str] = None
    model_card_path: Optional[str] = None
    label_aliases: dict[str, str] = field(default_factory=dict)

    @staticmethod
    def from_file(path: str | Path) -> "DatasetConfig":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return DatasetConfig(
            class_names=tuple(raw["class_names"]),
            field_order=tuple(raw.get("field_order", ["text"])),
            split_tag=raw.get("split_tag", "train"),
            datasheet_path=raw.get("datasheet_path"),
            model_card_path=raw.get("model_card_path"),
            label_aliases={k.lower(): v for k, v in raw.get("label_aliases", {}).items()},
        )


@dataclass(frozen=True)
class Dataset:
    name: str
    instances: dict[int, Instance]
    class_names: tuple[str, ...]
    split_tag: str = "train"
    datasheet: Optional[str] = None
    model_card: Optional[str] = None
    label_aliases: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.class_names:
            raise DatasetError(f"dataset '{self.name}' has no classes")
        if len(set(self.class_names)) != len(self.class_names):
            raise DatasetError(f"dataset '{self.name}' has duplicate class names")
        for inst in self.instances.values():
            if not 0 <= inst.gold_label < len(self.class_names):
                raise DatasetError(
                    f"instance {inst.id} label index {inst.gold_label} out of range"
                )

    def ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.instances))

    def __len__(self) -> int:
        return len(self.instances)

    def get(self, instance_id: int) -> Instance:
        try:
            return self.instances[instance_id]
        except KeyError:
            raise DatasetError(f"no instance with id {instance_id}") from None

    def all_selection(self) -> "Selection":
        return Selection(self, self.ids())


@dataclass(frozen=True)
class Selection:
    """An ordered, duplicate-free view over a dataset's instance ids."""

    dataset: Dataset
    ids: tuple[int, ...]

    def __post_init__(self) -> None:
        seen = set()
        for i in self.ids:
            if i in seen:
                raise DatasetError(f"duplicate id {i} in selection")
            if i not in self.dataset.instances:
                raise DatasetError(f"selection id {i} not in dataset '{self.dataset.name}'")
            seen.add(i)

    def __len__(self) -> int:
        return len(self.ids)

    def instances(self) -> list[Instance]:
        return [self.dataset.instances[i] for i in self.ids]

    def union(self, other: "Selection") -> "Selection":
        merged = sorted(set(self.ids) | set(other.ids))
        return Selection(self.dataset, tuple(merged))


def load_dataset(path: str | Path, config: DatasetConfig, name: Optional[str] = None) -> Dataset:
    """Load a JSONL dataset file. Each line: {"id": n, "fields": {...}, "label": "..."}."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    label_index = {label: i for i, label in enumerate(config.class_names)}
    instances: dict[int, Instance] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"malformed record at line {lineno}: {exc.msg}") from None
            try:
                rid = int(record["id"])
                fields_obj = record["fields"]
                label = record["label"]
            except (KeyError, TypeError, ValueError) as exc:
                raise DatasetError(f"malformed record at line {lineno}: {exc}") from None
            if label not in label_index:
                raise DatasetError(f"unknown label '{label}' at line {lineno}")
            if rid in instances:
                raise DatasetError(f"duplicate id {rid} at line {lineno}")
            ordered = []
            for fname in config.field_order:
                if fname not in fields_obj:
                    raise DatasetError(f"missing field '{fname}' at line {lineno}")
                ordered.append((fname, str(fields_obj[fname])))
            instances[rid] = Instance(
                id=rid,
                fields=tuple(ordered),
                gold_label=label_index[label],
                label_name=str(label),
            )
    if not instances:
        raise DatasetError("dataset has zero instances")

    def read_optional(p: Optional[str]) -> Optional[str]:
        if p is None:
            return None
        candidate = Path(p)
        if not candidate.is_absolute():
            candidate = path.parent / candidate
        if not candidate.exists():
            return None
        return candidate.read_text(encoding="utf-8")

    return Dataset(
        name=name or path.stem,
        instances=instances,
        class_names=config.class_names,
        split_tag=config.split_tag,
        datasheet=read_optional(config.datasheet_path),
        model_card=read_optional(config.model_card_path),
        label_aliases=dict(config.label_aliases),
    )


def filter_id(sel: Selection, instance_id: int) -> Selection:
    """Narrow to a single id; empty selection when the id is not present."""
    if instance_id in sel.ids:
        return Selection(sel.dataset, (instance_id,))
    return Selection(sel.dataset, ())


def filter_includes(sel: Selection, token: str) -> Selection:
    """Keep instances whose text contains `token` as a whole word (case-insensitive)."""
    from .model import tokenize

    if not token.strip():
        raise ArgumentError("includes requires a non-empty token")
    needle = token.strip().lower()
    kept = []
    for i in sel.ids:
        tokens = tokenize(sel.dataset.instances[i].text()).tokens
        if needle in tokens:
            kept.append(i)
    return Selection(sel.dataset, tuple(kept))


@dataclass(frozen=True)
class ShowPage:
    items: tuple[Instance, ...]
    total: int
    page: int
    page_size: int


def show(sel: Selection, page: int = 0, page_size: int = 10) -> ShowPage:
    """Page through a selection; out-of-range pages yield an empty page with the total."""
    if page < 0:
        raise ArgumentError("page must be >= 0")
    start = page * page_size
    items = tuple(sel.instances()[start : start + page_size])
    return ShowPage(items=items, total=len(sel), page=page, page_size=page_size)


def countdata(sel: Selection) -> int:
    return len(sel)


def label_distribution(sel: Selection) -> dict[str, tuple[int, float]]:
    """Per-class (count, fraction) over the selection's gold labels."""
    if len(sel) == 0:
        raise ArgumentError("no instances match")
    counts = {name: 0 for name in sel.dataset.class_names}
    for inst in sel.instances():
        counts[sel.dataset.class_names[inst.gold_label]] += 1
    total = len(sel)
    return {name: (count, count / total) for name, count in counts.items()}


def _confusion(sel: Selection, model) -> list[list[int]]:
    n = len(sel.dataset.class_names)
    matrix = [[0] * n for _ in range(n)]
    for inst in sel.instances():
        _, predicted = model.predict(inst.text())
        matrix[inst.gold_label][predicted] += 1
    return matrix


def score(sel: Selection, model, metric: str) -> float:
    """Macro-averaged accuracy/precision/recall/f1 of `model` over the selection."""
    if metric not in VALID_METRICS:
        raise ArgumentError(
            f"unknown metric '{metric}'; valid metrics: {', '.join(VALID_METRICS)}"
        )
    if len(sel) == 0:
        raise ArgumentError("no instances match")
    matrix = _confusion(sel, model)
    n = len(matrix)
    total = len(sel)
    if metric == "accuracy":
        # Written as 1 - wrong/total so it is bit-identical to the
        # complement of mistakes_count/total for every count.
        wrong = total - sum(matrix[c][c] for c in range(n))
        return 1.0 - wrong / total
    precisions, recalls, f1s = [], [], []
    for c in range(n):
        tp = matrix[c][c]
        fp = sum(matrix[g][c] for g in range(n)) - tp
        fn = sum(matrix[c][p] for p in range(n)) - tp
        # Empty denominators score 0 for that class (documented zero-division rule).
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        precisions.append(prec)
        recalls.append(rec)
        f1s.append(f1)
    if metric == "precision":
        return sum(precisions) / n
    if metric == "recall":
        return sum(recalls) / n
    return sum(f1s) / n


def mistakes_count(sel: Selection, model) -> int:
    return sum(
        1 for inst in sel.instances() if model.predict(inst.text())[1] != inst.gold_label
    )


def mistakes_sample(sel: Selection, model, n: int = 3) -> list[Instance]:
    """First `n` misclassified instances in ascending id order."""
    wrong = []
    for inst in sel.instances():
        if model.predict(inst.text())[1] != inst.gold_label:
            wrong.append(inst)
        if len(wrong) == n:
            break
    return wrong


def describe_metadata(dataset: Dataset, kind: str, model=None) -> str:
    """Datasheet or model card text; falls back to an auto-generated summary."""
    if kind not in ("data", "model"):
        raise ArgumentError(f"unknown metadata kind '{kind}'")
    text = dataset.datasheet if kind == "data" else dataset.model_card
    if text:
        return text.strip()
    vocab = f", vocab {len(model.vocabulary)}" if model is not None else ""
    return (
        f"{len(dataset)} instances, {len(dataset.class_names)} classes{vocab}. "
        f"Classes: {', '.join(dataset.class_names)}. Split: {dataset.split_tag}."
    )


def make_dataset(
    name: str,
    texts: Iterable[str | tuple[tuple[str, str], ...]],
    labels: Iterable[int],
    class_names: Iterable[str],
    **kwargs,
) -> Dataset:
    """Build a dataset in memory (fixtures, tests, custom corpora)."""
    names = tuple(class_names)
    instances = {}
    for i, (text, label) in enumerate(zip(texts, labels)):
        fields = (("text", text),) if isinstance(text, str) else tuple(text)
        instances[i] = Instance(id=i, fields=fields, gold_label=label, label_name=names[label])
    return Dataset(name=name, instances=instances, class_names=names, **kwargs)

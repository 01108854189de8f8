"""Offline evaluation utilities.

Two independent measurements live here:

* **Parsing accuracy** — run a parser over a gold set of
  ``utterance<TAB>parse`` pairs and score exact canonical matches, with a
  per-operation breakdown and a confusion table for the misses.
* **Study metrics** — aggregate recorded user sessions (JSONL) into
  helpfulness and simulation-accuracy figures plus per-operation averages.

Both produce plain dataclasses that render to Markdown (human review) and
JSON (machine diffing) with stable formatting, so reports can be
golden-tested byte for byte.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

from .data import Dataset
from .errors import ConfigError, ParseError
from .grammar import canonicalize, parse_string
from .intent import (
    AMBIGUITY_EPSILON,
    Parsed,
    PromptBank,
    compose_parse,
    parse_utterance,
    tag_slots,
)

SPLITS = ("dev", "test")

#: Bucket label used in confusion tables when the parser returned nothing.
NO_PARSE = "(no parse)"

#: Ratings attached to a session record must come from this set.
ALLOWED_RATINGS = (-1, 0, 1)


# --- gold pairs ----------------------------------------------------------------


@dataclass(frozen=True)
class GoldPair:
    """One labelled example: an utterance and its canonical parse."""

    utterance: str
    gold_parse: str
    split: str = "dev"

    def __post_init__(self) -> None:
        if not self.utterance.strip():
            raise ConfigError("gold pair has an empty utterance")
        if self.split not in SPLITS:
            raise ConfigError(
                f"unknown split '{self.split}' (expected one of: {', '.join(SPLITS)})"
            )
        try:
            canonical = canonicalize(parse_string(self.gold_parse))
        except ParseError as exc:
            raise ConfigError(f"invalid gold parse '{self.gold_parse}': {exc}") from exc
        if canonical != self.gold_parse:
            raise ConfigError(
                f"gold parse is not canonical: '{self.gold_parse}' "
                f"(canonical form: '{canonical}')"
            )


def load_gold(path: Path | str, split: str = "dev") -> list[GoldPair]:
    """Read ``utterance<TAB>parse`` lines; blanks and ``#`` comments are skipped.

    Every parse is validated and stored in canonical form.  Malformed lines
    raise :class:`ConfigError` naming the file and line number.
    """
    if split not in SPLITS:
        raise ConfigError(
            f"unknown split '{split}' (expected one of: {', '.join(SPLITS)})"
        )
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"missing gold file: {path}")
    pairs: list[GoldPair] = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        utterance, tab, parse = raw.partition("\t")
        if not tab or not utterance.strip() or not parse.strip():
            raise ConfigError(
                f"{path.name} line {lineno}: expected 'utterance<TAB>parse'"
            )
        try:
            canonical = canonicalize(parse_string(parse.strip()))
        except ParseError as exc:
            raise ConfigError(
                f"{path.name} line {lineno}: invalid gold parse: {exc}"
            ) from exc
        pairs.append(
            GoldPair(utterance=utterance.strip(), gold_parse=canonical, split=split)
        )
    if not pairs:
        raise ConfigError(f"{path.name} contains no gold pairs")
    return pairs


def operation_of(parse: str) -> str:
    """Name of the action clause of a canonical parse (last clause if none)."""
    tree = parse_string(parse)
    action = tree.action()
    return action.op_name if action else tree.clauses[-1].op_name


def bank_parser(
    bank: PromptBank,
    dataset: Dataset,
    previous_id: Optional[int] = None,
    epsilon: float = AMBIGUITY_EPSILON,
) -> Callable[[str], Optional[str]]:
    """Wrap the retrieval pipeline as ``utterance -> canonical parse or None``.

    Anything short of a committed parse (ambiguity, a missing slot, smalltalk)
    counts as no parse, which is how an exact-match evaluation should see it.
    """

    def parse(utterance: str) -> Optional[str]:
        result = parse_utterance(
            utterance, bank, dataset, previous_id=previous_id, epsilon=epsilon
        )
        if isinstance(result, Parsed):
            return result.parse
        return None

    return parse


def self_retrieval_pairs(
    bank: PromptBank,
    dataset: Dataset,
    previous_id: Optional[int] = 1,
    split: str = "dev",
) -> list[GoldPair]:
    """Gold pairs drawn from the bank itself.

    Each utterance is labelled with the parse its own entry composes, so
    evaluating the retrieval parser against these pairs measures whether
    every bank utterance retrieves (an entry equivalent to) itself.
    """
    pairs = []
    for entry in bank.entries:
        slots, _ = tag_slots(entry.utterance, dataset)
        composed = compose_parse(entry, slots, previous_id)
        if not isinstance(composed, Parsed):
            raise ConfigError(
                f"bank utterance does not compose a full parse: '{entry.utterance}'"
            )
        pairs.append(GoldPair(entry.utterance, composed.parse, split))
    return pairs


# --- parsing evaluation ----------------------------------------------------------


@dataclass(frozen=True)
class ParsingReport:
    """Exact-match scores for one gold split."""

    split: str
    total: int
    correct: int
    accuracy: float  # percent, 0..100
    per_operation: dict[str, dict[str, float]]  # op -> {total, correct, accuracy}
    confusion: dict[str, dict[str, int]]  # gold op -> predicted op/bucket -> count
    mismatches: tuple[tuple[str, str, str], ...]  # (utterance, gold, predicted)


def eval_parsing(
    parser: Callable[[str], Optional[str]], pairs: Sequence[GoldPair]
) -> ParsingReport:
    """Score ``parser`` against gold pairs by exact canonical match."""
    if not pairs:
        raise ConfigError("cannot evaluate an empty gold set")
    totals: dict[str, int] = defaultdict(int)
    corrects: dict[str, int] = defaultdict(int)
    confusion: dict[str, dict[str, int]] = defaultdict(lambda: defaultdict(int))
    mismatches: list[tuple[str, str, str]] = []
    correct = 0
    for pair in pairs:
        predicted = parser(pair.utterance)
        gold_op = operation_of(pair.gold_parse)
        predicted_op = operation_of(predicted) if predicted else NO_PARSE
        totals[gold_op] += 1
        confusion[gold_op][predicted_op] += 1
        if predicted == pair.gold_parse:
            correct += 1
            corrects[gold_op] += 1
        else:
            mismatches.append((pair.utterance, pair.gold_parse, predicted or ""))
    per_operation = {
        op: {
            "total": totals[op],
            "correct": corrects[op],
            "accuracy": 100.0 * corrects[op] / totals[op],
        }
        for op in sorted(totals)
    }
    return ParsingReport(
        split=pairs[0].split,
        total=len(pairs),
        correct=correct,
        accuracy=100.0 * correct / len(pairs),
        per_operation=per_operation,
        confusion={op: dict(row) for op, row in sorted(confusion.items())},
        mismatches=tuple(mismatches),
    )


# --- study records ----------------------------------------------------------------


@dataclass(frozen=True)
class SimulationRecord:
    """One participant session: what the model said, what the user guessed.

    ``ratings`` maps operation names to -1 (not helpful), 1 (helpful), or
    0 (shown but unused).  ``turns`` counts dialogue turns in the session.
    """

    instance_id: int
    model_prediction: str
    user_guess: str
    ratings: Mapping[str, int] = field(default_factory=dict)
    turns: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "ratings", dict(self.ratings))
        if self.turns < 1:
            raise ConfigError(f"turn count must be at least 1, got {self.turns}")
        for op, rating in self.ratings.items():
            if rating not in ALLOWED_RATINGS:
                raise ConfigError(
                    f"rating for '{op}' must be one of {ALLOWED_RATINGS}, got {rating}"
                )

    def guessed_correctly(self) -> bool:
        return self.user_guess == self.model_prediction


_RECORD_FIELDS = ("instance_id", "model_prediction", "user_guess", "ratings", "turns")


def load_records(directory: Path | str) -> list[SimulationRecord]:
    """Read every ``*.jsonl`` session log under ``directory``.

    One JSON object per line; blank lines are skipped.  Errors name the file
    and line that failed.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"missing study log directory: {directory}")
    files = sorted(directory.glob("*.jsonl"))
    if not files:
        raise ConfigError(f"no .jsonl study logs in {directory}")
    records: list[SimulationRecord] = []
    for file in files:
        for lineno, raw in enumerate(file.read_text(encoding="utf-8").splitlines(), 1):
            if not raw.strip():
                continue
            try:
                entry = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ConfigError(
                    f"{file.name} line {lineno}: not valid JSON: {exc}"
                ) from exc
            if not isinstance(entry, dict):
                raise ConfigError(
                    f"{file.name} line {lineno}: expected a JSON object"
                )
            missing = [key for key in _RECORD_FIELDS if key not in entry]
            if missing:
                raise ConfigError(
                    f"{file.name} line {lineno}: missing field '{missing[0]}'"
                )
            try:
                records.append(
                    SimulationRecord(
                        instance_id=int(entry["instance_id"]),
                        model_prediction=str(entry["model_prediction"]),
                        user_guess=str(entry["user_guess"]),
                        ratings={
                            str(op): int(r) for op, r in entry["ratings"].items()
                        },
                        turns=int(entry["turns"]),
                    )
                )
            except (ConfigError, TypeError, ValueError, AttributeError) as exc:
                raise ConfigError(f"{file.name} line {lineno}: {exc}") from exc
    return records


# --- study metrics ----------------------------------------------------------------


def helpfulness_ratio(records: Sequence[SimulationRecord]) -> Optional[float]:
    """Fraction of non-zero ratings that are +1; None when nothing was rated."""
    nonzero = [
        rating
        for record in records
        for rating in record.ratings.values()
        if rating != 0
    ]
    if not nonzero:
        return None
    return sum(1 for rating in nonzero if rating == 1) / len(nonzero)


def sim_accuracy(
    records: Sequence[SimulationRecord], filter_helpful: bool = False
) -> Optional[float]:
    """Percent of user guesses that matched the model's prediction.

    Unfiltered, each record counts once.  With ``filter_helpful`` the unit
    becomes a (record, operation) pair with rating +1, so a session whose
    guess matched counts once per explanation the participant found helpful.
    Returns None when the denominator is empty.
    """
    if filter_helpful:
        pairs = [
            record
            for record in records
            for rating in record.ratings.values()
            if rating == 1
        ]
        if not pairs:
            return None
        return 100.0 * sum(1 for record in pairs if record.guessed_correctly()) / len(pairs)
    if not records:
        return None
    return 100.0 * sum(1 for r in records if r.guessed_correctly()) / len(records)


def turns_avg(records: Sequence[SimulationRecord]) -> dict[str, float]:
    """Mean session length per operation, over sessions that rated it non-zero."""
    by_op: dict[str, list[int]] = defaultdict(list)
    for record in records:
        for op, rating in record.ratings.items():
            if rating != 0:
                by_op[op].append(record.turns)
    return {op: sum(turns) / len(turns) for op, turns in sorted(by_op.items())}


@dataclass(frozen=True)
class StudyReport:
    """Aggregate metrics over a set of session records."""

    record_count: int
    rating_count: int  # non-zero ratings across all records
    helpfulness: Optional[float]  # fraction, 0..1
    sim_all: Optional[float]  # percent
    sim_helpful: Optional[float]  # percent
    per_operation: dict[str, dict[str, Optional[float]]]


def build_study_report(records: Sequence[SimulationRecord]) -> StudyReport:
    """Compute global and per-operation study metrics."""
    turn_means = turns_avg(records)
    per_operation: dict[str, dict[str, Optional[float]]] = {}
    ops = sorted({op for record in records for op in record.ratings})
    for op in ops:
        rated = [r for r in records if r.ratings.get(op, 0) != 0]
        helpful = [r for r in rated if r.ratings[op] == 1]
        if not rated:
            continue  # every rating for this operation was 0: unused
        per_operation[op] = {
            "rated": len(rated),
            "helpful": len(helpful),
            "helpfulness": len(helpful) / len(rated),
            "sim_all": 100.0 * sum(1 for r in rated if r.guessed_correctly()) / len(rated),
            "sim_helpful": (
                100.0 * sum(1 for r in helpful if r.guessed_correctly()) / len(helpful)
                if helpful
                else None
            ),
            "turns_avg": turn_means[op],
        }
    rating_count = sum(
        1 for record in records for rating in record.ratings.values() if rating != 0
    )
    return StudyReport(
        record_count=len(records),
        rating_count=rating_count,
        helpfulness=helpfulness_ratio(records),
        sim_all=sim_accuracy(records),
        sim_helpful=sim_accuracy(records, filter_helpful=True),
        per_operation=per_operation,
    )


# --- report rendering -------------------------------------------------------------


def _pct(value: Optional[float]) -> str:
    return "undefined" if value is None else f"{value:.2f}%"


def _ratio_pct(value: Optional[float]) -> str:
    return "undefined" if value is None else f"{100.0 * value:.2f}%"


def _round(value: Optional[float], digits: int = 2) -> Optional[float]:
    return None if value is None else round(value, digits)


def parsing_report_markdown(report: ParsingReport) -> str:
    lines = [
        f"# Parsing accuracy ({report.split} split)",
        "",
        f"- pairs: {report.total}",
        f"- exact matches: {report.correct}",
        f"- accuracy: {report.accuracy:.2f}%",
        "",
        "| operation | pairs | correct | accuracy |",
        "| --- | ---: | ---: | ---: |",
    ]
    for op, row in report.per_operation.items():
        lines.append(
            f"| {op} | {row['total']} | {row['correct']} | {row['accuracy']:.2f}% |"
        )
    if report.mismatches:
        lines += ["", "## Mismatches", ""]
        for utterance, gold, predicted in report.mismatches:
            got = f"`{predicted}`" if predicted else "no parse"
            lines.append(f'- "{utterance}": expected `{gold}`, got {got}')
    lines.append("")
    return "\n".join(lines)


def parsing_report_json(report: ParsingReport) -> dict:
    return {
        "split": report.split,
        "total": report.total,
        "correct": report.correct,
        "accuracy": round(report.accuracy, 2),
        "per_operation": {
            op: {
                "total": row["total"],
                "correct": row["correct"],
                "accuracy": round(row["accuracy"], 2),
            }
            for op, row in report.per_operation.items()
        },
        "confusion": report.confusion,
        "mismatches": [
            {"utterance": utterance, "gold": gold, "predicted": predicted}
            for utterance, gold, predicted in report.mismatches
        ],
    }


def study_report_markdown(report: StudyReport) -> str:
    lines = [
        "# Study metrics",
        "",
        f"- records: {report.record_count}",
        f"- non-zero ratings: {report.rating_count}",
        f"- helpfulness ratio: {_ratio_pct(report.helpfulness)}",
        f"- simulation accuracy (all records): {_pct(report.sim_all)}",
        f"- simulation accuracy (helpful only): {_pct(report.sim_helpful)}",
    ]
    if report.per_operation:
        lines += [
            "",
            "| operation | rated | helpful | helpfulness | sim (rated) | sim (helpful) | avg turns |",
            "| --- | ---: | ---: | ---: | ---: | ---: | ---: |",
        ]
        for op, row in report.per_operation.items():
            lines.append(
                f"| {op} | {row['rated']} | {row['helpful']} "
                f"| {_ratio_pct(row['helpfulness'])} "
                f"| {_pct(row['sim_all'])} "
                f"| {_pct(row['sim_helpful'])} "
                f"| {row['turns_avg']:.2f} |"
            )
    lines.append("")
    return "\n".join(lines)


def study_report_json(report: StudyReport) -> dict:
    return {
        "records": report.record_count,
        "nonzero_ratings": report.rating_count,
        "helpfulness_ratio": _round(report.helpfulness, 4),
        "sim_accuracy_all": _round(report.sim_all),
        "sim_accuracy_helpful": _round(report.sim_helpful),
        "per_operation": {
            op: {
                "rated": row["rated"],
                "helpful": row["helpful"],
                "helpfulness_ratio": _round(row["helpfulness"], 4),
                "sim_accuracy_all": _round(row["sim_all"]),
                "sim_accuracy_helpful": _round(row["sim_helpful"]),
                "turns_avg": _round(row["turns_avg"]),
            }
            for op, row in report.per_operation.items()
        },
    }


def write_report(path: Path | str, markdown: str, payload: dict) -> tuple[Path, Path]:
    """Write ``<path>.md`` and ``<path>.json`` next to each other."""
    base = Path(path)
    base.parent.mkdir(parents=True, exist_ok=True)
    md_path = base.with_suffix(".md")
    json_path = base.with_suffix(".json")
    md_path.write_text(markdown, encoding="utf-8")
    json_path.write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return md_path, json_path

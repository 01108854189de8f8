"""HTTP service binding the dialogue pipeline: conversation endpoints, dataset
viewer and search, custom inputs, per-turn feedback, and a disk-backed
explanation cache.

Configuration is a single JSON file (see `AppConfig.from_file`); relative paths
resolve against the config file's directory. The listen address can be
overridden with the ASKMODEL_LISTEN environment variable. Turn logs are
append-only JSONL files, one per conversation.
"""
from __future__ import annotations

import hashlib
import json
import os
import re
import threading
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from . import __version__
from .data import Dataset, DatasetConfig, Instance, Selection, load_dataset
from .dialogue import (
    AskClarification,
    DialogueState,
    Execute,
    SmalltalkReply,
    set_custom_input,
    step,
)
from .engine import (
    AttributionResult,
    EngineContext,
    RationaleResult,
    SimilarResult,
    execute,
    resolve_selection,
)
from .errors import ArgumentError, AskModelError, ConfigError
from .explain import (
    Attribution,
    Rationale,
    SimilarityIndex,
    default_antonyms,
    default_synonyms,
    load_lexicon,
    load_stopwords,
)
from .grammar import parse_string
from .intent import AMBIGUITY_EPSILON, ExternalParser, PromptBank
from .model import LinearTextModel, TrainConfig, train
from .respond import Flags, TurnResponse, render

ASSETS_DIR = Path(__file__).parent / "assets"
LISTEN_ENV_VAR = "ASKMODEL_LISTEN"
DEFAULT_LISTEN = "127.0.0.1:8000"
MAX_UTTERANCE_BYTES = 2048
PAGE_SIZE = 10

# Operations the cache can hold, with the canonical action clause warm_cache
# runs for each instance. These must match what composed parses produce by
# default so warmed entries are hit by live conversations.
WARMABLE_OPERATIONS: dict[str, str] = {
    "nlpattribute": "nlpattribute topk 3",
    "rationalize": "rationalize",
    "similar": "similar 1",
}


# --- configuration ------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetSpec:
    """One dataset to serve: data file, its config, and an optional saved model.

    When `model_path` is None the model is trained at startup (deterministic
    full-batch training, so restarts yield the same weights).
    """

    name: str
    data_path: Path
    config_path: Path
    model_path: Optional[Path] = None


@dataclass(frozen=True)
class AppConfig:
    datasets: tuple[DatasetSpec, ...]
    prompt_bank: Path
    synonyms_path: Optional[Path] = None
    antonyms_path: Optional[Path] = None
    stopwords_path: Optional[Path] = None
    epsilon: float = AMBIGUITY_EPSILON
    seed: int = 0
    listen: str = DEFAULT_LISTEN
    cache_dir: Optional[Path] = None
    log_dir: Optional[Path] = None
    external_parser_url: Optional[str] = None
    rationale_backend_url: Optional[str] = None

    def validate(self) -> None:
        """Fail fast on anything that would leave the service partially booted."""
        if not self.datasets:
            raise ConfigError("config must declare at least one dataset")
        names = [spec.name for spec in self.datasets]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate dataset names in config: {names}")
        required: list[Path] = [self.prompt_bank]
        for spec in self.datasets:
            required.extend([spec.data_path, spec.config_path])
            if spec.model_path is not None:
                required.append(spec.model_path)
        for optional in (self.synonyms_path, self.antonyms_path, self.stopwords_path):
            if optional is not None:
                required.append(optional)
        for path in required:
            if not Path(path).is_file():
                raise ConfigError(f"referenced file does not exist: {path}")
        if self.epsilon < 0:
            raise ConfigError(f"epsilon must be non-negative, got {self.epsilon}")
        if ":" not in self.listen:
            raise ConfigError(f"listen address must be host:port, got '{self.listen}'")

    @staticmethod
    def from_file(path: str | Path) -> "AppConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc.msg}") from None
        base = path.parent

        def resolve(value: Optional[str]) -> Optional[Path]:
            if value is None:
                return None
            candidate = Path(value)
            return candidate if candidate.is_absolute() else base / candidate

        specs = []
        for entry in raw.get("datasets", []):
            try:
                specs.append(
                    DatasetSpec(
                        name=entry["name"],
                        data_path=resolve(entry["data"]),
                        config_path=resolve(entry["config"]),
                        model_path=resolve(entry.get("model")),
                    )
                )
            except KeyError as exc:
                raise ConfigError(f"dataset entry missing key {exc}") from None
        if "prompt_bank" not in raw:
            raise ConfigError("config must set 'prompt_bank'")
        config = AppConfig(
            datasets=tuple(specs),
            prompt_bank=resolve(raw["prompt_bank"]),
            synonyms_path=resolve(raw.get("synonyms")),
            antonyms_path=resolve(raw.get("antonyms")),
            stopwords_path=resolve(raw.get("stopwords")),
            epsilon=float(raw.get("epsilon", AMBIGUITY_EPSILON)),
            seed=int(raw.get("seed", 0)),
            listen=resolve_listen(raw.get("listen")),
            cache_dir=resolve(raw.get("cache_dir")),
            log_dir=resolve(raw.get("log_dir")),
            external_parser_url=raw.get("external_parser_url"),
            rationale_backend_url=raw.get("rationale_backend_url"),
        )
        config.validate()
        return config


def resolve_listen(configured: Optional[str]) -> str:
    """Listen address: environment override beats config beats default."""
    return os.environ.get(LISTEN_ENV_VAR) or configured or DEFAULT_LISTEN


def default_config(
    cache_dir: Optional[Path] = None, log_dir: Optional[Path] = None
) -> AppConfig:
    """Serve the bundled demo dataset with a freshly trained model."""
    return AppConfig(
        datasets=(
            DatasetSpec(
                name="demo",
                data_path=ASSETS_DIR / "demo" / "dataset.jsonl",
                config_path=ASSETS_DIR / "demo" / "config.json",
            ),
        ),
        prompt_bank=ASSETS_DIR / "prompt_bank.tsv",
        listen=resolve_listen(None),
        cache_dir=cache_dir,
        log_dir=log_dir,
    )


# --- explanation cache -----------------------------------------------------------------


def model_content_hash(model: LinearTextModel) -> str:
    """Content hash over everything that determines the model's behavior."""
    digest = hashlib.sha256()
    digest.update(json.dumps(sorted(model.vocabulary.items())).encode("utf-8"))
    digest.update(np.ascontiguousarray(model.weights).tobytes())
    digest.update(np.ascontiguousarray(model.biases).tobytes())
    digest.update(json.dumps(list(model.class_names)).encode("utf-8"))
    return digest.hexdigest()


def _encode_instance(instance: Instance) -> dict:
    return {
        "id": instance.id,
        "fields": [[name, text] for name, text in instance.fields],
        "gold_label": instance.gold_label,
        "label_name": instance.label_name,
    }


def _decode_instance(raw: dict) -> Instance:
    return Instance(
        id=int(raw["id"]),
        fields=tuple((name, text) for name, text in raw["fields"]),
        gold_label=int(raw["gold_label"]),
        label_name=raw.get("label_name", ""),
    )


def encode_result(result: object) -> Optional[dict]:
    """JSON form of a cacheable result; None for types the cache cannot hold."""
    if isinstance(result, AttributionResult):
        attribution = result.attribution
        return {
            "kind": "attribution",
            "subject": result.subject,
            "label": result.label,
            "commentary": list(result.commentary),
            "attribution": {
                "instance_ref": attribution.instance_ref,
                "target_class": attribution.target_class,
                "target_label": attribution.target_label,
                "tokens": list(attribution.tokens),
                "token_scores": list(attribution.token_scores),
                "sentence_ids": list(attribution.sentence_ids),
                "level": attribution.level,
                "mode": attribution.mode,
                "topk": attribution.topk,
            },
        }
    if isinstance(result, RationaleResult):
        rationale = result.rationale
        return {
            "kind": "rationale",
            "subject": result.subject,
            "label": result.label,
            "rationale": {
                "text": rationale.text,
                "source": rationale.source,
                "fallback": rationale.fallback,
            },
        }
    if isinstance(result, SimilarResult):
        return {
            "kind": "similar",
            "subject": result.subject,
            "neighbors": [
                [_encode_instance(instance), cosine]
                for instance, cosine in result.neighbors
            ],
        }
    return None


def decode_result(raw: dict) -> object:
    kind = raw["kind"]
    if kind == "attribution":
        inner = raw["attribution"]
        return AttributionResult(
            subject=raw["subject"],
            label=raw["label"],
            attribution=Attribution(
                instance_ref=inner["instance_ref"],
                target_class=int(inner["target_class"]),
                target_label=inner["target_label"],
                tokens=tuple(inner["tokens"]),
                token_scores=tuple(inner["token_scores"]),
                sentence_ids=tuple(inner["sentence_ids"]),
                level=inner["level"],
                mode=inner["mode"],
                topk=int(inner["topk"]),
            ),
            commentary=tuple(raw["commentary"]),
        )
    if kind == "rationale":
        inner = raw["rationale"]
        return RationaleResult(
            subject=raw["subject"],
            label=raw["label"],
            rationale=Rationale(
                text=inner["text"], source=inner["source"], fallback=inner["fallback"]
            ),
        )
    if kind == "similar":
        return SimilarResult(
            subject=raw["subject"],
            neighbors=tuple(
                (_decode_instance(instance), cosine)
                for instance, cosine in raw["neighbors"]
            ),
        )
    raise ValueError(f"unknown cached result kind: {kind}")


class ExplanationCache:
    """Disk cache of explanation results, one JSON file per key.

    The key covers the model content hash, dataset name, operation, instance id
    and rendered action parameters, so retraining the model or changing the
    request shape can never serve a stale entry. Writes go to a temp file and
    are renamed into place, keeping readers safe under concurrency.
    """

    def __init__(self, directory: str | Path, model_hash: str, dataset_name: str):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.model_hash = model_hash
        self.dataset_name = dataset_name
        self.hits = 0
        self.misses = 0
        self.writes = 0

    def _path(self, op: str, instance_id: int, params: str) -> Path:
        blob = json.dumps(
            {
                "model": self.model_hash,
                "dataset": self.dataset_name,
                "op": op,
                "instance": instance_id,
                "params": params,
            },
            sort_keys=True,
        )
        return self.directory / f"{hashlib.sha256(blob.encode('utf-8')).hexdigest()}.json"

    def get(self, op: str, instance_id: int, params: str) -> Optional[object]:
        path = self._path(op, instance_id, params)
        if not path.is_file():
            self.misses += 1
            return None
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
            result = decode_result(raw["result"])
        except (json.JSONDecodeError, KeyError, ValueError, TypeError):
            self.misses += 1
            return None
        self.hits += 1
        return result

    def put(self, op: str, instance_id: int, params: str, result: object) -> None:
        encoded = encode_result(result)
        if encoded is None:
            return
        path = self._path(op, instance_id, params)
        if path.is_file():
            return
        record = {
            "key": {
                "model": self.model_hash,
                "dataset": self.dataset_name,
                "op": op,
                "instance": instance_id,
                "params": params,
            },
            "result": encoded,
        }
        temp = path.with_name(f"{path.name}.{os.getpid()}.{threading.get_ident()}.tmp")
        temp.write_text(json.dumps(record, sort_keys=True), encoding="utf-8")
        os.replace(temp, path)
        self.writes += 1

    def entry_count(self) -> int:
        return sum(1 for _ in self.directory.glob("*.json"))

    def stats(self) -> dict:
        return {
            "entries": self.entry_count(),
            "hits": self.hits,
            "misses": self.misses,
            "writes": self.writes,
        }


def warm_cache(ctx: EngineContext, operations: tuple[str, ...] | list[str]) -> int:
    """Precompute cacheable explanations for every instance; returns new entries.

    Rerunning is idempotent: already-cached entries are served, not rewritten.
    """
    ops = tuple(operations)
    unknown = set(ops) - set(WARMABLE_OPERATIONS)
    if unknown:
        supported = ", ".join(sorted(WARMABLE_OPERATIONS))
        raise ArgumentError(
            f"cannot warm {sorted(unknown)}; cacheable operations are: {supported}"
        )
    if ctx.cache is None:
        raise ArgumentError("no cache is configured for this context")
    before = ctx.cache.writes
    for op in ops:
        clause = WARMABLE_OPERATIONS[op]
        for instance_id in ctx.dataset.ids():
            execute(f"filter id {instance_id} and {clause}", ctx)
    return ctx.cache.writes - before


# --- runtime ------------------------------------------------------------------------


@dataclass
class ModelBundle:
    """Everything the engine needs for one dataset."""

    dataset: Dataset
    model: LinearTextModel
    context: EngineContext
    cache: Optional[ExplanationCache]


class Conversation:
    def __init__(self, conversation_id: str, dataset_name: str, seed: int):
        self.state = DialogueState(conversation_id=conversation_id, seed=seed)
        self.dataset_name = dataset_name
        self.lock = threading.Lock()


class Runtime:
    """Immutable shared state (datasets, models, bank) plus per-conversation state."""

    def __init__(self, config: AppConfig):
        config.validate()
        self.config = config
        self.bank = PromptBank.load(config.prompt_bank)
        self.external = (
            ExternalParser(config.external_parser_url)
            if config.external_parser_url
            else None
        )
        synonyms = (
            load_lexicon(config.synonyms_path)
            if config.synonyms_path
            else default_synonyms()
        )
        antonyms = (
            load_lexicon(config.antonyms_path)
            if config.antonyms_path
            else default_antonyms()
        )
        stopwords = load_stopwords(config.stopwords_path)
        self.bundles: dict[str, ModelBundle] = {}
        for spec in config.datasets:
            dataset = load_dataset(
                spec.data_path, DatasetConfig.from_file(spec.config_path), name=spec.name
            )
            if spec.model_path is not None:
                model = LinearTextModel.load(spec.model_path)
            else:
                model = train(dataset, TrainConfig())
            cache = None
            if config.cache_dir is not None:
                cache = ExplanationCache(
                    config.cache_dir, model_content_hash(model), spec.name
                )
            context = EngineContext(
                dataset=dataset,
                model=model,
                similarity=SimilarityIndex.fit(dataset),
                synonyms=synonyms,
                antonyms=antonyms,
                stopwords=stopwords,
                rationale_backend=config.rationale_backend_url,
                cache=cache,
                seed=config.seed,
            )
            self.bundles[spec.name] = ModelBundle(
                dataset=dataset, model=model, context=context, cache=cache
            )
        self.default_dataset = config.datasets[0].name
        self.conversations: dict[str, Conversation] = {}
        self._registry_lock = threading.Lock()
        if config.log_dir is not None:
            Path(config.log_dir).mkdir(parents=True, exist_ok=True)

    def conversation(self, conversation_id: str) -> Conversation:
        with self._registry_lock:
            if conversation_id not in self.conversations:
                self.conversations[conversation_id] = Conversation(
                    conversation_id, self.default_dataset, self.config.seed
                )
            return self.conversations[conversation_id]

    def log_path(self, conversation_id: str) -> Optional[Path]:
        if self.config.log_dir is None:
            return None
        safe = re.sub(r"[^A-Za-z0-9._-]", "_", conversation_id) or "conversation"
        return Path(self.config.log_dir) / f"{safe}.jsonl"

    def append_log(self, conversation_id: str, entry: dict) -> None:
        path = self.log_path(conversation_id)
        if path is None:
            return
        line = json.dumps({"ts": _timestamp(), **entry}, sort_keys=True)
        with path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat()


def _turn_seed(conversation_id: str, turn_index: int) -> int:
    digest = hashlib.sha256(f"{conversation_id}:{turn_index}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _flags_dict(flags: Flags) -> dict:
    return {
        "fallback_used": flags.fallback_used,
        "clarification": flags.clarification,
        "no_result": flags.no_result,
    }


def _update_active_view(state: DialogueState, parse: str, ctx: EngineContext) -> None:
    """Keep the conversation's dataset view in step with executed filters."""
    tree = parse_string(parse)
    if tree.has_custom_input():
        return
    if tree.filters():
        state.active_filter = resolve_selection(tree, ctx)
    else:
        state.active_filter = None


def take_turn(runtime: Runtime, conversation_id: str, utterance: str) -> dict:
    """Run one conversation turn end to end; always returns a response dict."""
    conversation = runtime.conversation(conversation_id)
    with conversation.lock:
        bundle = runtime.bundles[conversation.dataset_name]
        state, action = step(
            conversation.state,
            utterance,
            runtime.bank,
            bundle.dataset,
            external=runtime.external,
            epsilon=runtime.config.epsilon,
        )
        turn_index = len(state.turns) - 1
        seed = _turn_seed(conversation_id, turn_index)

        if isinstance(action, SmalltalkReply):
            response = TurnResponse(
                text=action.text, payload={"type": "smalltalk", "kind": action.kind}
            )
        elif isinstance(action, AskClarification):
            response = TurnResponse(
                text=action.text,
                payload={"type": "clarification"},
                flags=Flags(clarification=True),
            )
        else:
            assert isinstance(action, Execute)
            ctx = replace(bundle.context, custom_input=state.custom_input)
            try:
                result = execute(action.parse, ctx)
                response = render(result, seed=seed, parse=action.parse)
                _update_active_view(state, action.parse, ctx)
            except AskModelError as exc:
                response = TurnResponse(
                    text=f"Sorry, I could not run that: {exc}",
                    payload={"type": "error", "detail": str(exc)},
                    parse=action.parse,
                    flags=Flags(no_result=True),
                )
            except Exception as exc:  # never leak a 500 for one bad turn
                response = TurnResponse(
                    text="Sorry, something went wrong while running that operation.",
                    payload={"type": "error", "detail": str(exc)},
                    parse=action.parse,
                    flags=Flags(no_result=True),
                )

        state.finish_turn(response.text)
        record = state.turns[turn_index]
        runtime.append_log(
            conversation_id,
            {
                "utterance": utterance,
                "outcome": record.outcome,
                "response": response.text,
            },
        )
        return {
            "conversation_id": conversation_id,
            "turn_index": turn_index,
            "text": response.text,
            "payload": response.payload,
            "parse": response.parse,
            "flags": _flags_dict(response.flags),
            "finished": state.finished,
        }


def store_custom_input(runtime: Runtime, conversation_id: str, text: str) -> dict:
    conversation = runtime.conversation(conversation_id)
    with conversation.lock:
        set_custom_input(conversation.state, text)
        runtime.append_log(conversation_id, {"custom_input": conversation.state.custom_input})
        return {"ok": True, "text": conversation.state.custom_input}


def dataset_page(
    runtime: Runtime,
    name: Optional[str] = None,
    page: int = 0,
    q: str = "",
    conversation_id: Optional[str] = None,
) -> dict:
    """Paged dataset view: optional substring search plus the conversation's filter."""
    name = name or runtime.default_dataset
    if name not in runtime.bundles:
        raise LookupError(f"unknown dataset '{name}'")
    if page < 0:
        raise ArgumentError("page must be non-negative")
    dataset = runtime.bundles[name].dataset
    selection = dataset.all_selection()
    filtered = False
    if conversation_id is not None:
        conversation = runtime.conversations.get(conversation_id)
        if (
            conversation is not None
            and conversation.dataset_name == name
            and conversation.state.active_filter is not None
        ):
            selection = conversation.state.active_filter
            filtered = True
    if q:
        needle = q.lower()
        ids = tuple(i.id for i in selection.instances() if needle in i.text().lower())
        selection = Selection(dataset, ids)
    start = page * PAGE_SIZE
    items = selection.instances()[start : start + PAGE_SIZE]
    return {
        "name": name,
        "total": len(selection),
        "page": page,
        "page_size": PAGE_SIZE,
        "filtered": filtered,
        "query": q,
        "class_names": list(dataset.class_names),
        "items": [
            {
                "id": instance.id,
                "label": instance.label(),
                "text": instance.text(),
                "fields": {fname: text for fname, text in instance.fields},
            }
            for instance in items
        ],
    }


def record_feedback(
    runtime: Runtime, conversation_id: str, turn_index: int, rating: int
) -> dict:
    if rating not in (-1, 0, 1):
        raise ArgumentError(f"rating must be -1, 0 or 1, got {rating}")
    conversation = runtime.conversations.get(conversation_id)
    if conversation is None:
        raise LookupError(f"unknown conversation '{conversation_id}'")
    with conversation.lock:
        turns = conversation.state.turns
        if not 0 <= turn_index < len(turns):
            raise LookupError(f"conversation has no turn {turn_index}")
        turns[turn_index].rating = rating  # duplicates overwrite
        runtime.append_log(
            conversation_id, {"feedback": {"turn_index": turn_index, "rating": rating}}
        )
        return {"ok": True, "turn_index": turn_index, "rating": rating}


# --- HTTP layer -----------------------------------------------------------------------


class ChatRequest(BaseModel):
    conversation_id: str
    utterance: str


class CustomInputRequest(BaseModel):
    conversation_id: str
    text: str


class FeedbackRequest(BaseModel):
    conversation_id: str
    turn_index: int
    rating: int


def create_app(config: Optional[AppConfig] = None) -> FastAPI:
    runtime = Runtime(config or default_config())
    app = FastAPI(title="askmodel", version=__version__)
    app.state.runtime = runtime
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.post("/chat")
    def chat(request: ChatRequest) -> dict:
        if len(request.utterance.encode("utf-8")) > MAX_UTTERANCE_BYTES:
            raise HTTPException(
                status_code=413,
                detail=f"utterance exceeds {MAX_UTTERANCE_BYTES} bytes",
            )
        return take_turn(runtime, request.conversation_id, request.utterance)

    @app.post("/custom_input")
    def custom_input(request: CustomInputRequest) -> dict:
        try:
            return store_custom_input(runtime, request.conversation_id, request.text)
        except ArgumentError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None

    @app.get("/dataset")
    def dataset(
        name: Optional[str] = None,
        page: int = 0,
        q: str = "",
        conversation_id: Optional[str] = None,
    ) -> dict:
        try:
            return dataset_page(
                runtime, name=name, page=page, q=q, conversation_id=conversation_id
            )
        except LookupError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        except ArgumentError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None

    @app.post("/feedback")
    def feedback(request: FeedbackRequest) -> dict:
        try:
            return record_feedback(
                runtime, request.conversation_id, request.turn_index, request.rating
            )
        except ArgumentError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        except LookupError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None

    return app

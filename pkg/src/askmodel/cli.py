"""Command-line entry points.

``askmodel serve`` runs the HTTP service; ``askmodel eval parse`` and
``askmodel eval study`` produce the offline evaluation reports;
``askmodel train`` fits and saves a classifier; ``askmodel warm-cache``
precomputes the cacheable explanations for every instance.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .data import DatasetConfig, load_dataset
from .errors import AskModelError, ConfigError
from .evalcli import (
    SPLITS,
    bank_parser,
    build_study_report,
    eval_parsing,
    load_gold,
    load_records,
    parsing_report_json,
    parsing_report_markdown,
    study_report_json,
    study_report_markdown,
    write_report,
)
from .intent import PromptBank
from .model import TrainConfig, train
from .server import (
    WARMABLE_OPERATIONS,
    AppConfig,
    DatasetSpec,
    Runtime,
    create_app,
    default_config,
    resolve_listen,
    warm_cache,
)


def _load_config(
    config_path: Optional[Path],
    cache_dir: Optional[Path] = None,
    log_dir: Optional[Path] = None,
) -> AppConfig:
    """File config when given (flags override its directories), demo otherwise."""
    if config_path is not None:
        config = AppConfig.from_file(config_path)
        overrides = {}
        if cache_dir is not None:
            overrides["cache_dir"] = cache_dir
        if log_dir is not None:
            overrides["log_dir"] = log_dir
        return replace(config, **overrides) if overrides else config
    return default_config(cache_dir=cache_dir, log_dir=log_dir)


def _dataset_spec(config: AppConfig, name: Optional[str]) -> DatasetSpec:
    if name is None:
        return config.datasets[0]
    for spec in config.datasets:
        if spec.name == name:
            return spec
    configured = ", ".join(spec.name for spec in config.datasets)
    raise ConfigError(f"unknown dataset '{name}' (configured: {configured})")


def _load_dataset(spec: DatasetSpec):
    return load_dataset(spec.data_path, DatasetConfig.from_file(spec.config_path))


def _cmd_serve(args: argparse.Namespace) -> int:
    config = _load_config(args.config, cache_dir=args.cache_dir, log_dir=args.log_dir)
    listen = args.listen or resolve_listen(config.listen)
    host, _, port_text = listen.rpartition(":")
    if not host or not port_text.isdigit():
        raise ConfigError(f"listen address must be host:port, got '{listen}'")
    app = create_app(config)

    import uvicorn

    print(f"listening on http://{host}:{port_text}", file=sys.stderr)
    uvicorn.run(app, host=host, port=int(port_text), log_level="info")
    return 0


def _cmd_eval_parse(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    bank = PromptBank.load(config.prompt_bank)
    dataset = _load_dataset(_dataset_spec(config, args.dataset))
    gold = load_gold(args.gold, args.split)
    parser = bank_parser(
        bank, dataset, previous_id=args.previous_id, epsilon=config.epsilon
    )
    report = eval_parsing(parser, gold)
    markdown = parsing_report_markdown(report)
    print(markdown, end="")
    if args.out is not None:
        md_path, json_path = write_report(
            args.out, markdown, parsing_report_json(report)
        )
        print(f"wrote {md_path} and {json_path}", file=sys.stderr)
    return 0


def _cmd_eval_study(args: argparse.Namespace) -> int:
    report = build_study_report(load_records(args.logs))
    markdown = study_report_markdown(report)
    print(markdown, end="")
    if args.out is not None:
        md_path, json_path = write_report(
            args.out, markdown, study_report_json(report)
        )
        print(f"wrote {md_path} and {json_path}", file=sys.stderr)
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    spec = _dataset_spec(config, args.dataset)
    dataset = _load_dataset(spec)
    model = train(dataset, TrainConfig())
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    print(
        f"saved model for '{spec.name}' to {out} "
        f"({len(model.vocabulary)} features, {len(model.class_names)} classes)"
    )
    return 0


def _cmd_warm_cache(args: argparse.Namespace) -> int:
    config = _load_config(args.config, cache_dir=args.cache_dir)
    if config.cache_dir is None:
        raise ConfigError("warm-cache needs --cache-dir or cache_dir in the config")
    operations = tuple(op.strip() for op in args.ops.split(",") if op.strip())
    runtime = Runtime(config)
    for name, bundle in runtime.bundles.items():
        wrote = warm_cache(bundle.context, operations)
        print(f"{name}: {wrote} new cache entries")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="askmodel",
        description="Conversational explanations for text classifiers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument(
        "--config", type=Path, help="JSON config file (defaults to the bundled demo)"
    )
    serve.add_argument(
        "--listen", help="host:port to bind (overrides environment and config)"
    )
    serve.add_argument("--log-dir", type=Path, help="directory for conversation logs")
    serve.add_argument("--cache-dir", type=Path, help="explanation cache directory")
    serve.set_defaults(handler=_cmd_serve)

    evaluate = sub.add_parser("eval", help="offline evaluation reports")
    eval_sub = evaluate.add_subparsers(dest="eval_command", required=True)

    parse_cmd = eval_sub.add_parser(
        "parse", help="exact-match parsing accuracy against a gold TSV"
    )
    parse_cmd.add_argument(
        "--gold", type=Path, required=True, help="utterance<TAB>parse file"
    )
    parse_cmd.add_argument("--split", choices=SPLITS, default="dev")
    parse_cmd.add_argument("--config", type=Path)
    parse_cmd.add_argument("--dataset", help="dataset name (defaults to the first)")
    parse_cmd.add_argument(
        "--previous-id",
        dest="previous_id",
        type=int,
        help="instance id available as deixis context (omit for stateless parsing)",
    )
    parse_cmd.add_argument(
        "--out", type=Path, help="also write <out>.md and <out>.json"
    )
    parse_cmd.set_defaults(handler=_cmd_eval_parse)

    study_cmd = eval_sub.add_parser("study", help="aggregate recorded user sessions")
    study_cmd.add_argument(
        "--logs", type=Path, required=True, help="directory of *.jsonl session records"
    )
    study_cmd.add_argument(
        "--out", type=Path, help="also write <out>.md and <out>.json"
    )
    study_cmd.set_defaults(handler=_cmd_eval_study)

    train_cmd = sub.add_parser("train", help="fit and save a classifier")
    train_cmd.add_argument("--out", type=Path, required=True, help="model JSON path")
    train_cmd.add_argument("--config", type=Path)
    train_cmd.add_argument("--dataset", help="dataset name (defaults to the first)")
    train_cmd.set_defaults(handler=_cmd_train)

    warm = sub.add_parser("warm-cache", help="precompute cacheable explanations")
    warm.add_argument("--config", type=Path)
    warm.add_argument("--cache-dir", type=Path, help="explanation cache directory")
    warm.add_argument(
        "--ops",
        default=",".join(sorted(WARMABLE_OPERATIONS)),
        help="comma-separated operations to warm",
    )
    warm.set_defaults(handler=_cmd_warm_cache)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except AskModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

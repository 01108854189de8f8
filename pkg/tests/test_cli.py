"""Command-line interface: argument wiring, reports, and exit codes."""

import json
import subprocess
import sys

import pytest

from askmodel.cli import build_parser, main
from askmodel.model import LinearTextModel


@pytest.fixture()
def gold_file(tmp_path):
    path = tmp_path / "gold.tsv"
    path.write_text(
        "How accurate is the model?\tscore accuracy\n"
        "Show me instance 3\tfilter id 3 and show\n",
        encoding="utf-8",
    )
    return path


@pytest.fixture()
def study_dir(tmp_path):
    logs = tmp_path / "logs"
    logs.mkdir()
    entries = [
        {
            "instance_id": 1,
            "model_prediction": "offensive",
            "user_guess": "offensive",
            "ratings": {"nlpattribute": 1, "rationalize": 1},
            "turns": 3,
        },
        {
            "instance_id": 2,
            "model_prediction": "offensive",
            "user_guess": "non-offensive",
            "ratings": {"nlpattribute": -1},
            "turns": 5,
        },
    ]
    (logs / "sessions.jsonl").write_text(
        "\n".join(json.dumps(e) for e in entries) + "\n", encoding="utf-8"
    )
    return logs


def test_eval_parse_prints_markdown_report(gold_file, capsys):
    assert main(["eval", "parse", "--gold", str(gold_file)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("# Parsing accuracy (dev split)")
    assert "- pairs: 2" in out
    assert "- accuracy: 100.00%" in out


def test_eval_parse_writes_report_files(gold_file, tmp_path, capsys):
    out_base = tmp_path / "reports" / "parsing"
    assert main(["eval", "parse", "--gold", str(gold_file), "--out", str(out_base)]) == 0
    payload = json.loads((tmp_path / "reports" / "parsing.json").read_text())
    assert payload["total"] == 2
    assert payload["accuracy"] == 100.0
    markdown = (tmp_path / "reports" / "parsing.md").read_text()
    assert markdown == capsys.readouterr().out


def test_eval_parse_previous_id_enables_deixis(tmp_path, capsys):
    gold = tmp_path / "gold.tsv"
    gold.write_text(
        "What would be the counterfactual for this instance?"
        "\tfilter id 1 and nlpcfe 1\n",
        encoding="utf-8",
    )
    assert main(["eval", "parse", "--gold", str(gold), "--previous-id", "1"]) == 0
    assert "- accuracy: 100.00%" in capsys.readouterr().out
    assert main(["eval", "parse", "--gold", str(gold)]) == 0
    assert "- accuracy: 0.00%" in capsys.readouterr().out


def test_eval_parse_test_split_labels_report(gold_file, capsys):
    assert main(["eval", "parse", "--gold", str(gold_file), "--split", "test"]) == 0
    assert capsys.readouterr().out.startswith("# Parsing accuracy (test split)")


def test_eval_parse_missing_gold_exits_2(tmp_path, capsys):
    code = main(["eval", "parse", "--gold", str(tmp_path / "nope.tsv")])
    assert code == 2
    assert "error: missing gold file" in capsys.readouterr().err


def test_eval_parse_unknown_dataset_exits_2(gold_file, capsys):
    code = main(["eval", "parse", "--gold", str(gold_file), "--dataset", "nope"])
    assert code == 2
    assert "unknown dataset 'nope'" in capsys.readouterr().err


def test_eval_study_prints_markdown_report(study_dir, capsys):
    assert main(["eval", "study", "--logs", str(study_dir)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("# Study metrics")
    assert "- records: 2" in out
    assert "- helpfulness ratio: 66.67%" in out
    assert "| nlpattribute | 2 | 1 |" in out


def test_eval_study_writes_report_files(study_dir, tmp_path, capsys):
    out_base = tmp_path / "study"
    assert main(["eval", "study", "--logs", str(study_dir), "--out", str(out_base)]) == 0
    payload = json.loads((tmp_path / "study.json").read_text())
    assert payload["records"] == 2
    assert payload["per_operation"]["rationalize"]["turns_avg"] == 3.0
    assert (tmp_path / "study.md").read_text() == capsys.readouterr().out


def test_eval_study_missing_logs_exits_2(tmp_path, capsys):
    code = main(["eval", "study", "--logs", str(tmp_path / "absent")])
    assert code == 2
    assert "missing study log directory" in capsys.readouterr().err


def test_train_saves_loadable_model(tmp_path, capsys):
    out = tmp_path / "models" / "demo.json"
    assert main(["train", "--out", str(out)]) == 0
    assert "saved model for 'demo'" in capsys.readouterr().out
    model = LinearTextModel.load(out)
    assert model.class_names == ("offensive", "non-offensive")
    assert len(model.vocabulary) > 0


def test_warm_cache_reports_counts_and_is_idempotent(tmp_path, capsys):
    cache_dir = tmp_path / "cache"
    args = ["warm-cache", "--cache-dir", str(cache_dir), "--ops", "similar"]
    assert main(args) == 0
    assert "demo: 50 new cache entries" in capsys.readouterr().out
    assert main(args) == 0
    assert "demo: 0 new cache entries" in capsys.readouterr().out


def test_warm_cache_rejects_unknown_operation(tmp_path, capsys):
    code = main(
        ["warm-cache", "--cache-dir", str(tmp_path / "c"), "--ops", "adversarial"]
    )
    assert code == 2
    assert "adversarial" in capsys.readouterr().err


def test_warm_cache_requires_cache_dir(capsys):
    assert main(["warm-cache"]) == 2
    assert "warm-cache needs --cache-dir" in capsys.readouterr().err


def test_serve_rejects_bad_listen_address(capsys):
    assert main(["serve", "--listen", "nohost"]) == 2
    assert "host:port" in capsys.readouterr().err


def test_parser_wires_all_subcommands():
    parser = build_parser()
    for argv in (
        ["serve"],
        ["eval", "parse", "--gold", "g.tsv"],
        ["eval", "study", "--logs", "d"],
        ["train", "--out", "m.json"],
        ["warm-cache"],
    ):
        args = parser.parse_args(argv)
        assert callable(args.handler)


def test_usage_error_exits_2():
    with pytest.raises(SystemExit) as excinfo:
        main([])
    assert excinfo.value.code == 2


def test_module_entry_point_shows_help():
    proc = subprocess.run(
        [sys.executable, "-m", "askmodel", "--help"],
        capture_output=True,
        text=True,
        timeout=60,
    )
    assert proc.returncode == 0
    for command in ("serve", "eval", "train", "warm-cache"):
        assert command in proc.stdout

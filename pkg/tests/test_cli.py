"""Command-line plumbing: exit codes, output shapes, report files."""

import json
import re

import pytest

from _helpers import TINY_SCENARIO
from locater.cli import main


@pytest.fixture(scope="module")
def store_dir(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    scenario = base / "tiny.json"
    scenario.write_text(json.dumps(TINY_SCENARIO))
    out = base / "store"
    assert main(["simulate", "--scenario", str(scenario), "--out", str(out)]) == 0
    return out


def test_simulate_populates_store(store_dir):
    for name in ("events.csv", "space.json", "truth.csv", "meta.json"):
        assert (store_dir / name).exists(), name


def test_usage_error_exits_one(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["query", "--device", "owner001"])
    assert exc.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_missing_store_exits_two(tmp_path, capsys):
    code = main(
        ["query", "--store", str(tmp_path / "nope"), "--device", "d", "--time", "0"]
    )
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_query_prints_single_line_answer(store_dir, capsys):
    truth_line = (store_dir / "truth.csv").read_text().splitlines()[1]
    dev, _, start, end = truth_line.split(",")
    t = (int(start) + int(end)) // 2
    code = main(
        ["query", "--store", str(store_dir), "--device", dev, "--time", str(t)]
    )
    out = capsys.readouterr().out.strip()
    assert code == 0
    assert re.fullmatch(r"(outside|region|room) \S+ p=\d\.\d{4} neighbors=\d+( dist=\S+)?", out)


def test_estimate_params_prints_thresholds(store_dir, capsys):
    assert main(["estimate-params", "--store", str(store_dir)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("tau_low_s=")
    assert "delta owner001" in out


def test_cache_stats_on_empty_store(store_dir, capsys):
    assert main(["cache-stats", "--store", str(store_dir)]) == 0
    assert "nodes: 0" in capsys.readouterr().out


def test_evaluate_writes_report_and_figures(store_dir, capsys):
    code = main(
        [
            "evaluate",
            "--store", str(store_dir),
            "--truth", str(store_dir / "truth.csv"),
            "--queries", "25",
            "--seed", "4",
        ]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert out.startswith("system\toverall")
    assert "D-LOCATER" in out
    report = store_dir / "report"
    for name in ("report.tsv", "report.json", "accuracy.png"):
        assert (report / name).exists(), name


def test_clean_all_writes_derived_rows(store_dir, tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"coarse_mode": "bootstrap"}))
    code = main(
        ["--config", str(config), "clean-all", "--store", str(store_dir)]
    )
    assert code == 0
    assert "cleaned" in capsys.readouterr().out
    derived = (store_dir / "derived.jsonl").read_text().splitlines()
    assert derived
    assert json.loads(derived[0])["tag"] == "derived"

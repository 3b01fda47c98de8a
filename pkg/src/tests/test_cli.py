#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
メインCLI (wat_cli.py) のテスト
終了コード: 0 正常 / 1 異常検知 / 2 引数エラー / 3 データ・入出力エラー
"""

import pytest

from wat_cli import EXIT_ANOMALY, EXIT_DATA, EXIT_OK, EXIT_USAGE, main


@pytest.fixture(scope="module")
def flood_files(tmp_path_factory):
    """通常50ユーザー + 攻撃191件のシナリオを生成し、通常ログで学習済みの状態を返す"""
    root = tmp_path_factory.mktemp("flood")
    files = {
        "test": root / "access.log",
        "normal": root / "normal.log",
        "site": root / "site.tsv",
        "wat": root / "trained.dat",
    }
    code = main([
        "simulate", "--out", str(files["test"]), "--normal-out", str(files["normal"]),
        "--site-out", str(files["site"]), "--users", "50", "--flood-count", "191", "--quiet",
    ])
    assert code == EXIT_OK
    assert main(["train", str(files["normal"]), "--out", str(files["wat"]), "--quiet"]) == EXIT_OK
    return files


@pytest.fixture
def regular_log(tmp_path, clf_line):
    """3ユーザーが /a /b /c を同じ回数ずつ閲覧する正常ログ"""
    lines = []
    offset = 0
    for user in ("10.1.0.1", "10.1.0.2", "10.1.0.3"):
        for i in range(12):
            lines.append(clf_line(user, ("/a", "/b", "/c")[i % 3], offset))
            offset += 1
    path = tmp_path / "regular.log"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _outputs(tmp_path):
    return [
        "--report", str(tmp_path / "alerts.txt"),
        "--csv", str(tmp_path / "alerts.csv"),
        "--matrix", str(tmp_path / "am_test.dat"),
    ]


def test_simulate_composition_and_determinism(flood_files, tmp_path):
    test_lines = flood_files["test"].read_text(encoding="utf-8").splitlines()
    normal_lines = flood_files["normal"].read_text(encoding="utf-8").splitlines()
    assert len(normal_lines) == 50 * 30
    assert len(test_lines) == 50 * 30 + 191
    assert sum(1 for line in test_lines if line.startswith("10.0.0.2 ")) == 191

    again = tmp_path / "again.log"
    assert main(["simulate", "--out", str(again), "--users", "50", "--flood-count", "191", "--quiet"]) == EXIT_OK
    assert again.read_bytes() == flood_files["test"].read_bytes()

    site_lines = flood_files["site"].read_text(encoding="utf-8").splitlines()
    assert site_lines[0] == "#site v1 prng=PCG64 seed=42 pages=50 branching=4"


def test_simulate_unknown_target(tmp_path):
    code = main(["simulate", "--out", str(tmp_path / "x.log"), "--flood-count", "5",
                 "--flood-target", "/nope", "--quiet"])
    assert code == EXIT_USAGE


def test_train_writes_wat(flood_files):
    assert flood_files["wat"].exists()
    header = flood_files["wat"].read_text(encoding="utf-8").splitlines()[0]
    assert header.startswith("#wat v1 total_logs=1500 users=50 window=")


def test_train_empty_file(tmp_path, capsys):
    empty = tmp_path / "empty.log"
    empty.write_text("", encoding="utf-8")
    code = main(["train", str(empty), "--out", str(tmp_path / "trained.dat"), "--quiet"])

    assert code == EXIT_DATA
    assert "EmptyTrainingError" in capsys.readouterr().out
    assert not (tmp_path / "trained.dat").exists()


def test_train_unreadable_path(tmp_path):
    assert main(["train", str(tmp_path), "--out", str(tmp_path / "t.dat"), "--quiet"]) == EXIT_DATA
    assert main(["train", str(tmp_path / "missing.log"), "--quiet"]) == EXIT_DATA


def test_detect_flood_scenario(flood_files, tmp_path, capsys):
    code = main(["detect", str(flood_files["test"]), "--wat", str(flood_files["wat"]),
                 "--rank-top", "5", "--quiet"] + _outputs(tmp_path))
    assert code == EXIT_ANOMALY

    report = (tmp_path / "alerts.txt").read_text(encoding="utf-8").splitlines()
    attack = [line for line in report if line.startswith("attack from ip:10.0.0.2 req:")]
    assert len(attack) == 1
    assert attack[0].endswith(" attempts:191")
    assert report[-1].startswith("#alerts=")

    matrix = (tmp_path / "am_test.dat").read_text(encoding="utf-8").splitlines()
    assert matrix[0].startswith("#am_test v1 users=51 window=")

    out = capsys.readouterr().out
    assert "rank_shift ip:10.0.0.2" in out


def test_detect_all_normal(regular_log, tmp_path):
    wat = tmp_path / "trained.dat"
    assert main(["train", str(regular_log), "--out", str(wat), "--quiet"]) == EXIT_OK
    code = main(["detect", str(regular_log), "--wat", str(wat), "--quiet"] + _outputs(tmp_path))

    assert code == EXIT_OK
    report = (tmp_path / "alerts.txt").read_text(encoding="utf-8")
    assert report.startswith("#alerts=0 users_flagged=0 window=")


def test_detect_default_output_paths(regular_log, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["train", str(regular_log), "--quiet"]) == EXIT_OK
    assert main(["detect", str(regular_log), "--quiet"]) == EXIT_OK
    for name in ("trained.dat", "alerts.txt", "alerts.csv", "am_test.dat"):
        assert (tmp_path / name).exists()


def test_detect_missing_wat(regular_log, tmp_path):
    code = main(["detect", str(regular_log), "--wat", str(tmp_path / "nope.dat"), "--quiet"] + _outputs(tmp_path))
    assert code == EXIT_DATA


def test_detect_corrupt_wat(regular_log, tmp_path):
    bad = tmp_path / "bad.dat"
    bad.write_text("#wat v9\n", encoding="utf-8")
    code = main(["detect", str(regular_log), "--wat", str(bad), "--quiet"] + _outputs(tmp_path))
    assert code == EXIT_DATA


def test_detect_invalid_flags(regular_log, tmp_path):
    wat = tmp_path / "trained.dat"
    main(["train", str(regular_log), "--out", str(wat), "--quiet"])

    mixed = main(["detect", str(regular_log), "--wat", str(wat), "--window-last", "60",
                  "--window-start", "2023-10-10T13:00:00Z", "--quiet"] + _outputs(tmp_path))
    assert mixed == EXIT_USAGE
    assert main(["detect", str(regular_log), "--wat", str(wat), "--theta", "0", "--quiet"]) == EXIT_USAGE
    assert main(["detect", str(regular_log), "--theta", "abc"]) == EXIT_USAGE


def test_detect_explicit_window(regular_log, tmp_path):
    wat = tmp_path / "trained.dat"
    main(["train", str(regular_log), "--out", str(wat), "--quiet"])
    code = main(["detect", str(regular_log), "--wat", str(wat),
                 "--window-start", "2023-10-10T13:00:00Z", "--window-end", "2023-10-10T13:00:01Z",
                 "--min-requests", "1", "--quiet"] + _outputs(tmp_path))

    assert code == EXIT_ANOMALY
    matrix = (tmp_path / "am_test.dat").read_text(encoding="utf-8").splitlines()
    assert matrix[0].startswith("#am_test v1 users=1 window=2023-10-10T13:00:00+00:00/")


def test_config_file_and_flag_precedence(regular_log, tmp_path):
    wat = tmp_path / "trained.dat"
    main(["train", str(regular_log), "--out", str(wat), "--quiet"])
    config = tmp_path / "wat.env"
    config.write_text(f"wat_path={wat}\nreport_path={tmp_path / 'from_config.txt'}\n", encoding="utf-8")

    assert main(["detect", str(regular_log), "--config", str(config), "--quiet",
                 "--csv", str(tmp_path / "a.csv"), "--matrix", str(tmp_path / "m.dat")]) == EXIT_OK
    assert (tmp_path / "from_config.txt").exists()

    assert main(["detect", str(regular_log), "--config", str(config), "--quiet",
                 "--report", str(tmp_path / "from_flag.txt"),
                 "--csv", str(tmp_path / "a.csv"), "--matrix", str(tmp_path / "m.dat")]) == EXIT_OK
    assert (tmp_path / "from_flag.txt").exists()

    assert main(["detect", str(regular_log), "--config", str(tmp_path / "none.env"), "--quiet"]) == EXIT_DATA


def test_baseline_flood_scenario(flood_files, tmp_path, capsys):
    args = ["baseline", str(flood_files["test"]), "--wat", str(flood_files["wat"]), "--k", "3", "--quiet"]
    assert main(args + ["--dump-dir", str(tmp_path / "graph")]) == EXIT_OK
    first = capsys.readouterr().out

    top_row = [line for line in first.splitlines() if line.startswith("1 ")]
    assert len(top_row) == 1
    assert top_row[0].count("10.0.0.2") == 2
    assert (tmp_path / "graph" / "baseline_scores.csv").exists()
    assert (tmp_path / "graph" / "graph_edges.tsv").exists()

    assert main(args) == EXIT_OK
    second = capsys.readouterr().out
    strip = lambda text: [line for line in text.splitlines() if not line.startswith("📁")]
    assert strip(first) == strip(second)


def test_baseline_single_user(tmp_path, clf_line):
    log = tmp_path / "one.log"
    log.write_text("\n".join(clf_line("10.0.0.9", "/a", i) for i in range(5)) + "\n", encoding="utf-8")
    wat = tmp_path / "trained.dat"
    assert main(["train", str(log), "--out", str(wat), "--quiet"]) == EXIT_OK
    assert main(["baseline", str(log), "--wat", str(wat), "--quiet"]) == EXIT_USAGE


def test_report_command(flood_files, tmp_path, capsys):
    main(["detect", str(flood_files["test"]), "--wat", str(flood_files["wat"]), "--quiet"] + _outputs(tmp_path))
    capsys.readouterr()

    summary = tmp_path / "summary.json"
    code = main(["report", "--alerts", str(tmp_path / "alerts.csv"), "--summary-out", str(summary), "--quiet"])
    assert code == EXIT_ANOMALY
    assert "10.0.0.2" in capsys.readouterr().out
    assert summary.exists()


def test_bench_requires_two_sizes():
    assert main(["bench", "--sizes", "1000", "--quiet"]) == EXIT_USAGE
    assert main(["bench", "--sizes", "a,b", "--quiet"]) == EXIT_USAGE


def test_bench_small_sizes(tmp_path, capsys):
    out = tmp_path / "bench.csv"
    assert main(["bench", "--sizes", "100,200", "--out", str(out), "--quiet"]) == EXIT_OK
    assert "増加指数" in capsys.readouterr().out
    assert len(out.read_text(encoding="utf-8").splitlines()) == 5


def test_usage_errors():
    assert main([]) == EXIT_USAGE
    assert main(["unknown"]) == EXIT_USAGE
    assert main(["simulate"]) == EXIT_USAGE

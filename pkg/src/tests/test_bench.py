#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
スケーリング計測のテスト（小さいサイズで構造のみ確認）
"""

import pandas as pd
import pytest

from bench import bench_log, fit_growth_exponent, growth_exponents, run_bench


def test_fit_growth_exponent_on_power_law():
    assert fit_growth_exponent([1000, 2000, 4000], [1.0, 4.0, 16.0]) == pytest.approx(2.0)
    assert fit_growth_exponent([1000, 2000, 4000], [0.5, 1.0, 2.0]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        fit_growth_exponent([1000], [1.0])


def test_bench_log_size_and_users():
    log = bench_log(200, seed=42, session_len=4)
    assert len(log) == 200
    assert log.skipped == 0
    assert len({r.client_ip for r in log.records}) == 50


def test_run_bench_table():
    table = run_bench([100, 200], seed=1)

    assert list(table.columns) == ["pipeline", "records", "users", "seconds"]
    assert len(table) == 4
    assert sorted(table["pipeline"].unique()) == ["baseline", "wat"]
    assert (table["seconds"] > 0).all()

    repeat = run_bench([100, 200], seed=1)
    assert table["records"].tolist() == repeat["records"].tolist()

    exponents = growth_exponents(table)
    assert set(exponents) == {"baseline", "wat"}


def test_run_bench_requires_two_sizes():
    with pytest.raises(ValueError):
        run_bench([100])


def test_growth_exponents_from_table():
    table = pd.DataFrame([
        {"pipeline": "wat", "records": 1000, "users": 10, "seconds": 0.1},
        {"pipeline": "wat", "records": 2000, "users": 20, "seconds": 0.2},
        {"pipeline": "baseline", "records": 1000, "users": 10, "seconds": 0.1},
        {"pipeline": "baseline", "records": 2000, "users": 20, "seconds": 0.4},
    ])
    exponents = growth_exponents(table)
    assert exponents["wat"] == pytest.approx(1.0)
    assert exponents["baseline"] == pytest.approx(2.0)

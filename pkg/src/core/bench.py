#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
スケーリング計測
合成ログのサイズを変えながら WAT パイプラインと近接グラフベースラインの実行時間を測り、
log-log 回帰で増加指数を推定する。
"""

import logging
import time
from typing import Callable, Dict, Sequence

import numpy as np
import pandas as pd

from detector import ThresholdConfig, detect
from graph_baseline import run_baseline
from log_model import AccessLog, TimeWindow, format_record, parse_log
from wat import build_document_matrix, build_user_profiles, train_wat
from workload import SimConfig, generate_site, simulate_normal

logger = logging.getLogger(__name__)

BENCH_PAGES = 50
BENCH_BRANCHING = 4
REPEATS = 3


def _best_of(func: Callable[[], object], repeats: int = REPEATS) -> float:
    best = float("inf")
    for _ in range(repeats):
        started = time.perf_counter()
        func()
        best = min(best, time.perf_counter() - started)
    return best


def wat_pipeline(log: AccessLog, cfg: ThresholdConfig):
    """プロファイル作成 → 学習 → Document Matrix → 判定"""
    window = TimeWindow.covering(log)
    profiles = build_user_profiles(log)
    wat = train_wat(profiles, len(log), window)
    matrix = build_document_matrix(log, window)
    return detect(matrix, wat, cfg)


def baseline_pipeline(log: AccessLog, k: int = 3):
    """プロファイル作成 → 特徴ベクトル → 近接グラフ → PageRank → kNN 距離検算"""
    profiles = build_user_profiles(log)
    wat = train_wat(profiles, len(log), TimeWindow.covering(log))
    return run_baseline(profiles, wat, k=k, top_m=10)


def bench_log(size: int, seed: int, session_len: int) -> AccessLog:
    """size 件規模の合成ログを作り、テキスト経由で再パースする"""
    site = generate_site(BENCH_PAGES, BENCH_BRANCHING, seed)
    users = max(4, size // session_len)
    log = simulate_normal(site, SimConfig(seed=seed, num_users=users, session_len=session_len))
    return parse_log((format_record(r) for r in log.records), f"bench-{size}")


def run_bench(sizes: Sequence[int], seed: int = 42, session_len: int = 2) -> pd.DataFrame:
    """
    各サイズで両パイプラインの実行時間（3回中の最良値）を計測

    Returns:
        columns = pipeline, records, users, seconds
    """
    if len(sizes) < 2:
        raise ValueError("計測サイズは2つ以上指定してください")

    cfg = ThresholdConfig()
    rows = []
    for size in sizes:
        log = bench_log(size, seed, session_len)
        users = len({r.client_ip for r in log.records})

        # 計測中の INFO ログを抑止
        previous = logging.root.manager.disable
        logging.disable(logging.INFO)
        try:
            wat_seconds = _best_of(lambda: wat_pipeline(log, cfg))
            baseline_seconds = _best_of(lambda: baseline_pipeline(log))
        finally:
            logging.disable(previous)

        rows.append({"pipeline": "wat", "records": len(log), "users": users, "seconds": wat_seconds})
        rows.append({"pipeline": "baseline", "records": len(log), "users": users, "seconds": baseline_seconds})
        logger.info(f"⏱️ {len(log)}件: WAT {wat_seconds:.4f}s, baseline {baseline_seconds:.4f}s")

    return pd.DataFrame(rows, columns=["pipeline", "records", "users", "seconds"])


def fit_growth_exponent(records: Sequence[float], seconds: Sequence[float]) -> float:
    """log(seconds) を log(records) に最小二乗で当てはめた傾き"""
    if len(records) < 2 or len(records) != len(seconds):
        raise ValueError("2点以上の同じ長さの系列が必要です")
    x = np.log(np.asarray(records, dtype=float))
    y = np.log(np.maximum(np.asarray(seconds, dtype=float), 1e-9))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def growth_exponents(table: pd.DataFrame) -> Dict[str, float]:
    """パイプラインごとの増加指数"""
    return {
        pipeline: fit_growth_exponent(group["records"].tolist(), group["seconds"].tolist())
        for pipeline, group in table.groupby("pipeline", sort=True)
    }

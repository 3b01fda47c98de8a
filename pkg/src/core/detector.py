#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
異常検知モジュール
テスト時の Document Matrix を学習済み WAT と比較し、閾値を超えて
アクセス頻度が上振れ（フラッド）または下振れ（アンダーフロー）したユーザーを警告する。
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, Field

from log_model import TimeWindow
from wat import DocumentMatrix, DocumentRow, TrainedWAT, WATEntry, document_rank

logger = logging.getLogger(__name__)


class ThresholdConfig(BaseModel):
    """検知閾値の設定"""
    theta_abs: float = Field(0.05, gt=0, description="頻度差の絶対閾値")
    k_sigma: float = Field(3.0, ge=0, description="標準偏差の倍率")
    min_requests: int = Field(10, ge=1, description="判定に必要な最小リクエスト数")
    underflow_floor: float = Field(0.10, ge=0, description="アンダーフロー判定対象となる期待頻度の下限（1超で無効）")
    expected_scale: Literal["user", "log"] = Field("user", description="期待頻度の尺度")


class Direction(str, Enum):
    OVER = "over"
    UNDER = "under"


@dataclass(frozen=True)
class Alert:
    """異常ユーザーの警告1件"""
    user: str
    uri: str
    attempts: int
    observed_freq: float
    expected_freq: float
    deviation: float
    direction: Direction
    window: Optional[TimeWindow]


def expected_profile(entry: Optional[WATEntry], wat: TrainedWAT, cfg: ThresholdConfig,
                     direction: Direction = Direction.OVER) -> Tuple[float, float]:
    """
    URI の期待頻度と散らばりを比較尺度に合わせて返す

    "log" 尺度は学習値 (mean_freq, std_freq) をそのまま使う。

    "user" 尺度ではユーザー自身の総数で正規化した観測頻度と比べるため、
    学習頻度を学習ユーザー数 N 倍した訪問者平均 v = mean_freq·N、
    訪問者の標準偏差 sd = std_freq·N を基準にする。
    訪問者数 s、訪問者比率 p = s/N、未訪問比率 q = 1 - p として:

    - 上振れ: 期待値 v·s/(s+q)。未訪問者1名分の擬似観測で訪問者平均を縮小し、
      訪問者が少ないほど期待値が下がる（s = N なら v のまま）。散らばりは sd。
    - 下振れ: 未訪問者を頻度0として含めた全ユーザー分布の平均 v·p と
      標準偏差 sqrt(p·sd² + p·q·v²)。

    N = 1 のとき両方向とも "log" 尺度と一致する。学習時に未出現の URI は (0, 0)。
    """
    if entry is None:
        return 0.0, 0.0
    if cfg.expected_scale == "log":
        return entry.mean_freq, entry.std_freq

    users = max(wat.num_users, 1)
    support = min(max(entry.support, 1), users)
    visitor_mean = entry.mean_freq * users
    visitor_spread = entry.std_freq * users
    share = support / users
    absent = 1.0 - share

    if direction == Direction.OVER:
        return min(1.0, visitor_mean * support / (support + absent)), visitor_spread

    variance = share * visitor_spread ** 2 + share * absent * visitor_mean ** 2
    return min(1.0, visitor_mean * share), math.sqrt(variance)


def effective_threshold(spread: float, cfg: ThresholdConfig) -> float:
    return max(cfg.theta_abs, cfg.k_sigma * spread)


def score_user(row: DocumentRow, wat: TrainedWAT, cfg: ThresholdConfig,
               window: Optional[TimeWindow] = None) -> List[Alert]:
    """
    1ユーザー分の行を WAT と比較して警告を生成

    Returns:
        頻度差の降順（同値は URI 昇順）の Alert リスト
    """
    if row.total < cfg.min_requests:
        return []

    alerts = []

    # 上振れ: 行に現れた URI
    for uri, count in row.counts.items():
        expected, spread = expected_profile(wat.entries.get(uri), wat, cfg)
        observed = count / row.total
        deviation = observed - expected
        if deviation > effective_threshold(spread, cfg):
            alerts.append(Alert(row.user, uri, count, observed, expected, deviation, Direction.OVER, window))

    # 下振れ: 期待頻度が underflow_floor 以上の学習済み URI
    for uri, entry in wat.entries.items():
        expected, spread = expected_profile(entry, wat, cfg, Direction.UNDER)
        if expected < cfg.underflow_floor:
            continue
        count = row.counts.get(uri, 0)
        observed = count / row.total
        deviation = expected - observed
        if deviation > effective_threshold(spread, cfg):
            alerts.append(Alert(row.user, uri, count, observed, expected, deviation, Direction.UNDER, window))

    return sorted(alerts, key=lambda a: (-a.deviation, a.uri))


def detect(matrix: DocumentMatrix, wat: TrainedWAT, cfg: ThresholdConfig) -> List[Alert]:
    """全ユーザーを判定（頻度差降順 → ユーザー昇順 → URI 昇順）"""
    alerts = []
    for user in sorted(matrix.rows):
        alerts.extend(score_user(matrix.rows[user], wat, cfg, matrix.window))

    alerts.sort(key=lambda a: (-a.deviation, a.user, a.uri))
    flagged = len({a.user for a in alerts})
    if alerts:
        logger.warning(f"⚠️ 異常検知: {len(alerts)}件の警告, {flagged}ユーザー")
    else:
        logger.info(f"✅ 異常なし: {len(matrix.rows)}ユーザーを判定")
    return alerts


def row_ranking(row: DocumentRow, top_n: int) -> Dict[str, int]:
    """行内のヒット数順位（同数は URI 昇順）の上位 top_n"""
    ordered = sorted(row.counts.items(), key=lambda item: (-item[1], item[0]))
    return {uri: rank for rank, (uri, _) in enumerate(ordered[:top_n], 1)}


def rank_shift(row: DocumentRow, wat: TrainedWAT, top_n: int) -> float:
    """
    学習時ランクと行内ランクの footrule 距離（診断用スコア）

    両ランキングを top_n で切り、片方にしかない URI は順位 top_n+1 とみなす。
    """
    if top_n < 1:
        raise ValueError("top_n は1以上で指定してください")

    trained = {uri: rank for uri, rank in document_rank(wat) if rank <= top_n}
    observed = row_ranking(row, top_n)
    missing = top_n + 1
    return float(sum(
        abs(trained.get(uri, missing) - observed.get(uri, missing))
        for uri in set(trained) | set(observed)
    ))


def format_alert(alert: Alert) -> str:
    """警告を1行のテキストに整形"""
    if alert.direction == Direction.OVER:
        return f"attack from ip:{alert.user} req:{alert.uri} attempts:{alert.attempts}"
    return f"underflow from ip:{alert.user} req:{alert.uri} expected:{alert.expected_freq:.6f}"

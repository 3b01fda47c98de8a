#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
警告レポート エクスポート機能
検知結果をテキストレポート・CSV・Document Matrix (am_test.dat)・統計JSONに出力
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import pandas as pd

from detector import Alert, format_alert
from log_model import TimeWindow
from wat import DocumentMatrix

ALERT_COLUMNS = ["user", "uri", "attempts", "observed", "expected", "deviation", "direction"]


def alerts_to_frame(alerts: List[Alert]) -> pd.DataFrame:
    """Alert リストを DataFrame に変換（検知結果の並び順を保持）"""
    return pd.DataFrame(
        [
            {
                "user": a.user,
                "uri": a.uri,
                "attempts": a.attempts,
                "observed": a.observed_freq,
                "expected": a.expected_freq,
                "deviation": a.deviation,
                "direction": a.direction.value,
            }
            for a in alerts
        ],
        columns=ALERT_COLUMNS,
    )


def summary_line(alerts: List[Alert], window: TimeWindow) -> str:
    flagged = len({a.user for a in alerts})
    return f"#alerts={len(alerts)} users_flagged={flagged} window={window.to_text()}"


def summarize_alerts(frame: pd.DataFrame, top: int = 10) -> Dict[str, Any]:
    """警告の集計（件数・方向別・上位ユーザー）"""
    if frame.empty:
        return {"alerts": 0, "users_flagged": 0, "over": 0, "under": 0, "top_offenders": []}

    per_user = user_summary_table(frame)
    return {
        "alerts": int(len(frame)),
        "users_flagged": int(frame["user"].nunique()),
        "over": int((frame["direction"] == "over").sum()),
        "under": int((frame["direction"] == "under").sum()),
        "top_offenders": [
            {"user": row.user, "alerts": int(row.alerts), "max_deviation": float(row.max_deviation)}
            for row in per_user.head(top).itertuples(index=False)
        ],
    }


def user_summary_table(frame: pd.DataFrame) -> pd.DataFrame:
    """ユーザー別集計（警告数・最大偏差・方向）。最大偏差の降順、同値はユーザー昇順"""
    if frame.empty:
        return pd.DataFrame(columns=["user", "alerts", "max_deviation", "directions"])

    grouped = frame.groupby("user", sort=True)
    table = pd.DataFrame({
        "alerts": grouped.size(),
        "max_deviation": grouped["deviation"].max(),
        "directions": grouped["direction"].agg(lambda s: ",".join(sorted(set(s)))),
    }).reset_index()
    table["neg"] = -table["max_deviation"]
    table = table.sort_values(["neg", "user"], kind="mergesort").drop(columns="neg")
    return table.reset_index(drop=True)


def read_alerts_csv(path: Union[str, Path]) -> pd.DataFrame:
    """write_alerts_csv の出力を読み込み"""
    frame = pd.read_csv(path, dtype={"user": str, "uri": str, "direction": str},
                        keep_default_na=False)
    missing = [c for c in ALERT_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"警告CSVの列が不足しています: {missing}")
    return frame


class AlertReportExporter:
    """検知結果エクスポートクラス"""

    def __init__(self, output_dir: Union[str, Path] = "."):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.logger = logging.getLogger(__name__)

    def _path(self, filename: Union[str, Path]) -> Path:
        return self.output_dir / filename

    def write_alert_report(self, alerts: List[Alert], window: TimeWindow,
                           filename: Union[str, Path] = "alerts.txt") -> str:
        """1警告1行のレポートと末尾の集計行を出力"""
        filepath = self._path(filename)
        with open(filepath, "w", encoding="utf-8", newline="\n") as f:
            for alert in alerts:
                f.write(format_alert(alert) + "\n")
            f.write(summary_line(alerts, window) + "\n")

        self.logger.info(f"✅ 警告レポート出力: {filepath} ({len(alerts)}件)")
        return str(filepath)

    def write_alerts_csv(self, alerts: List[Alert], filename: Union[str, Path] = "alerts.csv") -> str:
        """警告を CSV (user,uri,attempts,observed,expected,deviation,direction) で出力"""
        filepath = self._path(filename)
        with open(filepath, "w", encoding="utf-8", newline="") as f:
            alerts_to_frame(alerts).to_csv(f, index=False, float_format="%.12g")

        self.logger.info(f"✅ 警告CSV出力: {filepath}")
        return str(filepath)

    def write_document_matrix(self, matrix: DocumentMatrix, filename: Union[str, Path] = "am_test.dat") -> str:
        """ユーザー別 Document Matrix を am_test.dat 形式で出力"""
        filepath = self._path(filename)
        with open(filepath, "w", encoding="utf-8", newline="\n") as f:
            f.write(f"#am_test v1 users={len(matrix.rows)} window={matrix.window.to_text()}\n")
            for user in sorted(matrix.rows):
                row = matrix.rows[user]
                for uri in sorted(row.counts):
                    count = row.counts[uri]
                    f.write(f"{user}\t{uri}\t{count}\t{count / row.total:.12g}\n")

        self.logger.info(f"✅ Document Matrix出力: {filepath} ({len(matrix.rows)}ユーザー)")
        return str(filepath)

    def export_summary_stats(self, frame: pd.DataFrame, filename: Union[str, Path] = "alert_stats.json",
                             extra: Optional[Dict[str, Any]] = None) -> str:
        """警告の統計情報を JSON で出力"""
        filepath = self._path(filename)
        stats = summarize_alerts(frame)
        if extra:
            stats.update(extra)

        with open(filepath, "w", encoding="utf-8") as f:
            json.dump(stats, f, ensure_ascii=False, indent=2)

        self.logger.info(f"📊 統計情報出力: {filepath}")
        return str(filepath)

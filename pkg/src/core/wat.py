#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Web Access Table (WAT) モジュール
学習時: ユーザー別アクセスプロファイルから URI ごとの平均アクセス頻度・標準偏差・ランクを算出
テスト時: 時間窓内のユーザー別 Document Matrix を作成

アクセス頻度 = (ユーザーのページ別ヒット数) / (総ログ数)
"""

import logging
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Tuple, Union

import pandas as pd

from log_model import AccessLog, TimeWindow, window_slice
from wat_errors import (
    DegenerateDenominatorError, EmptyTrainingError,
    FormatVersionMismatchError, WATFormatError,
)

logger = logging.getLogger(__name__)

WAT_HEADER_RE = re.compile(
    r"^#wat v1 total_logs=(?P<total>\d+) users=(?P<users>\d+) window=(?P<window>\S+)$"
)


@dataclass(frozen=True)
class UserProfile:
    """ユーザー（クライアントIP）ごとの URI 別ヒット数"""
    user: str
    counts: Dict[str, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())


@dataclass(frozen=True)
class WATEntry:
    uri: str
    mean_freq: float
    std_freq: float
    rank: int
    support: int


@dataclass(frozen=True)
class TrainedWAT:
    """学習済み WAT（entries はランク順）"""
    entries: Dict[str, WATEntry]
    total_logs: int
    num_users: int
    window: TimeWindow

    def __len__(self) -> int:
        return len(self.entries)

    def ranked(self) -> List[WATEntry]:
        return sorted(self.entries.values(), key=lambda e: e.rank)

    def top_uris(self, limit: int = 0) -> List[str]:
        """ランク上位の URI（limit=0 で全件）"""
        uris = [e.uri for e in self.ranked()]
        return uris[:limit] if limit > 0 else uris


@dataclass(frozen=True)
class DocumentRow:
    """Document Matrix の1行（時間窓内の1ユーザー）"""
    user: str
    counts: Dict[str, int]
    total: int

    @property
    def frequencies(self) -> Dict[str, float]:
        return {uri: count / self.total for uri, count in self.counts.items()}


@dataclass(frozen=True)
class DocumentMatrix:
    window: TimeWindow
    rows: Dict[str, DocumentRow]

    @property
    def total_requests(self) -> int:
        return sum(row.total for row in self.rows.values())


def round_frequency(value: float) -> float:
    """頻度を有効数字12桁に丸める（trained.dat の表現と一致させる）"""
    return float(f"{value:.12g}")


def build_user_profiles(log: AccessLog) -> Dict[str, UserProfile]:
    """ログからユーザー別プロファイルを作成（ユーザー昇順）"""
    counts = defaultdict(Counter)
    for record in log.records:
        counts[record.client_ip][record.uri] += 1

    return {
        user: UserProfile(user, dict(sorted(uri_counts.items())))
        for user, uri_counts in sorted(counts.items())
    }


def access_frequency(hits: int, total_logs: int) -> float:
    """
    アクセス頻度 hits / total_logs を計算

    Raises:
        DegenerateDenominatorError: total_logs が 0 の場合
    """
    if total_logs <= 0:
        raise DegenerateDenominatorError("総ログ数0ではアクセス頻度を計算できません")
    if hits < 0 or hits > total_logs:
        raise ValueError(f"ヒット数が範囲外です: {hits} / {total_logs}")
    return hits / total_logs


def train_wat(profiles: Dict[str, UserProfile], total_logs: int, window: TimeWindow) -> TrainedWAT:
    """
    ユーザープロファイルから WAT を学習

    平均・標準偏差（母集団）は URI にアクセスしたユーザー集合上で計算し、
    ランクは平均頻度の降順（同値は URI 昇順）で付与する。

    Raises:
        EmptyTrainingError: ヒットが1件もない場合
    """
    rows = [
        (profile.user, uri, hits)
        for profile in profiles.values()
        for uri, hits in profile.counts.items()
        if hits > 0
    ]
    if not rows:
        raise EmptyTrainingError("学習ログにアクセスが1件もありません")

    observed_total = sum(profile.total for profile in profiles.values())
    if observed_total != total_logs:
        raise ValueError(f"総ログ数が一致しません: profiles={observed_total}, total_logs={total_logs}")

    # 入力順に依存しないよう (uri, user) で整列してから集計
    frame = pd.DataFrame(rows, columns=["user", "uri", "hits"]).sort_values(["uri", "user"])
    frame["freq"] = frame["hits"] / total_logs
    grouped = frame.groupby("uri", sort=True)["freq"]
    stats = pd.DataFrame({
        "mean": grouped.mean(),
        "std": grouped.std(ddof=0).fillna(0.0),
        "support": grouped.size(),
    })
    stats["mean"] = stats["mean"].clip(0.0, 1.0).map(round_frequency)
    stats["std"] = stats["std"].clip(lower=0.0).map(round_frequency)

    ordered = sorted(stats.itertuples(), key=lambda row: (-row.mean, row.Index))
    entries = {
        row.Index: WATEntry(row.Index, float(row.mean), float(row.std), rank, int(row.support))
        for rank, row in enumerate(ordered, 1)
    }
    num_users = sum(1 for profile in profiles.values() if profile.total > 0)

    logger.info(f"✅ WAT学習完了: {len(entries)} URI, {num_users} ユーザー, {total_logs} ログ")
    return TrainedWAT(entries, total_logs, num_users, window)


def document_rank(wat: TrainedWAT) -> List[Tuple[str, int]]:
    """(uri, rank) をランク昇順で返す"""
    return [(entry.uri, entry.rank) for entry in wat.ranked()]


def build_document_matrix(test_log: AccessLog, window: TimeWindow) -> DocumentMatrix:
    """時間窓内のユーザー別 Document Matrix を作成"""
    sliced = window_slice(test_log, window)
    rows = {
        user: DocumentRow(user, profile.counts, profile.total)
        for user, profile in build_user_profiles(sliced).items()
    }
    logger.info(f"📊 Document Matrix作成: {len(rows)} ユーザー, {len(sliced)} リクエスト")
    return DocumentMatrix(window, rows)


def save_wat(wat: TrainedWAT, path: Union[str, Path]) -> str:
    """trained.dat 形式で WAT を保存"""
    if not wat.entries:
        raise EmptyTrainingError("空の WAT は保存できません")

    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"#wat v1 total_logs={wat.total_logs} users={wat.num_users} "
                f"window={wat.window.to_text()}\n")
        for entry in wat.ranked():
            f.write(f"{entry.uri}\t{entry.mean_freq:.12g}\t{entry.std_freq:.12g}\t"
                    f"{entry.rank}\t{entry.support}\n")

    logger.info(f"✅ WAT保存: {path} ({len(wat.entries)} URI)")
    return str(path)


def load_wat(path: Union[str, Path]) -> TrainedWAT:
    """
    trained.dat から WAT を読み込み

    Raises:
        FormatVersionMismatchError: ヘッダーが未知の形式
        WATFormatError: 本文の破損
    """
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().split("\n")

    header = WAT_HEADER_RE.match(lines[0]) if lines else None
    if not header:
        raise FormatVersionMismatchError(f"未知の trained.dat ヘッダー: {lines[0][:60] if lines else ''}")

    try:
        window = TimeWindow.from_text(header.group("window"))
    except ValueError as e:
        raise WATFormatError(f"時間窓を解釈できません: {e}") from e

    entries = {}
    for line_no, line in enumerate(lines[1:], 2):
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 5:
            raise WATFormatError(f"{path}:{line_no}: 列数が不正です ({len(fields)})")
        uri = fields[0]
        try:
            entry = WATEntry(uri, float(fields[1]), float(fields[2]), int(fields[3]), int(fields[4]))
        except ValueError as e:
            raise WATFormatError(f"{path}:{line_no}: 数値を解釈できません") from e
        if not uri.startswith("/") or uri in entries:
            raise WATFormatError(f"{path}:{line_no}: URI が不正または重複しています: {uri}")
        if not 0.0 <= entry.mean_freq <= 1.0 or entry.std_freq < 0 or entry.support < 1:
            raise WATFormatError(f"{path}:{line_no}: 値が範囲外です")
        entries[uri] = entry

    if not entries:
        raise WATFormatError(f"{path}: エントリがありません")
    if sorted(e.rank for e in entries.values()) != list(range(1, len(entries) + 1)):
        raise WATFormatError(f"{path}: ランクが 1..{len(entries)} の順列ではありません")

    entries = dict(sorted(entries.items(), key=lambda item: item[1].rank))
    return TrainedWAT(entries, int(header.group("total")), int(header.group("users")), window)

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
合成ワークロード生成モジュール
シード付きでサイトのリンク構造・通常ユーザーの閲覧セッション・フラッド攻撃者のアクセスを生成する。
乱数生成器は numpy の PCG64 に固定し、サイトファイルのヘッダーに記録する。
"""

import heapq
import ipaddress
import logging
from collections import deque
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
from numpy.random import PCG64, Generator, SeedSequence
from pydantic import BaseModel, Field

from log_model import AccessLog, LogRecord, renumber
from wat_errors import UnknownTargetError

logger = logging.getLogger(__name__)

PRNG_NAME = "PCG64"
ENTRY_URI = "/"
DEFAULT_START = datetime(2023, 10, 10, 13, 0, 0, tzinfo=timezone.utc)
DEFAULT_ATTACKER_IP = "10.0.0.2"
NORMAL_AGENT = "Mozilla/5.0 (X11; Linux x86_64) simulated-browser"
FLOOD_AGENT = "flood-bot/1.0"

# 攻撃者用の乱数ストリーム識別子（ユーザー用の spawn 系列と衝突しない）
FLOOD_STREAM = 0x666C6F6F64


@dataclass(frozen=True)
class SiteGraph:
    """サイトのページとリンク構造"""
    pages: Tuple[str, ...]
    links: Dict[str, Tuple[str, ...]]
    entry: str = ENTRY_URI
    seed: Optional[int] = None
    branching: int = 1

    def depths(self) -> Dict[str, int]:
        """入口からのリンク距離（到達不能ページは含まない）"""
        depth = {self.entry: 0}
        queue = deque([self.entry])
        while queue:
            page = queue.popleft()
            for target in self.links.get(page, ()):
                if target not in depth:
                    depth[target] = depth[page] + 1
                    queue.append(target)
        return depth

    def to_lines(self) -> List[str]:
        """`uri<TAB>link1,link2,...` 形式（先頭行はヘッダー）"""
        header = (f"#site v1 prng={PRNG_NAME} seed={self.seed if self.seed is not None else '-'} "
                  f"pages={len(self.pages)} branching={self.branching}")
        return [header] + [f"{page}\t{','.join(self.links.get(page, ()))}" for page in self.pages]

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "SiteGraph":
        pages, links = [], {}
        seed, branching = None, 1
        for line in lines:
            line = line.rstrip("\r\n")
            if not line:
                continue
            if line.startswith("#"):
                meta = dict(item.split("=", 1) for item in line.split()[2:] if "=" in item)
                if meta.get("seed", "-") != "-":
                    seed = int(meta["seed"])
                branching = int(meta.get("branching", branching))
                continue
            page, _, targets = line.partition("\t")
            pages.append(page)
            links[page] = tuple(t for t in targets.split(",") if t)
        return cls(tuple(pages), links, ENTRY_URI, seed, branching)


class SimConfig(BaseModel):
    """通常トラフィックのシミュレーション設定"""
    seed: int = Field(42, ge=0, description="乱数シード")
    num_users: int = Field(50, ge=1, description="通常ユーザー数")
    session_len: int = Field(30, ge=1, description="ユーザーあたりのリクエスト数")
    start: datetime = Field(DEFAULT_START, description="開始時刻")
    duration: float = Field(3600.0, gt=0, description="期間（秒）")
    restart_prob: float = Field(0.1, ge=0, le=1, description="入口ページへ戻る確率")
    first_ip: str = Field("172.16.0.1", description="通常ユーザーの先頭IP")


def _page_uri(section: int, depth: int, index: int) -> str:
    return f"/sec{section:02d}/level{depth}/page{index:03d}.html"


def generate_site(num_pages: int, branching: int, seed: int) -> SiteGraph:
    """
    ランダム再帰木としてサイトを生成

    各ページの親は、まだ子を branching 個持っていないページから一様に選ぶ。
    """
    if num_pages < 1 or branching < 1:
        raise ValueError("num_pages と branching は1以上で指定してください")

    rng = Generator(PCG64(seed))
    pages = [ENTRY_URI]
    children: Dict[str, List[str]] = {ENTRY_URI: []}
    depth = {ENTRY_URI: 0}
    section = {ENTRY_URI: 0}
    open_pages = [ENTRY_URI]

    for index in range(1, num_pages):
        parent = open_pages[int(rng.integers(len(open_pages)))]
        if parent == ENTRY_URI:
            top = len(children[ENTRY_URI]) + 1
        else:
            top = section[parent]
        uri = _page_uri(top, depth[parent] + 1, index)

        pages.append(uri)
        children[parent].append(uri)
        children[uri] = []
        depth[uri] = depth[parent] + 1
        section[uri] = top
        open_pages.append(uri)
        if len(children[parent]) >= branching:
            open_pages.remove(parent)

    links = {page: tuple(children[page]) for page in pages}
    logger.info(f"🌐 サイト生成: {num_pages}ページ, branching={branching}, seed={seed}")
    return SiteGraph(tuple(pages), links, ENTRY_URI, seed, branching)


def _walk(site: SiteGraph, length: int, restart_prob: float, rng: Generator) -> List[Tuple[str, Optional[str]]]:
    # (uri, referrer)。入口への戻りはリファラーなし
    current = site.entry
    path = [(current, None)]
    for _ in range(length - 1):
        restart = rng.random() < restart_prob
        targets = site.links.get(current, ())
        if restart or not targets:
            nxt, referrer = site.entry, None
        else:
            nxt, referrer = targets[int(rng.integers(len(targets)))], current
        path.append((nxt, referrer))
        current = nxt
    return path


def _offsets(rng: Generator, duration: float, size: int) -> np.ndarray:
    return np.sort(rng.integers(0, max(1, int(duration)), size=size))


def simulate_normal(site: SiteGraph, cfg: SimConfig) -> AccessLog:
    """通常ユーザーのランダムウォーク閲覧ログを生成（タイムスタンプ昇順）"""
    base_ip = ipaddress.ip_address(cfg.first_ip)
    records = []
    for index, stream in enumerate(SeedSequence(cfg.seed).spawn(cfg.num_users)):
        rng = Generator(PCG64(stream))
        ip = str(base_ip + index)
        path = _walk(site, cfg.session_len, cfg.restart_prob, rng)
        offsets = _offsets(rng, cfg.duration, len(path))
        sizes = rng.integers(200, 20000, size=len(path))
        for (uri, referrer), offset, size in zip(path, offsets, sizes):
            records.append(LogRecord(
                client_ip=ip,
                timestamp=cfg.start + timedelta(seconds=int(offset)),
                method="GET",
                uri=uri,
                referrer=referrer,
                status=200,
                bytes=int(size),
                user_agent=NORMAL_AGENT,
                line_no=1,
            ))

    # ユーザー順に並べた上で時刻の安定ソート
    records.sort(key=lambda r: r.timestamp)
    log = AccessLog(renumber(records), 0, "simulate_normal")
    logger.info(f"👥 通常トラフィック生成: {cfg.num_users}ユーザー, {len(log)}件")
    return log


def simulate_flood(site: SiteGraph, attacker_ip: str, target_uri: str, count: int, cfg: SimConfig) -> AccessLog:
    """
    1つの URI に集中するフラッド攻撃ログを生成

    Raises:
        UnknownTargetError: target_uri がサイトに存在しない
    """
    if target_uri not in site.pages:
        raise UnknownTargetError(f"攻撃対象がサイトに存在しません: {target_uri}")
    if count < 1:
        raise ValueError("count は1以上で指定してください")
    ipaddress.ip_address(attacker_ip)

    rng = Generator(PCG64([cfg.seed, FLOOD_STREAM]))
    offsets = _offsets(rng, cfg.duration, count)
    records = tuple(
        LogRecord(
            client_ip=attacker_ip,
            timestamp=cfg.start + timedelta(seconds=int(offset)),
            method="GET",
            uri=target_uri,
            referrer=None,
            status=200,
            bytes=2326,
            user_agent=FLOOD_AGENT,
            line_no=i,
        )
        for i, offset in enumerate(offsets, 1)
    )
    logger.info(f"💥 フラッド生成: {attacker_ip} → {target_uri} ×{count}")
    return AccessLog(records, 0, "simulate_flood")


def merge_logs(logs: List[AccessLog]) -> AccessLog:
    """
    時刻順の安定マージ（同時刻は入力リスト順）。行番号は 1..N に振り直す

    レコードの多重集合は line_no を除いて入力の和と一致する。
    """
    if not logs:
        return AccessLog((), 0, "merged")
    merged = heapq.merge(*(log.records for log in logs), key=lambda r: r.timestamp)
    source = logs[0].source if len(logs) == 1 else "+".join(log.source for log in logs)
    return AccessLog(renumber(merged), sum(log.skipped for log in logs), source)


def pick_deep_target(site: SiteGraph, normal_log: AccessLog) -> str:
    """通常トラフィックが実際に訪れたページのうち最も深いもの（同深度は URI 昇順）"""
    depth = site.depths()
    visited = {record.uri for record in normal_log.records if record.uri in depth}
    if not visited:
        return site.entry
    return min(visited, key=lambda uri: (-depth[uri], uri))

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
アクセスログ解析モジュール
Webサーバーのアクセスログ（Combined / Common Log Format）を構造化レコードに変換し、
時間窓でレコードを切り出す。

対応形式:
  <ip> <ident> <authuser> [<dd>/<Mon>/<yyyy>:<hh>:<mm>:<ss> <±hhmm>] "<method> <target> <protocol>"
  <status> <bytes|-> "<referrer|->" "<agent>"
  （referrer / agent を持たない Common Log Format も受け付ける）
"""

import ipaddress
import logging
import re
from collections import Counter
from dataclasses import dataclass, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Dict, Iterable, Optional, Tuple, Union
from urllib.parse import quote, unquote, urlsplit

from wat_errors import LogIOError, MalformedURIError

logger = logging.getLogger(__name__)

LOG_FORMATS = ("combined", "common")

MONTHS = ("Jan", "Feb", "Mar", "Apr", "May", "Jun",
          "Jul", "Aug", "Sep", "Oct", "Nov", "Dec")
_MONTH_INDEX = {name: i + 1 for i, name in enumerate(MONTHS)}

_LOG_RE = re.compile(
    r'^(?P<ip>\S+) \S+ \S+ '
    r'\[(?P<day>\d{2})/(?P<mon>[A-Za-z]{3})/(?P<year>\d{4}):'
    r'(?P<hh>\d{2}):(?P<mm>\d{2}):(?P<ss>\d{2}) (?P<tz>[+-]\d{4})\] '
    r'"(?P<method>[A-Za-z]+) (?P<target>\S+) (?P<protocol>HTTP/\d(?:\.\d)?)" '
    r'(?P<status>\d{3}) (?P<bytes>\d+|-)'
    r'(?: "(?P<referrer>(?:[^"\\]|\\.)*)" "(?P<agent>(?:[^"\\]|\\.)*)")?'
    r'\s*$'
)

# 書き戻し時にエスケープしない文字（'%' は正規化済みエスケープをそのまま残す）
_URI_SAFE = "/:@!$&'()*+,;=~-._%"


@dataclass(frozen=True)
class LogRecord:
    """アクセスログ1行分の構造化レコード"""
    client_ip: str
    timestamp: datetime
    method: str
    uri: str
    referrer: Optional[str]
    status: int
    bytes: Optional[int]
    user_agent: Optional[str]
    line_no: int


@dataclass(frozen=True)
class ParseFailure:
    """パース失敗（呼び出し側で skipped に計上する）"""
    line_no: int
    reason: str


@dataclass(frozen=True)
class AccessLog:
    """パース済みアクセスログ"""
    records: Tuple[LogRecord, ...]
    skipped: int = 0
    source: str = ""

    @property
    def total_lines(self) -> int:
        return len(self.records) + self.skipped

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class TimeWindow:
    """半開区間 [start, end) の時間窓"""
    start: datetime
    end: datetime

    def __post_init__(self):
        if self.start.tzinfo is None or self.end.tzinfo is None:
            raise ValueError("時間窓にはタイムゾーン付き時刻が必要です")
        if not self.start < self.end:
            raise ValueError(f"時間窓が不正です: {self.start} >= {self.end}")

    def contains(self, instant: datetime) -> bool:
        return self.start <= instant < self.end

    def to_text(self) -> str:
        return f"{self.start.isoformat()}/{self.end.isoformat()}"

    @classmethod
    def from_text(cls, text: str) -> "TimeWindow":
        start, sep, end = text.partition("/")
        if not sep:
            raise ValueError(f"時間窓の表記が不正です: {text}")
        return cls(parse_iso_instant(start), parse_iso_instant(end))

    @classmethod
    def covering(cls, log: AccessLog) -> "TimeWindow":
        """ログ全体を覆う窓 [最小時刻, 最大時刻 + 1秒)"""
        if not log.records:
            raise ValueError("空のログから時間窓は作れません")
        stamps = [r.timestamp for r in log.records]
        return cls(min(stamps), max(stamps) + timedelta(seconds=1))

    @classmethod
    def last(cls, log: AccessLog, seconds: float) -> "TimeWindow":
        """ログの最大時刻を終端とする直近 seconds 秒の窓"""
        if seconds <= 0:
            raise ValueError("--window-last は正の秒数で指定してください")
        if not log.records:
            raise ValueError("空のログから時間窓は作れません")
        end = max(r.timestamp for r in log.records) + timedelta(seconds=1)
        return cls(end - timedelta(seconds=seconds), end)


def parse_iso_instant(text: str) -> datetime:
    """ISO-8601 時刻をパース（タイムゾーン省略時はUTC）"""
    value = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    if value.tzinfo is None:
        value = value.replace(tzinfo=timezone.utc)
    return value


def _escape_canonical(decoded: str) -> str:
    # 2回目の正規化で意味が変わる文字と制御文字を再エスケープ（冪等性・1行保証）
    out = []
    for ch in decoded:
        if ch == "%":
            out.append("%25")
        elif ch == "?":
            out.append("%3F")
        elif ch == "#":
            out.append("%23")
        elif ord(ch) < 0x20 or ord(ch) == 0x7F:
            out.append(f"%{ord(ch):02X}")
        else:
            out.append(ch)
    return "".join(out)


def normalize_uri(raw: str) -> str:
    """
    リクエストターゲットを正規化

    クエリ・フラグメント除去 → パーセントデコード（1回）→ 末尾スラッシュ除去（ルートを除く）

    Raises:
        MalformedURIError: 空、またはパス形式でないターゲット
    """
    if not raw:
        raise MalformedURIError("空のリクエストターゲット")

    target = raw
    if target.lower().startswith(("http://", "https://")):
        target = urlsplit(target).path or "/"
    if not target.startswith("/"):
        raise MalformedURIError(f"パス形式ではありません: {raw}")

    path = target.split("#", 1)[0].split("?", 1)[0]
    canonical = _escape_canonical(unquote(path)).rstrip("/")
    return canonical or "/"


def _parse_timestamp(match: "re.Match") -> datetime:
    month = _MONTH_INDEX.get(match.group("mon").capitalize())
    if month is None:
        raise ValueError(f"unknown month {match.group('mon')}")
    tz = match.group("tz")
    offset = timedelta(hours=int(tz[1:3]), minutes=int(tz[3:5]))
    if tz[0] == "-":
        offset = -offset
    return datetime(
        int(match.group("year")), month, int(match.group("day")),
        int(match.group("hh")), int(match.group("mm")), int(match.group("ss")),
        tzinfo=timezone(offset),
    )


def _optional_field(value: Optional[str]) -> Optional[str]:
    if value is None or value == "-":
        return None
    return value


def parse_line(line: str, line_no: int, log_format: str = "combined") -> Union[LogRecord, ParseFailure]:
    """
    アクセスログ1行をパース

    Args:
        line: 改行を含まない1行
        line_no: 1始まりの行番号
        log_format: "combined"（Common形式も許容）または "common"（referrer/agentを無視）

    Returns:
        LogRecord または ParseFailure
    """
    match = _LOG_RE.match(line)
    if not match:
        return ParseFailure(line_no, "grammar mismatch")

    ip = match.group("ip")
    try:
        ipaddress.ip_address(ip)
    except ValueError:
        return ParseFailure(line_no, f"invalid client ip: {ip}")

    try:
        timestamp = _parse_timestamp(match)
    except ValueError as e:
        return ParseFailure(line_no, f"invalid timestamp: {e}")

    try:
        uri = normalize_uri(match.group("target"))
    except MalformedURIError as e:
        return ParseFailure(line_no, f"malformed uri: {e}")

    size = match.group("bytes")
    referrer = agent = None
    if log_format == "combined":
        referrer = _optional_field(match.group("referrer"))
        agent = _optional_field(match.group("agent"))

    return LogRecord(
        client_ip=ip,
        timestamp=timestamp,
        method=match.group("method"),
        uri=uri,
        referrer=referrer,
        status=int(match.group("status")),
        bytes=None if size == "-" else int(size),
        user_agent=agent,
        line_no=line_no,
    )


def parse_log(lines: Iterable[str], source: str = "", log_format: str = "combined") -> AccessLog:
    """
    行ストリームをパースして AccessLog を生成（不正行は skipped に計上）

    Raises:
        LogIOError: 読み込み途中でストリームが失敗した場合
    """
    if log_format not in LOG_FORMATS:
        raise ValueError(f"未対応のログ形式: {log_format}")

    records = []
    skipped = 0
    try:
        for line_no, line in enumerate(lines, 1):
            result = parse_line(line.rstrip("\r\n"), line_no, log_format)
            if isinstance(result, ParseFailure):
                skipped += 1
                logger.debug(f"⚠️ 行{result.line_no}をスキップ: {result.reason}")
            else:
                records.append(result)
    except (OSError, UnicodeDecodeError) as e:
        raise LogIOError(f"アクセスログ読み込み失敗 ({source or 'stream'}): {e}") from e

    logger.info(f"📋 ログ解析完了 {source}: {len(records)}件, スキップ {skipped}件")
    return AccessLog(tuple(records), skipped, source)


def read_access_log(path: Union[str, Path], log_format: str = "combined") -> AccessLog:
    """アクセスログファイルを読み込み（UTF-8 として読めないバイトは U+FFFD に置換し、行単位で判定）"""
    with open(path, "r", encoding="utf-8", errors="replace") as f:
        return parse_log(f, str(path), log_format)


def format_record(record: LogRecord) -> str:
    """LogRecord を Combined Log Format の1行に書き戻す"""
    ts = record.timestamp
    stamp = (f"{ts.day:02d}/{MONTHS[ts.month - 1]}/{ts.year:04d}:"
             f"{ts.hour:02d}:{ts.minute:02d}:{ts.second:02d} {ts.strftime('%z')}")
    size = "-" if record.bytes is None else str(record.bytes)
    return (
        f'{record.client_ip} - - [{stamp}] '
        f'"{record.method} {quote(record.uri, safe=_URI_SAFE)} HTTP/1.1" '
        f'{record.status} {size} '
        f'"{record.referrer or "-"}" "{record.user_agent or "-"}"'
    )


def write_access_log(log: AccessLog, path: Union[str, Path]) -> str:
    """AccessLog をアクセスログファイルとして書き出し"""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for record in log.records:
            f.write(format_record(record) + "\n")
    logger.info(f"✅ アクセスログ出力: {path} ({len(log.records)}件)")
    return str(path)


def renumber(records: Iterable[LogRecord]) -> Tuple[LogRecord, ...]:
    """行番号を 1..N に振り直す"""
    return tuple(replace(r, line_no=i) for i, r in enumerate(records, 1))


def window_slice(log: AccessLog, window: TimeWindow) -> AccessLog:
    """時間窓 [start, end) に入るレコードを時刻順（同時刻は元の順序）で抽出"""
    records = log.records
    if any(b.timestamp < a.timestamp for a, b in zip(records, records[1:])):
        records = tuple(sorted(records, key=lambda r: r.timestamp))
    selected = tuple(r for r in records if window.contains(r.timestamp))
    return AccessLog(selected, 0, log.source)


def referrer_edges(log: AccessLog) -> Dict[Tuple[str, str], int]:
    """リファラー → リクエストURI の遷移回数（解釈できないリファラーは無視）"""
    edges = Counter()
    for record in log.records:
        if not record.referrer:
            continue
        try:
            edges[(normalize_uri(record.referrer), record.uri)] += 1
        except MalformedURIError:
            continue
    return dict(sorted(edges.items()))

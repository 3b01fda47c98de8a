#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
テスト共通設定
src/core・src/export・scripts をインポートパスに追加し、ログ行生成などの共通フィクスチャを提供
"""

import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest

project_root = Path(__file__).parent.parent.parent
for sub in ("src/core", "src/export", "scripts"):
    path = str(project_root / sub)
    if path not in sys.path:
        sys.path.insert(0, path)

from log_model import MONTHS, AccessLog, LogRecord, TimeWindow  # noqa: E402

BASE_TIME = datetime(2023, 10, 10, 13, 0, 0, tzinfo=timezone.utc)


def _clf(ip, uri, offset=0, referrer="-", agent="Mozilla/5.0", status=200, size="512"):
    ts = BASE_TIME + timedelta(seconds=offset)
    stamp = f"{ts.day:02d}/{MONTHS[ts.month - 1]}/{ts.year}:{ts:%H:%M:%S} +0000"
    return f'{ip} - - [{stamp}] "GET {uri} HTTP/1.1" {status} {size} "{referrer}" "{agent}"'


def _record(ip, uri, offset=0, line_no=1, referrer=None):
    return LogRecord(
        client_ip=ip,
        timestamp=BASE_TIME + timedelta(seconds=offset),
        method="GET",
        uri=uri,
        referrer=referrer,
        status=200,
        bytes=512,
        user_agent="Mozilla/5.0",
        line_no=line_no,
    )


@pytest.fixture
def clf_line():
    """Combined Log Format の1行を作る関数"""
    return _clf


@pytest.fixture
def make_log():
    """(ip, uri, offset秒) の列から AccessLog を作る関数"""
    def build(entries, source="fixture"):
        records = tuple(
            _record(ip, uri, offset, i)
            for i, (ip, uri, offset) in enumerate(entries, 1)
        )
        return AccessLog(records, 0, source)
    return build


@pytest.fixture
def hour_window():
    return TimeWindow(BASE_TIME, BASE_TIME + timedelta(hours=1))


@pytest.fixture
def base_time():
    return BASE_TIME

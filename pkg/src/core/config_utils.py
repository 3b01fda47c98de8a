#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
設定管理ユーティリティ
優先順位: 既定値 < 環境変数 WAT_<KEY> < 設定ファイル(key=value) < コマンドライン引数
"""

import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

from dotenv import dotenv_values, load_dotenv

logger = logging.getLogger(__name__)

ENV_PREFIX = "WAT_"

DEFAULTS: Dict[str, Any] = {
    "theta": 0.05,
    "k_sigma": 3.0,
    "min_requests": 10,
    "underflow_floor": 0.10,
    "expected_scale": "user",
    "log_format": "combined",
    "damping": 0.85,
    "tol": 1e-10,
    "max_iter": 1000,
    "knn_k": 3,
    "top_m": 10,
    "seed": 42,
    "wat_path": "trained.dat",
    "matrix_path": "am_test.dat",
    "report_path": "alerts.txt",
    "alerts_csv_path": "alerts.csv",
}

_TRUE_WORDS = {"1", "true", "yes", "on"}


def load_environment(env_file: Optional[Union[str, Path]] = None) -> bool:
    """.env を環境変数に読み込む（既存の環境変数は上書きしない）"""
    return load_dotenv(env_file) if env_file else load_dotenv()


def _coerce(key: str, value: Any) -> Any:
    default = DEFAULTS[key]
    if value is None or isinstance(value, type(default)):
        return value
    text = str(value).strip()
    try:
        if isinstance(default, bool):
            return text.lower() in _TRUE_WORDS
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError as e:
        raise ValueError(f"設定値 {key}={value!r} を解釈できません") from e
    return text


def load_settings(config_path: Optional[Union[str, Path]] = None,
                  overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """
    設定を解決

    Args:
        config_path: key=value 形式の設定ファイル（省略可）
        overrides: コマンドライン引数由来の値（None は未指定扱い）

    Returns:
        DEFAULTS と同じキーを持つ設定辞書
    """
    settings = dict(DEFAULTS)

    for key in DEFAULTS:
        env_value = os.environ.get(ENV_PREFIX + key.upper())
        if env_value is not None:
            settings[key] = _coerce(key, env_value)

    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise FileNotFoundError(f"設定ファイルが見つかりません: {path}")
        for key, value in dotenv_values(path).items():
            normalized = key.strip().lower()
            # wat_path のように接頭辞と重なる正規キーはそのまま使う
            if normalized not in DEFAULTS and normalized.startswith(ENV_PREFIX.lower()):
                normalized = normalized[len(ENV_PREFIX):]
            if normalized not in DEFAULTS:
                logger.warning(f"⚠️ 未知の設定キーを無視: {key}")
                continue
            settings[normalized] = _coerce(normalized, value)

    for key, value in (overrides or {}).items():
        if value is not None and key in DEFAULTS:
            settings[key] = _coerce(key, value)

    return settings

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
WAT DDoS検知システム 例外定義

CLIは例外クラスで終了コードを振り分ける（データ/IOエラー → 3）。
"""


class WatToolkitError(Exception):
    """本システムの例外基底クラス"""


class MalformedURIError(WatToolkitError, ValueError):
    """パス形式でないリクエストターゲット（CONNECT host:port など）"""


class LogIOError(WatToolkitError, OSError):
    """アクセスログ読み込み途中のストリーム障害（部分結果は破棄）"""


class DegenerateDenominatorError(WatToolkitError, ZeroDivisionError):
    """総ログ数0でのアクセス頻度計算"""


class EmptyTrainingError(WatToolkitError, ValueError):
    """学習対象のアクセスが1件もない"""


class FormatVersionMismatchError(WatToolkitError, ValueError):
    """trained.dat のヘッダーが未知の形式"""


class WATFormatError(WatToolkitError, ValueError):
    """trained.dat 本文の破損"""


class InvalidKError(WatToolkitError, ValueError):
    """近傍数kが 1 ≤ k < n を満たさない"""


class NotConvergedError(WatToolkitError, RuntimeError):
    """PageRankのべき乗法が max_iter 内に収束しなかった"""

    def __init__(self, message: str, scores=None):
        super().__init__(message)
        self.scores = scores


class UnknownTargetError(WatToolkitError, ValueError):
    """攻撃対象URIがサイトグラフに存在しない"""

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
近接グラフ + PageRank による異常スコアリング（比較用ベースライン）

ユーザーを WAT 上位 URI の頻度ベクトルに埋め込み、kNN 近接グラフを構築して
PageRank の定常分布を求める。定常確率の低いユーザーほど異常とみなす。
k 番目近傍距離による外れ値ランキングを独立した検算として併せて提供する。
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix, diags
from scipy.spatial.distance import pdist, squareform

from wat import TrainedWAT, UserProfile
from wat_errors import InvalidKError, NotConvergedError

logger = logging.getLogger(__name__)

DEFAULT_DAMPING = 0.85
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 1000

_MIN_WEIGHT = np.finfo(float).tiny


@dataclass(frozen=True, eq=False)
class PointSet:
    """ユーザーごとの特徴ベクトル集合（labels と vectors の行が対応）"""
    labels: Tuple[str, ...]
    vectors: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True, eq=False)
class ProximityGraph:
    n: int
    weights: csr_matrix
    k: int
    sigma: float
    directed: bool = False

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence], directed: bool = False) -> "ProximityGraph":
        """(src, dst) または (src, dst, weight) の辺リストからグラフを作成"""
        rows, cols, vals = [], [], []
        for edge in edges:
            src, dst = int(edge[0]), int(edge[1])
            weight = float(edge[2]) if len(edge) > 2 else 1.0
            if src == dst:
                raise ValueError(f"自己ループは扱えません: {src}")
            if not (0 <= src < n and 0 <= dst < n):
                raise ValueError(f"ノード番号が範囲外です: {src}->{dst}")
            rows.append(src)
            cols.append(dst)
            vals.append(weight)

        weights = coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        if not directed:
            weights = weights.maximum(weights.T).tocsr()
        return cls(n, weights, 0, 0.0, directed)

    def edges(self) -> List[Tuple[int, int, float]]:
        """辺の一覧（無向グラフは src < dst のみ）"""
        coo = self.weights.tocoo()
        listed = [
            (int(i), int(j), float(w))
            for i, j, w in zip(coo.row, coo.col, coo.data)
            if self.directed or i < j
        ]
        return sorted(listed)

    def degrees(self) -> np.ndarray:
        return np.diff(self.weights.indptr)


@dataclass(frozen=True, eq=False)
class ScoreVector:
    scores: np.ndarray
    iterations: int
    converged: bool


@dataclass(frozen=True, eq=False)
class BaselineResult:
    """ベースライン一式の実行結果"""
    points: PointSet
    graph: ProximityGraph
    scores: ScoreVector
    pagerank_ranking: List[Tuple[str, float]]
    knn_ranking: List[Tuple[str, float]]


def _frequency_vector(profile: UserProfile, uris: Sequence[str], dim: int) -> np.ndarray:
    vector = np.zeros(dim, dtype=float)
    total = profile.total
    if total == 0:
        return vector
    for j, uri in enumerate(uris):
        vector[j] = profile.counts.get(uri, 0) / total
    return vector


def user_feature_vector(profile: UserProfile, wat: TrainedWAT, dim: int) -> np.ndarray:
    """ランク j 位の学習済み URI に対するユーザー自身の頻度を j 番目の要素とするベクトル"""
    if dim < 1:
        raise ValueError("次元数は1以上で指定してください")
    return _frequency_vector(profile, wat.top_uris(dim), dim)


def build_point_set(profiles: Dict[str, UserProfile], wat: TrainedWAT, dim: int = 0) -> PointSet:
    """ユーザー昇順の PointSet を作成（dim=0 で全 URI）"""
    dim = dim if dim > 0 else len(wat)
    labels = tuple(sorted(profiles))
    if not labels:
        return PointSet(labels, np.zeros((0, dim), dtype=float))
    uris = wat.top_uris(dim)
    vectors = np.vstack([_frequency_vector(profiles[user], uris, dim) for user in labels])
    return PointSet(labels, vectors)


def _check_k(k: int, n: int):
    if not 1 <= k < n:
        raise InvalidKError(f"k は 1 ≤ k < n を満たす必要があります (k={k}, n={n})")


def _distances(points: PointSet) -> np.ndarray:
    if len(points) < 2:
        return np.zeros((len(points), len(points)))
    return squareform(pdist(points.vectors, "euclidean"))


def default_sigma(knn_distances: np.ndarray, pairwise: np.ndarray) -> float:
    """kNN 距離の中央値。0 なら正のペア距離の中央値、それも無ければ 1.0"""
    sigma = float(np.median(knn_distances)) if knn_distances.size else 0.0
    if sigma > 0:
        return sigma
    positive = pairwise[pairwise > 0]
    if positive.size:
        return float(np.median(positive))
    return 1.0


def build_proximity_graph(points: PointSet, k: int, sigma: Optional[float] = None) -> ProximityGraph:
    """
    和集合で対称化した kNN 近接グラフを構築

    辺の重みはガウスカーネル exp(-d^2 / 2σ^2)。近傍の同距離はノード番号の小さい方を優先する。

    Raises:
        InvalidKError: k < 1 または k >= n
    """
    n = len(points)
    _check_k(k, n)
    if sigma is not None and sigma <= 0:
        raise ValueError(f"sigma は正の値で指定してください: {sigma}")

    condensed = pdist(points.vectors, "euclidean")
    masked = squareform(condensed)
    np.fill_diagonal(masked, np.inf)
    neighbors = np.argsort(masked, axis=1, kind="stable")[:, :k]

    rows = np.repeat(np.arange(n), k)
    cols = neighbors.ravel()
    knn_d = masked[rows, cols]

    if sigma is None:
        sigma = default_sigma(knn_d, condensed)

    weights = np.clip(np.exp(-(knn_d ** 2) / (2.0 * sigma ** 2)), _MIN_WEIGHT, 1.0)
    adjacency = coo_matrix((weights, (rows, cols)), shape=(n, n)).tocsr()
    adjacency = adjacency.maximum(adjacency.T).tocsr()

    logger.debug(f"近接グラフ: n={n}, k={k}, sigma={sigma:.6g}, 辺={adjacency.nnz // 2}")
    return ProximityGraph(n, adjacency, k, float(sigma), False)


def pagerank(graph: ProximityGraph, damping: float = DEFAULT_DAMPING, tol: float = DEFAULT_TOL,
             max_iter: int = DEFAULT_MAX_ITER, personalization: Optional[np.ndarray] = None,
             strict: bool = False) -> ScoreVector:
    """
    重み付き隣接行列の行正規化によるべき乗法 PageRank

    出次数0のノードの質量は一様に再分配する。L1 変化量が tol 未満で収束とみなす。

    Args:
        personalization: テレポート分布（省略時は一様）
        strict: True の場合、未収束で NotConvergedError を送出

    Returns:
        ScoreVector（未収束時は最終反復値と converged=False）
    """
    if not 0 < damping < 1:
        raise ValueError(f"damping は (0,1) で指定してください: {damping}")
    if tol <= 0 or max_iter < 1:
        raise ValueError("tol > 0, max_iter >= 1 で指定してください")

    n = graph.n
    if n == 0:
        return ScoreVector(np.zeros(0), 0, True)

    weights = graph.weights.tocsr().astype(float)
    out_weight = np.asarray(weights.sum(axis=1)).ravel()
    dangling = out_weight <= 0
    inverse = np.divide(1.0, out_weight, out=np.zeros_like(out_weight), where=~dangling)
    transition_t = (diags(inverse) @ weights).T.tocsr()

    if personalization is None:
        teleport = np.full(n, 1.0 / n)
    else:
        teleport = np.asarray(personalization, dtype=float)
        if teleport.shape != (n,) or (teleport < 0).any() or teleport.sum() <= 0:
            raise ValueError("personalization はノード数と同じ長さの非負ベクトルで指定してください")
        teleport = teleport / teleport.sum()

    scores = np.full(n, 1.0 / n)
    for iteration in range(1, max_iter + 1):
        updated = damping * (transition_t @ scores + scores[dangling].sum() / n) + (1.0 - damping) * teleport
        updated /= updated.sum()
        change = np.abs(updated - scores).sum()
        scores = updated
        if change < tol:
            return ScoreVector(scores, iteration, True)

    result = ScoreVector(scores, max_iter, False)
    logger.warning(f"⚠️ PageRankが{max_iter}回で収束しませんでした (変化量 {change:.3e})")
    if strict:
        raise NotConvergedError(f"PageRank did not converge in {max_iter} iterations", scores=result)
    return result


def anomaly_ranking(scores: ScoreVector, labels: Sequence[str]) -> List[Tuple[str, float]]:
    """定常確率の昇順（低いほど異常）、同値はラベル昇順"""
    if len(labels) != len(scores.scores):
        raise ValueError("ラベル数とスコア数が一致しません")
    return sorted(
        ((label, float(score)) for label, score in zip(labels, scores.scores)),
        key=lambda item: (item[1], item[0]),
    )


def knn_distance_outliers(points: PointSet, k: int, n_out: int) -> List[Tuple[str, float]]:
    """
    k 番目近傍距離の降順で上位 n_out 点を外れ値とする（全ペア距離による総当たり）

    Raises:
        InvalidKError: k < 1 または k >= n
    """
    n = len(points)
    _check_k(k, n)
    if not 0 <= n_out <= n:
        raise ValueError(f"n_out は 0..{n} で指定してください: {n_out}")

    dist = _distances(points)
    np.fill_diagonal(dist, np.inf)
    kth = np.sort(dist, axis=1)[:, k - 1]
    ranked = sorted(
        ((label, float(d)) for label, d in zip(points.labels, kth)),
        key=lambda item: (-item[1], item[0]),
    )
    return ranked[:n_out]


def run_baseline(profiles: Dict[str, UserProfile], wat: TrainedWAT, k: int = 3,
                 sigma: Optional[float] = None, dim: int = 0, damping: float = DEFAULT_DAMPING,
                 tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                 top_m: int = 10) -> BaselineResult:
    """特徴ベクトル化 → 近接グラフ → PageRank → kNN 距離検算 を一括実行"""
    points = build_point_set(profiles, wat, dim)
    graph = build_proximity_graph(points, k, sigma)
    scores = pagerank(graph, damping, tol, max_iter)
    n_out = min(max(top_m, 0), len(points))
    result = BaselineResult(
        points=points,
        graph=graph,
        scores=scores,
        pagerank_ranking=anomaly_ranking(scores, points.labels),
        knn_ranking=knn_distance_outliers(points, k, n_out),
    )
    logger.info(f"📊 ベースライン完了: {len(points)}ユーザー, 反復 {scores.iterations}回")
    return result

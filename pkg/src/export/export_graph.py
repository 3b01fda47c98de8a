#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
近接グラフ エクスポートユーティリティ
辺リスト・ノードラベル対応表・PageRank スコアをファイルに出力
"""

import logging
import os
from typing import List, Sequence, Tuple

import pandas as pd

from graph_baseline import ProximityGraph


class GraphExporter:
    """近接グラフ / スコアのエクスポートユーティリティ"""

    def __init__(self, output_dir: str = "output"):
        """
        Args:
            output_dir: 出力ディレクトリ
        """
        self.output_dir = output_dir
        self.logger = logging.getLogger(__name__)

        os.makedirs(output_dir, exist_ok=True)

    def write_edge_list(self, graph: ProximityGraph, output_filename: str = "graph_edges.tsv") -> str:
        """
        辺リストを `src<TAB>dst<TAB>weight` 形式で出力

        Returns:
            出力ファイルパス
        """
        output_path = os.path.join(self.output_dir, output_filename)
        edges = graph.edges()
        with open(output_path, "w", encoding="utf-8", newline="\n") as f:
            for src, dst, weight in edges:
                f.write(f"{src}\t{dst}\t{weight:.12g}\n")

        self.logger.info(f"✅ 辺リスト出力: {output_path} ({len(edges)}辺)")
        return output_path

    def write_label_map(self, labels: Sequence[str], output_filename: str = "graph_labels.tsv") -> str:
        """ノード番号とユーザーの対応表 `id<TAB>user`"""
        output_path = os.path.join(self.output_dir, output_filename)
        with open(output_path, "w", encoding="utf-8", newline="\n") as f:
            for node_id, label in enumerate(labels):
                f.write(f"{node_id}\t{label}\n")
        return output_path

    def write_scores(self, ranking: List[Tuple[str, float]], output_filename: str = "baseline_scores.csv") -> str:
        """
        異常度ランキングを CSV (user,score,rank) で出力

        Args:
            ranking: anomaly_ranking の結果（最も異常なユーザーが先頭）
        """
        output_path = os.path.join(self.output_dir, output_filename)
        frame = pd.DataFrame(
            [{"user": user, "score": score, "rank": rank} for rank, (user, score) in enumerate(ranking, 1)],
            columns=["user", "score", "rank"],
        )
        with open(output_path, "w", encoding="utf-8", newline="") as f:
            frame.to_csv(f, index=False, float_format="%.12g")

        self.logger.info(f"✅ スコア出力: {output_path} ({len(frame)}ユーザー)")
        return output_path

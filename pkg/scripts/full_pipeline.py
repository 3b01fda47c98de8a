#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
WAT DDoS検知システム - 完全パイプライン実行スクリプト

フラッド攻撃シナリオの一気通貫実行:
1. 合成ログ生成（通常ユーザー + 攻撃者）
2. 通常ログで WAT 学習 (trained.dat)
3. 攻撃混入ログで異常検知 (alerts.txt / alerts.csv / am_test.dat)
4. 近接グラフ + PageRank ベースライン
5. 実行レポート生成 (pipeline_report.json)

使用方法:
    python scripts/full_pipeline.py [--output-dir DIR] [--seed N] [--flood-count N] [--verbose]
"""

import argparse
import json
import logging
import sys
import time
from datetime import datetime
from pathlib import Path
from typing import Optional

# プロジェクトルートを追加
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root / "src" / "core"))
sys.path.insert(0, str(project_root / "src" / "export"))

try:
    from detector import ThresholdConfig, detect, format_alert, Direction
    from export_graph import GraphExporter
    from export_report import AlertReportExporter
    from graph_baseline import run_baseline
    from log_model import TimeWindow, read_access_log, window_slice, write_access_log
    from wat import build_document_matrix, build_user_profiles, save_wat, train_wat
    from workload import (
        DEFAULT_ATTACKER_IP, SimConfig, generate_site, merge_logs,
        pick_deep_target, simulate_flood, simulate_normal,
    )
except ImportError as e:
    print(f"❌ モジュールインポートエラー: {e}")
    print("PYTHONPATH を設定するか、プロジェクトルートから実行してください")
    sys.exit(1)


class FullPipelineExecutor:
    """完全パイプライン実行器"""

    def __init__(self, output_dir: str = "data/output", seed: int = 42, users: int = 50,
                 pages: int = 50, branching: int = 4, session_len: int = 30,
                 flood_count: int = 191, attacker_ip: str = DEFAULT_ATTACKER_IP,
                 threshold: Optional[ThresholdConfig] = None, knn_k: int = 3):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.seed = seed
        self.users = users
        self.pages = pages
        self.branching = branching
        self.session_len = session_len
        self.flood_count = flood_count
        self.attacker_ip = attacker_ip
        self.threshold = threshold or ThresholdConfig()
        self.knn_k = knn_k
        self.start_time = datetime.now()

        self.logger = logging.getLogger(__name__)
        self.logger.info(f"🚀 完全パイプライン実行開始: {self.start_time}")
        self.logger.info(f"   出力先: {self.output_dir}")
        self.logger.info(f"   シード: {seed}, ユーザー: {users}, 攻撃: {flood_count}件")

        self.paths = {
            'train_log': self.output_dir / "train.log",
            'test_log': self.output_dir / "test.log",
            'site': self.output_dir / "site.tsv",
            'wat': self.output_dir / "trained.dat",
            'matrix': self.output_dir / "am_test.dat",
            'report': self.output_dir / "alerts.txt",
            'alerts_csv': self.output_dir / "alerts.csv",
            'scores': self.output_dir / "baseline_scores.csv",
            'pipeline_report': self.output_dir / "pipeline_report.json",
        }
        self.wat = None
        self.alerts = []
        self.stats = {
            'phases_completed': [],
            'phase_seconds': {},
            'train_records': 0,
            'test_records': 0,
            'flood_target': None,
            'alerts': 0,
            'flagged_users': [],
            'attacker_detected': False,
            'attack_line': None,
            'false_positives': 0,
            'pagerank_top': None,
            'knn_top': None,
            'export_files': [],
            'errors': []
        }

    def _record_error(self, phase: str, error: Exception):
        error_msg = f"❌ {phase}エラー: {type(error).__name__}: {error}"
        self.logger.error(error_msg)
        self.stats['errors'].append(error_msg)

    def phase1_simulate(self) -> bool:
        """フェーズ1: 合成ログ生成"""
        self.logger.info("🌐 フェーズ1: 合成ログ生成開始")

        try:
            site = generate_site(self.pages, self.branching, self.seed)
            cfg = SimConfig(seed=self.seed, num_users=self.users, session_len=self.session_len)
            normal = simulate_normal(site, cfg)
            logs = [normal]
            if self.flood_count > 0:
                target = pick_deep_target(site, normal)
                self.stats['flood_target'] = target
                logs.append(simulate_flood(site, self.attacker_ip, target, self.flood_count, cfg))
            merged = merge_logs(logs)

            write_access_log(normal, self.paths['train_log'])
            write_access_log(merged, self.paths['test_log'])
            with open(self.paths['site'], 'w', encoding='utf-8', newline='\n') as f:
                f.write("\n".join(site.to_lines()) + "\n")

            self.stats['export_files'] += [str(self.paths[k]) for k in ('train_log', 'test_log', 'site')]
            self.logger.info(f"📊 通常ログ {len(normal)}件, テストログ {len(merged)}件")
            self.stats['phases_completed'].append('simulate')
            return True

        except Exception as e:
            self._record_error("フェーズ1", e)
            return False

    def phase2_train(self) -> bool:
        """フェーズ2: WAT学習"""
        self.logger.info("📚 フェーズ2: WAT学習開始")

        try:
            log = read_access_log(self.paths['train_log'])
            window = TimeWindow.covering(log)
            self.wat = train_wat(build_user_profiles(log), len(log), window)
            save_wat(self.wat, self.paths['wat'])

            self.stats['train_records'] = len(log)
            self.stats['export_files'].append(str(self.paths['wat']))
            self.stats['phases_completed'].append('train')
            return True

        except Exception as e:
            self._record_error("フェーズ2", e)
            return False

    def phase3_detect(self) -> bool:
        """フェーズ3: 異常検知"""
        self.logger.info("🔍 フェーズ3: 異常検知開始")

        try:
            log = read_access_log(self.paths['test_log'])
            window = TimeWindow.covering(log)
            matrix = build_document_matrix(log, window)
            self.alerts = detect(matrix, self.wat, self.threshold)

            exporter = AlertReportExporter(self.output_dir)
            self.stats['export_files'] += [
                exporter.write_alert_report(self.alerts, window, self.paths['report'].name),
                exporter.write_alerts_csv(self.alerts, self.paths['alerts_csv'].name),
                exporter.write_document_matrix(matrix, self.paths['matrix'].name),
            ]

            flagged = sorted({a.user for a in self.alerts})
            attack = [a for a in self.alerts if a.user == self.attacker_ip and a.direction == Direction.OVER]
            self.stats['test_records'] = len(log)
            self.stats['alerts'] = len(self.alerts)
            self.stats['flagged_users'] = flagged
            self.stats['attacker_detected'] = bool(attack)
            self.stats['attack_line'] = format_alert(attack[0]) if attack else None
            self.stats['false_positives'] = len([u for u in flagged if u != self.attacker_ip])

            self.logger.info(f"📊 警告 {len(self.alerts)}件, 異常ユーザー {len(flagged)}名")
            self.stats['phases_completed'].append('detect')
            return True

        except Exception as e:
            self._record_error("フェーズ3", e)
            return False

    def phase4_baseline(self) -> bool:
        """フェーズ4: 近接グラフ + PageRank ベースライン"""
        self.logger.info("🕸️ フェーズ4: ベースライン開始")

        try:
            log = read_access_log(self.paths['test_log'])
            profiles = build_user_profiles(window_slice(log, TimeWindow.covering(log)))
            result = run_baseline(profiles, self.wat, k=self.knn_k, top_m=10)

            exporter = GraphExporter(str(self.output_dir))
            self.stats['export_files'].append(exporter.write_scores(result.pagerank_ranking, self.paths['scores'].name))
            self.stats['pagerank_top'] = result.pagerank_ranking[0][0] if result.pagerank_ranking else None
            self.stats['knn_top'] = result.knn_ranking[0][0] if result.knn_ranking else None

            self.stats['phases_completed'].append('baseline')
            return True

        except Exception as e:
            self._record_error("フェーズ4", e)
            return False

    def phase5_generate_report(self) -> bool:
        """フェーズ5: 実行レポート生成"""
        self.logger.info("📋 フェーズ5: レポート生成開始")

        try:
            end_time = datetime.now()
            duration = end_time - self.start_time

            report = {
                "execution_summary": {
                    "start_time": self.start_time.isoformat(),
                    "end_time": end_time.isoformat(),
                    "duration_seconds": duration.total_seconds(),
                    "success": len(self.stats['errors']) == 0
                },
                "scenario": {
                    "seed": self.seed,
                    "users": self.users,
                    "pages": self.pages,
                    "session_len": self.session_len,
                    "attacker_ip": self.attacker_ip,
                    "flood_count": self.flood_count,
                    "flood_target": self.stats['flood_target'],
                    "threshold": {
                        "theta_abs": self.threshold.theta_abs,
                        "k_sigma": self.threshold.k_sigma,
                        "min_requests": self.threshold.min_requests,
                        "underflow_floor": self.threshold.underflow_floor,
                        "expected_scale": self.threshold.expected_scale,
                    },
                },
                "pipeline_stats": {
                    "phases_completed": self.stats['phases_completed'],
                    "phase_seconds": self.stats['phase_seconds'],
                    "train_records": self.stats['train_records'],
                    "test_records": self.stats['test_records'],
                    "alerts": self.stats['alerts'],
                    "flagged_users": self.stats['flagged_users'],
                    "attacker_detected": self.stats['attacker_detected'],
                    "attack_line": self.stats['attack_line'],
                    "false_positives": self.stats['false_positives'],
                    "pagerank_top": self.stats['pagerank_top'],
                    "knn_top": self.stats['knn_top'],
                },
                "export_summary": {
                    "total_files": len(self.stats['export_files']),
                    "files": [str(f) for f in self.stats['export_files']]
                },
                "errors": self.stats['errors']
            }

            with open(self.paths['pipeline_report'], 'w', encoding='utf-8') as f:
                json.dump(report, f, ensure_ascii=False, indent=2)

            self.logger.info(f"✅ レポート生成完了: {self.paths['pipeline_report']}")

            print(f"\n🎉 完全パイプライン実行完了！")
            print(f"⏱️  実行時間: {duration}")
            print(f"📚 学習ログ: {self.stats['train_records']}件 / テストログ: {self.stats['test_records']}件")
            print(f"⚠️  警告: {self.stats['alerts']}件, 異常ユーザー: {len(self.stats['flagged_users'])}名")
            if self.stats['attack_line']:
                print(f"💥 {self.stats['attack_line']}")
            print(f"🕸️  PageRank最下位: {self.stats['pagerank_top']} / kNN距離最大: {self.stats['knn_top']}")
            print(f"📋 詳細レポート: {self.paths['pipeline_report']}")

            self.stats['phases_completed'].append('generate_report')
            return True

        except Exception as e:
            self._record_error("フェーズ5", e)
            return False

    def execute(self) -> bool:
        """完全パイプライン実行"""
        phases = [
            ("フェーズ1: 合成ログ生成", self.phase1_simulate),
            ("フェーズ2: WAT学習", self.phase2_train),
            ("フェーズ3: 異常検知", self.phase3_detect),
            ("フェーズ4: ベースライン", self.phase4_baseline),
            ("フェーズ5: レポート生成", self.phase5_generate_report)
        ]

        for phase_name, phase_func in phases:
            self.logger.info(f"開始: {phase_name}")

            started = time.perf_counter()
            success = phase_func()
            self.stats['phase_seconds'][phase_name] = round(time.perf_counter() - started, 6)
            if not success:
                self.logger.error(f"❌ {phase_name} 失敗 - パイプライン中断")
                return False

            self.logger.info(f"✅ {phase_name} 完了")

        return True


def main(argv=None):
    """メイン関数"""
    parser = argparse.ArgumentParser(
        description="WAT DDoS検知システム - 完全パイプライン実行",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
実行例:
  # 基本実行（通常50ユーザー + 攻撃191件）
  python scripts/full_pipeline.py

  # 出力先・シード指定
  python scripts/full_pipeline.py --output-dir /tmp/wat_run --seed 7

処理内容:
  1. 合成ログ生成（train.log / test.log / site.tsv）
  2. WAT学習（trained.dat）
  3. 異常検知（alerts.txt / alerts.csv / am_test.dat）
  4. 近接グラフ + PageRank ベースライン（baseline_scores.csv）
  5. 実行レポート生成（pipeline_report.json）
        """
    )

    parser.add_argument('--output-dir', default='data/output', help='出力ディレクトリ (デフォルト: data/output)')
    parser.add_argument('--seed', type=int, default=42, help='乱数シード (デフォルト: 42)')
    parser.add_argument('--users', type=int, default=50, help='通常ユーザー数 (デフォルト: 50)')
    parser.add_argument('--flood-count', type=int, default=191, help='攻撃リクエスト数 (デフォルト: 191)')
    parser.add_argument('--verbose', '-v', action='store_true', help='詳細ログ出力')

    args = parser.parse_args(argv)

    Path(args.output_dir).mkdir(parents=True, exist_ok=True)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=[
            logging.StreamHandler(),
            logging.FileHandler(Path(args.output_dir) / f"full_pipeline_{int(time.time())}.log", encoding='utf-8')
        ]
    )

    try:
        executor = FullPipelineExecutor(
            output_dir=args.output_dir,
            seed=args.seed,
            users=args.users,
            flood_count=args.flood_count
        )
        success = executor.execute()
        return 0 if success else 1

    except KeyboardInterrupt:
        print("\n⚠️ 処理がユーザーによって中断されました")
        return 130
    except Exception as e:
        print(f"❌ 予期しないエラー: {e}")
        if args.verbose:
            import traceback
            traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())

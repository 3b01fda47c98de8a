#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
WAT DDoS検知システム メインCLI
学習 (train) → 判定 (detect) → ベースライン比較 (baseline) / 合成ログ生成 (simulate) /
スケーリング計測 (bench) / レポート集計 (report)

終了コード: 0 正常・異常なし / 1 異常検知 / 2 引数エラー / 3 データ・入出力エラー / 130 中断
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

# プロジェクトルートを追加
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root / "src" / "core"))
sys.path.insert(0, str(project_root / "src" / "export"))

try:
    from pydantic import ValidationError

    from bench import growth_exponents, run_bench
    from config_utils import load_environment, load_settings
    from detector import ThresholdConfig, detect, format_alert, rank_shift
    from export_graph import GraphExporter
    from export_report import AlertReportExporter, read_alerts_csv, user_summary_table
    from graph_baseline import run_baseline
    from log_model import (
        AccessLog, TimeWindow, normalize_uri, parse_iso_instant,
        read_access_log, referrer_edges, window_slice, write_access_log,
    )
    from wat import build_document_matrix, build_user_profiles, load_wat, save_wat, train_wat
    from wat_errors import (
        EmptyTrainingError, FormatVersionMismatchError, InvalidKError,
        LogIOError, UnknownTargetError, WATFormatError,
    )
    from workload import (
        DEFAULT_ATTACKER_IP, SimConfig, generate_site, merge_logs,
        pick_deep_target, simulate_flood, simulate_normal,
    )
except ImportError as e:
    print(f"❌ モジュールインポートエラー: {e}")
    print("必要なモジュールをインストールしてください: pip install -r requirements.txt")
    sys.exit(1)


EXIT_OK = 0
EXIT_ANOMALY = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_INTERRUPTED = 130

# データ・入出力エラー（終了コード3）。ValueError 派生を含むため引数エラーより先に判定する
DATA_ERRORS = (
    EmptyTrainingError, FormatVersionMismatchError, WATFormatError,
    LogIOError, UnicodeDecodeError, OSError,
)
USAGE_ERRORS = (ValidationError, InvalidKError, UnknownTargetError, ValueError)

SETTING_FLAGS = [
    "theta", "k_sigma", "min_requests", "underflow_floor", "expected_scale",
    "log_format", "damping", "knn_k", "top_m", "seed",
    "wat_path", "matrix_path", "report_path", "alerts_csv_path",
]


class UsageError(ValueError):
    """引数の組み合わせが不正"""


def setup_logging(verbose: bool = False, quiet: bool = False, log_file: Optional[str] = None):
    """ログ設定"""
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    handlers = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file, encoding="utf-8"))

    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=handlers
    )
    logging.getLogger().setLevel(level)


def resolve_window(args, log: AccessLog) -> Optional[TimeWindow]:
    """時間窓フラグを解決（指定なしはログ全体、空ログでは None）"""
    start = getattr(args, "window_start", None)
    end = getattr(args, "window_end", None)
    last = getattr(args, "window_last", None)

    if last is not None and (start or end):
        raise UsageError("--window-last と --window-start/--window-end は同時に指定できません")
    if bool(start) != bool(end):
        raise UsageError("--window-start と --window-end は両方指定してください")

    if start and end:
        return TimeWindow(parse_iso_instant(start), parse_iso_instant(end))
    if not log.records:
        return None
    if last is not None:
        return TimeWindow.last(log, last)
    return TimeWindow.covering(log)


def threshold_config(settings: Dict[str, Any]) -> ThresholdConfig:
    return ThresholdConfig(
        theta_abs=settings["theta"],
        k_sigma=settings["k_sigma"],
        min_requests=settings["min_requests"],
        underflow_floor=settings["underflow_floor"],
        expected_scale=settings["expected_scale"],
    )


def cmd_train(args):
    """学習コマンド: 学習ログから trained.dat を作成"""
    settings = args.settings
    print("🚀 WAT学習を開始します...")

    log = read_access_log(args.log, settings["log_format"])
    window = resolve_window(args, log)
    if window is None:
        raise EmptyTrainingError(f"学習ログに有効なレコードがありません: {args.log}")

    sliced = window_slice(log, window)
    profiles = build_user_profiles(sliced)
    wat = train_wat(profiles, len(sliced), window)
    out_path = save_wat(wat, settings["wat_path"])

    print(f"✅ 学習完了: {out_path}")
    print(f"   ユーザー数: {wat.num_users}")
    print(f"   URI数: {len(wat)}")
    print(f"   総ログ数: {wat.total_logs}")
    print(f"   スキップ行: {log.skipped}")
    print(f"   リファラー遷移: {len(referrer_edges(sliced))}種類")
    print(f"   時間窓: {window.to_text()}")
    return EXIT_OK


def cmd_detect(args):
    """判定コマンド: テストログを trained.dat と比較"""
    settings = args.settings
    cfg = threshold_config(settings)
    print("🔍 異常検知を開始します...")

    wat = load_wat(settings["wat_path"])
    log = read_access_log(args.log, settings["log_format"])
    window = resolve_window(args, log) or wat.window

    matrix = build_document_matrix(log, window)
    alerts = detect(matrix, wat, cfg)

    exporter = AlertReportExporter(".")
    report_path = exporter.write_alert_report(alerts, window, settings["report_path"])
    csv_path = exporter.write_alerts_csv(alerts, settings["alerts_csv_path"])
    matrix_path = exporter.write_document_matrix(matrix, settings["matrix_path"])

    flagged = sorted({a.user for a in alerts})
    print(f"📊 判定結果: {len(matrix.rows)}ユーザー, {matrix.total_requests}リクエスト, スキップ行 {log.skipped}")
    for alert in alerts:
        print(f"   {format_alert(alert)}")

    if args.rank_top:
        for user in flagged:
            shift = rank_shift(matrix.rows[user], wat, args.rank_top)
            print(f"   📈 rank_shift ip:{user} top{args.rank_top}: {shift:g}")

    print(f"📋 レポート: {report_path}")
    print(f"📋 警告CSV: {csv_path}")
    print(f"📋 Document Matrix: {matrix_path}")

    if alerts:
        print(f"⚠️ 異常ユーザー: {len(flagged)}名 ({len(alerts)}件)")
        return EXIT_ANOMALY
    print("✅ 異常は検知されませんでした")
    return EXIT_OK


def cmd_baseline(args):
    """ベースラインコマンド: 近接グラフ + PageRank と kNN 距離ランキングを比較表示"""
    settings = args.settings
    k = settings["knn_k"]
    top_m = settings["top_m"]
    sigma = None if args.sigma == "auto" else float(args.sigma)

    wat = load_wat(settings["wat_path"])
    log = read_access_log(args.log, settings["log_format"])
    window = resolve_window(args, log) or wat.window
    profiles = build_user_profiles(window_slice(log, window))

    print(f"🕸️ 近接グラフベースライン: {len(profiles)}ユーザー, k={k}")
    result = run_baseline(profiles, wat, k=k, sigma=sigma, dim=args.dim,
                          damping=settings["damping"], top_m=top_m)

    print(f"   sigma={result.graph.sigma:.6g}, PageRank反復={result.scores.iterations}, "
          f"収束={'はい' if result.scores.converged else 'いいえ'}")
    print(f"{'順位':<4} {'PageRank(低い順)':<32} {'kNN距離(k=' + str(k) + ')':<32}")
    for i in range(min(top_m, len(result.pagerank_ranking))):
        pr_user, pr_score = result.pagerank_ranking[i]
        left = f"{pr_user} {pr_score:.6e}"
        right = ""
        if i < len(result.knn_ranking):
            knn_user, knn_dist = result.knn_ranking[i]
            right = f"{knn_user} {knn_dist:.6f}"
        print(f"{i + 1:<4} {left:<32} {right:<32}")

    if args.dump_dir:
        exporter = GraphExporter(args.dump_dir)
        exporter.write_edge_list(result.graph)
        exporter.write_label_map(result.points.labels)
        exporter.write_scores(result.pagerank_ranking)
        print(f"📁 グラフ出力: {args.dump_dir}")
    return EXIT_OK


def cmd_simulate(args):
    """合成ログ生成コマンド"""
    settings = args.settings
    if args.flood_count < 0:
        raise UsageError("--flood-count は0以上で指定してください")

    site = generate_site(args.pages, args.branching, settings["seed"])
    cfg_fields = dict(seed=settings["seed"], num_users=args.users,
                      session_len=args.session_len, duration=args.duration)
    if args.start:
        cfg_fields["start"] = parse_iso_instant(args.start)
    cfg = SimConfig(**cfg_fields)

    normal = simulate_normal(site, cfg)
    logs = [normal]
    if args.flood_count > 0:
        if args.flood_target == "auto":
            target = pick_deep_target(site, normal)
        else:
            target = normalize_uri(args.flood_target)
        logs.append(simulate_flood(site, args.flood_ip, target, args.flood_count, cfg))

    merged = merge_logs(logs)
    write_access_log(merged, args.out)
    if args.normal_out:
        write_access_log(normal, args.normal_out)
    if args.site_out:
        with open(args.site_out, "w", encoding="utf-8", newline="\n") as f:
            f.write("\n".join(site.to_lines()) + "\n")

    print(f"✅ 合成ログ出力: {args.out} ({len(merged)}件)")
    print(f"   通常ユーザー: {cfg.num_users}名, {len(normal)}件")
    if args.flood_count > 0:
        print(f"   攻撃: {args.flood_ip} → {logs[1].records[0].uri} ×{args.flood_count}")
    return EXIT_OK


def cmd_bench(args):
    """スケーリング計測コマンド"""
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--sizes を解釈できません: {args.sizes}")
    if len(sizes) < 2 or min(sizes) < 1:
        raise UsageError("--sizes には正の整数を2つ以上指定してください")

    print(f"⏱️ スケーリング計測: sizes={sizes}")
    table = run_bench(sizes, args.settings["seed"], args.session_len)
    print(table.to_string(index=False))

    exponents = growth_exponents(table)
    print("📊 増加指数 (log-log 回帰):")
    for pipeline, exponent in exponents.items():
        print(f"   {pipeline}: {exponent:.3f}")

    if args.out:
        table.to_csv(args.out, index=False, float_format="%.6g")
        print(f"📋 計測結果: {args.out}")
    return EXIT_OK


def cmd_report(args):
    """レポート集計コマンド: 警告CSVからユーザー別集計を表示"""
    alerts_path = args.settings["alerts_csv_path"]
    frame = read_alerts_csv(alerts_path)
    table = user_summary_table(frame)

    print(f"📊 警告集計: {alerts_path}")
    print(f"   警告数: {len(frame)}件, 対象ユーザー: {len(table)}名")
    if not table.empty:
        print(table.to_string(index=False, float_format=lambda v: f"{v:.6f}"))

    if args.summary_out:
        path = AlertReportExporter(".").export_summary_stats(frame, args.summary_out)
        print(f"📋 統計情報出力: {path}")
    return EXIT_ANOMALY if len(frame) else EXIT_OK


def add_window_flags(parser: argparse.ArgumentParser):
    parser.add_argument('--window-start', help='時間窓の開始 (ISO-8601)')
    parser.add_argument('--window-end', help='時間窓の終了 (ISO-8601, 含まない)')
    parser.add_argument('--window-last', type=float, help='ログ末尾から遡る秒数')


def build_parser() -> argparse.ArgumentParser:
    """引数パーサー構築"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='設定ファイル (key=value)')
    common.add_argument('--log-format', dest='log_format', choices=['common', 'combined'],
                        help='アクセスログ形式 (デフォルト: combined)')
    common.add_argument('--quiet', '-q', action='store_true', help='警告以上のみ出力')
    common.add_argument('--verbose', '-v', action='store_true', help='詳細ログ出力')
    common.add_argument('--log-file', help='ログファイル出力先')

    parser = argparse.ArgumentParser(
        description='WAT (Web Access Table) によるアプリケーション層DDoS検知',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
使用例:
  # 合成ログ生成（通常50ユーザー + 攻撃191件）
  python wat_cli.py simulate --out access.log --normal-out normal.log --flood-count 191

  # 学習（trained.dat 作成）
  python wat_cli.py train normal.log --out trained.dat

  # 判定（alerts.txt / alerts.csv / am_test.dat 出力）
  python wat_cli.py detect access.log --wat trained.dat --theta 0.05

  # 近接グラフ + PageRank ベースライン
  python wat_cli.py baseline access.log --wat trained.dat --k 3

環境変数:
  WAT_THETA, WAT_K_SIGMA, WAT_MIN_REQUESTS など（設定ファイル・引数が優先）
        """
    )

    subparsers = parser.add_subparsers(dest='command', help='コマンド')

    train_parser = subparsers.add_parser('train', parents=[common], help='学習 (trained.dat 作成)')
    train_parser.add_argument('log', help='学習用アクセスログ')
    train_parser.add_argument('--out', dest='wat_path', help='出力先 (デフォルト: trained.dat)')
    add_window_flags(train_parser)
    train_parser.set_defaults(func=cmd_train)

    detect_parser = subparsers.add_parser('detect', parents=[common], help='異常検知')
    detect_parser.add_argument('log', help='テスト用アクセスログ')
    detect_parser.add_argument('--wat', dest='wat_path', help='学習済みWAT (デフォルト: trained.dat)')
    add_window_flags(detect_parser)
    detect_parser.add_argument('--theta', type=float, help='頻度差の絶対閾値 (デフォルト: 0.05)')
    detect_parser.add_argument('--k-sigma', dest='k_sigma', type=float, help='標準偏差の倍率 (デフォルト: 3.0)')
    detect_parser.add_argument('--min-requests', dest='min_requests', type=int,
                               help='判定に必要な最小リクエスト数 (デフォルト: 10)')
    detect_parser.add_argument('--underflow-floor', dest='underflow_floor', type=float,
                               help='アンダーフロー判定の期待頻度下限 (デフォルト: 0.10, 1超で無効)')
    detect_parser.add_argument('--expected-scale', dest='expected_scale', choices=['user', 'log'],
                               help='期待頻度の尺度 (デフォルト: user)')
    detect_parser.add_argument('--report', dest='report_path', help='警告レポート (デフォルト: alerts.txt)')
    detect_parser.add_argument('--csv', dest='alerts_csv_path', help='警告CSV (デフォルト: alerts.csv)')
    detect_parser.add_argument('--matrix', dest='matrix_path', help='Document Matrix (デフォルト: am_test.dat)')
    detect_parser.add_argument('--rank-top', type=int, default=0, help='異常ユーザーの rank_shift を表示')
    detect_parser.set_defaults(func=cmd_detect)

    baseline_parser = subparsers.add_parser('baseline', parents=[common], help='近接グラフ + PageRank ベースライン')
    baseline_parser.add_argument('log', help='テスト用アクセスログ')
    baseline_parser.add_argument('--wat', dest='wat_path', help='学習済みWAT (デフォルト: trained.dat)')
    add_window_flags(baseline_parser)
    baseline_parser.add_argument('--k', dest='knn_k', type=int, help='近傍数 (デフォルト: 3)')
    baseline_parser.add_argument('--sigma', default='auto', help='カーネル幅 (auto または正の実数)')
    baseline_parser.add_argument('--dim', type=int, default=0, help='特徴次元 (0で全URI)')
    baseline_parser.add_argument('--top', dest='top_m', type=int, help='表示件数 (デフォルト: 10)')
    baseline_parser.add_argument('--damping', type=float, help='PageRank減衰率 (デフォルト: 0.85)')
    baseline_parser.add_argument('--dump-dir', help='グラフ・スコアの出力ディレクトリ')
    baseline_parser.set_defaults(func=cmd_baseline)

    simulate_parser = subparsers.add_parser('simulate', parents=[common], help='合成アクセスログ生成')
    simulate_parser.add_argument('--out', required=True, help='出力ログ（通常 + 攻撃）')
    simulate_parser.add_argument('--normal-out', help='通常トラフィックのみのログ')
    simulate_parser.add_argument('--site-out', help='サイトグラフ出力')
    simulate_parser.add_argument('--pages', type=int, default=50, help='ページ数 (デフォルト: 50)')
    simulate_parser.add_argument('--branching', type=int, default=4, help='最大リンク数 (デフォルト: 4)')
    simulate_parser.add_argument('--users', type=int, default=50, help='通常ユーザー数 (デフォルト: 50)')
    simulate_parser.add_argument('--session-len', type=int, default=30, help='ユーザーあたりのリクエスト数')
    simulate_parser.add_argument('--seed', type=int, help='乱数シード (デフォルト: 42)')
    simulate_parser.add_argument('--start', help='開始時刻 (ISO-8601)')
    simulate_parser.add_argument('--duration', type=float, default=3600.0, help='期間（秒）')
    simulate_parser.add_argument('--flood-ip', default=DEFAULT_ATTACKER_IP, help='攻撃者IP')
    simulate_parser.add_argument('--flood-target', default='auto', help='攻撃対象URI (auto: 最深の訪問ページ)')
    simulate_parser.add_argument('--flood-count', type=int, default=0, help='攻撃リクエスト数')
    simulate_parser.set_defaults(func=cmd_simulate)

    bench_parser = subparsers.add_parser('bench', parents=[common], help='スケーリング計測')
    bench_parser.add_argument('--sizes', default='1000,2000,4000,8000', help='レコード数（カンマ区切り）')
    bench_parser.add_argument('--seed', type=int, help='乱数シード (デフォルト: 42)')
    bench_parser.add_argument('--session-len', type=int, default=2, help='ユーザーあたりのリクエスト数 (デフォルト: 2)')
    bench_parser.add_argument('--out', help='計測結果CSV')
    bench_parser.set_defaults(func=cmd_bench)

    report_parser = subparsers.add_parser('report', parents=[common], help='警告CSVの集計')
    report_parser.add_argument('--alerts', dest='alerts_csv_path', help='警告CSV (デフォルト: alerts.csv)')
    report_parser.add_argument('--summary-out', help='統計JSON出力先')
    report_parser.set_defaults(func=cmd_report)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """メインCLI関数"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    if not args.command:
        parser.print_help()
        return EXIT_USAGE

    setup_logging(args.verbose, args.quiet, args.log_file)
    load_environment()

    try:
        overrides = {name: getattr(args, name, None) for name in SETTING_FLAGS}
        args.settings = load_settings(args.config, overrides)
        return args.func(args)
    except KeyboardInterrupt:
        print("\n⚠️ 処理がユーザーによって中断されました")
        return EXIT_INTERRUPTED
    except DATA_ERRORS as e:
        print(f"❌ {type(e).__name__}: {e}")
        return EXIT_DATA
    except USAGE_ERRORS as e:
        print(f"❌ {type(e).__name__}: {e}")
        return EXIT_USAGE
    except Exception as e:
        print(f"❌ 予期しないエラー: {e}")
        if args.verbose:
            import traceback
            traceback.print_exc()
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

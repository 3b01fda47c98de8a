#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
異常検知モジュールのテスト
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from detector import (
    Alert, Direction, ThresholdConfig, detect, expected_profile, format_alert, rank_shift, score_user,
)
from wat import (
    DocumentMatrix, DocumentRow, TrainedWAT, UserProfile, WATEntry,
    build_document_matrix, build_user_profiles, train_wat,
)


def _wat(means, window, num_users=1, stds=None):
    """{uri: mean} から TrainedWAT を直接組み立てる"""
    stds = stds or {}
    ordered = sorted(means.items(), key=lambda item: (-item[1], item[0]))
    entries = {
        uri: WATEntry(uri, mean, stds.get(uri, 0.0), rank, 1)
        for rank, (uri, mean) in enumerate(ordered, 1)
    }
    return TrainedWAT(entries, 1000, num_users, window)


def _row(user, counts):
    return DocumentRow(user, dict(counts), sum(counts.values()))


LOG_SCALE = dict(theta_abs=0.05, k_sigma=3.0, min_requests=10, expected_scale="log")


def test_threshold_config_defaults_and_validation():
    cfg = ThresholdConfig()
    assert cfg.theta_abs == 0.05
    assert cfg.k_sigma == 3.0
    assert cfg.min_requests == 10
    assert cfg.underflow_floor == 0.10
    assert cfg.expected_scale == "user"

    with pytest.raises(ValidationError):
        ThresholdConfig(theta_abs=0)
    with pytest.raises(ValidationError):
        ThresholdConfig(min_requests=0)
    with pytest.raises(ValidationError):
        ThresholdConfig(expected_scale="global")


def test_score_user_flood_deviation(hour_window):
    wat = _wat({"/t": 0.010, "/u": 0.809}, hour_window)
    row = _row("10.0.0.2", {"/t": 191, "/u": 809})
    alerts = score_user(row, wat, ThresholdConfig(**LOG_SCALE), hour_window)

    assert len(alerts) == 1
    alert = alerts[0]
    assert alert.direction == Direction.OVER
    assert alert.uri == "/t"
    assert alert.attempts == 191
    assert alert.observed_freq == pytest.approx(0.191)
    assert alert.expected_freq == 0.010
    assert alert.deviation == pytest.approx(0.181)


def test_score_user_user_scale_matches_log_scale_for_one_user(hour_window):
    wat = _wat({"/t": 0.010, "/u": 0.809}, hour_window, num_users=1)
    row = _row("10.0.0.2", {"/t": 191, "/u": 809})
    by_user = score_user(row, wat, ThresholdConfig(**{**LOG_SCALE, "expected_scale": "user"}))
    by_log = score_user(row, wat, ThresholdConfig(**LOG_SCALE))
    assert [(a.uri, a.deviation) for a in by_user] == [(a.uri, a.deviation) for a in by_log]


def test_score_user_matching_row_and_guard(hour_window):
    wat = _wat({"/a": 0.75, "/b": 0.25}, hour_window)
    cfg = ThresholdConfig(**LOG_SCALE)

    assert score_user(_row("u1", {"/a": 30, "/b": 10}), wat, cfg) == []
    assert score_user(_row("u1", {"/zzz": 3}), wat, cfg) == []


def test_score_user_unseen_uri_and_underflow(hour_window):
    wat = _wat({"/a": 0.5, "/b": 0.5}, hour_window)
    row = _row("u1", {"/new": 10, "/a": 10})
    alerts = score_user(row, wat, ThresholdConfig(**LOG_SCALE), hour_window)

    assert [(a.uri, a.direction) for a in alerts] == [("/b", Direction.UNDER), ("/new", Direction.OVER)]
    under, over = alerts
    assert under.attempts == 0
    assert under.deviation == 0.5
    assert over.expected_freq == 0.0
    assert over.deviation == 0.5
    assert all(a.window == hour_window for a in alerts)


def test_underflow_floor_above_one_disables_underflow(hour_window):
    wat = _wat({"/a": 0.5, "/b": 0.5}, hour_window)
    cfg = ThresholdConfig(**{**LOG_SCALE, "underflow_floor": 1.5})
    alerts = score_user(_row("u1", {"/a": 20}), wat, cfg)
    assert all(a.direction == Direction.OVER for a in alerts)


def test_k_sigma_widens_threshold(hour_window):
    wat = _wat({"/a": 0.5, "/b": 0.5}, hour_window, stds={"/a": 0.1, "/b": 0.1})
    row = _row("u1", {"/a": 15, "/b": 5})
    assert score_user(row, wat, ThresholdConfig(**LOG_SCALE)) == []
    narrow = score_user(row, wat, ThresholdConfig(**{**LOG_SCALE, "k_sigma": 0.0}))
    assert {a.uri for a in narrow} == {"/a", "/b"}


def _normal_setup(make_log, hour_window, flood=0):
    entries = []
    for u in range(10):
        for i in range(20):
            entries.append((f"172.16.0.{u + 1}", f"/p{i % 4}", u * 20 + i))
    wat_log = make_log(entries)
    wat = train_wat(build_user_profiles(wat_log), len(wat_log), hour_window)
    test_entries = list(entries)
    for i in range(flood):
        test_entries.append(("10.0.0.2", "/p3", 500 + i))
    return wat, build_document_matrix(make_log(test_entries), hour_window)


def test_detect_normal_rows_only(make_log, hour_window):
    wat, matrix = _normal_setup(make_log, hour_window)
    assert detect(matrix, wat, ThresholdConfig()) == []


def test_detect_flooder_ranked_first(make_log, hour_window):
    wat, matrix = _normal_setup(make_log, hour_window, flood=50)
    alerts = detect(matrix, wat, ThresholdConfig())

    assert alerts
    assert alerts[0].user == "10.0.0.2"
    assert alerts[0].uri == "/p3"
    assert alerts[0].direction == Direction.OVER
    assert alerts == detect(matrix, wat, ThresholdConfig())
    assert alerts[0].deviation == max(a.deviation for a in alerts)


def _rare_page_setup(make_log, hour_window):
    """9ユーザーが /a /b を10回ずつ、1ユーザーだけが /deep を20回閲覧"""
    entries = []
    for u in range(9):
        for i in range(20):
            entries.append((f"172.16.0.{u + 1}", ("/a", "/b")[i % 2], u * 20 + i))
    for i in range(20):
        entries.append(("172.16.0.10", "/deep", 200 + i))
    train_log = make_log(entries)
    wat = train_wat(build_user_profiles(train_log), len(train_log), hour_window)

    test_entries = list(entries) + [("10.0.0.2", "/deep", 300 + i) for i in range(191)]
    return wat, build_document_matrix(make_log(test_entries), hour_window)


def test_flood_on_rarely_visited_page_is_reported(make_log, hour_window):
    print("🎯 低訪問ページへのフラッド検知確認テスト")
    print("目標: 訪問者1名のページへの攻撃で attack 行、他ユーザーは警告なし")

    wat, matrix = _rare_page_setup(make_log, hour_window)
    assert wat.entries["/deep"].support == 1
    alerts = detect(matrix, wat, ThresholdConfig())

    attack = [a for a in alerts if a.user == "10.0.0.2" and a.direction == Direction.OVER]
    assert [format_alert(a) for a in attack] == ["attack from ip:10.0.0.2 req:/deep attempts:191"]
    assert attack[0].expected_freq < 0.6

    quiet_users = {f"172.16.0.{u + 1}" for u in range(9)}
    assert not [a for a in alerts if a.user in quiet_users]


def test_user_scale_expectation_shrinks_with_support(hour_window):
    cfg = ThresholdConfig()
    for users in (2, 5, 10, 50):
        previous = -1.0
        for support in range(1, users + 1):
            entry = WATEntry("/x", 1.0 / users, 0.0, 1, support)
            wat = TrainedWAT({"/x": entry}, 1000, users, hour_window)
            over, _ = expected_profile(entry, wat, cfg, Direction.OVER)
            under, _ = expected_profile(entry, wat, cfg, Direction.UNDER)
            assert previous < over <= 1.0
            assert under <= over
            previous = over
        single = WATEntry("/x", 1.0 / users, 0.0, 1, 1)
        over, _ = expected_profile(single, TrainedWAT({"/x": single}, 1000, users, hour_window), cfg)
        assert over <= 1.0 / 1.5


def _oracle_profiles(wat, cfg):
    """方向別の (期待値, 散らばり) を学習値から直接計算"""
    over, under = {}, {}
    for uri, e in wat.entries.items():
        if cfg.expected_scale == "log":
            over[uri] = under[uri] = (e.mean_freq, e.std_freq)
            continue
        n = max(wat.num_users, 1)
        s = min(max(e.support, 1), n)
        v, sd = e.mean_freq * n, e.std_freq * n
        p = s / n
        q = 1.0 - p
        over[uri] = (min(1.0, v * s / (s + q)), sd)
        under[uri] = (min(1.0, v * p), math.sqrt(p * sd ** 2 + p * q * v ** 2))
    return over, under


def _oracle(matrix, wat, cfg):
    """全 (ユーザー, URI) の頻度差を総当たりで再計算"""
    over, under = _oracle_profiles(wat, cfg)
    found = set()
    for user, row in matrix.rows.items():
        if row.total < cfg.min_requests:
            continue
        for uri in set(row.counts) | set(wat.entries):
            observed = row.counts.get(uri, 0) / row.total
            exp, spread = over.get(uri, (0.0, 0.0))
            if uri in row.counts and observed - exp > max(cfg.theta_abs, cfg.k_sigma * spread):
                found.add((user, uri, Direction.OVER))
            if uri in wat.entries:
                exp, spread = under[uri]
                if exp >= cfg.underflow_floor and exp - observed > max(cfg.theta_abs, cfg.k_sigma * spread):
                    found.add((user, uri, Direction.UNDER))
    return found


def _random_case(rng, make_log, window):
    users = [f"10.0.0.{i}" for i in range(int(rng.integers(1, 9)))]
    uris = [f"/p{i}" for i in range(int(rng.integers(1, 9)))]

    def random_log():
        entries = [
            (users[int(rng.integers(0, len(users)))], uris[int(rng.integers(0, len(uris)))],
             int(rng.integers(0, 3600)))
            for _ in range(int(rng.integers(1, 60)))
        ]
        return make_log(entries)

    train_log = random_log()
    wat = train_wat(build_user_profiles(train_log), len(train_log), window)
    return wat, build_document_matrix(random_log(), window)


def test_detect_matches_exhaustive_oracle(make_log, hour_window):
    rng = np.random.default_rng(8)
    for trial in range(300):
        wat, matrix = _random_case(rng, make_log, hour_window)
        settings = dict(
            theta_abs=float(rng.uniform(0.01, 0.3)),
            k_sigma=float(rng.choice([0.0, 1.0, 3.0])),
            min_requests=int(rng.integers(1, 6)),
            underflow_floor=float(rng.uniform(0.0, 0.5)),
            expected_scale="user" if trial % 2 else "log",
        )
        cfg = ThresholdConfig(**settings)
        alerts = detect(matrix, wat, cfg)
        assert {(a.user, a.uri, a.direction) for a in alerts} == _oracle(matrix, wat, cfg)

        doubled = detect(matrix, wat, ThresholdConfig(**{**settings, "theta_abs": settings["theta_abs"] * 2}))
        assert {(a.user, a.uri) for a in doubled} <= {(a.user, a.uri) for a in alerts}

        keys = [(-a.deviation, a.user, a.uri) for a in alerts]
        assert keys == sorted(keys)


def test_detect_is_volume_invariant(make_log, hour_window):
    rng = np.random.default_rng(21)
    cfg = ThresholdConfig(min_requests=1)
    for _ in range(50):
        wat, matrix = _random_case(rng, make_log, hour_window)
        factor = int(rng.integers(2, 7))
        scaled = DocumentMatrix(matrix.window, {
            user: DocumentRow(user, {uri: c * factor for uri, c in row.counts.items()}, row.total * factor)
            for user, row in matrix.rows.items()
        })
        before = [(a.user, a.uri, a.direction, a.deviation) for a in detect(matrix, wat, cfg)]
        after = [(a.user, a.uri, a.direction, a.deviation) for a in detect(scaled, wat, cfg)]
        assert before == after


def test_rank_shift(hour_window):
    wat = train_wat({"u1": UserProfile("u1", {"/a": 3, "/b": 1})}, 4, hour_window)

    assert rank_shift(_row("u1", {"/a": 3, "/b": 1}), wat, 2) == 0.0
    assert rank_shift(_row("u1", {"/a": 1, "/b": 3}), wat, 2) == 2.0
    assert rank_shift(_row("u1", {"/c": 2, "/d": 1}), wat, 2) == 6.0
    with pytest.raises(ValueError):
        rank_shift(_row("u1", {"/a": 1}), wat, 0)


def test_format_alert():
    over = Alert("10.0.0.2", "/layer7/myweb/sample3/images/album_pics03.jpg", 191,
                 0.191, 0.01, 0.181, Direction.OVER, None)
    assert format_alert(over) == (
        "attack from ip:10.0.0.2 req:/layer7/myweb/sample3/images/album_pics03.jpg attempts:191"
    )

    under = Alert("10.0.0.3", "/index.html", 0, 0.0, 0.5, 0.5, Direction.UNDER, None)
    assert format_alert(under) == "underflow from ip:10.0.0.3 req:/index.html expected:0.500000"

    spaced = Alert("10.0.0.4", "/my page", 12, 0.6, 0.0, 0.6, Direction.OVER, None)
    line = format_alert(spaced)
    assert line == "attack from ip:10.0.0.4 req:/my page attempts:12"
    assert "\n" not in line

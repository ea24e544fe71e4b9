#!/usr/bin/env python3
"""Smoke test for the crowdnav_py extension.

Build first:  pip install --no-build-isolation -e crates/py
Run with:     python3 python/smoke_test.py   (or pytest python/smoke_test.py)
"""

import random
from collections import deque

import crowdnav_py as cn


def bfs(cols, rows, blocked, start, goal):
    if start == goal:
        return 0
    if goal in blocked:
        return None
    seen = {start: 0}
    queue = deque([start])
    while queue:
        c, r = queue.popleft()
        for dc in (-1, 0, 1):
            for dr in (-1, 0, 1):
                n = (c + dc, r + dr)
                if n == (c, r) or not (0 <= n[0] < cols and 0 <= n[1] < rows):
                    continue
                if n in blocked or n in seen:
                    continue
                seen[n] = seen[(c, r)] + 1
                if n == goal:
                    return seen[n]
                queue.append(n)
    return None


def test_planner_matches_bfs():
    rng = random.Random(5)
    for _ in range(200):
        cols, rows = rng.randint(2, 12), rng.randint(2, 8)
        cells = [(c, r) for c in range(cols) for r in range(rows)]
        start, goal = rng.choice(cells), rng.choice(cells)
        blocked = {c for c in cells if c != start and rng.random() < 0.3}
        got = cn.shortest_path_cost(cols, rows, sorted(blocked), start, goal)
        assert got == bfs(cols, rows, blocked, start, goal), (cols, rows, start, goal)


def test_nmse():
    assert cn.nmse([(1.0, 2.0)], [(1.0, 2.0)], 100.0, 50.0) == 0.0
    value = cn.nmse([(10.0, 0.0)], [(0.0, 0.0)], 100.0, 50.0)
    assert abs(value - 0.1) < 1e-12


def test_perfect_prediction_run():
    first = cn.simulate("dstar+perfect", 20, seed=3, crowd_seed=1, workers=1)
    row = first["rows"][0]
    assert row["episodes"] == 20
    assert (row["SR"], row["SP"], row["MRP"]) == (0, 0, 0)
    again = cn.simulate("dstar+perfect", 20, seed=3, crowd_seed=1, workers=2)
    assert again == first


def test_paired_episode_lists():
    a = cn.simulate("dstar+perfect", 5, seed=8)
    b = cn.simulate("dstar+baseline:1", 5, seed=8)
    assert a["metadata"]["episode_hash"] == b["metadata"]["episode_hash"]


def test_predictor_scores():
    oracle = cn.eval_predictor("oracle", 1, crowd_seed=2)
    assert oracle["test"] == 0.0
    persistence = cn.eval_predictor("persistence", 1, crowd_seed=2)
    assert persistence["test"] > 0.0


def test_errors():
    for call in (
        lambda: cn.simulate("dstar+psychic", 1, seed=0),
        lambda: cn.simulate("dstar+forest:/nonexistent/model.bin", 1, seed=0),
        lambda: cn.nmse([], [], 10.0, 10.0),
    ):
        try:
            call()
        except ValueError:
            continue
        raise AssertionError("expected ValueError")


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            fn()
            print(f"{name}: ok")

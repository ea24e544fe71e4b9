#!/usr/bin/env python3
"""Recompute a benchmark results table from its per-episode event logs.

Usage: audit_results.py <results dir> [<results dir> ...]

Each directory must hold results.csv (one controller row) and logs/*.csv as
written by `crowdnav simulate --out`. Exits non-zero on any mismatch.
"""

import csv
import io
import math
import sys
from pathlib import Path


def read_log(path):
    meta, ticks, counts = {}, 0, {"SR": 0, "SP": 0, "MRP": 0}
    stalls = 0
    body = []
    for line in path.read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
        else:
            body.append(line)
    for row in csv.DictReader(io.StringIO("\n".join(body))):
        kind = row["event_type"]
        if kind in ("STEP", "STALL"):
            ticks += 1
            stalls += kind == "STALL"
        elif kind in counts:
            counts[kind] += 1
        else:
            raise ValueError(f"{path}: unknown event type {kind!r}")
    reached = meta.get("termination") == "goal"
    optimal = int(meta["optimal_steps"])
    delay = (ticks / optimal - 1.0) * 100.0 if reached else None
    return reached, delay, counts, stalls


def read_table(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    rows = list(csv.DictReader(io.StringIO("\n".join(lines))))
    if len(rows) != 1:
        raise ValueError(f"{path}: expected one controller row, found {len(rows)}")
    return rows[0]


def audit(directory):
    row = read_table(directory / "results.csv")
    logs = sorted((directory / "logs").glob("*.csv"))
    reached = failures = stalls = 0
    delays = []
    totals = {"SR": 0, "SP": 0, "MRP": 0}
    for p in logs:
        ok, delay, counts, st = read_log(p)
        if ok:
            reached += 1
            delays.append(delay)
        else:
            failures += 1
        stalls += st
        for k in totals:
            totals[k] += counts[k]
    problems = []
    expect = {
        "episodes": len(logs),
        "reached": reached,
        "failures": failures,
        "stall_ticks": stalls,
        **totals,
    }
    for key, value in expect.items():
        if int(row[key]) != value:
            problems.append(f"{key}: table {row[key]}, logs {value}")
    mean = sum(delays) / len(delays) if delays else None
    if mean is None:
        if row["mean_delay_pct"] != "":
            problems.append(f"mean_delay_pct: table {row['mean_delay_pct']}, logs n/a")
    elif not math.isclose(float(row["mean_delay_pct"]), mean, rel_tol=1e-9, abs_tol=1e-9):
        problems.append(f"mean_delay_pct: table {row['mean_delay_pct']}, logs {mean}")
    return problems


def main(argv):
    if len(argv) < 2:
        print(__doc__.strip(), file=sys.stderr)
        return 1
    failed = False
    for d in map(Path, argv[1:]):
        problems = audit(d)
        status = "OK" if not problems else "MISMATCH"
        print(f"{d}: {status}")
        for p in problems:
            print(f"  {p}")
        failed |= bool(problems)
    return 2 if failed else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))

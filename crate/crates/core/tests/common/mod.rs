//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};

use crowdnav::dataset::{synth_crowd, CrowdConfig, TrajectoryStore};
use crowdnav::{CellIndex, GridSpec, SceneSpec};

pub fn grid(cols: u32, rows: u32) -> GridSpec {
    let scene = SceneSpec::new(f64::from(cols) * 30.0, f64::from(rows) * 30.0, 25.0).unwrap();
    GridSpec::new(&scene, cols, rows).unwrap()
}

fn neighbors(g: &GridSpec, c: CellIndex) -> impl Iterator<Item = CellIndex> + '_ {
    (-1i64..=1).flat_map(move |dr| (-1i64..=1).map(move |dc| (dc, dr))).filter_map(move |(dc, dr)| {
        let (col, row) = (i64::from(c.col) + dc, i64::from(c.row) + dr);
        ((dc, dr) != (0, 0) && g.contains(col, row)).then(|| CellIndex::new(col as u32, row as u32))
    })
}

/// Breadth-first shortest move count on the 8-connected unit-cost grid.
/// `None` when the goal is blocked or unreachable. The start is never blocked.
pub fn bfs_cost(g: &GridSpec, blocked: &BTreeSet<CellIndex>, start: CellIndex, goal: CellIndex) -> Option<u64> {
    if start == goal {
        return Some(0);
    }
    if blocked.contains(&goal) {
        return None;
    }
    let mut dist = vec![u64::MAX; g.cell_count()];
    dist[g.linear(start)] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(c) = queue.pop_front() {
        let d = dist[g.linear(c)];
        for n in neighbors(g, c) {
            if blocked.contains(&n) || dist[g.linear(n)] != u64::MAX {
                continue;
            }
            if n == goal {
                return Some(d + 1);
            }
            dist[g.linear(n)] = d + 1;
            queue.push_back(n);
        }
    }
    None
}

/// A* with the Chebyshev heuristic (consistent for unit 8-connected moves).
pub fn astar_cost(g: &GridSpec, blocked: &BTreeSet<CellIndex>, start: CellIndex, goal: CellIndex) -> Option<u64> {
    if blocked.contains(&goal) && start != goal {
        return None;
    }
    let h = |c: CellIndex| u64::from(c.chebyshev(goal));
    let mut best = vec![u64::MAX; g.cell_count()];
    best[g.linear(start)] = 0;
    let mut open = BinaryHeap::from([Reverse((h(start), 0u64, g.linear(start)))]);
    while let Some(Reverse((_, cost, idx))) = open.pop() {
        let c = g.from_linear(idx);
        if c == goal {
            return Some(cost);
        }
        if cost > best[idx] {
            continue;
        }
        for n in neighbors(g, c) {
            let ni = g.linear(n);
            if blocked.contains(&n) || cost + 1 >= best[ni] {
                continue;
            }
            best[ni] = cost + 1;
            open.push(Reverse((cost + 1 + h(n), cost + 1, ni)));
        }
    }
    None
}

/// The default synthetic crowd drawn with `seed`.
pub fn crowd(seed: u64) -> TrajectoryStore {
    synth_crowd(&CrowdConfig { seed, ..CrowdConfig::default() }, seed).unwrap()
}

/// One-sided sign test: probability of at least `wins` successes in
/// `wins + losses` fair coin flips.
pub fn sign_test_p(wins: u64, losses: u64) -> f64 {
    let n = wins + losses;
    let ln_choose = |k: u64| -> f64 { (1..=k).map(|i| ((n - k + i) as f64).ln() - (i as f64).ln()).sum() };
    (wins..=n).map(|k| (ln_choose(k) - n as f64 * std::f64::consts::LN_2).exp()).sum()
}

/// Prints the outcome line for one acceptance criterion.
pub fn report(id: u32, name: &str, pass: bool, detail: &str) {
    println!("acceptance {id:02} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
}

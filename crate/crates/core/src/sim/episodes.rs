use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{optimal_steps, Episode, Replay, SimError};
use crate::grid::CellIndex;

/// Tick budget for an episode whose empty-grid optimum is `optimal` steps.
pub fn max_steps(optimal: u32) -> u32 {
    4 * optimal + 20
}

/// Rejection sampler for episodes. Optional regions restrict where starts
/// and goals may be drawn; otherwise every cell is eligible.
#[derive(Debug, Clone, Default)]
pub struct EpisodeSampler {
    pub start_region: Option<Vec<CellIndex>>,
    pub goal_region: Option<Vec<CellIndex>>,
    /// Draws attempted per requested episode before giving up.
    pub attempts_per_episode: Option<usize>,
}

impl EpisodeSampler {
    fn pick(&self, region: &Option<Vec<CellIndex>>, replay: &Replay<'_>, rng: &mut ChaCha8Rng) -> CellIndex {
        match region {
            Some(cells) => cells[rng.random_range(0..cells.len())],
            None => {
                let g = replay.grid();
                CellIndex::new(rng.random_range(0..g.cols), rng.random_range(0..g.rows))
            }
        }
    }

    /// Draws `n` episodes. Each start frame leaves room for the full step
    /// budget before the recording ends, and the start cell is free at it.
    pub fn sample(&self, replay: &Replay<'_>, n: usize, seed: u64) -> Result<Vec<Episode>, SimError> {
        let fail = |reason: String| SimError::NotEnoughEpisodes { requested: n, reason };
        if n == 0 {
            return Ok(Vec::new());
        }
        for (name, region) in [("start", &self.start_region), ("goal", &self.goal_region)] {
            if let Some(cells) = region {
                if cells.is_empty() {
                    return Err(fail(format!("{name} region is empty")));
                }
                if let Some(c) = cells.iter().find(|c| !replay.grid().contains(i64::from(c.col), i64::from(c.row))) {
                    return Err(fail(format!("{name} region cell {c} is off the grid")));
                }
            }
        }
        let (lo, hi) = replay.frames();
        let g = replay.grid();
        let cells = g.cell_count() as u128;
        let n_starts = self.start_region.as_ref().map_or(cells, |r| r.len() as u128);
        let n_goals = self.goal_region.as_ref().map_or(cells, |r| r.len() as u128);
        let frames = (hi - lo + 1) as u128;
        if (n as u128) > n_starts * n_goals * frames {
            return Err(fail(format!("only {} start/goal/frame combinations exist", n_starts * n_goals * frames)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let budget = n.saturating_mul(self.attempts_per_episode.unwrap_or(1000));
        let mut out = Vec::with_capacity(n);
        let mut attempts = 0;
        while out.len() < n {
            if attempts == budget {
                return Err(fail(format!("only {} valid episodes found in {budget} draws", out.len())));
            }
            attempts += 1;
            let start = self.pick(&self.start_region, replay, &mut rng);
            let goal = self.pick(&self.goal_region, replay, &mut rng);
            let episode_seed: u64 = rng.random();
            if start == goal {
                continue;
            }
            let last_start = hi - i64::from(max_steps(optimal_steps(start, goal)));
            if last_start < lo {
                continue;
            }
            let start_frame = rng.random_range(lo..=last_start);
            if replay.occupancy(start_frame).contains(&start) {
                continue;
            }
            out.push(Episode { start, goal, start_frame, seed: episode_seed });
        }
        Ok(out)
    }
}

/// Uniform episodes over the whole grid; see [`EpisodeSampler::sample`].
pub fn make_episodes(replay: &Replay<'_>, n: usize, seed: u64) -> Result<Vec<Episode>, SimError> {
    EpisodeSampler::default().sample(replay, n, seed)
}

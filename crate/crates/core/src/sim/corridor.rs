//! Small corridor scenario: the robot crosses from the west end to the east
//! end while pedestrians walk north-south across its path, timed so that a
//! robot heading straight for the goal meets them.

use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{max_steps, optimal_steps, Episode, Replay, SimError};
use crate::dataset::{RawTrajectory, TrajectoryStore};
use crate::grid::{CellIndex, GridSpec, PixelPoint, SceneSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorridorConfig {
    pub cols: u32,
    pub rows: u32,
    pub cell_px: f64,
    pub pedestrians: usize,
    /// Largest offset, in frames, between a pedestrian reaching the middle
    /// row and a straight-running robot reaching its column.
    pub timing_spread: i64,
    /// Per-frame positional noise, pixels.
    pub jitter_px: f64,
}

impl Default for CorridorConfig {
    fn default() -> Self {
        Self { cols: 10, rows: 5, cell_px: 30.0, pedestrians: 2, timing_spread: 2, jitter_px: 6.0 }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioCase {
    pub store: Arc<TrajectoryStore>,
    pub grid: GridSpec,
    pub episode: Episode,
    /// Replay window, first and last frame.
    pub frames: (i64, i64),
}

impl ScenarioCase {
    pub fn replay(&self) -> Result<Replay<'_>, SimError> {
        Replay::with_frames(&self.store, self.grid, self.frames.0, self.frames.1)
    }
}

pub fn corridor_case(config: &CorridorConfig, seed: u64) -> Result<ScenarioCase, SimError> {
    let lanes = config.cols.saturating_sub(4) as usize;
    if config.rows < 3 || config.pedestrians > lanes || !(config.cell_px > 2.0 * config.jitter_px) {
        return Err(SimError::InvalidEpisode(format!("unusable corridor configuration {config:?}")));
    }
    let scene = SceneSpec::new(f64::from(config.cols) * config.cell_px, f64::from(config.rows) * config.cell_px, 1.0)
        .map_err(crate::dataset::DatasetError::from)?;
    let grid = GridSpec::new(&scene, config.cols, config.rows).map_err(crate::dataset::DatasetError::from)?;
    let mid = config.rows / 2;
    let episode = Episode { start: CellIndex::new(0, mid), goal: CellIndex::new(config.cols - 1, mid), start_frame: 0, seed };
    let last_frame = i64::from(max_steps(optimal_steps(episode.start, episode.goal)));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tracks = Vec::with_capacity(config.pedestrians);
    for (i, lane) in sample(&mut rng, lanes, config.pedestrians).into_iter().enumerate() {
        let col = lane as u32 + 2;
        let southbound = rng.random_bool(0.5);
        let meet = i64::from(col) + rng.random_range(-config.timing_spread..=config.timing_spread);
        let entry = meet - i64::from(mid);
        let mut positions = Vec::new();
        let mut first = None;
        for step in 0..config.rows {
            let frame = entry + i64::from(step);
            let row = if southbound { step } else { config.rows - 1 - step };
            let centre = grid.cell_center(CellIndex::new(col, row));
            let j = config.jitter_px;
            let (jx, jy) = if j > 0.0 { (rng.random_range(-j..=j), rng.random_range(-j..=j)) } else { (0.0, 0.0) };
            if frame >= 0 {
                first.get_or_insert(frame);
                positions.push(PixelPoint::new(centre.x + jx, centre.y + jy));
            }
        }
        if let Some(first) = first {
            tracks.push(RawTrajectory::from_positions(i as u64 + 1, first, &positions));
        }
    }
    let store = TrajectoryStore::new(scene, tracks)?;
    Ok(ScenarioCase { store: Arc::new(store), grid, episode, frames: (0, last_frame) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_well_formed() {
        let cfg = CorridorConfig::default();
        let a = corridor_case(&cfg, 5).unwrap();
        let b = corridor_case(&cfg, 5).unwrap();
        assert_eq!(a.store, b.store);
        assert_eq!(a.episode, b.episode);
        assert_eq!(a.frames, (0, 4 * 9 + 20));
        for seed in 0..50 {
            let case = corridor_case(&cfg, seed).unwrap();
            assert_eq!(case.store.len(), 2);
            let cols: Vec<u32> =
                case.store.trajectories().iter().map(|t| case.grid.cell_of(t.points[0].pos).col).collect();
            assert_ne!(cols[0], cols[1]);
            assert!(cols.iter().all(|&c| (2..=7).contains(&c)));
            // the start cell is never occupied at the start frame
            assert!(!case.replay().unwrap().occupancy(0).contains(&case.episode.start));
        }
    }
}

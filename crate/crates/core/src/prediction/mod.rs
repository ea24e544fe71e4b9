//! Pedestrian position prediction over a five-step horizon.
//!
//! Predictors produce an [`OccupancyForecast`], the set of grid cells
//! expected to be occupied at each of the next five frames. The planner
//! treats those cells as obstacles.

mod external;
mod features;
mod forest;
mod metrics;
mod samples;
mod volume;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::grid::{CellIndex, GridSpec, PixelPoint};

pub use external::{format_external_forecast, load_external_forecast, parse_external_forecast, ExternalForecasts};
pub use features::{extract_features, FeatureVector, FEATURE_COUNT};
pub use forest::{fit_forest, forest_predict, ForestParams, RegressionForest, RegressionTree, TreeNode};
pub use metrics::nmse;
pub use samples::{split_by_trajectory, training_windows, DataSplit, Sample, WINDOW};
pub use volume::{decode_displacements, encode_displacement_volume, DisplacementVolume};

/// Number of future frames every predictor covers.
pub const HORIZON: usize = 5;

/// Length of a [`ForecastTargets`] vector: `(dx, dy)` per horizon step.
pub const TARGET_COUNT: usize = 2 * HORIZON;

#[derive(Debug, Error)]
pub enum PredictionError {
    #[error("expected {expected} points, got {got}")]
    PointCount { expected: usize, got: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("invalid forest parameters: {0}")]
    InvalidParams(String),
    #[error("predictions and truths differ in length ({predictions} vs {truths})")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("no points to score")]
    NoPoints,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate forecast for pedestrian {pedestrian_id} at frame {frame}")]
    DuplicateForecast { line: usize, pedestrian_id: u64, frame: i64 },
    #[error("model file: {0}")]
    Model(String),
    #[error("need at least {needed} trajectories of length >= {min_length}, found {found}")]
    NotEnoughData { needed: usize, min_length: usize, found: usize },
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Displacements `(dx_k, dy_k)` for `k = 1..=5`, in pixels relative to the
/// pedestrian's most recent position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastTargets(pub [f64; TARGET_COUNT]);

impl ForecastTargets {
    pub const ZERO: ForecastTargets = ForecastTargets([0.0; TARGET_COUNT]);

    pub fn step(&self, k: usize) -> (f64, f64) {
        (self.0[2 * k], self.0[2 * k + 1])
    }

    /// Absolute positions implied by the displacements from `origin`.
    pub fn positions(&self, origin: PixelPoint) -> [PixelPoint; HORIZON] {
        std::array::from_fn(|k| {
            let (dx, dy) = self.step(k);
            origin.offset(dx, dy)
        })
    }
}

/// Cells predicted occupied at each horizon step `1..=5` (index 0 is step 1).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OccupancyForecast {
    steps: [BTreeSet<CellIndex>; HORIZON],
}

impl OccupancyForecast {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_steps(steps: [BTreeSet<CellIndex>; HORIZON]) -> Self {
        Self { steps }
    }

    pub fn step(&self, k: usize) -> &BTreeSet<CellIndex> {
        &self.steps[k]
    }

    pub fn steps(&self) -> &[BTreeSet<CellIndex>; HORIZON] {
        &self.steps
    }

    pub fn insert(&mut self, k: usize, cell: CellIndex) {
        self.steps[k].insert(cell);
    }

    pub fn merge(&mut self, other: &OccupancyForecast) {
        for (mine, theirs) in self.steps.iter_mut().zip(&other.steps) {
            mine.extend(theirs.iter().copied());
        }
    }

    /// Every cell predicted at any horizon step.
    pub fn union(&self) -> BTreeSet<CellIndex> {
        self.steps.iter().flatten().copied().collect()
    }
}

/// Chebyshev-radius neighborhood of every current cell, asserted at all
/// five horizon steps and clipped to the grid.
pub fn baseline_forecast(current: &BTreeSet<CellIndex>, radius: u32, grid: &GridSpec) -> OccupancyForecast {
    let cells: BTreeSet<CellIndex> = current.iter().flat_map(|&c| grid.neighborhood(c, radius)).collect();
    OccupancyForecast { steps: std::array::from_fn(|_| cells.clone()) }
}

/// One cell per horizon step at `origin + (dx_k, dy_k)`, clamped to the grid.
pub fn targets_to_forecast(targets: &ForecastTargets, origin: PixelPoint, grid: &GridSpec) -> OccupancyForecast {
    let mut f = OccupancyForecast::new();
    for (k, p) in targets.positions(origin).into_iter().enumerate() {
        f.insert(k, grid.cell_of(p));
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SceneSpec;

    fn grid() -> GridSpec {
        GridSpec::for_scene(&SceneSpec::default())
    }

    fn one(c: u32, r: u32) -> BTreeSet<CellIndex> {
        [CellIndex::new(c, r)].into()
    }

    #[test]
    fn baseline_sizes() {
        let g = grid();
        for k in 0..HORIZON {
            assert_eq!(baseline_forecast(&one(10, 10), 1, &g).step(k).len(), 9);
            assert_eq!(baseline_forecast(&one(0, 0), 1, &g).step(k).len(), 4);
            assert_eq!(baseline_forecast(&one(10, 10), 2, &g).step(k).len(), 25);
        }
        assert!(baseline_forecast(&one(10, 10), 0, &g).step(0).contains(&CellIndex::new(10, 10)));
    }

    #[test]
    fn zero_targets_stay_in_current_cell() {
        let g = grid();
        let f = targets_to_forecast(&ForecastTargets::ZERO, PixelPoint::new(100.0, 100.0), &g);
        for k in 0..HORIZON {
            assert_eq!(f.step(k), &one(3, 3));
        }
    }

    #[test]
    fn targets_walk_right_one_cell_per_step() {
        let g = grid();
        let mut t = [0.0; TARGET_COUNT];
        for k in 0..HORIZON {
            t[2 * k] = 30.0 * (k + 1) as f64;
        }
        let f = targets_to_forecast(&ForecastTargets(t), g.cell_center(CellIndex::new(0, 0)), &g);
        let cells: Vec<_> = (0..HORIZON).map(|k| *f.step(k).iter().next().unwrap()).collect();
        assert_eq!(cells, (1..=5).map(|c| CellIndex::new(c, 0)).collect::<Vec<_>>());
    }

    #[test]
    fn targets_clamp_at_edge() {
        let g = grid();
        let t = ForecastTargets(std::array::from_fn(|i| if i % 2 == 0 { 5000.0 } else { -5000.0 }));
        let f = targets_to_forecast(&t, PixelPoint::new(1900.0, 10.0), &g);
        for k in 0..HORIZON {
            assert_eq!(f.step(k), &one(63, 0));
        }
    }
}

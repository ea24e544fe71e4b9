use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::features::{extract_features, FeatureVector};
use super::{ForecastTargets, HORIZON, TARGET_COUNT};
use crate::dataset::RawTrajectory;
use crate::grid::PixelPoint;

/// Points consumed by one training window: five observed, five predicted.
pub const WINDOW: usize = 10;

/// One supervised example: features of five observed points and the next
/// five displacements relative to the last observed point (`origin`).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: FeatureVector,
    pub targets: ForecastTargets,
    pub origin: PixelPoint,
}

impl Sample {
    pub fn truth_positions(&self) -> [PixelPoint; HORIZON] {
        self.targets.positions(self.origin)
    }
}

/// Every sliding window of ten consecutive points of `traj`.
pub fn training_windows(traj: &RawTrajectory) -> Vec<Sample> {
    if traj.len() < WINDOW {
        return Vec::new();
    }
    traj.points
        .windows(WINDOW)
        .map(|w| {
            let observed: Vec<PixelPoint> = w[..5].iter().map(|p| p.pos).collect();
            let origin = observed[4];
            let mut t = [0.0; TARGET_COUNT];
            for (k, p) in w[5..].iter().enumerate() {
                t[2 * k] = p.pos.x - origin.x;
                t[2 * k + 1] = p.pos.y - origin.y;
            }
            Sample {
                features: extract_features(&observed).expect("window has five points"),
                targets: ForecastTargets(t),
                origin,
            }
        })
        .collect()
}

/// Trajectory indices assigned to training, validation and test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded 80/10/10 split of `n` trajectories. Validation and test each get
/// `n / 10` (rounded down); the rest is training.
pub fn split_by_trajectory(n: usize, seed: u64) -> DataSplit {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let tenth = n / 10;
    let test = idx.split_off(n - tenth);
    let validation = idx.split_off(n - 2 * tenth);
    DataSplit { train: idx, validation, test }
}

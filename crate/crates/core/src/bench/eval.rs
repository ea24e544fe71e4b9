//! Offline predictor scoring on a seeded 80/10/10 trajectory split.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use super::BenchError;
use crate::dataset::{RawTrajectory, TrajectoryStore};
use crate::grid::PixelPoint;
use crate::prediction::{
    fit_forest, load_external_forecast, nmse, split_by_trajectory, training_windows, ExternalForecasts, ForestParams,
    RegressionForest, Sample, HORIZON, WINDOW,
};

/// `persistence`, `oracle`, `forest` (fit on the training split),
/// `forest:<model>` or `external:<forecast file>`.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictorSpec {
    Persistence,
    Oracle,
    FitForest(ForestParams),
    Forest(PathBuf),
    External(PathBuf),
}

impl fmt::Display for PredictorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictorSpec::Persistence => f.write_str("persistence"),
            PredictorSpec::Oracle => f.write_str("oracle"),
            PredictorSpec::FitForest(_) => f.write_str("forest"),
            PredictorSpec::Forest(p) => write!(f, "forest:{}", p.display()),
            PredictorSpec::External(p) => write!(f, "external:{}", p.display()),
        }
    }
}

impl FromStr for PredictorSpec {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |m: &str| BenchError::Spec { spec: s.to_string(), message: m.to_string() };
        match s.split_once(':') {
            None => match s {
                "persistence" => Ok(PredictorSpec::Persistence),
                "oracle" => Ok(PredictorSpec::Oracle),
                "forest" => Ok(PredictorSpec::FitForest(ForestParams::default())),
                _ => Err(bad("unknown predictor")),
            },
            Some((_, "")) => Err(bad("empty path")),
            Some(("forest", p)) => Ok(PredictorSpec::Forest(p.into())),
            Some(("external", p)) => Ok(PredictorSpec::External(p.into())),
            Some(_) => Err(bad("unknown predictor")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmseReport {
    pub predictor: String,
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    /// Windows scored per split (train, validation, test).
    pub windows: [usize; 3],
    /// External-forecast windows without a record, scored as persistence.
    pub fallbacks: usize,
}

impl fmt::Display for NmseReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "predictor,split,windows,nmse")?;
        for (name, v, n) in [
            ("train", self.train, self.windows[0]),
            ("validation", self.validation, self.windows[1]),
            ("test", self.test, self.windows[2]),
        ] {
            writeln!(f, "{},{name},{n},{v}", self.predictor)?;
        }
        Ok(())
    }
}

enum Model {
    Persistence,
    Oracle,
    Forest(RegressionForest),
    External(ExternalForecasts),
}

/// Frame of each window's last observed point, parallel to `training_windows`.
fn window_frames(t: &RawTrajectory) -> impl Iterator<Item = i64> + '_ {
    t.points.windows(WINDOW).map(|w| w[4].frame)
}

/// Scores `spec` on every ten-frame window of a seeded trajectory split.
/// Only trajectories with at least ten points take part; at least ten are
/// required.
pub fn eval_predictor(spec: &PredictorSpec, store: &TrajectoryStore, split_seed: u64) -> Result<NmseReport, BenchError> {
    let eligible: Vec<&RawTrajectory> = store.trajectories().iter().filter(|t| t.len() >= WINDOW).collect();
    if eligible.len() < 10 {
        return Err(BenchError::Config(format!(
            "predictor evaluation needs at least 10 trajectories of {WINDOW}+ frames, found {}",
            eligible.len()
        )));
    }
    let split = split_by_trajectory(eligible.len(), split_seed);
    let model = match spec {
        PredictorSpec::Persistence => Model::Persistence,
        PredictorSpec::Oracle => Model::Oracle,
        PredictorSpec::FitForest(params) => {
            let samples: Vec<Sample> = split.train.iter().flat_map(|&i| training_windows(eligible[i])).collect();
            Model::Forest(fit_forest(&samples, params, split_seed)?)
        }
        PredictorSpec::Forest(p) => Model::Forest(RegressionForest::load(p)?),
        PredictorSpec::External(p) => Model::External(load_external_forecast(p)?),
    };
    let mut fallbacks = 0;
    let mut score = |idx: &[usize]| -> Result<(f64, usize), BenchError> {
        let (mut preds, mut truths) = (Vec::new(), Vec::new());
        let mut windows = 0;
        for &i in idx {
            let t = eligible[i];
            for (s, frame) in training_windows(t).into_iter().zip(window_frames(t)) {
                windows += 1;
                let truth = s.truth_positions();
                let pred: [PixelPoint; HORIZON] = match &model {
                    Model::Persistence => [s.origin; HORIZON],
                    Model::Oracle => truth,
                    Model::Forest(f) => f.predict(&s.features).positions(s.origin),
                    Model::External(fc) => match fc.get(&(t.pedestrian_id, frame)) {
                        Some(targets) => targets.positions(s.origin),
                        None => {
                            fallbacks += 1;
                            [s.origin; HORIZON]
                        }
                    },
                };
                preds.extend(pred);
                truths.extend(truth);
            }
        }
        Ok((nmse(&preds, &truths, store.scene())?, windows))
    };
    let (train, n_train) = score(&split.train)?;
    let (validation, n_val) = score(&split.validation)?;
    let (test, n_test) = score(&split.test)?;
    Ok(NmseReport { predictor: spec.to_string(), train, validation, test, windows: [n_train, n_val, n_test], fallbacks })
}

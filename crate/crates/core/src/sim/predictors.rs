//! Occupancy forecasters for the planner-backed controller.

use std::sync::Arc;

use super::{Observation, PedestrianView, SimError};
use crate::grid::PixelPoint;
use crate::prediction::{
    baseline_forecast, extract_features, targets_to_forecast, ExternalForecasts, OccupancyForecast,
    RegressionForest, HORIZON,
};

/// Neighborhood radius used for pedestrians a model cannot score (too
/// little history, or no external record).
pub const FALLBACK_RADIUS: u32 = 1;

pub trait Predictor: Send + Sync {
    fn forecast(&self, obs: &Observation<'_, '_>) -> Result<OccupancyForecast, SimError>;
    fn label(&self) -> String;
}

fn fallback(p: &PedestrianView, obs: &Observation<'_, '_>) -> OccupancyForecast {
    baseline_forecast(&[p.cell].into(), FALLBACK_RADIUS, obs.replay.grid())
}

/// Every cell within `radius` of a pedestrian, at all horizon steps.
#[derive(Debug, Clone, Copy)]
pub struct BaselinePredictor {
    pub radius: u32,
}

impl Predictor for BaselinePredictor {
    fn forecast(&self, obs: &Observation<'_, '_>) -> Result<OccupancyForecast, SimError> {
        Ok(baseline_forecast(&obs.occupied_cells(), self.radius, obs.replay.grid()))
    }

    fn label(&self) -> String {
        format!("dstar+baseline:{}", self.radius)
    }
}

/// Random-forest regression from the last five recorded positions.
#[derive(Debug, Clone)]
pub struct ForestPredictor {
    pub forest: Arc<RegressionForest>,
}

impl Predictor for ForestPredictor {
    fn forecast(&self, obs: &Observation<'_, '_>) -> Result<OccupancyForecast, SimError> {
        let store = obs.replay.store();
        let mut out = OccupancyForecast::new();
        for p in obs.pedestrians {
            let history = store.track(p.track as usize).history(obs.frame, 5);
            if history.len() < 5 {
                out.merge(&fallback(p, obs));
                continue;
            }
            let pts: Vec<PixelPoint> = history.iter().map(|t| t.pos).collect();
            let targets = self.forest.predict(&extract_features(&pts)?);
            out.merge(&targets_to_forecast(&targets, p.position, obs.replay.grid()));
        }
        Ok(out)
    }

    fn label(&self) -> String {
        "dstar+forest".into()
    }
}

/// Forecasts produced elsewhere, keyed by pedestrian and frame.
#[derive(Debug, Clone)]
pub struct ExternalPredictor {
    pub forecasts: Arc<ExternalForecasts>,
}

impl Predictor for ExternalPredictor {
    fn forecast(&self, obs: &Observation<'_, '_>) -> Result<OccupancyForecast, SimError> {
        let mut out = OccupancyForecast::new();
        for p in obs.pedestrians {
            match self.forecasts.get(&(p.pedestrian_id, obs.frame)) {
                Some(t) => out.merge(&targets_to_forecast(t, p.position, obs.replay.grid())),
                None => out.merge(&fallback(p, obs)),
            }
        }
        Ok(out)
    }

    fn label(&self) -> String {
        "dstar+external".into()
    }
}

/// The recorded future: every pedestrian present at `f + k`, including ones
/// that have not appeared yet.
#[derive(Debug, Clone, Copy, Default)]
pub struct PerfectPredictor;

impl Predictor for PerfectPredictor {
    fn forecast(&self, obs: &Observation<'_, '_>) -> Result<OccupancyForecast, SimError> {
        let steps = std::array::from_fn(|k| obs.replay.occupancy(obs.frame + 1 + k as i64));
        debug_assert_eq!(steps.len(), HORIZON);
        Ok(OccupancyForecast::from_steps(steps))
    }

    fn label(&self) -> String {
        "dstar+perfect".into()
    }
}

//! Forecasts computed outside this crate (e.g. by a pretrained network),
//! one `pedestrian_id frame dx1 dy1 ... dx5 dy5` record per line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{ForecastTargets, PredictionError, TARGET_COUNT};

/// Forecasts keyed by `(pedestrian_id, frame)`.
pub type ExternalForecasts = BTreeMap<(u64, i64), ForecastTargets>;

pub fn load_external_forecast(path: impl AsRef<Path>) -> Result<ExternalForecasts, PredictionError> {
    let path = path.as_ref();
    let text =
        fs::read_to_string(path).map_err(|source| PredictionError::Io { path: path.display().to_string(), source })?;
    parse_external_forecast(&text)
}

pub fn parse_external_forecast(text: &str) -> Result<ExternalForecasts, PredictionError> {
    let mut out = ExternalForecasts::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| PredictionError::Parse { line: i + 1, message };
        let fields: Vec<&str> = line.split_ascii_whitespace().collect();
        if fields.len() != 2 + TARGET_COUNT {
            return Err(err(format!("expected {} fields, found {}", 2 + TARGET_COUNT, fields.len())));
        }
        let id: u64 = fields[0].parse().map_err(|_| err(format!("invalid pedestrian id {:?}", fields[0])))?;
        let frame: i64 = fields[1].parse().map_err(|_| err(format!("invalid frame {:?}", fields[1])))?;
        let mut t = [0.0; TARGET_COUNT];
        for (slot, s) in t.iter_mut().zip(&fields[2..]) {
            *slot = s.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| err(format!("invalid displacement {s:?}")))?;
        }
        if out.insert((id, frame), ForecastTargets(t)).is_some() {
            return Err(PredictionError::DuplicateForecast { line: i + 1, pedestrian_id: id, frame });
        }
    }
    Ok(out)
}

pub fn format_external_forecast(forecasts: &ExternalForecasts) -> String {
    let mut out = String::new();
    for ((id, frame), t) in forecasts {
        let _ = write!(out, "{id} {frame}");
        for v in t.0 {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    out
}

use std::f64::consts::PI;

use super::PredictionError;
use crate::grid::PixelPoint;

pub const FEATURE_COUNT: usize = 31;

/// Hand-crafted description of a pedestrian's last five positions.
///
/// Layout (indices):
///
/// | range   | content                                         |
/// |---------|-------------------------------------------------|
/// | 0..10   | absolute `x, y` of points 1..5                  |
/// | 10..18  | per-step displacement `dx, dy` of steps 1..4    |
/// | 18..22  | per-step speed (Euclidean step length)          |
/// | 22      | mean speed                                      |
/// | 23..26  | per-step acceleration `speed[i+1] - speed[i]`   |
/// | 26      | mean acceleration                               |
/// | 27..31  | per-step heading in `(-pi, pi]`, 0 when at rest |
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub const ABS: usize = 0;
    pub const REL: usize = 10;
    pub const SPEED: usize = 18;
    pub const MEAN_SPEED: usize = 22;
    pub const ACCEL: usize = 23;
    pub const MEAN_ACCEL: usize = 26;
    pub const ANGLE: usize = 27;

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn speeds(&self) -> &[f64] {
        &self.0[Self::SPEED..Self::MEAN_SPEED]
    }

    pub fn accelerations(&self) -> &[f64] {
        &self.0[Self::ACCEL..Self::MEAN_ACCEL]
    }

    pub fn angles(&self) -> &[f64] {
        &self.0[Self::ANGLE..]
    }
}

/// Heading of a displacement in image coordinates (y down), in `(-pi, pi]`.
fn heading(dx: f64, dy: f64) -> f64 {
    if dx == 0.0 && dy == 0.0 {
        return 0.0;
    }
    let a = dy.atan2(dx);
    if a <= -PI {
        PI
    } else {
        a
    }
}

/// Features of five positions taken on consecutive frames, oldest first.
pub fn extract_features(last5: &[PixelPoint]) -> Result<FeatureVector, PredictionError> {
    if last5.len() != 5 {
        return Err(PredictionError::PointCount { expected: 5, got: last5.len() });
    }
    let mut f = [0.0; FEATURE_COUNT];
    for (i, p) in last5.iter().enumerate() {
        f[FeatureVector::ABS + 2 * i] = p.x;
        f[FeatureVector::ABS + 2 * i + 1] = p.y;
    }
    let mut speeds = [0.0; 4];
    for i in 0..4 {
        let (dx, dy) = (last5[i + 1].x - last5[i].x, last5[i + 1].y - last5[i].y);
        f[FeatureVector::REL + 2 * i] = dx;
        f[FeatureVector::REL + 2 * i + 1] = dy;
        speeds[i] = dx.hypot(dy);
        f[FeatureVector::SPEED + i] = speeds[i];
        f[FeatureVector::ANGLE + i] = heading(dx, dy);
    }
    f[FeatureVector::MEAN_SPEED] = speeds.iter().sum::<f64>() / 4.0;
    let mut accel_sum = 0.0;
    for i in 0..3 {
        let a = speeds[i + 1] - speeds[i];
        f[FeatureVector::ACCEL + i] = a;
        accel_sum += a;
    }
    f[FeatureVector::MEAN_ACCEL] = accel_sum / 3.0;
    Ok(FeatureVector(f))
}

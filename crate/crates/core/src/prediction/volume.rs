//! Displacement-volume input encoding for CNN-based predictors.
//!
//! The volume has shape `X x Y x 10` and is zero everywhere except at the
//! pedestrian's current position, which holds
//! `[1 + (x5 - x1)/X, 1 + (y5 - y1)/Y, ..., 1 + (x5 - x5)/X, 1 + (y5 - y5)/Y]`.
//! Only the non-zero entries are stored.

use std::collections::BTreeMap;

use super::PredictionError;
use crate::grid::{PixelPoint, SceneSpec};

pub const VOLUME_DEPTH: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementVolume {
    pub width: usize,
    pub height: usize,
    entries: BTreeMap<(usize, usize), [f64; VOLUME_DEPTH]>,
}

impl DisplacementVolume {
    pub fn empty(scene: &SceneSpec) -> Self {
        Self { width: scene.width as usize, height: scene.height as usize, entries: BTreeMap::new() }
    }

    pub fn entries(&self) -> &BTreeMap<(usize, usize), [f64; VOLUME_DEPTH]> {
        &self.entries
    }

    /// Value at pixel `(x, y)`, channel `c`; zero where nothing is stored.
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.entries.get(&(x, y)).map_or(0.0, |v| v[c])
    }

    /// Adds another pedestrian's encoding. Later pedestrians overwrite earlier
    /// ones at the same pixel.
    pub fn merge(&mut self, other: &DisplacementVolume) {
        self.entries.extend(other.entries.iter().map(|(k, v)| (*k, *v)));
    }

    /// Dense row-major `[y][x][c]` tensor, for feeding external models.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.width * self.height * VOLUME_DEPTH];
        for (&(x, y), v) in &self.entries {
            let base = (y * self.width + x) * VOLUME_DEPTH;
            out[base..base + VOLUME_DEPTH].copy_from_slice(v);
        }
        out
    }
}

/// Encodes five consecutive positions (oldest first).
pub fn encode_displacement_volume(last5: &[PixelPoint], scene: &SceneSpec) -> Result<DisplacementVolume, PredictionError> {
    if last5.len() != 5 {
        return Err(PredictionError::PointCount { expected: 5, got: last5.len() });
    }
    let current = last5[4];
    let mut v = [0.0; VOLUME_DEPTH];
    for (t, p) in last5.iter().enumerate() {
        v[2 * t] = 1.0 + (current.x - p.x) / scene.width;
        v[2 * t + 1] = 1.0 + (current.y - p.y) / scene.height;
    }
    let mut volume = DisplacementVolume::empty(scene);
    let x = (current.x.floor() as usize).min(volume.width.saturating_sub(1));
    let y = (current.y.floor() as usize).min(volume.height.saturating_sub(1));
    volume.entries.insert((x, y), v);
    Ok(volume)
}

/// Recovers `x5 - x_t, y5 - y_t` (pixels) from an encoded 10-vector.
pub fn decode_displacements(v: &[f64; VOLUME_DEPTH], scene: &SceneSpec) -> [(f64, f64); 5] {
    std::array::from_fn(|t| ((v[2 * t] - 1.0) * scene.width, (v[2 * t + 1] - 1.0) * scene.height))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn stationary_encodes_all_ones() {
        let s = SceneSpec::default();
        let vol = encode_displacement_volume(&[PixelPoint::new(40.0, 50.0); 5], &s).unwrap();
        assert_eq!(vol.entries().len(), 1);
        assert_eq!(vol.entries()[&(40, 50)], [1.0; VOLUME_DEPTH]);
        assert_eq!(vol.get(0, 0, 0), 0.0);
    }

    #[test]
    fn first_pair_example() {
        let s = SceneSpec::default();
        let pts = [
            PixelPoint::new(0.0, 0.0),
            PixelPoint::new(50.0, 20.0),
            PixelPoint::new(100.0, 40.0),
            PixelPoint::new(150.0, 90.0),
            PixelPoint::new(192.0, 108.0),
        ];
        let vol = encode_displacement_volume(&pts, &s).unwrap();
        let v = vol.entries()[&(192, 108)];
        assert_eq!((v[0], v[1]), (1.1, 1.1));
        assert_eq!((v[8], v[9]), (1.0, 1.0));
    }

    #[test]
    fn dense_layout() {
        let s = SceneSpec::new(4.0, 3.0, 1.0).unwrap();
        let vol = encode_displacement_volume(&[PixelPoint::new(2.5, 1.0); 5], &s).unwrap();
        let dense = vol.to_dense();
        assert_eq!(dense.len(), 4 * 3 * VOLUME_DEPTH);
        assert_eq!(dense.iter().filter(|&&v| v != 0.0).count(), VOLUME_DEPTH);
        assert_eq!(dense[(4 + 2) * VOLUME_DEPTH], 1.0);
    }

    proptest! {
        #[test]
        fn invertible_and_bounded(coords in proptest::collection::vec((0.0f64..1920.0, 0.0f64..1080.0), 5)) {
            let s = SceneSpec::default();
            let pts: Vec<_> = coords.iter().map(|&(x, y)| PixelPoint::new(x, y)).collect();
            let vol = encode_displacement_volume(&pts, &s).unwrap();
            prop_assert_eq!(vol.entries().len(), 1);
            let v = *vol.entries().values().next().unwrap();
            prop_assert!(v.iter().all(|c| (0.0..=2.0).contains(c)));
            prop_assert_eq!((v[8], v[9]), (1.0, 1.0));
            for (t, (dx, dy)) in decode_displacements(&v, &s).into_iter().enumerate() {
                prop_assert!((dx - (pts[4].x - pts[t].x)).abs() <= 1e-9);
                prop_assert!((dy - (pts[4].y - pts[t].y)).abs() <= 1e-9);
            }
        }
    }
}

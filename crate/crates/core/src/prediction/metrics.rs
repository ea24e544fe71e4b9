use super::PredictionError;
use crate::grid::{PixelPoint, SceneSpec};

/// Mean normalized Euclidean error over pooled prediction points:
/// `(1/n) * sum sqrt(((x - x')/X)^2 + ((y - y')/Y)^2)`.
pub fn nmse(predictions: &[PixelPoint], truths: &[PixelPoint], scene: &SceneSpec) -> Result<f64, PredictionError> {
    if predictions.len() != truths.len() {
        return Err(PredictionError::LengthMismatch { predictions: predictions.len(), truths: truths.len() });
    }
    if predictions.is_empty() {
        return Err(PredictionError::NoPoints);
    }
    let total: f64 = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| ((t.x - p.x) / scene.width).hypot((t.y - p.y) / scene.height))
        .sum();
    Ok(total / predictions.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(x: f64, y: f64) -> PixelPoint {
        PixelPoint::new(x, y)
    }

    #[test]
    fn worked_examples() {
        let s = SceneSpec::default();
        let pts = [p(3.0, 4.0), p(100.0, 7.5)];
        assert_eq!(nmse(&pts, &pts, &s).unwrap(), 0.0);
        assert_eq!(nmse(&[p(192.0, 0.0)], &[p(0.0, 0.0)], &s).unwrap(), 0.1);
        assert_eq!(nmse(&[p(192.0, 0.0), p(576.0, 0.0)], &[p(0.0, 0.0), p(0.0, 0.0)], &s).unwrap(), 0.2);
    }

    #[test]
    fn errors() {
        let s = SceneSpec::default();
        assert!(matches!(nmse(&[], &[], &s), Err(PredictionError::NoPoints)));
        assert!(matches!(nmse(&[p(0.0, 0.0)], &[], &s), Err(PredictionError::LengthMismatch { .. })));
    }

    proptest! {
        #[test]
        fn translation_invariance_and_scaling(
            pairs in proptest::collection::vec(((0.0f64..1920.0, 0.0f64..1080.0), (-50.0f64..50.0, -50.0f64..50.0)), 1..20),
            shift in (-500.0f64..500.0, -500.0f64..500.0),
            scale in 0.1f64..10.0,
        ) {
            let s = SceneSpec::default();
            let truths: Vec<_> = pairs.iter().map(|((x, y), _)| p(*x, *y)).collect();
            let preds: Vec<_> = pairs.iter().map(|((x, y), (ex, ey))| p(x + ex, y + ey)).collect();
            let base = nmse(&preds, &truths, &s).unwrap();
            let shifted_t: Vec<_> = truths.iter().map(|q| q.offset(shift.0, shift.1)).collect();
            let shifted_p: Vec<_> = preds.iter().map(|q| q.offset(shift.0, shift.1)).collect();
            prop_assert!((nmse(&shifted_p, &shifted_t, &s).unwrap() - base).abs() <= 1e-9);
            let scaled_p: Vec<_> = pairs.iter().map(|((x, y), (ex, ey))| p(x + scale * ex, y + scale * ey)).collect();
            prop_assert!((nmse(&scaled_p, &truths, &s).unwrap() - scale * base).abs() <= 1e-9 * (1.0 + scale * base));
        }
    }
}

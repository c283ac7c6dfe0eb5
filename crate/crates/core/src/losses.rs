//! Training objectives as plain evaluation functions (no gradients).
//!
//! Synthetic images are scored with the reverse Huber (BerHu) loss against
//! their dense ground truth; real images with mean absolute error over their
//! reliable points. Each image contributes its per-point mean, and the batch
//! loss is the mean over images.

use crate::depth_image::{DenseDepthMap, DepthGrid};
use crate::error::{Error, Result};
use crate::filter::ReliablePointSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub lambda_synthetic: f64,
    pub lambda_real: f64,
    /// BerHu threshold as a fraction of the largest absolute residual in
    /// each image.
    pub berhu_c_fraction: f64,
    pub synthetic_batch: usize,
    pub real_batch: usize,
}

impl LossConfig {
    pub fn new(
        lambda_synthetic: f64,
        lambda_real: f64,
        berhu_c_fraction: f64,
        synthetic_batch: usize,
        real_batch: usize,
    ) -> Result<Self> {
        let weight_ok = |l: f64| l.is_finite() && l >= 0.0;
        if !weight_ok(lambda_synthetic) || !weight_ok(lambda_real) {
            return Err(Error::Config("loss weights must be finite and >= 0".into()));
        }
        if !(berhu_c_fraction > 0.0 && berhu_c_fraction < 1.0) {
            return Err(Error::Config(format!("BerHu fraction {berhu_c_fraction} outside (0, 1)")));
        }
        if synthetic_batch == 0 && real_batch == 0 {
            return Err(Error::Config("both batch sizes are zero".into()));
        }
        Ok(LossConfig {
            lambda_synthetic,
            lambda_real,
            berhu_c_fraction,
            synthetic_batch,
            real_batch,
        })
    }

    /// Synthetic-only warm-up: weights (1, 0), four synthetic images.
    pub fn first_step() -> Self {
        Self::new(1.0, 0.0, 0.2, 4, 0).expect("valid constants")
    }

    /// Mixed training: weights (1, 1), two images from each domain.
    pub fn second_step() -> Self {
        Self::new(1.0, 1.0, 0.2, 2, 2).expect("valid constants")
    }
}

/// BerHu of one absolute residual with threshold `c > 0`.
#[inline]
pub fn berhu(abs_residual: f64, c: f64) -> f64 {
    if abs_residual <= c {
        abs_residual
    } else {
        (abs_residual * abs_residual + c * c) / (2.0 * c)
    }
}

/// Mean BerHu over one image's residuals, with `c = c_fraction * max|r|`.
/// A perfect prediction (`c = 0`) scores 0.
pub fn berhu_mean(residuals: &[f64], c_fraction: f64) -> Result<f64> {
    if residuals.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let max = residuals.iter().map(|r| r.abs()).fold(0.0, f64::max);
    let c = c_fraction * max;
    if c == 0.0 {
        return Ok(0.0);
    }
    Ok(residuals.iter().map(|r| berhu(r.abs(), c)).sum::<f64>() / residuals.len() as f64)
}

fn residuals(pred: &DenseDepthMap, target: &DepthGrid) -> Result<Vec<f64>> {
    pred.ensure_dims(target.dims())?;
    target
        .iter_valid()
        .map(|(u, v, y)| {
            pred.get(u, v)
                .map(|p| p - y)
                .ok_or(Error::MissingPrediction { u, v })
        })
        .collect()
}

pub fn berhu_image(pred: &DenseDepthMap, target: &DepthGrid, c_fraction: f64) -> Result<f64> {
    berhu_mean(&residuals(pred, target)?, c_fraction)
}

pub fn mae_image(pred: &DenseDepthMap, reliable: &ReliablePointSet) -> Result<f64> {
    let r = residuals(pred, &reliable.kept)?;
    if r.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    Ok(r.iter().map(|x| x.abs()).sum::<f64>() / r.len() as f64)
}

fn batch_mean(losses: impl ExactSizeIterator<Item = Result<f64>>, expected: usize, domain: &str) -> Result<f64> {
    if losses.len() != expected {
        return Err(Error::Config(format!(
            "{domain} batch has {} images, configured for {expected}",
            losses.len()
        )));
    }
    if expected == 0 {
        return Ok(0.0);
    }
    Ok(losses.sum::<Result<f64>>()? / expected as f64)
}

/// Synthetic-domain loss over a batch of `(prediction, ground truth)`.
pub fn berhu_loss(batch: &[(&DenseDepthMap, &DepthGrid)], cfg: &LossConfig) -> Result<f64> {
    batch_mean(
        batch.iter().map(|(p, y)| berhu_image(p, y, cfg.berhu_c_fraction)),
        cfg.synthetic_batch,
        "synthetic",
    )
}

/// Real-domain loss over a batch of `(prediction, reliable points)`.
pub fn mae_loss(batch: &[(&DenseDepthMap, &ReliablePointSet)], cfg: &LossConfig) -> Result<f64> {
    batch_mean(batch.iter().map(|(p, s)| mae_image(p, s)), cfg.real_batch, "real")
}

pub fn combined_loss(synthetic: f64, real: f64, cfg: &LossConfig) -> f64 {
    cfg.lambda_synthetic * synthetic + cfg.lambda_real * real
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth_image::Provenance;
    use crate::filter::{filter_reliable, FilterParams};

    fn row(values: &[f64]) -> DepthGrid {
        DepthGrid::from_fn(values.len(), 1, |u, _| Some(values[u])).unwrap()
    }

    #[test]
    fn berhu_worked_examples() {
        assert_eq!(berhu_mean(&[0.0, 0.0], 0.2).unwrap(), 0.0);
        // c = 0.2, L = [0.1 + (1 + 0.04) / 0.4] / 2
        assert!((berhu_mean(&[0.1, 1.0], 0.2).unwrap() - 1.35).abs() <= 1e-12);
        // c = 0.02, both residuals in the quadratic branch
        assert!((berhu_mean(&[0.1, -0.1], 0.2).unwrap() - 0.26).abs() <= 1e-12);
        assert!(berhu_mean(&[], 0.2).is_err());
    }

    #[test]
    fn image_losses() {
        let y = row(&[10.0, 10.0, 10.0]);
        let pred = y.clone().into_dense();
        assert_eq!(berhu_image(&pred, &y, 0.2).unwrap(), 0.0);

        let sp = filter_reliable(&row(&[4.0, 6.0]).into_sparse(Provenance::Real), FilterParams::new(1, 0.5).unwrap());
        let flat = row(&[5.0, 5.0]).into_dense();
        assert_eq!(mae_image(&flat, &sp).unwrap(), 1.0);
        let off = row(&[5.0, 9.0]).into_dense();
        assert_eq!(mae_image(&off, &sp).unwrap(), 2.0);
        assert_eq!(mae_image(&row(&[4.0, 6.0]).into_dense(), &sp).unwrap(), 0.0);

        let empty = filter_reliable(&DepthGrid::new(2, 1).into_sparse(Provenance::Real), FilterParams::default());
        assert!(matches!(mae_image(&flat, &empty), Err(Error::EmptyEvaluation)));
        assert!(berhu_image(&flat, &DepthGrid::new(2, 1), 0.2).is_err());
    }

    #[test]
    fn missing_prediction() {
        let pred = DepthGrid::from_fn(2, 1, |u, _| (u == 0).then_some(1.0)).unwrap().into_dense();
        assert!(matches!(
            berhu_image(&pred, &row(&[1.0, 1.0]), 0.2),
            Err(Error::MissingPrediction { u: 1, v: 0 })
        ));
    }

    #[test]
    fn batch_means() {
        let cfg = LossConfig::new(1.0, 1.0, 0.2, 2, 1).unwrap();
        let y = row(&[10.0, 10.0]);
        let a = row(&[10.0, 10.0]).into_dense();
        let b = row(&[10.1, 11.0]).into_dense();
        let l = berhu_loss(&[(&a, &y), (&b, &y)], &cfg).unwrap();
        assert!((l - 1.35 / 2.0).abs() <= 1e-12);
        assert!(berhu_loss(&[(&a, &y)], &cfg).is_err());
        let step1 = LossConfig::first_step();
        assert_eq!(mae_loss(&[], &step1).unwrap(), 0.0);
    }

    #[test]
    fn combined_weights() {
        let step1 = LossConfig::first_step();
        assert_eq!(combined_loss(2.0, 3.0, &step1), 2.0);
        let step2 = LossConfig::second_step();
        assert_eq!(combined_loss(2.0, 3.0, &step2), 5.0);
        let zero = LossConfig::new(0.0, 0.0, 0.2, 1, 1).unwrap();
        assert_eq!(combined_loss(2.0, 3.0, &zero), 0.0);
        assert_eq!((step2.synthetic_batch, step2.real_batch), (2, 2));
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::new(-1.0, 0.0, 0.2, 1, 0).is_err());
        assert!(LossConfig::new(1.0, 0.0, 0.0, 1, 0).is_err());
        assert!(LossConfig::new(1.0, 0.0, 1.0, 1, 0).is_err());
        assert!(LossConfig::new(1.0, 0.0, 0.2, 0, 0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn residuals() -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(-50.0f64..50.0, 1..40)
        }

        proptest! {
            #[test]
            fn berhu_dominates_mae(r in residuals(), frac in 0.01f64..0.99) {
                let mae = r.iter().map(|x| x.abs()).sum::<f64>() / r.len() as f64;
                let b = berhu_mean(&r, frac).unwrap();
                prop_assert!(b >= mae);
                prop_assert!(b >= 0.0);
            }

            #[test]
            fn berhu_is_order_free(r in residuals()) {
                let mut rev = r.clone();
                rev.reverse();
                let (a, b) = (berhu_mean(&r, 0.2).unwrap(), berhu_mean(&rev, 0.2).unwrap());
                prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
            }

            #[test]
            fn berhu_zero_iff_exact(r in residuals()) {
                let exact = r.iter().all(|&x| x == 0.0);
                prop_assert_eq!(berhu_mean(&r, 0.2).unwrap() == 0.0, exact);
                prop_assert_eq!(berhu_mean(&vec![0.0; r.len()], 0.2).unwrap(), 0.0);
            }

            #[test]
            fn combined_is_linear(s in 0.0f64..10.0, r in 0.0f64..10.0, k in 0.0f64..5.0, ls in 0.0f64..3.0, lr in 0.0f64..3.0) {
                let cfg = LossConfig::new(ls, lr, 0.2, 1, 1).unwrap();
                let scaled = combined_loss(k * s, k * r, &cfg);
                prop_assert!((scaled - k * combined_loss(s, r, &cfg)).abs() <= 1e-9);
                let split = combined_loss(s, 0.0, &cfg) + combined_loss(0.0, r, &cfg);
                prop_assert!((split - combined_loss(s, r, &cfg)).abs() <= 1e-12);
            }
        }
    }
}

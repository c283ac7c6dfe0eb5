//! Depth-completion benchmark metrics.
//!
//! RMSE and MAE are reported in millimeters; iRMSE and iMAE are computed on
//! inverse depth in 1/km (`1000 / d_m`). Only pixels with ground truth are
//! scored.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::depth_image::{DenseDepthMap, DepthGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rmse_mm: f64,
    pub mae_mm: f64,
    pub irmse_per_km: f64,
    pub imae_per_km: f64,
    pub evaluated: usize,
    /// Ground-truth pixels with no (zero) predicted depth; left out of every
    /// metric.
    pub excluded: usize,
}

impl MetricReport {
    /// `key value` lines in fixed order.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "rmse_mm {}", self.rmse_mm);
        let _ = writeln!(out, "mae_mm {}", self.mae_mm);
        let _ = writeln!(out, "irmse_per_km {}", self.irmse_per_km);
        let _ = writeln!(out, "imae_per_km {}", self.imae_per_km);
        let _ = writeln!(out, "evaluated {}", self.evaluated);
        let _ = writeln!(out, "excluded {}", self.excluded);
        out
    }
}

pub fn compute_metrics(pred: &DenseDepthMap, gt: &DepthGrid) -> Result<MetricReport> {
    pred.ensure_dims(gt.dims())?;
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut inv_sq = 0.0;
    let mut inv_abs = 0.0;
    let mut n = 0usize;
    let mut excluded = 0usize;
    for (u, v, y) in gt.iter_valid() {
        let Some(p) = pred.get(u, v) else {
            excluded += 1;
            continue;
        };
        let e = (p - y) * 1000.0;
        let ie = 1000.0 / p - 1000.0 / y;
        sq += e * e;
        abs += e.abs();
        inv_sq += ie * ie;
        inv_abs += ie.abs();
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyEvaluation);
    }
    let n_f = n as f64;
    Ok(MetricReport {
        rmse_mm: (sq / n_f).sqrt(),
        mae_mm: abs / n_f,
        irmse_per_km: (inv_sq / n_f).sqrt(),
        imae_per_km: inv_abs / n_f,
        evaluated: n,
        excluded,
    })
}

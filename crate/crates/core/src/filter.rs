//! Reliable-point extraction from noisy projected depth.
//!
//! The image is split into non-overlapping `w_p x w_p` tiles (smaller at the
//! right and bottom borders). In each tile with at least one point, the
//! minimum depth `d_m` is found and only points with depth in
//! `[d_m, d_m + theta]` are kept: the nearest surface in a window is taken to
//! be real and anything behind it by more than an object thickness is treated
//! as a see-through return.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::depth_image::{DenseDepthMap, DepthGrid, SparseDepthMap};
use crate::error::{Error, Result};
use crate::scene::NOISE_TOLERANCE;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    /// Tile side in pixels.
    pub window: usize,
    /// Band above the tile minimum, meters.
    pub thickness: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            window: 16,
            thickness: 0.5,
        }
    }
}

impl FilterParams {
    pub fn new(window: usize, thickness: f64) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("window size must be at least 1".into()));
        }
        if !(thickness.is_finite() && thickness >= 0.0) {
            return Err(Error::Config(format!("thickness {thickness} must be >= 0")));
        }
        Ok(FilterParams { window, thickness })
    }
}

/// Per-tile minimum depth, `None` for tiles without points.
#[derive(Debug, Clone, PartialEq)]
pub struct TileMinima {
    pub window: usize,
    pub tiles_x: usize,
    pub tiles_y: usize,
    minima: Vec<Option<f64>>,
}

impl TileMinima {
    fn compute(s: &DepthGrid, window: usize) -> Self {
        let tiles_x = s.width().div_ceil(window);
        let tiles_y = s.height().div_ceil(window);
        let mut minima = vec![None; tiles_x * tiles_y];
        for (u, v, d) in s.iter_valid() {
            let slot: &mut Option<f64> = &mut minima[(v / window) * tiles_x + u / window];
            if slot.is_none_or(|m| d < m) {
                *slot = Some(d);
            }
        }
        TileMinima {
            window,
            tiles_x,
            tiles_y,
            minima,
        }
    }

    pub fn get(&self, tx: usize, ty: usize) -> Option<f64> {
        self.minima[ty * self.tiles_x + tx]
    }

    /// Minimum of the tile containing pixel `(u, v)`.
    pub fn at_pixel(&self, u: usize, v: usize) -> Option<f64> {
        self.get(u / self.window, v / self.window)
    }
}

#[derive(Debug, Clone)]
pub struct ReliablePointSet {
    pub kept: SparseDepthMap,
    pub params: FilterParams,
    pub input_count: usize,
    pub dropped_count: usize,
    pub minima: TileMinima,
}

impl ReliablePointSet {
    pub fn dropped_fraction(&self) -> f64 {
        if self.input_count == 0 {
            0.0
        } else {
            self.dropped_count as f64 / self.input_count as f64
        }
    }
}

pub fn filter_reliable(s: &SparseDepthMap, p: FilterParams) -> ReliablePointSet {
    let minima = TileMinima::compute(s, p.window);
    let mut kept = DepthGrid::new(s.width(), s.height());
    let mut input_count = 0;
    let mut kept_count = 0;
    for (u, v, d) in s.iter_valid() {
        input_count += 1;
        let d_m = minima.at_pixel(u, v).expect("tile holds this point");
        if d <= d_m + p.thickness {
            kept.set(u, v, Some(d)).expect("copied from a valid map");
            kept_count += 1;
        }
    }
    ReliablePointSet {
        kept: kept.into_sparse(s.provenance()),
        params: p,
        input_count,
        dropped_count: input_count - kept_count,
        minima,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub eta: f64,
    pub noisy_count: usize,
    pub evaluated_count: usize,
    /// Points skipped for lack of ground truth.
    pub unevaluated_count: usize,
    pub dropped_fraction: f64,
    pub tol: f64,
}

/// Fraction of points farther than `tol` from the ground truth. Points with
/// no ground truth underneath are left out.
pub fn noise_rate(s: &SparseDepthMap, truth: &DenseDepthMap, tol: f64) -> Result<NoiseReport> {
    truth.ensure_dims(s.dims())?;
    let mut noisy = 0;
    let mut evaluated = 0;
    let mut unevaluated = 0;
    for (u, v, d) in s.iter_valid() {
        match truth.get(u, v) {
            Some(t) => {
                evaluated += 1;
                if (d - t).abs() > tol {
                    noisy += 1;
                }
            }
            None => unevaluated += 1,
        }
    }
    if evaluated == 0 {
        return Err(Error::EmptyEvaluation);
    }
    Ok(NoiseReport {
        eta: noisy as f64 / evaluated as f64,
        noisy_count: noisy,
        evaluated_count: evaluated,
        unevaluated_count: unevaluated,
        dropped_fraction: 0.0,
        tol,
    })
}

/// Noise rate of the kept points, with the filter's dropped fraction.
pub fn noise_rate_reliable(sp: &ReliablePointSet, truth: &DenseDepthMap, tol: f64) -> Result<NoiseReport> {
    let mut report = noise_rate(&sp.kept, truth, tol)?;
    report.dropped_fraction = sp.dropped_fraction();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub window_grid: Vec<usize>,
    pub thickness_grid: Vec<f64>,
    pub tol: f64,
    /// Largest acceptable mean dropped fraction when choosing the window.
    pub max_drop: f64,
    /// Relative slack on the minimum noise rate when choosing thickness.
    pub slack: f64,
    /// Thickness held fixed while the window is chosen.
    pub window_stage_thickness: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            window_grid: vec![2, 4, 8, 16, 32],
            thickness_grid: vec![0.1, 0.25, 0.5, 1.0, 2.0],
            tol: NOISE_TOLERANCE,
            max_drop: 0.6,
            slack: 0.05,
            window_stage_thickness: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub params: FilterParams,
    pub mean_eta: f64,
    pub mean_dropped: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub selected: FilterParams,
    pub window_curve: Vec<SweepPoint>,
    pub thickness_curve: Vec<SweepPoint>,
    /// Every window had zero noise: there was nothing to filter.
    pub degenerate_noise_free: bool,
    /// Some window met the `max_drop` retention floor.
    pub retention_floor_met: bool,
}

fn evaluate(corpus: &[(SparseDepthMap, DenseDepthMap)], p: FilterParams, tol: f64) -> Result<SweepPoint> {
    let reports = corpus
        .par_iter()
        .map(|(s, truth)| noise_rate_reliable(&filter_reliable(s, p), truth, tol))
        .collect::<Result<Vec<_>>>()?;
    let n = reports.len() as f64;
    Ok(SweepPoint {
        params: p,
        mean_eta: reports.iter().map(|r| r.eta).sum::<f64>() / n,
        mean_dropped: reports.iter().map(|r| r.dropped_fraction).sum::<f64>() / n,
    })
}

/// Two-stage grid search: the window first, at a fixed thickness, then the
/// thickness at that window.
///
/// The window minimizes mean noise rate among windows whose mean dropped
/// fraction is within `max_drop`; exact ties go to the one dropping less. The
/// thickness is the largest whose mean noise rate is within `(1 + slack)` of
/// the best, which favors retention among near-equal noise rates.
pub fn sweep_params(corpus: &[(SparseDepthMap, DenseDepthMap)], cfg: &SweepConfig) -> Result<SweepResult> {
    if corpus.is_empty() || cfg.window_grid.is_empty() || cfg.thickness_grid.is_empty() {
        return Err(Error::Config("sweep needs a non-empty corpus and grids".into()));
    }
    if !(cfg.slack >= 0.0 && cfg.max_drop >= 0.0 && cfg.tol >= 0.0) {
        return Err(Error::Config("sweep slack, max_drop and tol must be >= 0".into()));
    }
    let window_curve = cfg
        .window_grid
        .iter()
        .map(|&w| evaluate(corpus, FilterParams::new(w, cfg.window_stage_thickness)?, cfg.tol))
        .collect::<Result<Vec<_>>>()?;

    let feasible: Vec<&SweepPoint> = window_curve.iter().filter(|p| p.mean_dropped <= cfg.max_drop).collect();
    let retention_floor_met = !feasible.is_empty();
    let degenerate_noise_free = window_curve.iter().all(|p| p.mean_eta == 0.0);
    let window = if !retention_floor_met {
        window_curve
            .iter()
            .min_by(|a, b| a.mean_dropped.total_cmp(&b.mean_dropped))
            .expect("non-empty grid")
            .params
            .window
    } else if degenerate_noise_free {
        feasible.iter().map(|p| p.params.window).max().expect("non-empty")
    } else {
        feasible
            .iter()
            .min_by(|a, b| {
                a.mean_eta
                    .total_cmp(&b.mean_eta)
                    .then(a.mean_dropped.total_cmp(&b.mean_dropped))
                    .then(a.params.window.cmp(&b.params.window))
            })
            .expect("non-empty")
            .params
            .window
    };

    let thickness_curve = cfg
        .thickness_grid
        .iter()
        .map(|&t| evaluate(corpus, FilterParams::new(window, t)?, cfg.tol))
        .collect::<Result<Vec<_>>>()?;
    let best = thickness_curve
        .iter()
        .map(|p| p.mean_eta)
        .fold(f64::INFINITY, f64::min);
    let thickness = thickness_curve
        .iter()
        .filter(|p| p.mean_eta <= (1.0 + cfg.slack) * best)
        .map(|p| p.params.thickness)
        .fold(f64::NEG_INFINITY, f64::max);

    Ok(SweepResult {
        selected: FilterParams::new(window, thickness)?,
        window_curve,
        thickness_curve,
        degenerate_noise_free,
        retention_floor_met,
    })
}

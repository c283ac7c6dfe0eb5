//! Procedural scenes with exact ray-cast depth.
//!
//! A scene is a background plane `z = background_z` in the world frame plus
//! axis-aligned boxes. Depth is computed analytically at pixel centers, so
//! rendered maps serve both as dense synthetic depth and as ground truth for
//! labeling projected points.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::depth_image::{DenseDepthMap, DepthGrid, SparseDepthMap};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Point3, RigidTransform};

/// Default noisy-point threshold in meters.
pub const NOISE_TOLERANCE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAlignedBox {
    pub center: Point3,
    /// Full edge lengths along x, y, z. A zero z-extent gives a
    /// fronto-parallel rectangle.
    pub extents: Vector3<f64>,
}

impl AxisAlignedBox {
    pub fn near_z(&self) -> f64 {
        self.center.z - self.extents.z / 2.0
    }

    pub fn far_z(&self) -> f64 {
        self.center.z + self.extents.z / 2.0
    }

    /// Ray parameter of the entry point, if the ray enters the box in front
    /// of its origin.
    fn intersect(&self, origin: &Point3, dir: &Vector3<f64>) -> Option<f64> {
        let mut t_min = f64::NEG_INFINITY;
        let mut t_max = f64::INFINITY;
        for i in 0..3 {
            let half = self.extents[i] / 2.0;
            let (lo, hi) = (self.center[i] - half, self.center[i] + half);
            if dir[i] == 0.0 {
                if origin[i] < lo || origin[i] > hi {
                    return None;
                }
                continue;
            }
            let t1 = (lo - origin[i]) / dir[i];
            let t2 = (hi - origin[i]) / dir[i];
            t_min = t_min.max(t1.min(t2));
            t_max = t_max.min(t1.max(t2));
        }
        (t_min <= t_max && t_min > 0.0).then_some(t_min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub background_z: f64,
    pub occluders: Vec<AxisAlignedBox>,
    pub seed: u64,
}

impl Scene {
    pub fn new(background_z: f64, occluders: Vec<AxisAlignedBox>, seed: u64) -> Result<Self> {
        if !(background_z.is_finite() && background_z > 0.0) {
            return Err(Error::Config(format!("background depth {background_z} must be > 0")));
        }
        for (i, b) in occluders.iter().enumerate() {
            let finite = b.center.iter().chain(b.extents.iter()).all(|x| x.is_finite());
            if !finite || b.extents.iter().any(|&e| e < 0.0) {
                return Err(Error::Config(format!("occluder {i} has invalid geometry")));
            }
            if b.near_z() <= 0.0 {
                return Err(Error::Config(format!("occluder {i} is not in front of the cameras")));
            }
            if b.far_z() >= background_z {
                return Err(Error::Config(format!(
                    "occluder {i} far face {} not in front of background {background_z}",
                    b.far_z()
                )));
            }
        }
        Ok(Scene {
            background_z,
            occluders,
            seed,
        })
    }

    /// Depth along `dir` from `origin`, where `dir` is scaled so that the ray
    /// parameter equals camera-frame depth.
    fn cast(&self, origin: &Point3, dir: &Vector3<f64>) -> Option<f64> {
        let mut best = (dir.z > 0.0)
            .then(|| (self.background_z - origin.z) / dir.z)
            .filter(|&s| s > 0.0 && s.is_finite());
        for b in &self.occluders {
            if let Some(s) = b.intersect(origin, dir) {
                if best.is_none_or(|cur| s < cur) {
                    best = Some(s);
                }
            }
        }
        best
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(out, "bg z={}", self.background_z);
        for b in &self.occluders {
            let _ = writeln!(
                out,
                "box {} {} {} {} {} {}",
                b.center.x, b.center.y, b.center.z, b.extents.x, b.extents.y, b.extents.z
            );
        }
        out
    }

    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let err = |line: usize, reason: String| Error::Parse {
            path: source.to_path_buf(),
            line,
            reason,
        };
        let mut bg = None;
        let mut seed = 0;
        let mut boxes = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            let mut parts = line.split_whitespace();
            match parts.next() {
                None => {}
                Some("bg") => {
                    let z = parts
                        .next()
                        .and_then(|s| s.strip_prefix("z="))
                        .and_then(|s| s.parse::<f64>().ok())
                        .ok_or_else(|| err(line_no, format!("expected `bg z=<m>`, found `{line}`")))?;
                    if bg.replace(z).is_some() {
                        return Err(err(line_no, "duplicate background".into()));
                    }
                }
                Some("box") => {
                    let nums: Vec<f64> = parts
                        .map(str::parse)
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| err(line_no, format!("bad number in `{line}`")))?;
                    if nums.len() != 6 {
                        return Err(err(line_no, format!("box needs 6 numbers, found {}", nums.len())));
                    }
                    boxes.push(AxisAlignedBox {
                        center: Vector3::new(nums[0], nums[1], nums[2]),
                        extents: Vector3::new(nums[3], nums[4], nums[5]),
                    });
                }
                Some("seed") => {
                    seed = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err(line_no, format!("bad seed line `{line}`")))?;
                }
                Some(other) => return Err(err(line_no, format!("unknown primitive `{other}`"))),
            }
        }
        let bg = bg.ok_or_else(|| err(0, "missing `bg` line".into()))?;
        Scene::new(bg, boxes, seed)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OccluderLayout {
    /// Independent boxes with their own depths and thicknesses.
    Boxes,
    /// Zero-thickness rectangles sharing one depth: a near plane in front of
    /// the background. With `disparity_lattice = Some(f * b)` the depth is
    /// drawn from `{ f*b / k : k integer }`, so that a camera offset `b`
    /// along x shifts the near plane by a whole number of pixels.
    TwoPlane { disparity_lattice: Option<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGenConfig {
    pub n_occluders: usize,
    /// Range of box center depths, meters.
    pub occluder_depth: (f64, f64),
    pub background_depth: (f64, f64),
    pub width: (f64, f64),
    pub height: (f64, f64),
    /// Box z-extent; ignored for the two-plane layout.
    pub thickness: (f64, f64),
    /// Lateral placement as x/z and y/z ratios of the box center.
    pub x_slope: (f64, f64),
    pub y_slope: (f64, f64),
    pub layout: OccluderLayout,
    pub seed: u64,
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        SceneGenConfig {
            n_occluders: 6,
            occluder_depth: (4.0, 12.0),
            background_depth: (20.0, 20.0),
            width: (0.5, 2.5),
            height: (0.5, 2.0),
            thickness: (0.2, 1.5),
            x_slope: (-0.8, 0.8),
            y_slope: (-0.25, 0.1),
            layout: OccluderLayout::Boxes,
            seed: 0,
        }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64), positive: bool) -> Result<()> {
    let ok = lo.is_finite() && hi.is_finite() && lo <= hi && (!positive || lo > 0.0);
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("invalid {name} range [{lo}, {hi}]")))
    }
}

fn sample(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

impl SceneGenConfig {
    pub fn validate(&self) -> Result<()> {
        check_range("occluder depth", self.occluder_depth, true)?;
        check_range("background depth", self.background_depth, true)?;
        check_range("width", self.width, true)?;
        check_range("height", self.height, true)?;
        check_range("x slope", self.x_slope, false)?;
        check_range("y slope", self.y_slope, false)?;
        let half_thickness = match self.layout {
            OccluderLayout::Boxes => {
                check_range("thickness", self.thickness, true)?;
                self.thickness.1 / 2.0
            }
            OccluderLayout::TwoPlane { disparity_lattice } => {
                if let Some(l) = disparity_lattice {
                    if lattice_steps(l, self.occluder_depth).is_none() {
                        return Err(Error::Config(format!(
                            "no depth f*b/k with f*b = {l} inside occluder range {:?}",
                            self.occluder_depth
                        )));
                    }
                }
                0.0
            }
        };
        if self.occluder_depth.1 + half_thickness >= self.background_depth.0 {
            return Err(Error::Config(format!(
                "occluders up to {} m do not fit in front of background at {} m",
                self.occluder_depth.1 + half_thickness,
                self.background_depth.0
            )));
        }
        if self.occluder_depth.0 - half_thickness <= 0.0 {
            return Err(Error::Config("occluders must lie in front of the cameras".into()));
        }
        Ok(())
    }
}

fn lattice_steps(lattice: f64, (lo, hi): (f64, f64)) -> Option<(u64, u64)> {
    if !(lattice.is_finite() && lattice > 0.0) {
        return None;
    }
    let k_min = (lattice / hi).ceil().max(1.0) as u64;
    let k_max = (lattice / lo).floor() as u64;
    (k_min <= k_max).then_some((k_min, k_max))
}

pub fn generate_scene(cfg: &SceneGenConfig) -> Result<Scene> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let background = sample(&mut rng, cfg.background_depth);
    let plane_z = match cfg.layout {
        OccluderLayout::Boxes => None,
        OccluderLayout::TwoPlane { disparity_lattice: None } => Some(sample(&mut rng, cfg.occluder_depth)),
        OccluderLayout::TwoPlane {
            disparity_lattice: Some(l),
        } => {
            let (k_min, k_max) = lattice_steps(l, cfg.occluder_depth).expect("validated");
            Some(l / rng.random_range(k_min..=k_max) as f64)
        }
    };
    let occluders = (0..cfg.n_occluders)
        .map(|_| {
            let z = plane_z.unwrap_or_else(|| sample(&mut rng, cfg.occluder_depth));
            let x = z * sample(&mut rng, cfg.x_slope);
            let y = z * sample(&mut rng, cfg.y_slope);
            let ex = sample(&mut rng, cfg.width);
            let ey = sample(&mut rng, cfg.height);
            let ez = match plane_z {
                Some(_) => 0.0,
                None => sample(&mut rng, cfg.thickness),
            };
            AxisAlignedBox {
                center: Vector3::new(x, y, z),
                extents: Vector3::new(ex, ey, ez),
            }
        })
        .collect();
    Scene::new(background, occluders, cfg.seed)
}

/// Ray-casts `scene` through every pixel center of a camera with intrinsics
/// `k` and world-to-camera pose `pose`. Pixels whose ray hits nothing are
/// invalid.
pub fn render_depth(scene: &Scene, pose: &RigidTransform, k: &CameraIntrinsics) -> DenseDepthMap {
    let rt = pose.rotation().transpose();
    let origin = -(rt * pose.translation());
    let (w, h) = k.dims();
    let rows: Vec<Vec<Option<f64>>> = (0..h)
        .into_par_iter()
        .map(|v| {
            let dy = (v as f64 - k.cy) / k.fy;
            (0..w)
                .map(|u| {
                    let dir_cam = Vector3::new((u as f64 - k.cx) / k.fx, dy, 1.0);
                    scene.cast(&origin, &(rt * dir_cam))
                })
                .collect()
        })
        .collect();
    let mut values = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for d in rows.into_iter().flatten() {
        values.push(d.unwrap_or(0.0));
        valid.push(d.is_some());
    }
    DepthGrid::from_parts(w, h, values, valid)
        .expect("ray casts yield positive finite depths")
        .into_dense()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledPoint {
    pub u: usize,
    pub v: usize,
    pub value: f64,
    pub truth: f64,
    pub noisy: bool,
}

/// Labels each valid point noisy iff `|value - truth| > tol`.
pub fn oracle_label(points: &SparseDepthMap, truth: &DenseDepthMap, tol: f64) -> Result<Vec<LabeledPoint>> {
    truth.ensure_dims(points.dims())?;
    points
        .iter_valid()
        .map(|(u, v, value)| {
            let t = truth.get(u, v).ok_or(Error::MissingTruth { u, v })?;
            Ok(LabeledPoint {
                u,
                v,
                value,
                truth: t,
                noisy: (value - t).abs() > tol,
            })
        })
        .collect()
}

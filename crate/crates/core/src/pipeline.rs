//! End-to-end experiment driver.
//!
//! For each scene: generate geometry, render the LiDAR view, sparsify it,
//! pick a target RGB camera, render that camera's ground truth, project the
//! sparse depth, filter it, and score everything. Each map is passed to the
//! next stage exactly as it was written to disk (through the 16-bit codec),
//! so running the CLI stage by stage reproduces the same bytes.
//!
//! Every random stage draws from its own seed, derived from the global seed,
//! the stage name and the scene index. Adding or removing scenes never
//! changes the randomness of the others.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::depth_image::{apply_mask, read_depth_png, write_depth_png, BinaryMask, DenseDepthMap, DepthGrid, SparseDepthMap};
use crate::error::{Error, Result};
use crate::filter::{filter_reliable, noise_rate, noise_rate_reliable, sweep_params, FilterParams, NoiseReport, SweepConfig, SweepResult};
use crate::geometry::{CameraGeometry, CameraRig, RigidTransform};
use crate::kv;
use crate::metrics::{compute_metrics, MetricReport};
use crate::projection::{project_sparse, random_target_camera, ProjectionStats};
use crate::scene::{generate_scene, render_depth, OccluderLayout, SceneGenConfig, NOISE_TOLERANCE};
use crate::sparsify::{scanline_bank, sparsify_bernoulli, sparsify_with_mask, BernoulliConfig, MaskBank, ScanlineMaskConfig};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "DEPTHSIM_THREADS";

pub const MANIFEST_FILE: &str = "manifest.json";

/// Seed for `stage` of scene `index`, independent of every other
/// `(stage, index)` pair.
pub fn derive_seed(global: u64, stage: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update((stage.len() as u64).to_le_bytes());
    h.update(stage.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("32-byte digest"))
}

#[derive(Debug, Clone, PartialEq)]
pub enum MaskSource {
    Dir(PathBuf),
    Scanline { pattern: ScanlineMaskConfig, count: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SparsifyMode {
    /// Keep every valid pixel.
    Dense,
    Bernoulli { keep_probability: f64 },
    Mask(MaskSource),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetPolicy {
    Random,
    Named(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RigSource {
    Calibration(PathBuf),
    /// Default synthetic cameras in a left/right pair around the LiDAR.
    Stereo { offset: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub rig: RigSource,
    pub n_scenes: usize,
    pub scene: SceneGenConfig,
    pub sparsify: SparsifyMode,
    pub target: TargetPolicy,
    pub filter: FilterParams,
    pub tol: f64,
    pub sweep: Option<SweepConfig>,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let block = kv::merge(kv::parse_file(path)?, path)?;
        Self::from_block(&block, path.parent().unwrap_or(Path::new(".")))
    }

    /// Relative paths in `block` resolve against `base`.
    pub fn from_block(b: &kv::Block, base: &Path) -> Result<Self> {
        b.check_keys(&[
            "output", "seed", "n_scenes", "calib", "rig_offset", "sparsify", "p_b", "mask_dir",
            "mask_count", "mask_row_spacing", "mask_column_keep", "target", "wp", "theta", "tol",
            "scene_occluders", "scene_layout", "scene_disparity_lattice", "scene_occluder_depth",
            "scene_background_depth", "scene_width", "scene_height", "scene_thickness", "scene_x_slope",
            "scene_y_slope", "sweep_wp_grid", "sweep_theta_grid", "sweep_max_drop", "sweep_slack",
        ])?;
        let resolve = |p: &str| {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        let pair = |key: &str, default: (f64, f64)| -> Result<(f64, f64)> {
            Ok(b.parse_array::<f64>(key, 2)?.map_or(default, |v| (v[0], v[1])))
        };

        let rig = match b.get("calib") {
            Some(p) => {
                let p = resolve(p);
                if !p.is_file() {
                    return Err(Error::Config(format!("calibration file {} not found", p.display())));
                }
                RigSource::Calibration(p)
            }
            None => RigSource::Stereo {
                offset: b.parse("rig_offset")?.unwrap_or(0.5),
            },
        };

        let defaults = SceneGenConfig::default();
        let layout = match b.get("scene_layout").unwrap_or("boxes") {
            "boxes" => OccluderLayout::Boxes,
            "two-plane" => OccluderLayout::TwoPlane {
                disparity_lattice: b.parse("scene_disparity_lattice")?,
            },
            other => return Err(Error::Config(format!("unknown scene_layout `{other}`"))),
        };
        let scene = SceneGenConfig {
            n_occluders: b.parse("scene_occluders")?.unwrap_or(defaults.n_occluders),
            occluder_depth: pair("scene_occluder_depth", defaults.occluder_depth)?,
            background_depth: pair("scene_background_depth", defaults.background_depth)?,
            width: pair("scene_width", defaults.width)?,
            height: pair("scene_height", defaults.height)?,
            thickness: pair("scene_thickness", defaults.thickness)?,
            x_slope: pair("scene_x_slope", defaults.x_slope)?,
            y_slope: pair("scene_y_slope", defaults.y_slope)?,
            layout,
            seed: 0,
        };
        scene.validate()?;

        let sparsify = match b.get("sparsify").unwrap_or("mask") {
            "none" => SparsifyMode::Dense,
            "bernoulli" => {
                let p: f64 = b.parse_required("p_b")?;
                BernoulliConfig::new(p, 0)?;
                SparsifyMode::Bernoulli { keep_probability: p }
            }
            "mask" => match b.get("mask_dir") {
                Some(dir) => {
                    let dir = resolve(dir);
                    if !dir.is_dir() {
                        return Err(Error::Config(format!("mask directory {} not found", dir.display())));
                    }
                    SparsifyMode::Mask(MaskSource::Dir(dir))
                }
                None => SparsifyMode::Mask(MaskSource::Scanline {
                    pattern: ScanlineMaskConfig {
                        // filled in from the rig once it is loaded
                        width: 0,
                        height: 0,
                        row_spacing: b.parse("mask_row_spacing")?.unwrap_or(4),
                        column_keep: b.parse("mask_column_keep")?.unwrap_or(0.6),
                    },
                    count: b.parse("mask_count")?.unwrap_or(8),
                }),
            },
            other => return Err(Error::Config(format!("unknown sparsify mode `{other}`"))),
        };

        let target = match b.get("target").unwrap_or("random") {
            "random" => TargetPolicy::Random,
            name => TargetPolicy::Named(name.to_string()),
        };

        let sweep = match (b.parse_list::<usize>("sweep_wp_grid")?, b.parse_list::<f64>("sweep_theta_grid")?) {
            (None, None) => None,
            (w, t) => {
                let d = SweepConfig::default();
                Some(SweepConfig {
                    window_grid: w.unwrap_or(d.window_grid),
                    thickness_grid: t.unwrap_or(d.thickness_grid),
                    tol: b.parse("tol")?.unwrap_or(d.tol),
                    max_drop: b.parse("sweep_max_drop")?.unwrap_or(d.max_drop),
                    slack: b.parse("sweep_slack")?.unwrap_or(d.slack),
                    window_stage_thickness: d.window_stage_thickness,
                })
            }
        };

        let default_filter = FilterParams::default();
        Ok(PipelineConfig {
            rig,
            n_scenes: b.parse_required("n_scenes")?,
            scene,
            sparsify,
            target,
            filter: FilterParams::new(
                b.parse("wp")?.unwrap_or(default_filter.window),
                b.parse("theta")?.unwrap_or(default_filter.thickness),
            )?,
            tol: b.parse("tol")?.unwrap_or(NOISE_TOLERANCE),
            sweep,
            output_dir: resolve(b.require("output")?),
            seed: b.parse("seed")?.unwrap_or(0),
        })
    }

    /// Normalized `key = value` rendering, stored in the manifest.
    pub fn to_block(&self) -> kv::Block {
        let mut b = kv::Block::new("<snapshot>");
        let pair = |(a, c): (f64, f64)| format!("{a} {c}");
        b.push("output", self.output_dir.display());
        b.push("seed", self.seed);
        b.push("n_scenes", self.n_scenes);
        match &self.rig {
            RigSource::Calibration(p) => b.push("calib", p.display()),
            RigSource::Stereo { offset } => b.push("rig_offset", offset),
        }
        match &self.sparsify {
            SparsifyMode::Dense => b.push("sparsify", "none"),
            SparsifyMode::Bernoulli { keep_probability } => {
                b.push("sparsify", "bernoulli");
                b.push("p_b", keep_probability);
            }
            SparsifyMode::Mask(MaskSource::Dir(d)) => {
                b.push("sparsify", "mask");
                b.push("mask_dir", d.display());
            }
            SparsifyMode::Mask(MaskSource::Scanline { pattern, count }) => {
                b.push("sparsify", "mask");
                b.push("mask_count", count);
                b.push("mask_row_spacing", pattern.row_spacing);
                b.push("mask_column_keep", pattern.column_keep);
            }
        }
        match &self.target {
            TargetPolicy::Random => b.push("target", "random"),
            TargetPolicy::Named(n) => b.push("target", n),
        }
        b.push("wp", self.filter.window);
        b.push("theta", self.filter.thickness);
        b.push("tol", self.tol);
        let s = &self.scene;
        b.push("scene_occluders", s.n_occluders);
        match s.layout {
            OccluderLayout::Boxes => b.push("scene_layout", "boxes"),
            OccluderLayout::TwoPlane { disparity_lattice } => {
                b.push("scene_layout", "two-plane");
                if let Some(l) = disparity_lattice {
                    b.push("scene_disparity_lattice", l);
                }
            }
        }
        b.push("scene_occluder_depth", pair(s.occluder_depth));
        b.push("scene_background_depth", pair(s.background_depth));
        b.push("scene_width", pair(s.width));
        b.push("scene_height", pair(s.height));
        b.push("scene_thickness", pair(s.thickness));
        b.push("scene_x_slope", pair(s.x_slope));
        b.push("scene_y_slope", pair(s.y_slope));
        if let Some(sw) = &self.sweep {
            let join = |v: Vec<String>| v.join(",");
            b.push("sweep_wp_grid", join(sw.window_grid.iter().map(|w| w.to_string()).collect()));
            b.push("sweep_theta_grid", join(sw.thickness_grid.iter().map(|t| t.to_string()).collect()));
            b.push("sweep_max_drop", sw.max_drop);
            b.push("sweep_slack", sw.slack);
        }
        b
    }

    pub fn load_rig(&self) -> Result<CameraRig> {
        match &self.rig {
            RigSource::Calibration(p) => CameraRig::load(p),
            RigSource::Stereo { offset } => default_stereo_rig(*offset),
        }
    }
}

/// LiDAR and both RGB cameras share the default synthetic training crop.
pub fn default_stereo_rig(offset: f64) -> Result<CameraRig> {
    let k = CameraGeometry::default().train_crop()?;
    CameraRig::symmetric_stereo(k, k, offset)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub scene: u64,
    pub sparsify: u64,
    pub target: u64,
}

impl StageSeeds {
    pub fn derive(global: u64, index: usize) -> Self {
        let i = index as u64;
        StageSeeds {
            scene: derive_seed(global, "scene", i),
            sparsify: derive_seed(global, "sparsify", i),
            target: derive_seed(global, "target", i),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub index: usize,
    pub dir: String,
    pub seeds: StageSeeds,
    pub target_camera: String,
    pub mask_id: Option<usize>,
    pub projection: ProjectionStats,
    pub noise_raw: Option<NoiseReport>,
    pub noise_reliable: Option<NoiseReport>,
    pub metrics_raw: Option<MetricReport>,
    pub metrics_reliable: Option<MetricReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mean_eta_raw: Option<f64>,
    pub mean_eta_reliable: Option<f64>,
    pub mean_dropped_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: String,
    pub seed: u64,
    pub mask_bank_seed: u64,
    pub scenes: Vec<SceneRecord>,
    pub summary: RunSummary,
    pub sweep: Option<SweepResult>,
    /// SHA-256 of every output, keyed by path relative to the manifest.
    pub files: BTreeMap<String, String>,
    /// Wall-clock milliseconds per scene and stage.
    pub timings_ms: BTreeMap<String, BTreeMap<String, f64>>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Writes a depth map and returns what a reader of the file will see.
fn emit(grid: &DepthGrid, path: &Path) -> Result<DepthGrid> {
    write_depth_png(grid, path)?;
    DepthGrid::from_codes(grid.width(), grid.height(), &grid.to_codes()?)
}

struct SceneOutput {
    record: SceneRecord,
    timings: BTreeMap<String, f64>,
    /// Corpus entry for the sweep: projected map and its ground truth.
    pair: (SparseDepthMap, DenseDepthMap),
}

struct Stopwatch {
    start: Instant,
    timings: BTreeMap<String, f64>,
}

impl Stopwatch {
    fn new() -> Self {
        Stopwatch {
            start: Instant::now(),
            timings: BTreeMap::new(),
        }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.timings
            .insert(stage.to_string(), (now - self.start).as_secs_f64() * 1e3);
        self.start = now;
    }
}

fn scene_dir_name(index: usize) -> String {
    format!("scene_{index:04}")
}

fn run_scene(
    cfg: &PipelineConfig,
    rig: &CameraRig,
    bank: Option<&MaskBank>,
    index: usize,
    work: &Path,
) -> Result<SceneOutput> {
    let seeds = StageSeeds::derive(cfg.seed, index);
    let mut clock = Stopwatch::new();
    let stage = |name: &'static str| move |e: Error| e.in_stage(name, index);

    let scene = generate_scene(&SceneGenConfig {
        seed: seeds.scene,
        ..cfg.scene.clone()
    })
    .map_err(stage("generate"))?;
    scene.save(&work.join("scene.txt")).map_err(stage("generate"))?;
    clock.lap("generate");

    let lidar_dense = render_depth(&scene, &RigidTransform::identity(), &rig.lidar);
    let lidar_dense = emit(&lidar_dense, &work.join("lidar_dense.png"))
        .map_err(stage("render"))?
        .into_dense();
    clock.lap("render");

    let (sparse, mask_id) = match &cfg.sparsify {
        SparsifyMode::Dense => {
            let all = BinaryMask::filled(lidar_dense.width(), lidar_dense.height(), true);
            (apply_mask(&lidar_dense, &all), None)
        }
        SparsifyMode::Bernoulli { keep_probability } => {
            let b = BernoulliConfig::new(*keep_probability, seeds.sparsify).map_err(stage("sparsify"))?;
            (Ok(sparsify_bernoulli(&lidar_dense, &b)), None)
        }
        SparsifyMode::Mask(_) => {
            let bank = bank.expect("mask bank loaded for mask mode");
            match sparsify_with_mask(&lidar_dense, bank, seeds.sparsify) {
                Ok((s, id)) => (Ok(s), Some(id)),
                Err(e) => (Err(e), None),
            }
        }
    };
    let sparse = sparse.map_err(stage("sparsify"))?;
    emit(&sparse, &work.join("sparse.png")).map_err(stage("sparsify"))?;
    clock.lap("sparsify");

    let camera = match &cfg.target {
        TargetPolicy::Random => random_target_camera(rig, &mut ChaCha8Rng::seed_from_u64(seeds.target)),
        TargetPolicy::Named(n) => rig
            .camera(n)
            .ok_or_else(|| Error::Config(format!("no camera named `{n}` in rig")))
            .map_err(stage("project"))?,
    };
    let truth = render_depth(&scene, &camera.lidar_to_camera, &camera.intrinsics);
    let truth = emit(&truth, &work.join("truth.png"))
        .map_err(stage("render"))?
        .into_dense();
    let projection = project_sparse(&sparse, &rig.lidar, &camera.lidar_to_camera, &camera.intrinsics)
        .map_err(stage("project"))?;
    let projected = emit(&projection.projected, &work.join("projected.png"))
        .map_err(stage("project"))?
        .into_sparse(projection.projected.provenance());
    clock.lap("project");

    let reliable = filter_reliable(&projected, cfg.filter);
    emit(&reliable.kept, &work.join("reliable.png")).map_err(stage("filter"))?;
    clock.lap("filter");

    let record = SceneRecord {
        index,
        dir: scene_dir_name(index),
        seeds,
        target_camera: camera.name.clone(),
        mask_id,
        projection: projection.stats,
        noise_raw: optional(noise_rate(&projected, &truth, cfg.tol)).map_err(stage("evaluate"))?,
        noise_reliable: optional(noise_rate_reliable(&reliable, &truth, cfg.tol)).map_err(stage("evaluate"))?,
        metrics_raw: optional(compute_metrics(&truth, &projected)).map_err(stage("evaluate"))?,
        metrics_reliable: optional(compute_metrics(&truth, &reliable.kept)).map_err(stage("evaluate"))?,
    };
    fs::write(work.join("report.json"), serde_json::to_vec_pretty(&record)?).map_err(|e| Error::from(e).in_stage("evaluate", index))?;
    clock.lap("evaluate");

    Ok(SceneOutput {
        record,
        timings: clock.timings,
        pair: (projected, truth),
    })
}

/// Nothing to score is not a failure.
fn optional<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(x) => Ok(Some(x)),
        Err(Error::EmptyEvaluation) => Ok(None),
        Err(e) => Err(e),
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn hash_tree(root: &Path, dir: &Path, files: &mut BTreeMap<String, String>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            hash_tree(root, &path, files)?;
        } else {
            let rel = path.strip_prefix(root).expect("under root");
            let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            files.insert(key, sha256_file(&path)?);
        }
    }
    Ok(())
}

/// Runs every scene and writes `manifest.json` into the output directory.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunManifest> {
    let rig = cfg.load_rig()?;
    if let TargetPolicy::Named(n) = &cfg.target {
        if rig.camera(n).is_none() {
            return Err(Error::Config(format!("no camera named `{n}` in rig")));
        }
    }
    let out = &cfg.output_dir;
    fs::create_dir_all(out)?;

    let mask_bank_seed = derive_seed(cfg.seed, "mask_bank", 0);
    let bank = match &cfg.sparsify {
        SparsifyMode::Mask(MaskSource::Dir(d)) => Some(MaskBank::load_dir(d)?),
        SparsifyMode::Mask(MaskSource::Scanline { pattern, count }) => {
            let pattern = ScanlineMaskConfig {
                width: rig.lidar.width,
                height: rig.lidar.height,
                ..*pattern
            };
            let bank = scanline_bank(&pattern, *count, mask_bank_seed)?;
            let mask_dir = out.join("masks");
            if mask_dir.exists() {
                fs::remove_dir_all(&mask_dir)?;
            }
            fs::create_dir_all(&mask_dir)?;
            for (i, m) in bank.masks().iter().enumerate() {
                m.write_png(&mask_dir.join(format!("mask_{i:04}.png")))?;
            }
            Some(bank)
        }
        _ => None,
    };
    if let Some(b) = &bank {
        if b.dims() != rig.lidar.dims() {
            return Err(Error::DimensionMismatch {
                expected: rig.lidar.dims(),
                actual: b.dims(),
            });
        }
    }

    let outputs = (0..cfg.n_scenes)
        .into_par_iter()
        .map(|index| {
            let final_dir = out.join(scene_dir_name(index));
            let work = out.join(format!("{}.partial", scene_dir_name(index)));
            for d in [&final_dir, &work] {
                if d.exists() {
                    fs::remove_dir_all(d).map_err(|e| Error::from(e).in_stage("write", index))?;
                }
            }
            fs::create_dir_all(&work).map_err(|e| Error::from(e).in_stage("write", index))?;
            let output = run_scene(cfg, &rig, bank.as_ref(), index, &work)?;
            fs::rename(&work, &final_dir).map_err(|e| Error::from(e).in_stage("write", index))?;
            Ok(output)
        })
        .collect::<Vec<Result<SceneOutput>>>();
    let outputs = outputs.into_iter().collect::<Result<Vec<_>>>()?;

    let sweep = match &cfg.sweep {
        Some(sc) if !outputs.is_empty() => {
            let corpus: Vec<_> = outputs.iter().map(|o| o.pair.clone()).collect();
            Some(sweep_params(&corpus, sc).map_err(|e| e.in_stage("sweep", 0))?)
        }
        _ => None,
    };

    let records: Vec<SceneRecord> = outputs.iter().map(|o| o.record.clone()).collect();
    let summary = RunSummary {
        mean_eta_raw: mean(records.iter().filter_map(|r| r.noise_raw.map(|n| n.eta))),
        mean_eta_reliable: mean(records.iter().filter_map(|r| r.noise_reliable.map(|n| n.eta))),
        mean_dropped_fraction: mean(records.iter().filter_map(|r| r.noise_reliable.map(|n| n.dropped_fraction))),
    };
    let mut files = BTreeMap::new();
    if let Some(SparsifyMode::Mask(MaskSource::Scanline { .. })) = Some(&cfg.sparsify) {
        hash_tree(out, &out.join("masks"), &mut files)?;
    }
    for r in &records {
        hash_tree(out, &out.join(&r.dir), &mut files)?;
    }
    let manifest = RunManifest {
        config: kv::render(&[cfg.to_block()]),
        seed: cfg.seed,
        mask_bank_seed,
        scenes: records,
        summary,
        sweep,
        files,
        timings_ms: outputs
            .into_iter()
            .map(|o| (o.record.dir, o.timings))
            .collect(),
    };
    let tmp = out.join(format!("{MANIFEST_FILE}.partial"));
    fs::write(&tmp, serde_json::to_vec_pretty(&manifest)?)?;
    fs::rename(&tmp, out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Runs the pipeline on a dedicated pool of `threads` workers.
pub fn run_pipeline_with_threads(cfg: &PipelineConfig, threads: usize) -> Result<RunManifest> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_pipeline(cfg))
}

/// Worker cap from [`THREADS_ENV`], if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CompareReport {
    pub differing: Vec<String>,
    pub missing: Vec<String>,
}

impl CompareReport {
    pub fn is_identical(&self) -> bool {
        self.differing.is_empty() && self.missing.is_empty()
    }
}

/// Compares the outputs of two runs by content hash. A file is missing if
/// either manifest lacks it or it is gone from disk.
pub fn compare_runs(manifest_a: &Path, manifest_b: &Path) -> Result<CompareReport> {
    let a = RunManifest::load(manifest_a)?;
    let b = RunManifest::load(manifest_b)?;
    let root_a = manifest_a.parent().unwrap_or(Path::new("."));
    let root_b = manifest_b.parent().unwrap_or(Path::new("."));
    let on_disk = |root: &Path, rel: &str| -> Result<Option<String>> {
        let p = root.join(rel);
        if p.is_file() {
            sha256_file(&p).map(Some)
        } else {
            Ok(None)
        }
    };
    let mut report = CompareReport::default();
    let keys: std::collections::BTreeSet<&String> = a.files.keys().chain(b.files.keys()).collect();
    for key in keys {
        let (Some(_), Some(_)) = (a.files.get(key), b.files.get(key)) else {
            report.missing.push(key.clone());
            continue;
        };
        match (on_disk(root_a, key)?, on_disk(root_b, key)?) {
            (Some(ha), Some(hb)) => {
                if ha != hb || Some(&ha) != a.files.get(key) || Some(&hb) != b.files.get(key) {
                    report.differing.push(key.clone());
                }
            }
            _ => report.missing.push(key.clone()),
        }
    }
    Ok(report)
}

/// Reads `scene_*/projected.png` and `scene_*/truth.png` pairs from a run
/// directory, in directory-name order.
pub fn load_corpus(run_dir: &Path) -> Result<Vec<(SparseDepthMap, DenseDepthMap)>> {
    let mut dirs: Vec<_> = fs::read_dir(run_dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    dirs.retain(|d| d.is_dir() && d.join("projected.png").is_file() && d.join("truth.png").is_file());
    dirs.sort();
    dirs.iter()
        .map(|d| {
            let s = read_depth_png(&d.join("projected.png"))?.into_sparse(crate::depth_image::Provenance::Projected);
            let t = read_depth_png(&d.join("truth.png"))?.into_dense();
            Ok((s, t))
        })
        .collect()
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use depthsim::depth_image::{read_depth_png, write_depth_png, BinaryMask, Provenance};
use depthsim::filter::{filter_reliable, noise_rate, noise_rate_reliable, sweep_params, FilterParams, SweepConfig};
use depthsim::metrics::compute_metrics;
use depthsim::pipeline::{self, default_stereo_rig, load_corpus, PipelineConfig};
use depthsim::projection::{project_sparse, random_target_camera};
use depthsim::scene::{generate_scene, render_depth, OccluderLayout, Scene, SceneGenConfig, NOISE_TOLERANCE};
use depthsim::sparsify::{scanline_bank, sparsify_bernoulli, sparsify_with_mask, BernoulliConfig, MaskBank, ScanlineMaskConfig};
use depthsim::{CameraRig, Error, RigidTransform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EXIT_CONFIG: u8 = 1;
const EXIT_STAGE: u8 = 2;
const EXIT_DIFF: u8 = 3;

#[derive(Parser)]
#[command(name = "depthsim", version, about = "LiDAR-to-camera projection noise simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random scene file.
    GenScene(GenSceneArgs),
    /// Ray-cast a scene into one camera of a rig.
    Render(RenderArgs),
    /// Sparsify a dense depth map.
    Sparsify(SparsifyArgs),
    /// Project a sparse LiDAR-view map into an RGB camera.
    Project(ProjectArgs),
    /// Keep only the reliable points of a projected map.
    Filter(FilterArgs),
    /// Grid-search filter parameters over a run directory.
    Sweep(SweepArgs),
    /// Score a prediction against ground truth.
    Eval(EvalArgs),
    /// Noise rate of sparse maps before and after filtering.
    Noise(NoiseArgs),
    /// Write a bank of synthetic scanline masks.
    GenMasks(GenMasksArgs),
    /// Run or compare full experiments.
    #[command(subcommand)]
    Pipeline(PipelineCommand),
}

#[derive(Subcommand)]
enum PipelineCommand {
    /// Run every scene of a config; the thread count can be capped with DEPTHSIM_THREADS.
    Run { config: PathBuf },
    /// Compare two runs by output hashes.
    Compare { manifest_a: PathBuf, manifest_b: PathBuf },
}

#[derive(Args)]
struct RigArgs {
    /// Calibration file; without it a synthetic stereo pair is used.
    #[arg(long)]
    calib: Option<PathBuf>,
    /// Lateral camera offset of the synthetic stereo pair, in meters.
    #[arg(long, default_value_t = 0.5)]
    rig_offset: f64,
}

impl RigArgs {
    fn load(&self) -> anyhow::Result<CameraRig> {
        Ok(match &self.calib {
            Some(p) => CameraRig::load(p)?,
            None => default_stereo_rig(self.rig_offset)?,
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Layout {
    Boxes,
    TwoPlane,
}

#[derive(Args)]
struct GenSceneArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Take scene parameters from a pipeline config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    layout: Option<Layout>,
    #[arg(long)]
    occluders: Option<usize>,
    /// Snap two-plane occluder depths to integer disparity for this f*b.
    #[arg(long)]
    disparity_lattice: Option<f64>,
    /// Occluder depth range "min,max" in meters.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    occluder_depth: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', num_args = 2)]
    background_depth: Option<Vec<f64>>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    scene: PathBuf,
    #[command(flatten)]
    rig: RigArgs,
    /// `lidar` or the name of an RGB camera.
    #[arg(long, default_value = "lidar")]
    camera: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SparsifyMode {
    Bernoulli,
    Mask,
}

#[derive(Args)]
struct SparsifyArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    mode: SparsifyMode,
    /// Keep probability for Bernoulli mode.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    mask_dir: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    rig: RigArgs,
    /// Camera name, or `random` to draw one with `--seed`.
    #[arg(long, default_value = "random")]
    target: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 16)]
    wp: usize,
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    #[arg(long)]
    out: PathBuf,
    /// Ground truth for reporting noise rates.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = NOISE_TOLERANCE)]
    tol: f64,
}

#[derive(Args)]
struct SweepArgs {
    /// Run directory with scene_*/projected.png and scene_*/truth.png.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32")]
    wp_grid: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.25,0.5,1.0,2.0")]
    theta_grid: Vec<f64>,
    #[arg(long, default_value_t = NOISE_TOLERANCE)]
    tol: f64,
    #[arg(long, default_value_t = 0.6)]
    max_drop: f64,
    #[arg(long, default_value_t = 0.05)]
    slack: f64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
}

#[derive(Args)]
struct NoiseArgs {
    /// Sparse depth PNG, or a directory of them.
    #[arg(long)]
    sparse: PathBuf,
    /// Ground-truth PNG, or a directory holding files of the same names.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value_t = 16)]
    wp: usize,
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    #[arg(long, default_value_t = NOISE_TOLERANCE)]
    tol: f64,
}

#[derive(Args)]
struct GenMasksArgs {
    #[arg(long)]
    width: usize,
    #[arg(long)]
    height: usize,
    #[arg(long, default_value_t = 8)]
    count: usize,
    #[arg(long, default_value_t = 4)]
    row_spacing: usize,
    #[arg(long, default_value_t = 0.6)]
    column_keep: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

fn gen_scene(a: GenSceneArgs) -> anyhow::Result<()> {
    let mut cfg = match &a.config {
        Some(p) => PipelineConfig::load(p)?.scene,
        None => SceneGenConfig::default(),
    };
    if let Some(l) = a.layout {
        cfg.layout = match l {
            Layout::Boxes => OccluderLayout::Boxes,
            Layout::TwoPlane => OccluderLayout::TwoPlane { disparity_lattice: None },
        };
    }
    if let (Some(f), OccluderLayout::TwoPlane { disparity_lattice }) = (a.disparity_lattice, &mut cfg.layout) {
        *disparity_lattice = Some(f);
    }
    if let Some(n) = a.occluders {
        cfg.n_occluders = n;
    }
    if let Some(r) = a.occluder_depth {
        cfg.occluder_depth = (r[0], r[1]);
    }
    if let Some(r) = a.background_depth {
        cfg.background_depth = (r[0], r[1]);
    }
    cfg.seed = a.seed;
    generate_scene(&cfg)?.save(&a.out)?;
    Ok(())
}

fn render(a: RenderArgs) -> anyhow::Result<()> {
    let rig = a.rig.load()?;
    let scene = Scene::load(&a.scene)?;
    let (pose, k) = if a.camera == depthsim::geometry::LIDAR_BLOCK {
        (RigidTransform::identity(), rig.lidar)
    } else {
        let cam = rig
            .camera(&a.camera)
            .ok_or_else(|| Error::Config(format!("no camera named `{}`", a.camera)))?;
        (cam.lidar_to_camera, cam.intrinsics)
    };
    write_depth_png(&render_depth(&scene, &pose, &k), &a.out)?;
    Ok(())
}

fn sparsify(a: SparsifyArgs) -> anyhow::Result<()> {
    let dense = read_depth_png(&a.input)?.into_dense();
    let sparse = match a.mode {
        SparsifyMode::Bernoulli => {
            let p = a.p.ok_or_else(|| Error::Config("--p is required in bernoulli mode".into()))?;
            sparsify_bernoulli(&dense, &BernoulliConfig::new(p, a.seed)?)
        }
        SparsifyMode::Mask => {
            let dir = a
                .mask_dir
                .ok_or_else(|| Error::Config("--mask-dir is required in mask mode".into()))?;
            let (s, id) = sparsify_with_mask(&dense, &MaskBank::load_dir(&dir)?, a.seed)?;
            println!("mask_id {id}");
            s
        }
    };
    println!("kept {}", sparse.valid_count());
    write_depth_png(&sparse, &a.out)?;
    Ok(())
}

fn project(a: ProjectArgs) -> anyhow::Result<()> {
    let rig = a.rig.load()?;
    let src = read_depth_png(&a.input)?.into_sparse(Provenance::Masked);
    let cam = if a.target == "random" {
        random_target_camera(&rig, &mut ChaCha8Rng::seed_from_u64(a.seed))
    } else {
        rig.camera(&a.target)
            .ok_or_else(|| Error::Config(format!("no camera named `{}`", a.target)))?
    };
    let r = project_sparse(&src, &rig.lidar, &cam.lidar_to_camera, &cam.intrinsics)?;
    write_depth_png(&r.projected, &a.out)?;
    println!("camera {}", cam.name);
    println!("in_bounds {}", r.stats.in_bounds);
    println!("out_of_bounds {}", r.stats.out_of_bounds);
    println!("behind_camera {}", r.stats.behind_camera);
    println!("collisions {}", r.stats.collisions);
    Ok(())
}

fn print_noise(prefix: &str, r: &depthsim::NoiseReport) {
    println!("{prefix}eta {}", r.eta);
    println!("{prefix}noisy {}", r.noisy_count);
    println!("{prefix}evaluated {}", r.evaluated_count);
}

fn filter(a: FilterArgs) -> anyhow::Result<()> {
    let s = read_depth_png(&a.input)?.into_sparse(Provenance::Projected);
    let sp = filter_reliable(&s, FilterParams::new(a.wp, a.theta)?);
    write_depth_png(&sp.kept, &a.out)?;
    println!("input {}", sp.input_count);
    println!("kept {}", sp.kept.valid_count());
    println!("dropped_fraction {}", sp.dropped_fraction());
    if let Some(t) = &a.truth {
        let truth = read_depth_png(t)?.into_dense();
        print_noise("raw_", &noise_rate(&s, &truth, a.tol)?);
        print_noise("reliable_", &noise_rate_reliable(&sp, &truth, a.tol)?);
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> anyhow::Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let cfg = SweepConfig {
        window_grid: a.wp_grid,
        thickness_grid: a.theta_grid,
        tol: a.tol,
        max_drop: a.max_drop,
        slack: a.slack,
        ..SweepConfig::default()
    };
    let r = sweep_params(&corpus, &cfg)?;
    println!("scenes {}", corpus.len());
    for p in &r.window_curve {
        println!("window {} theta {} eta {} dropped {}", p.params.window, p.params.thickness, p.mean_eta, p.mean_dropped);
    }
    for p in &r.thickness_curve {
        println!("thickness {} window {} eta {} dropped {}", p.params.thickness, p.params.window, p.mean_eta, p.mean_dropped);
    }
    println!("selected_wp {}", r.selected.window);
    println!("selected_theta {}", r.selected.thickness);
    println!("degenerate_noise_free {}", r.degenerate_noise_free);
    println!("retention_floor_met {}", r.retention_floor_met);
    Ok(())
}

fn eval(a: EvalArgs) -> anyhow::Result<()> {
    let pred = read_depth_png(&a.pred)?.into_dense();
    let gt = read_depth_png(&a.gt)?;
    print!("{}", compute_metrics(&pred, &gt)?.to_lines());
    Ok(())
}

fn noise_pairs(sparse: &Path, truth: &Path) -> anyhow::Result<Vec<(PathBuf, PathBuf)>> {
    if !sparse.is_dir() {
        return Ok(vec![(sparse.to_path_buf(), truth.to_path_buf())]);
    }
    let mut pairs = Vec::new();
    for entry in std::fs::read_dir(sparse)? {
        let p = entry?.path();
        if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            let t = truth.join(p.file_name().expect("file entry"));
            if t.is_file() {
                pairs.push((p, t));
            }
        }
    }
    if pairs.is_empty() {
        bail!(Error::Config(format!("no matching PNG pairs in {} and {}", sparse.display(), truth.display())));
    }
    pairs.sort();
    Ok(pairs)
}

/// Point-weighted over all files, as a dataset-level rate.
fn noise(a: NoiseArgs) -> anyhow::Result<()> {
    let params = FilterParams::new(a.wp, a.theta)?;
    let (mut raw_noisy, mut raw_eval, mut rel_noisy, mut rel_eval, mut input, mut dropped) = (0, 0, 0, 0, 0, 0);
    let pairs = noise_pairs(&a.sparse, &a.truth)?;
    for (s, t) in &pairs {
        let s_map = read_depth_png(s)?.into_sparse(Provenance::Real);
        let truth = read_depth_png(t)?.into_dense();
        let sp = filter_reliable(&s_map, params);
        let raw = noise_rate(&s_map, &truth, a.tol).with_context(|| format!("{}", s.display()))?;
        raw_noisy += raw.noisy_count;
        raw_eval += raw.evaluated_count;
        if let Ok(rel) = noise_rate_reliable(&sp, &truth, a.tol) {
            rel_noisy += rel.noisy_count;
            rel_eval += rel.evaluated_count;
        }
        input += sp.input_count;
        dropped += sp.dropped_count;
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    println!("files {}", pairs.len());
    println!("raw_eta {}", ratio(raw_noisy, raw_eval));
    println!("reliable_eta {}", ratio(rel_noisy, rel_eval));
    println!("dropped_fraction {}", ratio(dropped, input));
    Ok(())
}

fn gen_masks(a: GenMasksArgs) -> anyhow::Result<()> {
    let cfg = ScanlineMaskConfig {
        width: a.width,
        height: a.height,
        row_spacing: a.row_spacing,
        column_keep: a.column_keep,
    };
    std::fs::create_dir_all(&a.out_dir)?;
    let bank = scanline_bank(&cfg, a.count, a.seed)?;
    for (i, m) in bank.masks().iter().enumerate() {
        BinaryMask::write_png(m, &a.out_dir.join(format!("mask_{i:04}.png")))?;
    }
    Ok(())
}

fn run_pipeline(config: &Path) -> anyhow::Result<()> {
    let cfg = PipelineConfig::load(config)?;
    let manifest = match pipeline::threads_from_env() {
        Some(n) => pipeline::run_pipeline_with_threads(&cfg, n)?,
        None => pipeline::run_pipeline(&cfg)?,
    };
    println!("scenes {}", manifest.scenes.len());
    let show = |v: Option<f64>| v.map_or("n/a".to_string(), |x| x.to_string());
    println!("mean_eta_raw {}", show(manifest.summary.mean_eta_raw));
    println!("mean_eta_reliable {}", show(manifest.summary.mean_eta_reliable));
    println!("mean_dropped_fraction {}", show(manifest.summary.mean_dropped_fraction));
    println!("manifest {}", cfg.output_dir.join(pipeline::MANIFEST_FILE).display());
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::Parse { .. } | Error::InvalidCamera(_) | Error::InvalidTransform(_)) => EXIT_CONFIG,
        _ => EXIT_STAGE,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::GenScene(a) => gen_scene(a),
        Command::Render(a) => render(a),
        Command::Sparsify(a) => sparsify(a),
        Command::Project(a) => project(a),
        Command::Filter(a) => filter(a),
        Command::Sweep(a) => sweep(a),
        Command::Eval(a) => eval(a),
        Command::Noise(a) => noise(a),
        Command::GenMasks(a) => gen_masks(a),
        Command::Pipeline(PipelineCommand::Run { config }) => run_pipeline(&config),
        Command::Pipeline(PipelineCommand::Compare { manifest_a, manifest_b }) => {
            match pipeline::compare_runs(&manifest_a, &manifest_b) {
                Ok(report) => {
                    for f in &report.differing {
                        println!("differs {f}");
                    }
                    for f in &report.missing {
                        println!("missing {f}");
                    }
                    if report.is_identical() {
                        println!("identical");
                        return ExitCode::SUCCESS;
                    }
                    return ExitCode::from(EXIT_DIFF);
                }
                Err(e) => Err(e.into()),
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use depthsim::geometry::CameraIntrinsics;
use depthsim::pipeline::{RunManifest, MANIFEST_FILE};
use depthsim::CameraRig;

fn depthsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_depthsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = depthsim(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let k = CameraIntrinsics::from_fov(160, 64, 90.0).unwrap();
    CameraRig::symmetric_stereo(k, k, 0.5)
        .unwrap()
        .save(&dir.join("rig.calib"))
        .unwrap();
    let path = dir.join(name);
    fs::write(&path, format!("calib = rig.calib\n{body}")).unwrap();
    path
}

fn same_bytes(a: &Path, b: &Path) {
    assert!(fs::read(a).unwrap() == fs::read(b).unwrap(), "{} != {}", a.display(), b.display());
}

/// Replays every stage of each scene by hand and checks the outputs match.
fn replay(dir: &Path, cfg: &Path, mode: &[&str], target: &str) {
    let run = dir.join("run");
    let calib = dir.join("rig.calib");
    let m = RunManifest::load(&run.join(MANIFEST_FILE)).unwrap();
    assert!(!m.scenes.is_empty());
    for s in &m.scenes {
        let want = run.join(&s.dir);
        let got = dir.join(format!("manual_{}", s.dir));
        fs::create_dir_all(&got).unwrap();
        let f = |name: &str| got.join(name);

        ok(&["gen-scene", "--config", p(cfg), "--seed", &s.seeds.scene.to_string(), "--out", p(&f("scene.txt"))]);
        ok(&["render", "--scene", p(&f("scene.txt")), "--calib", p(&calib), "--camera", "lidar", "--out", p(&f("lidar_dense.png"))]);
        let seed = s.seeds.sparsify.to_string();
        let (dense, sparse) = (f("lidar_dense.png"), f("sparse.png"));
        let mut args = vec!["sparsify", "--input", p(&dense), "--seed", &seed, "--out", p(&sparse)];
        args.extend_from_slice(mode);
        ok(&args);
        let seed = s.seeds.target.to_string();
        let stdout = ok(&[
            "project", "--input", p(&f("sparse.png")), "--calib", p(&calib), "--target", target, "--seed", &seed, "--out",
            p(&f("projected.png")),
        ]);
        assert!(stdout.contains(&format!("camera {}\n", s.target_camera)), "{stdout}");
        ok(&[
            "render", "--scene", p(&f("scene.txt")), "--calib", p(&calib), "--camera", &s.target_camera, "--out",
            p(&f("truth.png")),
        ]);
        ok(&["filter", "--input", p(&f("projected.png")), "--wp", "16", "--theta", "0.5", "--out", p(&f("reliable.png"))]);

        for name in ["scene.txt", "lidar_dense.png", "sparse.png", "projected.png", "truth.png", "reliable.png"] {
            same_bytes(&f(name), &want.join(name));
        }
    }
}

#[test]
fn stages_by_hand_match_the_pipeline_with_masks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", "output = run\nn_scenes = 3\nseed = 17\nmask_row_spacing = 2\n");
    ok(&["pipeline", "run", p(&cfg)]);
    let masks = dir.path().join("run/masks");
    replay(dir.path(), &cfg, &["--mode", "mask", "--mask-dir", p(&masks)], "random");
}

#[test]
fn stages_by_hand_match_the_pipeline_with_bernoulli() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "run.cfg",
        "output = run\nn_scenes = 2\nseed = 3\nsparsify = bernoulli\np_b = 0.25\ntarget = right\nscene_layout = two-plane\n",
    );
    ok(&["pipeline", "run", p(&cfg)]);
    replay(dir.path(), &cfg, &["--mode", "bernoulli", "--p", "0.25"], "right");
}

#[test]
fn compare_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), "a.cfg", "output = a\nn_scenes = 2\nseed = 1\n");
    let b = write_config(dir.path(), "b.cfg", "output = b\nn_scenes = 2\nseed = 1\n");
    let c = write_config(dir.path(), "c.cfg", "output = c\nn_scenes = 2\nseed = 2\n");
    for cfg in [&a, &b, &c] {
        ok(&["pipeline", "run", p(cfg)]);
    }
    let m = |run: &str| dir.path().join(run).join(MANIFEST_FILE);

    assert_eq!(ok(&["pipeline", "compare", p(&m("a")), p(&m("b"))]), "identical\n");

    let out = depthsim(&["pipeline", "compare", p(&m("a")), p(&m("c"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("differs scene_0000/sparse.png"));

    fs::remove_file(dir.path().join("b/scene_0001/truth.png")).unwrap();
    let out = depthsim(&["pipeline", "compare", p(&m("a")), p(&m("b"))]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(String::from_utf8_lossy(&out.stdout), "missing scene_0001/truth.png\n");
}

#[test]
fn thread_cap_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), "a.cfg", "output = a\nn_scenes = 4\nseed = 8\n");
    let b = write_config(dir.path(), "b.cfg", "output = b\nn_scenes = 4\nseed = 8\n");
    let run = |cfg: &Path, threads: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_depthsim"))
            .args(["pipeline", "run", p(cfg)])
            .env("DEPTHSIM_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success());
    };
    run(&a, "1");
    run(&b, "3");
    let m = |r: &str| dir.path().join(r).join(MANIFEST_FILE);
    assert_eq!(ok(&["pipeline", "compare", p(&m("a")), p(&m("b"))]), "identical\n");
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    let bad = write_config(dir.path(), "bad.cfg", "output = o\nn_scenes = 1\nunknown_key = 1\n");
    assert_eq!(depthsim(&["pipeline", "run", p(&bad)]).status.code(), Some(1));
    assert_eq!(depthsim(&["pipeline", "frobnicate"]).status.code(), Some(1));

    let far = write_config(dir.path(), "far.cfg", "output = far\nn_scenes = 1\nscene_background_depth = 400 400\n");
    let out = depthsim(&["pipeline", "run", p(&far)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("render"));
    assert!(dir.path().join("far/scene_0000.partial").is_dir());

    assert_eq!(depthsim(&["--help"]).status.code(), Some(0));
}

#[test]
fn eval_prints_fixed_order_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", "output = run\nn_scenes = 1\nseed = 4\n");
    ok(&["pipeline", "run", p(&cfg)]);
    let s = dir.path().join("run/scene_0000");
    let out = ok(&["eval", "--pred", p(&s.join("truth.png")), "--gt", p(&s.join("projected.png"))]);
    let keys: Vec<&str> = out.lines().map(|l| l.split_once(' ').unwrap().0).collect();
    assert_eq!(keys, ["rmse_mm", "mae_mm", "irmse_per_km", "imae_per_km", "evaluated", "excluded"]);

    let perfect = ok(&["eval", "--pred", p(&s.join("truth.png")), "--gt", p(&s.join("truth.png"))]);
    assert!(perfect.starts_with("rmse_mm 0\nmae_mm 0\nirmse_per_km 0\nimae_per_km 0\n"), "{perfect}");
}

#[test]
fn noise_and_sweep_on_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", "output = run\nn_scenes = 2\nseed = 6\n");
    ok(&["pipeline", "run", p(&cfg)]);
    let run = dir.path().join("run");
    let s = run.join("scene_0000");
    let out = ok(&["noise", "--sparse", p(&s.join("projected.png")), "--truth", p(&s.join("truth.png"))]);
    assert!(out.starts_with("files 1\nraw_eta "), "{out}");

    let out = ok(&["sweep", "--corpus", p(&run), "--wp-grid", "4,8", "--theta-grid", "0.5"]);
    assert!(out.contains("scenes 2\n"));
    assert!(out.contains("selected_theta 0.5\n"));

    let masks = dir.path().join("masks");
    ok(&["gen-masks", "--width", "20", "--height", "10", "--count", "3", "--seed", "1", "--out-dir", p(&masks)]);
    assert_eq!(fs::read_dir(&masks).unwrap().count(), 3);
}

use std::path::Path;
use std::process::{Command, Output};

use lenspol_core::experiments::{run_matched_experiment, synthesize_scene, SceneKind, SceneSpec};
use lenspol_core::masks::{make_ideal_mask, StripeGeometry};
use lenspol_core::optics::sparse_random_psf_raw;
use lenspol_core::solver::SolverPreset;
use lenspol_core::tensor::Tensor;

fn lenspol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lenspol")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"
seed = 4
[solver]
admm_iters = 8
[psf]
height = 16
width = 16
impulses = 20
[scene.synthetic]
kind = "piecewise-constant"
height = 16
width = 16
seed = 4
"#;

fn write_config(dir: &Path) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, SMALL).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn schema_violation_is_one_line_with_field_path() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = lenspol(&["make-mask", "--out", out.to_str().unwrap(), "--set", "solver.rho=\"fast\""]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.trim().lines().count(), 1, "{err}");
    assert!(err.starts_with("error kind=config: at solver.rho"), "{err}");

    let o = lenspol(&["make-mask", "--out", out.to_str().unwrap(), "--set", "mask.geometry.stripe_wdth=2"]);
    assert!(stderr(&o).contains("mask.geometry"), "{}", stderr(&o));
}

#[test]
fn missing_input_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lenspol(&["stokes", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("stokes.input"));

    let missing = tmp.path().join("nope.plt");
    let o = lenspol(&[
        "stokes",
        "--out",
        tmp.path().to_str().unwrap(),
        "--set",
        &format!("stokes.input=\"{}\"", missing.display()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error kind=io:"), "{}", stderr(&o));
}

#[test]
fn mismatched_mask_names_the_axis() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let mask_dir = tmp.path().join("mask");
    let o = lenspol(&["make-mask", "--config", &cfg, "--out", mask_dir.to_str().unwrap(), "--set", "mask.height=12"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = lenspol(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        tmp.path().join("sim").to_str().unwrap(),
        "--set",
        &format!("mask.path=\"{}\"", mask_dir.join("mask.plt").display()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("error kind=dimension:") && err.contains("mask height"), "{err}");
}

#[test]
fn simulate_then_reconstruct_matches_library_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let sim = tmp.path().join("sim");
    let rec = tmp.path().join("rec");
    let o = lenspol(&["simulate", "--config", &cfg, "--out", sim.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = lenspol(&[
        "reconstruct",
        "--config",
        &cfg,
        "--out",
        rec.to_str().unwrap(),
        "--set",
        &format!("reconstruct.measurement=\"{}\"", sim.join("measurement.plt").display()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let scene = synthesize_scene(&SceneSpec::new(SceneKind::PiecewiseConstant { regions: 12 }, 16, 16, 3, 4)).unwrap();
    let psf = sparse_random_psf_raw(16, 16, 3, 20, 4).unwrap();
    let mask = make_ideal_mask(16, 16, &StripeGeometry::with_width(8)).unwrap();
    let solver = lenspol_core::solver::SolverConfig {
        admm_iters: 8,
        ..SolverPreset::MatchedSim.config()
    };
    let lib = run_matched_experiment(&scene, &psf, &mask, &solver, None).unwrap();
    assert_eq!(Tensor::read(sim.join("measurement.plt")).unwrap(), lib.measurement.to_tensor());
    assert_eq!(Tensor::read(rec.join("reconstruction.plt")).unwrap(), lib.reconstruction.to_tensor());
    let residuals = std::fs::read_to_string(rec.join("residuals.csv")).unwrap();
    assert_eq!(residuals, lib.history.to_csv());
}

#[test]
fn rerun_from_manifest_reproduces_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let first = tmp.path().join("first");
    let o = lenspol(&["simulate", "--config", &cfg, "--out", first.to_str().unwrap(), "--set", "mask.model=measured"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let manifest: toml::Table = toml::from_str(&std::fs::read_to_string(first.join("manifest.toml")).unwrap()).unwrap();
    assert_eq!(manifest["command"].as_str(), Some("simulate"));
    let outputs = manifest["outputs"].as_array().unwrap().clone();
    let resolved = first.join(manifest["resolved_config"].as_str().unwrap());
    let resolved_copy = tmp.path().join("resolved.toml");
    std::fs::copy(&resolved, &resolved_copy).unwrap();
    std::fs::remove_dir_all(&first).unwrap();

    let o = lenspol(&["simulate", "--config", resolved_copy.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let again: toml::Table = toml::from_str(&std::fs::read_to_string(first.join("manifest.toml")).unwrap()).unwrap();
    assert_eq!(again["outputs"].as_array().unwrap(), &outputs);
}

#[test]
fn stokes_and_metrics_write_their_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let sim = tmp.path().join("sim");
    assert!(lenspol(&["simulate", "--config", &cfg, "--out", sim.to_str().unwrap()]).status.success());
    let scene = sim.join("scene.plt");
    let st = tmp.path().join("stokes");
    let o = lenspol(&["stokes", "--out", st.to_str().unwrap(), "--set", &format!("stokes.input=\"{}\"", scene.display())]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["s0", "s1", "s2", "dolp", "aolp", "aolp_valid"] {
        let t = Tensor::read(st.join(format!("{name}.plt"))).unwrap();
        assert_eq!(t.dims(), &[16, 16, 3]);
        assert!(st.join(format!("{name}.png")).exists());
    }

    let m = tmp.path().join("metrics");
    let o = lenspol(&[
        "metrics",
        "--out",
        m.to_str().unwrap(),
        "--set",
        &format!("metrics.input=\"{}\"", scene.display()),
        "--set",
        &format!("metrics.reference=\"{}\"", scene.display()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(m.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("scene,perturbation,param,channel,psnr_db,ssim\n"));
    assert!(csv.contains("identical"));
}

#[test]
fn example_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let tmp = tempfile::tempdir().unwrap();
            // make-mask is cheap and validates the whole file
            let o = lenspol(&[
                "make-mask",
                "--config",
                path.to_str().unwrap(),
                "--out",
                tmp.path().to_str().unwrap(),
                "--set",
                "mask.height=8",
                "--set",
                "mask.width=8",
            ]);
            assert!(o.status.success(), "{}: {}", path.display(), stderr(&o));
            seen += 1;
        }
    }
    assert!(seen >= 2);
}

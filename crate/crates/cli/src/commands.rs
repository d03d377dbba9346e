use std::path::Path;

use lenspol_core::diffraction::mask_gap_experiment;
use lenspol_core::experiments::{run_mismatch_sweep, synthesize_scene, ReferenceKind};
use lenspol_core::masks::{
    blur_mask, interpolate_masks, make_ideal_mask, noise_mask, synthesize_measured_response, MaskMaps,
    MaskProvenance, Perturbation,
};
use lenspol_core::metrics::evaluate_against_reference;
use lenspol_core::optics::{measure_psf_normalize, sparse_random_psf_raw, ForwardOperator, PsfNormalization, PsfStack};
use lenspol_core::scene::{PolarizedScene, SensorMeasurement};
use lenspol_core::solver::admm_reconstruct;
use lenspol_core::stokes::stokes_from_subimages;
use lenspol_core::tensor::{export_preview, Normalize, Tensor};
use log::info;

use crate::config::{MaskModel, RunConfig};
use crate::manifest::Recorder;
use crate::{CliError, Command};

pub fn execute(command: Command, cfg: RunConfig) -> Result<(), CliError> {
    let mut rec = Recorder::new(&cfg.out_dir)?;
    match command {
        Command::MakeMask => make_mask(&cfg, &mut rec)?,
        Command::Simulate => simulate(&cfg, &mut rec)?,
        Command::Reconstruct => reconstruct(&cfg, &mut rec)?,
        Command::MismatchSweep => mismatch_sweep(&cfg, &mut rec)?,
        Command::Stokes => stokes(&cfg, &mut rec)?,
        Command::Metrics => metrics(&cfg, &mut rec)?,
        Command::Diffract => diffract(&cfg, &mut rec)?,
    }
    rec.finish(command.name(), &cfg)
}

fn required<'a>(value: &'a Option<std::path::PathBuf>, key: &str) -> Result<&'a Path, CliError> {
    value
        .as_deref()
        .ok_or_else(|| CliError::new("config", format!("{key} is required for this command")))
}

fn read_tensor(rec: &mut Recorder, role: &str, path: &Path) -> Result<Tensor, CliError> {
    rec.input(role, path);
    Ok(Tensor::read(path)?)
}

fn write_tensor(rec: &mut Recorder, name: &str, t: &Tensor) -> Result<(), CliError> {
    let path = rec.output(name);
    t.write(&path)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn write_preview(rec: &mut Recorder, name: &str, t: &Tensor, normalize: Normalize) -> Result<(), CliError> {
    let path = rec.output(name);
    export_preview(t, &path, normalize)?;
    Ok(())
}

/// One preview per slice along the last axis of an (H, W, K) tensor.
fn write_slice_previews(rec: &mut Recorder, stem: &str, t: &Tensor, normalize: Normalize) -> Result<(), CliError> {
    let axis = t.ndim() - 1;
    for k in 0..t.dims()[axis] {
        write_preview(rec, &format!("{stem}_p{k}.png"), &rgb_view(&t.slice_axis(axis, k)?)?, normalize)?;
    }
    Ok(())
}

fn load_psf(cfg: &RunConfig, rec: &mut Recorder) -> Result<PsfStack, CliError> {
    let s = &cfg.psf;
    let raw = match &s.path {
        Some(p) => PsfStack::from_tensor(&read_tensor(rec, "psf", p)?)?,
        None => sparse_random_psf_raw(s.height, s.width, s.colors, s.impulses, s.seed.unwrap_or(cfg.seed))?,
    };
    Ok(match s.normalization {
        PsfNormalization::UnitSum => measure_psf_normalize(&raw)?,
        PsfNormalization::Raw => raw,
    })
}

fn load_scene(cfg: &RunConfig, rec: &mut Recorder) -> Result<PolarizedScene, CliError> {
    match &cfg.scene.path {
        Some(p) => Ok(PolarizedScene::from_tensor(&read_tensor(rec, "scene", p)?)?),
        None => Ok(synthesize_scene(&cfg.scene.spec(cfg.seed))?),
    }
}

fn perturb(base: &MaskMaps, p: &Perturbation, cfg: &RunConfig) -> Result<MaskMaps, CliError> {
    let m = &cfg.mask;
    Ok(match *p {
        Perturbation::Blur { sigma } => blur_mask(base, sigma)?,
        Perturbation::Noise { sigma, seed } => noise_mask(base, sigma, seed)?,
        Perturbation::Interpolation { t } => {
            let ideal = make_ideal_mask(base.height(), base.width(), &m.geometry)?;
            interpolate_masks(base, &ideal, t)?
        }
    })
}

/// The configured mask at the given sensor size. A mask file must match it.
fn load_mask(cfg: &RunConfig, rec: &mut Recorder, height: usize, width: usize) -> Result<MaskMaps, CliError> {
    let m = &cfg.mask;
    let base = match &m.path {
        Some(p) => {
            let t = read_tensor(rec, "mask", p)?;
            let mask = MaskMaps::from_tensor(&t, MaskProvenance::External, m.geometry.clone())?;
            check("mask height", height, mask.height())?;
            check("mask width", width, mask.width())?;
            mask
        }
        None => match m.model {
            MaskModel::Ideal => make_ideal_mask(height, width, &m.geometry)?,
            MaskModel::Measured => synthesize_measured_response(&m.geometry, height, width, m.extinction)?,
        },
    };
    match &m.perturbation {
        Some(p) => perturb(&base, p, cfg),
        None => Ok(base),
    }
}

fn check(axis: &'static str, expected: usize, got: usize) -> Result<(), CliError> {
    if expected == got {
        Ok(())
    } else {
        Err(CliError::new(
            "dimension",
            format!("dimension mismatch on axis {axis}: expected {expected}, got {got}"),
        ))
    }
}

fn make_mask(cfg: &RunConfig, rec: &mut Recorder) -> Result<(), CliError> {
    let mask = load_mask(cfg, rec, cfg.mask.height, cfg.mask.width)?;
    let t = mask.to_tensor();
    write_tensor(rec, "mask.plt", &t)?;
    let sidecar = toml::to_string(&MaskSidecar {
        height: mask.height(),
        width: mask.width(),
        polarizations: mask.polarizations(),
        geometry: mask.geometry(),
        provenance: mask.provenance(),
    })
    .map_err(|e| CliError::new("config", e.to_string()))?;
    rec.write_text("mask.toml", &sidecar)?;
    write_slice_previews(rec, "mask", &t, Normalize::Global)
}

#[derive(serde::Serialize)]
struct MaskSidecar<'a> {
    height: usize,
    width: usize,
    polarizations: usize,
    geometry: &'a lenspol_core::masks::StripeGeometry,
    provenance: &'a MaskProvenance,
}

fn simulate(cfg: &RunConfig, rec: &mut Recorder) -> Result<(), CliError> {
    let scene = load_scene(cfg, rec)?;
    let psf = load_psf(cfg, rec)?;
    let e = scene.extent();
    let mask = load_mask(cfg, rec, e.height, e.width)?;
    let op = ForwardOperator::new(&psf, &mask, cfg.solver.resolve().conv_mode, e)?;
    let y = op.forward(&scene)?;
    let yt = y.to_tensor();
    write_tensor(rec, "measurement.plt", &yt)?;
    write_tensor(rec, "scene.plt", &scene.to_tensor())?;
    write_tensor(rec, "mask.plt", &mask.to_tensor())?;
    write_tensor(rec, "psf.plt", &psf.to_tensor())?;
    write_preview(rec, "measurement.png", &rgb_view(&yt)?, Normalize::Global)?;
    write_slice_previews(rec, "scene", &scene.to_tensor(), Normalize::Global)
}

/// Previews take at most three channels; keep the first three colors.
fn rgb_view(t: &Tensor) -> Result<Tensor, CliError> {
    let d = t.dims();
    if d.len() < 3 || d[2] <= 3 {
        return Ok(t.clone());
    }
    let mut data = Vec::with_capacity(d[0] * d[1] * 3);
    for px in 0..d[0] * d[1] {
        data.extend_from_slice(&t.data()[px * d[2]..px * d[2] + 3]);
    }
    Ok(Tensor::new(vec![d[0], d[1], 3], data)?)
}

fn reconstruct(cfg: &RunConfig, rec: &mut Recorder) -> Result<(), CliError> {
    let ypath = required(&cfg.reconstruct.measurement, "reconstruct.measurement")?;
    let y = SensorMeasurement::from_tensor(&read_tensor(rec, "measurement", ypath)?)?;
    let psf = load_psf(cfg, rec)?;
    check("psf colors", y.colors(), psf.colors())?;
    let mask = load_mask(cfg, rec, y.height(), y.width())?;
    let solver = cfg.solver.resolve();
    let extent = lenspol_core::scene::SceneExtent::new(y.height(), y.width(), y.colors(), mask.polarizations())?;
    let op = ForwardOperator::new(&psf, &mask, solver.conv_mode, extent)?;
    let (x, history) = admm_reconstruct(&op, &y, &solver)?;
    let xt = x.to_tensor();
    write_tensor(rec, "reconstruction.plt", &xt)?;
    rec.write_text("residuals.csv", &history.to_csv())?;
    write_slice_previews(rec, "reconstruction", &xt, Normalize::Global)?;
    if let Some(rpath) = &cfg.reconstruct.reference {
        let reference = PolarizedScene::from_tensor(&read_tensor(rec, "reference", rpath)?)?;
        let report = evaluate_against_reference(&x, &reference, "reference")?;
        rec.write_text("metrics.csv", &report.to_csv("reconstruction", "none", 0.0))?;
    }
    Ok(())
}

fn mismatch_sweep(cfg: &RunConfig, rec: &mut Recorder) -> Result<(), CliError> {
    let spec = cfg.sweep.spec(cfg.seed);
    let psf = load_psf(cfg, rec)?;
    let report = run_mismatch_sweep(&spec, &psf, &cfg.solver.resolve(), &cfg.sweep.reference_solver.resolve())?;
    for reference in [ReferenceKind::Lensless, ReferenceKind::GroundTruth] {
        let tag = reference.name().replace('-', "_");
        rec.write_text(&format!("sweep_{tag}.csv"), &report.to_csv(reference))?;
        rec.write_text(&format!("summary_{tag}.csv"), &report.summary_csv(reference))?;
        let plots = report.write_plots(&rec.out_dir, &format!("sweep_{tag}"), reference)?;
        for (name, range) in plots {
            info!("plot {name}: x {:?} y {:?}", range.x, range.y);
            rec.output(&name);
        }
    }
    Ok(())
}

fn planes_to_tensor(h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Tensor, CliError> {
    Ok(SensorMeasurement::from_planar(h, w, c, data)?.to_tensor())
}

fn stokes(cfg: &RunConfig, rec: &mut Recorder) -> Result<(), CliError> {
    let path = required(&cfg.stokes.input, "stokes.input")?;
    let x = PolarizedScene::from_tensor(&read_tensor(rec, "subimages", path)?)?;
    let m = stokes_from_subimages(&x)?;
    let valid: Vec<f64> = m.aolp_valid.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    let maps = [
        ("s0", m.s0.clone()),
        ("s1", m.s1.clone()),
        ("s2", m.s2.clone()),
        ("dolp", m.dolp.clone()),
        ("aolp", m.aolp_deg.clone()),
        ("aolp_valid", valid),
    ];
    for (name, data) in maps {
        let t = planes_to_tensor(m.height, m.width, m.colors, data)?;
        write_tensor(rec, &format!("{name}.plt"), &t)?;
        write_preview(rec, &format!("{name}.png"), &rgb_view(&t)?, Normalize::PerChannel)?;
    }
    rec.write_text("stokes.csv", &format!("mean_dolp\n{}\n", m.mean_dolp()))
}

fn metrics(cfg: &RunConfig, rec: &mut Recorder) -> Result<(), CliError> {
    let s = &cfg.metrics;
    let x = PolarizedScene::from_tensor(&read_tensor(rec, "input", required(&s.input, "metrics.input")?)?)?;
    let r = PolarizedScene::from_tensor(&read_tensor(rec, "reference", required(&s.reference, "metrics.reference")?)?)?;
    let report = evaluate_against_reference(&x, &r, &s.reference_id)?;
    rec.write_text("metrics.csv", &report.to_csv("input", "none", 0.0))
}

fn diffract(cfg: &RunConfig, rec: &mut Recorder) -> Result<(), CliError> {
    let report = mask_gap_experiment(&cfg.diffract)?;
    let n = cfg.diffract.grid;
    for case in [&report.with_grating, &report.without_grating] {
        let t = Tensor::new(vec![n, n], case.intensity.clone())?;
        write_tensor(rec, &format!("intensity_{}.plt", case.label), &t)?;
        write_preview(rec, &format!("intensity_{}.png", case.label), &t, Normalize::Global)?;
    }
    info!("spreading ratio (x) {}", report.spreading_ratio());
    rec.write_text("diffraction.csv", &report.to_csv())?;
    rec.write_text("profiles.csv", &report.profiles_csv())
}

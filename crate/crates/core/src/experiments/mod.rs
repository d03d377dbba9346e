//! Matched-model runs, mask-mismatch sweeps and the synthetic scenes they use.

pub mod plot;
pub mod scenes;

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::masks::{
    blur_mask, interpolate_masks, make_ideal_mask, noise_mask, normalize_per_map, synthesize_measured_response,
    MaskMaps, StripeGeometry,
};
use crate::metrics::{evaluate_against_reference, MetricReport};
use crate::optics::{ForwardOperator, PsfStack};
use crate::scene::{PolarizedScene, SensorMeasurement};
use crate::solver::{admm_reconstruct, reconstruct_no_mask_reference, AdmmHistory, SolverConfig, SolverPreset};

pub use plot::{line_plot, save_plot, PlotRange, Series};
pub use scenes::{synthesize_scene, SceneKind, SceneSpec, SUBIMAGE_ANGLES};

/// Short SHA-256 fingerprint of a solver configuration, taken over its
/// `Debug` rendering (field order and shortest round-trip floats).
pub fn config_hash(cfg: &SolverConfig) -> String {
    let digest = Sha256::digest(format!("{cfg:?}").as_bytes());
    digest.iter().take(8).fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone)]
pub struct MatchedOutcome {
    pub measurement: SensorMeasurement,
    pub reconstruction: PolarizedScene,
    pub history: AdmmHistory,
    pub vs_truth: MetricReport,
    pub vs_reference: Option<MetricReport>,
}

/// Simulates a capture through `mask` and reconstructs with the same mask.
pub fn run_matched_experiment(
    scene: &PolarizedScene,
    psf: &PsfStack,
    mask: &MaskMaps,
    cfg: &SolverConfig,
    reference: Option<&PolarizedScene>,
) -> Result<MatchedOutcome> {
    let op = ForwardOperator::new(psf, mask, cfg.conv_mode, scene.extent())?;
    let measurement = op.forward(scene)?;
    let (reconstruction, history) = admm_reconstruct(&op, &measurement, cfg)?;
    let vs_truth = evaluate_against_reference(&reconstruction, scene, "ground-truth")?;
    let vs_reference = reference
        .map(|r| evaluate_against_reference(&reconstruction, r, "lensless-reference"))
        .transpose()?;
    Ok(MatchedOutcome {
        measurement,
        reconstruction,
        history,
        vs_truth,
        vs_reference,
    })
}

/// Lensless reference without the polarization mask: each sub-image is
/// captured on its own (external polarizer) and reconstructed separately.
pub fn lensless_reference(scene: &PolarizedScene, psf: &PsfStack, cfg: &SolverConfig) -> Result<PolarizedScene> {
    let e = scene.extent();
    let single = crate::scene::SceneExtent::new(e.height, e.width, e.colors, 1)?;
    let open = MaskMaps::uniform(e.height, e.width, 1, 1.0)?;
    let op = ForwardOperator::new(psf, &open, cfg.conv_mode, single)?;
    let captures = (0..e.polarizations)
        .map(|p| {
            let sub = PolarizedScene::stack_polarizations(&[scene.polarization_slice(p)])?;
            op.forward(&sub)
        })
        .collect::<Result<Vec<_>>>()?;
    reconstruct_no_mask_reference(psf, &captures, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationFamily {
    Blur,
    Noise,
    Interpolation,
}

impl PerturbationFamily {
    pub const ALL: [PerturbationFamily; 3] = [
        PerturbationFamily::Blur,
        PerturbationFamily::Noise,
        PerturbationFamily::Interpolation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PerturbationFamily::Blur => "blur",
            PerturbationFamily::Noise => "noise",
            PerturbationFamily::Interpolation => "interpolation",
        }
    }
}

/// Data-generation and reconstruction masks for one sweep point.
///
/// * blur: data through `blur(measured, sigma)`, reconstruction with `measured`
/// * noise: data through `ideal`, reconstruction with `noise(ideal, sigma)`
/// * interpolation: data through `interp(measured, ideal, t)`, reconstruction
///   with the nearer unperturbed endpoint (normalized measured for `t <= 0.5`,
///   ideal otherwise)
pub fn mismatch_masks(
    family: PerturbationFamily,
    param: f64,
    measured: &MaskMaps,
    ideal: &MaskMaps,
    noise_seed: u64,
) -> Result<(MaskMaps, MaskMaps)> {
    Ok(match family {
        PerturbationFamily::Blur => (blur_mask(measured, param)?, measured.clone()),
        PerturbationFamily::Noise => (ideal.clone(), noise_mask(ideal, param, noise_seed)?),
        PerturbationFamily::Interpolation => {
            let data = interpolate_masks(measured, ideal, param)?;
            let recon = if param <= 0.5 { normalize_per_map(measured) } else { ideal.clone() };
            (data, recon)
        }
    })
}

fn default_blur() -> Vec<f64> {
    vec![0.0, 0.5, 1.0, 2.0, 3.0]
}
fn default_noise() -> Vec<f64> {
    vec![0.0, 0.01, 0.02, 0.05]
}
fn default_interp() -> Vec<f64> {
    vec![0.0, 0.125, 0.25, 0.375, 0.5]
}
fn default_extinction() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub scenes: Vec<SceneSpec>,
    pub geometry: StripeGeometry,
    /// Polarizer leakage of the synthesized measured mask.
    #[serde(default = "default_extinction")]
    pub extinction: f64,
    #[serde(default = "default_blur")]
    pub blur_sigmas: Vec<f64>,
    #[serde(default = "default_noise")]
    pub noise_sigmas: Vec<f64>,
    #[serde(default)]
    pub noise_seed: u64,
    #[serde(default = "default_interp")]
    pub interp_ts: Vec<f64>,
}

impl SweepSpec {
    /// Three standard scenes with 8 px stripes and the default parameter lists.
    pub fn desk(height: usize, width: usize, colors: usize, seed: u64) -> Self {
        SweepSpec {
            scenes: SceneSpec::standard_set(height, width, colors, seed),
            geometry: StripeGeometry::with_width(8),
            extinction: default_extinction(),
            blur_sigmas: default_blur(),
            noise_sigmas: default_noise(),
            noise_seed: seed,
            interp_ts: default_interp(),
        }
    }

    pub fn params(&self, family: PerturbationFamily) -> &[f64] {
        match family {
            PerturbationFamily::Blur => &self.blur_sigmas,
            PerturbationFamily::Noise => &self.noise_sigmas,
            PerturbationFamily::Interpolation => &self.interp_ts,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenes.is_empty() {
            return Err(Error::invalid("sweep needs at least one scene"));
        }
        self.geometry.validate()?;
        for family in PerturbationFamily::ALL {
            let params = self.params(family);
            if !params.is_empty() && !params.contains(&0.0) {
                return Err(Error::invalid(format!(
                    "{} sweep must include the matched point 0",
                    family.name()
                )));
            }
            if let Some(v) = params.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
                return Err(Error::invalid(format!("{} parameter {v} must be finite and >= 0", family.name())));
            }
        }
        if let Some(t) = self.interp_ts.iter().find(|t| **t > 1.0) {
            return Err(Error::invalid(format!("interpolation t = {t} outside [0, 1]")));
        }
        let mut ids: Vec<String> = self.scenes.iter().map(SceneSpec::scene_id).collect();
        ids.sort();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("scene ids in a sweep must be unique"));
        }
        Ok(())
    }
}

/// Which image the sweep metrics are measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    /// No-mask lensless reconstruction.
    Lensless,
    GroundTruth,
}

impl ReferenceKind {
    pub fn name(self) -> &'static str {
        match self {
            ReferenceKind::Lensless => "lensless",
            ReferenceKind::GroundTruth => "ground-truth",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub scene_id: String,
    pub seed: u64,
    pub family: PerturbationFamily,
    pub param: f64,
    pub vs_lensless: MetricReport,
    pub vs_truth: MetricReport,
}

impl SweepPoint {
    pub fn report(&self, reference: ReferenceKind) -> &MetricReport {
        match reference {
            ReferenceKind::Lensless => &self.vs_lensless,
            ReferenceKind::GroundTruth => &self.vs_truth,
        }
    }
}

/// Mean and standard deviation across scenes of the channel-mean metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub family: PerturbationFamily,
    pub param: f64,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub config_hash: String,
    /// Sorted by scene, family and parameter.
    pub points: Vec<SweepPoint>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl SweepReport {
    /// `scene_id,perturbation,param,channel,psnr_db,ssim,config_hash,seed`
    pub fn to_csv(&self, reference: ReferenceKind) -> String {
        let mut out = String::from("scene_id,perturbation,param,channel,psnr_db,ssim,config_hash,seed\n");
        for pt in &self.points {
            for row in pt.report(reference).rows() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{:.6},{},{}",
                    pt.scene_id,
                    pt.family.name(),
                    pt.param,
                    row.channel_label(),
                    row.psnr_db,
                    row.ssim,
                    self.config_hash,
                    pt.seed
                );
            }
        }
        out
    }

    pub fn summary(&self, reference: ReferenceKind) -> Vec<SummaryRow> {
        let mut keys: Vec<(PerturbationFamily, f64)> = self.points.iter().map(|p| (p.family, p.param)).collect();
        keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        keys.dedup();
        keys.into_iter()
            .map(|(family, param)| {
                let pts: Vec<&SweepPoint> = self
                    .points
                    .iter()
                    .filter(|p| p.family == family && p.param == param)
                    .collect();
                let psnr: Vec<f64> = pts.iter().map(|p| p.report(reference).mean_psnr_db.rank()).collect();
                let ssim: Vec<f64> = pts.iter().map(|p| p.report(reference).mean_ssim).collect();
                let (psnr_mean, psnr_std) = mean_std(&psnr);
                let (ssim_mean, ssim_std) = mean_std(&ssim);
                SummaryRow {
                    family,
                    param,
                    psnr_mean,
                    psnr_std,
                    ssim_mean,
                    ssim_std,
                }
            })
            .collect()
    }

    /// `perturbation,param,psnr_mean,psnr_std,ssim_mean,ssim_std`
    pub fn summary_csv(&self, reference: ReferenceKind) -> String {
        let mut out = String::from("perturbation,param,psnr_mean,psnr_std,ssim_mean,ssim_std\n");
        for r in self.summary(reference) {
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6},{:.6},{:.6}",
                r.family.name(),
                r.param,
                r.psnr_mean,
                r.psnr_std,
                r.ssim_mean,
                r.ssim_std
            );
        }
        out
    }

    /// Writes `<prefix>_<family>_psnr.png` and `..._ssim.png`: solid line for
    /// the mean across scenes, dashed lines per scene. Returns the written
    /// file names with the plotted ranges.
    pub fn write_plots(
        &self,
        dir: impl AsRef<Path>,
        prefix: &str,
        reference: ReferenceKind,
    ) -> Result<Vec<(String, PlotRange)>> {
        const PALETTE: [[u8; 3]; 6] = [
            [31, 119, 180],
            [255, 127, 14],
            [44, 160, 44],
            [214, 39, 40],
            [148, 103, 189],
            [140, 86, 75],
        ];
        let summary = self.summary(reference);
        let mut scene_ids: Vec<&str> = self.points.iter().map(|p| p.scene_id.as_str()).collect();
        scene_ids.dedup();
        let mut written = Vec::new();
        for family in PerturbationFamily::ALL {
            if !self.points.iter().any(|p| p.family == family) {
                continue;
            }
            for metric in ["psnr", "ssim"] {
                let value = |r: &MetricReport| {
                    if metric == "psnr" {
                        r.mean_psnr_db.rank()
                    } else {
                        r.mean_ssim
                    }
                };
                let mut series: Vec<Series> = scene_ids
                    .iter()
                    .enumerate()
                    .map(|(k, id)| Series {
                        points: self
                            .points
                            .iter()
                            .filter(|p| p.family == family && p.scene_id == *id)
                            .map(|p| (p.param, value(p.report(reference))))
                            .collect(),
                        color: PALETTE[k % PALETTE.len()],
                        dashed: true,
                    })
                    .collect();
                series.push(Series {
                    points: summary
                        .iter()
                        .filter(|r| r.family == family)
                        .map(|r| (r.param, if metric == "psnr" { r.psnr_mean } else { r.ssim_mean }))
                        .collect(),
                    color: [0, 0, 0],
                    dashed: false,
                });
                let name = format!("{prefix}_{}_{metric}.png", family.name());
                let range = save_plot(&series, dir.as_ref().join(&name))?;
                written.push((name, range));
            }
        }
        Ok(written)
    }
}

struct SceneData {
    id: String,
    seed: u64,
    truth: PolarizedScene,
    lensless: PolarizedScene,
    measured: MaskMaps,
    ideal: MaskMaps,
}

/// Runs every (scene, family, parameter) point of the sweep. Points run in
/// parallel; the result order does not depend on scheduling.
pub fn run_mismatch_sweep(
    spec: &SweepSpec,
    psf: &PsfStack,
    cfg: &SolverConfig,
    reference_cfg: &SolverConfig,
) -> Result<SweepReport> {
    spec.validate()?;
    cfg.validate()?;
    reference_cfg.validate()?;
    let scenes = spec
        .scenes
        .par_iter()
        .map(|s| {
            let truth = synthesize_scene(s)?;
            let lensless = lensless_reference(&truth, psf, reference_cfg)?;
            Ok(SceneData {
                id: s.scene_id(),
                seed: s.seed,
                measured: synthesize_measured_response(&spec.geometry, s.height, s.width, spec.extinction)?,
                ideal: make_ideal_mask(s.height, s.width, &spec.geometry)?,
                truth,
                lensless,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, PerturbationFamily, f64)> = (0..scenes.len())
        .flat_map(|k| {
            PerturbationFamily::ALL
                .into_iter()
                .flat_map(move |f| spec.params(f).iter().map(move |&v| (k, f, v)))
        })
        .collect();
    log::info!("mismatch sweep: {} scenes, {} points", scenes.len(), jobs.len());

    let mut points = jobs
        .par_iter()
        .map(|&(k, family, param)| {
            let s = &scenes[k];
            let (data_mask, recon_mask) = mismatch_masks(family, param, &s.measured, &s.ideal, spec.noise_seed)?;
            let extent = s.truth.extent();
            let y = ForwardOperator::new(psf, &data_mask, cfg.conv_mode, extent)?.forward(&s.truth)?;
            let op = ForwardOperator::new(psf, &recon_mask, cfg.conv_mode, extent)?;
            let (x, _) = admm_reconstruct(&op, &y, cfg)?;
            let point = SweepPoint {
                scene_id: s.id.clone(),
                seed: s.seed,
                family,
                param,
                vs_lensless: evaluate_against_reference(&x, &s.lensless, "lensless-reference")?,
                vs_truth: evaluate_against_reference(&x, &s.truth, "ground-truth")?,
            };
            log::debug!(
                "{} {} {}: psnr {} ssim {:.4}",
                point.scene_id,
                family.name(),
                param,
                point.vs_lensless.mean_psnr_db,
                point.vs_lensless.mean_ssim
            );
            Ok(point)
        })
        .collect::<Result<Vec<_>>>()?;
    points.sort_by(|a, b| {
        a.scene_id
            .cmp(&b.scene_id)
            .then(a.family.cmp(&b.family))
            .then(a.param.total_cmp(&b.param))
    });
    Ok(SweepReport {
        config_hash: config_hash(cfg),
        points,
    })
}

/// Sweep with the matched-simulation solver and the no-mask reference preset.
pub fn run_default_sweep(spec: &SweepSpec, psf: &PsfStack) -> Result<SweepReport> {
    run_mismatch_sweep(
        spec,
        psf,
        &SolverPreset::MatchedSim.config(),
        &SolverPreset::NoMask.config(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::sparse_random_psf;

    fn small_cfg() -> SolverConfig {
        SolverConfig {
            admm_iters: 5,
            ..SolverPreset::MatchedSim.config()
        }
    }

    #[test]
    fn config_hash_tracks_every_field() {
        let a = SolverPreset::MatchedSim.config();
        assert_eq!(config_hash(&a), config_hash(&a.clone()));
        assert_eq!(config_hash(&a).len(), 16);
        let b = SolverConfig { cg_tol: 1e-5, ..a.clone() };
        assert_ne!(config_hash(&a), config_hash(&b));
    }

    #[test]
    fn mismatch_masks_follow_protocol() {
        let geom = StripeGeometry::with_width(2);
        let measured = synthesize_measured_response(&geom, 6, 8, 0.05).unwrap();
        let ideal = make_ideal_mask(6, 8, &geom).unwrap();
        let (d, r) = mismatch_masks(PerturbationFamily::Blur, 0.0, &measured, &ideal, 0).unwrap();
        assert_eq!((d.planar(), r.planar()), (measured.planar(), measured.planar()));
        let (d, r) = mismatch_masks(PerturbationFamily::Noise, 0.1, &measured, &ideal, 0).unwrap();
        assert_eq!(d.planar(), ideal.planar());
        assert_ne!(r.planar(), ideal.planar());
        let (d, r) = mismatch_masks(PerturbationFamily::Interpolation, 0.0, &measured, &ideal, 0).unwrap();
        assert_eq!(d.planar(), r.planar());
        let (d, r) = mismatch_masks(PerturbationFamily::Interpolation, 1.0, &measured, &ideal, 0).unwrap();
        assert_eq!((d.planar(), r.planar()), (ideal.planar(), ideal.planar()));
    }

    #[test]
    fn sweep_validation() {
        let mut spec = SweepSpec::desk(16, 16, 1, 0);
        assert!(spec.validate().is_ok());
        spec.blur_sigmas = vec![1.0, 2.0];
        assert!(spec.validate().unwrap_err().to_string().contains("blur"));
        spec.blur_sigmas = vec![];
        spec.interp_ts = vec![0.0, 1.5];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn noise_zero_point_equals_matched_run() {
        let mut spec = SweepSpec::desk(16, 16, 1, 3);
        spec.scenes.truncate(1);
        spec.blur_sigmas.clear();
        spec.interp_ts.clear();
        spec.noise_sigmas = vec![0.0];
        let psf = sparse_random_psf(16, 16, 1, 20, 1).unwrap();
        let cfg = small_cfg();
        let nomask = SolverConfig {
            admm_iters: 5,
            ..SolverPreset::NoMask.config()
        };
        let rep = run_mismatch_sweep(&spec, &psf, &cfg, &nomask).unwrap();
        let truth = synthesize_scene(&spec.scenes[0]).unwrap();
        let ideal = make_ideal_mask(16, 16, &spec.geometry).unwrap();
        let reference = lensless_reference(&truth, &psf, &nomask).unwrap();
        let matched = run_matched_experiment(&truth, &psf, &ideal, &cfg, Some(&reference)).unwrap();
        assert_eq!(rep.points.len(), 1);
        assert_eq!(rep.points[0].vs_truth, matched.vs_truth);
        assert_eq!(Some(&rep.points[0].vs_lensless), matched.vs_reference.as_ref());

        let csv = rep.to_csv(ReferenceKind::Lensless);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "scene_id,perturbation,param,channel,psnr_db,ssim,config_hash,seed");
        assert_eq!(lines.len(), 1 + 5);
        assert!(lines.iter().skip(1).all(|l| l.ends_with(&format!(",{},3", config_hash(&cfg)))));
    }

    #[test]
    fn single_polarization_matches_plain_deconvolution() {
        let e = crate::scene::SceneExtent::new(12, 12, 2, 1).unwrap();
        let x = PolarizedScene::from_fn(e, |i, j, c, _| ((i / 3 + j / 4 + c) % 3) as f64 / 2.0 + 0.1).unwrap();
        let psf = sparse_random_psf(12, 12, 2, 10, 5).unwrap();
        let open = MaskMaps::uniform(12, 12, 1, 1.0).unwrap();
        let cfg = small_cfg();
        let outcome = run_matched_experiment(&x, &psf, &open, &cfg, None).unwrap();
        let op = ForwardOperator::new(&psf, &open, cfg.conv_mode, e).unwrap();
        let (direct, _) = admm_reconstruct(&op, &op.forward(&x).unwrap(), &cfg).unwrap();
        assert_eq!(outcome.reconstruction, direct);
    }
}

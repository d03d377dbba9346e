//! Run configuration: one TOML file, with `--set key.path=value` overrides.
//! Precedence is flags > file > built-in defaults.

use std::path::{Path, PathBuf};

use lenspol_core::diffraction::GapConfig;
use lenspol_core::experiments::{SceneKind, SceneSpec, SweepSpec};
use lenspol_core::masks::{Perturbation, StripeGeometry};
use lenspol_core::optics::{ConvMode, PsfNormalization};
use lenspol_core::solver::{SolverConfig, SolverPreset, TvDims};
use serde::{Deserialize, Serialize};

use crate::CliError;

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub psf: PsfSection,
    #[serde(default)]
    pub mask: MaskSection,
    #[serde(default)]
    pub scene: SceneSection,
    #[serde(default)]
    pub reconstruct: ReconstructSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub stokes: StokesSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub diffract: GapConfig,
}

/// A named preset plus optional per-field overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub preset: SolverPreset,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub admm_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cg_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cg_max_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tv_dims: Option<TvDims>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warm_start_cg: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nonneg: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conv_mode: Option<ConvMode>,
}

impl SolverSection {
    fn with_preset(preset: SolverPreset) -> Self {
        SolverSection {
            preset,
            rho: None,
            lambda: None,
            lambda_w: None,
            admm_iters: None,
            cg_tol: None,
            cg_max_iters: None,
            tv_dims: None,
            noise_sigma: None,
            warm_start_cg: None,
            nonneg: None,
            conv_mode: None,
        }
    }

    pub fn resolve(&self) -> SolverConfig {
        let base = self.preset.config();
        SolverConfig {
            rho: self.rho.unwrap_or(base.rho),
            lambda: self.lambda.unwrap_or(base.lambda),
            lambda_w: self.lambda_w.unwrap_or(base.lambda_w),
            admm_iters: self.admm_iters.unwrap_or(base.admm_iters),
            cg_tol: self.cg_tol.unwrap_or(base.cg_tol),
            cg_max_iters: self.cg_max_iters.unwrap_or(base.cg_max_iters),
            tv_dims: self.tv_dims.unwrap_or(base.tv_dims),
            noise_sigma: self.noise_sigma.unwrap_or(base.noise_sigma),
            warm_start_cg: self.warm_start_cg.unwrap_or(base.warm_start_cg),
            nonneg: self.nonneg.unwrap_or(base.nonneg),
            conv_mode: self.conv_mode.unwrap_or(base.conv_mode),
        }
    }
}

impl Default for SolverSection {
    fn default() -> Self {
        Self::with_preset(SolverPreset::MatchedSim)
    }
}

/// PSF source: a PLT1 file (H, W, C) or a seeded sparse random kernel.
/// Kernels are used at their stored scale unless `normalization` is
/// `unit-sum`; the preset penalties assume unnormalized amplitudes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsfSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub normalization: PsfNormalization,
    pub height: usize,
    pub width: usize,
    pub colors: usize,
    pub impulses: usize,
    /// Defaults to the run seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for PsfSection {
    fn default() -> Self {
        PsfSection {
            path: None,
            normalization: PsfNormalization::Raw,
            height: 128,
            width: 128,
            colors: 3,
            impulses: 200,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskModel {
    Ideal,
    Measured,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskSection {
    /// Load an existing (H, W, P) mask instead of generating one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub height: usize,
    pub width: usize,
    pub model: MaskModel,
    /// Polarizer leakage for the measured model.
    pub extinction: f64,
    pub geometry: StripeGeometry,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<Perturbation>,
}

impl Default for MaskSection {
    fn default() -> Self {
        MaskSection {
            path: None,
            height: 128,
            width: 128,
            model: MaskModel::Ideal,
            extinction: 0.02,
            geometry: StripeGeometry::with_width(8),
            perturbation: None,
        }
    }
}

/// Scene source: a PLT1 file (H, W, C, P) or a synthetic scene. Without
/// either, a 128 x 128 x 3 piecewise-constant scene seeded by the run seed
/// is used.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SceneSpec>,
}

impl SceneSection {
    pub fn spec(&self, seed: u64) -> SceneSpec {
        self.synthetic
            .clone()
            .unwrap_or_else(|| SceneSpec::new(SceneKind::PiecewiseConstant { regions: 12 }, 128, 128, 3, seed))
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measurement: Option<PathBuf>,
    /// Optional ground truth (H, W, C, P) for a metrics report.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub height: usize,
    pub width: usize,
    pub colors: usize,
    /// Defaults to one scene of each kind seeded from the run seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenes: Option<Vec<SceneSpec>>,
    pub geometry: StripeGeometry,
    pub extinction: f64,
    pub blur_sigmas: Vec<f64>,
    pub noise_sigmas: Vec<f64>,
    pub interp_ts: Vec<f64>,
    /// Defaults to the run seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_seed: Option<u64>,
    /// Solver for the no-mask lensless reference.
    pub reference_solver: SolverSection,
}

impl Default for SweepSection {
    fn default() -> Self {
        let d = SweepSpec::desk(128, 128, 3, 0);
        SweepSection {
            height: 128,
            width: 128,
            colors: 3,
            scenes: None,
            geometry: d.geometry,
            extinction: d.extinction,
            blur_sigmas: d.blur_sigmas,
            noise_sigmas: d.noise_sigmas,
            interp_ts: d.interp_ts,
            noise_seed: None,
            reference_solver: SolverSection::with_preset(SolverPreset::NoMask),
        }
    }
}

impl SweepSection {
    pub fn spec(&self, seed: u64) -> SweepSpec {
        SweepSpec {
            scenes: self
                .scenes
                .clone()
                .unwrap_or_else(|| SceneSpec::standard_set(self.height, self.width, self.colors, seed)),
            geometry: self.geometry.clone(),
            extinction: self.extinction,
            blur_sigmas: self.blur_sigmas.clone(),
            noise_sigmas: self.noise_sigmas.clone(),
            noise_seed: self.noise_seed.unwrap_or(seed),
            interp_ts: self.interp_ts.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StokesSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
    pub reference_id: String,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            input: None,
            reference: None,
            reference_id: "reference".into(),
        }
    }
}

/// Parses the right-hand side of `--set`: any TOML value, falling back to a
/// bare string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::new("config", format!("--set expects key=value, got '{assignment}'")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::new("config", format!("bad key path '{key}'")));
    }
    let mut cursor = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| CliError::new("config", format!("'{part}' in '{key}' is not a table")))?;
    }
    cursor.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Reads the optional file, applies overrides in order and deserializes,
/// reporting the dotted path of the first offending field.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::new("io", format!("{}: {e}", p.display())))?;
            toml::from_str::<toml::Table>(&text)
                .map_err(|e| CliError::new("config", format!("{}: {}", p.display(), e.message())))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    from_table(table)
}

pub fn from_table(table: toml::Table) -> Result<RunConfig, CliError> {
    let text = toml::to_string(&table).map_err(|e| CliError::new("config", e.to_string()))?;
    let de = toml::Deserializer::parse(&text).map_err(|e| CliError::new("config", e.message().to_string()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        CliError::new("config", format!("at {path}: {}", inner.message()))
    })
}

pub fn to_toml(cfg: &RunConfig) -> Result<String, CliError> {
    toml::to_string(cfg).map_err(|e| CliError::new("config", e.to_string()))
}

//! Scaled ADMM for `min_x 1/(2 sigma_e^2) ||y - A x||^2 + lambda TV_w(x)`:
//!
//! ```text
//! (A^T A + rho I) v = A^T y + rho (z - u)      CG, warm started
//! z = prox_{(lambda/rho) TV_w}(v + u)
//! z = max(z, 0)
//! u = u + v - z
//! ```
//!
//! All three variables start at zero and `z` is returned.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masks::MaskMaps;
use crate::optics::{norm, ConvMode, ForwardOperator, PsfStack};
use crate::scene::{PolarizedScene, SceneExtent, SensorMeasurement};
use crate::solver::cg::cg_solve;
use crate::solver::tv::{tv_prox_in_place, TvDims, TvWeights};

/// Named parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverPreset {
    /// Captures through the physical mask.
    Real,
    /// Matched and mismatched simulations.
    MatchedSim,
    /// Per-angle reconstructions without a polarization mask.
    NoMask,
}

impl SolverPreset {
    pub fn name(self) -> &'static str {
        match self {
            SolverPreset::Real => "real",
            SolverPreset::MatchedSim => "matched-sim",
            SolverPreset::NoMask => "no-mask",
        }
    }

    pub fn config(self) -> SolverConfig {
        let base = SolverConfig {
            rho: 21.0,
            lambda: 5e-1,
            lambda_w: 5e-1,
            admm_iters: 50,
            cg_tol: 1e-4,
            cg_max_iters: 100,
            tv_dims: TvDims::Full,
            noise_sigma: 1.0,
            warm_start_cg: true,
            nonneg: true,
            conv_mode: ConvMode::PadCrop,
        };
        match self {
            SolverPreset::Real => base,
            SolverPreset::MatchedSim => SolverConfig {
                lambda: 5e-4,
                lambda_w: 5e-4,
                ..base
            },
            SolverPreset::NoMask => SolverConfig {
                rho: 1.0,
                tv_dims: TvDims::SpatialColor,
                ..base
            },
        }
    }
}

fn default_noise_sigma() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub rho: f64,
    pub lambda: f64,
    pub lambda_w: f64,
    pub admm_iters: usize,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    pub tv_dims: TvDims,
    /// Measurement noise std; the data term's 1/(2 sigma^2) is folded into
    /// lambda as `lambda * sigma^2`.
    #[serde(default = "default_noise_sigma")]
    pub noise_sigma: f64,
    #[serde(default = "yes")]
    pub warm_start_cg: bool,
    /// Non-negativity projection of z; disabled only for least-squares checks.
    #[serde(default = "yes")]
    pub nonneg: bool,
    #[serde(default)]
    pub conv_mode: ConvMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverPreset::MatchedSim.config()
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::invalid(format!("{field}: {why}")));
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return bad("rho", format!("must be > 0, got {}", self.rho));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad("lambda", format!("must be >= 0, got {}", self.lambda));
        }
        if !(self.lambda_w >= 0.0) || !self.lambda_w.is_finite() {
            return bad("lambda_w", format!("must be >= 0, got {}", self.lambda_w));
        }
        if self.admm_iters == 0 {
            return bad("admm_iters", "must be >= 1".into());
        }
        if self.cg_max_iters == 0 {
            return bad("cg_max_iters", "must be >= 1".into());
        }
        if !(self.cg_tol > 0.0) {
            return bad("cg_tol", format!("must be > 0, got {}", self.cg_tol));
        }
        if !(self.noise_sigma > 0.0) || !self.noise_sigma.is_finite() {
            return bad("noise_sigma", format!("must be > 0, got {}", self.noise_sigma));
        }
        Ok(())
    }

    pub fn effective_lambda(&self) -> f64 {
        self.lambda * self.noise_sigma * self.noise_sigma
    }

    pub fn weights(&self) -> TvWeights {
        TvWeights::from_anisotropy(self.lambda_w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `||v - z||`
    pub primal_residual: f64,
    /// `||A v - y||`
    pub data_fidelity: f64,
    pub cg_iterations: usize,
    pub cg_residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdmmHistory {
    pub records: Vec<IterationRecord>,
    /// `||y||`, the data residual of the zero initial iterate.
    pub initial_data_fidelity: f64,
}

impl AdmmHistory {
    /// `iteration,primal_residual,data_fidelity` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,primal_residual,data_fidelity\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{:e},{:e}", r.iteration, r.primal_residual, r.data_fidelity);
        }
        out
    }
}

pub fn admm_reconstruct(
    op: &ForwardOperator,
    y: &SensorMeasurement,
    cfg: &SolverConfig,
) -> Result<(PolarizedScene, AdmmHistory)> {
    cfg.validate()?;
    let extent = op.extent();
    let aty = op.adjoint(y)?.into_planar();
    let n = extent.len();
    let rho = cfg.rho;
    let threshold = cfg.effective_lambda() / rho;
    let weights = cfg.weights();

    let mut v = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut scratch = vec![0.0; extent.measurement_len()];
    let mut history = AdmmHistory {
        records: Vec::with_capacity(cfg.admm_iters),
        initial_data_fidelity: norm(y.planar()),
    };

    for iteration in 1..=cfg.admm_iters {
        for i in 0..n {
            rhs[i] = aty[i] + rho * (z[i] - u[i]);
        }
        let x0 = if cfg.warm_start_cg { v.clone() } else { vec![0.0; n] };
        let (v_next, stats) = cg_solve(
            |x, out| op.gram_into(x, rho, &mut scratch, out),
            &rhs,
            &x0,
            cfg.cg_tol,
            cfg.cg_max_iters,
        )
        .map_err(|e| match e {
            Error::CgBreakdown { curvature, .. } => Error::invalid(format!(
                "conjugate gradient breakdown in ADMM iteration {iteration}: curvature {curvature:e}"
            )),
            other => other,
        })?;
        v = v_next;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Diverged { what: "v", iteration });
        }

        for i in 0..n {
            z[i] = v[i] + u[i];
        }
        tv_prox_in_place(&mut z, extent, threshold, weights, cfg.tv_dims);
        if cfg.nonneg {
            z.iter_mut().for_each(|x| *x = x.max(0.0));
        }
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::Diverged { what: "z", iteration });
        }
        let mut primal_sq = 0.0;
        for i in 0..n {
            let d = v[i] - z[i];
            u[i] += d;
            primal_sq += d * d;
        }

        op.forward_into(&v, &mut scratch);
        let data_fidelity = scratch
            .iter()
            .zip(y.planar())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        history.records.push(IterationRecord {
            iteration,
            primal_residual: primal_sq.sqrt(),
            data_fidelity,
            cg_iterations: stats.iterations,
            cg_residual: stats.relative_residual,
        });
        log::debug!(
            "admm {iteration}: primal {:.3e} data {:.3e} cg {} ({:.1e})",
            primal_sq.sqrt(),
            data_fidelity,
            stats.iterations,
            stats.relative_residual
        );
    }
    Ok((PolarizedScene::from_planar(extent, z)?, history))
}

/// Lensless reference without a polarization mask: each external-polarizer
/// capture is reconstructed on its own through an all-open mask, and the
/// results are stacked along the polarization axis.
pub fn reconstruct_no_mask_reference(
    psf: &PsfStack,
    y_per_angle: &[SensorMeasurement],
    cfg: &SolverConfig,
) -> Result<PolarizedScene> {
    let first = y_per_angle
        .first()
        .ok_or_else(|| Error::invalid("no-mask reference needs at least one capture"))?;
    let extent = SceneExtent::new(first.height(), first.width(), first.colors(), 1)?;
    let open = MaskMaps::uniform(extent.height, extent.width, 1, 1.0)?;
    let op = ForwardOperator::new(psf, &open, cfg.conv_mode, extent)?;
    let slices = y_per_angle
        .iter()
        .map(|y| admm_reconstruct(&op, y, cfg).map(|(x, _)| x.polarization_slice(0)))
        .collect::<Result<Vec<_>>>()?;
    PolarizedScene::stack_polarizations(&slices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masks::{make_ideal_mask, StripeGeometry};
    use crate::optics::sparse_random_psf;

    #[test]
    fn presets_carry_the_published_values() {
        let real = SolverPreset::Real.config();
        assert_eq!((real.rho, real.lambda, real.lambda_w), (21.0, 5e-1, 5e-1));
        assert_eq!((real.admm_iters, real.cg_tol, real.cg_max_iters), (50, 1e-4, 100));
        assert_eq!(real.tv_dims, TvDims::Full);

        let sim = SolverPreset::MatchedSim.config();
        assert_eq!((sim.rho, sim.lambda, sim.lambda_w), (21.0, 5e-4, 5e-4));

        let nomask = SolverPreset::NoMask.config();
        assert_eq!((nomask.rho, nomask.lambda, nomask.lambda_w), (1.0, 5e-1, 5e-1));
        assert_eq!(nomask.tv_dims, TvDims::SpatialColor);
        assert_eq!((nomask.admm_iters, nomask.cg_tol, nomask.cg_max_iters), (50, 1e-4, 100));
    }

    #[test]
    fn invalid_configs_name_the_field() {
        let cfg = SolverConfig {
            rho: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("rho"));
        let cfg = SolverConfig {
            cg_tol: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("cg_tol"));
    }

    #[test]
    fn noise_sigma_scales_lambda() {
        let cfg = SolverConfig {
            lambda: 0.2,
            noise_sigma: 0.5,
            ..Default::default()
        };
        assert!((cfg.effective_lambda() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn history_csv_layout() {
        let h = AdmmHistory {
            records: vec![IterationRecord {
                iteration: 1,
                primal_residual: 0.5,
                data_fidelity: 2.0,
                cg_iterations: 3,
                cg_residual: 1e-5,
            }],
            initial_data_fidelity: 4.0,
        };
        assert_eq!(h.to_csv(), "iteration,primal_residual,data_fidelity\n1,5e-1,2e0\n");
    }

    #[test]
    fn identity_operator_recovers_measurement() {
        let e = SceneExtent::new(6, 6, 1, 1).unwrap();
        let mask = MaskMaps::uniform(6, 6, 1, 1.0).unwrap();
        let op = ForwardOperator::new(&PsfStack::delta(3, 3, 1), &mask, ConvMode::PadCrop, e).unwrap();
        let truth = PolarizedScene::from_fn(e, |i, j, _, _| ((i * 6 + j) as f64).sin() + 1.5).unwrap();
        let y = op.forward(&truth).unwrap();
        let cfg = SolverConfig {
            rho: 1.0,
            lambda: 0.0,
            nonneg: false,
            cg_tol: 1e-10,
            ..Default::default()
        };
        let (x, hist) = admm_reconstruct(&op, &y, &cfg).unwrap();
        let err: Vec<f64> = x.planar().iter().zip(truth.planar()).map(|(a, b)| a - b).collect();
        assert!(norm(&err) / norm(truth.planar()) < 1e-3);
        assert_eq!(hist.records.len(), 50);
    }

    #[test]
    fn iterates_stay_nonnegative_and_deterministic() {
        let e = SceneExtent::new(12, 12, 2, 4).unwrap();
        let mask = make_ideal_mask(12, 12, &StripeGeometry::with_width(2)).unwrap();
        let psf = sparse_random_psf(12, 12, 2, 8, 4).unwrap();
        let op = ForwardOperator::new(&psf, &mask, ConvMode::PadCrop, e).unwrap();
        let truth = PolarizedScene::from_fn(e, |i, j, c, p| if (i / 4 + j / 3 + c + p) % 2 == 0 { 1.0 } else { 0.1 })
            .unwrap();
        let y = op.forward(&truth).unwrap();
        let cfg = SolverConfig {
            admm_iters: 10,
            lambda: 0.3,
            ..Default::default()
        };
        let (a, ha) = admm_reconstruct(&op, &y, &cfg).unwrap();
        let (b, hb) = admm_reconstruct(&op, &y, &cfg).unwrap();
        assert!(a.planar().iter().all(|&v| v >= 0.0));
        assert_eq!(a, b);
        assert_eq!(ha, hb);
    }
}

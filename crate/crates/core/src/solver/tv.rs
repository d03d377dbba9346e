//! Weighted anisotropic TV proximal step realized as Haar detail shrinkage.
//!
//! For each active axis, in the fixed order H, W, C, P: split the axis into
//! neighbouring pairs at both phase offsets (0 and 1), soft-threshold the
//! orthonormal Haar detail `(a - b)/sqrt(2)` of every pair by
//! `threshold * weight`, invert, and average the two phase results. Elements
//! left without a partner at a boundary pass through unchanged. Axis passes
//! run sequentially; they do not commute.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{PolarizedScene, SceneExtent};

/// Which axes carry TV differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TvDims {
    /// H, W, C and P.
    #[serde(rename = "4d")]
    Full,
    /// H, W and C only.
    #[serde(rename = "3d")]
    SpatialColor,
}

/// Fixed per-axis TV weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvWeights {
    pub height: f64,
    pub width: f64,
    pub color: f64,
    pub polarization: f64,
}

impl TvWeights {
    /// Spatial axes weigh 1, color `lambda_w`, polarization `lambda_w / 10`.
    pub fn from_anisotropy(lambda_w: f64) -> Self {
        TvWeights {
            height: 1.0,
            width: 1.0,
            color: lambda_w,
            polarization: lambda_w / 10.0,
        }
    }
}

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// One Haar phase along one axis. `data` is read from `src` and the
/// thresholded result written to `dst`.
fn shrink_phase(src: &[f64], dst: &mut [f64], extent: usize, stride: usize, phase: usize, tau: f64) {
    dst.copy_from_slice(src);
    let block = extent * stride;
    for outer in (0..src.len()).step_by(block) {
        for inner in 0..stride {
            let base = outer + inner;
            let mut k = phase;
            while k + 1 < extent {
                let ia = base + k * stride;
                let ib = ia + stride;
                let detail = (src[ia] - src[ib]) * FRAC_1_SQRT_2;
                // amount removed from the detail coefficient by soft thresholding
                let cut = detail.signum() * detail.abs().min(tau);
                let delta = cut * FRAC_1_SQRT_2;
                dst[ia] = src[ia] - delta;
                dst[ib] = src[ib] + delta;
                k += 2;
            }
        }
    }
}

/// Single-phase Haar shrinkage of a 1D signal, exposed for checking against
/// closed forms.
pub fn haar_shrink_1d(signal: &[f64], phase: usize, tau: f64) -> Vec<f64> {
    let mut out = vec![0.0; signal.len()];
    shrink_phase(signal, &mut out, signal.len(), 1, phase, tau);
    out
}

fn shrink_axis(data: &mut [f64], extent: usize, stride: usize, tau: f64) {
    let mut even = vec![0.0; data.len()];
    let mut odd = vec![0.0; data.len()];
    shrink_phase(data, &mut even, extent, stride, 0, tau);
    shrink_phase(data, &mut odd, extent, stride, 1, tau);
    for ((d, a), b) in data.iter_mut().zip(&even).zip(&odd) {
        *d = 0.5 * (a + b);
    }
}

/// In-place prox on planar [c][p][H][W] data.
pub(crate) fn tv_prox_in_place(data: &mut [f64], extent: SceneExtent, threshold: f64, weights: TvWeights, dims: TvDims) {
    if threshold == 0.0 {
        return;
    }
    let plane = extent.plane_len();
    let mut axes = vec![
        (extent.height, extent.width, weights.height),
        (extent.width, 1, weights.width),
        (extent.colors, extent.polarizations * plane, weights.color),
    ];
    if dims == TvDims::Full {
        axes.push((extent.polarizations, plane, weights.polarization));
    }
    for (len, stride, weight) in axes {
        let tau = threshold * weight;
        if len < 2 || tau == 0.0 {
            continue;
        }
        shrink_axis(data, len, stride, tau);
    }
}

pub fn tv_prox(x: &PolarizedScene, threshold: f64, weights: TvWeights, dims: TvDims) -> Result<PolarizedScene> {
    if !(threshold >= 0.0) || !threshold.is_finite() {
        return Err(Error::invalid(format!("tv threshold must be >= 0, got {threshold}")));
    }
    for w in [weights.height, weights.width, weights.color, weights.polarization] {
        if !(w >= 0.0) {
            return Err(Error::invalid(format!("tv weights must be nonnegative, got {w}")));
        }
    }
    let mut data = x.planar().to_vec();
    tv_prox_in_place(&mut data, x.extent(), threshold, weights, dims);
    PolarizedScene::from_planar(x.extent(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::norm;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_scene(e: SceneExtent, rng: &mut ChaCha8Rng) -> PolarizedScene {
        PolarizedScene::from_fn(e, |_, _, _, _| rng.random_range(-2.0..2.0)).unwrap()
    }

    #[test]
    fn two_element_closed_form() {
        // (3, 1), tau = 0.5: mean 4/sqrt2 kept, detail sqrt2 shrunk to sqrt2 - 0.5
        let out = haar_shrink_1d(&[3.0, 1.0], 0, 0.5);
        let s = 2f64.sqrt();
        let mean = 4.0 / s;
        let detail = s - 0.5;
        let expected = [(mean + detail) / s, (mean - detail) / s];
        assert!((out[0] - expected[0]).abs() < 1e-12);
        assert!((out[1] - expected[1]).abs() < 1e-12);
        assert!((out[0] + out[1] - 4.0).abs() < 1e-12);
        // phase 1 on a pair has nothing to pair
        assert_eq!(haar_shrink_1d(&[3.0, 1.0], 1, 0.5), vec![3.0, 1.0]);
        // small details go to zero
        let flat = haar_shrink_1d(&[1.2, 1.0], 0, 1.0);
        assert!((flat[0] - 1.1).abs() < 1e-15 && (flat[1] - 1.1).abs() < 1e-15);
    }

    #[test]
    fn zero_threshold_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_scene(SceneExtent::new(5, 6, 3, 4).unwrap(), &mut rng);
        let y = tv_prox(&x, 0.0, TvWeights::from_anisotropy(0.5), TvDims::Full).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn constant_is_invariant() {
        let e = SceneExtent::new(7, 5, 3, 4).unwrap();
        let x = PolarizedScene::from_fn(e, |_, _, _, _| 0.37).unwrap();
        for thr in [0.01, 1.0, 100.0] {
            let y = tv_prox(&x, thr, TvWeights::from_anisotropy(2.0), TvDims::Full).unwrap();
            assert_eq!(x, y);
        }
    }

    #[test]
    fn three_d_leaves_polarization_axis_alone() {
        // a scene varying only along P is untouched by 3D TV
        let e = SceneExtent::new(4, 4, 2, 4).unwrap();
        let x = PolarizedScene::from_fn(e, |_, _, _, p| p as f64).unwrap();
        let y3 = tv_prox(&x, 1.0, TvWeights::from_anisotropy(1.0), TvDims::SpatialColor).unwrap();
        assert_eq!(x, y3);
        let y4 = tv_prox(&x, 1.0, TvWeights::from_anisotropy(1.0), TvDims::Full).unwrap();
        assert_ne!(x, y4);
    }

    #[test]
    fn nonexpansive_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = SceneExtent::new(6, 5, 3, 4).unwrap();
        for _ in 0..200 {
            let a = random_scene(e, &mut rng);
            let b = random_scene(e, &mut rng);
            let thr = rng.random_range(0.0..1.5);
            let w = TvWeights::from_anisotropy(rng.random_range(0.0..2.0));
            let pa = tv_prox(&a, thr, w, TvDims::Full).unwrap();
            let pb = tv_prox(&b, thr, w, TvDims::Full).unwrap();
            let din: Vec<f64> = a.planar().iter().zip(b.planar()).map(|(x, y)| x - y).collect();
            let dout: Vec<f64> = pa.planar().iter().zip(pb.planar()).map(|(x, y)| x - y).collect();
            assert!(norm(&dout) <= norm(&din) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn rejects_negative_threshold() {
        let x = PolarizedScene::zeros(SceneExtent::new(2, 2, 1, 1).unwrap());
        assert!(tv_prox(&x, -1.0, TvWeights::from_anisotropy(1.0), TvDims::Full).is_err());
    }

    #[test]
    fn weights_follow_anisotropy_rule() {
        let w = TvWeights::from_anisotropy(5e-1);
        assert_eq!((w.height, w.width, w.color), (1.0, 1.0, 0.5));
        assert!((w.polarization - 0.05).abs() < 1e-15);
    }
}

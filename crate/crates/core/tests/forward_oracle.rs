//! FFT forward model against a direct quadruple loop, and the adjoint
//! identity, on small random instances.

use lenspol_core::masks::{MaskMaps, MaskProvenance, StripeGeometry};
use lenspol_core::optics::{dot, norm, ConvMode, ForwardOperator, PsfStack};
use lenspol_core::scene::{PolarizedScene, SceneExtent, SensorMeasurement};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Instance {
    extent: SceneExtent,
    psf: PsfStack,
    mask: MaskMaps,
}

fn random_instance(rng: &mut ChaCha8Rng, max_hw: usize, max_c: usize, mode: ConvMode) -> Instance {
    let h = rng.random_range(1..=max_hw);
    let w = rng.random_range(1..=max_hw);
    let c = rng.random_range(1..=max_c);
    let p = rng.random_range(1..=4);
    let (kh_max, kw_max) = match mode {
        ConvMode::Circular => (h, w),
        ConvMode::PadCrop => (2 * h, 2 * w),
    };
    let kh = rng.random_range(1..=kh_max);
    let kw = rng.random_range(1..=kw_max);
    let kernel: Vec<f64> = (0..kh * kw * c).map(|_| rng.random_range(0.0..1.0)).collect();
    let mask: Vec<f64> = (0..h * w * p).map(|_| rng.random_range(0.0..=1.0)).collect();
    Instance {
        extent: SceneExtent::new(h, w, c, p).unwrap(),
        psf: PsfStack::new_raw(kh, kw, c, kernel).unwrap(),
        mask: MaskMaps::from_planar(h, w, p, mask, MaskProvenance::External, StripeGeometry::default()).unwrap(),
    }
}

fn random_scene(rng: &mut ChaCha8Rng, e: SceneExtent) -> PolarizedScene {
    PolarizedScene::from_fn(e, |_, _, _, _| rng.random_range(-1.0..1.0)).unwrap()
}

/// `y_c(i,j) = sum_p S_p(i,j) sum_{a,b} k_c(a,b) x_{c,p}(i + oh - a, j + ow - b)`
fn direct_forward(inst: &Instance, x: &PolarizedScene, mode: ConvMode) -> Vec<f64> {
    let e = inst.extent;
    let (kh, kw) = (inst.psf.height(), inst.psf.width());
    let (oh, ow) = (kh as i64 / 2, kw as i64 / 2);
    let mut y = vec![0.0; e.measurement_len()];
    for c in 0..e.colors {
        let k = inst.psf.kernel(c);
        for i in 0..e.height {
            for j in 0..e.width {
                let mut acc = 0.0;
                for p in 0..e.polarizations {
                    let mut conv = 0.0;
                    for a in 0..kh {
                        for b in 0..kw {
                            let si = i as i64 + oh - a as i64;
                            let sj = j as i64 + ow - b as i64;
                            let (si, sj) = match mode {
                                ConvMode::Circular => {
                                    (si.rem_euclid(e.height as i64), sj.rem_euclid(e.width as i64))
                                }
                                ConvMode::PadCrop => {
                                    if si < 0 || sj < 0 || si >= e.height as i64 || sj >= e.width as i64 {
                                        continue;
                                    }
                                    (si, sj)
                                }
                            };
                            conv += k[a * kw + b] * x.get(si as usize, sj as usize, c, p);
                        }
                    }
                    acc += inst.mask.get(i, j, p) * conv;
                }
                y[(c * e.height + i) * e.width + j] = acc;
            }
        }
    }
    y
}

#[test]
fn fft_forward_matches_direct_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for mode in [ConvMode::PadCrop, ConvMode::Circular] {
        for _ in 0..150 {
            let inst = random_instance(&mut rng, 8, 2, mode);
            let x = random_scene(&mut rng, inst.extent);
            let op = ForwardOperator::new(&inst.psf, &inst.mask, mode, inst.extent).unwrap();
            let fast = op.forward(&x).unwrap();
            let slow = direct_forward(&inst, &x, mode);
            let diff: Vec<f64> = fast.planar().iter().zip(&slow).map(|(a, b)| a - b).collect();
            let scale = norm(&slow).max(1e-300);
            assert!(
                norm(&diff) / scale < 1e-10,
                "{mode:?} {:?} kernel {}x{}: rel err {}",
                inst.extent,
                inst.psf.height(),
                inst.psf.width(),
                norm(&diff) / scale
            );
        }
    }
}

#[test]
fn adjoint_identity_holds() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xad70);
    for mode in [ConvMode::PadCrop, ConvMode::Circular] {
        for _ in 0..120 {
            let inst = random_instance(&mut rng, 16, 3, mode);
            let e = inst.extent;
            let op = ForwardOperator::new(&inst.psf, &inst.mask, mode, e).unwrap();
            let x = random_scene(&mut rng, e);
            let y_data: Vec<f64> = (0..e.measurement_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = SensorMeasurement::from_planar(e.height, e.width, e.colors, y_data).unwrap();
            let ax = op.forward(&x).unwrap();
            let aty = op.adjoint(&y).unwrap();
            let lhs = dot(ax.planar(), y.planar());
            let rhs = dot(x.planar(), aty.planar());
            let denom = norm(ax.planar()) * norm(y.planar());
            assert!((lhs - rhs).abs() / denom < 1e-10, "{mode:?} {e:?}: {lhs} vs {rhs}");
        }
    }
}

#[test]
fn dense_matrix_is_consistent_with_transposed_adjoint() {
    // column k of A is A e_k; row k of A^T must then equal A^T e_k
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let inst = random_instance(&mut rng, 5, 2, ConvMode::PadCrop);
    let e = inst.extent;
    let op = ForwardOperator::new(&inst.psf, &inst.mask, ConvMode::PadCrop, e).unwrap();
    let (n, m) = (e.len(), e.measurement_len());
    let mut a = vec![0.0; m * n];
    for k in 0..n {
        let mut unit = vec![0.0; n];
        unit[k] = 1.0;
        let col = op.forward(&PolarizedScene::from_planar(e, unit).unwrap()).unwrap();
        for r in 0..m {
            a[r * n + k] = col.planar()[r];
        }
    }
    for r in 0..m {
        let mut unit = vec![0.0; m];
        unit[r] = 1.0;
        let row = op
            .adjoint(&SensorMeasurement::from_planar(e.height, e.width, e.colors, unit).unwrap())
            .unwrap();
        for k in 0..n {
            assert!((row.planar()[k] - a[r * n + k]).abs() < 1e-12);
        }
    }
}

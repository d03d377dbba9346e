//! With the TV weight and the positivity projection switched off, ADMM reduces
//! to proximal-point least squares; compare against a dense ridge solve.

use lenspol_core::masks::{MaskMaps, MaskProvenance, StripeGeometry};
use lenspol_core::optics::{ConvMode, ForwardOperator, PsfStack};
use lenspol_core::scene::{PolarizedScene, SceneExtent, SensorMeasurement};
use lenspol_core::solver::{admm_reconstruct, SolverConfig, SolverPreset};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dense_matrix(op: &ForwardOperator) -> DMatrix<f64> {
    let e = op.extent();
    let (n, m) = (e.len(), e.measurement_len());
    let mut a = DMatrix::zeros(m, n);
    for k in 0..n {
        let mut unit = vec![0.0; n];
        unit[k] = 1.0;
        let col = op.forward(&PolarizedScene::from_planar(e, unit).unwrap()).unwrap();
        a.set_column(k, &DVector::from_column_slice(col.planar()));
    }
    a
}

#[test]
fn unregularized_admm_matches_dense_ridge() {
    let e = SceneExtent::new(6, 6, 1, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let cfg = SolverConfig {
        rho: 1e-3,
        lambda: 0.0,
        nonneg: false,
        admm_iters: 200,
        cg_tol: 1e-13,
        cg_max_iters: 500,
        ..SolverPreset::MatchedSim.config()
    };
    for instance in 0..20 {
        let kernel: Vec<f64> = (0..9).map(|_| rng.random_range(0.0..1.0)).collect();
        let psf = PsfStack::new_raw(3, 3, 1, kernel).unwrap();
        let mask: Vec<f64> = (0..72).map(|_| rng.random_range(0.2..1.0)).collect();
        let mask = MaskMaps::from_planar(6, 6, 2, mask, MaskProvenance::External, StripeGeometry::default()).unwrap();
        let op = ForwardOperator::new(&psf, &mask, ConvMode::PadCrop, e).unwrap();
        let y: Vec<f64> = (0..36).map(|_| rng.random_range(0.0..1.0)).collect();
        let y = SensorMeasurement::from_planar(6, 6, 1, y).unwrap();

        let a = dense_matrix(&op);
        let yv = DVector::from_column_slice(y.planar());
        let lhs = a.transpose() * &a + DMatrix::identity(72, 72) * 1e-9;
        let ridge = lhs.cholesky().expect("ridge system is SPD").solve(&(a.transpose() * yv));

        let (x, _) = admm_reconstruct(&op, &y, &cfg).unwrap();
        let xv = DVector::from_column_slice(x.planar());
        let rel = (&xv - &ridge).norm() / ridge.norm();
        assert!(rel < 1e-4, "instance {instance}: relative gap {rel:e}");
    }
}

#[test]
fn cg_solves_each_inner_system() {
    // the first v-update solves (A^T A + rho I) v = A^T y to the requested tolerance
    let e = SceneExtent::new(8, 8, 2, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let kernel: Vec<f64> = (0..5 * 5 * 2).map(|_| rng.random_range(0.0..1.0)).collect();
    let psf = lenspol_core::optics::measure_psf_normalize(&PsfStack::new_raw(5, 5, 2, kernel).unwrap()).unwrap();
    let mask = lenspol_core::masks::make_ideal_mask(8, 8, &StripeGeometry::with_width(2)).unwrap();
    let op = ForwardOperator::new(&psf, &mask, ConvMode::PadCrop, e).unwrap();
    let y: Vec<f64> = (0..e.measurement_len()).map(|_| rng.random_range(0.0..1.0)).collect();
    let y = SensorMeasurement::from_planar(8, 8, 2, y).unwrap();
    let cfg = SolverConfig {
        admm_iters: 1,
        lambda: 0.0,
        nonneg: false,
        ..SolverPreset::Real.config()
    };
    let (x, hist) = admm_reconstruct(&op, &y, &cfg).unwrap();
    let rec = hist.records[0];
    assert!(rec.cg_residual <= cfg.cg_tol);
    // with no prox, z equals v, so the normal-equation residual can be checked directly
    let g = op.gram(&x, cfg.rho).unwrap();
    let aty = op.adjoint(&y).unwrap();
    let res: f64 = g.planar().iter().zip(aty.planar()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let scale: f64 = aty.planar().iter().map(|v| v * v).sum::<f64>().sqrt();
    // recurrence residual vs true residual: allow a little round-off drift
    assert!(res / scale <= 2.0 * cfg.cg_tol, "{}", res / scale);
}

#[test]
fn primal_residual_shrinks_over_the_run() {
    let e = SceneExtent::new(16, 16, 3, 4).unwrap();
    let psf = lenspol_core::optics::sparse_random_psf(16, 16, 3, 30, 9).unwrap();
    let mask = lenspol_core::masks::make_ideal_mask(16, 16, &StripeGeometry::with_width(2)).unwrap();
    let op = ForwardOperator::new(&psf, &mask, ConvMode::PadCrop, e).unwrap();
    let truth = PolarizedScene::from_fn(e, |i, j, c, p| if (i / 4 + j / 5 + c + p) % 3 == 0 { 0.9 } else { 0.2 }).unwrap();
    let y = op.forward(&truth).unwrap();
    let (_, hist) = admm_reconstruct(&op, &y, &SolverPreset::Real.config()).unwrap();
    let first = hist.records.first().unwrap();
    let last = hist.records.last().unwrap();
    assert_eq!(hist.records.len(), 50);
    assert!(last.primal_residual < first.primal_residual);
    assert!(last.data_fidelity < hist.initial_data_fidelity);
}

use lenspol_core::diffraction::{angular_spectrum_propagate, ComplexField};
use lenspol_core::masks::{
    blur_mask, interpolate_masks, make_ideal_mask, noise_mask, synthesize_measured_response, StripeAxis,
    StripeGeometry,
};
use lenspol_core::optics::{sparse_random_psf, ConvMode, ForwardOperator};
use lenspol_core::scene::{PolarizedScene, SceneExtent};
use lenspol_core::solver::{tv_prox, TvDims, TvWeights};
use lenspol_core::stokes::{polarizer_intensity, stokes_from_subimages};
use num_complex::Complex64;
use proptest::prelude::*;

fn geometry() -> impl Strategy<Value = StripeGeometry> {
    (1usize..6, prop::bool::ANY, -10i64..10).prop_map(|(w, vertical, off)| StripeGeometry {
        stripe_width: w,
        orientation_cycle: vec![0.0, 45.0, 90.0, 135.0],
        stripe_axis: if vertical { StripeAxis::Vertical } else { StripeAxis::Horizontal },
        phase_offset: off,
    })
}

fn scene(e: SceneExtent) -> impl Strategy<Value = PolarizedScene> {
    prop::collection::vec(-2.0f64..2.0, e.len()).prop_map(move |d| PolarizedScene::from_planar(e, d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ideal_mask_partitions_unity(geom in geometry(), h in 1usize..20, w in 1usize..20) {
        let m = make_ideal_mask(h, w, &geom).unwrap();
        for i in 0..h {
            for j in 0..w {
                let sum: f64 = (0..4).map(|p| m.get(i, j, p)).sum();
                prop_assert_eq!(sum, 1.0);
                prop_assert!((0..4).all(|p| m.get(i, j, p) == 0.0 || m.get(i, j, p) == 1.0));
            }
        }
    }

    #[test]
    fn perturbations_stay_in_unit_range(
        geom in geometry(),
        sigma in 0.0f64..4.0,
        noise in 0.0f64..0.5,
        t in 0.0f64..=1.0,
        eps in 0.0f64..0.5,
        seed in any::<u64>(),
    ) {
        let measured = synthesize_measured_response(&geom, 10, 12, eps).unwrap();
        let ideal = make_ideal_mask(10, 12, &geom).unwrap();
        for m in [
            blur_mask(&measured, sigma).unwrap(),
            noise_mask(&ideal, noise, seed).unwrap(),
            interpolate_masks(&measured, &ideal, t).unwrap(),
        ] {
            prop_assert!(m.planar().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn forward_is_linear(
        a in scene(SceneExtent::new(6, 5, 2, 4).unwrap()),
        b in scene(SceneExtent::new(6, 5, 2, 4).unwrap()),
        alpha in -3.0f64..3.0,
        seed in 0u64..1000,
    ) {
        let e = a.extent();
        let psf = sparse_random_psf(4, 3, 2, 5, seed).unwrap();
        let mask = make_ideal_mask(6, 5, &StripeGeometry::with_width(1)).unwrap();
        let op = ForwardOperator::new(&psf, &mask, ConvMode::PadCrop, e).unwrap();
        let combo: Vec<f64> = a.planar().iter().zip(b.planar()).map(|(x, y)| alpha * x + y).collect();
        let lhs = op.forward(&PolarizedScene::from_planar(e, combo).unwrap()).unwrap();
        let (fa, fb) = (op.forward(&a).unwrap(), op.forward(&b).unwrap());
        for ((l, x), y) in lhs.planar().iter().zip(fa.planar()).zip(fb.planar()) {
            prop_assert!((l - (alpha * x + y)).abs() < 1e-12);
        }
    }

    #[test]
    fn tv_prox_is_nonexpansive_and_mean_preserving_on_h(
        a in scene(SceneExtent::new(5, 4, 2, 4).unwrap()),
        b in scene(SceneExtent::new(5, 4, 2, 4).unwrap()),
        thr in 0.0f64..2.0,
        lw in 0.0f64..2.0,
    ) {
        let w = TvWeights::from_anisotropy(lw);
        let pa = tv_prox(&a, thr, w, TvDims::Full).unwrap();
        let pb = tv_prox(&b, thr, w, TvDims::Full).unwrap();
        let din: f64 = a.planar().iter().zip(b.planar()).map(|(x, y)| (x - y).powi(2)).sum();
        let dout: f64 = pa.planar().iter().zip(pb.planar()).map(|(x, y)| (x - y).powi(2)).sum();
        prop_assert!(dout <= din * (1.0 + 1e-12) + 1e-24);
        // Haar shrinkage never changes pair sums, so the total is preserved
        let (sa, spa): (f64, f64) = (a.planar().iter().sum(), pa.planar().iter().sum());
        prop_assert!((sa - spa).abs() < 1e-9);
    }

    #[test]
    fn stokes_round_trip(s0 in 0.0f64..1.0, dolp in 0.0f64..=1.0, psi in -90.0f64..90.0) {
        let i: Vec<f64> = [0.0, 45.0, 90.0, 135.0].iter().map(|&t| polarizer_intensity(s0, dolp, psi, t)).collect();
        let x = PolarizedScene::from_planar(SceneExtent::new(1, 1, 1, 4).unwrap(), i).unwrap();
        let m = stokes_from_subimages(&x).unwrap();
        let r = (2.0 * psi).to_radians();
        prop_assert!((m.s0[0] - s0).abs() < 1e-12);
        prop_assert!((m.s1[0] - s0 * dolp * r.cos()).abs() < 1e-12);
        prop_assert!((m.s2[0] - s0 * dolp * r.sin()).abs() < 1e-12);
        prop_assert!(m.dolp[0] <= 1.0 + 1e-12);
    }

    #[test]
    fn propagation_conserves_energy(seed in any::<u64>(), z in 0.0f64..0.05) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..16 * 16).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let u = ComplexField::new(16, 3e-6, 532e-9, data).unwrap();
        let v = angular_spectrum_propagate(&u, z).unwrap();
        prop_assert!((v.energy() / u.energy() - 1.0).abs() < 1e-10);
    }
}

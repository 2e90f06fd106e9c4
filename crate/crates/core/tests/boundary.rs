use collisionless::boundary::*;
use collisionless::geometry::{Domain, Vector};
use collisionless::vmeasure::VelocityMeasure;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn kernels() -> Vec<DiffuseKernel> {
    let m = VelocityMeasure::lebesgue_annulus(2, 0.05, 4.0).unwrap();
    let heavy = VelocityMeasure::lebesgue_annulus(2, 0.0, 4.0).unwrap();
    vec![
        DiffuseKernel::maxwell(&m, 1.0).unwrap(),
        DiffuseKernel::maxwell(&m, 0.5).unwrap(),
        DiffuseKernel::heavy_low_speed(&heavy, 3.0, 2.0).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn diffuse_kernels_are_stochastic(k in 0usize..3, th in 0.0f64..std::f64::consts::TAU, phi in -1.4f64..1.4, s in 0.1f64..3.9) {
        let kernel = &kernels()[k];
        let d = Domain::unit_disk();
        let x = Vector::polar(th);
        let n = d.normal(x).unwrap();
        let v_out = Vector::polar(th + phi) * s;
        prop_assert!((kernel.column_mass(x, n, v_out) - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn diffuse_samples_point_inward(k in 0usize..3, th in 0.0f64..std::f64::consts::TAU, seed in 0u64..1000, alpha in 0.0f64..=1.0) {
        let kernel = kernels()[k].clone();
        let sampler = DiffuseSampler::new(&kernel).unwrap();
        let h = PartlyDiffuseBoundary::new(AlphaField::constant(alpha), ReflectionLaw::Specular, kernel).unwrap();
        let x = Vector::polar(th);
        let n = x;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let (v, _) = h.sample_post_collision(&sampler, x, n, Vector::polar(th + 0.3) * 1.5, 1e-9, &mut rng).unwrap();
            prop_assert!(v.dot(&n) < 0.0);
            prop_assert!(v.norm() <= 4.0 + 1e-12);
        }
        prop_assert!((h.post_collision_mass(x, n, Vector::polar(th) * 2.0) - 1.0).abs() <= 1e-8);
    }
}

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synctool::homog::{build_target, TargetModel};
use synctool::numlin::{inverse, is_hurwitz, Matrix};
use synctool::protocol::{
    assemble_protocol_block, build_delta, design_gains, explicit_gains, observer_matrix, observer_scaling,
    scaled_observer_matrix, Mode,
};

/// Random target with `A_d` in the closed left half plane: `Γ` from a
/// random monic polynomial with roots in the closed left half plane.
fn random_target(rng: &mut ChaCha8Rng) -> TargetModel {
    let n_q = rng.random_range(2..=4);
    let roots: Vec<f64> = (0..n_q).map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(-2.0..0.0) }).collect();
    // characteristic polynomial sⁿ − Σ γ_k s^k of the companion form
    let mut coeffs = vec![1.0];
    for r in &roots {
        let mut next = vec![0.0; coeffs.len() + 1];
        for (k, c) in coeffs.iter().enumerate() {
            next[k] += c * -r;
            next[k + 1] += c;
        }
        coeffs = next;
    }
    let gamma = Matrix::from_fn(1, n_q, |_, k| -coeffs[k]);
    build_target(1, n_q, gamma).unwrap()
}

fn poles(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| Complex64::new(rng.random_range(-5.0..-1.0), 0.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn delta_is_multiplicative(p in 1usize..4, n_q in 1usize..5, e1 in 0.01f64..1.0, e2 in 0.01f64..1.0) {
        let lhs = build_delta(p, n_q, e1).unwrap() * build_delta(p, n_q, e2).unwrap();
        let rhs = build_delta(p, n_q, e1 * e2).unwrap();
        prop_assert!((lhs - rhs).amax() <= 1e-15);
    }

    #[test]
    fn scaled_observer_similarity(seed in any::<u64>(), eps in 0.01f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_target(&mut rng);
        let n = t.dim();
        let f = design_gains(&t, &poles(&mut rng, n), &poles(&mut rng, n - 1), 1.0).unwrap().f;
        let k1 = Matrix::from_element(1, 1, rng.random_range(0.5..20.0));
        let k2 = Matrix::from_fn(n - 1, 1, |_, _| rng.random_range(-3.0..3.0));
        let params = match explicit_gains(&t, f, k1, k2) {
            Ok(p) => p,
            // K₂ did not stabilize Ā₁ + B̄₁Γ₂ − K₂C̄₁
            Err(_) => return Ok(()),
        };
        let d = observer_scaling(&params, eps);
        let lhs = &d * observer_matrix(&params, eps).unwrap() * inverse(&d).unwrap();
        let rhs = scaled_observer_matrix(&params, eps).unwrap();
        prop_assert!((&lhs - &rhs).amax() <= 1e-8 * rhs.amax().max(1.0));
    }

    #[test]
    fn certified_design_is_stable_for_small_eps(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_target(&mut rng);
        let n = t.dim();
        let params = design_gains(&t, &poles(&mut rng, n), &poles(&mut rng, n - 1), rng.random_range(0.1..2.0)).unwrap();
        prop_assert!(params.k1_meets_bound());
        for eps in [1.0, 0.5, 0.1, 0.05, 0.01] {
            prop_assert!(is_hurwitz(&scaled_observer_matrix(&params, eps).unwrap(), 0.0).unwrap(), "eps = {}", eps);
        }
    }

    #[test]
    fn protocol_block_is_continuous_in_eps(seed in any::<u64>(), eps in 0.01f64..0.99) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_target(&mut rng);
        let n = t.dim();
        let params = design_gains(&t, &poles(&mut rng, n), &poles(&mut rng, n - 1), 1.0).unwrap();
        let a = assemble_protocol_block(&params, eps, Mode::Regulated, true).unwrap();
        let b = assemble_protocol_block(&params, eps * (1.0 + 1e-9), Mode::Regulated, true).unwrap();
        for (x, y) in [(a.dynamics().a(), b.dynamics().a()), (a.dynamics().b(), b.dynamics().b()), (a.dynamics().c(), b.dynamics().c())] {
            prop_assert!((x - y).amax() <= 1e-5 * x.amax().max(1e-300));
        }
    }
}

#[test]
fn eps_outside_unit_interval_rejected() {
    for eps in [0.0, -0.1, 1.5, f64::NAN] {
        assert!(build_delta(1, 3, eps).is_err());
    }
}

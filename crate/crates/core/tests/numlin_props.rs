mod common;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synctool::lti::series;
use synctool::numlin::{eigenvalues, expm, hinf_norm, is_controllable, lyap_solve, place_poles, spectral_norm, Matrix, DEFAULT_HINF_TOL};

use common::{grid_hinf, random_stable};

fn rel_diff(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).amax() / b.amax().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn expm_semigroup(seed in any::<u64>(), n in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_stable(&mut rng, n, 1, 1, 0.1, false).a().clone();
        for h in [0.01, 0.1, 1.0] {
            let e1 = expm(&a, h).unwrap();
            let e2 = expm(&a, 2.0 * h).unwrap();
            prop_assert!(rel_diff(&(&e1 * &e1), &e2) < 1e-9);
        }
    }

    #[test]
    fn placed_poles_are_recovered(seed in any::<u64>(), n in 1usize..6, m in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Matrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
        let b = Matrix::from_fn(n, m, |_, _| rng.random_range(-2.0..2.0));
        prop_assume!(is_controllable(&a, &b).unwrap_or(false));
        let mut poles: Vec<Complex64> = Vec::new();
        while poles.len() < n {
            if n - poles.len() >= 2 && rng.random_bool(0.5) {
                let (re, im) = (rng.random_range(-4.0..-0.5), rng.random_range(0.2..2.0));
                poles.push(Complex64::new(re, im));
                poles.push(Complex64::new(re, -im));
            } else {
                poles.push(Complex64::new(rng.random_range(-4.0..-0.5), 0.0));
            }
        }
        let f = place_poles(&a, &b, &poles).unwrap();
        prop_assert!(eigenvalues(&(&a - &b * f)).unwrap().matches(&poles, 1e-6));
    }

    #[test]
    fn hinf_submultiplicative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n1 = rng.random_range(1..5);
        let n2 = rng.random_range(1..5);
        let g1 = random_stable(&mut rng, n1, 2, 2, 0.2, true);
        let g2 = random_stable(&mut rng, n2, 2, 2, 0.2, true);
        let prod = hinf_norm(&series(&g1, &g2).unwrap(), DEFAULT_HINF_TOL).unwrap();
        let bound = hinf_norm(&g1, DEFAULT_HINF_TOL).unwrap() * hinf_norm(&g2, DEFAULT_HINF_TOL).unwrap();
        prop_assert!(prod <= bound + 1e-6, "{} > {}", prod, bound);
    }
}

#[test]
fn lyapunov_residual_small() {
    let mut rng = ChaCha8Rng::seed_from_u64(93);
    for _ in 0..100 {
        let n = rng.random_range(1..=12);
        let a = random_stable(&mut rng, n, 1, 1, 0.05, false).a().clone();
        let r = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let q = &r * r.transpose() + Matrix::identity(n, n);
        let p = lyap_solve(&a, &q).unwrap();
        let resid = (a.transpose() * &p + &p * &a + &q).amax();
        assert!(resid <= 1e-10 * spectral_norm(&q), "residual {resid:e} at n = {n}");
    }
}

#[test]
fn hinf_matches_frequency_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(94);
    for k in 0..50 {
        let n = rng.random_range(1..=6);
        let (m, p) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let sys = random_stable(&mut rng, n, m, p, 0.3, k % 2 == 0);
        let h = hinf_norm(&sys, DEFAULT_HINF_TOL).unwrap();
        let g = grid_hinf(&sys, 10_000);
        // the grid is a lower bound; allow its resolution error above it
        assert!(h >= g * (1.0 - 1e-6), "{h} below grid {g}");
        assert!((h - g) / g <= 1e-4, "{h} vs grid {g}");
    }
}

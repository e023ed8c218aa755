#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use synctool::homog::{build_target, TargetModel};
use synctool::lti::{AgentModel, StateSpace};
use synctool::numlin::{eigenvalues, from_rows, Matrix};
use synctool::protocol::{explicit_gains, ProtocolParams};
use synctool::scenario::{parse_scenario, Scenario};

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

pub fn load(name: &str) -> Scenario {
    parse_scenario(&scenario_path(name)).unwrap()
}

pub fn case_target() -> TargetModel {
    build_target(1, 3, from_rows(&[&[0.0, -1.0, 0.0]])).unwrap()
}

pub fn case_params() -> ProtocolParams {
    explicit_gains(&case_target(), from_rows(&[&[30.0, 31.0, 10.0]]), from_rows(&[&[1.0]]), from_rows(&[&[1.0], &[1.0]]))
        .unwrap()
}

/// Representatives of the four agent families, agents 1, 2, 3 and 5 of Case 2.
pub fn families() -> Vec<AgentModel> {
    let agents = load("case2.json").agent_models().unwrap();
    vec![agents[0].clone(), agents[1].clone(), agents[2].clone(), agents[4].clone()]
}

/// Random stable realization with spectral abscissa at most `-margin`.
pub fn random_stable<R: Rng>(rng: &mut R, n: usize, m: usize, p: usize, margin: f64, with_d: bool) -> StateSpace {
    let mut normal = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
    let raw = normal(n, n);
    let shift = eigenvalues(&raw).unwrap().abscissa() + margin;
    let a = raw - Matrix::identity(n, n) * shift;
    let b = normal(n, m);
    let c = normal(p, n);
    let d = if with_d { normal(p, m) } else { Matrix::zeros(p, m) };
    StateSpace::new(a, b, c, d).unwrap()
}

/// `max σ(G(jω))` over a log grid of `points` frequencies spanning the
/// pole magnitudes, plus ω = 0. Evaluated with its own complex solve.
pub fn grid_hinf(sys: &StateSpace, points: usize) -> f64 {
    let n = sys.n_states();
    let mags: Vec<f64> = eigenvalues(sys.a()).unwrap().values().iter().map(|z| z.norm()).collect();
    let lo = mags.iter().cloned().fold(f64::INFINITY, f64::min).max(1e-6) / 100.0;
    let hi = mags.iter().cloned().fold(0.0, f64::max).max(1e-6) * 100.0;
    let ac = sys.a().map(|x| Complex64::new(x, 0.0));
    let bc = sys.b().map(|x| Complex64::new(x, 0.0));
    let cc = sys.c().map(|x| Complex64::new(x, 0.0));
    let dc = sys.d().map(|x| Complex64::new(x, 0.0));
    let eval = |w: f64| {
        let m = DMatrix::<Complex64>::identity(n, n) * Complex64::new(0.0, w) - &ac;
        let x = m.lu().solve(&bc).unwrap();
        let g = &cc * x + &dc;
        g.singular_values()[0]
    };
    let mut best = eval(0.0);
    for k in 0..points {
        let w = lo * (hi / lo).powf(k as f64 / (points - 1) as f64);
        best = best.max(eval(w));
    }
    best
}

/// Classical fourth-order Runge–Kutta for `ẋ = A x + B u(t)`, sampled at
/// multiples of `sample_dt`.
pub fn rk4<F: Fn(f64) -> Matrix>(a: &Matrix, b: &Matrix, x0: &Matrix, u: F, h: f64, sample_dt: f64, horizon: f64) -> Vec<Matrix> {
    let f = |t: f64, x: &Matrix| a * x + b * u(t);
    let per = (sample_dt / h).round() as usize;
    let samples = (horizon / sample_dt).round() as usize;
    let mut x = x0.clone();
    let mut t = 0.0;
    let mut out = vec![x.clone()];
    for _ in 0..samples {
        for _ in 0..per {
            let k1 = f(t, &x);
            let k2 = f(t + h / 2.0, &(&x + &k1 * (h / 2.0)));
            let k3 = f(t + h / 2.0, &(&x + &k2 * (h / 2.0)));
            let k4 = f(t + h, &(&x + &k3 * h));
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            t += h;
        }
        out.push(x.clone());
    }
    out
}

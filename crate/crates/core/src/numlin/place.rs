use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    controllable_subspace, eigenvalues, is_hurwitz, multiset_match, orth_complement, require_square, solve,
    spectral_norm, Matrix,
};
use crate::error::{Error, Result};

/// Real coefficients of the monic polynomial with the given roots, lowest
/// degree first (the last entry is 1).
pub fn poly_from_roots(roots: &[Complex64]) -> Vec<f64> {
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (k, c) in coeffs.iter().enumerate() {
            next[k + 1] += c;
            next[k] -= c * r;
        }
        coeffs = next;
    }
    coeffs.into_iter().map(|c| c.re).collect()
}

fn check_conjugate_closed(desired: &[Complex64]) -> Result<()> {
    let scale = desired.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let conj: Vec<Complex64> = desired.iter().map(|z| z.conj()).collect();
    if !multiset_match(desired, &conj, 1e-9 * scale) {
        return Err(Error::contract("place_poles", "desired pole set is not closed under conjugation"));
    }
    Ok(())
}

/// Single-input Ackermann formula: row vector `f` with `eig(a - b f) = desired`.
fn ackermann(a: &Matrix, b: &Matrix, desired: &[Complex64]) -> Result<Matrix> {
    let n = a.nrows();
    let mut ctrb = Matrix::zeros(n, n);
    let mut col = b.clone();
    for k in 0..n {
        ctrb.set_column(k, &col.column(0));
        col = a * col;
    }
    let mut en = Matrix::zeros(n, 1);
    en[(n - 1, 0)] = 1.0;
    let y = solve(&ctrb.transpose(), &en)?;
    let coeffs = poly_from_roots(desired);
    let mut phi = Matrix::identity(n, n) * coeffs[n];
    for k in (0..n).rev() {
        phi = &phi * a + Matrix::identity(n, n) * coeffs[k];
    }
    Ok(y.transpose() * phi)
}

fn single_input_controllable(a: &Matrix, b: &Matrix) -> bool {
    matches!(controllable_subspace(a, b), Ok(basis) if basis.ncols() == a.nrows())
}

/// State feedback `f` (inputs × states) such that `a - b f` has the requested
/// eigenvalues.
///
/// Multi-input pairs are reduced to a single input `b g` (after an optional
/// preliminary feedback) chosen deterministically, then Ackermann's formula is
/// applied.
pub fn place_poles(a: &Matrix, b: &Matrix, desired: &[Complex64]) -> Result<Matrix> {
    let n = require_square(a, "place_poles (A)")?;
    if b.nrows() != n {
        return Err(Error::dim("place_poles", format!("B has {} rows, expected {n}", b.nrows())));
    }
    if desired.len() != n {
        return Err(Error::dim("place_poles", format!("{} poles requested for {n} states", desired.len())));
    }
    check_conjugate_closed(desired)?;
    let m = b.ncols();
    if n == 0 {
        return Ok(Matrix::zeros(m, 0));
    }
    if !super::is_controllable(a, b)? {
        return Err(Error::Synthesis("pair (A, B) is not controllable".into()));
    }

    let mut directions: Vec<Matrix> = (0..m).map(|j| Matrix::from_fn(m, 1, |i, _| if i == j { 1.0 } else { 0.0 })).collect();
    for i in 0..m {
        for j in (i + 1)..m {
            directions.push(Matrix::from_fn(m, 1, |k, _| if k == i || k == j { 1.0 } else { 0.0 }));
        }
    }
    let mut f = None;
    for g in &directions {
        let bg = b * g;
        if single_input_controllable(a, &bg) {
            f = Some(g * ackermann(a, &bg, desired)?);
            break;
        }
    }
    if f.is_none() {
        // Generic preliminary feedback makes (a - b k0, b g) controllable.
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let scale = spectral_norm(a).max(1.0) / spectral_norm(b).max(f64::MIN_POSITIVE);
        for _ in 0..32 {
            let k0 = Matrix::from_fn(m, n, |_, _| scale * (rng.random::<f64>() - 0.5));
            let g = Matrix::from_fn(m, 1, |_, _| rng.random::<f64>() - 0.5);
            let a0 = a - b * &k0;
            let bg = b * &g;
            if single_input_controllable(&a0, &bg) {
                f = Some(k0 + &g * ackermann(&a0, &bg, desired)?);
                break;
            }
        }
    }
    let f = f.ok_or_else(|| Error::Synthesis("no single-input reduction found for pole placement".into()))?;

    let scale = desired.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let distinct = desired
        .iter()
        .enumerate()
        .all(|(i, p)| desired.iter().skip(i + 1).all(|q| (p - q).norm() > 1e-3 * scale));
    if distinct {
        let achieved = eigenvalues(&(a - b * &f))?;
        if !achieved.matches(desired, 1e-6 * scale) {
            return Err(Error::Numerical("pole placement lost accuracy".into()));
        }
    }
    Ok(f)
}

/// Feedback `f` with `a - b f` Hurwitz for a stabilizable pair: the
/// controllable part is placed at `poles` (first entries used), the
/// uncontrollable part must already be stable.
pub fn stabilize(a: &Matrix, b: &Matrix, poles: &[Complex64]) -> Result<Matrix> {
    let n = require_square(a, "stabilize (A)")?;
    let m = b.ncols();
    let v = controllable_subspace(a, b)?;
    let u = orth_complement(&v);
    if u.ncols() > 0 && !is_hurwitz(&(u.transpose() * a * &u), 0.0)? {
        return Err(Error::Synthesis("pair has an uncontrollable mode outside the open left half plane".into()));
    }
    let k = v.ncols();
    if k == 0 {
        return Ok(Matrix::zeros(m, n));
    }
    if poles.len() < k {
        return Err(Error::dim("stabilize", format!("{} poles supplied, controllable part has dimension {k}", poles.len())));
    }
    let ac = v.transpose() * a * &v;
    let bc = v.transpose() * b;
    let fc = place_poles(&ac, &bc, &poles[..k])?;
    Ok(fc * v.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numlin::{eigenvalues, from_rows};

    fn re(values: &[f64]) -> Vec<Complex64> {
        values.iter().map(|&x| Complex64::new(x, 0.0)).collect()
    }

    #[test]
    fn companion_chain_gains_are_polynomial_coefficients() {
        let a = from_rows(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[0.0, 0.0, 0.0]]);
        let b = from_rows(&[&[0.0], &[0.0], &[1.0]]);
        let f = place_poles(&a, &b, &re(&[-2.0, -3.0, -5.0])).unwrap();
        assert_eq!(f, from_rows(&[&[30.0, 31.0, 10.0]]));
    }

    #[test]
    fn scalar_integrator() {
        let f = place_poles(&from_rows(&[&[0.0]]), &from_rows(&[&[1.0]]), &re(&[-1.0])).unwrap();
        assert!((f[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn multi_input_reduction() {
        // first input alone cannot reach the second state
        let a = from_rows(&[&[0.0, 0.0], &[0.0, 1.0]]);
        let b = from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let poles = re(&[-1.0, -4.0]);
        let f = place_poles(&a, &b, &poles).unwrap();
        assert!(eigenvalues(&(a - b * f)).unwrap().matches(&poles, 1e-9));
    }

    #[test]
    fn uncontrollable_pair_is_rejected() {
        let a = from_rows(&[&[1.0, 0.0], &[0.0, 2.0]]);
        let b = from_rows(&[&[1.0], &[0.0]]);
        assert!(matches!(place_poles(&a, &b, &re(&[-1.0, -2.0])), Err(Error::Synthesis(_))));
    }

    #[test]
    fn complex_pair_and_conjugate_check() {
        let a = from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let b = from_rows(&[&[0.0], &[1.0]]);
        let poles = vec![Complex64::new(-1.0, 2.0), Complex64::new(-1.0, -2.0)];
        let f = place_poles(&a, &b, &poles).unwrap();
        assert!((f[(0, 0)] - 5.0).abs() < 1e-12 && (f[(0, 1)] - 2.0).abs() < 1e-12);
        let bad = vec![Complex64::new(-1.0, 2.0), Complex64::new(-1.0, 2.0)];
        assert!(matches!(place_poles(&a, &b, &bad), Err(Error::Contract { .. })));
    }

    #[test]
    fn stabilize_keeps_stable_uncontrollable_mode() {
        let a = from_rows(&[&[-1.0, 0.0, 0.0], &[0.0, 0.0, 1.0], &[0.0, 1.0, -1.0]]);
        let b = from_rows(&[&[0.0], &[0.0], &[1.0]]);
        let f = stabilize(&a, &b, &re(&[-1.0, -2.0, -3.0])).unwrap();
        let s = eigenvalues(&(a - b * f)).unwrap();
        assert!(s.matches(&re(&[-1.0, -1.0, -2.0]), 1e-6));
    }
}

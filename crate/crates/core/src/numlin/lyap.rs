use super::{is_hurwitz, kron, require_square, solve, spectral_norm, Matrix};
use crate::error::{Error, Result};

/// Solves `aᵀ p + p a = -q` for symmetric `p`.
///
/// The equation is vectorized into an `n² × n²` linear system; dimensions in
/// this crate stay in the tens, so the dense solve is both exact enough and
/// fast enough. One step of iterative refinement is applied.
pub fn lyap_solve(a: &Matrix, q: &Matrix) -> Result<Matrix> {
    let n = require_square(a, "lyap_solve (A)")?;
    if q.shape() != (n, n) {
        return Err(Error::dim("lyap_solve", format!("Q must be {n}x{n}, got {}x{}", q.nrows(), q.ncols())));
    }
    let qscale = q.amax().max(f64::MIN_POSITIVE);
    if (q - q.transpose()).amax() > 1e-12 * qscale {
        return Err(Error::contract("lyap_solve", "Q is not symmetric"));
    }
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    if !is_hurwitz(a, 0.0)? {
        return Err(Error::NoSolution("A is not Hurwitz".into()));
    }
    let ident = Matrix::identity(n, n);
    let at = a.transpose();
    let op = kron(&ident, &at) + kron(&at, &ident);
    let rhs = Matrix::from_column_slice(n * n, 1, (-q).as_slice());
    let mut x = solve(&op, &rhs)?;
    let resid = &rhs - &op * &x;
    x += solve(&op, &resid)?;
    let p = Matrix::from_column_slice(n, n, x.as_slice());
    let p = (&p + p.transpose()) * 0.5;
    let residual = spectral_norm(&(&at * &p + &p * a + q));
    if !residual.is_finite() || residual > 1e-6 * spectral_norm(q).max(f64::MIN_POSITIVE) {
        return Err(Error::Numerical(format!("Lyapunov residual {residual:e} too large")));
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numlin::from_rows;

    #[test]
    fn scalar() {
        let p = lyap_solve(&from_rows(&[&[-1.0]]), &from_rows(&[&[2.0]])).unwrap();
        assert!((p[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn decoupled() {
        let a = from_rows(&[&[-1.0, 0.0], &[0.0, -2.0]]);
        let p = lyap_solve(&a, &Matrix::identity(2, 2)).unwrap();
        let expected = from_rows(&[&[0.5, 0.0], &[0.0, 0.25]]);
        assert!((p - expected).amax() < 1e-14);
    }

    #[test]
    fn rejects_unstable_and_asymmetric() {
        let a = from_rows(&[&[1.0]]);
        assert!(matches!(lyap_solve(&a, &from_rows(&[&[1.0]])), Err(Error::NoSolution(_))));
        let a = from_rows(&[&[-1.0, 0.0], &[0.0, -1.0]]);
        let q = from_rows(&[&[1.0, 0.5], &[0.0, 1.0]]);
        assert!(matches!(lyap_solve(&a, &q), Err(Error::Contract { .. })));
    }
}

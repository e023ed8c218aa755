//! Dense linear algebra shared by the rest of the crate.
//!
//! Matrices are `nalgebra::DMatrix<f64>`. Everything here is a pure function
//! of its arguments.

mod expm;
mod hinf;
mod lyap;
mod place;

pub use expm::expm;
pub use hinf::{freq_response, hinf_norm, sigma_max_at, DEFAULT_HINF_TOL};
pub use lyap::lyap_solve;
pub use place::{place_poles, poly_from_roots, stabilize};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type CMatrix = DMatrix<Complex64>;

/// Real-part tolerance used by the default Hurwitz test.
pub const HURWITZ_TOL: f64 = 1e-9;

/// Relative singular-value threshold for rank decisions.
pub const RANK_RTOL: f64 = 1e-8;

/// Eigenvalues of a square matrix, with multiplicity. Ordering is unspecified.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum(pub Vec<Complex64>);

impl Spectrum {
    pub fn values(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Largest real part; `-inf` for an empty spectrum.
    pub fn abscissa(&self) -> f64 {
        self.0.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Multiset comparison: every expected value is paired with a distinct
    /// computed one within `tol`.
    pub fn matches(&self, expected: &[Complex64], tol: f64) -> bool {
        multiset_match(&self.0, expected, tol)
    }

    /// Groups eigenvalues closer than `radius` (transitively) and returns the
    /// mean and size of each group. The mean of a cluster is well conditioned
    /// even when the individual members of a defective eigenvalue are not.
    pub fn clusters(&self, radius: f64) -> Vec<(Complex64, usize)> {
        let n = self.0.len();
        let mut group: Vec<usize> = (0..n).collect();
        fn find(g: &mut [usize], i: usize) -> usize {
            let mut r = i;
            while g[r] != r {
                r = g[r];
            }
            let mut k = i;
            while g[k] != r {
                let next = g[k];
                g[k] = r;
                k = next;
            }
            r
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if (self.0[i] - self.0[j]).norm() <= radius {
                    let (a, b) = (find(&mut group, i), find(&mut group, j));
                    if a != b {
                        group[a] = b;
                    }
                }
            }
        }
        let mut out: Vec<(usize, Complex64, usize)> = Vec::new();
        for i in 0..n {
            let r = find(&mut group, i);
            match out.iter_mut().find(|(root, _, _)| *root == r) {
                Some(entry) => {
                    entry.1 += self.0[i];
                    entry.2 += 1;
                }
                None => out.push((r, self.0[i], 1)),
            }
        }
        out.into_iter().map(|(_, sum, k)| (sum / k as f64, k)).collect()
    }

    /// True when every eigenvalue cluster lies in the closed left half plane.
    pub fn in_closed_lhp(&self, tol: f64) -> bool {
        self.clusters(1e-3).iter().all(|(mean, _)| mean.re <= tol)
    }
}

pub(crate) fn multiset_match(computed: &[Complex64], expected: &[Complex64], tol: f64) -> bool {
    if computed.len() != expected.len() {
        return false;
    }
    let mut used = vec![false; computed.len()];
    for e in expected {
        let best = computed
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, c)| (i, (c - e).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match best {
            Some((i, d)) if d <= tol => used[i] = true,
            _ => return false,
        }
    }
    true
}

pub(crate) fn require_square(a: &Matrix, context: &str) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::dim(context, format!("expected a square matrix, got {}x{}", a.nrows(), a.ncols())));
    }
    Ok(a.nrows())
}

pub(crate) fn require_finite(a: &Matrix, context: &str) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::contract(context, "matrix has non-finite entries"))
    }
}

/// Diagonal similarity scaling (Parlett-Reinsch with powers of two) that
/// equalizes row and column norms. Eigenvalues are preserved exactly.
pub fn balance(a: &Matrix) -> Matrix {
    let n = a.nrows();
    let mut m = a.clone();
    if n < 2 {
        return m;
    }
    const RADIX: f64 = 2.0;
    let mut converged = false;
    let mut sweeps = 0;
    while !converged && sweeps < 100 {
        converged = true;
        sweeps += 1;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].abs();
                    r += m[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= RADIX * RADIX;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= RADIX * RADIX;
            }
            if (c + r) / f < 0.95 * s {
                converged = false;
                let inv = 1.0 / f;
                for j in 0..n {
                    m[(i, j)] *= inv;
                }
                for j in 0..n {
                    m[(j, i)] *= f;
                }
            }
        }
    }
    m
}

/// All eigenvalues of a square real matrix.
pub fn eigenvalues(a: &Matrix) -> Result<Spectrum> {
    let n = require_square(a, "eigenvalues")?;
    require_finite(a, "eigenvalues")?;
    if n == 0 {
        return Ok(Spectrum(Vec::new()));
    }
    let balanced = balance(a);
    let m = faer::Mat::<f64>::from_fn(n, n, |i, j| balanced[(i, j)]);
    let ev = m.eigenvalues().map_err(|e| Error::Numerical(format!("eigenvalue iteration failed: {e:?}")))?;
    let values: Vec<Complex64> = ev.iter().map(|z| Complex64::new(z.re, z.im)).collect();
    if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical("eigenvalue iteration produced non-finite values".into()));
    }
    Ok(Spectrum(values))
}

/// Largest real part of the eigenvalues of `a`.
pub fn spectral_abscissa(a: &Matrix) -> Result<f64> {
    Ok(eigenvalues(a)?.abscissa())
}

/// Strict Hurwitz test: every eigenvalue has real part below `-margin`, with
/// `HURWITZ_TOL` of slack on the strict side.
pub fn is_hurwitz(a: &Matrix, margin: f64) -> Result<bool> {
    let n = require_square(a, "is_hurwitz")?;
    if n == 0 {
        return Ok(true);
    }
    Ok(eigenvalues(a)?.abscissa() < -margin - HURWITZ_TOL)
}

/// Kronecker product.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Matrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s != 0.0 {
                out.view_mut((i * br, j * bc), (br, bc)).copy_from(&(b * s));
            }
        }
    }
    out
}

/// Largest singular value; zero for empty matrices.
pub fn spectral_norm(a: &Matrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.max()
}

pub(crate) fn spectral_norm_c(a: &CMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.max()
}

/// Solves `a x = b` by LU with partial pivoting, rejecting singular systems.
pub fn solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = require_square(a, "solve")?;
    if b.nrows() != n {
        return Err(Error::dim("solve", format!("right-hand side has {} rows, expected {n}", b.nrows())));
    }
    if n == 0 {
        return Ok(Matrix::zeros(0, b.ncols()));
    }
    let lu = a.clone().lu();
    let x = lu.solve(b).ok_or_else(|| Error::Numerical("singular linear system".into()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("singular linear system".into()));
    }
    Ok(x)
}

pub fn inverse(a: &Matrix) -> Result<Matrix> {
    let n = require_square(a, "inverse")?;
    solve(a, &Matrix::identity(n, n))
}

/// Rank with a singular-value threshold `RANK_RTOL * max(sigma_max, scale)`.
///
/// A singular value within one decade of the threshold makes the decision
/// indeterminate and is reported as an error naming `test`.
pub fn rank_decision(a: &Matrix, scale: f64, test: &str) -> Result<usize> {
    if a.is_empty() {
        return Ok(0);
    }
    let sv = a.clone().svd(false, false).singular_values;
    rank_from_singular_values(sv.as_slice(), scale, test)
}

fn rank_from_singular_values(sv: &[f64], scale: f64, test: &str) -> Result<usize> {
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let reference = smax.max(scale);
    if reference == 0.0 {
        return Ok(0);
    }
    let threshold = RANK_RTOL * reference;
    for &s in sv {
        if s > threshold / 10.0 && s < threshold * 10.0 {
            return Err(Error::Indeterminate { test: test.to_string(), value: s, threshold });
        }
    }
    Ok(sv.iter().filter(|&&s| s > threshold).count())
}

/// Orthonormal basis (as columns) of the range of `a`, with a rank decision.
pub fn orth(a: &Matrix, scale: f64, test: &str) -> Result<Matrix> {
    let n = a.nrows();
    if a.is_empty() {
        return Ok(Matrix::zeros(n, 0));
    }
    let svd = a.clone().svd(true, false);
    let r = rank_from_singular_values(svd.singular_values.as_slice(), scale, test)?;
    let u = svd.u.expect("left singular vectors requested");
    // nalgebra does not sort singular values; pick the r largest explicitly
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let mut basis = Matrix::zeros(n, r);
    for (k, &idx) in order.iter().take(r).enumerate() {
        basis.set_column(k, &u.column(idx));
    }
    Ok(basis)
}

/// Orthonormal basis of the orthogonal complement of the column span of an
/// orthonormal `basis`.
pub fn orth_complement(basis: &Matrix) -> Matrix {
    let n = basis.nrows();
    let k = basis.ncols();
    if k == 0 {
        return Matrix::identity(n, n);
    }
    if k >= n {
        return Matrix::zeros(n, 0);
    }
    let proj = Matrix::identity(n, n) - basis * basis.transpose();
    let svd = proj.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let mut out = Matrix::zeros(n, n - k);
    for (c, &idx) in order.iter().take(n - k).enumerate() {
        out.set_column(c, &u.column(idx));
    }
    out
}

/// Orthonormal basis of the controllable subspace of `(a, b)`, built by
/// orthogonal Krylov expansion.
pub fn controllable_subspace(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = require_square(a, "controllable_subspace")?;
    if b.nrows() != n {
        return Err(Error::dim("controllable_subspace", format!("B has {} rows, expected {n}", b.nrows())));
    }
    let scale_a = spectral_norm(a).max(1.0);
    let mut basis = orth(b, 0.0, "controllability (input range)")?;
    let mut frontier = basis.clone();
    while basis.ncols() < n && frontier.ncols() > 0 {
        let mut cand = a * &frontier;
        // two passes of Gram-Schmidt against the current basis
        for _ in 0..2 {
            let coeff = basis.transpose() * &cand;
            cand -= &basis * coeff;
        }
        let new = orth(&cand, scale_a, "controllability (Krylov step)")?;
        if new.ncols() == 0 {
            break;
        }
        let mut merged = Matrix::zeros(n, basis.ncols() + new.ncols());
        merged.view_mut((0, 0), (n, basis.ncols())).copy_from(&basis);
        merged.view_mut((0, basis.ncols()), (n, new.ncols())).copy_from(&new);
        basis = merged;
        frontier = new;
    }
    Ok(basis)
}

/// Stabilizability: the uncontrollable part of `(a, b)` is Hurwitz.
pub fn is_stabilizable(a: &Matrix, b: &Matrix) -> Result<bool> {
    let v = controllable_subspace(a, b)?;
    let u = orth_complement(&v);
    if u.ncols() == 0 {
        return Ok(true);
    }
    let au = u.transpose() * a * &u;
    is_hurwitz(&au, 0.0)
}

/// Detectability, as stabilizability of the dual pair.
pub fn is_detectable(c: &Matrix, a: &Matrix) -> Result<bool> {
    is_stabilizable(&a.transpose(), &c.transpose())
}

pub fn is_controllable(a: &Matrix, b: &Matrix) -> Result<bool> {
    Ok(controllable_subspace(a, b)?.ncols() == a.nrows())
}

pub fn is_observable(c: &Matrix, a: &Matrix) -> Result<bool> {
    is_controllable(&a.transpose(), &c.transpose())
}

/// Stacks matrices vertically; all must share the column count `cols`.
pub fn vstack(blocks: &[&Matrix], cols: usize) -> Matrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        r += b.nrows();
    }
    out
}

/// Stacks matrices horizontally; all must share the row count `rows`.
pub fn hstack(blocks: &[&Matrix], rows: usize) -> Matrix {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.view_mut((0, c), (rows, b.ncols())).copy_from(*b);
        c += b.ncols();
    }
    out
}

/// Block-diagonal matrix.
pub fn block_diag(blocks: &[&Matrix]) -> Matrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Builds a matrix from row-major nested slices.
pub fn from_rows(rows: &[&[f64]]) -> Matrix {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    Matrix::from_fn(r, c, |i, j| rows[i][j])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rotation_generator_spectrum() {
        let a = from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        let s = eigenvalues(&a).unwrap();
        assert!(s.matches(&[c(0.0, 1.0), c(0.0, -1.0)], 1e-12));
    }

    #[test]
    fn eigenvalues_reject_non_square() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(eigenvalues(&a), Err(Error::Dimension { .. })));
    }

    #[test]
    fn target_model_spectrum_is_zero_and_unit_circle_pair() {
        // companion of s^3 + s
        let a = from_rows(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[0.0, -1.0, 0.0]]);
        let s = eigenvalues(&a).unwrap();
        assert!(s.matches(&[c(0.0, 0.0), c(0.0, 1.0), c(0.0, -1.0)], 1e-10));
    }

    #[test]
    fn closed_loop_companion_spectrum() {
        // A - B F with F = (30, 31, 10)
        let a = from_rows(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[-30.0, -31.0, -10.0]]);
        let s = eigenvalues(&a).unwrap();
        assert!(s.matches(&[c(-2.0, 0.0), c(-3.0, 0.0), c(-5.0, 0.0)], 1e-9));
    }

    #[test]
    fn hurwitz_examples() {
        assert!(is_hurwitz(&from_rows(&[&[-1.0, 0.0], &[0.0, -2.0]]), 0.0).unwrap());
        assert!(!is_hurwitz(&from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]), 0.0).unwrap());
        // observer error matrix of the worked example: (-1 +- i sqrt 7) / 2
        let m = from_rows(&[&[-1.0, 1.0], &[-2.0, 0.0]]);
        assert!(is_hurwitz(&m, 0.0).unwrap());
        let s = eigenvalues(&m).unwrap();
        let r7 = 7f64.sqrt() / 2.0;
        assert!(s.matches(&[c(-0.5, r7), c(-0.5, -r7)], 1e-12));
        assert!(!is_hurwitz(&m, 0.6).unwrap());
    }

    #[test]
    fn rank_decision_flags_band() {
        let m = from_rows(&[&[1.0, 0.0], &[0.0, 5e-8]]);
        assert!(matches!(rank_decision(&m, 0.0, "t"), Err(Error::Indeterminate { .. })));
        let m = from_rows(&[&[1.0, 0.0], &[0.0, 1e-12]]);
        assert_eq!(rank_decision(&m, 0.0, "t").unwrap(), 1);
        assert_eq!(rank_decision(&Matrix::zeros(3, 2), 0.0, "t").unwrap(), 0);
    }

    #[test]
    fn clusters_average_defective_eigenvalues() {
        let s = Spectrum(vec![c(1e-6, 0.0), c(-5e-7, 8e-7), c(-5e-7, -8e-7), c(-2.0, 0.0)]);
        let cl = s.clusters(1e-3);
        assert_eq!(cl.len(), 2);
        assert!(s.in_closed_lhp(1e-9));
    }

    #[test]
    fn kron_shape_and_values() {
        let a = from_rows(&[&[1.0, 2.0]]);
        let b = from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let k = kron(&a, &b);
        assert_eq!(k.shape(), (2, 4));
        assert_eq!(k[(0, 3)], 2.0);
        assert_eq!(k[(1, 2)], 2.0);
    }

    #[test]
    fn stabilizability_detects_uncontrollable_unstable_mode() {
        let a = from_rows(&[&[1.0, 0.0], &[0.0, -1.0]]);
        let b = from_rows(&[&[0.0], &[1.0]]);
        assert!(!is_stabilizable(&a, &b).unwrap());
        let a = from_rows(&[&[-1.0, 0.0], &[0.0, 1.0]]);
        assert!(is_stabilizable(&a, &b).unwrap());
    }
}

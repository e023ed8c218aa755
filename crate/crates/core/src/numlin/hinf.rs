use num_complex::Complex64;

use super::{eigenvalues, inverse, is_hurwitz, spectral_norm, spectral_norm_c, CMatrix, Matrix};
use crate::error::{Error, Result};
use crate::lti::StateSpace;

pub const DEFAULT_HINF_TOL: f64 = 1e-6;

/// `C (jωI - A)⁻¹ B + D`.
pub fn freq_response(sys: &StateSpace, omega: f64) -> Result<CMatrix> {
    let n = sys.n_states();
    let d = sys.d().map(|x| Complex64::new(x, 0.0));
    if n == 0 {
        return Ok(d);
    }
    let jw = Complex64::new(0.0, omega);
    let m = CMatrix::from_fn(n, n, |i, j| {
        let diag = if i == j { jw } else { Complex64::new(0.0, 0.0) };
        diag - sys.a()[(i, j)]
    });
    let b = sys.b().map(|x| Complex64::new(x, 0.0));
    let x = m
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Numerical(format!("jωI - A singular at ω = {omega}")))?;
    let c = sys.c().map(|x| Complex64::new(x, 0.0));
    Ok(c * x + d)
}

/// Largest singular value of the frequency response at `omega`.
pub fn sigma_max_at(sys: &StateSpace, omega: f64) -> Result<f64> {
    Ok(spectral_norm_c(&freq_response(sys, omega)?))
}

fn hamiltonian(sys: &StateSpace, gamma: f64) -> Result<Matrix> {
    let (a, b, c, d) = (sys.a(), sys.b(), sys.c(), sys.d());
    let n = a.nrows();
    let (p, m) = d.shape();
    let g2 = gamma * gamma;
    let r_inv = inverse(&(d.transpose() * d - Matrix::identity(m, m) * g2))?;
    let s_inv = inverse(&(d * d.transpose() - Matrix::identity(p, p) * g2))?;
    let h11 = a - b * &r_inv * d.transpose() * c;
    let h12 = -(b * &r_inv * b.transpose()) * gamma;
    let h21 = c.transpose() * &s_inv * c * gamma;
    let h22 = -a.transpose() + c.transpose() * d * &r_inv * b.transpose();
    let mut h = Matrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&h11);
    h.view_mut((0, n), (n, n)).copy_from(&h12);
    h.view_mut((n, 0), (n, n)).copy_from(&h21);
    h.view_mut((n, n), (n, n)).copy_from(&h22);
    Ok(h)
}

/// Frequencies of the (numerically) imaginary eigenvalues of the Hamiltonian
/// at level `gamma`; empty when `gamma` exceeds every singular value curve.
fn crossings(sys: &StateSpace, gamma: f64) -> Result<Vec<f64>> {
    let h = hamiltonian(sys, gamma)?;
    let tol = 1e-8 * (1.0 + h.norm());
    let mut freqs: Vec<f64> = eigenvalues(&h)?
        .values()
        .iter()
        .filter(|z| z.re.abs() <= tol && z.im >= 0.0)
        .map(|z| z.im)
        .collect();
    freqs.sort_by(f64::total_cmp);
    freqs.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * (1.0 + y.abs()));
    Ok(freqs)
}

/// Largest σ_max over the crossing frequencies and the midpoints between
/// consecutive ones (the peak lies inside one of those intervals).
fn peak_near(sys: &StateSpace, freqs: &[f64]) -> Result<f64> {
    let mut best: f64 = 0.0;
    for (k, &w) in freqs.iter().enumerate() {
        best = best.max(sigma_max_at(sys, w)?);
        if let Some(&next) = freqs.get(k + 1) {
            best = best.max(sigma_max_at(sys, 0.5 * (w + next))?);
        }
    }
    Ok(best)
}

/// H∞ norm of a stable system, to relative tolerance `tol`.
///
/// Bisection on γ using the Hamiltonian imaginary-axis eigenvalue test. The
/// lower end of the bracket starts from σ_max(D) and a frequency sample; every
/// detected crossing also raises it to the peak σ_max found near the crossing
/// frequencies, which is always a valid lower bound.
pub fn hinf_norm(sys: &StateSpace, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::contract("hinf_norm", "tolerance must be positive"));
    }
    if !is_hurwitz(sys.a(), 0.0)? {
        return Err(Error::InfiniteNorm("state matrix is not Hurwitz".into()));
    }
    let d_norm = spectral_norm(sys.d());
    if sys.n_states() == 0 || sys.b().amax() == 0.0 || sys.c().amax() == 0.0 {
        return Ok(d_norm);
    }

    let poles = eigenvalues(sys.a())?;
    let mags: Vec<f64> = poles.values().iter().map(|z| z.norm()).filter(|m| *m > 0.0).collect();
    let wmin = mags.iter().cloned().fold(f64::INFINITY, f64::min).max(1e-6) / 10.0;
    let wmax = mags.iter().cloned().fold(0.0, f64::max).max(wmin * 100.0) * 10.0;
    let mut sample: Vec<f64> = vec![0.0];
    let steps = 60;
    for k in 0..=steps {
        sample.push(wmin * (wmax / wmin).powf(k as f64 / steps as f64));
    }
    sample.extend(poles.values().iter().filter(|z| z.im >= 0.0).map(|z| z.im));
    let mut lo = d_norm;
    for w in sample {
        lo = lo.max(sigma_max_at(sys, w)?);
    }
    if lo == 0.0 {
        return Ok(0.0);
    }

    let mut hi = 10.0 * lo;
    let mut expansions = 0;
    loop {
        let freqs = crossings(sys, hi)?;
        if freqs.is_empty() {
            break;
        }
        lo = lo.max(peak_near(sys, &freqs)?);
        hi = 10.0 * hi.max(lo);
        expansions += 1;
        if expansions > 40 {
            return Err(Error::Numerical("H-infinity bracket did not close".into()));
        }
    }

    let mut iters = 0;
    while hi - lo > tol * lo {
        let gamma = 0.5 * (lo + hi);
        let freqs = crossings(sys, gamma)?;
        if freqs.is_empty() {
            hi = gamma;
        } else {
            let peak = peak_near(sys, &freqs)?;
            if peak >= gamma * (1.0 - 1e-3) {
                lo = lo.max(gamma).max(peak.min(hi));
            } else {
                // near-axis eigenvalues that do not correspond to a singular
                // value crossing: treat the level as clear
                hi = gamma;
            }
        }
        iters += 1;
        if iters > 200 {
            return Err(Error::Numerical("H-infinity bisection did not converge".into()));
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numlin::from_rows;

    fn tf1(a: f64) -> StateSpace {
        StateSpace::new(from_rows(&[&[-a]]), from_rows(&[&[1.0]]), from_rows(&[&[1.0]]), from_rows(&[&[0.0]])).unwrap()
    }

    #[test]
    fn first_order_lag_peaks_at_dc() {
        let g = hinf_norm(&tf1(1.0), 1e-8).unwrap();
        assert!((g - 1.0).abs() < 1e-7);
    }

    #[test]
    fn lightly_damped_resonance() {
        let sys = StateSpace::new(
            from_rows(&[&[0.0, 1.0], &[-1.0, -0.2]]),
            from_rows(&[&[0.0], &[1.0]]),
            from_rows(&[&[1.0, 0.0]]),
            from_rows(&[&[0.0]]),
        )
        .unwrap();
        let zeta: f64 = 0.1;
        let expected = 1.0 / (2.0 * zeta * (1.0 - zeta * zeta).sqrt());
        let g = hinf_norm(&sys, 1e-9).unwrap();
        assert!((g - expected).abs() / expected < 1e-7, "{g} vs {expected}");
    }

    #[test]
    fn static_gain() {
        let d = from_rows(&[&[3.0, 0.0], &[0.0, -4.0]]);
        let sys = StateSpace::new(Matrix::zeros(0, 0), Matrix::zeros(0, 2), Matrix::zeros(2, 0), d).unwrap();
        assert!((hinf_norm(&sys, 1e-6).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn unstable_is_infinite() {
        assert!(matches!(hinf_norm(&tf1(-1.0), 1e-6), Err(Error::InfiniteNorm(_))));
    }

    #[test]
    fn feedthrough_plus_dynamics() {
        // 1/(s+1) + 0.5: peak 1.5 at DC
        let sys = StateSpace::new(from_rows(&[&[-1.0]]), from_rows(&[&[1.0]]), from_rows(&[&[1.0]]), from_rows(&[&[0.5]]))
            .unwrap();
        assert!((hinf_norm(&sys, 1e-9).unwrap() - 1.5).abs() < 1e-8);
    }
}

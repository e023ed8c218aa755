//! Gain synthesis and the per-agent protocol blocks.
//!
//! Each agent runs an observer-like block with state `(x̂, χ)`. It receives
//! the relative output measurement `ζ` (or `ζ̄` in regulated mode) and the
//! network combination `ζ̂` of its neighbours' `χ`, and produces the
//! precompensator input `v = −ε^{−n_q} F Δ χ`. The structure does not depend
//! on the graph; only `ε` is tuned.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::homog::TargetModel;
use crate::lti::StateSpace;
use crate::numlin::{eigenvalues, is_hurwitz, lyap_solve, place_poles, spectral_norm, vstack, Matrix};

/// Default pole set `{−2, −3, …}` of the given length.
pub fn default_poles(len: usize) -> Vec<Complex64> {
    (0..len).map(|k| Complex64::new(-(k as f64) - 2.0, 0.0)).collect()
}

/// Gains shared by every agent. `ε` is supplied separately.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolParams {
    target: TargetModel,
    pub f: Matrix,
    pub k1: Matrix,
    pub k2: Matrix,
    pub alpha: f64,
    /// Lyapunov certificate for `Ā₁ + B̄₁Γ₂ − K₂C̄₁` with right-hand side `−3I`.
    pub p_cert: Matrix,
    pub psi: Matrix,
}

impl ProtocolParams {
    pub fn target(&self) -> &TargetModel {
        &self.target
    }

    /// `K = [K₁; K₂K₁]`.
    pub fn k(&self) -> Matrix {
        vstack(&[&self.k1, &(&self.k2 * &self.k1)], self.target.p())
    }

    /// Whether `K₁ − (α/2) I` is positive definite.
    pub fn k1_meets_bound(&self) -> bool {
        let p = self.target.p();
        let shifted = (&self.k1 + self.k1.transpose()) * 0.5 - Matrix::identity(p, p) * (self.alpha / 2.0);
        shifted.symmetric_eigenvalues().iter().all(|&l| l > 0.0)
    }
}

/// `(α, P, Ψ)` for a given `K₂`. Fails when `Ā₁ + B̄₁Γ₂ − K₂C̄₁` is not Hurwitz.
fn alpha_terms(target: &TargetModel, k2: &Matrix) -> Result<(f64, Matrix, Matrix)> {
    let c1 = target.c1();
    let ak = target.a1() + target.b1() * target.gamma2() - k2 * &c1;
    let n1 = ak.nrows();
    if !is_hurwitz(&ak, 0.0)? {
        return Err(Error::Synthesis("A1 + B1 Gamma2 - K2 C1 is not Hurwitz".into()));
    }
    let p_cert = lyap_solve(&ak, &(Matrix::identity(n1, n1) * 3.0))?;
    let psi = psi_matrix(target, k2);
    let alpha = alpha_value(&c1, k2, &p_cert, &psi);
    Ok((alpha, p_cert, psi))
}

/// `Ψ = Ā₁K₂ − K₂C̄₁K₂ + B̄₁Γ₁ + B̄₁Γ₂K₂`.
pub fn psi_matrix(target: &TargetModel, k2: &Matrix) -> Matrix {
    let (a1, b1, c1) = (target.a1(), target.b1(), target.c1());
    let (g1, g2) = (target.gamma1(), target.gamma2());
    &a1 * k2 - k2 * &c1 * k2 + &b1 * &g1 + &b1 * &g2 * k2
}

/// `α = 1 + 2‖C̄₁K₂‖ + ‖PΨ‖² + ‖C̄₁‖²`.
pub fn alpha_value(c1: &Matrix, k2: &Matrix, p_cert: &Matrix, psi: &Matrix) -> f64 {
    let ppsi = spectral_norm(&(p_cert * psi));
    1.0 + 2.0 * spectral_norm(&(c1 * k2)) + ppsi * ppsi + spectral_norm(c1).powi(2)
}

/// Places `F` and `K₂`, evaluates `α` and sets `K₁ = (α/2 + alpha_margin) I`.
pub fn design_gains(
    target: &TargetModel,
    f_poles: &[Complex64],
    k2_poles: &[Complex64],
    alpha_margin: f64,
) -> Result<ProtocolParams> {
    let (p, n) = (target.p(), target.dim());
    check_stable_poles(f_poles, n, "F poles")?;
    check_stable_poles(k2_poles, n - p, "K2 poles")?;
    if !(alpha_margin > 0.0) {
        return Err(Error::contract("design_gains", "alpha margin must be positive"));
    }
    let f = place_poles(&target.a_bar(), &target.b_bar(), f_poles)?;
    let k2 = place_k2(target, k2_poles)?;
    let (alpha, p_cert, psi) = alpha_terms(target, &k2)?;
    let k1 = Matrix::identity(p, p) * (alpha / 2.0 + alpha_margin);
    Ok(ProtocolParams { target: target.clone(), f, k1, k2, alpha, p_cert, psi })
}

/// `K₂` placing the spectrum of `Ā₁ + B̄₁Γ₂ − K₂C̄₁` at `poles`.
pub fn place_k2(target: &TargetModel, poles: &[Complex64]) -> Result<Matrix> {
    let (p, n) = (target.p(), target.dim());
    check_stable_poles(poles, n - p, "K2 poles")?;
    if n == p {
        return Ok(Matrix::zeros(0, p));
    }
    let a_dual = (target.a1() + target.b1() * target.gamma2()).transpose();
    Ok(place_poles(&a_dual, &target.c1().transpose(), poles)?.transpose())
}

/// `α` for a given `K₂`.
pub fn alpha_for(target: &TargetModel, k2: &Matrix) -> Result<f64> {
    if k2.shape() != (target.dim() - target.p(), target.p()) {
        return Err(Error::dim("alpha_for", "K2 has the wrong shape"));
    }
    Ok(alpha_terms(target, k2)?.0)
}

/// Uses caller-supplied `F`, `K₁`, `K₂`. `α` is still computed and a warning
/// is logged when `K₁` does not exceed `α/2`.
pub fn explicit_gains(target: &TargetModel, f: Matrix, k1: Matrix, k2: Matrix) -> Result<ProtocolParams> {
    let (p, n) = (target.p(), target.dim());
    if f.shape() != (p, n) || k1.shape() != (p, p) || k2.shape() != (n - p, p) {
        return Err(Error::dim(
            "explicit_gains",
            format!("expected F {p}x{n}, K1 {p}x{p}, K2 {}x{p}", n - p),
        ));
    }
    if (&k1 - k1.transpose()).amax() > 1e-12 * k1.amax().max(1.0) {
        return Err(Error::contract("explicit_gains", "K1 must be symmetric"));
    }
    if !is_hurwitz(&(target.a_bar() - target.b_bar() * &f), 0.0)? {
        return Err(Error::Synthesis("A - B F is not Hurwitz for the supplied F".into()));
    }
    let (alpha, p_cert, psi) = alpha_terms(target, &k2)?;
    let params = ProtocolParams { target: target.clone(), f, k1, k2, alpha, p_cert, psi };
    if !params.k1_meets_bound() {
        log::warn!("supplied K1 does not exceed alpha/2 = {:.6}; stability is not certified by the design bound", alpha / 2.0);
    }
    Ok(params)
}

fn check_stable_poles(poles: &[Complex64], len: usize, what: &str) -> Result<()> {
    if poles.len() != len {
        return Err(Error::dim("design_gains", format!("{what}: {} given, {len} required", poles.len())));
    }
    if poles.iter().any(|z| !(z.re < 0.0)) {
        return Err(Error::contract("design_gains", format!("{what} must lie in the open left half plane")));
    }
    Ok(())
}

fn require_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::contract("protocol", format!("eps = {eps} outside (0, 1]")));
    }
    Ok(())
}

/// `Δ = diag(I_p, εI_p, …, ε^{n_q−1}I_p)`.
pub fn build_delta(p: usize, n_q: usize, eps: f64) -> Result<Matrix> {
    require_eps(eps)?;
    let mut d = Matrix::zeros(p * n_q, p * n_q);
    for k in 0..n_q {
        let s = eps.powi(k as i32);
        for j in 0..p {
            d[(k * p + j, k * p + j)] = s;
        }
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    OutputSync,
    Regulated,
}

/// One agent's protocol: state `(x̂, χ)`, inputs `(ζ, ζ̂)`, outputs `(v, χ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolBlock {
    dyn_: StateSpace,
    pub mode: Mode,
    pub iota: bool,
}

impl ProtocolBlock {
    pub fn dynamics(&self) -> &StateSpace {
        &self.dyn_
    }
}

/// `ε^{−n_q} F Δ`, the read-out gain with `v = −(this) χ`.
pub fn readout_gain(params: &ProtocolParams, eps: f64) -> Result<Matrix> {
    let t = params.target();
    let delta = build_delta(t.p(), t.n_q(), eps)?;
    Ok(&params.f * delta * eps.powi(-(t.n_q() as i32)))
}

pub fn assemble_protocol_block(params: &ProtocolParams, eps: f64, mode: Mode, iota: bool) -> Result<ProtocolBlock> {
    require_eps(eps)?;
    let t = params.target();
    let (p, n) = (t.p(), t.dim());
    let iota = mode == Mode::Regulated && iota;
    let io = if iota { 1.0 } else { 0.0 };
    let inv = 1.0 / eps;
    let ad = t.a_d();
    let bbar = t.b_bar();
    let k = params.k();
    let fe = readout_gain(params, eps)?;
    let bfe = &bbar * &fe;
    let ident = Matrix::identity(n, n);

    let mut a = Matrix::zeros(2 * n, 2 * n);
    a.view_mut((0, 0), (n, n)).copy_from(&(&ad - &k * t.c_bar() * inv));
    a.view_mut((0, n), (n, n)).copy_from(&(-&bfe * io));
    a.view_mut((n, 0), (n, n)).copy_from(&(&ident * inv));
    a.view_mut((n, n), (n, n)).copy_from(&(&ad - &bfe - &ident * (inv * io)));

    let mut b = Matrix::zeros(2 * n, p + n);
    b.view_mut((0, 0), (n, p)).copy_from(&(&k * inv));
    b.view_mut((0, p), (n, n)).copy_from(&(-&bfe));
    b.view_mut((n, p), (n, n)).copy_from(&(-&ident * inv));

    let mut c = Matrix::zeros(p + n, 2 * n);
    c.view_mut((0, n), (p, n)).copy_from(&(-&fe));
    c.view_mut((p, n), (n, n)).copy_from(&ident);

    let dyn_ = StateSpace::strictly_proper(a, b, c)?;
    Ok(ProtocolBlock { dyn_, mode, iota })
}

/// Observer error matrix `Ā + B̄Γ − ε⁻¹KC̄`.
pub fn observer_matrix(params: &ProtocolParams, eps: f64) -> Result<Matrix> {
    require_eps(eps)?;
    let t = params.target();
    Ok(t.a_d() - params.k() * t.c_bar() / eps)
}

/// The scaled observer error matrix
/// `[[−ε⁻¹K₁ + C̄₁K₂, ε⁻¹C̄₁], [εΨ, Ā₁ + B̄₁Γ₂ − K₂C̄₁]]`, similar to
/// `observer_matrix` through `Δ̄ = [[I, 0], [−εK₂, εI]]`.
pub fn scaled_observer_matrix(params: &ProtocolParams, eps: f64) -> Result<Matrix> {
    require_eps(eps)?;
    let t = params.target();
    let p = t.p();
    let n1 = t.dim() - p;
    let c1 = t.c1();
    let mut m = Matrix::zeros(p + n1, p + n1);
    m.view_mut((0, 0), (p, p)).copy_from(&(-&params.k1 / eps + &c1 * &params.k2));
    m.view_mut((0, p), (p, n1)).copy_from(&(&c1 / eps));
    m.view_mut((p, 0), (n1, p)).copy_from(&(&params.psi * eps));
    m.view_mut((p, p), (n1, n1)).copy_from(&(t.a1() + t.b1() * t.gamma2() - &params.k2 * &c1));
    Ok(m)
}

/// `Δ̄ = [[I_p, 0], [−εK₂, εI]]`.
pub fn observer_scaling(params: &ProtocolParams, eps: f64) -> Matrix {
    let t = params.target();
    let p = t.p();
    let n1 = t.dim() - p;
    let mut d = Matrix::identity(p + n1, p + n1) * eps;
    d.view_mut((0, 0), (p, p)).copy_from(&Matrix::identity(p, p));
    d.view_mut((p, 0), (n1, p)).copy_from(&(-&params.k2 * eps));
    d
}

/// Largest real part of the observer error spectrum.
pub fn observer_abscissa(params: &ProtocolParams, eps: f64) -> Result<f64> {
    Ok(eigenvalues(&observer_matrix(params, eps)?)?.abscissa())
}

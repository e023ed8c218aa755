//! Target model, exosystem remodeling and homogenizing precompensators.
//!
//! Every agent is wrapped in a precompensator so that, from the new input `v`
//! to the output `y`, it behaves exactly like the common target
//! `(C̄, Ā + B̄Γ, B̄)`: a chain of `n_q` integrators per output channel with the
//! feedback `Γ` installed at the top of the chain.
//!
//! Synthesis is restricted to agents whose local measurement `z = Cᵐ x` is
//! the full state (`Cᵐ` square and invertible). Anything else is reported as
//! unsupported.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lti::{markov_params, AgentModel, StateSpace};
use crate::numlin::{
    self, eigenvalues, hstack, inverse, is_hurwitz, orth, orth_complement, place_poles, rank_decision, solve,
    spectral_norm, stabilize, vstack, Matrix,
};

/// The uniform-rank triple `(C̄, A_d = Ā + B̄Γ, B̄)`.
///
/// States are ordered by derivative: block `k` (of size `p`) holds the
/// `k`-th derivative of the output.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetModel {
    p: usize,
    n_q: usize,
    gamma: Matrix,
}

impl TargetModel {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_q(&self) -> usize {
        self.n_q
    }

    /// State dimension `p·n_q`.
    pub fn dim(&self) -> usize {
        self.p * self.n_q
    }

    pub fn gamma(&self) -> &Matrix {
        &self.gamma
    }

    /// Block shift `Ā`.
    pub fn a_bar(&self) -> Matrix {
        let n = self.dim();
        Matrix::from_fn(n, n, |i, j| if j == i + self.p { 1.0 } else { 0.0 })
    }

    pub fn b_bar(&self) -> Matrix {
        let n = self.dim();
        Matrix::from_fn(n, self.p, |i, j| if i == n - self.p + j { 1.0 } else { 0.0 })
    }

    pub fn c_bar(&self) -> Matrix {
        Matrix::from_fn(self.p, self.dim(), |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn a_d(&self) -> Matrix {
        self.a_bar() + self.b_bar() * &self.gamma
    }

    /// `C̄₁`, the `p × p(n_q−1)` block with `Ā = [[0, C̄₁], [0, Ā₁]]`.
    pub fn c1(&self) -> Matrix {
        let n1 = self.dim() - self.p;
        Matrix::from_fn(self.p, n1, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    /// `Ā₁`, the shift on the lower `p(n_q−1)` states.
    pub fn a1(&self) -> Matrix {
        let n1 = self.dim() - self.p;
        Matrix::from_fn(n1, n1, |i, j| if j == i + self.p { 1.0 } else { 0.0 })
    }

    /// `B̄₁` with `B̄ = [0; B̄₁]`.
    pub fn b1(&self) -> Matrix {
        let n1 = self.dim() - self.p;
        Matrix::from_fn(n1, self.p, |i, j| if i == n1 - self.p + j { 1.0 } else { 0.0 })
    }

    /// `Γ₁`, the first `p` columns of `Γ`.
    pub fn gamma1(&self) -> Matrix {
        self.gamma.columns(0, self.p).into_owned()
    }

    /// `Γ₂`, the remaining columns of `Γ`.
    pub fn gamma2(&self) -> Matrix {
        self.gamma.columns(self.p, self.dim() - self.p).into_owned()
    }

    pub fn system(&self) -> StateSpace {
        StateSpace::strictly_proper(self.a_d(), self.b_bar(), self.c_bar()).expect("target dimensions are consistent")
    }
}

pub fn build_target(p: usize, n_q: usize, gamma: Matrix) -> Result<TargetModel> {
    if p == 0 || n_q == 0 {
        return Err(Error::InvalidTarget(format!("p = {p} and n_q = {n_q} must both be at least 1")));
    }
    if gamma.shape() != (p, p * n_q) {
        return Err(Error::dim("build_target", format!("Gamma is {}x{}, expected {p}x{}", gamma.nrows(), gamma.ncols(), p * n_q)));
    }
    if gamma.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidTarget("Gamma has non-finite entries".into()));
    }
    let target = TargetModel { p, n_q, gamma };
    let spec = eigenvalues(&target.a_d())?;
    if !spec.in_closed_lhp(1e-6) {
        return Err(Error::InvalidTarget(format!(
            "A_d has an eigenvalue with real part {:.3e} in the open right half plane",
            spec.abscissa()
        )));
    }
    Ok(target)
}

/// Reference generator `ẋ_r = A_r x_r`, `y_r = C_r x_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Exosystem {
    ar: Matrix,
    cr: Matrix,
    xr0: Matrix,
}

impl Exosystem {
    pub fn new(ar: Matrix, cr: Matrix, xr0: Matrix) -> Result<Self> {
        let r = ar.nrows();
        if ar.ncols() != r || cr.ncols() != r || xr0.shape() != (r, 1) {
            return Err(Error::dim(
                "Exosystem",
                format!("A_r {}x{}, C_r {}x{}, x_r0 {}x{}", r, ar.ncols(), cr.nrows(), cr.ncols(), xr0.nrows(), xr0.ncols()),
            ));
        }
        if !numlin::is_observable(&cr, &ar)? {
            return Err(Error::contract("Exosystem", "(C_r, A_r) is not observable"));
        }
        if !eigenvalues(&ar)?.in_closed_lhp(1e-6) {
            return Err(Error::contract("Exosystem", "A_r has eigenvalues in the open right half plane"));
        }
        Ok(Exosystem { ar, cr, xr0 })
    }

    pub fn ar(&self) -> &Matrix {
        &self.ar
    }

    pub fn cr(&self) -> &Matrix {
        &self.cr
    }

    pub fn xr0(&self) -> &Matrix {
        &self.xr0
    }

    pub fn dim(&self) -> usize {
        self.ar.nrows()
    }

    pub fn p(&self) -> usize {
        self.cr.nrows()
    }

    /// Smallest `k` with `[C_r; C_r A_r; …; C_r A_r^{k−1}]` of full column rank.
    pub fn observability_index(&self) -> Result<usize> {
        let r = self.dim();
        for k in 1..=r.max(1) {
            if rank_decision(&observability_stack(&self.cr, &self.ar, k), 0.0, "exosystem observability index")? == r {
                return Ok(k);
            }
        }
        Err(Error::contract("Exosystem", "(C_r, A_r) is not observable"))
    }
}

fn observability_stack(c: &Matrix, a: &Matrix, k: usize) -> Matrix {
    let mut rows = Vec::with_capacity(k);
    let mut cur = c.clone();
    for _ in 0..k {
        let next = &cur * a;
        rows.push(cur);
        cur = next;
    }
    let refs: Vec<&Matrix> = rows.iter().collect();
    vstack(&refs, a.ncols())
}

/// Exosystem recast as a target model, with the embedding `x̌_r = Θ x_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct RemodeledExosystem {
    pub target: TargetModel,
    pub theta: Matrix,
}

/// Target of uniform rank `n_q = max(n_q0, observability index)` whose output
/// set contains every exosystem output. Extra modes are placed at the origin.
pub fn remodel_exosystem(exo: &Exosystem, n_q0: usize) -> Result<RemodeledExosystem> {
    let p = exo.p();
    let n_q = n_q0.max(exo.observability_index()?).max(1);
    let theta = observability_stack(exo.cr(), exo.ar(), n_q);
    let top = exo.cr() * exo.ar().pow(n_q as u32);
    let pinv = theta
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::Numerical(format!("pseudo-inverse of the observability stack: {e}")))?;
    let gamma0 = &top * pinv;
    let probe = TargetModel { p, n_q, gamma: gamma0.clone() };

    let range = orth(&theta, 0.0, "exosystem embedding range")?;
    let null_rows = orth_complement(&range).transpose();
    let gamma = if null_rows.nrows() == 0 {
        gamma0
    } else {
        let q0 = &null_rows * probe.a_d() * null_rows.transpose();
        let bq = &null_rows * probe.b_bar();
        let zeros = vec![Complex64::new(0.0, 0.0); null_rows.nrows()];
        let f = place_poles(&q0, &bq, &zeros)?;
        gamma0 - f * &null_rows
    };
    let target = build_target(p, n_q, gamma)?;
    let resid = (target.a_d() * &theta - &theta * exo.ar()).amax();
    if resid > 1e-8 * (1.0 + spectral_norm(&theta) * spectral_norm(exo.ar())) {
        return Err(Error::SynthesisBug(format!("exosystem embedding residual {resid:e}")));
    }
    Ok(RemodeledExosystem { target, theta })
}

/// Embedding `Θ` of the exosystem into a given target: `A_d Θ = Θ A_r`,
/// `C̄ Θ = C_r`. Fails when the target cannot reproduce the exosystem.
pub fn embed_exosystem(exo: &Exosystem, target: &TargetModel) -> Result<Matrix> {
    if exo.p() != target.p() {
        return Err(Error::dim("embed_exosystem", format!("exosystem has {} outputs, target {}", exo.p(), target.p())));
    }
    let theta = observability_stack(exo.cr(), exo.ar(), target.n_q());
    let resid = (target.a_d() * &theta - &theta * exo.ar()).amax();
    if resid > 1e-8 * (1.0 + spectral_norm(&theta) * spectral_norm(exo.ar())) {
        return Err(Error::InvalidTarget(format!("target does not contain the exosystem modes (residual {resid:.3e})")));
    }
    Ok(theta)
}

/// `ṗ = G p + H₁ v + H₂ z`, `u = Q p + R₁ v + R₂ z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Precompensator {
    pub g: Matrix,
    pub h1: Matrix,
    pub h2: Matrix,
    pub q: Matrix,
    pub r1: Matrix,
    pub r2: Matrix,
}

impl Precompensator {
    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    /// Pass-through `u = v`, for agents that already are the target.
    pub fn identity(p: usize, n: usize) -> Self {
        Precompensator {
            g: Matrix::zeros(0, 0),
            h1: Matrix::zeros(0, p),
            h2: Matrix::zeros(0, n),
            q: Matrix::zeros(p, 0),
            r1: Matrix::identity(p, p),
            r2: Matrix::zeros(p, n),
        }
    }
}

/// Agent and precompensator in cascade. The state is `(x, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompensatedAgent {
    dyn_: StateSpace,
    e: Matrix,
    coords: Matrix,
    target_dim: usize,
    agent_dim: usize,
}

impl CompensatedAgent {
    /// Cascade from `v` to `y`.
    pub fn dynamics(&self) -> &StateSpace {
        &self.dyn_
    }

    /// Disturbance input matrix of the cascade state.
    pub fn e(&self) -> &Matrix {
        &self.e
    }

    pub fn dim(&self) -> usize {
        self.dyn_.n_states()
    }

    /// States of the agent itself; the precompensator states follow.
    pub fn agent_dim(&self) -> usize {
        self.agent_dim
    }

    /// Invertible change of coordinates `(x, p) ↦ (x̄, η)`: `x̄` follows the
    /// target dynamics, `η` is the residual internal state.
    pub fn coords(&self) -> &Matrix {
        &self.coords
    }

    /// Rows of `coords` producing the target state `x̄`.
    pub fn target_map(&self) -> Matrix {
        self.coords.rows(0, self.target_dim).into_owned()
    }

    /// `Ē`: disturbance input in target coordinates.
    pub fn e_bar(&self) -> Matrix {
        self.target_map() * &self.e
    }

    /// `(S, E₀)` dynamics of the residual state `η`, output-free.
    pub fn internal_stable_part(&self) -> Result<StateSpace> {
        let ni = self.dim() - self.target_dim;
        let tinv = inverse(&self.coords)?;
        let a = &self.coords * self.dyn_.a() * tinv;
        let e = &self.coords * &self.e;
        let s = a.view((self.target_dim, self.target_dim), (ni, ni)).into_owned();
        let e0 = e.rows(self.target_dim, ni).into_owned();
        StateSpace::new(s, e0, Matrix::zeros(0, ni), Matrix::zeros(0, self.e.ncols()))
    }
}

/// Wires `pre` in front of `agent`. `coords` is the `(x, p) ↦ (x̄, η)` map,
/// whose first `target_dim` rows give `x̄`.
pub fn cascade(agent: &AgentModel, pre: &Precompensator, coords: Matrix, target_dim: usize) -> Result<CompensatedAgent> {
    let n = agent.n();
    let np = pre.dim();
    let (a, b, c) = (agent.a(), agent.b(), agent.c());
    let cm = agent.cm();
    let top = hstack(&[&(a + b * &pre.r2 * cm), &(b * &pre.q)], n);
    let bottom = hstack(&[&(&pre.h2 * cm), &pre.g], np);
    let ac = vstack(&[&top, &bottom], n + np);
    let bc = vstack(&[&(b * &pre.r1), &pre.h1], pre.r1.ncols());
    let cc = hstack(&[c, &Matrix::zeros(c.nrows(), np)], c.nrows());
    let ec = vstack(&[agent.e(), &Matrix::zeros(np, agent.w())], agent.w());
    if coords.shape() != (n + np, n + np) || target_dim > n + np {
        return Err(Error::dim("cascade", "coordinate map does not match the cascade state"));
    }
    Ok(CompensatedAgent { dyn_: StateSpace::strictly_proper(ac, bc, cc)?, e: ec, coords, target_dim, agent_dim: n })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomogReport {
    /// Largest entry of `|M_k(cascade) − M_k(target)|` over the horizon.
    pub max_markov_deviation: f64,
    pub horizon: usize,
    pub internal_hurwitz: bool,
    pub passed: bool,
}

pub const MARKOV_TOL: f64 = 1e-8;

pub fn verify_homogenization(comp: &CompensatedAgent, target: &TargetModel) -> HomogReport {
    let horizon = 2 * comp.dim() + 2;
    let got = markov_params(comp.dynamics(), horizon);
    let want = markov_params(&target.system(), horizon);
    let max_markov_deviation = if got[0].shape() != want[0].shape() {
        f64::INFINITY
    } else {
        got.iter().zip(&want).map(|(g, w)| (g - w).amax()).fold(0.0, f64::max)
    };
    let internal_hurwitz = comp
        .internal_stable_part()
        .and_then(|s| is_hurwitz(s.a(), 0.0))
        .unwrap_or(false);
    let passed = max_markov_deviation <= MARKOV_TOL && internal_hurwitz;
    HomogReport { max_markov_deviation, horizon, internal_hurwitz, passed }
}

fn unit(m: usize, idx: &[usize]) -> Matrix {
    Matrix::from_fn(m, 1, |i, _| if idx.contains(&i) { 1.0 } else { 0.0 })
}

/// Input-mixing candidates: `p`-subsets of the pool (unit columns first, then
/// pairwise sums), in lexicographic order.
fn mixing_candidates(m: usize, p: usize) -> Vec<Matrix> {
    let mut pool: Vec<Matrix> = (0..m).map(|j| unit(m, &[j])).collect();
    for i in 0..m {
        for j in (i + 1)..m {
            pool.push(unit(m, &[i, j]));
        }
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..p).collect();
    if p > pool.len() {
        return out;
    }
    loop {
        let cols: Vec<&Matrix> = idx.iter().map(|&k| &pool[k]).collect();
        out.push(hstack(&cols, m));
        if out.len() >= 4096 {
            break;
        }
        // advance the combination
        let mut k = p;
        while k > 0 && idx[k - 1] == pool.len() - p + k - 1 {
            k -= 1;
        }
        if k == 0 {
            break;
        }
        idx[k - 1] += 1;
        for l in k..p {
            idx[l] = idx[l - 1] + 1;
        }
    }
    out
}

/// Standard basis columns completing `mix` to an invertible `m × m` matrix.
fn complement_inputs(mix: &Matrix) -> Option<Matrix> {
    let m = mix.nrows();
    let mut cols: Vec<Matrix> = (0..mix.ncols()).map(|j| mix.columns(j, 1).into_owned()).collect();
    let mut chosen = Vec::new();
    for j in 0..m {
        if cols.len() == m {
            break;
        }
        let e = unit(m, &[j]);
        let mut trial = cols.clone();
        trial.push(e.clone());
        let refs: Vec<&Matrix> = trial.iter().collect();
        if rank_decision(&hstack(&refs, m), 0.0, "input complement").ok()? == trial.len() {
            cols = trial;
            chosen.push(e);
        }
    }
    if cols.len() != m {
        return None;
    }
    let refs: Vec<&Matrix> = chosen.iter().collect();
    Some(hstack(&refs, m))
}

fn is_zero_row(row: &Matrix, scale: f64) -> bool {
    row.amax() <= 1e-9 * scale.max(1.0)
}

/// One accepted squaring-down candidate and everything derived from it.
struct Candidate {
    mix: Matrix,
    comp_mix: Matrix,
    rel_deg: Vec<usize>,
    d_star_inv: Matrix,
    /// rows `c_j A^{k−1}` for `k = 1..=r_j`, grouped by output
    chain_rows: Vec<Vec<Matrix>>,
    z: Matrix,
    f_eta: Matrix,
    lambda: Matrix,
    lambda_c: Matrix,
}

fn try_candidate(agent: &AgentModel, mix: &Matrix, n_q: usize) -> std::result::Result<Candidate, String> {
    let (a, b, c) = (agent.a(), agent.b(), agent.c());
    let n = agent.n();
    let p = agent.p();
    let bm = b * mix;
    let comp_mix = complement_inputs(mix).ok_or("no input complement")?;
    let bc = b * &comp_mix;
    let scale_a = spectral_norm(a).max(1.0);
    let scale = spectral_norm(b).max(1.0) * spectral_norm(c).max(1.0);

    let mut rel_deg = Vec::with_capacity(p);
    let mut chain_rows = Vec::with_capacity(p);
    let mut d_rows = Vec::with_capacity(p);
    let mut lambda_rows = Vec::with_capacity(p);
    let mut lambda_c_rows = Vec::with_capacity(p);
    for j in 0..p {
        let mut row = c.rows(j, 1).into_owned();
        let mut rows = Vec::new();
        let mut found = None;
        for k in 1..=n {
            let lvl = scale * scale_a.powi(k as i32 - 1);
            rows.push(row.clone());
            let hit = &row * &bm;
            if !is_zero_row(&hit, lvl) {
                found = Some((k, hit));
                break;
            }
            if bc.ncols() > 0 && !is_zero_row(&(&row * &bc), lvl) {
                return Err(format!("complement inputs reach output {} before the chosen input", j + 1));
            }
            row = &row * a;
        }
        let (r, hit) = found.ok_or_else(|| format!("output {} not reached by the chosen input", j + 1))?;
        if r > n_q {
            return Err(format!("relative degree {r} exceeds n_q = {n_q}"));
        }
        let top = rows.last().expect("at least one chain row").clone();
        lambda_rows.push(&top * a);
        lambda_c_rows.push(&top * &bc);
        d_rows.push(hit);
        rel_deg.push(r);
        chain_rows.push(rows);
    }
    let d_refs: Vec<&Matrix> = d_rows.iter().collect();
    let d_star = vstack(&d_refs, p);
    if rank_decision(&d_star, 0.0, "decoupling matrix").map_err(|e| e.to_string())? < p {
        return Err("decoupling matrix is singular".into());
    }
    let d_star_inv = inverse(&d_star).map_err(|e| e.to_string())?;

    let lower: Vec<&Matrix> = chain_rows.iter().flat_map(|rows| rows[..rows.len() - 1].iter()).collect();
    let all: Vec<&Matrix> = chain_rows.iter().flat_map(|rows| rows.iter()).collect();
    let xi = vstack(&all, n);
    let rho = xi.nrows();
    if rank_decision(&xi, 0.0, "output chain rows").map_err(|e| e.to_string())? < rho {
        return Err("output chains are linearly dependent".into());
    }
    // rows annihilating the chosen input directions, minus the lower chain rows
    let left_null = orth_complement(&orth(&bm, 0.0, "mixed input range").map_err(|e| e.to_string())?);
    let mut proj = left_null.transpose();
    if !lower.is_empty() {
        let lo = orth(&vstack(&lower, n).transpose(), 0.0, "lower chain rows").map_err(|e| e.to_string())?;
        proj = &proj * (Matrix::identity(n, n) - &lo * lo.transpose());
    }
    let z = if n > rho {
        orth(&proj.transpose(), 0.0, "internal coordinates").map_err(|e| e.to_string())?.transpose()
    } else {
        Matrix::zeros(0, n)
    };
    if z.nrows() != n - rho {
        return Err("internal coordinates have the wrong dimension".into());
    }
    let t = inverse(&vstack(&[&xi, &z], n)).map_err(|e| e.to_string())?;
    let t_eta = t.columns(rho, n - rho).into_owned();
    let a_eta = &z * a * &t_eta;
    let b_eta = &z * &bc;
    let f_eta = if is_hurwitz(&a_eta, 0.0).map_err(|e| e.to_string())? {
        Matrix::zeros(bc.ncols(), n - rho)
    } else if bc.ncols() == 0 {
        return Err("unstable zero dynamics and no spare input".into());
    } else {
        let poles: Vec<Complex64> = (1..=n - rho).map(|k| Complex64::new(-(k as f64), 0.0)).collect();
        stabilize(&a_eta, &b_eta, &poles).map_err(|e| e.to_string())?
    };

    let l_refs: Vec<&Matrix> = lambda_rows.iter().collect();
    let lc_refs: Vec<&Matrix> = lambda_c_rows.iter().collect();
    Ok(Candidate {
        mix: mix.clone(),
        comp_mix,
        rel_deg,
        d_star_inv,
        chain_rows,
        z,
        f_eta,
        lambda: vstack(&l_refs, n),
        lambda_c: vstack(&lc_refs, bc.ncols()),
    })
}

/// Precompensator making `agent` input-output identical to `target`.
pub fn design_precompensator(agent: &AgentModel, target: &TargetModel) -> Result<(Precompensator, CompensatedAgent)> {
    let n = agent.n();
    let m = agent.m();
    let p = target.p();
    let n_q = target.n_q();
    if agent.p() != p {
        return Err(Error::dim("design_precompensator", format!("agent has {} outputs, target has {p}", agent.p())));
    }
    if agent.q() != n || rank_decision(agent.cm(), 0.0, "local measurement rank")? < n {
        return Err(Error::Unsupported("precompensator synthesis needs full-state local measurement".into()));
    }
    if m < p {
        return Err(Error::Unsupported(format!("agent has {m} inputs for {p} outputs")));
    }
    let cm_inv = inverse(agent.cm())?;

    let mut reasons = Vec::new();
    let mut accepted = None;
    for mix in mixing_candidates(m, p) {
        match try_candidate(agent, &mix, n_q) {
            Ok(c) => {
                accepted = Some(c);
                break;
            }
            Err(why) => reasons.push(why),
        }
    }
    let cand = accepted.ok_or_else(|| {
        Error::Unsupported(format!(
            "no squaring-down candidate works ({})",
            reasons.first().cloned().unwrap_or_else(|| "no candidates".into())
        ))
    })?;
    log::debug!("precompensator: relative degrees {:?}, mixing {:?}", cand.rel_deg, cand.mix.as_slice());

    // integrator counts and offsets inside p
    let extra: Vec<usize> = cand.rel_deg.iter().map(|r| n_q - r).collect();
    let np: usize = extra.iter().sum();
    let offset: Vec<usize> = extra.iter().scan(0, |acc, d| {
        let o = *acc;
        *acc += d;
        Some(o)
    }).collect();

    // x̄ = Sx x + Sp p
    let nt = target.dim();
    let mut sx = Matrix::zeros(nt, n);
    let mut sp = Matrix::zeros(nt, np);
    for j in 0..p {
        for k in 0..n_q {
            let row = k * p + j;
            if k < cand.rel_deg[j] {
                sx.set_row(row, &cand.chain_rows[j][k].row(0));
            } else {
                sp[(row, offset[j] + k - cand.rel_deg[j])] = 1.0;
            }
        }
    }

    // ū_new = Jp p + Jv v + Jx x ;  ṗ = G p + H₁ v + Hx x
    let gamma = target.gamma();
    let mut jp = Matrix::zeros(p, np);
    let mut jv = Matrix::zeros(p, p);
    let mut jx = Matrix::zeros(p, n);
    let mut g = Matrix::zeros(np, np);
    let mut h1 = Matrix::zeros(np, p);
    let mut hx = Matrix::zeros(np, n);
    for j in 0..p {
        let gj = gamma.rows(j, 1);
        if extra[j] == 0 {
            jv[(j, j)] = 1.0;
            jx.set_row(j, &(gj * &sx).row(0));
            jp.set_row(j, &(gj * &sp).row(0));
        } else {
            jp[(j, offset[j])] = 1.0;
            for l in 0..extra[j] - 1 {
                g[(offset[j] + l, offset[j] + l + 1)] = 1.0;
            }
            let last = offset[j] + extra[j] - 1;
            h1[(last, j)] = 1.0;
            hx.set_row(last, &(gj * &sx).row(0));
            let gp = gj * &sp;
            for col in 0..np {
                g[(last, col)] += gp[(0, col)];
            }
        }
    }

    let lambda_tot = &cand.lambda - &cand.lambda_c * &cand.f_eta * &cand.z;
    let md = &cand.mix * &cand.d_star_inv;
    let rx = &md * (jx - lambda_tot) - &cand.comp_mix * &cand.f_eta * &cand.z;
    let pre = Precompensator { g, h1, h2: hx * &cm_inv, q: &md * jp, r1: &md * jv, r2: rx * &cm_inv };

    let top = hstack(&[&sx, &sp], nt);
    let bottom = hstack(&[&cand.z, &Matrix::zeros(cand.z.nrows(), np)], cand.z.nrows());
    let coords = vstack(&[&top, &bottom], n + np);
    if coords.nrows() != n + np {
        return Err(Error::SynthesisBug("coordinate map is not square".into()));
    }
    let comp = cascade(agent, &pre, coords, nt)?;
    let report = verify_homogenization(&comp, target);
    if !report.passed {
        return Err(Error::SynthesisBug(format!(
            "homogenization check failed: Markov deviation {:.3e}, internal dynamics Hurwitz = {}",
            report.max_markov_deviation, report.internal_hurwitz
        )));
    }
    Ok((pre, comp))
}

/// Solves `x̄ = target_map · s` for a cascade state with zero internal part;
/// used to start cascades on a prescribed target trajectory.
pub fn cascade_state_for(comp: &CompensatedAgent, xbar: &Matrix) -> Result<Matrix> {
    let n = comp.dim();
    let mut rhs = Matrix::zeros(n, 1);
    rhs.view_mut((0, 0), (xbar.nrows(), 1)).copy_from(xbar);
    solve(comp.coords(), &rhs)
}

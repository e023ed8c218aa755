//! State-space systems, Markov parameters and the structural checks run on
//! every agent before synthesis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numlin::{self, block_diag, hstack, rank_decision, vstack, Matrix};

/// `ẋ = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    d: Matrix,
}

impl StateSpace {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, d: Matrix) -> Result<Self> {
        let n = a.nrows();
        let ctx = "StateSpace";
        if a.ncols() != n {
            return Err(Error::dim(ctx, format!("A is {}x{}", a.nrows(), a.ncols())));
        }
        if b.nrows() != n {
            return Err(Error::dim(ctx, format!("B has {} rows, A is {n}x{n}", b.nrows())));
        }
        if c.ncols() != n {
            return Err(Error::dim(ctx, format!("C has {} columns, A is {n}x{n}", c.ncols())));
        }
        if d.shape() != (c.nrows(), b.ncols()) {
            return Err(Error::dim(
                ctx,
                format!("D is {}x{}, expected {}x{}", d.nrows(), d.ncols(), c.nrows(), b.ncols()),
            ));
        }
        for (name, m) in [("A", &a), ("B", &b), ("C", &c), ("D", &d)] {
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::contract(ctx, format!("{name} has non-finite entries")));
            }
        }
        Ok(StateSpace { a, b, c, d })
    }

    /// Strictly proper system (`D = 0`).
    pub fn strictly_proper(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        let d = Matrix::zeros(c.nrows(), b.ncols());
        Self::new(a, b, c, d)
    }

    /// Memoryless gain `y = D u`.
    pub fn gain(d: Matrix) -> Self {
        let (p, m) = d.shape();
        StateSpace { a: Matrix::zeros(0, 0), b: Matrix::zeros(0, m), c: Matrix::zeros(p, 0), d }
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    pub fn d(&self) -> &Matrix {
        &self.d
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }
}

/// `g1` followed by `g2`: the output of `g1` drives `g2`. State is `(x1, x2)`.
pub fn series(g1: &StateSpace, g2: &StateSpace) -> Result<StateSpace> {
    if g1.n_outputs() != g2.n_inputs() {
        return Err(Error::dim(
            "series",
            format!("first system has {} outputs, second has {} inputs", g1.n_outputs(), g2.n_inputs()),
        ));
    }
    let (n1, n2) = (g1.n_states(), g2.n_states());
    let mut a = Matrix::zeros(n1 + n2, n1 + n2);
    a.view_mut((0, 0), (n1, n1)).copy_from(&g1.a);
    a.view_mut((n1, 0), (n2, n1)).copy_from(&(&g2.b * &g1.c));
    a.view_mut((n1, n1), (n2, n2)).copy_from(&g2.a);
    let b = vstack(&[&g1.b, &(&g2.b * &g1.d)], g1.n_inputs());
    let c = hstack(&[&(&g2.d * &g1.c), &g2.c], g2.n_outputs());
    let d = &g2.d * &g1.d;
    StateSpace::new(a, b, c, d)
}

/// Parallel stacking with separate inputs and outputs.
pub fn append(g1: &StateSpace, g2: &StateSpace) -> StateSpace {
    StateSpace {
        a: block_diag(&[&g1.a, &g2.a]),
        b: block_diag(&[&g1.b, &g2.b]),
        c: block_diag(&[&g1.c, &g2.c]),
        d: block_diag(&[&g1.d, &g2.d]),
    }
}

/// `[D, CB, CAB, …]`, `k` terms in total.
pub fn markov_params(sys: &StateSpace, k: usize) -> Vec<Matrix> {
    let mut out = Vec::with_capacity(k);
    if k == 0 {
        return out;
    }
    out.push(sys.d.clone());
    let mut ak_b = sys.b.clone();
    for _ in 1..k {
        out.push(&sys.c * &ak_b);
        ak_b = &sys.a * ak_b;
    }
    out
}

/// One heterogeneous agent: `ẋ = A x + B u + E ω`, `y = C x`, `z = Cᵐ x`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentModel {
    dyn_: StateSpace,
    e: Matrix,
    cm: Matrix,
}

impl AgentModel {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, e: Matrix, cm: Matrix) -> Result<Self> {
        let dyn_ = StateSpace::strictly_proper(a, b, c)?;
        let n = dyn_.n_states();
        if e.nrows() != n {
            return Err(Error::dim("AgentModel", format!("E has {} rows, expected {n}", e.nrows())));
        }
        if cm.ncols() != n {
            return Err(Error::dim("AgentModel", format!("Cm has {} columns, expected {n}", cm.ncols())));
        }
        Ok(AgentModel { dyn_, e, cm })
    }

    pub fn dynamics(&self) -> &StateSpace {
        &self.dyn_
    }

    pub fn a(&self) -> &Matrix {
        self.dyn_.a()
    }

    pub fn b(&self) -> &Matrix {
        self.dyn_.b()
    }

    pub fn c(&self) -> &Matrix {
        self.dyn_.c()
    }

    pub fn e(&self) -> &Matrix {
        &self.e
    }

    pub fn cm(&self) -> &Matrix {
        &self.cm
    }

    pub fn n(&self) -> usize {
        self.dyn_.n_states()
    }

    pub fn m(&self) -> usize {
        self.dyn_.n_inputs()
    }

    pub fn p(&self) -> usize {
        self.dyn_.n_outputs()
    }

    pub fn w(&self) -> usize {
        self.e.ncols()
    }

    pub fn q(&self) -> usize {
        self.cm.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralReport {
    pub stabilizable: bool,
    pub detectable: bool,
    /// Detectability of the local measurement pair `(Cᵐ, A)`.
    pub measurement_detectable: bool,
    pub right_invertible: bool,
    pub infinite_zero_orders: Vec<usize>,
    pub n_q0_contribution: usize,
}

fn toeplitz(markov: &[Matrix], blocks: usize, p: usize, m: usize) -> Matrix {
    let mut t = Matrix::zeros(blocks * p, blocks * m);
    for i in 0..blocks {
        for j in 0..=i {
            t.view_mut((i * p, j * m), (p, m)).copy_from(&markov[i - j]);
        }
    }
    t
}

/// Rank increments `σ_k = rank T_k − rank T_{k−1}` of the block-Toeplitz
/// matrices of Markov parameters, for `k = 1..=n+2`.
fn toeplitz_increments(sys: &StateSpace) -> Result<Vec<usize>> {
    let (p, m, n) = (sys.n_outputs(), sys.n_inputs(), sys.n_states());
    let kmax = n + 2;
    let markov = markov_params(sys, kmax);
    let mut prev = 0;
    let mut inc = Vec::with_capacity(kmax);
    for k in 1..=kmax {
        let r = rank_decision(&toeplitz(&markov, k, p, m), 0.0, "infinite-zero structure (Toeplitz rank)")?;
        inc.push(r.saturating_sub(prev));
        prev = r;
    }
    Ok(inc)
}

/// Infinite-zero orders (with multiplicity, ascending) and right-invertibility.
pub fn infinite_zero_structure(sys: &StateSpace) -> Result<(Vec<usize>, bool)> {
    let p = sys.n_outputs();
    let inc = toeplitz_increments(sys)?;
    let mut orders = Vec::new();
    let mut prev = 0;
    for (j, &s) in inc.iter().enumerate() {
        for _ in prev..s {
            orders.push(j);
        }
        prev = prev.max(s);
    }
    let right_invertible = inc.last().copied().unwrap_or(0) == p;
    Ok((orders, right_invertible))
}

pub fn structural_analysis(agent: &AgentModel) -> Result<StructuralReport> {
    let stabilizable = numlin::is_stabilizable(agent.a(), agent.b())?;
    let detectable = numlin::is_detectable(agent.c(), agent.a())?;
    let measurement_detectable = numlin::is_detectable(agent.cm(), agent.a())?;
    let (infinite_zero_orders, right_invertible) = infinite_zero_structure(agent.dynamics())?;
    let n_q0_contribution = infinite_zero_orders.iter().copied().max().unwrap_or(0);
    Ok(StructuralReport {
        stabilizable,
        detectable,
        measurement_detectable,
        right_invertible,
        infinite_zero_orders,
        n_q0_contribution,
    })
}

/// Rejects a report that fails the standing assumptions on agent models.
/// `agent` is the 1-based index used in messages.
pub fn require_assumptions(agent: usize, report: &StructuralReport) -> Result<()> {
    let failed = if !report.stabilizable {
        Some("stabilizability of (A, B)")
    } else if !report.detectable {
        Some("detectability of (C, A)")
    } else if !report.right_invertible {
        Some("right-invertibility of (C, A, B)")
    } else {
        None
    };
    match failed {
        Some(what) => Err(Error::Assumption { agent, assumption: what.to_string() }),
        None => Ok(()),
    }
}

/// Largest infinite-zero order over the agent set, at least 1.
pub fn n_q0(agents: &[AgentModel]) -> Result<usize> {
    let mut out = 1;
    for (i, agent) in agents.iter().enumerate() {
        let report = structural_analysis(agent)?;
        require_assumptions(i + 1, &report)?;
        out = out.max(report.n_q0_contribution);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numlin::from_rows;

    fn chain3() -> AgentModel {
        AgentModel::new(
            from_rows(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[0.0, 0.0, 0.0]]),
            from_rows(&[&[0.0], &[0.0], &[1.0]]),
            from_rows(&[&[1.0, 0.0, 0.0]]),
            from_rows(&[&[1.0], &[1.0], &[0.0]]),
            Matrix::identity(3, 3),
        )
        .unwrap()
    }

    #[test]
    fn markov_of_triple_chain() {
        let mk = markov_params(chain3().dynamics(), 6);
        let vals: Vec<f64> = mk.iter().map(|m| m[(0, 0)]).collect();
        assert_eq!(vals, vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn static_identity_markov() {
        let mk = markov_params(&StateSpace::gain(Matrix::identity(2, 2)), 3);
        assert_eq!(mk[0], Matrix::identity(2, 2));
        assert_eq!(mk[1], Matrix::zeros(2, 2));
    }

    #[test]
    fn double_integrator_by_series() {
        let int = StateSpace::strictly_proper(from_rows(&[&[0.0]]), from_rows(&[&[1.0]]), from_rows(&[&[1.0]])).unwrap();
        let s = series(&int, &int).unwrap();
        let vals: Vec<f64> = markov_params(&s, 5).iter().map(|m| m[(0, 0)]).collect();
        assert_eq!(vals, vec![0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn series_with_unit_gain_is_identity() {
        let g = chain3().dynamics().clone();
        let s = series(&StateSpace::gain(Matrix::identity(1, 1)), &g).unwrap();
        assert_eq!(markov_params(&s, 8), markov_params(&g, 8));
    }

    #[test]
    fn series_dimension_mismatch() {
        let g = chain3().dynamics().clone();
        assert!(matches!(series(&g, &StateSpace::gain(Matrix::identity(2, 2))), Err(Error::Dimension { .. })));
    }

    #[test]
    fn triple_chain_structure() {
        let r = structural_analysis(&chain3()).unwrap();
        assert!(r.stabilizable && r.detectable && r.right_invertible);
        assert_eq!(r.infinite_zero_orders, vec![3]);
        assert_eq!(r.n_q0_contribution, 3);
    }

    #[test]
    fn unstable_chain_agent_order_three() {
        let agent = AgentModel::new(
            from_rows(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[1.0, 1.0, 0.0]]),
            from_rows(&[&[0.0], &[0.0], &[1.0]]),
            from_rows(&[&[1.0, 0.0, 0.0]]),
            from_rows(&[&[1.0], &[0.0], &[0.0]]),
            Matrix::identity(3, 3),
        )
        .unwrap();
        let r = structural_analysis(&agent).unwrap();
        assert!(r.right_invertible);
        assert_eq!(r.infinite_zero_orders, vec![3]);
    }

    #[test]
    fn zero_input_matrix_is_not_right_invertible() {
        let agent = AgentModel::new(
            from_rows(&[&[-1.0]]),
            from_rows(&[&[0.0]]),
            from_rows(&[&[1.0]]),
            from_rows(&[&[0.0]]),
            Matrix::identity(1, 1),
        )
        .unwrap();
        let r = structural_analysis(&agent).unwrap();
        assert!(!r.right_invertible);
        assert!(matches!(require_assumptions(1, &r), Err(Error::Assumption { agent: 1, .. })));
    }

    #[test]
    fn feedthrough_counts_as_order_zero_and_floor_is_one() {
        let sys = StateSpace::gain(from_rows(&[&[2.0]]));
        let (orders, ri) = infinite_zero_structure(&sys).unwrap();
        assert_eq!(orders, vec![0]);
        assert!(ri);
        // the floor applies in n_q0
        let agent = AgentModel::new(
            from_rows(&[&[-1.0]]),
            from_rows(&[&[1.0]]),
            from_rows(&[&[1.0]]),
            from_rows(&[&[0.0]]),
            Matrix::identity(1, 1),
        )
        .unwrap();
        assert_eq!(n_q0(&[agent]).unwrap(), 1);
    }

    #[test]
    fn nq0_is_the_maximum() {
        let two = AgentModel::new(
            from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]),
            from_rows(&[&[0.0], &[1.0]]),
            from_rows(&[&[1.0, 0.0]]),
            from_rows(&[&[0.0], &[0.0]]),
            Matrix::identity(2, 2),
        )
        .unwrap();
        assert_eq!(n_q0(&[two, chain3()]).unwrap(), 3);
    }

    #[test]
    fn agent_dimension_checks() {
        let err = AgentModel::new(
            Matrix::zeros(2, 2),
            Matrix::zeros(3, 1),
            Matrix::zeros(1, 2),
            Matrix::zeros(2, 1),
            Matrix::identity(2, 2),
        );
        assert!(matches!(err, Err(Error::Dimension { .. })));
    }
}

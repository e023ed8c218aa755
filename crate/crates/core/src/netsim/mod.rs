//! Networked closed loop: assembly, stability and H∞ analysis, simulation
//! and ε-sweeps.
//!
//! The physical state is laid out as
//! `[cascade₁ … cascade_N | (x̂₁, χ₁) … (x̂_N, χ_N) | x_r]`.
//! The closed loop always carries a neutral part that does not decay: the
//! common target trajectory (output synchronization) or the exosystem
//! (regulated mode). Analysis therefore works in error coordinates where the
//! state splits into
//!
//! 1. the error subsystem (target-state differences or deviations from the
//!    reference, plus all protocol states), which drives the error outputs;
//! 2. the neutral block (`x̄_N`, or `x_r`);
//! 3. the residual internal states `η` of each cascade.
//!
//! The transformed state matrix is block lower triangular in that order, so
//! stability of the synchronization errors is stability of blocks 1 and 3.

mod sim;
mod sweep;

pub use sim::{simulate, Disturbance, DisturbanceSpec, SimResult};
pub use sweep::{epsilon_sweep, estimate_eps_star, SweepRow};

use crate::error::{Error, Result};
use crate::graph::{expanded_laplacian, has_spanning_tree, laplacian, root_set_covers, CommGraph, RootSet};
use crate::homog::{CompensatedAgent, Exosystem};
use crate::lti::StateSpace;
use crate::numlin::{eigenvalues, hinf_norm, inverse, Matrix};
use crate::protocol::{assemble_protocol_block, Mode, ProtocolParams};

/// Exosystem together with its embedding `Θ` into the target state space.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub exo: Exosystem,
    pub theta: Matrix,
}

/// Everything except `ε`: compensated agents, shared gains, graph and mode.
#[derive(Debug, Clone)]
pub struct Network {
    agents: Vec<CompensatedAgent>,
    params: ProtocolParams,
    graph: CommGraph,
    mode: Mode,
    root: Option<RootSet>,
    reference: Option<Reference>,
}

impl Network {
    /// Checks graph membership and dimensions. Output synchronization needs a
    /// directed spanning tree; regulated mode needs a root set reaching every
    /// node and an exosystem.
    pub fn new(
        agents: Vec<CompensatedAgent>,
        params: ProtocolParams,
        graph: CommGraph,
        mode: Mode,
        root: Option<RootSet>,
        reference: Option<Reference>,
    ) -> Result<Self> {
        let n = agents.len();
        if n == 0 {
            return Err(Error::contract("Network", "no agents"));
        }
        if graph.n_agents() != n {
            return Err(Error::dim("Network", format!("graph has {} nodes for {n} agents", graph.n_agents())));
        }
        let target = params.target();
        for (i, a) in agents.iter().enumerate() {
            if a.target_map().nrows() != target.dim() || a.dynamics().n_outputs() != target.p() {
                return Err(Error::dim("Network", format!("agent {} is not homogenized to the protocol target", i + 1)));
            }
        }
        match mode {
            Mode::OutputSync => {
                if !has_spanning_tree(&graph) {
                    return Err(Error::NoSpanningTree);
                }
            }
            Mode::Regulated => {
                let root = root.as_ref().ok_or_else(|| Error::contract("Network", "regulated mode needs a root set"))?;
                let reference =
                    reference.as_ref().ok_or_else(|| Error::contract("Network", "regulated mode needs an exosystem"))?;
                if !root_set_covers(&graph, root)? {
                    return Err(Error::RootSetNotCovering { root: root.members().iter().map(|m| m + 1).collect() });
                }
                if reference.theta.shape() != (target.dim(), reference.exo.dim()) || reference.exo.p() != target.p() {
                    return Err(Error::dim("Network", "exosystem embedding does not match the target"));
                }
            }
        }
        Ok(Network { agents, params, graph, mode, root, reference })
    }

    pub fn agents(&self) -> &[CompensatedAgent] {
        &self.agents
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn graph(&self) -> &CommGraph {
        &self.graph
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn root(&self) -> Option<&RootSet> {
        self.root.as_ref()
    }

    pub fn reference(&self) -> Option<&Reference> {
        self.reference.as_ref()
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    /// Same network with the gains replaced (no other redesign).
    pub fn with_params(&self, params: ProtocolParams) -> Result<Self> {
        Network::new(self.agents.clone(), params, self.graph.clone(), self.mode, self.root.clone(), self.reference.clone())
    }

    /// Same agents and gains on another graph of the same size.
    pub fn with_graph(&self, graph: CommGraph) -> Result<Self> {
        Network::new(self.agents.clone(), self.params.clone(), graph, self.mode, self.root.clone(), self.reference.clone())
    }
}

/// The assembled closed loop at one value of `ε`.
#[derive(Debug, Clone)]
pub struct ClosedLoopSystem {
    pub mode: Mode,
    pub eps: f64,
    /// Physical realization: input is the stacked disturbance, output the
    /// stacked error signals.
    pub sys: StateSpace,
    /// Stacked agent outputs `y₁ … y_N` as a read-out of the physical state.
    pub c_y: Matrix,
    /// Reference output `y_r` (regulated mode only).
    pub c_ref: Option<Matrix>,
    /// Offsets of each cascade, of each protocol block, and of the exosystem.
    pub agent_offsets: Vec<usize>,
    pub protocol_offsets: Vec<usize>,
    pub exo_offset: Option<usize>,
    /// Disturbance channels per agent.
    pub dist_widths: Vec<usize>,
    /// Dimension of each agent's own state inside its cascade.
    pub agent_dims: Vec<usize>,
    pub xr0: Option<Matrix>,
    /// Analysis coordinates `W`; rows are ordered error, neutral, internal.
    pub w: Matrix,
    pub n_error: usize,
    pub n_neutral: usize,
}

impl ClosedLoopSystem {
    pub fn n_states(&self) -> usize {
        self.sys.n_states()
    }

    pub fn n_agents(&self) -> usize {
        self.agent_offsets.len()
    }

    fn transformed(&self) -> Result<(Matrix, Matrix, Matrix)> {
        let winv = inverse(&self.w)?;
        let a = &self.w * self.sys.a() * &winv;
        let b = &self.w * self.sys.b();
        let c = self.sys.c() * &winv;
        Ok((a, b, c))
    }

    /// Realization of the map from disturbances to error outputs restricted
    /// to the error coordinates.
    pub fn error_system(&self) -> Result<StateSpace> {
        let (a, b, c) = self.transformed()?;
        let ne = self.n_error;
        StateSpace::new(
            a.view((0, 0), (ne, ne)).into_owned(),
            b.rows(0, ne).into_owned(),
            c.columns(0, ne).into_owned(),
            self.sys.d().clone(),
        )
    }

    /// Residual coupling from the neutral and internal coordinates into the
    /// error subsystem; zero up to rounding when the wiring is consistent.
    pub fn decoupling_residual(&self) -> Result<f64> {
        let (a, _, c) = self.transformed()?;
        let n = self.n_states();
        let ne = self.n_error;
        let upper = a.view((0, ne), (ne, n - ne)).amax();
        let neutral_rows = a.view((ne, ne + self.n_neutral), (self.n_neutral, n - ne - self.n_neutral)).amax();
        let out = c.columns(ne, n - ne).amax();
        Ok(upper.max(neutral_rows).max(out) / a.amax().max(1.0))
    }

    /// Largest real part over the error subsystem and the internal blocks,
    /// i.e. every mode except the neutral one.
    pub fn spectral_abscissa(&self) -> Result<f64> {
        let (a, _, _) = self.transformed()?;
        let n = self.n_states();
        let ne = self.n_error;
        let skip = ne + self.n_neutral;
        let err = eigenvalues(&a.view((0, 0), (ne, ne)).into_owned())?.abscissa();
        let internal = eigenvalues(&a.view((skip, skip), (n - skip, n - skip)).into_owned())?.abscissa();
        Ok(err.max(internal))
    }

    pub fn is_stable(&self) -> Result<bool> {
        Ok(self.spectral_abscissa()? < -crate::numlin::HURWITZ_TOL)
    }
}

/// Wires agents, protocol blocks and (in regulated mode) the exosystem.
pub fn assemble_closed_loop(net: &Network, eps: f64) -> Result<ClosedLoopSystem> {
    let nag = net.n_agents();
    let target = net.params.target();
    let (p, nt) = (target.p(), target.dim());
    let lap = laplacian(&net.graph);
    let lap_y = match net.mode {
        Mode::OutputSync => lap.clone(),
        Mode::Regulated => expanded_laplacian(&lap, net.root.as_ref().expect("checked in Network::new"))?,
    };
    let blocks: Vec<_> = (0..nag)
        .map(|i| {
            let iota = net.root.as_ref().is_some_and(|r| r.iota()[i]);
            assemble_protocol_block(&net.params, eps, net.mode, iota)
        })
        .collect::<Result<_>>()?;

    let mut agent_offsets = Vec::with_capacity(nag);
    let mut off = 0;
    for a in &net.agents {
        agent_offsets.push(off);
        off += a.dim();
    }
    let mut protocol_offsets = Vec::with_capacity(nag);
    for _ in 0..nag {
        protocol_offsets.push(off);
        off += 2 * nt;
    }
    let exo_offset = match net.mode {
        Mode::Regulated => {
            let o = off;
            off += net.reference.as_ref().expect("checked in Network::new").exo.dim();
            Some(o)
        }
        Mode::OutputSync => None,
    };
    let n = off;
    let dist_widths: Vec<usize> = net.agents.iter().map(|a| a.e().ncols()).collect();
    let nw: usize = dist_widths.iter().sum();

    let mut a = Matrix::zeros(n, n);
    let mut b = Matrix::zeros(n, nw);
    let mut c_y = Matrix::zeros(nag * p, n);
    let mut wcol = 0;
    for (i, ag) in net.agents.iter().enumerate() {
        let (oi, di) = (agent_offsets[i], ag.dim());
        let dy = ag.dynamics();
        a.view_mut((oi, oi), (di, di)).copy_from(dy.a());
        c_y.view_mut((i * p, oi), (p, di)).copy_from(dy.c());
        b.view_mut((oi, wcol), (di, dist_widths[i])).copy_from(ag.e());
        wcol += dist_widths[i];
    }
    for i in 0..nag {
        let blk = blocks[i].dynamics();
        let si = protocol_offsets[i];
        let (oi, di) = (agent_offsets[i], net.agents[i].dim());
        let cv = blk.c().rows(0, p).into_owned();
        let cchi = blk.c().rows(p, nt).into_owned();
        let b_zeta = blk.b().columns(0, p).into_owned();
        let b_hat = blk.b().columns(p, nt).into_owned();
        a.view_mut((si, si), (2 * nt, 2 * nt)).copy_from(blk.a());
        // v_i drives cascade i
        let bv = net.agents[i].dynamics().b() * &cv;
        a.view_mut((oi, si), (di, 2 * nt)).copy_from(&bv);
        for j in 0..nag {
            let (oj, dj) = (agent_offsets[j], net.agents[j].dim());
            let lyij = lap_y[(i, j)];
            if lyij != 0.0 {
                let blkc = &b_zeta * net.agents[j].dynamics().c() * lyij;
                let mut view = a.view_mut((si, oj), (2 * nt, dj));
                view += blkc;
            }
            let lij = lap[(i, j)];
            if lij != 0.0 {
                let sj = protocol_offsets[j];
                let blkc = &b_hat * &cchi * lij;
                let mut view = a.view_mut((si, sj), (2 * nt, 2 * nt));
                view += blkc;
            }
        }
    }
    let mut c_ref = None;
    if let (Some(xo), Some(reference)) = (exo_offset, net.reference.as_ref()) {
        let r = reference.exo.dim();
        a.view_mut((xo, xo), (r, r)).copy_from(reference.exo.ar());
        let mut cr_full = Matrix::zeros(p, n);
        cr_full.view_mut((0, xo), (p, r)).copy_from(reference.exo.cr());
        let root = net.root.as_ref().expect("checked in Network::new");
        for i in 0..nag {
            if root.iota()[i] {
                let si = protocol_offsets[i];
                let b_zeta = blocks[i].dynamics().b().columns(0, p).into_owned();
                let mut view = a.view_mut((si, xo), (2 * nt, r));
                view -= &b_zeta * reference.exo.cr();
            }
        }
        c_ref = Some(cr_full);
    }

    // error outputs
    let c_err = match net.mode {
        Mode::OutputSync => {
            let mut c = Matrix::zeros((nag - 1) * p, n);
            let last = c_y.rows((nag - 1) * p, p).into_owned();
            for i in 0..nag - 1 {
                let row = c_y.rows(i * p, p) - &last;
                c.view_mut((i * p, 0), (p, n)).copy_from(&row);
            }
            c
        }
        Mode::Regulated => {
            let cr = c_ref.as_ref().expect("regulated");
            let mut c = Matrix::zeros(nag * p, n);
            for i in 0..nag {
                c.view_mut((i * p, 0), (p, n)).copy_from(&(c_y.rows(i * p, p) - cr));
            }
            c
        }
    };
    let d = Matrix::zeros(c_err.nrows(), nw);
    let sys = StateSpace::new(a, b, c_err, d)?;

    let (w, n_error, n_neutral) = analysis_coordinates(net, &agent_offsets, &protocol_offsets, exo_offset, n)?;
    Ok(ClosedLoopSystem {
        mode: net.mode,
        eps,
        sys,
        c_y,
        c_ref,
        agent_offsets,
        protocol_offsets,
        exo_offset,
        dist_widths,
        agent_dims: net.agents.iter().map(|a| a.agent_dim()).collect(),
        xr0: net.reference.as_ref().map(|r| r.exo.xr0().clone()),
        w,
        n_error,
        n_neutral,
    })
}

fn analysis_coordinates(
    net: &Network,
    agent_offsets: &[usize],
    protocol_offsets: &[usize],
    exo_offset: Option<usize>,
    n: usize,
) -> Result<(Matrix, usize, usize)> {
    let nag = net.n_agents();
    let nt = net.params.target().dim();
    let mut rows: Vec<Matrix> = Vec::new();
    let place = |cols: &[(usize, &Matrix)]| {
        let r = cols[0].1.nrows();
        let mut m = Matrix::zeros(r, n);
        for &(o, blk) in cols {
            let mut view = m.view_mut((0, o), (r, blk.ncols()));
            view += blk;
        }
        m
    };
    let maps: Vec<Matrix> = net.agents.iter().map(|a| a.target_map()).collect();
    let neutral = match net.mode {
        Mode::OutputSync => {
            let last = nag - 1;
            let neg_last = -&maps[last];
            for i in 0..last {
                rows.push(place(&[(agent_offsets[i], &maps[i]), (agent_offsets[last], &neg_last)]));
            }
            place(&[(agent_offsets[last], &maps[last])])
        }
        Mode::Regulated => {
            let xo = exo_offset.expect("regulated");
            let reference = net.reference.as_ref().expect("regulated");
            let neg_theta = -&reference.theta;
            for i in 0..nag {
                rows.push(place(&[(agent_offsets[i], &maps[i]), (xo, &neg_theta)]));
            }
            let r = reference.exo.dim();
            place(&[(xo, &Matrix::identity(r, r))])
        }
    };
    let ident = Matrix::identity(2 * nt, 2 * nt);
    for &s in protocol_offsets {
        rows.push(place(&[(s, &ident)]));
    }
    let n_error: usize = rows.iter().map(|r| r.nrows()).sum();
    let n_neutral = neutral.nrows();
    rows.push(neutral);
    for (i, a) in net.agents.iter().enumerate() {
        let ni = a.dim() - nt;
        if ni > 0 {
            let internal = a.coords().rows(nt, ni).into_owned();
            rows.push(place(&[(agent_offsets[i], &internal)]));
        }
    }
    let refs: Vec<&Matrix> = rows.iter().collect();
    let w = crate::numlin::vstack(&refs, n);
    if w.nrows() != n {
        return Err(Error::SynthesisBug(format!("analysis coordinates have {} rows for {n} states", w.nrows())));
    }
    Ok((w, n_error, n_neutral))
}

/// `‖T_{ω→error}‖_{H∞}` on the error subsystem.
pub fn closed_loop_hinf(cl: &ClosedLoopSystem, tol: f64) -> Result<f64> {
    if !cl.is_stable()? {
        return Err(Error::InfiniteNorm(format!("closed loop at eps = {} is not stable", cl.eps)));
    }
    hinf_norm(&cl.error_system()?, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homog::{build_target, cascade, design_precompensator, remodel_exosystem, Precompensator};
    use crate::lti::AgentModel;
    use crate::numlin::from_rows;
    use crate::protocol::explicit_gains;

    fn target() -> crate::homog::TargetModel {
        build_target(1, 3, from_rows(&[&[0.0, -1.0, 0.0]])).unwrap()
    }

    fn params() -> ProtocolParams {
        explicit_gains(&target(), from_rows(&[&[30.0, 31.0, 10.0]]), from_rows(&[&[1.0]]), from_rows(&[&[1.0], &[1.0]]))
            .unwrap()
    }

    fn chain_agent(e: f64) -> CompensatedAgent {
        let a = AgentModel::new(
            from_rows(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[0.0, 0.0, 0.0]]),
            from_rows(&[&[0.0], &[0.0], &[1.0]]),
            from_rows(&[&[1.0, 0.0, 0.0]]),
            from_rows(&[&[e], &[e], &[0.0]]),
            Matrix::identity(3, 3),
        )
        .unwrap();
        design_precompensator(&a, &target()).unwrap().1
    }

    fn oscillator() -> Reference {
        let exo = Exosystem::new(
            from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]),
            from_rows(&[&[1.0, 0.0]]),
            from_rows(&[&[1.0], &[0.0]]),
        )
        .unwrap();
        let re = remodel_exosystem(&exo, 3).unwrap();
        Reference { exo, theta: re.theta }
    }

    #[test]
    fn edgeless_graph_rejected() {
        let g = CommGraph::from_edges(2, &[]).unwrap();
        let r = Network::new(vec![chain_agent(1.0), chain_agent(1.0)], params(), g, Mode::OutputSync, None, None);
        assert!(matches!(r, Err(Error::NoSpanningTree)));
    }

    #[test]
    fn single_agent_regulated_coupling() {
        let g = CommGraph::from_edges(1, &[]).unwrap();
        let root = RootSet::new(1, &[0]).unwrap();
        let net = Network::new(vec![chain_agent(1.0)], params(), g, Mode::Regulated, Some(root), Some(oscillator())).unwrap();
        let cl = assemble_closed_loop(&net, 0.1).unwrap();
        assert_eq!(cl.n_states(), 3 + 6 + 2);
        // ζ̄ = y − y_r enters through ε⁻¹K
        let s = cl.protocol_offsets[0];
        let xo = cl.exo_offset.unwrap();
        assert!((cl.sys.a()[(s, 0)] - 10.0).abs() < 1e-12);
        assert!((cl.sys.a()[(s, xo)] + 10.0).abs() < 1e-12);
        assert!(cl.decoupling_residual().unwrap() < 1e-12);
        assert!(cl.is_stable().unwrap());
    }

    #[test]
    fn state_dimension_and_decoupling() {
        let g = CommGraph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let agents = vec![chain_agent(1.0), chain_agent(0.5), chain_agent(0.0)];
        let net = Network::new(agents, params(), g, Mode::OutputSync, None, None).unwrap();
        let cl = assemble_closed_loop(&net, 0.1).unwrap();
        assert_eq!(cl.n_states(), 9 + 18);
        assert_eq!(cl.n_error, 6 + 18);
        assert!(cl.decoupling_residual().unwrap() < 1e-12);
        assert!(cl.is_stable().unwrap());
    }

    #[test]
    fn no_disturbance_path_gives_zero_norm() {
        let g = CommGraph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let net = Network::new(vec![chain_agent(0.0), chain_agent(0.0)], params(), g, Mode::OutputSync, None, None).unwrap();
        let cl = assemble_closed_loop(&net, 0.1).unwrap();
        assert_eq!(closed_loop_hinf(&cl, 1e-6).unwrap(), 0.0);
    }

    #[test]
    fn identity_precompensated_target_agents() {
        let t = target();
        let as_agent = AgentModel::new(t.a_d(), t.b_bar(), t.c_bar(), from_rows(&[&[1.0], &[0.0], &[0.0]]), Matrix::identity(3, 3)).unwrap();
        let comp = cascade(&as_agent, &Precompensator::identity(1, 3), Matrix::identity(3, 3), 3).unwrap();
        let g = CommGraph::from_edges(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let net = Network::new(vec![comp.clone(), comp], params(), g, Mode::OutputSync, None, None).unwrap();
        let cl = assemble_closed_loop(&net, 0.2).unwrap();
        assert!(cl.is_stable().unwrap());
        assert!(closed_loop_hinf(&cl, 1e-6).unwrap() > 0.0);
    }
}

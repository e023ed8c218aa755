//! JSON scenario files.
//!
//! Matrices are row-major nested arrays. Agent and node indices are 1-based.
//! Poles are `[re, im]` pairs. A minimal file:
//!
//! ```json
//! {
//!   "mode": "output_sync",
//!   "agents": [
//!     { "a": [[0.0]], "b": [[1.0]], "c": [[1.0]], "e": [[1.0]] },
//!     { "a": [[0.0]], "b": [[1.0]], "c": [[1.0]], "e": [[1.0]] }
//!   ],
//!   "edges": [{ "from": 1, "to": 2 }],
//!   "horizon": 10.0,
//!   "output_dt": 0.05
//! }
//! ```
//!
//! Omitted `cm` means the full state is measured. Omitted `target` and
//! `gains` mean `"auto"` and the default pole sets.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CommGraph, RootSet};
use crate::homog::{
    build_target, design_precompensator, embed_exosystem, remodel_exosystem, verify_homogenization, CompensatedAgent,
    Exosystem, HomogReport, Precompensator, TargetModel,
};
use crate::lti::{n_q0, require_assumptions, structural_analysis, AgentModel};
use crate::netsim::{Disturbance, DisturbanceSpec, Network, Reference};
use crate::numlin::{place_poles, Matrix};
use crate::protocol::{alpha_for, default_poles, explicit_gains, place_k2, Mode, ProtocolParams};

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSpec {
    OutputSync,
    Regulated,
}

impl From<ModeSpec> for Mode {
    fn from(m: ModeSpec) -> Mode {
        match m {
            ModeSpec::OutputSync => Mode::OutputSync,
            ModeSpec::Regulated => Mode::Regulated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub a: Rows,
    pub b: Rows,
    pub c: Rows,
    pub e: Rows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cm: Option<Rows>,
}

fn unit_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub from: usize,
    pub to: usize,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExoSpec {
    pub ar: Rows,
    pub cr: Rows,
    pub xr0: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Auto {
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetSpec {
    Auto(Auto),
    Explicit { p: usize, n_q: usize, gamma: Rows },
}

impl Default for TargetSpec {
    fn default() -> Self {
        TargetSpec::Auto(Auto::Auto)
    }
}

/// `F` from a pole list or given directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FSpec {
    Poles(Vec<[f64; 2]>),
    Matrix(Rows),
}

fn default_margin() -> f64 {
    1.0
}

/// `K₂` from a pole list with `K₁ = (α/2 + alpha_margin) I`, or both given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum KSpec {
    Poles {
        poles: Vec<[f64; 2]>,
        #[serde(default = "default_margin")]
        alpha_margin: f64,
    },
    Matrix {
        k1: Rows,
        k2: Rows,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<FSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<KSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceEntry {
    Zero,
    Sinusoid {
        frequency: f64,
        #[serde(default = "unit_weight")]
        amplitude: f64,
        #[serde(default)]
        phase: f64,
    },
    HeldRandom {
        bound: f64,
        hold: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    pub mode: ModeSpec,
    pub agents: Vec<AgentSpec>,
    pub edges: Vec<EdgeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_set: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exosystem: Option<ExoSpec>,
    #[serde(default)]
    pub target: TargetSpec,
    #[serde(default)]
    pub gains: GainSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_list: Option<Vec<f64>>,
    /// One entry per agent; empty means no disturbance anywhere.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub disturbances: Vec<DisturbanceEntry>,
    pub horizon: f64,
    pub output_dt: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Everything derived from a scenario before `ε` is chosen.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub agents: Vec<AgentModel>,
    pub precompensators: Vec<Precompensator>,
    pub homog_reports: Vec<HomogReport>,
    pub network: Network,
    pub disturbances: DisturbanceSpec,
}

fn field_err(field: impl Into<String>, detail: impl Into<String>) -> Error {
    Error::Scenario { field: field.into(), detail: detail.into() }
}

/// Converts nested rows to a matrix; `cols` is used when there are no rows.
pub fn matrix_from_rows(rows: &Rows, cols_if_empty: usize, field: &str) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(cols_if_empty, |row| row.len());
    if let Some(k) = rows.iter().position(|row| row.len() != c) {
        return Err(field_err(field, format!("row {} has {} entries, row 1 has {c}", k + 1, rows[k].len())));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(field_err(field, "non-finite entry"));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn rows_from_matrix(m: &Matrix) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn poles_from(list: &[[f64; 2]], field: &str) -> Result<Vec<Complex64>> {
    if list.iter().flatten().any(|x| !x.is_finite()) {
        return Err(field_err(field, "non-finite pole"));
    }
    Ok(list.iter().map(|&[re, im]| Complex64::new(re, im)).collect())
}

fn expect_shape(m: &Matrix, rows: usize, cols: usize, field: &str, what: &str) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(field_err(field, format!("is {}x{}, expected {rows}x{cols} ({what})", m.nrows(), m.ncols())));
    }
    Ok(())
}

pub fn parse_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.display().to_string(), detail: e.to_string() })?;
    parse_scenario_str(&text)
}

pub fn parse_scenario_str(text: &str) -> Result<Scenario> {
    let sc: Scenario = serde_json::from_str(text).map_err(|e| field_err("(file)", e.to_string()))?;
    sc.validate()?;
    Ok(sc)
}

impl Scenario {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    /// Dimension and consistency checks that need no synthesis.
    pub fn validate(&self) -> Result<()> {
        let agents = self.agent_models()?;
        self.graph()?;
        self.root()?;
        self.exosystem()?;
        let p = agents[0].p();
        if let TargetSpec::Explicit { p: tp, n_q, gamma } = &self.target {
            let g = matrix_from_rows(gamma, tp * n_q, "target.gamma")?;
            if *tp != p {
                return Err(field_err("target.p", format!("is {tp}, agents have {p} outputs")));
            }
            expect_shape(&g, *tp, tp * n_q, "target.gamma", "p x p*n_q")?;
        }
        if let Some(FSpec::Matrix(f)) = &self.gains.f {
            matrix_from_rows(f, 0, "gains.f")?;
        }
        if let Some(KSpec::Matrix { k1, k2 }) = &self.gains.k {
            matrix_from_rows(k1, 0, "gains.k.k1")?;
            matrix_from_rows(k2, p, "gains.k.k2")?;
        }
        for (name, e) in self.eps.iter().map(|e| ("eps", *e)).chain(self.eps_list.iter().flatten().map(|e| ("eps_list", *e))) {
            if !(e > 0.0 && e <= 1.0) {
                return Err(field_err(name, format!("{e} outside (0, 1]")));
            }
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(field_err("horizon", "must be positive"));
        }
        if !(self.output_dt > 0.0 && self.output_dt <= self.horizon) {
            return Err(field_err("output_dt", "must be positive and at most the horizon"));
        }
        if !self.disturbances.is_empty() && self.disturbances.len() != self.n_agents() {
            return Err(field_err(
                "disturbances",
                format!("{} entries for {} agents", self.disturbances.len(), self.n_agents()),
            ));
        }
        Ok(())
    }

    pub fn agent_models(&self) -> Result<Vec<AgentModel>> {
        if self.agents.is_empty() {
            return Err(field_err("agents", "no agents"));
        }
        let mut out = Vec::with_capacity(self.agents.len());
        let mut p0 = None;
        for (k, s) in self.agents.iter().enumerate() {
            let f = |name: &str| format!("agents[{}].{name}", k + 1);
            let a = matrix_from_rows(&s.a, 0, &f("a"))?;
            let n = a.nrows();
            expect_shape(&a, n, n, &f("a"), "square")?;
            let b = matrix_from_rows(&s.b, 0, &f("b"))?;
            expect_shape(&b, n, b.ncols(), &f("b"), "rows of A")?;
            let c = matrix_from_rows(&s.c, n, &f("c"))?;
            expect_shape(&c, c.nrows(), n, &f("c"), "columns of A")?;
            let e = matrix_from_rows(&s.e, 0, &f("e"))?;
            expect_shape(&e, n, e.ncols(), &f("e"), "rows of A")?;
            let cm = match &s.cm {
                Some(rows) => {
                    let m = matrix_from_rows(rows, n, &f("cm"))?;
                    expect_shape(&m, m.nrows(), n, &f("cm"), "columns of A")?;
                    m
                }
                None => Matrix::identity(n, n),
            };
            let p = c.nrows();
            if *p0.get_or_insert(p) != p {
                return Err(field_err(f("c"), format!("has {p} rows, agent 1 has {}", p0.unwrap_or(0))));
            }
            out.push(AgentModel::new(a, b, c, e, cm).map_err(|err| field_err(format!("agents[{}]", k + 1), err.to_string()))?);
        }
        Ok(out)
    }

    pub fn graph(&self) -> Result<CommGraph> {
        let n = self.n_agents();
        let mut edges = Vec::with_capacity(self.edges.len());
        for (k, e) in self.edges.iter().enumerate() {
            if e.from == 0 || e.to == 0 || e.from > n || e.to > n {
                return Err(field_err(format!("edges[{}]", k + 1), format!("{} -> {} outside 1..={n}", e.from, e.to)));
            }
            if e.from == e.to {
                return Err(field_err(format!("edges[{}]", k + 1), "self-loop"));
            }
            if !(e.weight > 0.0 && e.weight.is_finite()) {
                return Err(field_err(format!("edges[{}].weight", k + 1), "must be positive"));
            }
            edges.push((e.from - 1, e.to - 1, e.weight));
        }
        CommGraph::from_edges(n, &edges)
    }

    pub fn root(&self) -> Result<Option<RootSet>> {
        let n = self.n_agents();
        match (self.mode, &self.root_set) {
            (ModeSpec::Regulated, None) => Err(field_err("root_set", "required in regulated mode")),
            (_, None) => Ok(None),
            (_, Some(members)) => {
                if members.iter().any(|&m| m == 0 || m > n) {
                    return Err(field_err("root_set", format!("members must lie in 1..={n}")));
                }
                let zero_based: Vec<usize> = members.iter().map(|m| m - 1).collect();
                RootSet::new(n, &zero_based).map(Some).map_err(|e| field_err("root_set", e.to_string()))
            }
        }
    }

    pub fn exosystem(&self) -> Result<Option<Exosystem>> {
        match (self.mode, &self.exosystem) {
            (ModeSpec::Regulated, None) => Err(field_err("exosystem", "required in regulated mode")),
            (_, None) => Ok(None),
            (_, Some(x)) => {
                let ar = matrix_from_rows(&x.ar, 0, "exosystem.ar")?;
                let r = ar.nrows();
                expect_shape(&ar, r, r, "exosystem.ar", "square")?;
                let cr = matrix_from_rows(&x.cr, r, "exosystem.cr")?;
                expect_shape(&cr, cr.nrows(), r, "exosystem.cr", "columns of A_r")?;
                if x.xr0.len() != r {
                    return Err(field_err("exosystem.xr0", format!("has {} entries, expected {r}", x.xr0.len())));
                }
                let xr0 = Matrix::from_column_slice(r, 1, &x.xr0);
                Exosystem::new(ar, cr, xr0).map(Some).map_err(|e| field_err("exosystem", e.to_string()))
            }
        }
    }

    /// Target model and, in regulated mode, the exosystem embedding.
    pub fn target_model(&self, agents: &[AgentModel]) -> Result<(TargetModel, Option<Matrix>)> {
        let exo = self.exosystem()?;
        let nq0 = n_q0(agents)?;
        match (&self.target, exo) {
            (TargetSpec::Explicit { p, n_q, gamma }, exo) => {
                let t = build_target(*p, *n_q, matrix_from_rows(gamma, p * n_q, "target.gamma")?)?;
                if t.n_q() < nq0 {
                    return Err(field_err("target.n_q", format!("is {}, agents need at least {nq0}", t.n_q())));
                }
                let theta = exo.map(|x| embed_exosystem(&x, &t)).transpose()?;
                Ok((t, theta))
            }
            (TargetSpec::Auto(_), Some(x)) if self.mode == ModeSpec::Regulated => {
                let re = remodel_exosystem(&x, nq0)?;
                Ok((re.target, Some(re.theta)))
            }
            (TargetSpec::Auto(_), _) => {
                let p = agents[0].p();
                Ok((build_target(p, nq0, Matrix::zeros(p, p * nq0))?, None))
            }
        }
    }

    pub fn protocol_params(&self, target: &TargetModel) -> Result<ProtocolParams> {
        let (p, n) = (target.p(), target.dim());
        let f = match &self.gains.f {
            None => place_poles(&target.a_bar(), &target.b_bar(), &default_poles(n))?,
            Some(FSpec::Poles(list)) => {
                let poles = poles_from(list, "gains.f")?;
                if poles.len() != n {
                    return Err(field_err("gains.f", format!("{} poles given, {n} required", poles.len())));
                }
                place_poles(&target.a_bar(), &target.b_bar(), &poles)?
            }
            Some(FSpec::Matrix(rows)) => {
                let f = matrix_from_rows(rows, n, "gains.f")?;
                expect_shape(&f, p, n, "gains.f", "p x p*n_q")?;
                f
            }
        };
        let (k1, k2) = match &self.gains.k {
            None => self.k_from_poles(target, &default_poles(n - p), default_margin())?,
            Some(KSpec::Poles { poles, alpha_margin }) => {
                if !(*alpha_margin > 0.0) {
                    return Err(field_err("gains.k.alpha_margin", "must be positive"));
                }
                self.k_from_poles(target, &poles_from(poles, "gains.k.poles")?, *alpha_margin)?
            }
            Some(KSpec::Matrix { k1, k2 }) => {
                let k1 = matrix_from_rows(k1, p, "gains.k.k1")?;
                expect_shape(&k1, p, p, "gains.k.k1", "p x p")?;
                let k2 = matrix_from_rows(k2, p, "gains.k.k2")?;
                expect_shape(&k2, n - p, p, "gains.k.k2", "p*(n_q-1) x p")?;
                (k1, k2)
            }
        };
        explicit_gains(target, f, k1, k2)
    }

    fn k_from_poles(&self, target: &TargetModel, poles: &[Complex64], margin: f64) -> Result<(Matrix, Matrix)> {
        let p = target.p();
        let k2 = place_k2(target, poles)?;
        let alpha = alpha_for(target, &k2)?;
        Ok((Matrix::identity(p, p) * (alpha / 2.0 + margin), k2))
    }

    pub fn disturbance_spec(&self) -> DisturbanceSpec {
        if self.disturbances.is_empty() {
            return DisturbanceSpec::zero(self.n_agents());
        }
        let per_agent = self
            .disturbances
            .iter()
            .map(|d| match *d {
                DisturbanceEntry::Zero => Disturbance::Zero,
                DisturbanceEntry::Sinusoid { frequency, amplitude, phase } => Disturbance::Sinusoid { frequency, amplitude, phase },
                DisturbanceEntry::HeldRandom { bound, hold, seed } => Disturbance::HeldRandom { bound, seed, hold },
            })
            .collect();
        DisturbanceSpec { per_agent }
    }

    /// Structural checks, precompensators, gains and the network.
    pub fn synthesize(&self) -> Result<Synthesis> {
        let agents = self.agent_models()?;
        for (i, a) in agents.iter().enumerate() {
            require_assumptions(i + 1, &structural_analysis(a)?)?;
        }
        let (target, theta) = self.target_model(&agents)?;
        let params = self.protocol_params(&target)?;
        let mut precompensators = Vec::with_capacity(agents.len());
        let mut compensated: Vec<CompensatedAgent> = Vec::with_capacity(agents.len());
        let mut homog_reports = Vec::with_capacity(agents.len());
        for (i, a) in agents.iter().enumerate() {
            let (pre, comp) = design_precompensator(a, &target).map_err(|e| match e {
                Error::Unsupported(m) => Error::Unsupported(format!("agent {}: {m}", i + 1)),
                Error::Synthesis(m) => Error::Synthesis(format!("agent {}: {m}", i + 1)),
                other => other,
            })?;
            homog_reports.push(verify_homogenization(&comp, &target));
            precompensators.push(pre);
            compensated.push(comp);
        }
        let reference = match (self.exosystem()?, theta) {
            (Some(exo), Some(theta)) if self.mode == ModeSpec::Regulated => Some(Reference { exo, theta }),
            _ => None,
        };
        let network = Network::new(compensated, params, self.graph()?, self.mode.into(), self.root()?, reference)?;
        Ok(Synthesis { agents, precompensators, homog_reports, network, disturbances: self.disturbance_spec() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "mode": "output_sync",
        "agents": [
            { "a": [[0.0]], "b": [[1.0]], "c": [[1.0]], "e": [[1.0]] },
            { "a": [[0.0]], "b": [[1.0]], "c": [[1.0]], "e": [[1.0]] }
        ],
        "edges": [{ "from": 1, "to": 2 }],
        "horizon": 10.0,
        "output_dt": 0.05
    }"#;

    #[test]
    fn minimal_file_parses_and_synthesizes() {
        let sc = parse_scenario_str(MINIMAL).unwrap();
        assert_eq!(sc.n_agents(), 2);
        assert_eq!(sc.graph().unwrap().weights()[(1, 0)], 1.0);
        let syn = sc.synthesize().unwrap();
        assert!(syn.homog_reports.iter().all(|r| r.passed));
        assert_eq!(syn.network.params().target().n_q(), 1);
    }

    #[test]
    fn round_trip() {
        let sc = parse_scenario_str(MINIMAL).unwrap();
        assert_eq!(parse_scenario_str(&sc.to_json()).unwrap(), sc);
    }

    #[test]
    fn b_row_mismatch_names_agent() {
        let bad = MINIMAL.replacen(r#""b": [[1.0]]"#, r#""b": [[1.0], [0.0]]"#, 1);
        match parse_scenario_str(&bad) {
            Err(Error::Scenario { field, .. }) => assert_eq!(field, "agents[1].b"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn regulated_needs_root_and_exosystem() {
        let bad = MINIMAL.replace("output_sync", "regulated");
        assert!(matches!(parse_scenario_str(&bad), Err(Error::Scenario { field, .. }) if field == "root_set"));
    }

    #[test]
    fn both_gain_forms_rejected() {
        let bad = MINIMAL.replace(r#""horizon""#, r#""gains": { "f": { "poles": [[-1, 0]], "matrix": [[1]] } }, "horizon""#);
        assert!(parse_scenario_str(&bad).is_err());
    }

    #[test]
    fn edge_indices_are_one_based() {
        let bad = MINIMAL.replace(r#""from": 1"#, r#""from": 0"#);
        assert!(matches!(parse_scenario_str(&bad), Err(Error::Scenario { field, .. }) if field == "edges[1]"));
    }
}

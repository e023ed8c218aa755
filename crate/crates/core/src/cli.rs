//! Command-line front end: `synctool <command> <scenario> [--eps X] [--out DIR] [--seed N]`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde_json::json;

use crate::error::{Error, Result};
use crate::graph::{has_spanning_tree, root_set_covers};
use crate::lti::structural_analysis;
use crate::netsim::{assemble_closed_loop, closed_loop_hinf, epsilon_sweep, simulate, SweepRow};
use crate::numlin::DEFAULT_HINF_TOL;
use crate::scenario::{parse_scenario, rows_from_matrix, ModeSpec, Scenario};

pub const SWEEP_HEADER: &str = "eps,abscissa,hinf,tail_max,tail_rms,gamma_hat";
pub const METRICS_HEADER: &str = "eps,abscissa,tail_max,tail_rms";
pub const ANALYSIS_HEADER: &str = "eps,abscissa,hinf";
pub const DEFAULT_EPS_LIST: [f64; 4] = [0.5, 0.2, 0.1, 0.05];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Check,
    Synth,
    Analyze,
    Simulate,
    Sweep,
}

#[derive(Debug, Parser)]
#[command(name = "synctool", about = "Scale-free H-infinity almost output synchronization of heterogeneous agents")]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    pub scenario: PathBuf,
    /// Overrides the scenario's eps.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Overrides the scenario's seed for the initial state.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// 12 significant digits in scientific notation.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.11e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn csv_line(values: &[f64]) -> String {
    values.iter().map(|&v| fmt_num(v)).collect::<Vec<_>>().join(",")
}

/// Writes to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let io = |e: std::io::Error| Error::Io { path: path.display().to_string(), detail: e.to_string() };
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, contents).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        io(e)
    })
}

fn resolve_eps(args: &Args, sc: &Scenario) -> Result<f64> {
    let eps = args
        .eps
        .or(sc.eps)
        .ok_or_else(|| Error::Scenario { field: "eps".into(), detail: "not given in the scenario or with --eps".into() })?;
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Scenario { field: "eps".into(), detail: format!("{eps} outside (0, 1]") });
    }
    Ok(eps)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&csv_line(&[r.eps, r.abscissa, r.hinf, r.tail_max, r.tail_rms, r.gamma_hat]));
        s.push('\n');
    }
    s
}

/// Runs one command; returns what it printed to stdout.
pub fn run(args: &Args) -> Result<String> {
    let sc = parse_scenario(&args.scenario)?;
    let seed = args.seed.unwrap_or(sc.seed);
    let mut out = String::new();
    if args.command != Command::Check {
        std::fs::create_dir_all(&args.out)
            .map_err(|e| Error::Io { path: args.out.display().to_string(), detail: e.to_string() })?;
    }
    match args.command {
        Command::Check => check(&sc, &mut out)?,
        Command::Synth => {
            let syn = sc.synthesize()?;
            let params = syn.network.params();
            let t = params.target();
            let agents: Vec<_> = syn
                .precompensators
                .iter()
                .zip(&syn.homog_reports)
                .enumerate()
                .map(|(i, (pre, rep))| {
                    json!({
                        "agent": i + 1,
                        "g": rows_from_matrix(&pre.g), "h1": rows_from_matrix(&pre.h1), "h2": rows_from_matrix(&pre.h2),
                        "q": rows_from_matrix(&pre.q), "r1": rows_from_matrix(&pre.r1), "r2": rows_from_matrix(&pre.r2),
                        "max_markov_deviation": rep.max_markov_deviation,
                        "internal_hurwitz": rep.internal_hurwitz,
                        "passed": rep.passed,
                    })
                })
                .collect();
            let doc = json!({
                "target": { "p": t.p(), "n_q": t.n_q(), "gamma": rows_from_matrix(t.gamma()) },
                "gains": {
                    "f": rows_from_matrix(&params.f), "k1": rows_from_matrix(&params.k1), "k2": rows_from_matrix(&params.k2),
                    "alpha": params.alpha, "k1_meets_bound": params.k1_meets_bound(),
                },
                "precompensators": agents,
            });
            let path = args.out.join("synthesis.json");
            write_atomic(&path, &(serde_json::to_string_pretty(&doc).expect("json") + "\n"))?;
            writeln!(out, "wrote {}", path.display()).ok();
        }
        Command::Analyze => {
            let eps = resolve_eps(args, &sc)?;
            let syn = sc.synthesize()?;
            let cl = assemble_closed_loop(&syn.network, eps)?;
            let abscissa = cl.spectral_abscissa()?;
            let hinf = if cl.is_stable()? { closed_loop_hinf(&cl, DEFAULT_HINF_TOL)? } else { f64::INFINITY };
            let body = format!("{ANALYSIS_HEADER}\n{}\n", csv_line(&[eps, abscissa, hinf]));
            let path = args.out.join("analysis.csv");
            write_atomic(&path, &body)?;
            writeln!(out, "abscissa {}  hinf {}", fmt_num(abscissa), fmt_num(hinf)).ok();
        }
        Command::Simulate => {
            let eps = resolve_eps(args, &sc)?;
            let syn = sc.synthesize()?;
            let cl = assemble_closed_loop(&syn.network, eps)?;
            let abscissa = cl.spectral_abscissa()?;
            let x0 = cl.initial_state(seed);
            let sim = simulate(&cl, &syn.disturbances, &x0, sc.horizon, sc.output_dt)?;
            let n = sc.n_agents();
            let p = cl.c_y.nrows() / n;
            let mut header = vec!["t".to_string()];
            for i in 1..=n {
                for k in 1..=p {
                    header.push(if p == 1 { format!("y{i}") } else { format!("y{i}_{k}") });
                }
            }
            if sim.reference.is_some() {
                for k in 1..=p {
                    header.push(if p == 1 { "yr".into() } else { format!("yr_{k}") });
                }
            }
            for k in 1..=sim.errors.first().map_or(0, |e| e.len()) {
                header.push(format!("e{k}"));
            }
            let mut body = header.join(",");
            body.push('\n');
            for (idx, &t) in sim.times.iter().enumerate() {
                let mut row = vec![t];
                row.extend(&sim.outputs[idx]);
                if let Some(r) = &sim.reference {
                    row.extend(&r[idx]);
                }
                row.extend(&sim.errors[idx]);
                body.push_str(&csv_line(&row));
                body.push('\n');
            }
            write_atomic(&args.out.join("trajectories.csv"), &body)?;
            let metrics = format!("{METRICS_HEADER}\n{}\n", csv_line(&[eps, abscissa, sim.tail_max, sim.tail_rms]));
            write_atomic(&args.out.join("metrics.csv"), &metrics)?;
            writeln!(out, "tail_max {}  tail_rms {}", fmt_num(sim.tail_max), fmt_num(sim.tail_rms)).ok();
        }
        Command::Sweep => {
            let syn = sc.synthesize()?;
            let eps_list: Vec<f64> = match (args.eps, &sc.eps_list) {
                (Some(e), _) => vec![e],
                (None, Some(list)) => list.clone(),
                (None, None) => DEFAULT_EPS_LIST.to_vec(),
            };
            let rows = epsilon_sweep(&syn.network, &eps_list, &syn.disturbances, sc.horizon, sc.output_dt, seed)?;
            let path = args.out.join("sweep.csv");
            write_atomic(&path, &sweep_csv(&rows))?;
            writeln!(out, "wrote {} ({} rows)", path.display(), rows.len()).ok();
        }
    }
    Ok(out)
}

fn check(sc: &Scenario, out: &mut String) -> Result<()> {
    let agents = sc.agent_models()?;
    for (i, a) in agents.iter().enumerate() {
        let rep = structural_analysis(a)?;
        writeln!(out, "agent {} {}", i + 1, serde_json::to_string(&rep).expect("json")).ok();
    }
    let g = sc.graph()?;
    let spanning = has_spanning_tree(&g);
    writeln!(out, "spanning_tree {spanning}").ok();
    let root = sc.root()?;
    if let Some(r) = &root {
        writeln!(out, "root_set_covers {}", root_set_covers(&g, r)?).ok();
    }
    match (sc.mode, &root) {
        (ModeSpec::OutputSync, _) if !spanning => return Err(Error::NoSpanningTree),
        (ModeSpec::Regulated, Some(r)) if !root_set_covers(&g, r)? => {
            return Err(Error::RootSetNotCovering { root: r.members().iter().map(|m| m + 1).collect() })
        }
        _ => {}
    }
    let syn = sc.synthesize()?;
    let t = syn.network.params().target();
    writeln!(out, "target p {} n_q {}", t.p(), t.n_q()).ok();
    Ok(())
}

use rayon::prelude::*;

use super::{assemble_closed_loop, closed_loop_hinf, simulate, DisturbanceSpec, Network};
use crate::error::{Error, Result};
use crate::numlin::DEFAULT_HINF_TOL;

/// Smallest ε probed by [`estimate_eps_star`], and its bisection resolution.
pub const EPS_FLOOR: f64 = 1e-3;

/// One ε of a sweep. Unstable rows carry `hinf = ∞` and NaN tail metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    pub abscissa: f64,
    pub hinf: f64,
    pub tail_max: f64,
    pub tail_rms: f64,
    /// `hinf / eps`, the empirical slope of the norm bound.
    pub gamma_hat: f64,
}

fn stable_at(net: &Network, eps: f64) -> Result<bool> {
    assemble_closed_loop(net, eps)?.is_stable()
}

/// Stable at `eps`, `eps/2`, `eps/4`, … down to [`EPS_FLOOR`].
fn stable_below(net: &Network, eps: f64) -> Result<bool> {
    let mut e = eps;
    loop {
        if !stable_at(net, e)? {
            return Ok(false);
        }
        if e <= EPS_FLOOR {
            return Ok(true);
        }
        e = (e / 2.0).max(EPS_FLOOR);
    }
}

/// Largest `ε ≤ eps_hi` (to within [`EPS_FLOOR`]) such that the closed loop is
/// stable at `ε` and at every halving of it down to [`EPS_FLOOR`].
pub fn estimate_eps_star(net: &Network, eps_hi: f64) -> Result<f64> {
    if !(eps_hi > 0.0 && eps_hi <= 1.0) {
        return Err(Error::contract("estimate_eps_star", format!("eps_hi = {eps_hi} outside (0, 1]")));
    }
    if stable_below(net, eps_hi)? {
        return Ok(eps_hi);
    }
    let mut lo = EPS_FLOOR.min(eps_hi);
    if !stable_below(net, lo)? {
        return Err(Error::Synthesis(format!("closed loop is unstable at eps = {lo}")));
    }
    let mut hi = eps_hi;
    while hi - lo > EPS_FLOOR {
        let mid = 0.5 * (lo + hi);
        if stable_below(net, mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Stability, H∞ norm and simulated tail metrics for each ε, in parallel.
/// Every row simulates from the same seeded initial state.
pub fn epsilon_sweep(
    net: &Network,
    eps_list: &[f64],
    dist: &DisturbanceSpec,
    horizon: f64,
    output_dt: f64,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    eps_list
        .par_iter()
        .map(|&eps| {
            let cl = assemble_closed_loop(net, eps)?;
            let abscissa = cl.spectral_abscissa()?;
            if !cl.is_stable()? {
                return Ok(SweepRow { eps, abscissa, hinf: f64::INFINITY, tail_max: f64::NAN, tail_rms: f64::NAN, gamma_hat: f64::INFINITY });
            }
            let hinf = closed_loop_hinf(&cl, DEFAULT_HINF_TOL)?;
            let x0 = cl.initial_state(seed);
            let sim = simulate(&cl, dist, &x0, horizon, output_dt)?;
            Ok(SweepRow { eps, abscissa, hinf, tail_max: sim.tail_max, tail_rms: sim.tail_rms, gamma_hat: hinf / eps })
        })
        .collect()
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::ClosedLoopSystem;
use crate::error::{Error, Result};
use crate::numlin::{expm, Matrix};
use crate::protocol::Mode;

/// Disturbance on every channel of one agent.
#[derive(Debug, Clone, PartialEq)]
pub enum Disturbance {
    Zero,
    /// `amplitude · sin(frequency · t + phase)`.
    Sinusoid { frequency: f64, amplitude: f64, phase: f64 },
    /// Normal samples with standard deviation `bound / 3`, clipped to
    /// `[−bound, bound]` and held for `hold` time units.
    HeldRandom { bound: f64, seed: u64, hold: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceSpec {
    pub per_agent: Vec<Disturbance>,
}

impl DisturbanceSpec {
    pub fn zero(n_agents: usize) -> Self {
        DisturbanceSpec { per_agent: vec![Disturbance::Zero; n_agents] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub times: Vec<f64>,
    /// One row per sample: `y₁ … y_N` stacked.
    pub outputs: Vec<Vec<f64>>,
    /// Reference output per sample (regulated mode).
    pub reference: Option<Vec<Vec<f64>>>,
    /// One row per sample: the error outputs of the closed loop.
    pub errors: Vec<Vec<f64>>,
    /// Over the last 20% of the horizon: largest `|yᵢ − yⱼ|` (or `|yᵢ − y_r|`).
    pub tail_max: f64,
    /// Over the last 20% of the horizon: root mean square of the stacked error norm.
    pub tail_rms: f64,
}

impl ClosedLoopSystem {
    /// Agent states uniform in `[−1, 1]` from `seed`; precompensator and
    /// protocol states zero; exosystem at its configured initial state.
    pub fn initial_state(&self, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Matrix::zeros(self.n_states(), 1);
        for (o, d) in self.agent_offsets.iter().zip(&self.agent_dims) {
            for k in 0..*d {
                x[(o + k, 0)] = rng.random_range(-1.0..=1.0);
            }
        }
        if let (Some(xo), Some(xr0)) = (self.exo_offset, self.xr0.as_ref()) {
            x.view_mut((xo, 0), (xr0.nrows(), 1)).copy_from(xr0);
        }
        x
    }
}

struct HeldChannel {
    column: usize,
    bound: f64,
    rng: ChaCha8Rng,
}

impl HeldChannel {
    fn sample(&mut self) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        (z * self.bound / 3.0).clamp(-self.bound, self.bound)
    }
}

/// Exact propagation of the closed loop from `x0` over `[0, horizon]`,
/// sampled every `output_dt`.
///
/// Sinusoids are generated by oscillator states appended to the loop, so the
/// augmented system is autonomous apart from held-random inputs, which are
/// constant on each hold interval. Each step is one multiplication by the
/// matrix exponential of the augmented system.
pub fn simulate(cl: &ClosedLoopSystem, dist: &DisturbanceSpec, x0: &Matrix, horizon: f64, output_dt: f64) -> Result<SimResult> {
    if !(horizon > 0.0 && output_dt > 0.0 && horizon.is_finite()) {
        return Err(Error::contract("simulate", "horizon and output_dt must be positive"));
    }
    let n = cl.n_states();
    if x0.shape() != (n, 1) {
        return Err(Error::dim("simulate", format!("initial state must be {n}x1")));
    }
    if dist.per_agent.len() != cl.n_agents() {
        return Err(Error::dim("simulate", format!("{} disturbance entries for {} agents", dist.per_agent.len(), cl.n_agents())));
    }

    let b = cl.sys.b();
    let mut osc: Vec<(usize, f64, f64, f64)> = Vec::new();
    let mut held: Vec<HeldChannel> = Vec::new();
    let mut hold: Option<f64> = None;
    let mut col = 0;
    for (i, d) in dist.per_agent.iter().enumerate() {
        for k in 0..cl.dist_widths[i] {
            match *d {
                Disturbance::Zero => {}
                Disturbance::Sinusoid { frequency, amplitude, phase } => osc.push((col, frequency, amplitude, phase)),
                Disturbance::HeldRandom { bound, seed, hold: h } => {
                    if !(h > 0.0 && bound >= 0.0) {
                        return Err(Error::contract("simulate", "held-random disturbance needs hold > 0 and bound >= 0"));
                    }
                    if let Some(prev) = hold {
                        if (prev - h).abs() > 1e-12 * prev {
                            return Err(Error::contract("simulate", "all held-random disturbances must share one hold interval"));
                        }
                    }
                    hold = Some(h);
                    let stream = seed.wrapping_add((k as u64) << 32);
                    held.push(HeldChannel { column: col, bound, rng: ChaCha8Rng::seed_from_u64(stream) });
                }
            }
            col += 1;
        }
    }

    let step = hold.unwrap_or(output_dt);
    let ratio = output_dt / step;
    let per_output = ratio.round() as usize;
    if per_output == 0 || (ratio - per_output as f64).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::contract("simulate", "output_dt must be an integer multiple of the hold interval"));
    }
    let n_out = (horizon / output_dt).round() as usize;

    // augmented generator [[A, B_osc, B_held], [0, O, 0], [0, 0, 0]]
    let no = 2 * osc.len();
    let nh = held.len();
    let na = n + no + nh;
    let mut gen = Matrix::zeros(na, na);
    gen.view_mut((0, 0), (n, n)).copy_from(cl.sys.a());
    let mut z0 = Matrix::zeros(n + no, 1);
    z0.view_mut((0, 0), (n, 1)).copy_from(x0);
    for (k, &(c, w, amp, ph)) in osc.iter().enumerate() {
        let s = n + 2 * k;
        for r in 0..n {
            gen[(r, s)] = b[(r, c)] * amp;
        }
        gen[(s, s + 1)] = w;
        gen[(s + 1, s)] = -w;
        z0[(s, 0)] = ph.sin();
        z0[(s + 1, 0)] = ph.cos();
    }
    for (k, h) in held.iter().enumerate() {
        for r in 0..n {
            gen[(r, n + no + k)] = b[(r, h.column)];
        }
    }
    let phi = expm(&gen, step)?;
    let ad = phi.view((0, 0), (n + no, n + no)).into_owned();
    let bd = phi.view((0, n + no), (n + no, nh)).into_owned();

    let c_err = cl.sys.c();
    let mut times = Vec::with_capacity(n_out + 1);
    let mut outputs = Vec::with_capacity(n_out + 1);
    let mut errors = Vec::with_capacity(n_out + 1);
    let mut reference = cl.c_ref.as_ref().map(|_| Vec::<Vec<f64>>::with_capacity(n_out + 1));
    let mut z = z0;
    let mut u = Matrix::zeros(nh, 1);
    let mut record = |k: usize, z: &Matrix| {
        let x = z.rows(0, n);
        times.push(k as f64 * output_dt);
        outputs.push((&cl.c_y * x).iter().copied().collect::<Vec<f64>>());
        errors.push((c_err * x).iter().copied().collect::<Vec<f64>>());
        if let (Some(r), Some(cr)) = (reference.as_mut(), cl.c_ref.as_ref()) {
            r.push((cr * x).iter().copied().collect());
        }
    };
    record(0, &z);
    for k in 1..=n_out {
        for _ in 0..per_output {
            for (slot, h) in held.iter_mut().enumerate() {
                u[(slot, 0)] = h.sample();
            }
            z = if nh > 0 { &ad * &z + &bd * &u } else { &ad * &z };
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("trajectory diverged before t = {}", k as f64 * output_dt)));
        }
        record(k, &z);
    }

    let p = if cl.n_agents() > 0 { cl.c_y.nrows() / cl.n_agents() } else { 0 };
    let t_tail = 0.8 * horizon - 1e-9 * horizon;
    let mut tail_max: f64 = 0.0;
    let mut sq = 0.0;
    let mut count = 0usize;
    for (idx, &t) in times.iter().enumerate() {
        if t < t_tail {
            continue;
        }
        let y = &outputs[idx];
        match (cl.mode, reference.as_ref()) {
            (Mode::Regulated, Some(r)) => {
                for (i, yi) in y.iter().enumerate() {
                    tail_max = tail_max.max((yi - r[idx][i % p]).abs());
                }
            }
            _ => {
                for ch in 0..p {
                    let vals = y.iter().skip(ch).step_by(p);
                    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
                    if hi >= lo {
                        tail_max = tail_max.max(hi - lo);
                    }
                }
            }
        }
        sq += errors[idx].iter().map(|e| e * e).sum::<f64>();
        count += 1;
    }
    let tail_rms = if count > 0 { (sq / count as f64).sqrt() } else { 0.0 };
    Ok(SimResult { times, outputs, reference, errors, tail_max, tail_rms })
}

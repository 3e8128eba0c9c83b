//! Closed-loop network simulation under the distributed protocol
//!
//! ```text
//! v_i⁺ = S v_i + (1 + d_i + g_i)⁻¹ F (Σ_j a_ij (v_j − v_i) + g_i (x_r − v_i))
//! u_i  = K_i (x_i − Π_i v_i) + Γ_i v_i
//! x_i⁺ = A_i x_i + B_i u_i + E_i w_i,   y_i = C_i x_i + D_i u_i
//! ```
//!
//! All agents read step-`k` values (synchronous update), so the per-agent
//! work is independent and the parallel mode reproduces the serial trace
//! bit for bit.
//!
//! The verdict is meaningful for `w ≡ 0`: persistent deployment
//! disturbances generally prevent the error signals from vanishing.

use std::path::Path;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;

use crate::datamod::TrueSystem;
use crate::error::{dim_err, Error, Result};
use crate::matcore::Matrix;
use crate::synthesis::ProtocolGains;

pub const DEFAULT_TAIL_FRACTION: f64 = 0.25;
pub const DEFAULT_VERDICT_TOL: f64 = 1e-3;

/// Time histories; column `k` holds the value at step `k`, `k = 0..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub horizon: usize,
    pub leader_states: Matrix,
    pub leader_outputs: Matrix,
    pub controller_states: Vec<Matrix>,
    pub follower_states: Vec<Matrix>,
    /// `u_i(horizon)` is evaluated from the final states so every signal
    /// exists on the full grid.
    pub inputs: Vec<Matrix>,
    pub outputs: Vec<Matrix>,
}

impl SimTrace {
    pub fn followers(&self) -> usize {
        self.follower_states.len()
    }
}

/// Per-follower sup norms (∞-norm in space) over `k ≥ tail_start`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    /// `y_i − y_r`
    pub e_y: Vec<f64>,
    /// `v_i − x_r`
    pub e_v: Vec<f64>,
    /// `x_i − Π_i v_i`
    pub e_x: Vec<f64>,
    pub tail_start: usize,
}

impl ErrorReport {
    pub fn max(&self) -> f64 {
        self.e_y.iter().chain(&self.e_v).chain(&self.e_x).copied().fold(0.0, f64::max)
    }
}

struct AgentStep {
    x_next: DVector<f64>,
    v_next: DVector<f64>,
    u: DVector<f64>,
    y: DVector<f64>,
}

fn check_inputs(
    protocol: &ProtocolGains,
    models: &[TrueSystem],
    x0s: &[Vec<f64>],
    v0s: &[Vec<f64>],
    horizon: usize,
    disturbances: Option<&[Matrix]>,
) -> Result<()> {
    let n_agents = protocol.graph.n();
    let r = protocol.leader.state_dim();
    let p = protocol.leader.output_dim();
    if protocol.per_follower.len() != n_agents || models.len() != n_agents || x0s.len() != n_agents || v0s.len() != n_agents {
        return Err(dim_err(format!(
            "graph has {n_agents} followers; got {} gain sets, {} models, {} x0, {} v0",
            protocol.per_follower.len(),
            models.len(),
            x0s.len(),
            v0s.len()
        )));
    }
    if protocol.f.shape() != (r, r) {
        return Err(dim_err(format!("F is {:?}, expected {r}x{r}", protocol.f.shape())));
    }
    for (i, (g, m)) in protocol.per_follower.iter().zip(models).enumerate() {
        let (n, mi) = (m.a.nrows(), m.b.ncols());
        if g.k_gain.shape() != (mi, n)
            || g.pi.shape() != (n, r)
            || g.gamma.shape() != (mi, r)
            || m.c.nrows() != p
            || x0s[i].len() != n
            || v0s[i].len() != r
        {
            return Err(dim_err(format!("follower {}: gains, model or initial state disagree in shape", i + 1)));
        }
        if let Some(ws) = disturbances {
            if ws.len() != n_agents || ws[i].nrows() != m.e.ncols() || ws[i].ncols() < horizon {
                return Err(dim_err(format!(
                    "follower {}: disturbance sequence must be {}x{horizon}",
                    i + 1,
                    m.e.ncols()
                )));
            }
        }
    }
    Ok(())
}

/// Simulate the network for `horizon` steps from the given initial states.
/// `disturbances[i]` is `q_i × horizon`; `None` means `w ≡ 0`.
pub fn run_closed_loop(
    protocol: &ProtocolGains,
    models: &[TrueSystem],
    x0s: &[Vec<f64>],
    v0s: &[Vec<f64>],
    horizon: usize,
    disturbances: Option<&[Matrix]>,
    parallel: bool,
) -> Result<SimTrace> {
    check_inputs(protocol, models, x0s, v0s, horizon, disturbances)?;
    let n_agents = protocol.graph.n();
    let (leader_states, leader_outputs) = protocol.leader.trajectory(horizon);
    let weights = protocol.graph.weights();
    let gains_g = protocol.graph.leader_gains();
    let degrees = protocol.graph.degrees();
    let scale: Vec<f64> = (0..n_agents).map(|i| 1.0 / (1.0 + degrees[i] + gains_g[i])).collect();

    let mut xs: Vec<DVector<f64>> = x0s.iter().map(|x| DVector::from_column_slice(x)).collect();
    let mut vs: Vec<DVector<f64>> = v0s.iter().map(|v| DVector::from_column_slice(v)).collect();
    let mut trace = SimTrace {
        horizon,
        leader_outputs,
        controller_states: vs.iter().map(|v| Matrix::zeros(v.len(), horizon + 1)).collect(),
        follower_states: xs.iter().map(|x| Matrix::zeros(x.len(), horizon + 1)).collect(),
        inputs: models.iter().map(|m| Matrix::zeros(m.b.ncols(), horizon + 1)).collect(),
        outputs: models.iter().map(|m| Matrix::zeros(m.c.nrows(), horizon + 1)).collect(),
        leader_states,
    };

    for k in 0..=horizon {
        let xr = trace.leader_states.column(k).into_owned();
        let agent = |i: usize| -> AgentStep {
            let g = &protocol.per_follower[i];
            let m = &models[i];
            let (x, v) = (&xs[i], &vs[i]);
            let u = &g.k_gain * (x - &g.pi * v) + &g.gamma * v;
            let y = &m.c * x + &m.d * &u;
            if k == horizon {
                return AgentStep { x_next: x.clone(), v_next: v.clone(), u, y };
            }
            let mut x_next = &m.a * x + &m.b * &u;
            if let Some(ws) = disturbances {
                x_next += &m.e * ws[i].column(k);
            }
            let mut consensus = (&xr - v) * gains_g[i];
            for j in 0..n_agents {
                let a = weights[(i, j)];
                if a != 0.0 {
                    consensus += (&vs[j] - v) * a;
                }
            }
            let v_next = &protocol.leader.s * v + (&protocol.f * consensus) * scale[i];
            AgentStep { x_next, v_next, u, y }
        };
        let steps: Vec<AgentStep> = if parallel {
            (0..n_agents).into_par_iter().map(agent).collect()
        } else {
            (0..n_agents).map(agent).collect()
        };
        for (i, s) in steps.into_iter().enumerate() {
            trace.follower_states[i].set_column(k, &xs[i]);
            trace.controller_states[i].set_column(k, &vs[i]);
            trace.inputs[i].set_column(k, &s.u);
            trace.outputs[i].set_column(k, &s.y);
            if k < horizon {
                if !(s.x_next.iter().chain(s.v_next.iter()).all(|v| v.is_finite())) {
                    return Err(Error::Diverged { step: k + 1 });
                }
                xs[i] = s.x_next;
                vs[i] = s.v_next;
            }
        }
    }
    Ok(trace)
}

fn sup_inf_norm(diff: impl Iterator<Item = f64>) -> f64 {
    diff.map(f64::abs).fold(0.0, f64::max)
}

/// Error sup norms over steps `start..=end`.
pub fn window_report(trace: &SimTrace, protocol: &ProtocolGains, start: usize, end: usize) -> Result<ErrorReport> {
    if start > end || end > trace.horizon {
        return Err(Error::InvalidArgument(format!(
            "window {start}..={end} outside 0..={}",
            trace.horizon
        )));
    }
    if protocol.per_follower.len() != trace.followers() {
        return Err(dim_err("protocol and trace disagree on the follower count"));
    }
    let steps = start..=end;
    let mut report = ErrorReport { e_y: vec![], e_v: vec![], e_x: vec![], tail_start: start };
    for (i, g) in protocol.per_follower.iter().enumerate() {
        let ys = &trace.outputs[i];
        let vs = &trace.controller_states[i];
        let xs = &trace.follower_states[i];
        let yr = &trace.leader_outputs;
        let xr = &trace.leader_states;
        let (mut ey, mut ev, mut ex) = (0.0_f64, 0.0_f64, 0.0_f64);
        for k in steps.clone() {
            ey = ey.max(sup_inf_norm((ys.column(k) - yr.column(k)).iter().copied()));
            ev = ev.max(sup_inf_norm((vs.column(k) - xr.column(k)).iter().copied()));
            ex = ex.max(sup_inf_norm((xs.column(k) - &g.pi * vs.column(k)).iter().copied()));
        }
        report.e_y.push(ey);
        report.e_v.push(ev);
        report.e_x.push(ex);
    }
    Ok(report)
}

/// Sup norms over `k ≥ ceil((1 − tail_fraction) · horizon)`.
pub fn error_report(trace: &SimTrace, protocol: &ProtocolGains, tail_fraction: f64) -> Result<ErrorReport> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("tail fraction {tail_fraction} not in (0, 1]")));
    }
    let start = ((1.0 - tail_fraction) * trace.horizon as f64).ceil() as usize;
    window_report(trace, protocol, start.min(trace.horizon), trace.horizon)
}

pub fn verdict(report: &ErrorReport, tol: f64) -> bool {
    report.e_y.iter().chain(&report.e_v).chain(&report.e_x).all(|&e| e <= tol)
}

/// Uniform `[−1, 1]` initial follower and controller states.
pub fn random_initial_states(models: &[TrueSystem], r: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(-1.0, 1.0);
    let x0s = models.iter().map(|m| (0..m.a.nrows()).map(|_| dist.sample(&mut rng)).collect()).collect();
    let v0s = models.iter().map(|_| (0..r).map(|_| dist.sample(&mut rng)).collect()).collect();
    (x0s, v0s)
}

/// Header names for [`write_trace_csv`]; follower numbering is 1-based.
pub fn trace_header(trace: &SimTrace) -> Vec<String> {
    let mut cols = vec!["k".to_string()];
    let mut push = |prefix: &str, m: &Matrix| cols.extend((1..=m.nrows()).map(|j| format!("{prefix}_{j}")));
    push("xr", &trace.leader_states);
    push("yr", &trace.leader_outputs);
    for i in 0..trace.followers() {
        let f = i + 1;
        push(&format!("v{f}"), &trace.controller_states[i]);
        push(&format!("x{f}"), &trace.follower_states[i]);
        push(&format!("u{f}"), &trace.inputs[i]);
        push(&format!("y{f}"), &trace.outputs[i]);
    }
    cols
}

/// One row per step after a header line naming every column.
pub fn write_trace_csv(trace: &SimTrace, path: &Path) -> Result<()> {
    let io = |e: csv::Error| Error::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(trace_header(trace)).map_err(io)?;
    for k in 0..=trace.horizon {
        let mut row = vec![k.to_string()];
        let mut push = |m: &Matrix| row.extend(m.column(k).iter().map(|v| format!("{v:.16e}")));
        push(&trace.leader_states);
        push(&trace.leader_outputs);
        for i in 0..trace.followers() {
            push(&trace.controller_states[i]);
            push(&trace.follower_states[i]);
            push(&trace.inputs[i]);
            push(&trace.outputs[i]);
        }
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

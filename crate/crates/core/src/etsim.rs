//! Fixed-step simulation of the event-triggered closed loop.
//!
//! Each agent holds its last broadcast `x̂_i` and drives
//! `u_i = (K_i + ΔK_i(t)) X̂_i` with `X̂_i = Σ_j l_ij x̂_j`. Agent `i`
//! broadcasts when `‖x̂_i − x_i‖ ≥ φ‖X̂_i‖`.
//!
//! Step order: broadcast at `t = 0`; then repeatedly integrate one step,
//! test convergence on the held `X̂`, and evaluate all trigger conditions
//! against the pre-update `x̂` before applying them together.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matkit::Mat;
use crate::synthesis::{zeno_lower_bound, Plant};
use crate::topology::LaplacianBundle;

/// Relative slack allowed above `c·e^{−ζt}‖x_r(0)‖`.
pub const ENVELOPE_SLACK: f64 = 0.05;

const BLOWUP: f64 = 1e100;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    #[default]
    Euler,
    Rk4,
}

/// How `‖X̂_i‖` is compared with `δ_c` to declare an agent settled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SettleMetric {
    /// `‖X̂_i‖² < δ_c`.
    #[default]
    Squared,
    /// `‖X̂_i‖ < δ_c`.
    Norm,
}

impl SettleMetric {
    pub fn settled(self, norm: f64, delta_c: f64) -> bool {
        match self {
            SettleMetric::Squared => norm * norm < delta_c,
            SettleMetric::Norm => norm < delta_c,
        }
    }
}

/// Additive perturbation `ΔK_i(t)` of the gains.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum UncertaintyModel {
    #[default]
    None,
    /// Every entry equals `(a/√2)·sin t` with `a = δ√2/√(mn)`, so
    /// `‖ΔK_i(t)‖_F = δ|sin t| ≤ δ`. For `m = 1, n = 2` this is
    /// `sin(t)/√2 · [δ, δ]`.
    Sinusoid { delta: f64 },
    /// `ΔK_i(t) = sin(t)·amplitude[i]`.
    Custom { amplitude: Vec<Mat> },
}

impl UncertaintyModel {
    /// Largest `‖ΔK_i(t)‖_F` over all agents and times.
    pub fn bound(&self) -> f64 {
        match self {
            UncertaintyModel::None => 0.0,
            UncertaintyModel::Sinusoid { delta } => *delta,
            UncertaintyModel::Custom { amplitude } => amplitude
                .iter()
                .map(Mat::frobenius_norm)
                .fold(0.0, f64::max),
        }
    }

    fn validate(&self, agents: usize, m: usize, n: usize) -> Result<()> {
        match self {
            UncertaintyModel::None => Ok(()),
            UncertaintyModel::Sinusoid { delta } => {
                if !(delta.is_finite() && *delta >= 0.0) {
                    return Err(Error::Config(format!("uncertainty delta must be >= 0, got {delta}")));
                }
                Ok(())
            }
            UncertaintyModel::Custom { amplitude } => {
                if amplitude.len() != agents {
                    return Err(Error::Config(format!(
                        "uncertainty amplitude has {} entries for {agents} agents",
                        amplitude.len()
                    )));
                }
                if let Some(a) = amplitude.iter().find(|a| a.shape() != (m, n)) {
                    return Err(Error::Config(format!(
                        "uncertainty amplitude is {:?}, gains are {m}x{n}",
                        a.shape()
                    )));
                }
                Ok(())
            }
        }
    }

    /// Adds `ΔK_i(t)` (row-major `m×n`) into `k`.
    fn perturb(&self, agent: usize, t: f64, m: usize, n: usize, k: &mut [f64]) {
        match self {
            UncertaintyModel::None => {}
            UncertaintyModel::Sinusoid { delta } => {
                let a = delta * 2f64.sqrt() / ((m * n) as f64).sqrt();
                let v = a / 2f64.sqrt() * t.sin();
                k.iter_mut().for_each(|e| *e += v);
            }
            UncertaintyModel::Custom { amplitude } => {
                let s = t.sin();
                for (e, a) in k.iter_mut().zip(amplitude[agent].data()) {
                    *e += s * a;
                }
            }
        }
    }
}

fn default_ts() -> f64 {
    1e-3
}
fn default_delta_c() -> f64 {
    5e-3
}
fn default_max_steps() -> usize {
    1_000_000
}
fn default_decimation() -> usize {
    10
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(default = "default_ts")]
    pub ts: f64,
    #[serde(default = "default_delta_c")]
    pub delta_c: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    pub phi: f64,
    #[serde(default)]
    pub uncertainty: UncertaintyModel,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default)]
    pub settle: SettleMetric,
    /// Stacked `x(0)`, agent-major.
    #[serde(default)]
    pub initial_states: Vec<f64>,
    /// Recorded for reproducibility; the built-in uncertainty models are
    /// deterministic, so it does not change the trajectory.
    #[serde(default)]
    pub seed: u64,
    /// Keep every `decimation`-th step in `trajectories`.
    #[serde(default = "default_decimation")]
    pub decimation: usize,
}

impl SimConfig {
    pub fn new(phi: f64, initial_states: Vec<f64>) -> Self {
        SimConfig {
            ts: default_ts(),
            delta_c: default_delta_c(),
            max_steps: default_max_steps(),
            phi,
            uncertainty: UncertaintyModel::None,
            integrator: Integrator::Euler,
            settle: SettleMetric::Squared,
            initial_states,
            seed: 0,
            decimation: default_decimation(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ts.is_finite() && self.ts > 0.0) {
            return Err(Error::Config(format!("ts must be > 0, got {}", self.ts)));
        }
        if !(self.delta_c.is_finite() && self.delta_c > 0.0) {
            return Err(Error::Config(format!("delta_c must be > 0, got {}", self.delta_c)));
        }
        if !(self.phi.is_finite() && self.phi >= 0.0) {
            return Err(Error::Config(format!("phi must be >= 0, got {}", self.phi)));
        }
        if self.decimation == 0 {
            return Err(Error::Config("decimation must be >= 1".into()));
        }
        if self.initial_states.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial_states"));
        }
        Ok(())
    }
}

/// `x_i(0) = [i + 5, i − 2]` (1-based `i`) for second-order agents; other
/// state sizes continue the pattern `i + 5 − 7k` per component.
pub fn default_initial_states(agents: usize, n: usize) -> Vec<f64> {
    (1..=agents)
        .flat_map(|i| (0..n).map(move |k| i as f64 + 5.0 - 7.0 * k as f64))
        .collect()
}

/// One stored step. `xhat` is the broadcast state the trigger rule saw at
/// this step (before this step's events); `u` is the input applied from
/// `t` on (after them).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Sample {
    pub step: usize,
    pub t: f64,
    pub x: Vec<f64>,
    pub xhat: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EnvelopeSample {
    pub t: f64,
    /// `‖L̂_⟨n⟩ x(t)‖`.
    pub xr_norm: f64,
}

/// One broadcast of one agent.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EventRecord {
    pub step: usize,
    pub t: f64,
    /// `‖X̂_i‖` right after the broadcast.
    pub xhat_norm: f64,
    /// `max ‖A x̂_i + B_i u_i‖` until the next broadcast (or the end).
    pub f_bar: f64,
    /// `min ‖X̂_i‖` over the same interval; neighbours' broadcasts can pull
    /// it below `xhat_norm`.
    pub xhat_min: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimResult {
    pub n: usize,
    pub m: usize,
    pub phi: f64,
    pub ts: f64,
    /// Steps to convergence (or `max_steps`).
    pub ti: usize,
    pub trigger_counts: Vec<usize>,
    pub trigger_times: Vec<Vec<f64>>,
    pub at: f64,
    pub st: f64,
    pub ju: f64,
    pub trajectories: Vec<Sample>,
    pub envelope_trace: Vec<EnvelopeSample>,
    pub events: Vec<Vec<EventRecord>>,
    /// Smallest gap between consecutive broadcasts, seconds; `None` with
    /// fewer than two broadcasts.
    pub min_interevent: Vec<Option<f64>>,
    /// Inter-event bound with `‖X̂_i(t_k)‖` ([`check_zeno`]).
    pub zeno_ok: bool,
    /// Inter-event bound with the interval minimum of `‖X̂_i‖`.
    pub zeno_interval_ok: bool,
    pub converged: bool,
}

/// The summary written to `metrics.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(rename = "TI")]
    pub ti: usize,
    #[serde(rename = "AT")]
    pub at: f64,
    #[serde(rename = "ST")]
    pub st: f64,
    #[serde(rename = "Ju")]
    pub ju: f64,
    pub converged: bool,
    pub trigger_counts: Vec<usize>,
    pub min_interevent: Vec<Option<f64>>,
    pub zeno_ok: bool,
    pub zeno_interval_ok: bool,
}

impl SimResult {
    pub fn metrics(&self) -> Metrics {
        Metrics {
            ti: self.ti,
            at: self.at,
            st: self.st,
            ju: self.ju,
            converged: self.converged,
            trigger_counts: self.trigger_counts.clone(),
            min_interevent: self.min_interevent.clone(),
            zeno_ok: self.zeno_ok,
            zeno_interval_ok: self.zeno_interval_ok,
        }
    }

    /// Columns `t, agent, x1..xn, u1..um`; agents numbered from 1.
    pub fn write_trajectories_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string(), "agent".to_string()];
        header.extend((1..=self.n).map(|k| format!("x{k}")));
        header.extend((1..=self.m).map(|k| format!("u{k}")));
        w.write_record(&header)?;
        for s in &self.trajectories {
            for i in 0..self.trigger_counts.len() {
                let mut rec = vec![s.t.to_string(), (i + 1).to_string()];
                rec.extend(s.x[i * self.n..(i + 1) * self.n].iter().map(f64::to_string));
                rec.extend(s.u[i * self.m..(i + 1) * self.m].iter().map(f64::to_string));
                w.write_record(&rec)?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Columns `agent, t`, one row per broadcast, agents numbered from 1.
    pub fn write_triggers_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["agent", "t"])?;
        for (i, times) in self.trigger_times.iter().enumerate() {
            for t in times {
                w.write_record([(i + 1).to_string(), t.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_metrics_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.metrics())?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Dense copies of everything the inner loop touches.
struct Loop<'a> {
    agents: usize,
    n: usize,
    m: usize,
    a: Vec<f64>,
    b: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    l: Vec<f64>,
    unc: &'a UncertaintyModel,
}

impl Loop<'_> {
    fn disagreement(&self, xhat: &[f64], out: &mut [f64]) {
        let (na, n) = (self.agents, self.n);
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..na {
            for j in 0..na {
                let lij = self.l[i * na + j];
                if lij != 0.0 {
                    for c in 0..n {
                        out[i * n + c] += lij * xhat[j * n + c];
                    }
                }
            }
        }
    }

    fn controls(&self, t: f64, xd: &[f64], u: &mut [f64]) {
        let (n, m) = (self.n, self.m);
        let mut kt = vec![0.0; m * n];
        for i in 0..self.agents {
            kt.copy_from_slice(&self.k[i]);
            self.unc.perturb(i, t, m, n, &mut kt);
            let xi = &xd[i * n..(i + 1) * n];
            for r in 0..m {
                u[i * m + r] = (0..n).map(|c| kt[r * n + c] * xi[c]).sum();
            }
        }
    }

    /// `A z_i + B_i u_i` for every agent.
    fn flow(&self, z: &[f64], u: &[f64], out: &mut [f64]) {
        let (n, m) = (self.n, self.m);
        for i in 0..self.agents {
            let zi = &z[i * n..(i + 1) * n];
            let ui = &u[i * m..(i + 1) * m];
            for r in 0..n {
                let mut v = 0.0;
                for c in 0..n {
                    v += self.a[r * n + c] * zi[c];
                }
                for c in 0..m {
                    v += self.b[i][r * m + c] * ui[c];
                }
                out[i * n + r] = v;
            }
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn xr_norm(bundle: &LaplacianBundle, x: &[f64]) -> Result<f64> {
    Ok(norm(&bundle.reduced_state(x)?))
}

pub fn run(plant: &Plant, bundle: &LaplacianBundle, gains: &[Mat], cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    plant.validate()?;
    let (agents, n, m) = (plant.n_agents(), plant.n(), plant.m());
    if agents < 2 {
        return Err(Error::Config("need at least two agents".into()));
    }
    if bundle.n_agents() != agents || bundle.n != n {
        return Err(Error::dim(
            "etsim::run",
            format!("bundle is for {} agents of size {}, plant has {agents} of size {n}", bundle.n_agents(), bundle.n),
        ));
    }
    if gains.len() != agents || gains.iter().any(|k| k.shape() != (m, n)) {
        return Err(Error::dim("etsim::run", format!("expected {agents} gains of shape {m}x{n}")));
    }
    if cfg.initial_states.len() != agents * n {
        return Err(Error::dim(
            "etsim::run",
            format!("initial_states has {} entries, expected {}", cfg.initial_states.len(), agents * n),
        ));
    }
    cfg.uncertainty.validate(agents, m, n)?;

    let sys = Loop {
        agents,
        n,
        m,
        a: plant.a.data().to_vec(),
        b: plant.b.iter().map(|b| b.data().to_vec()).collect(),
        k: gains.iter().map(|k| k.data().to_vec()).collect(),
        l: bundle.l.data().to_vec(),
        unc: &cfg.uncertainty,
    };
    let ts = cfg.ts;
    let settled = |xd: &[f64]| (0..agents).all(|i| cfg.settle.settled(norm(&xd[i * n..(i + 1) * n]), cfg.delta_c));

    let mut x = cfg.initial_states.clone();
    let mut xhat = x.clone();
    let mut xhat_seen = x.clone();
    let mut xd = vec![0.0; agents * n];
    sys.disagreement(&xhat, &mut xd);

    let mut trigger_times: Vec<Vec<f64>> = vec![vec![0.0]; agents];
    let mut events: Vec<Vec<EventRecord>> = (0..agents)
        .map(|i| {
            let xn = norm(&xd[i * n..(i + 1) * n]);
            vec![EventRecord {
                step: 0,
                t: 0.0,
                xhat_norm: xn,
                f_bar: 0.0,
                xhat_min: xn,
            }]
        })
        .collect();

    let mut u = vec![0.0; agents * m];
    let mut f = vec![0.0; agents * n];
    let mut trajectories = Vec::new();
    let mut envelope_trace = Vec::new();
    let mut ju = 0.0;
    let mut k = 0usize;
    let mut converged = settled(&xd);

    // RK4 scratch.
    let mut k1 = vec![0.0; agents * n];
    let mut k2 = vec![0.0; agents * n];
    let mut k3 = vec![0.0; agents * n];
    let mut k4 = vec![0.0; agents * n];
    let mut stage = vec![0.0; agents * n];
    let mut us = vec![0.0; agents * m];

    loop {
        let t = k as f64 * ts;
        sys.controls(t, &xd, &mut u);
        if k % cfg.decimation == 0 || converged || k == cfg.max_steps {
            trajectories.push(Sample {
                step: k,
                t,
                x: x.clone(),
                xhat: xhat_seen.clone(),
                u: u.clone(),
            });
            envelope_trace.push(EnvelopeSample { t, xr_norm: xr_norm(bundle, &x)? });
        }
        if converged || k == cfg.max_steps {
            break;
        }

        ju += ts * u.iter().map(|v| v * v).sum::<f64>();
        sys.flow(&xhat, &u, &mut f);
        for i in 0..agents {
            let fi = norm(&f[i * n..(i + 1) * n]);
            let last = events[i].last_mut().expect("initial broadcast recorded");
            last.f_bar = last.f_bar.max(fi);
            last.xhat_min = last.xhat_min.min(norm(&xd[i * n..(i + 1) * n]));
        }

        match cfg.integrator {
            Integrator::Euler => {
                sys.flow(&x, &u, &mut k1);
                x.iter_mut().zip(&k1).for_each(|(xv, d)| *xv += ts * d);
            }
            Integrator::Rk4 => {
                sys.flow(&x, &u, &mut k1);
                sys.controls(t + 0.5 * ts, &xd, &mut us);
                for (s, (xv, d)) in stage.iter_mut().zip(x.iter().zip(&k1)) {
                    *s = xv + 0.5 * ts * d;
                }
                sys.flow(&stage, &us, &mut k2);
                for (s, (xv, d)) in stage.iter_mut().zip(x.iter().zip(&k2)) {
                    *s = xv + 0.5 * ts * d;
                }
                sys.flow(&stage, &us, &mut k3);
                sys.controls(t + ts, &xd, &mut us);
                for (s, (xv, d)) in stage.iter_mut().zip(x.iter().zip(&k3)) {
                    *s = xv + ts * d;
                }
                sys.flow(&stage, &us, &mut k4);
                for (i, xv) in x.iter_mut().enumerate() {
                    *xv += ts / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
        k += 1;
        if x.iter().any(|v| !v.is_finite() || v.abs() > BLOWUP) {
            return Err(Error::Diverged { step: k });
        }

        xhat_seen.copy_from_slice(&xhat);
        if settled(&xd) {
            converged = true;
            continue;
        }

        let fired: Vec<usize> = (0..agents)
            .filter(|&i| {
                let e: Vec<f64> = (0..n).map(|c| xhat[i * n + c] - x[i * n + c]).collect();
                norm(&e) >= cfg.phi * norm(&xd[i * n..(i + 1) * n])
            })
            .collect();
        if fired.is_empty() {
            continue;
        }
        for &i in &fired {
            xhat[i * n..(i + 1) * n].copy_from_slice(&x[i * n..(i + 1) * n]);
        }
        sys.disagreement(&xhat, &mut xd);
        let tk = k as f64 * ts;
        for &i in &fired {
            trigger_times[i].push(tk);
            let xn = norm(&xd[i * n..(i + 1) * n]);
            events[i].push(EventRecord {
                step: k,
                t: tk,
                xhat_norm: xn,
                f_bar: 0.0,
                xhat_min: xn,
            });
        }
    }

    let trigger_counts: Vec<usize> = trigger_times.iter().map(Vec::len).collect();
    let at = trigger_counts.iter().sum::<usize>() as f64 / agents as f64;
    let st = if k > 0 { (1.0 - at / k as f64) * 100.0 } else { 0.0 };
    let min_interevent = events
        .iter()
        .map(|ev| {
            ev.windows(2)
                .map(|w| (w[1].step - w[0].step) as f64 * ts)
                .min_by(f64::total_cmp)
        })
        .collect();

    let mut result = SimResult {
        n,
        m,
        phi: cfg.phi,
        ts,
        ti: k,
        trigger_counts,
        trigger_times,
        at,
        st,
        ju,
        trajectories,
        envelope_trace,
        events,
        min_interevent,
        zeno_ok: false,
        zeno_interval_ok: false,
        converged,
    };
    result.zeno_ok = check_zeno(&result, plant, cfg).0;
    result.zeno_interval_ok = check_zeno_with(&result, plant, cfg, ZenoReference::IntervalMin).0;
    Ok(result)
}

/// `‖x_r(t)‖ ≤ (1 + η)·c·e^{−ζt}‖x_r(0)‖` at every stored sample; returns
/// the verdict and the largest ratio to the un-slacked bound.
pub fn check_envelope(result: &SimResult, zeta: f64, c: f64) -> (bool, f64) {
    let Some(first) = result.envelope_trace.first() else {
        return (true, 0.0);
    };
    let x0 = first.xr_norm;
    if x0 == 0.0 {
        let moved = result.envelope_trace.iter().any(|s| s.xr_norm > 0.0);
        return (!moved, if moved { f64::INFINITY } else { 0.0 });
    }
    let worst = result
        .envelope_trace
        .iter()
        .map(|s| s.xr_norm / (c * (-zeta * s.t).exp() * x0))
        .fold(0.0, f64::max);
    (worst <= 1.0 + ENVELOPE_SLACK, worst)
}

/// A consecutive pair of broadcasts closer than the inter-event lower bound
/// allows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZenoViolation {
    pub agent: usize,
    /// Index of the earlier broadcast of the pair.
    pub event: usize,
    pub gap: f64,
    pub bound: f64,
}

/// Which `‖X̂_i‖` enters the inter-event lower bound.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZenoReference {
    /// `‖X̂_i(t_k)‖` right after the agent's own broadcast, as the bound is
    /// usually stated. Assumes `X̂_i` does not move between the agent's own
    /// events, which neighbours' broadcasts break.
    #[default]
    AtEvent,
    /// `min ‖X̂_i‖` over `[t_k, t_{k+1})`; holds whatever the neighbours do.
    IntervalMin,
}

/// Checks every inter-event gap that starts while the agent is unsettled
/// against `zeno_lower_bound(φ, ‖A‖_F, ‖X̂_i(t_k)‖, F̄ᵏ_i) − T_s`.
pub fn check_zeno(result: &SimResult, plant: &Plant, cfg: &SimConfig) -> (bool, Vec<ZenoViolation>) {
    check_zeno_with(result, plant, cfg, ZenoReference::AtEvent)
}

pub fn check_zeno_with(
    result: &SimResult,
    plant: &Plant,
    cfg: &SimConfig,
    reference: ZenoReference,
) -> (bool, Vec<ZenoViolation>) {
    let a_norm = plant.a.frobenius_norm();
    let mut violations = Vec::new();
    for (agent, ev) in result.events.iter().enumerate() {
        for (idx, w) in ev.windows(2).enumerate() {
            if cfg.settle.settled(w[0].xhat_norm, cfg.delta_c) {
                continue;
            }
            let xhat = match reference {
                ZenoReference::AtEvent => w[0].xhat_norm,
                ZenoReference::IntervalMin => w[0].xhat_min,
            };
            let bound = zeno_lower_bound(result.phi, a_norm, xhat, w[0].f_bar);
            let gap = (w[1].step - w[0].step) as f64 * result.ts;
            if gap < bound - result.ts {
                violations.push(ZenoViolation { agent, event: idx, gap, bound });
            }
        }
    }
    (violations.is_empty(), violations)
}

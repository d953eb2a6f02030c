//! Experiment plumbing: configuration, the design-then-simulate pipeline,
//! parameter sweeps, Monte-Carlo studies and report files.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::etsim::{
    self, check_envelope, default_initial_states, Integrator, SettleMetric, SimConfig, SimResult,
    UncertaintyModel,
};
use crate::lmi::SolverOptions;
use crate::matkit::Mat;
use crate::synthesis::{
    assemble_lmis, check_certificates, synthesize, Certificates, Plant, SynthesisResult, SynthesisSpec,
};
use crate::topology::{admissible_rows, build_laplacian, has_spanning_tree, reduce, Digraph, LaplacianBundle};

// ---------------------------------------------------------------- config

/// Either explicit `A` and per-agent `B_i`, or `inputs = [b_1, …]` for
/// second-order agents `B_i = [0, b_i]ᵀ`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub a: Option<Mat>,
    pub b: Option<Vec<Mat>>,
    pub inputs: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomGraphConfig {
    pub agents: usize,
    #[serde(default = "default_edge_probability")]
    pub edge_probability: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_edge_probability() -> f64 {
    0.25
}

/// Exactly one source: `adjacency`, `laplacian`, `file` or `random`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub adjacency: Option<Mat>,
    pub laplacian: Option<Mat>,
    /// Graph file (dense matrix or `edges N` list), relative to the config.
    pub file: Option<PathBuf>,
    pub random: Option<RandomGraphConfig>,
    /// Laplacian row to drop, 1-based; defaults to the largest admissible.
    pub dropped_row: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub zeta: f64,
    pub delta: f64,
    #[serde(default)]
    pub solver: SolverOptions,
}

/// Simulation settings; unset fields take the simulator defaults, `phi`
/// the synthesized threshold and `uncertainty` a sinusoid at the design δ.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub phi: Option<f64>,
    pub ts: Option<f64>,
    pub delta_c: Option<f64>,
    pub max_steps: Option<usize>,
    pub settle: Option<SettleMetric>,
    pub integrator: Option<Integrator>,
    pub uncertainty: Option<UncertaintyModel>,
    pub initial_states: Option<Vec<f64>>,
    pub decimation: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Phi,
    Delta,
    Zeta,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Phi => "phi",
            Axis::Delta => "delta",
            Axis::Zeta => "zeta",
        }
    }

    /// Report file for a sweep along this axis.
    pub fn table_file(self) -> &'static str {
        match self {
            Axis::Phi => "table1.csv",
            Axis::Delta => "table2.csv",
            Axis::Zeta => "table3.csv",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phi" => Ok(Axis::Phi),
            "delta" => Ok(Axis::Delta),
            "zeta" => Ok(Axis::Zeta),
            _ => Err(Error::Config(format!("unknown sweep axis {s:?} (phi, delta, zeta)"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: Axis,
    pub grid: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    #[serde(default = "default_mc_agents")]
    pub agents: Vec<usize>,
    #[serde(default = "default_mc_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// ζ values, swept at `delta_fixed`.
    #[serde(default = "default_mc_zeta_grid")]
    pub zeta_grid: Vec<f64>,
    /// δ values, swept at `zeta_fixed`.
    #[serde(default = "default_mc_delta_grid")]
    pub delta_grid: Vec<f64>,
    #[serde(default = "default_mc_zeta_fixed")]
    pub zeta_fixed: f64,
    #[serde(default = "default_mc_delta_fixed")]
    pub delta_fixed: f64,
    #[serde(default = "default_edge_probability")]
    pub edge_probability: f64,
    /// `m_i = 1 + inertia_sd·𝒩(0, 1)`, clamped below at `inertia_min`.
    #[serde(default = "default_inertia_sd")]
    pub inertia_sd: f64,
    #[serde(default = "default_inertia_min")]
    pub inertia_min: f64,
    /// Newton budget per solver phase; the random programs are larger than
    /// the deterministic example.
    #[serde(default = "default_mc_max_newton")]
    pub max_newton: usize,
    #[serde(default = "default_mc_max_steps")]
    pub max_steps: usize,
}

fn default_mc_agents() -> Vec<usize> {
    vec![8, 12, 16]
}
fn default_mc_trials() -> usize {
    20
}
fn default_mc_zeta_grid() -> Vec<f64> {
    vec![0.2, 0.3, 0.4, 0.5]
}
fn default_mc_delta_grid() -> Vec<f64> {
    vec![0.01, 0.02, 0.03, 0.04, 0.05]
}
fn default_mc_zeta_fixed() -> f64 {
    0.4
}
fn default_mc_delta_fixed() -> f64 {
    0.01
}
fn default_inertia_sd() -> f64 {
    0.1
}
fn default_inertia_min() -> f64 {
    0.2
}
fn default_mc_max_newton() -> usize {
    1000
}
fn default_mc_max_steps() -> usize {
    300_000
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            agents: default_mc_agents(),
            trials: default_mc_trials(),
            seed: 0,
            zeta_grid: default_mc_zeta_grid(),
            delta_grid: default_mc_delta_grid(),
            zeta_fixed: default_mc_zeta_fixed(),
            delta_fixed: default_mc_delta_fixed(),
            edge_probability: default_edge_probability(),
            inertia_sd: default_inertia_sd(),
            inertia_min: default_inertia_min(),
            max_newton: default_mc_max_newton(),
            max_steps: default_mc_max_steps(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub plant: PlantConfig,
    #[serde(default)]
    pub graph: GraphConfig,
    pub design: DesignConfig,
    #[serde(default)]
    pub sim: SimSection,
    pub sweep: Option<SweepConfig>,
    pub montecarlo: Option<McConfig>,
    pub output: Option<PathBuf>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(self.output.as_deref().unwrap_or(Path::new("out")))
    }

    pub fn validate(&self) -> Result<()> {
        self.spec().validate()?;
        let sources = [
            self.graph.adjacency.is_some(),
            self.graph.laplacian.is_some(),
            self.graph.file.is_some(),
            self.graph.random.is_some(),
        ];
        if sources.iter().filter(|&&s| s).count() != 1 {
            return Err(Error::Config(
                "graph needs exactly one of adjacency, laplacian, file, random".into(),
            ));
        }
        if let Some(f) = &self.graph.file {
            let p = self.resolve(f);
            if !p.is_file() {
                return Err(Error::Config(format!("graph file {} does not exist", p.display())));
            }
        }
        if self.plant.b.is_some() == self.plant.inputs.is_some() {
            return Err(Error::Config("plant needs exactly one of b, inputs".into()));
        }
        if let Some(s) = &self.sweep {
            if s.grid.is_empty() {
                return Err(Error::Config("sweep grid is empty".into()));
            }
        }
        if let Some(mc) = &self.montecarlo {
            mc.validate()?;
        }
        Ok(())
    }

    pub fn spec(&self) -> SynthesisSpec {
        SynthesisSpec {
            zeta: self.design.zeta,
            delta: self.design.delta,
            solver: self.design.solver.clone(),
        }
    }

    pub fn build_plant(&self) -> Result<Plant> {
        if let Some(inputs) = &self.plant.inputs {
            let p = Plant::double_integrator(inputs)?;
            if let Some(a) = &self.plant.a {
                return Plant::new(a.clone(), p.b);
            }
            return Ok(p);
        }
        let b = self.plant.b.clone().unwrap_or_default();
        let a = match &self.plant.a {
            Some(a) => a.clone(),
            None => Mat::from_rows(&[[0.0, 1.0], [0.0, 0.0]])?,
        };
        Plant::new(a, b)
    }

    pub fn build_graph(&self) -> Result<Digraph> {
        let g = &self.graph;
        if let Some(a) = &g.adjacency {
            Digraph::from_adjacency(a.clone())
        } else if let Some(l) = &g.laplacian {
            Digraph::from_laplacian(l)
        } else if let Some(f) = &g.file {
            Digraph::from_file(&self.resolve(f))
        } else if let Some(r) = &g.random {
            let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
            Digraph::random_rooted(r.agents, r.edge_probability, &mut rng)
        } else {
            Err(Error::Config("no graph source".into()))
        }
    }

    /// The simulator settings for a run at threshold `phi` and gain
    /// uncertainty bound `delta`.
    pub fn sim_config(&self, phi: f64, delta: f64, agents: usize, n: usize) -> SimConfig {
        let s = &self.sim;
        let mut c = SimConfig::new(
            phi,
            s.initial_states
                .clone()
                .unwrap_or_else(|| default_initial_states(agents, n)),
        );
        if let Some(v) = s.ts {
            c.ts = v;
        }
        if let Some(v) = s.delta_c {
            c.delta_c = v;
        }
        if let Some(v) = s.max_steps {
            c.max_steps = v;
        }
        if let Some(v) = s.settle {
            c.settle = v;
        }
        if let Some(v) = s.integrator {
            c.integrator = v;
        }
        if let Some(v) = s.decimation {
            c.decimation = v;
        }
        if let Some(v) = s.seed {
            c.seed = v;
        }
        c.uncertainty = s
            .uncertainty
            .clone()
            .unwrap_or(UncertaintyModel::Sinusoid { delta });
        c
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("montecarlo trials must be >= 1".into()));
        }
        if self.agents.is_empty() || self.agents.iter().any(|&n| n < 2) {
            return Err(Error::Config("montecarlo agents must be non-empty, each >= 2".into()));
        }
        if self.zeta_grid.is_empty() || self.delta_grid.is_empty() {
            return Err(Error::Config("montecarlo grids must be non-empty".into()));
        }
        if !(0.0..=1.0).contains(&self.edge_probability) {
            return Err(Error::Config("edge_probability must lie in [0, 1]".into()));
        }
        if !(self.inertia_min > 0.0) {
            return Err(Error::Config("inertia_min must be > 0".into()));
        }
        Ok(())
    }
}

// -------------------------------------------------------------- pipeline

/// The largest row whose removal keeps the reduced Laplacian full rank.
pub fn default_dropped_row(l: &Mat) -> Result<usize> {
    admissible_rows(l)
        .last()
        .copied()
        .ok_or_else(|| Error::NoSpanningTree("no admissible row to drop".into()))
}

/// Checks the spanning tree and reduces `L` (row 0-based, or the default).
pub fn build_bundle(g: &Digraph, n: usize, dropped_row: Option<usize>) -> Result<LaplacianBundle> {
    if !has_spanning_tree(g)? {
        return Err(Error::NoSpanningTree(
            "the communication graph has no directed spanning tree".into(),
        ));
    }
    let l = build_laplacian(g);
    let row = match dropped_row {
        Some(r) => r,
        None => default_dropped_row(&l)?,
    };
    reduce(&l, row, n)
}

/// The design half of the pipeline.
#[derive(Clone, Debug)]
pub struct Design {
    pub plant: Plant,
    pub bundle: LaplacianBundle,
    pub spec: SynthesisSpec,
    pub synthesis: SynthesisResult,
}

impl Design {
    pub fn certificates(&self) -> Result<Certificates> {
        check_certificates(&self.plant, &self.bundle, &self.spec, &self.synthesis)
    }
}

#[derive(Clone, Debug)]
pub struct Pipeline {
    pub design: Design,
    pub sim_config: SimConfig,
    pub sim: SimResult,
    /// `(ok, worst ratio)` of the exponential envelope check.
    pub envelope: (bool, f64),
}

/// Drop a row, reduce, assemble and solve the LMIs. Infeasibility is
/// reported with the `(ζ, δ)` pair; no automatic retry.
pub fn run_design(cfg: &ExperimentConfig) -> Result<Design> {
    let plant = cfg.build_plant()?;
    let graph = cfg.build_graph()?;
    if graph.n_agents() != plant.n_agents() {
        return Err(Error::Config(format!(
            "graph has {} agents, plant has {}",
            graph.n_agents(),
            plant.n_agents()
        )));
    }
    let row = match cfg.graph.dropped_row {
        Some(0) => return Err(Error::Config("dropped_row is 1-based".into())),
        Some(r) => Some(r - 1),
        None => None,
    };
    let bundle = build_bundle(&graph, plant.n(), row)?;
    let spec = cfg.spec();
    let synthesis = synthesize(&plant, &bundle, &spec)?;
    Ok(Design {
        plant,
        bundle,
        spec,
        synthesis,
    })
}

fn simulate_design(cfg: &ExperimentConfig, design: &Design, phi: f64, delta: f64) -> Result<(SimConfig, SimResult)> {
    let sc = cfg.sim_config(phi, delta, design.plant.n_agents(), design.plant.n());
    let r = etsim::run(&design.plant, &design.bundle, &design.synthesis.k, &sc)?;
    Ok((sc, r))
}

fn check_phi(phi: f64, design: &Design) -> Result<()> {
    let top = design.synthesis.phi;
    if !(phi >= 0.0) || phi > top * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "phi = {phi} is outside [0, {top}] (the synthesized threshold)"
        )));
    }
    Ok(())
}

/// Design, then simulate at `sim.phi` (default: the synthesized φ).
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<Pipeline> {
    let design = run_design(cfg)?;
    let phi = cfg.sim.phi.unwrap_or(design.synthesis.phi);
    check_phi(phi, &design)?;
    let (sim_config, sim) = simulate_design(cfg, &design, phi, design.spec.delta)?;
    let envelope = check_envelope(&sim, design.spec.zeta, design.synthesis.c);
    Ok(Pipeline {
        design,
        sim_config,
        sim,
        envelope,
    })
}

// ---------------------------------------------------------------- sweeps

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowStatus {
    Ok,
    /// The simulation hit `max_steps` first.
    NotConverged,
    Infeasible,
    /// The solver stopped without an optimal point.
    SolverFailed,
    Diverged,
}

impl RowStatus {
    pub fn name(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::NotConverged => "not-converged",
            RowStatus::Infeasible => "infeasible",
            RowStatus::SolverFailed => "solver-failed",
            RowStatus::Diverged => "diverged",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Row {
    /// The swept parameter's value.
    pub value: f64,
    pub phi: Option<f64>,
    pub ti: Option<usize>,
    pub at: Option<f64>,
    pub st: Option<f64>,
    pub ju: Option<f64>,
    pub status: RowStatus,
}

impl Row {
    fn failed(value: f64, status: RowStatus) -> Self {
        Row {
            value,
            phi: None,
            ti: None,
            at: None,
            st: None,
            ju: None,
            status,
        }
    }

    fn from_sim(value: f64, phi: f64, r: &SimResult) -> Self {
        Row {
            value,
            phi: Some(phi),
            ti: Some(r.ti),
            at: Some(r.at),
            st: Some(r.st),
            ju: Some(r.ju),
            status: if r.converged { RowStatus::Ok } else { RowStatus::NotConverged },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Table {
    pub axis: Axis,
    pub rows: Vec<Row>,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Table {
    /// Columns (`phi, TI, AT, ST, Ju` for the
    /// threshold sweep, the swept value then `phi, TI, AT, ST, Ju`
    /// otherwise) plus a trailing `status`.
    pub fn header(&self) -> Vec<&'static str> {
        match self.axis {
            Axis::Phi => vec!["phi", "TI", "AT", "ST", "Ju", "status"],
            a => vec![a.name(), "phi", "TI", "AT", "ST", "Ju", "status"],
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.header())?;
        for r in &self.rows {
            let mut rec = vec![r.value.to_string()];
            if self.axis != Axis::Phi {
                rec.push(opt(r.phi));
            }
            rec.extend([opt(r.ti), opt(r.at), opt(r.st), opt(r.ju), r.status.name().to_string()]);
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Column `col` of the successful rows.
    pub fn column(&self, col: fn(&Row) -> Option<f64>) -> Vec<f64> {
        self.rows.iter().filter_map(col).collect()
    }
}

/// Re-simulates with fixed gains at each threshold of `grid`.
pub fn sweep_phi(cfg: &ExperimentConfig, design: &Design, grid: &[f64]) -> Result<Table> {
    if grid.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    for &phi in grid {
        check_phi(phi, design)?;
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &phi in grid {
        rows.push(match simulate_design(cfg, design, phi, design.spec.delta) {
            Ok((_, r)) => Row::from_sim(phi, phi, &r),
            Err(Error::Diverged { .. }) => Row::failed(phi, RowStatus::Diverged),
            Err(e) => return Err(e),
        });
    }
    Ok(Table { axis: Axis::Phi, rows })
}

fn resynthesized_row(cfg: &ExperimentConfig, value: f64) -> Result<Row> {
    let design = match run_design(cfg) {
        Ok(d) => d,
        Err(Error::Infeasible { .. }) => return Ok(Row::failed(value, RowStatus::Infeasible)),
        Err(Error::Solver(_)) => return Ok(Row::failed(value, RowStatus::SolverFailed)),
        Err(e) => return Err(e),
    };
    let phi = design.synthesis.phi;
    match simulate_design(cfg, &design, phi, design.spec.delta) {
        Ok((_, r)) => Ok(Row::from_sim(value, phi, &r)),
        Err(Error::Diverged { .. }) => Ok(Row {
            phi: Some(phi),
            ..Row::failed(value, RowStatus::Diverged)
        }),
        Err(e) => Err(e),
    }
}

/// Full re-design and simulation per δ at the configured ζ. The gain
/// uncertainty injected in each run follows the row's δ.
pub fn sweep_delta(cfg: &ExperimentConfig, grid: &[f64]) -> Result<Table> {
    sweep_design(cfg, grid, Axis::Delta)
}

/// Full re-design and simulation per ζ at the configured δ.
pub fn sweep_zeta(cfg: &ExperimentConfig, grid: &[f64]) -> Result<Table> {
    sweep_design(cfg, grid, Axis::Zeta)
}

fn sweep_design(cfg: &ExperimentConfig, grid: &[f64], axis: Axis) -> Result<Table> {
    if grid.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &v in grid {
        let mut c = cfg.clone();
        match axis {
            Axis::Delta => c.design.delta = v,
            Axis::Zeta => c.design.zeta = v,
            Axis::Phi => unreachable!("threshold sweeps keep the design fixed"),
        }
        c.spec().validate()?;
        rows.push(resynthesized_row(&c, v)?);
    }
    Ok(Table { axis, rows })
}

/// Runs the sweep the config asks for, designing first when needed.
pub fn run_sweep(cfg: &ExperimentConfig, axis: Axis, grid: &[f64]) -> Result<(Option<Design>, Table)> {
    match axis {
        Axis::Phi => {
            let d = run_design(cfg)?;
            let t = sweep_phi(cfg, &d, grid)?;
            Ok((Some(d), t))
        }
        Axis::Delta => Ok((None, sweep_delta(cfg, grid)?)),
        Axis::Zeta => Ok((None, sweep_zeta(cfg, grid)?)),
    }
}

// ------------------------------------------------------------ Monte-Carlo

/// Spearman rank correlation (average ranks for ties); 0 when either
/// side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman needs paired samples");
    let rx = ranks(x);
    let ry = ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// One random network and inertia draw.
#[derive(Clone, Debug)]
pub struct McInstance {
    pub graph: Digraph,
    pub inertias: Vec<f64>,
    pub clamped: bool,
}

/// Deterministic per-(N, trial) stream of the master seed.
pub fn mc_rng(master: u64, agents: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((agents as u64) << 32) | trial as u64);
    rng
}

pub fn mc_instance(mc: &McConfig, agents: usize, trial: usize) -> Result<McInstance> {
    let mut rng = mc_rng(mc.seed, agents, trial);
    let graph = Digraph::random_rooted(agents, mc.edge_probability, &mut rng)?;
    let mut clamped = false;
    let inertias = (0..agents)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            let m = 1.0 + mc.inertia_sd * z;
            if m < mc.inertia_min {
                clamped = true;
                mc.inertia_min
            } else {
                m
            }
        })
        .collect();
    Ok(McInstance {
        graph,
        inertias,
        clamped,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McOutcome {
    pub agents: usize,
    pub trial: usize,
    pub zeta: f64,
    pub delta: f64,
    pub status: RowStatus,
    pub phi: Option<f64>,
    pub verified: Option<bool>,
    pub ti: Option<usize>,
    pub at: Option<f64>,
    pub st: Option<f64>,
    pub ju: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McCell {
    pub agents: usize,
    pub axis: Axis,
    pub value: f64,
    pub zeta: f64,
    pub delta: f64,
    pub trials: usize,
    /// Trials whose LMIs were solved.
    pub feasible: usize,
    /// Feasible trials whose simulation converged; the means run over these.
    pub succeeded: usize,
    pub feasibility_rate: f64,
    pub mean_ti: Option<f64>,
    pub mean_at: Option<f64>,
    pub mean_st: Option<f64>,
    pub mean_ju: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McTrend {
    pub agents: usize,
    pub axis: Axis,
    /// `"TI"` along ζ, `"Ju"` along δ.
    pub metric: String,
    pub rho: f64,
    /// Sign the trend must have: −1 (decreasing) or +1 (increasing).
    pub expected_sign: i32,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McSummary {
    pub seed: u64,
    pub cells: Vec<McCell>,
    pub trends: Vec<McTrend>,
    pub outcomes: Vec<McOutcome>,
    /// `(agents, trial)` pairs where an inertia hit the clamp.
    pub clamped_trials: Vec<(usize, usize)>,
}

/// Smallest |ρ| the trend assertions accept.
pub const MC_MIN_RHO: f64 = 0.8;

fn mc_point(
    cfg: &ExperimentConfig,
    mc: &McConfig,
    inst: &McInstance,
    bundle: &LaplacianBundle,
    agents: usize,
    trial: usize,
    zeta: f64,
    delta: f64,
) -> Result<McOutcome> {
    let mut out = McOutcome {
        agents,
        trial,
        zeta,
        delta,
        status: RowStatus::Ok,
        phi: None,
        verified: None,
        ti: None,
        at: None,
        st: None,
        ju: None,
    };
    let plant = Plant::double_integrator(&inst.inertias)?;
    let mut spec = cfg.spec();
    spec.zeta = zeta;
    spec.delta = delta;
    spec.solver.max_newton = mc.max_newton;
    let syn = match synthesize(&plant, bundle, &spec) {
        Ok(s) => s,
        Err(Error::Infeasible { .. }) => {
            out.status = RowStatus::Infeasible;
            return Ok(out);
        }
        Err(Error::Solver(_)) => {
            out.status = RowStatus::SolverFailed;
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    out.phi = Some(syn.phi);
    out.verified = Some(syn.verified);
    let mut sc = cfg.sim_config(syn.phi, delta, agents, plant.n());
    sc.initial_states = default_initial_states(agents, plant.n());
    sc.uncertainty = UncertaintyModel::Sinusoid { delta };
    sc.max_steps = mc.max_steps;
    sc.decimation = sc.decimation.max(100);
    match etsim::run(&plant, bundle, &syn.k, &sc) {
        Ok(r) => {
            out.status = if r.converged { RowStatus::Ok } else { RowStatus::NotConverged };
            out.ti = Some(r.ti);
            out.at = Some(r.at);
            out.st = Some(r.st);
            out.ju = Some(r.ju);
        }
        Err(Error::Diverged { .. }) => out.status = RowStatus::Diverged,
        Err(e) => return Err(e),
    }
    Ok(out)
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Random networks with a guaranteed spanning tree and random inertias:
/// per agent count and trial, one network and one inertia draw shared by
/// every grid point; a ζ sweep at `delta_fixed` and a δ sweep at
/// `zeta_fixed`. `progress` is called after each trial.
pub fn monte_carlo(cfg: &ExperimentConfig, progress: &mut dyn FnMut(usize, usize)) -> Result<McSummary> {
    let mc = cfg
        .montecarlo
        .clone()
        .ok_or_else(|| Error::Config("no [montecarlo] section".into()))?;
    mc.validate()?;
    let mut points: Vec<(Axis, f64, f64, f64)> = Vec::new();
    for &z in &mc.zeta_grid {
        points.push((Axis::Zeta, z, z, mc.delta_fixed));
    }
    for &d in &mc.delta_grid {
        points.push((Axis::Delta, d, mc.zeta_fixed, d));
    }

    let mut outcomes = Vec::new();
    let mut clamped_trials = Vec::new();
    for &agents in &mc.agents {
        for trial in 0..mc.trials {
            let inst = mc_instance(&mc, agents, trial)?;
            if inst.clamped {
                clamped_trials.push((agents, trial));
            }
            let l = build_laplacian(&inst.graph);
            let bundle = reduce(&l, default_dropped_row(&l)?, 2)?;
            // Grid points shared by both sweeps are solved once.
            let mut done: BTreeMap<(u64, u64), McOutcome> = BTreeMap::new();
            for &(_, _, z, d) in &points {
                let key = (z.to_bits(), d.to_bits());
                if !done.contains_key(&key) {
                    let o = mc_point(cfg, &mc, &inst, &bundle, agents, trial, z, d)?;
                    done.insert(key, o);
                }
            }
            outcomes.extend(done.into_values());
            progress(agents, trial);
        }
    }

    let mut cells = Vec::new();
    for &agents in &mc.agents {
        for &(axis, value, z, d) in &points {
            let mine: Vec<&McOutcome> = outcomes
                .iter()
                .filter(|o| o.agents == agents && o.zeta == z && o.delta == d)
                .collect();
            let ok: Vec<&&McOutcome> = mine.iter().filter(|o| o.status == RowStatus::Ok).collect();
            let feasible = mine
                .iter()
                .filter(|o| !matches!(o.status, RowStatus::Infeasible | RowStatus::SolverFailed))
                .count();
            let col = |f: fn(&McOutcome) -> Option<f64>| mean(&ok.iter().filter_map(|o| f(o)).collect::<Vec<_>>());
            cells.push(McCell {
                agents,
                axis,
                value,
                zeta: z,
                delta: d,
                trials: mine.len(),
                feasible,
                succeeded: ok.len(),
                feasibility_rate: feasible as f64 / mine.len() as f64,
                mean_ti: col(|o| o.ti.map(|v| v as f64)),
                mean_at: col(|o| o.at),
                mean_st: col(|o| o.st),
                mean_ju: col(|o| o.ju),
            });
        }
    }

    let mut trends = Vec::new();
    for &agents in &mc.agents {
        for (axis, metric, sign) in [(Axis::Zeta, "TI", -1), (Axis::Delta, "Ju", 1)] {
            let pts: Vec<(f64, f64)> = cells
                .iter()
                .filter(|c| c.agents == agents && c.axis == axis)
                .filter_map(|c| {
                    let m = if axis == Axis::Zeta { c.mean_ti } else { c.mean_ju };
                    m.map(|m| (c.value, m))
                })
                .collect();
            let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            let complete = xs.len() == if axis == Axis::Zeta { mc.zeta_grid.len() } else { mc.delta_grid.len() };
            let rho = if xs.len() >= 2 { spearman(&xs, &ys) } else { 0.0 };
            trends.push(McTrend {
                agents,
                axis,
                metric: metric.to_string(),
                rho,
                expected_sign: sign,
                ok: complete && rho * sign as f64 >= MC_MIN_RHO,
            });
        }
    }

    Ok(McSummary {
        seed: mc.seed,
        cells,
        trends,
        outcomes,
        clamped_trials,
    })
}

impl McSummary {
    /// One row per cell.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "N", "axis", "value", "zeta", "delta", "trials", "feasible", "succeeded", "TI", "AT", "ST", "Ju",
        ])?;
        for c in &self.cells {
            w.write_record([
                c.agents.to_string(),
                c.axis.to_string(),
                c.value.to_string(),
                c.zeta.to_string(),
                c.delta.to_string(),
                c.trials.to_string(),
                c.feasible.to_string(),
                c.succeeded.to_string(),
                opt(c.mean_ti),
                opt(c.mean_at),
                opt(c.mean_st),
                opt(c.mean_ju),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

// --------------------------------------------------------------- reports

/// Everything `verify` needs to re-check a design from scratch.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub plant: Plant,
    pub laplacian: Mat,
    /// 1-based.
    pub dropped_row: usize,
    pub spec: SynthesisSpec,
    pub result: SynthesisResult,
    pub certificates: Certificates,
}

impl SynthesisReport {
    pub fn new(d: &Design) -> Result<Self> {
        Ok(SynthesisReport {
            plant: d.plant.clone(),
            laplacian: d.bundle.l.clone(),
            dropped_row: d.bundle.dropped_row + 1,
            spec: d.spec.clone(),
            result: d.synthesis.clone(),
            certificates: d.certificates()?,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn bundle(&self) -> Result<LaplacianBundle> {
        if self.dropped_row == 0 {
            return Err(Error::Config("dropped_row is 1-based".into()));
        }
        reduce(&self.laplacian, self.dropped_row - 1, self.plant.n())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub seeds: BTreeMap<String, u64>,
    pub clamped_trials: Vec<(usize, usize)>,
    pub files: Vec<String>,
    pub created_unix: u64,
}

/// What one CLI invocation produced.
#[derive(Default)]
pub struct Report<'a> {
    pub command: &'a str,
    pub design: Option<&'a Design>,
    pub pipeline: Option<&'a Pipeline>,
    pub tables: Vec<&'a Table>,
    pub montecarlo: Option<&'a McSummary>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let canonical = serde_json::to_string(cfg)?;
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}

/// Writes the report files into `dir` (created if missing) and returns
/// their names.
pub fn emit_report(dir: &Path, cfg: &ExperimentConfig, report: &Report<'_>) -> Result<Vec<String>> {
    let design = report.design.or(report.pipeline.map(|p| &p.design));
    if design.is_none() && report.tables.is_empty() && report.montecarlo.is_none() {
        return Err(Error::Config("nothing to report".into()));
    }
    if report.tables.iter().any(|t| t.rows.is_empty()) {
        return Err(Error::Config("empty sweep table".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    let mut put = |name: &str| {
        files.push(name.to_string());
        dir.join(name)
    };

    if let Some(d) = design {
        write_json(&put("synthesis.json"), &SynthesisReport::new(d)?)?;
        let lmis = assemble_lmis(&d.plant, &d.bundle, &d.spec)?;
        lmis.write_text(&put("lmi.txt"))?;
    }
    if let Some(p) = report.pipeline {
        #[derive(Serialize)]
        struct Metrics {
            #[serde(flatten)]
            sim: etsim::Metrics,
            phi: f64,
            envelope_ok: bool,
            envelope_worst_ratio: f64,
            verified: bool,
            #[serde(skip_serializing_if = "Option::is_none")]
            phi_certified: Option<f64>,
            zeta: f64,
            delta: f64,
        }
        let m = Metrics {
            sim: p.sim.metrics(),
            phi: p.sim_config.phi,
            envelope_ok: p.envelope.0,
            envelope_worst_ratio: p.envelope.1,
            verified: p.design.synthesis.verified,
            phi_certified: p.design.synthesis.phi_certified,
            zeta: p.design.spec.zeta,
            delta: p.design.spec.delta,
        };
        write_json(&put("metrics.json"), &m)?;
        p.sim.write_trajectories_csv(&put("trajectories.csv"))?;
        p.sim.write_triggers_csv(&put("triggers.csv"))?;
    }
    for t in &report.tables {
        t.write_csv(&put(t.axis.table_file()))?;
    }
    if let Some(mc) = report.montecarlo {
        write_json(&put("montecarlo.json"), mc)?;
        mc.write_csv(&put("montecarlo.csv"))?;
    }

    let mut seeds = BTreeMap::new();
    if let Some(s) = report.pipeline.map(|p| p.sim_config.seed).or(cfg.sim.seed) {
        seeds.insert("sim".to_string(), s);
    }
    if let Some(r) = &cfg.graph.random {
        seeds.insert("graph".to_string(), r.seed);
    }
    if let Some(mc) = &cfg.montecarlo {
        seeds.insert("montecarlo".to_string(), mc.seed);
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: report.command.to_string(),
        config_sha256: config_hash(cfg)?,
        seeds,
        clamped_trials: report.montecarlo.map(|m| m.clamped_trials.clone()).unwrap_or_default(),
        files: files.clone(),
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    files.push("manifest.json".to_string());
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(files)
}

//! Python bindings: plants, graphs, designs, simulations and whole
//! experiment configs. Matrices cross the boundary as nested lists.
//! Agent and row indices are 1-based, matching the config files.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hetcons::etsim::{self, SimConfig, SimResult, UncertaintyModel};
use hetcons::lab::{self, Axis, ExperimentConfig, SynthesisReport};
use hetcons::synthesis::{synthesize as solve_design, Plant, SynthesisSpec};
use hetcons::topology::{build_laplacian, has_spanning_tree, Digraph};
use hetcons::{Error, Mat};

create_exception!(hetcons_py, HetconsError, PyException);
create_exception!(hetcons_py, InfeasibleError, HetconsError);
create_exception!(hetcons_py, DivergedError, HetconsError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Infeasible { .. } | Error::Solver(_) => InfeasibleError::new_err(e.to_string()),
        Error::Diverged { .. } => DivergedError::new_err(e.to_string()),
        _ => HetconsError::new_err(e.to_string()),
    }
}

fn mat(rows: &[Vec<f64>]) -> PyResult<Mat> {
    Mat::from_rows(rows).map_err(to_py)
}

#[pyclass(frozen, name = "Plant", module = "hetcons_py")]
struct PyPlant(Plant);

#[pymethods]
impl PyPlant {
    /// `a`: n×n; `b`: one n×m input matrix per agent.
    #[new]
    fn new(a: Vec<Vec<f64>>, b: Vec<Vec<Vec<f64>>>) -> PyResult<Self> {
        let b = b.iter().map(|m| mat(m)).collect::<PyResult<Vec<_>>>()?;
        Ok(PyPlant(Plant::new(mat(&a)?, b).map_err(to_py)?))
    }

    /// Double integrators with scalar input gains `b_i`.
    #[staticmethod]
    fn double_integrator(inputs: Vec<f64>) -> PyResult<Self> {
        Ok(PyPlant(Plant::double_integrator(&inputs).map_err(to_py)?))
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.0.m()
    }

    #[getter]
    fn agents(&self) -> usize {
        self.0.n_agents()
    }

    #[getter]
    fn a(&self) -> Vec<Vec<f64>> {
        self.0.a.to_rows()
    }

    #[getter]
    fn b(&self) -> Vec<Vec<Vec<f64>>> {
        self.0.b.iter().map(Mat::to_rows).collect()
    }

    fn __repr__(&self) -> String {
        format!("Plant(n={}, m={}, agents={})", self.0.n(), self.0.m(), self.0.n_agents())
    }
}

#[pyclass(frozen, name = "Graph", module = "hetcons_py")]
struct PyGraph(Digraph);

#[pymethods]
impl PyGraph {
    /// `a[i][j] > 0`: agent i receives from agent j.
    #[staticmethod]
    fn from_adjacency(a: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(PyGraph(Digraph::from_adjacency(mat(&a)?).map_err(to_py)?))
    }

    #[staticmethod]
    fn from_laplacian(l: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(PyGraph(Digraph::from_laplacian(&mat(&l)?).map_err(to_py)?))
    }

    /// Same text formats as graph files.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(PyGraph(Digraph::parse(text).map_err(to_py)?))
    }

    /// Random digraph guaranteed to contain a spanning tree.
    #[staticmethod]
    #[pyo3(signature = (agents, edge_probability = 0.25, seed = 0))]
    fn random(agents: usize, edge_probability: f64, seed: u64) -> PyResult<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(PyGraph(Digraph::random_rooted(agents, edge_probability, &mut rng).map_err(to_py)?))
    }

    #[getter]
    fn agents(&self) -> usize {
        self.0.n_agents()
    }

    fn laplacian(&self) -> Vec<Vec<f64>> {
        build_laplacian(&self.0).to_rows()
    }

    fn has_spanning_tree(&self) -> PyResult<bool> {
        has_spanning_tree(&self.0).map_err(to_py)
    }

    /// Agents that can reach everyone (1-based).
    fn roots(&self) -> Vec<usize> {
        self.0.roots().into_iter().map(|r| r + 1).collect()
    }

    fn __repr__(&self) -> String {
        format!("Graph(agents={})", self.0.n_agents())
    }
}

#[pyclass(frozen, name = "SimResult", module = "hetcons_py")]
struct PySim {
    res: SimResult,
    envelope: Option<(bool, f64)>,
}

#[pymethods]
impl PySim {
    #[getter]
    fn phi(&self) -> f64 {
        self.res.phi
    }
    /// Steps to consensus (or the step budget).
    #[getter]
    fn ti(&self) -> usize {
        self.res.ti
    }
    #[getter]
    fn at(&self) -> f64 {
        self.res.at
    }
    #[getter]
    fn st(&self) -> f64 {
        self.res.st
    }
    #[getter]
    fn ju(&self) -> f64 {
        self.res.ju
    }
    #[getter]
    fn converged(&self) -> bool {
        self.res.converged
    }
    #[getter]
    fn trigger_counts(&self) -> Vec<usize> {
        self.res.trigger_counts.clone()
    }
    #[getter]
    fn trigger_times(&self) -> Vec<Vec<f64>> {
        self.res.trigger_times.clone()
    }
    #[getter]
    fn min_interevent(&self) -> Vec<Option<f64>> {
        self.res.min_interevent.clone()
    }
    #[getter]
    fn zeno_ok(&self) -> bool {
        self.res.zeno_ok
    }
    #[getter]
    fn zeno_interval_ok(&self) -> bool {
        self.res.zeno_interval_ok
    }
    /// `(ok, worst ratio)` of the exponential envelope, when a design was
    /// attached.
    #[getter]
    fn envelope(&self) -> Option<(bool, f64)> {
        self.envelope
    }

    /// `(t, x)` of the stored (decimated) samples; `x` rows are stacked,
    /// agent-major.
    fn trajectories(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let t = self.res.trajectories.iter().map(|s| s.t).collect();
        let x = self.res.trajectories.iter().map(|s| s.x.clone()).collect();
        (t, x)
    }

    fn metrics_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.res.metrics()).map_err(|e| to_py(e.into()))
    }

    fn __repr__(&self) -> String {
        format!(
            "SimResult(converged={}, TI={}, AT={:.2}, ST={:.2}, Ju={:.4})",
            self.res.converged, self.res.ti, self.res.at, self.res.st, self.res.ju
        )
    }
}

#[pyclass(frozen, name = "Design", module = "hetcons_py")]
struct PyDesign(lab::Design);

#[pymethods]
impl PyDesign {
    #[getter]
    fn zeta(&self) -> f64 {
        self.0.spec.zeta
    }
    #[getter]
    fn delta(&self) -> f64 {
        self.0.spec.delta
    }
    #[getter]
    fn phi(&self) -> f64 {
        self.0.synthesis.phi
    }
    #[getter]
    fn c(&self) -> f64 {
        self.0.synthesis.c
    }
    #[getter]
    fn gains(&self) -> Vec<Vec<Vec<f64>>> {
        self.0.synthesis.k.iter().map(Mat::to_rows).collect()
    }
    #[getter]
    fn p(&self) -> Vec<Vec<f64>> {
        self.0.synthesis.p_script.to_rows()
    }
    #[getter]
    fn tau(&self) -> [f64; 3] {
        self.0.synthesis.tau
    }
    #[getter]
    fn gamma(&self) -> f64 {
        self.0.synthesis.gamma
    }
    #[getter]
    fn mu(&self) -> f64 {
        self.0.synthesis.mu
    }
    #[getter]
    fn upsilon(&self) -> Vec<f64> {
        self.0.synthesis.upsilon.clone()
    }
    /// Closed-loop certificate holds with the recovered gains at `phi`.
    #[getter]
    fn verified(&self) -> bool {
        self.0.synthesis.verified
    }
    #[getter]
    fn verify_margin(&self) -> f64 {
        self.0.synthesis.verify_margin
    }
    #[getter]
    fn phi_certified(&self) -> Option<f64> {
        self.0.synthesis.phi_certified
    }
    #[getter]
    fn newton_steps(&self) -> usize {
        self.0.synthesis.solver.newton_steps
    }
    #[getter]
    fn dropped_row(&self) -> usize {
        self.0.bundle.dropped_row + 1
    }

    /// Independent re-check of the stored LMI variables.
    fn certificates<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let c = self.0.certificates().map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("hold", c.all_hold(self.0.spec.solver.eps_strict))?;
        d.set_item("block_margins", c.block_margins)?;
        d.set_item("mu_margin", c.mu_margin)?;
        d.set_item("upsilon_margins", c.upsilon_margins)?;
        d.set_item("phi_identity_error", c.phi_identity_error)?;
        Ok(d)
    }

    /// The `synthesis.json` document (readable by `hetcons verify`).
    fn to_json(&self) -> PyResult<String> {
        let rep = SynthesisReport::new(&self.0).map_err(to_py)?;
        serde_json::to_string_pretty(&rep).map_err(|e| to_py(e.into()))
    }

    /// Run the event-triggered loop with these gains. `phi` defaults to the
    /// synthesized threshold; `uncertainty` is the amplitude `δ` of the
    /// sinusoidal gain perturbation (default: the design's `δ`).
    #[pyo3(signature = (phi = None, initial_states = None, ts = 1e-3, delta_c = 5e-3, max_steps = 200_000, uncertainty = None, decimation = 10))]
    #[allow(clippy::too_many_arguments)]
    fn simulate(
        &self,
        py: Python<'_>,
        phi: Option<f64>,
        initial_states: Option<Vec<f64>>,
        ts: f64,
        delta_c: f64,
        max_steps: usize,
        uncertainty: Option<f64>,
        decimation: usize,
    ) -> PyResult<PySim> {
        let d = &self.0;
        let (n, agents) = (d.plant.n(), d.plant.n_agents());
        let mut cfg = SimConfig::new(
            phi.unwrap_or(d.synthesis.phi),
            initial_states.unwrap_or_else(|| etsim::default_initial_states(agents, n)),
        );
        cfg.ts = ts;
        cfg.delta_c = delta_c;
        cfg.max_steps = max_steps;
        cfg.decimation = decimation;
        let delta = uncertainty.unwrap_or(d.spec.delta);
        cfg.uncertainty = if delta > 0.0 { UncertaintyModel::Sinusoid { delta } } else { UncertaintyModel::None };
        let res = py
            .detach(|| etsim::run(&d.plant, &d.bundle, &d.synthesis.k, &cfg))
            .map_err(to_py)?;
        let envelope = Some(etsim::check_envelope(&res, d.spec.zeta, d.synthesis.c));
        Ok(PySim { res, envelope })
    }

    fn __repr__(&self) -> String {
        let s = &self.0.synthesis;
        format!("Design(zeta={}, delta={}, phi={:.6}, c={:.4}, verified={})", s.zeta, s.delta, s.phi, s.c, s.verified)
    }
}

/// Solve the co-design LMIs. `dropped_row` (1-based) defaults to the
/// largest admissible row.
#[pyfunction]
#[pyo3(signature = (plant, graph, zeta, delta, dropped_row = None))]
fn synthesize(
    py: Python<'_>,
    plant: &PyPlant,
    graph: &PyGraph,
    zeta: f64,
    delta: f64,
    dropped_row: Option<usize>,
) -> PyResult<PyDesign> {
    let row = match dropped_row {
        Some(0) => return Err(HetconsError::new_err("dropped_row is 1-based")),
        r => r.map(|r| r - 1),
    };
    let plant = plant.0.clone();
    let bundle = lab::build_bundle(&graph.0, plant.n(), row).map_err(to_py)?;
    let spec = SynthesisSpec::new(zeta, delta);
    spec.validate().map_err(to_py)?;
    let synthesis = py.detach(|| solve_design(&plant, &bundle, &spec)).map_err(to_py)?;
    Ok(PyDesign(lab::Design { plant, bundle, spec, synthesis }))
}

/// Spearman rank correlation with average ranks for ties.
#[pyfunction]
fn spearman(x: Vec<f64>, y: Vec<f64>) -> f64 {
    lab::spearman(&x, &y)
}

#[pyclass(frozen, name = "Experiment", module = "hetcons_py")]
struct PyExperiment(ExperimentConfig);

#[pymethods]
impl PyExperiment {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyExperiment(ExperimentConfig::from_file(&path).map_err(to_py)?))
    }

    /// TOML text; relative paths resolve against `base_dir`.
    #[staticmethod]
    #[pyo3(signature = (text, base_dir = PathBuf::from(".")))]
    fn parse(text: &str, base_dir: PathBuf) -> PyResult<Self> {
        Ok(PyExperiment(ExperimentConfig::parse(text, &base_dir).map_err(to_py)?))
    }

    fn plant(&self) -> PyResult<PyPlant> {
        Ok(PyPlant(self.0.build_plant().map_err(to_py)?))
    }

    fn graph(&self) -> PyResult<PyGraph> {
        Ok(PyGraph(self.0.build_graph().map_err(to_py)?))
    }

    fn design(&self, py: Python<'_>) -> PyResult<PyDesign> {
        Ok(PyDesign(py.detach(|| lab::run_design(&self.0)).map_err(to_py)?))
    }

    /// Design and simulate with the config's simulation settings.
    fn run(&self, py: Python<'_>) -> PyResult<(PyDesign, PySim)> {
        let p = py.detach(|| lab::run_pipeline(&self.0)).map_err(to_py)?;
        Ok((PyDesign(p.design), PySim { res: p.sim, envelope: Some(p.envelope) }))
    }

    /// One row per grid value: value, phi, TI, AT, ST, Ju, status.
    #[pyo3(signature = (axis, grid = None))]
    fn sweep<'py>(&self, py: Python<'py>, axis: &str, grid: Option<Vec<f64>>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let axis: Axis = axis.parse().map_err(to_py)?;
        let grid = match (grid, &self.0.sweep) {
            (Some(g), _) => g,
            (None, Some(s)) if s.axis == axis => s.grid.clone(),
            _ => return Err(HetconsError::new_err(format!("no grid for axis {axis}"))),
        };
        let (_, table) = py.detach(|| lab::run_sweep(&self.0, axis, &grid)).map_err(to_py)?;
        table
            .rows
            .iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item(axis.name(), r.value)?;
                d.set_item("phi", r.phi)?;
                d.set_item("TI", r.ti)?;
                d.set_item("AT", r.at)?;
                d.set_item("ST", r.st)?;
                d.set_item("Ju", r.ju)?;
                d.set_item("status", r.status.name())?;
                Ok(d)
            })
            .collect()
    }

    /// Monte-Carlo study from the `[montecarlo]` section (or defaults);
    /// returns the summary as JSON text.
    #[pyo3(signature = (trials = None, agents = None, seed = None))]
    fn montecarlo(
        &self,
        py: Python<'_>,
        trials: Option<usize>,
        agents: Option<Vec<usize>>,
        seed: Option<u64>,
    ) -> PyResult<String> {
        let mut cfg = self.0.clone();
        let mc = cfg.montecarlo.get_or_insert_with(Default::default);
        if let Some(t) = trials {
            mc.trials = t;
        }
        if let Some(a) = agents {
            mc.agents = a;
        }
        if let Some(s) = seed {
            mc.seed = s;
        }
        let summary = py.detach(|| lab::monte_carlo(&cfg, &mut |_, _| {})).map_err(to_py)?;
        serde_json::to_string_pretty(&summary).map_err(|e| to_py(e.into()))
    }
}

#[pymodule]
fn hetcons_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPlant>()?;
    m.add_class::<PyGraph>()?;
    m.add_class::<PyDesign>()?;
    m.add_class::<PySim>()?;
    m.add_class::<PyExperiment>()?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add("HetconsError", m.py().get_type::<HetconsError>())?;
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    m.add("DivergedError", m.py().get_type::<DivergedError>())?;
    Ok(())
}

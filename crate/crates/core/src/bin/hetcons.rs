use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hetcons::error::Error;
use hetcons::lab::{
    emit_report, monte_carlo, run_design, run_pipeline, run_sweep, sweep_phi, Axis, ExperimentConfig,
    Report, SynthesisReport,
};
use hetcons::synthesis::{check_certificates, verify_closed_loop};

/// Event-triggered consensus: gain/threshold co-design, simulation and
/// experiment sweeps.
#[derive(Parser)]
#[command(name = "hetcons", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the LMIs; writes synthesis.json and lmi.txt.
    Synth {
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Design, then simulate the event-triggered closed loop.
    Simulate {
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Threshold to run at (default: the synthesized one).
        #[arg(long)]
        phi: Option<f64>,
    },
    /// Sweep one parameter and write the matching table.
    Sweep {
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// Comma-separated values (default: the config's grid).
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Random networks and inertias; ζ and δ trends.
    Montecarlo {
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        agents: Option<Vec<usize>>,
    },
    /// Re-check every certificate of a saved synthesis.json.
    Verify { synthesis: PathBuf },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum AxisArg {
    Phi,
    Delta,
    Zeta,
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Phi => Axis::Phi,
            AxisArg::Delta => Axis::Delta,
            AxisArg::Zeta => Axis::Zeta,
        }
    }
}

/// 2: no design (infeasible or solver failure), 3: divergence or no
/// consensus within the horizon, 1: everything else.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible { .. } | Error::Solver(_) => 2,
        Error::Diverged { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load(path: &Path, output: Option<PathBuf>) -> Result<(ExperimentConfig, PathBuf), Error> {
    let cfg = ExperimentConfig::from_file(path)?;
    let dir = output.unwrap_or_else(|| cfg.output_dir());
    Ok((cfg, dir))
}

fn announce(dir: &Path, files: &[String]) {
    println!("wrote {} files to {}: {}", files.len(), dir.display(), files.join(", "));
}

fn run(cmd: Command) -> Result<u8, Error> {
    match cmd {
        Command::Synth { config, output } => {
            let (cfg, dir) = load(&config, output)?;
            let d = run_design(&cfg)?;
            let s = &d.synthesis;
            println!("phi = {:.6}  c = {:.4}  verified = {}", s.phi, s.c, s.verified);
            for (i, k) in s.k.iter().enumerate() {
                let rows: Vec<&[f64]> = (0..k.rows()).map(|r| k.row(r)).collect();
                println!("K_{} = {:?}", i + 1, rows);
            }
            if !s.verified {
                match s.phi_certified {
                    Some(p) => println!("closed-loop certificate holds only up to phi = {p:.6}"),
                    None => println!(
                        "closed-loop certificate fails with the recovered gains (margin {:.4})",
                        s.verify_margin
                    ),
                }
            }
            let files = emit_report(&dir, &cfg, &Report { command: "synth", design: Some(&d), ..Default::default() })?;
            announce(&dir, &files);
            Ok(0)
        }
        Command::Simulate { config, output, phi } => {
            let (mut cfg, dir) = load(&config, output)?;
            if phi.is_some() {
                cfg.sim.phi = phi;
            }
            let p = run_pipeline(&cfg)?;
            let table = match &cfg.sweep {
                Some(s) if s.axis == Axis::Phi => Some(sweep_phi(&cfg, &p.design, &s.grid)?),
                _ => None,
            };
            let m = p.sim.metrics();
            println!(
                "phi = {:.6}  TI = {}  AT = {:.2}  ST = {:.2}%  Ju = {:.4}  converged = {}  envelope = {}",
                p.sim.phi, m.ti, m.at, m.st, m.ju, m.converged, p.envelope.0
            );
            let files = emit_report(
                &dir,
                &cfg,
                &Report { command: "simulate", pipeline: Some(&p), tables: table.iter().collect(), ..Default::default() },
            )?;
            announce(&dir, &files);
            Ok(if p.sim.converged { 0 } else { 3 })
        }
        Command::Sweep { config, axis, grid, output } => {
            let (cfg, dir) = load(&config, output)?;
            let axis = Axis::from(axis);
            let grid = match (grid, &cfg.sweep) {
                (Some(g), _) => g,
                (None, Some(s)) if s.axis == axis => s.grid.clone(),
                _ => return Err(Error::Config(format!("no grid for axis {axis}: pass --grid"))),
            };
            let (design, table) = run_sweep(&cfg, axis, &grid)?;
            for r in &table.rows {
                println!(
                    "{axis} = {:<8} phi = {:<10} TI = {:<8} Ju = {:<10} {}",
                    r.value,
                    r.phi.map(|v| format!("{v:.4}")).unwrap_or_default(),
                    r.ti.map(|v| v.to_string()).unwrap_or_default(),
                    r.ju.map(|v| format!("{v:.3}")).unwrap_or_default(),
                    r.status.name()
                );
            }
            let files = emit_report(
                &dir,
                &cfg,
                &Report { command: "sweep", design: design.as_ref(), tables: vec![&table], ..Default::default() },
            )?;
            announce(&dir, &files);
            Ok(0)
        }
        Command::Montecarlo { config, output, trials, seed, agents } => {
            let (mut cfg, dir) = load(&config, output)?;
            let mc = cfg.montecarlo.get_or_insert_with(Default::default);
            if let Some(t) = trials {
                mc.trials = t;
            }
            if let Some(s) = seed {
                mc.seed = s;
            }
            if let Some(a) = agents {
                mc.agents = a;
            }
            let total = mc.trials;
            let summary = monte_carlo(&cfg, &mut |n, k| eprintln!("N = {n}: trial {}/{total}", k + 1))?;
            for t in &summary.trends {
                println!(
                    "N = {:<3} {} vs {}: rho = {:+.3} ({})",
                    t.agents,
                    t.metric,
                    t.axis,
                    t.rho,
                    if t.ok { "ok" } else { "FAIL" }
                );
            }
            let files =
                emit_report(&dir, &cfg, &Report { command: "montecarlo", montecarlo: Some(&summary), ..Default::default() })?;
            announce(&dir, &files);
            Ok(0)
        }
        Command::Verify { synthesis } => {
            let rep = SynthesisReport::from_file(&synthesis)?;
            let bundle = rep.bundle()?;
            let cert = check_certificates(&rep.plant, &bundle, &rep.spec, &rep.result)?;
            let lmis_ok = cert.all_hold(rep.spec.solver.eps_strict);
            let (loop_ok, margin) = verify_closed_loop(&rep.plant, &bundle, &rep.spec, &rep.result)?;
            println!("LMI block margins: {:?}", cert.block_margins);
            println!("side conditions: mu {:.3e}, upsilon min {:.3e}", cert.mu_margin,
                cert.upsilon_margins.iter().copied().fold(f64::INFINITY, f64::min));
            println!("LMI certificates: {}", if lmis_ok { "hold" } else { "FAIL" });
            println!(
                "closed loop with recovered gains at phi = {:.6}: {} (margin {margin:.4e})",
                rep.result.phi,
                if loop_ok { "holds" } else { "FAILS" }
            );
            Ok(if lmis_ok && loop_ok { 0 } else { 2 })
        }
    }
}

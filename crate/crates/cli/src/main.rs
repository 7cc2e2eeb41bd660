use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use plume_core::bench::{emit_csv, emit_svg_lines, run_sweep, run_trial, Algorithm, Metric, SweepConfig};
use plume_core::export::{dense_ndjson, occupancy_ndjson};
use plume_core::hydro::{convergence_study, dyadic_meshes, TestFunction};
use plume_core::lattice::{RngStream, StepKernel};
use plume_core::oracle::{green_function, mu_recursion, IndexWindow};
use plume_core::sim::ParticleSim;
use serde::Serialize;

mod config;

use config::{parse_kernel, FileConfig, Overrides, Settings};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] plume_core::Error),
    #[error("{0}")]
    Runtime(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "plume", version, about = "Particle plumes on a lattice and dynamic sensor search")]
struct Cli {
    /// TOML config file; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AlgArg {
    Alg1,
    Alg2,
}

impl From<AlgArg> for Algorithm {
    fn from(a: AlgArg) -> Self {
        match a {
            AlgArg::Alg1 => Algorithm::ScanningWindow,
            AlgArg::Alg2 => Algorithm::BrownianGuided,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Shape {
    Bump,
    Gaussian,
    Constant,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Particle counts at step n as NDJSON.
    Simulate {
        #[arg(long, default_value_t = 100)]
        steps: u64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Expected field at step n, or the Green's function with --green, as NDJSON.
    Field {
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long)]
        green: bool,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Query half-width for --green.
        #[arg(long, default_value_t = 20)]
        half_width: usize,
        /// Entries at or below this value are skipped.
        #[arg(long, default_value_t = 0.0)]
        floor: f64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Mesh-refinement study of the transport limit as CSV.
    Hydro {
        #[arg(long, default_value_t = 2.0)]
        t: f64,
        #[arg(long, value_enum, default_value_t = Shape::Bump)]
        shape: Shape,
        /// Test function centre `x,y`; defaults to the midpoint of the drift segment.
        #[arg(long)]
        center: Option<String>,
        /// Bump radius, Gaussian sigma or constant value.
        #[arg(long, default_value_t = 0.5)]
        radius: f64,
        /// Injection rate; defaults to injection_mean / h.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 4)]
        kmin: u32,
        #[arg(long, default_value_t = 8)]
        kmax: u32,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// One detection trial; the search trace as NDJSON.
    Detect {
        #[arg(long, value_enum, default_value_t = AlgArg::Alg2)]
        alg: AlgArg,
        #[arg(long, default_value_t = 0)]
        trial: u64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Sweep over algorithms, kernels and r; writes sweep.csv and SVG charts.
    Bench {
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [AlgArg::Alg1, AlgArg::Alg2])]
        algs: Vec<AlgArg>,
        #[arg(long, value_delimiter = ',', default_values_t = ["p1".to_string(), "p2".into(), "p3".into(), "p4".into()])]
        kernels: Vec<String>,
        #[arg(long, value_delimiter = ',', default_values_t = [8u32, 12, 18, 24])]
        radii: Vec<u32>,
        #[arg(long, default_value = "bench-out")]
        out_dir: PathBuf,
    },
    /// Green's-function argmax report, one JSON object per kernel.
    Oracle {
        /// Report every preset kernel instead of the configured one.
        #[arg(long)]
        all: bool,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 20)]
        half_width: usize,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn parse_point(s: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Usage(format!("expected x,y but got '{s}'"));
    let (x, y) = s.split_once(',').ok_or_else(bad)?;
    Ok((x.trim().parse().map_err(|_| bad())?, y.trim().parse().map_err(|_| bad())?))
}

#[derive(Serialize)]
struct OracleRow {
    kernel: String,
    argmax_i: i64,
    argmax_j: i64,
    source_is_argmax: bool,
    g_source: f64,
    runner_up_i: i64,
    runner_up_j: i64,
    margin: f64,
    horizon: usize,
    tail_bound: f64,
    escaped_mass: f64,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let settings = Settings::resolve(&file, &cli.overrides)?;
    let params = settings.params;
    match cli.command {
        Command::Simulate { steps, out } => {
            let mut sim = ParticleSim::new(settings.kernel()?, params, RngStream::new(params.seed, 0))?;
            sim.advance_to(steps);
            emit(out.as_deref(), &occupancy_ndjson(sim.field()))
        }
        Command::Field {
            steps,
            green,
            tol,
            half_width,
            floor,
            out,
        } => {
            let kernel = settings.kernel()?;
            let text = if green {
                let window = IndexWindow::centered(params.source, half_width);
                dense_ndjson(green_function(&kernel, params.source, tol, window)?.field(), floor)
            } else {
                dense_ndjson(&mu_recursion(&kernel, &params, steps, None)?.field(), floor)
            };
            emit(out.as_deref(), &text)
        }
        Command::Hydro {
            t,
            shape,
            center,
            radius,
            alpha,
            kmin,
            kmax,
            out,
        } => {
            let kernel = settings.kernel()?;
            if kmin > kmax {
                return Err(CliError::Usage(format!("kmin {kmin} exceeds kmax {kmax}")));
            }
            let [q1, q2] = kernel.drift();
            let center = match center {
                Some(s) => parse_point(&s)?,
                None => (q1 * t / 2.0, q2 * t / 2.0),
            };
            let f = match shape {
                Shape::Bump => TestFunction::Bump { center, radius },
                Shape::Gaussian => TestFunction::Gaussian { center, sigma: radius },
                Shape::Constant => TestFunction::Constant(radius),
            };
            let alpha = alpha.unwrap_or_else(|| params.rate());
            let table = convergence_study(&kernel, &f, t, alpha, &dyadic_meshes(kmin..=kmax))?;
            emit(out.as_deref(), &table.to_csv())
        }
        Command::Detect { alg, trial, out } => {
            let kernel = settings.kernel()?;
            let cfg = sweep_config(&settings, alg.into(), &settings.kernel_label, kernel, settings.r);
            cfg.validate()?;
            let run = run_trial(&cfg, trial);
            let m = &run.metrics;
            let Some(trace) = run.trace else {
                let why = m.failure.clone().unwrap_or_default();
                return Err(CliError::Runtime(format!("trial {trial} produced no trace: {why}")));
            };
            emit(out.as_deref(), &trace.to_ndjson())?;
            eprintln!(
                "success={} converged={} iterations={} measurements={} steps={}{}",
                m.success,
                m.converged,
                m.iterations,
                m.measurements,
                m.elapsed_steps,
                m.failure.as_deref().map(|f| format!(" failure=\"{f}\"")).unwrap_or_default()
            );
            Ok(())
        }
        Command::Bench {
            algs,
            kernels,
            radii,
            out_dir,
        } => {
            let mut summaries = Vec::new();
            for label in &kernels {
                let (label, p) = parse_kernel(label)?;
                let kernel = StepKernel::from_array(p)?;
                for &alg in &algs {
                    for &r in &radii {
                        let cfg = sweep_config(&settings, alg.into(), &label, kernel, r);
                        let (summary, _) = run_sweep(&cfg, 0)?;
                        eprintln!(
                            "{} {label} r={r}: detection {:.3} mean measurements {:.1}",
                            summary.algorithm, summary.detection_probability, summary.mean_measurements
                        );
                        summaries.push(summary);
                    }
                }
            }
            std::fs::create_dir_all(&out_dir)?;
            std::fs::write(out_dir.join("sweep.csv"), emit_csv(&summaries))?;
            std::fs::write(
                out_dir.join("detection.svg"),
                emit_svg_lines(&summaries, Metric::DetectionProbability)?,
            )?;
            std::fs::write(
                out_dir.join("measurements.svg"),
                emit_svg_lines(&summaries, Metric::MeanMeasurements)?,
            )?;
            Ok(())
        }
        Command::Oracle {
            all,
            tol,
            half_width,
            out,
        } => {
            let kernels: Vec<(String, [f64; 4])> = if all {
                plume_core::lattice::presets::ALL
                    .iter()
                    .map(|(l, p)| (l.to_string(), *p))
                    .collect()
            } else {
                vec![(settings.kernel_label.clone(), settings.probabilities)]
            };
            let mut text = String::new();
            for (label, p) in kernels {
                let kernel = StepKernel::from_array(p)?;
                let window = IndexWindow::centered(params.source, half_width);
                let g = green_function(&kernel, params.source, tol, window)?;
                let (argmax, _) = g.field().argmax();
                let (margin, runner_up) = g.source_margin();
                let row = OracleRow {
                    kernel: label,
                    argmax_i: argmax.i,
                    argmax_j: argmax.j,
                    source_is_argmax: argmax == params.source,
                    g_source: g.value(params.source),
                    runner_up_i: runner_up.i,
                    runner_up_j: runner_up.j,
                    margin,
                    horizon: g.truncation_horizon(),
                    tail_bound: g.tail_bound(),
                    escaped_mass: g.escaped_mass(),
                };
                text.push_str(&serde_json::to_string(&row).map_err(|e| CliError::Runtime(e.to_string()))?);
                text.push('\n');
            }
            emit(out.as_deref(), &text)
        }
    }
}

fn sweep_config(s: &Settings, algorithm: Algorithm, label: &str, kernel: StepKernel, r: u32) -> SweepConfig {
    let mut cfg = SweepConfig::reference(algorithm, label, kernel, r);
    cfg.params = s.params;
    cfg.n0 = s.n0;
    cfg.n1 = s.n1;
    cfg.c = s.c;
    cfg.k = s.k;
    cfg.trials = s.m;
    cfg
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

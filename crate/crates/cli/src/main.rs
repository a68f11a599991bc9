use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use formation_core::consensus::{integrator_consensus_sim, Saturation};
use formation_core::graph::Graph;
use formation_core::oscillation::{average_parametric_velocity, fit_ka, velocity_model, OscillationConfig};
use formation_core::sim::{
    self, format_float, parse_graph_file, write_consensus_csv, write_fit_csv, CsvSink, Override, RunOptions, Scenario,
    SimError,
};

/// Formation flight simulator for constant-speed drones on straight paths.
#[derive(Debug, Parser)]
#[command(name = "formation", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write `telemetry.csv` and `summary.toml`.
    Run {
        scenario: PathBuf,
        /// Output directory, created if missing.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Override a scenario value, e.g. `--set integration.dt_s=0.02`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Evaluate drones on worker threads.
        #[arg(long)]
        parallel: bool,
    },
    /// Check a scenario and list every violated constraint.
    Validate {
        scenario: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Fit k_A for a speed and frequency and write the fit table.
    Calibrate {
        /// Speed in m/s.
        #[arg(long)]
        v: f64,
        /// Oscillation frequency in rad/s.
        #[arg(long)]
        w_gamma: f64,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        /// CSV destination; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Average-velocity curves for a fixed k_A at several frequencies.
    FitCurve {
        #[arg(long)]
        v: f64,
        /// Comma-separated frequencies in rad/s.
        #[arg(long, value_delimiter = ',', required = true)]
        w_gamma: Vec<f64>,
        #[arg(long, default_value_t = 1.35)]
        k_a: f64,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Single-integrator saturated consensus on a tree.
    ConsensusDemo {
        /// `fig6-tree` or a graph file (`nodes = N`, `edges = [[1, 2], ...]`).
        #[arg(long, default_value = "fig6-tree")]
        graph: String,
        /// Comma-separated initial states, or `random`.
        #[arg(long, default_value = "random")]
        x0: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Random initial states are drawn from [-range, range].
        #[arg(long, default_value_t = 100.0)]
        range: f64,
        #[arg(long, default_value_t = 10.0)]
        tau_h: f64,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long, default_value_t = 100.0)]
        t_end: f64,
        #[arg(long, default_value_t = 10)]
        record_every: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// An error and the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn runtime(message: impl ToString) -> Self {
        Self {
            code: 1,
            message: message.to_string(),
        }
    }

    fn invalid(message: impl ToString) -> Self {
        Self {
            code: 2,
            message: message.to_string(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run {
            scenario,
            out,
            overrides,
            parallel,
        } => run(&scenario, &out, &overrides, parallel),
        Command::Validate { scenario, overrides } => {
            let (scn, _) = load(&scenario, &overrides)?;
            let violations = scn.validate();
            if violations.is_empty() {
                println!("ok");
                Ok(())
            } else {
                Err(Failure::invalid(SimError::Invalid(violations)))
            }
        }
        Command::Calibrate { v, w_gamma, samples, out } => {
            let fit = fit_ka(v, w_gamma, samples).map_err(Failure::invalid)?;
            write_fit_csv(&fit, output(out.as_deref())?).map_err(Failure::runtime)?;
            eprintln!("k_a = {}", fit.k_a);
            eprintln!("max_abs_error_m_s = {}", fit.max_abs_error());
            Ok(())
        }
        Command::FitCurve {
            v,
            w_gamma,
            k_a,
            samples,
            out,
        } => fit_curve(v, &w_gamma, k_a, samples, out.as_deref()),
        Command::ConsensusDemo {
            graph,
            x0,
            seed,
            range,
            tau_h,
            r,
            dt,
            t_end,
            record_every,
            out,
        } => {
            let graph = if graph == "fig6-tree" {
                Graph::reference_tree()
            } else {
                let text = read(Path::new(&graph))?;
                parse_graph_file(&text).map_err(Failure::invalid)?
            };
            let report = graph.check_tree();
            if !report.is_tree() {
                return Err(Failure::invalid(report.problems().join("; ")));
            }
            let x0 = initial_states(&x0, graph.node_count(), seed, range)?;
            let sat = Saturation::new(tau_h, r).map_err(Failure::invalid)?;
            let traj =
                integrator_consensus_sim(&graph, &sat, &x0, dt, t_end, record_every).map_err(Failure::invalid)?;
            write_consensus_csv(&graph, &traj, output(out.as_deref())?).map_err(Failure::runtime)?;
            let last = traj.final_state();
            let spread = last.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - last.iter().cloned().fold(f64::INFINITY, f64::min);
            eprintln!("final_spread = {spread}");
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => Failure::runtime(format!("file not found: {}", path.display())),
        _ => Failure::runtime(format!("cannot read {}: {e}", path.display())),
    })
}

fn load(path: &Path, overrides: &[String]) -> Result<(Scenario, Vec<Override>), Failure> {
    let text = read(path)?;
    let overrides = overrides
        .iter()
        .map(|o| Override::parse(o))
        .collect::<Result<Vec<_>, _>>()
        .map_err(Failure::invalid)?;
    let scenario = Scenario::from_toml_str_with_overrides(&text, &overrides).map_err(Failure::invalid)?;
    Ok((scenario, overrides))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::runtime(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(path: &Path, out: &Path, overrides: &[String], parallel: bool) -> Result<(), Failure> {
    let (scenario, overrides) = load(path, overrides)?;
    let resolved = scenario.resolve().map_err(|v| Failure::invalid(SimError::Invalid(v)))?;
    fs::create_dir_all(out).map_err(|e| Failure::runtime(format!("cannot create {}: {e}", out.display())))?;
    let telemetry_path = out.join("telemetry.csv");
    let file = File::create(&telemetry_path)
        .map_err(|e| Failure::runtime(format!("cannot create {}: {e}", telemetry_path.display())))?;
    let mut sink = CsvSink::new(BufWriter::new(file));
    let mut summary = sim::run_resolved(&resolved, &mut sink, RunOptions { parallel }).map_err(Failure::runtime)?;
    summary.overrides = overrides.iter().map(|o| o.to_string()).collect();
    let summary_path = out.join("summary.toml");
    fs::write(&summary_path, summary.to_toml())
        .map_err(|e| Failure::runtime(format!("cannot write {}: {e}", summary_path.display())))?;
    let _ = write!(io::stdout(), "{}", summary.to_toml());
    Ok(())
}

fn fit_curve(v: f64, frequencies: &[f64], k_a: f64, samples: usize, out: Option<&Path>) -> Result<(), Failure> {
    if samples < 2 {
        return Err(Failure::invalid("need at least 2 samples"));
    }
    let mut w = output(out)?;
    let io_err = |e: io::Error| Failure::runtime(e);
    writeln!(w, "w_gamma_rad_s,amplitude_m,exact_m_s,model_m_s").map_err(io_err)?;
    for &freq in frequencies {
        let cfg = OscillationConfig::new(v, freq, k_a).map_err(Failure::invalid)?;
        let max = cfg.max_feasible_amplitude();
        for i in 0..samples {
            let a = max * i as f64 / (samples - 1) as f64;
            let exact = average_parametric_velocity(&cfg, a).map_err(Failure::runtime)?;
            let model = velocity_model(v, freq, k_a, a);
            writeln!(
                w,
                "{},{},{},{}",
                format_float(freq),
                format_float(a),
                format_float(exact),
                format_float(model)
            )
            .map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

fn initial_states(spec: &str, n: usize, seed: u64, range: f64) -> Result<Vec<f64>, Failure> {
    if spec == "random" {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        return Ok((0..n).map(|_| rng.gen_range(-range..=range)).collect());
    }
    let values = spec
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::invalid(format!("bad --x0 value: {e}")))?;
    if values.len() == 1 {
        return Ok(vec![values[0]; n]);
    }
    if values.len() != n {
        return Err(Failure::invalid(format!("--x0 has {} values but the graph has {n} nodes", values.len())));
    }
    Ok(values)
}

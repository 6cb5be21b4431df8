use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use kmpc_core::boxqp::{BoxQpSolver, SolverConfig};
use kmpc_core::harness::{self, ClosedLoopFailure, ClosedLoopLog, ExperimentConfig};
use kmpc_core::{io, FlopCounter};

const DATASET: &str = "dataset.csv";
const PREDICTOR: &str = "predictor.txt";
const CONDENSED: &str = "condensed.txt";
const CERTIFICATE: &str = "certificate.txt";
const TRAJECTORY: &str = "trajectory.csv";
const DIAGNOSTICS: &str = "diagnostics.csv";
const METRICS: &str = "metrics.txt";
const SVG: &str = "metrics.svg";

/// Time-certified Koopman MPC for the KdV tracking experiment.
#[derive(Parser)]
#[command(name = "kmpc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate random-input trajectories and write the snapshot dataset.
    GenerateData(Common),
    /// Fit the lifted predictor by EDMD and write it with the condensed matrices.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Dataset to fit (default: <out>/dataset.csv).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Write the iteration and operation-count certificate for the configured MPC.
    Certify(Common),
    /// Run the closed-loop tracking experiment.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Predictor to use (default: <out>/predictor.txt).
        #[arg(long)]
        predictor: Option<PathBuf>,
    },
    /// Solve a single box QP read from a text file.
    SolveQp {
        /// File with `n`, the Hessian rows, and the gradient row.
        file: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        epsilon: f64,
        /// Check the interior-point invariants at every iteration.
        #[arg(long)]
        check_invariants: bool,
    },
    /// Summarize a closed-loop run.
    Metrics {
        #[command(flatten)]
        common: Common,
        /// Also render the field, mean and input panels as SVG.
        #[arg(long)]
        svg: bool,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML, `version = 1`).
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir` in the config).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let cfg = ExperimentConfig::load(&self.config)?;
        let out = self.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        Ok((cfg, out))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let solve_qp = matches!(cli.command, Command::SolveQp { .. });
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err, solve_qp))
        }
    }
}

fn exit_code(err: &anyhow::Error, solve_qp: bool) -> u8 {
    let core = err
        .downcast_ref::<kmpc_core::Error>()
        .or_else(|| err.downcast_ref::<ClosedLoopFailure>().map(|f| &f.error));
    match core {
        Some(e) if solve_qp && e.exit_code() != 3 => 2,
        Some(e) => e.exit_code() as u8,
        // only file-system problems reach here
        None if solve_qp => 2,
        None => 1,
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenerateData(common) => generate_data(&common),
        Command::Fit { common, data } => fit(&common, data),
        Command::Certify(common) => certify(&common),
        Command::Simulate { common, predictor } => simulate(&common, predictor),
        Command::SolveQp { file, epsilon, check_invariants } => solve_qp(&file, epsilon, check_invariants),
        Command::Metrics { common, svg } => metrics(&common, svg),
    }
}

fn generate_data(common: &Common) -> Result<()> {
    let (cfg, out) = common.load()?;
    log::info!(
        "simulating {} trajectories x {} samples",
        cfg.data.n_trajectories,
        cfg.data.samples_per_trajectory
    );
    let generated = harness::generate_dataset(&cfg)?;
    let path = out.join(DATASET);
    io::save_dataset(&path, &generated.dataset)?;
    log::info!(
        "wrote {} transitions to {} ({} trajectories redrawn)",
        generated.dataset.len(),
        path.display(),
        generated.resampled
    );
    Ok(())
}

fn fit(common: &Common, data: Option<PathBuf>) -> Result<()> {
    let (cfg, out) = common.load()?;
    let data_path = data.unwrap_or_else(|| out.join(DATASET));
    let dataset = io::load_dataset(&data_path).with_context(|| format!("reading {}", data_path.display()))?;
    log::info!("fitting {} observables on {} transitions", cfg.observable()?.lifted_dim(), dataset.len());
    let predictor = harness::fit_predictor(&cfg, &dataset)?;
    let controller = harness::build_controller(&cfg, predictor)?;
    io::save_predictor(&out.join(PREDICTOR), controller.predictor())?;
    io::save_condensed(&out.join(CONDENSED), controller.condensed())?;
    log::info!("wrote {} and {}", out.join(PREDICTOR).display(), out.join(CONDENSED).display());
    Ok(())
}

fn certify(common: &Common) -> Result<()> {
    let (cfg, out) = common.load()?;
    let cert = cfg.certificate()?;
    fs::write(out.join(CERTIFICATE), cert.to_string())?;
    print!("{cert}");
    Ok(())
}

fn simulate(common: &Common, predictor: Option<PathBuf>) -> Result<()> {
    let (cfg, out) = common.load()?;
    let path = predictor.unwrap_or_else(|| out.join(PREDICTOR));
    let predictor = io::load_predictor(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut controller = harness::build_controller(&cfg, predictor)?;
    let cert = cfg.certificate()?;
    log::info!("running {} closed-loop steps, certificate {} FLOP per step", cfg.closed_loop_steps(), cert.total_flops);
    let log = match harness::run_closed_loop(&cfg, &mut controller) {
        Ok(log) => log,
        Err(f) => {
            write_log(&f.log, &out)?;
            return Err(anyhow::Error::new(f).context(format!("partial log written to {}", out.display())));
        }
    };
    write_log(&log, &out)?;
    let over = log.records.iter().filter(|r| r.flops > cert.total_flops).count();
    if over > 0 {
        log::warn!("{over} steps exceeded the certified operation count");
    }
    log::info!("wrote {} and {}", out.join(TRAJECTORY).display(), out.join(DIAGNOSTICS).display());
    Ok(())
}

fn write_log(log: &ClosedLoopLog, out: &Path) -> Result<()> {
    let w = BufWriter::new(fs::File::create(out.join(TRAJECTORY))?);
    log.write_trajectory(w)?.flush()?;
    let w = BufWriter::new(fs::File::create(out.join(DIAGNOSTICS))?);
    log.write_diagnostics(w)?;
    Ok(())
}

fn solve_qp(file: &Path, epsilon: f64, check_invariants: bool) -> Result<()> {
    let qp = io::load_box_qp(file).with_context(|| format!("reading {}", file.display()))?;
    let cfg = SolverConfig { epsilon, check_invariants, ..SolverConfig::default() };
    let mut flops = FlopCounter::new();
    let sol = BoxQpSolver::new(qp.dim()).solve_observed(&qp, &cfg, &mut flops, None)?;
    let z: Vec<String> = sol.z_star.iter().map(|v| v.to_string()).collect();
    println!("z = {}", z.join(" "));
    println!("objective = {}", qp.objective(&sol.z_star));
    println!("iterations = {}", sol.iterations);
    println!("duality_gap = {:e}", sol.duality_gap);
    println!("flops = {}", sol.total_flops);
    Ok(())
}

fn metrics(common: &Common, svg: bool) -> Result<()> {
    let (cfg, out) = common.load()?;
    let open = |name: &str| -> Result<BufReader<fs::File>> {
        let p = out.join(name);
        Ok(BufReader::new(fs::File::open(&p).with_context(|| format!("opening {}", p.display()))?))
    };
    let log = ClosedLoopLog::read(open(TRAJECTORY)?, open(DIAGNOSTICS)?, cfg.plant.dt)?;
    let m = harness::compute_metrics(&log)?;
    let mut report = m.to_string();
    if let Ok(cert) = cfg.certificate() {
        report.push_str(&format!("flops certificate = {}\n", cert.total_flops));
    }
    fs::write(out.join(METRICS), &report)?;
    print!("{report}");
    if svg {
        fs::write(out.join(SVG), harness::render_svg(&log))?;
        log::info!("wrote {}", out.join(SVG).display());
    }
    Ok(())
}

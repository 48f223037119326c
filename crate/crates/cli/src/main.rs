//! `qzeno`: run trajectory ensembles, evaluate rate formulas, validate.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use qzeno::io::{write_ensemble_csv, write_trajectory_csv, Manifest};
use qzeno::oracles;
use qzeno::validate::{Suite, ValidateOptions, Validator};
use qzeno::{presets, run_trajectory, DriveParams, Model, RatePrediction, ReservoirSpec, RngStream, RunConfig};

const EXIT_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_SIMULATION: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "qzeno", version, about = "Quantum-trajectory simulation of the Zeno and anti-Zeno effects")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an ensemble from a preset or a config file and write CSV output.
    Simulate(SimulateArgs),
    /// Evaluate a closed-form or semi-analytic rate prediction.
    Oracle(OracleArgs),
    /// Run a validation suite and print one line per criterion.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Embedded preset name (fig1 .. fig12).
    #[arg(required_unless_present_any = ["config", "list"], conflicts_with = "config")]
    preset: Option<String>,
    /// TOML run configuration.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set detector.lambda=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, short = 'n')]
    n_trajectories: Option<usize>,
    #[arg(long, env = "QZENO_WORKERS")]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's `output.path`.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// List the embedded presets and exit.
    #[arg(long)]
    list: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Formula {
    #[value(name = "tau_m", alias = "tau-m")]
    TauM,
    GoldenRule,
    CorrectedFree,
    Zeno,
    MeasuredDecay,
    MeasuredDecaySeries,
    AntiZeno,
    Resolvent,
    Laplace,
}

#[derive(Debug, Args)]
struct OracleArgs {
    formula: Formula,
    /// Detector decay rate Γ.
    #[arg(long)]
    gamma: Option<f64>,
    /// Detector coupling λ.
    #[arg(long)]
    lambda: Option<f64>,
    /// Reservoir half-width Λ.
    #[arg(long)]
    lambda_band: Option<f64>,
    /// Measurement time; derived from `--gamma` and `--lambda` when absent.
    #[arg(long)]
    tau_m: Option<f64>,
    /// Golden-rule rate Γ⁰; sets g0 from the mode spacing.
    #[arg(long)]
    gamma0: Option<f64>,
    /// Coupling at band centre; alternative to `--gamma0`.
    #[arg(long)]
    g0: Option<f64>,
    #[arg(long, default_value_t = 1001)]
    n_modes: usize,
    /// Coupling slope.
    #[arg(long, default_value_t = 0.0)]
    a: f64,
    #[arg(long)]
    omega_r: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    detuning: f64,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// detector, zeno2level, antizeno2level, freedecay, measureddecay, antizenodecay, engine or all.
    suite: String,
    #[arg(long, short = 'n')]
    n_trajectories: Option<usize>,
    #[arg(long, env = "QZENO_WORKERS")]
    workers: Option<usize>,
}

/// An error paired with the process exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl ToString) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.to_string(),
        }
    }

    fn simulation(message: impl ToString) -> Self {
        Self {
            code: EXIT_SIMULATION,
            message: message.to_string(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Oracle(args) => oracle(args),
        Command::Validate(args) => validate(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}

fn resolve_config(args: &SimulateArgs) -> Result<RunConfig, Failure> {
    let base = match (&args.preset, &args.config) {
        (Some(name), _) => presets::preset(name),
        (None, Some(path)) => RunConfig::from_file(path),
        (None, None) => return Err(Failure::usage("either a preset or --config is required")),
    }
    .map_err(Failure::usage)?;

    let mut overrides = Vec::with_capacity(args.overrides.len() + 3);
    for item in &args.overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| Failure::usage(format!("--set {item}: expected KEY=VALUE")))?;
        overrides.push((key.trim().to_string(), value.trim().to_string()));
    }
    if let Some(n) = args.n_trajectories {
        overrides.push(("ensemble.n_trajectories".into(), n.to_string()));
    }
    if let Some(seed) = args.seed {
        overrides.push(("ensemble.master_seed".into(), seed.to_string()));
    }
    if let Some(w) = args.workers {
        overrides.push(("ensemble.workers".into(), w.to_string()));
    }
    if let Some(out) = &args.output {
        overrides.push(("output.path".into(), format!("{:?}", out.display().to_string())));
    }
    let cfg = base.with_overrides(&overrides).map_err(Failure::usage)?;
    cfg.validate().map_err(Failure::usage)?;
    Ok(cfg)
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    if args.list {
        for name in presets::names() {
            println!("{name}");
        }
        return Ok(());
    }
    let cfg = resolve_config(&args)?;
    let model = Model::new(cfg.model_spec().map_err(Failure::usage)?).map_err(Failure::usage)?;
    let sim = cfg.simulation().map_err(Failure::usage)?;

    let dir = Path::new(&cfg.output.path);
    std::fs::create_dir_all(dir).map_err(|e| Failure::simulation(format!("{}: {e}", dir.display())))?;

    info!(
        "running {} trajectories, dt = {}, t_max = {}",
        cfg.ensemble.n_trajectories, cfg.simulation.dt, cfg.simulation.t_max
    );
    let start = Instant::now();
    let stats = cfg.run().map_err(Failure::simulation)?;
    let wall = start.elapsed().as_secs_f64();

    let ensemble_path = dir.join("ensemble.csv");
    write_ensemble_csv(&ensemble_path, &stats).map_err(Failure::simulation)?;
    if cfg.output.per_trajectory {
        for i in 0..cfg.ensemble.n_trajectories as u64 {
            let rec = run_trajectory(&model, &sim, RngStream::new(cfg.ensemble.master_seed, i))
                .map_err(Failure::simulation)?;
            write_trajectory_csv(&dir.join(format!("trajectory_{i:05}.csv")), &rec).map_err(Failure::simulation)?;
        }
    }
    Manifest::new(&cfg, args.preset.as_deref(), &stats, wall)
        .write(&dir.join("manifest.toml"))
        .map_err(Failure::simulation)?;

    println!(
        "{}: {} trajectories ({} failed), {} jumps, {:.2}s",
        ensemble_path.display(),
        stats.n_trajectories,
        stats.n_failed,
        stats.total_jumps,
        wall
    );
    if stats.n_failed > 0 {
        return Err(Failure::simulation(format!("{} trajectories failed", stats.n_failed)));
    }
    Ok(())
}

fn need(value: Option<f64>, flag: &str, formula: Formula) -> Result<f64, Failure> {
    value.ok_or_else(|| {
        Failure::usage(format!(
            "oracle {}: missing --{flag}",
            formula.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()
        ))
    })
}

impl OracleArgs {
    fn tau_m(&self) -> Result<f64, Failure> {
        match (self.tau_m, self.gamma, self.lambda) {
            (Some(t), _, _) => Ok(t),
            (None, Some(g), Some(l)) => oracles::measurement_time(g, l).map_err(Failure::usage),
            _ => Err(Failure::usage("missing --tau-m (or --gamma and --lambda)")),
        }
    }

    fn reservoir(&self) -> Result<ReservoirSpec, Failure> {
        let half_width = need(self.lambda_band, "lambda-band", self.formula)?;
        let spec = match (self.gamma0, self.g0) {
            (Some(g0_rate), _) => ReservoirSpec::with_golden_rate(self.n_modes, half_width, g0_rate, self.a, 0.0),
            (None, Some(g0)) => ReservoirSpec::new(self.n_modes, half_width, g0, self.a, 0.0),
            (None, None) => return Err(Failure::usage("missing --gamma0 (or --g0)")),
        };
        spec.map_err(Failure::usage)
    }
}

fn print_prediction(name: &str, p: &RatePrediction) {
    println!("formula: {name}");
    println!("expression: {}", p.formula.expression());
    println!("rate: {}", p.rate);
    println!("valid: {}", p.valid);
    println!("note: {}", p.validity_note);
}

fn oracle(args: OracleArgs) -> Result<(), Failure> {
    let name = args.formula.to_possible_value().expect("no skipped variants").get_name().to_string();
    let prediction = match args.formula {
        Formula::TauM => {
            let gamma = need(args.gamma, "gamma", args.formula)?;
            let lambda = need(args.lambda, "lambda", args.formula)?;
            let tau = oracles::measurement_time(gamma, lambda).map_err(Failure::usage)?;
            println!("formula: {name}");
            println!("expression: Γ/(2λ²)");
            println!("value: {tau}");
            return Ok(());
        }
        Formula::GoldenRule => oracles::golden_rule_rate(&args.reservoir()?),
        Formula::CorrectedFree => oracles::corrected_free_decay_rate(&args.reservoir()?),
        Formula::Zeno => {
            let drive = DriveParams {
                omega_r: need(args.omega_r, "omega-r", args.formula)?,
                detuning: args.detuning,
            };
            oracles::zeno_transition_rate(drive, args.tau_m()?).map_err(Failure::usage)?
        }
        Formula::MeasuredDecay => {
            oracles::measured_decay_rate(&args.reservoir()?, args.tau_m()?).map_err(Failure::usage)?
        }
        Formula::MeasuredDecaySeries => {
            oracles::measured_decay_series(&args.reservoir()?, args.tau_m()?).map_err(Failure::usage)?
        }
        Formula::AntiZeno => oracles::anti_zeno_rate(&args.reservoir()?, args.tau_m()?).map_err(Failure::usage)?,
        Formula::Resolvent => {
            let rate = oracles::resolvent_decay_rate(&args.reservoir()?).map_err(Failure::simulation)?;
            println!("formula: {name}");
            println!("expression: −2 Re z*, G(z*) = 0");
            println!("rate: {rate}");
            return Ok(());
        }
        Formula::Laplace => {
            let res = args.reservoir()?;
            let tau = args.tau_m()?;
            let rate = oracles::laplace_decay_rate(&res, tau).map_err(Failure::simulation)?;
            println!("formula: {name}");
            println!("expression: −2 Re z*, measured rate-equation residual R(z*) = 0");
            println!("rate: {rate}");
            return Ok(());
        }
    };
    print_prediction(&name, &prediction);
    Ok(())
}

fn validate(args: ValidateArgs) -> Result<(), Failure> {
    let suite: Suite = args.suite.parse().map_err(Failure::usage)?;
    let mut validator = Validator::new(ValidateOptions {
        n_trajectories: args.n_trajectories,
        workers: args.workers,
    });
    let criteria = suite.criteria();
    let mut failed = 0;
    for n in &criteria {
        let report = validator.run(*n);
        println!("{report}");
        if !report.passed() {
            failed += 1;
        }
    }
    println!("{suite}: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        return Err(Failure {
            code: EXIT_FAILED,
            message: String::new(),
        });
    }
    Ok(())
}

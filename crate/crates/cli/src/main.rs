//! Batch front end: run bundled or user scenarios and write CSV/JSON artifacts.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rotorsim::error::Error;
use rotorsim::estimator::calibrate_drag;
use rotorsim::harness::scenarios::{self, BundledKind, BUNDLED};
use rotorsim::harness::{calibration_flight_config, monte_carlo, run, MonteCarloSpec, ResultsTable, ScenarioConfig};

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SIMULATION: u8 = 3;

#[derive(Parser)]
#[command(name = "rotorsim", version, about = "Multirotor simulation and wind-estimation studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario.
    Run(RunArgs),
    /// Run a Monte Carlo wind-estimation study.
    Montecarlo(MonteCarloArgs),
    /// Fly the circle benchmark with aerodynamics on and off.
    BenchmarkCircle(BenchmarkArgs),
    /// Fly a still-air calibration flight and fit drag coefficients.
    Calibrate(RunArgs),
    /// List the bundled scenarios and studies.
    ListScenarios,
}

#[derive(Args)]
struct Common {
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file, or the name of a bundled scenario.
    #[arg(long)]
    config: String,
    #[command(flatten)]
    common: Common,
    /// Disable the aerodynamic wrench.
    #[arg(long)]
    no_aero: bool,
}

#[derive(Args)]
struct MonteCarloArgs {
    /// Study file, or the name of a bundled study.
    #[arg(long, default_value = "wind_study")]
    config: String,
    #[command(flatten)]
    common: Common,
    /// Override the number of trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads; 1 runs sequentially. Defaults to the available cores.
    #[arg(long)]
    parallel: Option<usize>,
    /// Disable the aerodynamic wrench in every trial.
    #[arg(long)]
    no_aero: bool,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Scenario file, or the name of a bundled scenario.
    #[arg(long, default_value = "circle")]
    config: String,
    #[command(flatten)]
    common: Common,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Parse(_) => EXIT_CONFIG,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => EXIT_IO,
            _ => EXIT_SIMULATION,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult = Result<(), Failure>;

fn config_error(message: String) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message,
    }
}

/// Text of a config given as a path or a bundled name.
fn load_text(config: &str, kind: BundledKind) -> Result<(String, String), Failure> {
    let path = Path::new(config);
    if path.exists() {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        return Ok((text, path.display().to_string()));
    }
    match scenarios::find(config) {
        Some(b) if b.kind == kind => Ok((b.text.to_string(), format!("bundled `{}`", b.name))),
        Some(b) => Err(config_error(format!("`{config}` is a bundled {}", describe(b.kind)))),
        None => Err(config_error(format!(
            "`{config}` is neither a file nor a bundled {} (see `rotorsim list-scenarios`)",
            describe(kind)
        ))),
    }
}

fn describe(kind: BundledKind) -> &'static str {
    match kind {
        BundledKind::Scenario => "scenario",
        BundledKind::MonteCarlo => "Monte Carlo study",
    }
}

fn load_scenario(config: &str, common: &Common, no_aero: bool) -> Result<ScenarioConfig, Failure> {
    let (text, origin) = load_text(config, BundledKind::Scenario)?;
    let mut cfg = ScenarioConfig::from_toml(&text).map_err(|e| config_error(format!("{origin}: {e}")))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if no_aero {
        cfg.aero = false;
    }
    Ok(cfg)
}

fn print_table(label: &str, table: &ResultsTable, wall: f64) {
    let s = &table.metadata.summary;
    println!("{label}");
    println!("  simulated      {:.2} s in {} steps ({wall:.2} s wall)", s.simulated_time, s.steps);
    println!("  position RMSE  {:.4} m (max {:.4} m)", s.position_rmse, s.max_position_error);
    println!("  saturated      {:.1}% of steps", 100.0 * s.saturated_fraction);
    println!(
        "  integrator     {} steps, {} rejected",
        s.integrator_steps, s.integrator_rejected
    );
    if let Some(r) = s.wind_rmse {
        println!(
            "  wind RMSE      {:.3} m/s (x {:.3}, y {:.3}, z {:.3}), {} skipped updates",
            r[3], r[0], r[1], r[2], s.skipped_updates
        );
    }
    if let Some(c) = &table.metadata.calibration {
        println!(
            "  fitted drag    [{:.4}, {:.4}, {:.4}]{}",
            c.coefficients.x,
            c.coefficients.y,
            c.coefficients.z,
            if c.warning() { " (weak excitation on some axes)" } else { "" }
        );
    }
}

/// Save a table; a failed run exits with the simulation code and points at
/// the failure record.
fn save_table(table: &ResultsTable, out: &Path, stem: &str) -> CliResult {
    table.save(out, stem)?;
    let json = out.join(format!("{stem}.json"));
    println!("  artifacts      {}, {}", out.join(format!("{stem}.csv")).display(), json.display());
    match &table.metadata.failure {
        Some(f) => Err(Failure {
            code: EXIT_SIMULATION,
            message: format!(
                "simulation failed at t = {:.3} s: {}; failure record in {}",
                f.t,
                f.cause,
                json.display()
            ),
        }),
        None => Ok(()),
    }
}

fn cmd_run(args: &RunArgs) -> CliResult {
    let cfg = load_scenario(&args.config, &args.common, args.no_aero)?;
    let start = Instant::now();
    let table = run(&cfg)?;
    print_table(&format!("scenario {}", cfg.name), &table, start.elapsed().as_secs_f64());
    save_table(&table, &args.common.out, &cfg.name)
}

fn cmd_calibrate(args: &RunArgs) -> CliResult {
    let base = load_scenario(&args.config, &args.common, args.no_aero)?;
    // A scenario whose estimator calibrates contributes its calibration
    // flight; any other scenario is flown as given.
    let cfg = calibration_flight_config(&base).unwrap_or_else(|| ScenarioConfig {
        estimator: None,
        ..base.clone()
    });
    let start = Instant::now();
    let mut table = run(&cfg)?;
    if table.metadata.failure.is_none() {
        let mass = cfg.vehicle.build()?.mass;
        table.metadata.calibration = Some(calibrate_drag(&table.calibration_samples(), mass)?);
    }
    print_table(&format!("calibration flight {}", cfg.name), &table, start.elapsed().as_secs_f64());
    save_table(&table, &args.common.out, &cfg.name)
}

fn cmd_benchmark(args: &BenchmarkArgs) -> CliResult {
    let on = load_scenario(&args.config, &args.common, false)?;
    let off = ScenarioConfig {
        aero: false,
        ..on.clone()
    };
    for (cfg, suffix) in [(&on, "aero"), (&off, "no_aero")] {
        let start = Instant::now();
        let table = run(cfg)?;
        let wall = start.elapsed().as_secs_f64();
        print_table(&format!("{} with {}", cfg.name, suffix.replace('_', " ")), &table, wall);
        let accel: Vec<f64> = table
            .rows
            .iter()
            .filter_map(|r| r.imu.as_ref().map(|s| s.accel.xy().norm_squared()))
            .collect();
        if !accel.is_empty() {
            let rms = (accel.iter().sum::<f64>() / accel.len() as f64).sqrt();
            println!("  body xy accel  {rms:.3} m/s² RMS");
        }
        save_table(&table, &args.common.out, &format!("{}_{suffix}", cfg.name))?;
    }
    Ok(())
}

fn cmd_montecarlo(args: &MonteCarloArgs) -> CliResult {
    let (text, origin) = load_text(&args.config, BundledKind::MonteCarlo)?;
    let mut spec = MonteCarloSpec::from_toml(&text).map_err(|e| config_error(format!("{origin}: {e}")))?;
    if let Some(seed) = args.common.seed {
        spec.seed = seed;
    }
    if let Some(trials) = args.trials {
        spec.trials = trials;
    }
    if args.no_aero {
        spec.scenario.aero = false;
    }
    spec.validate().map_err(|e| config_error(format!("{origin}: {e}")))?;
    let workers = args
        .parallel
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));

    let start = Instant::now();
    let report = monte_carlo(&spec, workers)?;
    let wall = start.elapsed().as_secs_f64();
    let s = &report.summary;
    println!("study {} (seed {}, {} workers, {wall:.1} s wall)", spec.name, spec.seed, workers.max(1));
    println!("  trials         {} succeeded, {} failed", s.succeeded, s.failed);
    println!(
        "  wind RMSE      median {:.3} m/s, quartiles {:.3} / {:.3}",
        s.median, s.quartiles[0], s.quartiles[1]
    );
    println!(
        "  within {:.2}    {:.1}% of successful trials",
        s.threshold,
        100.0 * s.fraction_within_threshold
    );
    match &s.decile_test {
        Some(t) => println!(
            "  drag deciles   weakest vs strongest (n = {}): U = {}, p = {:.4}",
            s.decile_size, t.u, t.p_value
        ),
        None => println!("  drag deciles   too few successful trials to compare"),
    }
    println!("  calibration    {} trials with weak excitation warnings", s.calibration_warnings);
    let dir = args.common.out.join(&spec.name);
    report.save(&dir)?;
    println!(
        "  artifacts      {}, {}",
        dir.join("trials.csv").display(),
        dir.join("summary.json").display()
    );
    Ok(())
}

fn cmd_list() -> CliResult {
    for b in BUNDLED {
        println!("{:<14} {:<10} {}", b.name, describe(b.kind), b.summary);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Montecarlo(a) => cmd_montecarlo(a),
        Command::BenchmarkCircle(a) => cmd_benchmark(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::ListScenarios => cmd_list(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

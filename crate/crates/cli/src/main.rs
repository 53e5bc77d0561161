use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use doublehinge::observability::{observability_verdict, DEFAULT_THRESHOLD};
use doublehinge::scenario::ScenarioFile;
use doublehinge::sim::{project_rates, TrajectorySample};
use doublehinge::study::{run_study, StudyConfig};
use doublehinge::{csvio, Error, GyroRecord, Mode};

const EXIT_USAGE: u8 = 1;
const EXIT_CRITERION: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "doublehinge", version, about = "Simulate, analyze and estimate a gyroscope-instrumented double-hinge chain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a ground-truth trajectory and noisy gyroscope measurements.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run the moving-horizon estimator and score it against the truth.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Measurement CSV; generated from the scenario when omitted.
        #[arg(long)]
        measurements: Option<PathBuf>,
        /// Trajectory CSV (truth for errors and the m1 anchor); generated when omitted.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Project the middle segment's rate and decide observability per sample.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Trajectory CSV; generated from the scenario when omitted.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Run the full study and check every acceptance criterion.
    Reproduce {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario TOML file; built-in defaults when omitted.
    #[arg(long, value_name = "PATH")]
    scenario: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Overrides the estimation mode.
    #[arg(long, value_name = "m1|m2")]
    mode: Option<Mode>,
    /// Overrides whether the outer segments' rates are free decision variables.
    #[arg(long, value_name = "BOOL", action = ArgAction::Set)]
    rates_free: Option<bool>,
}

impl Common {
    fn scenario(&self) -> Result<ScenarioFile, Error> {
        let mut s = match &self.scenario {
            Some(path) => ScenarioFile::load(path)?,
            None => ScenarioFile::default(),
        };
        if let Some(seed) = self.seed {
            s = s.with_seed(seed);
        }
        if let Some(mode) = self.mode {
            s.mode = mode;
        }
        if let Some(free) = self.rates_free {
            s.mhe.rates_free = free;
        }
        s.validate()?;
        Ok(s)
    }

    fn out_dir(&self) -> Result<&Path, Error> {
        fs::create_dir_all(&self.out).map_err(|source| Error::Io { path: self.out.clone(), source })?;
        Ok(&self.out)
    }
}

fn trajectory_for(scenario: &ScenarioFile, path: Option<&Path>) -> Result<Vec<TrajectorySample>, Error> {
    match path {
        Some(p) => csvio::read_trajectory(p),
        None => scenario.trajectory(),
    }
}

fn simulate(common: &Common) -> Result<u8, Error> {
    let s = common.scenario()?;
    let out = common.out_dir()?;
    let trajectory = s.trajectory()?;
    let records = s.measurements(&trajectory)?;
    csvio::write_trajectory(&out.join("trajectory.csv"), &trajectory)?;
    csvio::write_measurements(&out.join("measurements.csv"), &records)?;
    println!("{} samples of {} written to {}", trajectory.len(), s.movement, out.display());
    Ok(0)
}

fn estimate(common: &Common, measurements: Option<&Path>, trajectory: Option<&Path>) -> Result<u8, Error> {
    let s = common.scenario()?;
    let truth = trajectory_for(&s, trajectory)?;
    let records: Vec<GyroRecord> = match measurements {
        Some(p) => csvio::read_measurements(p)?,
        None => s.measurements(&truth)?,
    };
    let est = s.estimate(&truth, &records)?;
    let out = common.out_dir()?;
    csvio::write_estimates(&out.join("estimates.csv"), &est.run)?;
    csvio::write_errors(&out.join("errors.csv"), &est.times(), &est.errors)?;
    let flagged = est.run.steps.iter().filter(|r| !r.converged || r.singular).count();
    let last = est.errors.last().map_or(f64::NAN, |e| e.phi_ji.max(e.phi_ki));
    println!(
        "{} {}: final error {:.2} deg, max after 2 s {:.2} deg, {} of {} windows flagged",
        s.movement,
        s.mode,
        last.to_degrees(),
        est.max_error_after(2.0).to_degrees(),
        flagged,
        est.run.steps.len()
    );
    Ok(0)
}

fn analyze(common: &Common, trajectory: Option<&Path>) -> Result<u8, Error> {
    let s = common.scenario()?;
    let samples = trajectory_for(&s, trajectory)?;
    let projections = project_rates(&samples, &s.chain)?;
    let verdicts = samples
        .iter()
        .map(|x| observability_verdict(x, &s.chain, DEFAULT_THRESHOLD))
        .collect::<Result<Vec<_>, _>>()?;
    let out = common.out_dir()?;
    csvio::write_projections(&out.join("projections.csv"), &projections)?;
    csvio::write_verdicts(&out.join("verdicts.csv"), &verdicts)?;
    let observable = verdicts.iter().filter(|v| v.observable).count();
    println!(
        "{}: observable at {} of {} samples ({:.1}%)",
        s.movement,
        observable,
        verdicts.len(),
        100.0 * observable as f64 / verdicts.len().max(1) as f64
    );
    Ok(0)
}

fn reproduce(common: &Common) -> Result<u8, Error> {
    let cfg = StudyConfig::from_base(common.scenario()?);
    let (report, runs) = run_study(&cfg)?;
    let out = common.out_dir()?;
    for run in &runs {
        let path = out.join(format!("errors_{}.csv", run.label()));
        csvio::write_errors(&path, &run.estimation.times(), &run.estimation.errors)?;
    }
    let path = out.join("report.json");
    let json = serde_json::to_string_pretty(&report).expect("report is JSON-representable");
    fs::write(&path, json + "\n").map_err(|source| Error::Io { path: path.clone(), source })?;
    for c in &report.criteria {
        println!("{}", c.line());
    }
    let failed = report.criteria.iter().filter(|c| !c.passed).count();
    println!("{} of {} criteria passed; report in {}", report.criteria.len() - failed, report.criteria.len(), path.display());
    Ok(if report.passed { 0 } else { EXIT_CRITERION })
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Csv { .. } => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Simulate { common } => simulate(common),
        Command::Estimate { common, measurements, trajectory } => {
            estimate(common, measurements.as_deref(), trajectory.as_deref())
        }
        Command::Analyze { common, trajectory } => analyze(common, trajectory.as_deref()),
        Command::Reproduce { common } => reproduce(common),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

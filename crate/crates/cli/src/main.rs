use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dperm::harness::{emit, run_sweep, DatasetSource};
use dperm::oracle::{attach_excess_risk, solve_cached};
use dperm::solvers::DEFAULT_WIDTH_SAMPLES;
use dperm::{ConvexBody, DataProfile, Dataset, ExperimentSpec, Loss, SolverConfig};

#[derive(Parser)]
#[command(name = "dperm", version, about = "Differentially private ERM over convex bodies")]
struct Cli {
    /// Seed for the solver noise, the width estimate or the data generator.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (width, solve) or directory (bench).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Worker threads for sweeps; 0 uses every core.
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    /// Disable all privacy noise.
    #[arg(long, global = true)]
    non_private: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo Gaussian width of a body given as JSON.
    Width {
        body: PathBuf,
        #[arg(long, default_value_t = DEFAULT_WIDTH_SAMPLES)]
        samples: usize,
    },
    /// Run one solver on a CSV dataset and report its excess risk.
    Solve {
        config: PathBuf,
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = Profile::Lasso)]
        profile: Profile,
    },
    /// Run an experiment sweep and write records.csv and summary.json.
    Bench { experiment: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Lasso,
    Unrestricted,
}

impl From<Profile> for DataProfile {
    fn from(p: Profile) -> Self {
        match p {
            Profile::Lasso => DataProfile::Lasso,
            Profile::Unrestricted => DataProfile::Unrestricted,
        }
    }
}

type Failure = Box<dyn std::error::Error>;

fn write_json(text: String, output: Option<&Path>) -> Result<(), Failure> {
    match output {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn width(cli: &Cli, body: &Path, samples: usize) -> Result<(), Failure> {
    let body = ConvexBody::from_json(&std::fs::read_to_string(body)?)?;
    let est = body.gaussian_width_mc(samples, cli.seed.unwrap_or(0))?;
    write_json(serde_json::to_string_pretty(&est)?, cli.output.as_deref())
}

fn solve(cli: &Cli, config: &Path, data: &Path, profile: Profile) -> Result<(), Failure> {
    let mut cfg = SolverConfig::from_json(&std::fs::read_to_string(config)?)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.non_private {
        cfg.budget = cfg.budget.without_noise();
    }
    let data = Dataset::from_csv(data, profile.into())?;
    let mut report = dperm::solve(&cfg, &data)?;
    let oracle = solve_cached(&cfg.body, &cfg.loss, &data)?;
    attach_excess_risk(&mut report, &oracle, &Loss::new(cfg.loss.clone())?, &data, &cfg.body)?;
    write_json(serde_json::to_string_pretty(&report)?, cli.output.as_deref())
}

fn bench(cli: &Cli, experiment: &Path) -> Result<(), Failure> {
    let mut spec = ExperimentSpec::from_file(experiment)?;
    if let Some(p) = cli.parallelism {
        spec.parallelism = p;
    }
    if cli.non_private {
        spec.non_private = true;
    }
    if let (Some(seed), DatasetSource::Lasso(g)) = (cli.seed, &mut spec.dataset) {
        g.seed = seed;
    }
    let dir = cli
        .output
        .clone()
        .or_else(|| spec.output.clone())
        .unwrap_or_else(|| PathBuf::from("results"));
    let outcome = run_sweep(&spec)?;
    let report = emit(&outcome, &dir)?;
    for s in &report.summary.slopes {
        eprintln!("{}: slope {:.3} +- {:.3} over {} sizes", s.solver, s.slope, s.std_error, s.points);
    }
    eprintln!(
        "{} records, {} failed cells, written to {}",
        outcome.records.len(),
        outcome.failures.len(),
        dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Width { body, samples } => width(&cli, body, *samples),
        Command::Solve { config, data, profile } => solve(&cli, config, data, *profile),
        Command::Bench { experiment } => bench(&cli, experiment),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

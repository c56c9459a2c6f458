use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use delayshare::allocation::{Method, SamplingPlan, DEFAULT_EXACT_CUTOFF};
use delayshare::cli::{self, RuleChoice};
use delayshare::experiments::{PlanAdjustment, StudyOptions};
use delayshare::file::ProjectFile;
use delayshare::Error;

#[derive(Parser)]
#[command(
    name = "delayshare",
    version,
    about = "Allocate project delay costs among activities"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Input {
    /// Project file (JSON, or CSV with --delta)
    path: PathBuf,
    /// Override (or, for CSV input, supply) the delivery threshold
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(clap::Args)]
struct Sampling {
    /// Number of sampled permutations
    #[arg(long, default_value_t = 1000)]
    m: usize,
    /// Monte Carlo rows for the expected-cost game
    #[arg(long, default_value_t = 1000)]
    m1: usize,
    #[arg(long, env = "DELAYSHARE_SEED", default_value_t = 1)]
    seed: u64,
    /// Significance level for relative errors
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Worker threads (0 = all cores)
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Largest player count evaluated exactly
    #[arg(long, default_value_t = DEFAULT_EXACT_CUTOFF)]
    exact_cutoff: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
    method: MethodArg,
}

impl Sampling {
    fn plan(&self) -> SamplingPlan {
        SamplingPlan {
            m: self.m,
            m1: self.m1,
            seed: self.seed,
            alpha: self.alpha,
            workers: self.workers,
            exact_cutoff: self.exact_cutoff,
            method: match self.method {
                MethodArg::Auto => Method::Auto,
                MethodArg::Exact => Method::Exact,
                MethodArg::Sampled => Method::Sampled,
            },
            ..SamplingPlan::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Auto,
    Exact,
    Sampled,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Det,
    Stoch,
}

#[derive(Clone, Copy, ValueEnum)]
enum AdjustArg {
    Clamp,
    Raw,
}

#[derive(Subcommand)]
enum Command {
    /// Check a project file and report every problem found
    Validate {
        #[command(flatten)]
        input: Input,
    },
    /// Early times, makespan and delay cost
    Duration {
        #[command(flatten)]
        input: Input,
    },
    /// Allocate the realised delay cost
    Allocate {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value_t = RuleArg::Stoch)]
        rule: RuleArg,
        #[command(flatten)]
        sampling: Sampling,
        /// Write the allocation as JSON (or CSV for a .csv path)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Conditional study over simulated delayed realisations
    Experiment {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = 1000)]
        runs: usize,
        #[command(flatten)]
        sampling: Sampling,
        /// Plan used by the deterministic rule when a realisation undercuts the mean
        #[arg(long, value_enum, default_value_t = AdjustArg::Clamp)]
        sh_plan: AdjustArg,
        #[arg(long, default_value_t = delayshare::experiments::DEFAULT_MAX_ATTEMPTS)]
        max_attempts: u64,
        #[arg(long, default_value = "study")]
        outdir: PathBuf,
    },
}

fn load(input: &Input) -> Result<ProjectFile, Error> {
    ProjectFile::load(&input.path, input.delta)
}

fn run(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Validate { input } => {
            let file = load(&input)?;
            let report = cli::cmd_validate(&file);
            print!("{}", report.render());
            Ok(if report.is_valid() {
                cli::EXIT_OK
            } else {
                cli::EXIT_INVALID
            })
        }
        Command::Duration { input } => {
            let report = cli::cmd_duration(&load(&input)?)?;
            print!("{}", report.render());
            Ok(cli::EXIT_OK)
        }
        Command::Allocate {
            input,
            rule,
            sampling,
            out,
        } => {
            let rule = match rule {
                RuleArg::Det => RuleChoice::Det,
                RuleArg::Stoch => RuleChoice::Stoch,
            };
            let report = cli::cmd_allocate(&load(&input)?, rule, &sampling.plan())?;
            print!("{}", report.render());
            if let Some(path) = out {
                report.write(&path)?;
            }
            Ok(cli::EXIT_OK)
        }
        Command::Experiment {
            input,
            runs,
            sampling,
            sh_plan,
            max_attempts,
            outdir,
        } => {
            let file = load(&input)?;
            let mut opts = StudyOptions::new(runs, sampling.plan());
            opts.max_attempts = max_attempts;
            opts.adjustment = match sh_plan {
                AdjustArg::Clamp => PlanAdjustment::Clamp,
                AdjustArg::Raw => PlanAdjustment::Raw,
            };
            let outcome = cli::cmd_experiment(&file, &opts, &outdir)?;
            print!("{}", cli::render_study(&file.names(), &outcome));
            println!("artifacts written to {}", display(&outdir));
            Ok(cli::EXIT_OK)
        }
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}

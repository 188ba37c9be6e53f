use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use geosurv::cli::{self, SeedOverrides};
use geosurv::geo::{AttachPolicy, MissingCellPolicy, OnFailure};

#[derive(Parser)]
#[command(name = "geosurv", version, about = "StateESR survival experiments")]
struct Cli {
    /// Repeat for more log output (warn, info, debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort with population and life tables.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Attach state_esr to a cohort.
    Features {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        population: PathBuf,
        #[arg(long)]
        esr: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Fail when any subject cannot be given a StateESR value.
        #[arg(long)]
        abort_on_failure: bool,
        /// Use the nearest available age for missing life-table cells.
        #[arg(long)]
        nearest_age: bool,
    },
    /// Fit a Cox or Weibull model.
    Fit {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Score a cohort with a fitted model and report the C-index.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Run the with/without-geography subset experiment.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        synth_seed: Option<u64>,
        #[arg(long)]
        split_seed: Option<u64>,
        #[arg(long)]
        subset_seed: Option<u64>,
        #[arg(long)]
        bootstrap_seed: Option<u64>,
    },
    /// Recompute report.csv from per_subset.csv.
    Report {
        #[arg(long)]
        per_subset: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let level = match args.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match args.command {
        Command::Synth { config, out, seed } => cli::cmd_synth(config.as_deref(), &out, seed),
        Command::Features {
            cohort,
            population,
            esr,
            out,
            abort_on_failure,
            nearest_age,
        } => {
            let policy = AttachPolicy {
                missing_cell: if nearest_age {
                    MissingCellPolicy::NearestAge
                } else {
                    MissingCellPolicy::Renormalize
                },
                on_failure: if abort_on_failure {
                    OnFailure::Abort
                } else {
                    OnFailure::DropRow
                },
            };
            cli::cmd_features(&cohort, &population, &esr, &out, policy)
        }
        Command::Fit { cohort, config, out } => cli::cmd_fit(&cohort, config.as_deref(), &out),
        Command::Eval { model, cohort, out } => cli::cmd_eval(&model, &cohort, &out),
        Command::Experiment {
            config,
            out,
            synth_seed,
            split_seed,
            subset_seed,
            bootstrap_seed,
        } => cli::cmd_experiment(
            &config,
            &out,
            &SeedOverrides {
                synth_seed,
                split_seed,
                subset_seed,
                bootstrap_seed,
            },
        ),
        Command::Report {
            per_subset,
            config,
            out,
        } => cli::cmd_report(&per_subset, config.as_deref(), &out),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

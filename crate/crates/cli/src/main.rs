use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod failure;

use failure::Failure;

#[derive(Parser, Debug)]
#[command(name = "pdiag", version, about = "Personality diagnosis recommender experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run algorithms under withholding protocols and write MAD/significance reports.
    Evaluate(EvaluateArgs),
    /// Predict every unrated title for an active profile.
    Predict(PredictArgs),
    /// Simulate query elicitation for one held-out user.
    Elicit(ElicitArgs),
    /// Drop low-value titles or users from a ratings file.
    Prune(PruneArgs),
    /// Generate synthetic train/test ratings.
    GenData(GenDataArgs),
    /// Convert a user_id,doc_id,action log into ratings.
    ActionsToRatings(ActionsArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Rating scale: comma list ("0,1,2") or range ("0..5").
    #[arg(long)]
    pub scale: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; defaults to available cores. Results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long)]
    pub ratings: PathBuf,
    /// PD noise parameter.
    #[arg(long, conflicts_with = "sigma_from_data")]
    pub sigma: Option<f64>,
    /// Set sigma to the standard deviation of the training ratings.
    #[arg(long)]
    pub sigma_from_data: bool,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Held-out users; without it users are split by --train-fraction.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub train_fraction: f64,
    #[arg(long, value_delimiter = ',', default_value = "pd,correlation,vsim")]
    pub algorithms: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "allbut1,given10,given5,given2")]
    pub protocols: Vec<String>,
    #[arg(long, default_value_t = 100_000)]
    pub permutations: usize,
    /// Also report the extreme-ratings subset.
    #[arg(long)]
    pub extreme: bool,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Active user's ratings as item_id,rating.
    #[arg(long)]
    pub profile: PathBuf,
    #[arg(long, default_value = "pd")]
    pub algorithm: String,
}

#[derive(Args, Debug)]
pub struct ElicitArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    /// The held-out user's full ratings (item_id,rating); they answer the queries.
    #[arg(long)]
    pub answers: PathBuf,
    /// Ratings revealed before elicitation starts.
    #[arg(long, default_value_t = 2)]
    pub given: usize,
    #[arg(long, default_value_t = 5)]
    pub budget: usize,
    /// Cost of the first query.
    #[arg(long, default_value_t = 0.0)]
    pub cost: f64,
    /// Increase in marginal cost per additional query.
    #[arg(long, default_value_t = 0.0)]
    pub cost_slope: f64,
    /// Utility per nat of expected information gain.
    #[arg(long, default_value_t = 1.0)]
    pub gain_to_benefit: f64,
    /// voi or random.
    #[arg(long, default_value = "voi")]
    pub order: String,
}

#[derive(Args, Debug)]
pub struct PruneArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    /// titles or users.
    #[arg(long, default_value = "titles")]
    pub target: String,
    #[arg(long, default_value_t = 0.8)]
    pub keep_fraction: f64,
    #[arg(long, default_value_t = pdiag::voi::DEFAULT_PSEUDO_PROFILES)]
    pub pseudo_profiles: usize,
    /// Held-out users; adds an all-but-1 comparison against random title pruning.
    #[arg(long)]
    pub test: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 500)]
    pub n_users: usize,
    #[arg(long, default_value_t = 200)]
    pub n_test_users: usize,
    #[arg(long, default_value_t = 100)]
    pub n_titles: usize,
    #[arg(long, default_value_t = 40)]
    pub ratings_per_user: usize,
    #[arg(long, default_value_t = 20)]
    pub personalities: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_true: f64,
}

#[derive(Args, Debug)]
pub struct ActionsArgs {
    #[command(flatten)]
    pub common: Common,
    /// Log with header user_id,doc_id,action.
    #[arg(long)]
    pub actions: PathBuf,
}

fn run(cli: Cli) -> Result<(), Failure> {
    let jobs = match &cli.command {
        Command::Evaluate(a) => a.common.jobs,
        Command::Predict(a) => a.common.jobs,
        Command::Elicit(a) => a.common.jobs,
        Command::Prune(a) => a.common.jobs,
        Command::GenData(a) => a.common.jobs,
        Command::ActionsToRatings(a) => a.common.jobs,
    };
    if let Some(j) = jobs {
        if j == 0 {
            return Err(Failure::usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Failure::new("internal", e.to_string()))?;
    }
    match cli.command {
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Elicit(a) => commands::elicit(&a),
        Command::Prune(a) => commands::prune(&a),
        Command::GenData(a) => commands::gen_data(&a),
        Command::ActionsToRatings(a) => commands::actions_to_ratings(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("error: usage: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code())
        }
    }
}

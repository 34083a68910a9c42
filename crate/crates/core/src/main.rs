use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use coldstart::config::{self, ExperimentConfig, RawConfig, REQUIRED_KEYS};
use coldstart::runner;

/// Compare bandit policies on a cold-start rating replay.
///
/// List-valued flags take comma-separated values; hyperparameter lists are
/// expanded into a grid per policy.
#[derive(Parser, Debug)]
#[command(name = "coldstart", version, allow_negative_numbers = true)]
struct Cli {
    /// Config file of `key=value` lines using the flag names below; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ratings file.
    #[arg(long)]
    dataset: Option<String>,
    /// movielens (`u::i::r::ts`) or csv (`user,item,rating`).
    #[arg(long)]
    format: Option<String>,
    /// Rating scale ceiling for csv input.
    #[arg(long)]
    scale_max: Option<String>,
    /// new-user or new-item.
    #[arg(long)]
    problem: Option<String>,
    /// Number of base rows used as arm contexts.
    #[arg(long)]
    base_k: Option<String>,
    /// Imputation methods: zero, average, svd, alswr.
    #[arg(long)]
    impute: Option<String>,
    /// Rank for svd and als imputation.
    #[arg(long)]
    rank: Option<String>,
    /// Policies: random, aver, egreedy, ucb, exp3, thompson, linucb, alinucb.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    /// Epsilon-greedy schedule constant.
    #[arg(long)]
    c: Option<String>,
    /// Epsilon-greedy gap parameter.
    #[arg(long)]
    d: Option<String>,
    /// EXP3 exploration rate.
    #[arg(long)]
    gamma: Option<String>,
    /// Thompson sampling scale.
    #[arg(long)]
    v: Option<String>,
    /// Horizon (steps per run).
    #[arg(long)]
    t: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    max_users: Option<String>,
    #[arg(long)]
    max_items: Option<String>,
    #[arg(long)]
    subsample_seed: Option<String>,
    #[arg(long)]
    min_ratings: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Write each filled base matrix as csv.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    dump_base: Option<String>,
    /// Record wall times (off makes every output file reproducible).
    #[arg(long)]
    timing: Option<String>,
}

impl Cli {
    fn overrides(&self) -> RawConfig {
        let pairs = [
            ("dataset", &self.dataset),
            ("format", &self.format),
            ("scale-max", &self.scale_max),
            ("problem", &self.problem),
            ("base-k", &self.base_k),
            ("impute", &self.impute),
            ("rank", &self.rank),
            ("policy", &self.policy),
            ("alpha", &self.alpha),
            ("c", &self.c),
            ("d", &self.d),
            ("gamma", &self.gamma),
            ("v", &self.v),
            ("t", &self.t),
            ("seeds", &self.seeds),
            ("max-users", &self.max_users),
            ("max-items", &self.max_items),
            ("subsample-seed", &self.subsample_seed),
            ("min-ratings", &self.min_ratings),
            ("workers", &self.workers),
            ("out", &self.out),
            ("dump-base", &self.dump_base),
            ("timing", &self.timing),
        ];
        pairs
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig, config::ConfigError> {
    let file = match &cli.config {
        Some(p) => config::read_config_file(p)?,
        None => RawConfig::new(),
    };
    let raw = config::merge(file, cli.overrides())?;
    ExperimentConfig::from_raw(&raw)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if std::env::args_os().len() == 1 {
        eprintln!("usage: coldstart --dataset <path> [--config <file>] [options]");
        eprintln!("required keys: {}", REQUIRED_KEYS.join(", "));
        eprintln!("run `coldstart --help` for all options");
        return ExitCode::from(2);
    }
    let cli = Cli::parse();
    let cfg = match resolve(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match runner::run_matrix(&cfg) {
        Ok(outcome) => {
            println!("{}", runner::SUMMARY_HEADER);
            for r in &outcome.summary {
                println!(
                    "{},{},{:.4},{:.4},{:.3},{}",
                    r.policy, r.params, r.mean_regret, r.std_regret, r.mean_seconds, r.cells
                );
            }
            if outcome.success() {
                ExitCode::SUCCESS
            } else {
                eprintln!(
                    "{} cell(s) failed; see {}",
                    outcome.failures.len(),
                    cfg.out.join("failures.csv").display()
                );
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

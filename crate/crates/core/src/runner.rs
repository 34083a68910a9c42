//! Runs a grid of (policy, hyperparameters, imputation, seed) cells and writes
//! per-run traces plus aggregate tables.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{DataFormat, ExperimentConfig};
use crate::dataset::{self, DatasetError, RatingDataset};
use crate::evaluator::{run_experiment, EvalSet, ReplayConfig};
use crate::imputation::{fill, BaseMatrix, ImputationMethod, ImputeError};
use crate::policies::PolicySpec;

pub const SUMMARY_HEADER: &str = "policy,params,mean_regret,std_regret,mean_seconds,cells";
pub const RUNS_HEADER: &str = "policy,params,seed,final_regret,steps,seconds,early_stopped";
pub const FAILURES_HEADER: &str = "policy,params,seed,error";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("imputation '{method}' failed for seed {seed}: {source}")]
    Impute {
        method: String,
        seed: u64,
        #[source]
        source: ImputeError,
    },
    #[error("base size {k} leaves no evaluation rows ({rows} rows after filtering)")]
    BaseTooLarge { k: usize, rows: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("thread pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Stable 64-bit seed from labelled parts.
pub fn derive_seed(parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0x1f]);
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// The dataset after loading, subsampling, orientation, filtering and normalization.
pub fn load_prepared(cfg: &ExperimentConfig) -> Result<RatingDataset, RunError> {
    let raw = match cfg.format {
        DataFormat::MovieLens => dataset::load_movielens(&cfg.dataset)?,
        DataFormat::Csv => dataset::load_csv_triples(&cfg.dataset, cfg.scale_max)?,
    };
    log::info!(
        "loaded {}: {} users, {} items, {} ratings",
        cfg.dataset.display(),
        raw.n_users(),
        raw.n_items(),
        raw.len()
    );
    let sub = if cfg.max_users.is_some() || cfg.max_items.is_some() {
        raw.subsample(cfg.max_users, cfg.max_items, cfg.subsample_seed)?
    } else {
        raw
    };
    let oriented = dataset::orient(&sub, cfg.problem);
    let filtered = oriented.filter_min_ratings(cfg.min_ratings.max(1))?;
    Ok(dataset::normalize(&filtered))
}

/// Square base when the data allows it, otherwise half the rows.
pub fn default_base_k(rows: usize, arms: usize) -> usize {
    if arms < rows {
        arms
    } else {
        (rows / 2).max(1)
    }
}

/// Per-seed data shared by every cell of that seed.
struct SeedData {
    seed: u64,
    eval: EvalSet,
    bases: Vec<Arc<BaseMatrix>>,
}

#[derive(Debug, Clone)]
struct Cell {
    spec: PolicySpec,
    /// Index into the imputation list; contextual policies only.
    impute: Option<usize>,
    seed_idx: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub policy: String,
    pub params: String,
    pub seed: u64,
    pub final_regret: f64,
    pub steps: usize,
    pub seconds: f64,
    pub early_stopped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub policy: String,
    pub params: String,
    pub mean_regret: f64,
    pub std_regret: f64,
    pub mean_seconds: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub policy: String,
    pub params: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct MatrixOutcome {
    /// The configuration with data-dependent defaults filled in.
    pub resolved: ExperimentConfig,
    pub runs: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
    pub failures: Vec<CellFailure>,
}

impl MatrixOutcome {
    pub fn success(&self) -> bool {
        self.failures.is_empty()
    }
}

fn cell_params(spec: &PolicySpec, impute: Option<ImputationMethod>) -> String {
    let p = spec.params();
    match impute {
        Some(m) if p.is_empty() => format!("impute={}", m.id()),
        Some(m) => format!("{p};impute={}", m.id()),
        None => p,
    }
}

pub fn trace_file_name(policy: &str, params: &str, seed: u64) -> String {
    let mut name = policy.to_string();
    if !params.is_empty() {
        name.push('_');
        name.push_str(&params.replace(';', "_"));
    }
    format!("{name}_seed{seed}.csv")
}

/// Sample mean and standard deviation (`n - 1` denominator, 0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write_lines(
    path: &Path,
    header: &str,
    lines: impl Iterator<Item = String>,
) -> Result<(), RunError> {
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    writeln!(w, "{header}").map_err(io_err(path))?;
    for line in lines {
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn summary_line(r: &SummaryRow) -> String {
    format!(
        "{},{},{},{},{},{}",
        r.policy,
        csv_field(&r.params),
        r.mean_regret,
        r.std_regret,
        r.mean_seconds,
        r.cells
    )
}

/// Runs the whole grid and writes `config.resolved`, `traces/`, `runs.csv`,
/// `summary.csv`, `best.csv` and, when any cell failed, `failures.csv` under `cfg.out`.
pub fn run_matrix(cfg: &ExperimentConfig) -> Result<MatrixOutcome, RunError> {
    let started = Instant::now();
    let data = load_prepared(cfg)?;
    log::info!("data prepared in {:.3}s", started.elapsed().as_secs_f64());
    let rows = data.n_users();
    let arms = data.n_items();
    let k = cfg.base_k.unwrap_or_else(|| default_base_k(rows, arms));
    if k >= rows {
        return Err(RunError::BaseTooLarge { k, rows });
    }
    log::info!(
        "{} problem: {rows} rows, {arms} arms, {} ratings, base k = {k}",
        cfg.problem,
        data.len()
    );

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;

    let any_contextual = cfg.policies.iter().any(PolicySpec::is_contextual);
    let started = Instant::now();
    let seed_data: Vec<SeedData> = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| prepare_seed(cfg, &data, k, seed, any_contextual))
            .collect::<Result<Vec<_>, RunError>>()
    })?;
    log::info!(
        "splits and imputation done in {:.3}s",
        started.elapsed().as_secs_f64()
    );

    let horizon = cfg
        .horizon
        .unwrap_or_else(|| (seed_data[0].eval.n_ratings() / 10).max(1));
    let mut resolved = cfg.clone();
    resolved.base_k = Some(k);
    resolved.horizon = Some(horizon);

    let out = &cfg.out;
    let traces_dir = out.join("traces");
    fs::create_dir_all(&traces_dir).map_err(io_err(&traces_dir))?;
    let resolved_path = out.join("config.resolved");
    fs::write(&resolved_path, resolved.to_config_text()).map_err(io_err(&resolved_path))?;

    if cfg.dump_base && any_contextual {
        for sd in &seed_data {
            for (m, base) in cfg.imputations.iter().zip(&sd.bases) {
                let path = out.join(format!("base_{}_seed{}.csv", m.id(), sd.seed));
                let f = File::create(&path).map_err(io_err(&path))?;
                base.write_csv(BufWriter::new(f)).map_err(io_err(&path))?;
            }
        }
    }

    let mut cells = Vec::new();
    for spec in &cfg.policies {
        let imputes: Vec<Option<usize>> = if spec.is_contextual() {
            (0..cfg.imputations.len()).map(Some).collect()
        } else {
            vec![None]
        };
        for impute in imputes {
            for seed_idx in 0..seed_data.len() {
                cells.push(Cell {
                    spec: *spec,
                    impute,
                    seed_idx,
                });
            }
        }
    }

    let results: Vec<Result<RunRecord, CellFailure>> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| run_cell(cfg, cell, &seed_data, horizon, &traces_dir))
            .collect()
    });

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(run) => runs.push(run),
            Err(f) => {
                log::error!("{} [{}] seed {}: {}", f.policy, f.params, f.seed, f.error);
                failures.push(f);
            }
        }
    }

    let summary = summarize(&runs);
    write_lines(
        &out.join("runs.csv"),
        RUNS_HEADER,
        runs.iter().map(|r| {
            format!(
                "{},{},{},{},{},{},{}",
                r.policy,
                csv_field(&r.params),
                r.seed,
                r.final_regret,
                r.steps,
                r.seconds,
                r.early_stopped
            )
        }),
    )?;
    write_lines(
        &out.join("summary.csv"),
        SUMMARY_HEADER,
        summary.iter().map(summary_line),
    )?;
    write_lines(
        &out.join("best.csv"),
        SUMMARY_HEADER,
        best_per_policy(&summary).iter().map(summary_line),
    )?;
    let failures_path = out.join("failures.csv");
    if failures.is_empty() {
        if failures_path.exists() {
            fs::remove_file(&failures_path).map_err(io_err(&failures_path))?;
        }
    } else {
        write_lines(
            &failures_path,
            FAILURES_HEADER,
            failures.iter().map(|f| {
                format!(
                    "{},{},{},{}",
                    f.policy,
                    csv_field(&f.params),
                    f.seed,
                    csv_field(&f.error)
                )
            }),
        )?;
    }

    Ok(MatrixOutcome {
        resolved,
        runs,
        summary,
        failures,
    })
}

fn prepare_seed(
    cfg: &ExperimentConfig,
    data: &RatingDataset,
    k: usize,
    seed: u64,
    any_contextual: bool,
) -> Result<SeedData, RunError> {
    let s = seed.to_string();
    let split = dataset::split_base_eval(data, k, derive_seed(&["split", &s]))?;
    let eval = EvalSet::from_dataset(&split.eval);
    let methods: Vec<ImputationMethod> = if any_contextual {
        cfg.imputations.clone()
    } else {
        // Context-free policies only need the arm count.
        vec![ImputationMethod::Zero]
    };
    let mut bases = Vec::with_capacity(methods.len());
    for m in methods {
        let base =
            fill(&split.base_raw, m, derive_seed(&["impute", m.id(), &s])).map_err(|source| {
                RunError::Impute {
                    method: m.to_string(),
                    seed,
                    source,
                }
            })?;
        bases.push(Arc::new(base));
    }
    Ok(SeedData { seed, eval, bases })
}

fn run_cell(
    cfg: &ExperimentConfig,
    cell: &Cell,
    seed_data: &[SeedData],
    horizon: usize,
    traces_dir: &Path,
) -> Result<RunRecord, CellFailure> {
    let sd = &seed_data[cell.seed_idx];
    let method = cell.impute.map(|i| cfg.imputations[i]);
    let policy = cell.spec.id().to_string();
    let params = cell_params(&cell.spec, method);
    let s = sd.seed.to_string();
    let fail = |error: String| CellFailure {
        policy: policy.clone(),
        params: params.clone(),
        seed: sd.seed,
        error,
    };

    let base = Arc::clone(&sd.bases[cell.impute.unwrap_or(0)]);
    let n = base.n();
    let mut p = cell
        .spec
        .build(base, derive_seed(&["policy", &policy, &params, &s]))
        .map_err(|e| fail(e.to_string()))?;
    let replay = ReplayConfig {
        horizon,
        user_seed: derive_seed(&["users", &s]),
    };
    let trace =
        run_experiment(&replay, n, &sd.eval, p.as_mut()).map_err(|e| fail(e.to_string()))?;

    let expected = horizon.min(sd.eval.n_users() * n);
    if trace.steps() != expected {
        return Err(fail(format!(
            "trace has {} steps, expected {expected}",
            trace.steps()
        )));
    }

    let path = traces_dir.join(trace_file_name(&policy, &params, sd.seed));
    File::create(&path)
        .and_then(|f| trace.write_csv(BufWriter::new(f)))
        .map_err(|e| fail(format!("{}: {e}", path.display())))?;

    let seconds = if cfg.timing {
        trace.wall_time_seconds
    } else {
        0.0
    };
    log::info!(
        "{policy} [{params}] seed {}: regret {} over {} steps in {seconds:.3}s",
        sd.seed,
        trace.final_regret(),
        trace.steps()
    );
    Ok(RunRecord {
        policy,
        params,
        seed: sd.seed,
        final_regret: trace.final_regret(),
        steps: trace.steps(),
        seconds,
        early_stopped: trace.early_stopped,
    })
}

/// One row per (policy, params) in first-seen order.
pub fn summarize(runs: &[RunRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(&str, &str)> = Vec::new();
    for r in runs {
        if !keys.contains(&(r.policy.as_str(), r.params.as_str())) {
            keys.push((&r.policy, &r.params));
        }
    }
    keys.into_iter()
        .map(|(policy, params)| {
            let group: Vec<&RunRecord> = runs
                .iter()
                .filter(|r| r.policy == policy && r.params == params)
                .collect();
            let regrets: Vec<f64> = group.iter().map(|r| r.final_regret).collect();
            let (mean_regret, std_regret) = mean_std(&regrets);
            let secs: Vec<f64> = group.iter().map(|r| r.seconds).collect();
            SummaryRow {
                policy: policy.to_string(),
                params: params.to_string(),
                mean_regret,
                std_regret,
                mean_seconds: mean_std(&secs).0,
                cells: group.len(),
            }
        })
        .collect()
}

/// Lowest mean regret per policy; ties keep the first row.
pub fn best_per_policy(summary: &[SummaryRow]) -> Vec<SummaryRow> {
    let mut best: Vec<SummaryRow> = Vec::new();
    for row in summary {
        match best.iter_mut().find(|b| b.policy == row.policy) {
            Some(b) if row.mean_regret < b.mean_regret => *b = row.clone(),
            Some(_) => {}
            None => best.push(row.clone()),
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(&["users", "1"]), derive_seed(&["users", "1"]));
        assert_ne!(derive_seed(&["users", "1"]), derive_seed(&["users", "2"]));
        assert_ne!(derive_seed(&["ab", "c"]), derive_seed(&["a", "bc"]));
    }

    #[test]
    fn mean_std_sample() {
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn best_picks_lowest_mean() {
        let row = |params: &str, mean: f64| SummaryRow {
            policy: "alinucb".into(),
            params: params.into(),
            mean_regret: mean,
            std_regret: 0.0,
            mean_seconds: 0.0,
            cells: 1,
        };
        let best = best_per_policy(&[
            row("alpha=0", 5.0),
            row("alpha=0.1", 3.0),
            row("alpha=1", 4.0),
        ]);
        assert_eq!(best.len(), 1);
        assert_eq!(best[0].params, "alpha=0.1");
    }

    #[test]
    fn trace_names() {
        assert_eq!(trace_file_name("random", "", 3), "random_seed3.csv");
        assert_eq!(
            trace_file_name("egreedy", "c=0.1;d=0.5", 0),
            "egreedy_c=0.1_d=0.5_seed0.csv"
        );
    }

    #[test]
    fn default_base_is_square_when_possible() {
        assert_eq!(default_base_k(6040, 1000), 1000);
        assert_eq!(default_base_k(100, 500), 50);
    }
}

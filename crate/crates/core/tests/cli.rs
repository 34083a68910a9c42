use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use coldstart::config::{parse_config_text, ExperimentConfig, RawConfig};
use coldstart::dataset::save_csv_triples;
use coldstart::runner::{self, mean_std, SUMMARY_HEADER};
use coldstart::synthetic::{sparse_ratings, SparseRatingsConfig};

fn write_dataset(dir: &Path) -> PathBuf {
    let d = sparse_ratings(&SparseRatingsConfig {
        users: 120,
        items: 40,
        rank: 3,
        density: 0.15,
        seed: 9,
    });
    let path = dir.join("ratings.csv");
    save_csv_triples(&d, &path).unwrap();
    path
}

fn config(pairs: &[(&str, String)]) -> ExperimentConfig {
    let raw: RawConfig = pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect();
    ExperimentConfig::from_raw(&raw).unwrap()
}

fn base_pairs(data: &Path, out: &Path) -> Vec<(&'static str, String)> {
    vec![
        ("dataset", data.display().to_string()),
        ("format", "csv".into()),
        ("base-k", "30".into()),
        (
            "policy",
            "random,aver,egreedy,ucb,exp3,thompson,linucb,alinucb".into(),
        ),
        ("alpha", "0,0.001".into()),
        ("impute", "zero,average".into()),
        ("seeds", "1,2,3".into()),
        ("t", "300".into()),
        ("workers", "2".into()),
        ("timing", "false".into()),
        ("out", out.display().to_string()),
    ]
}

fn last_cumulative(trace: &Path) -> f64 {
    let text = fs::read_to_string(trace).unwrap();
    let last = text.lines().last().unwrap();
    last.rsplit(',').next().unwrap().parse().unwrap()
}

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        if entry.file_type().unwrap().is_file() {
            out.insert(
                entry.file_name().to_string_lossy().into_owned(),
                fs::read(entry.path()).unwrap(),
            );
        }
    }
    out
}

#[test]
fn summary_is_recomputable_from_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_dataset(tmp.path());
    let out = tmp.path().join("out");
    let cfg = config(&base_pairs(&data, &out));
    let outcome = runner::run_matrix(&cfg).unwrap();
    assert!(outcome.success(), "{:?}", outcome.failures);
    // 5 context-free policies, thompson over 2 fills, and the two UCB variants over
    // 2 alphas × 2 fills, each over 3 seeds.
    assert_eq!(outcome.runs.len(), (5 + 2 + 8) * 3);

    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next(), Some(SUMMARY_HEADER));
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        let (policy, params) = (fields[0], fields[1]);
        let regrets: Vec<f64> = cfg
            .seeds
            .iter()
            .map(|s| {
                last_cumulative(
                    &out.join("traces")
                        .join(runner::trace_file_name(policy, params, *s)),
                )
            })
            .collect();
        let (mean, std) = mean_std(&regrets);
        assert!(
            (fields[2].parse::<f64>().unwrap() - mean).abs() <= 1e-9,
            "{line}"
        );
        assert!(
            (fields[3].parse::<f64>().unwrap() - std).abs() <= 1e-9,
            "{line}"
        );
        assert_eq!(fields[5], "3");
    }

    let best = fs::read_to_string(out.join("best.csv")).unwrap();
    assert_eq!(best.lines().count(), 1 + 8);
    assert!(!out.join("failures.csv").exists());
}

#[test]
fn rerun_from_resolved_config_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_dataset(tmp.path());
    let first = tmp.path().join("first");
    let cfg = config(&base_pairs(&data, &first));
    runner::run_matrix(&cfg).unwrap();

    let resolved = fs::read_to_string(first.join("config.resolved")).unwrap();
    let mut raw = parse_config_text(&resolved, Path::new("config.resolved")).unwrap();
    let second = tmp.path().join("second");
    raw.insert("out".into(), second.display().to_string());
    raw.insert("workers".into(), "1".into());
    runner::run_matrix(&ExperimentConfig::from_raw(&raw).unwrap()).unwrap();

    assert_eq!(
        read_dir_bytes(&first.join("traces")),
        read_dir_bytes(&second.join("traces"))
    );
    for f in ["summary.csv", "best.csv", "runs.csv"] {
        assert_eq!(
            fs::read(first.join(f)).unwrap(),
            fs::read(second.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn new_item_mode_and_factorized_fills_run() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_dataset(tmp.path());
    let out = tmp.path().join("out");
    let cfg = config(&[
        ("dataset", data.display().to_string()),
        ("format", "csv".into()),
        ("problem", "new-item".into()),
        ("policy", "alinucb,thompson".into()),
        ("impute", "svd,alswr".into()),
        ("rank", "3".into()),
        ("seeds", "4".into()),
        ("dump-base", "true".into()),
        ("out", out.display().to_string()),
    ]);
    let outcome = runner::run_matrix(&cfg).unwrap();
    assert!(outcome.success());
    // Items are the rows and outnumbered by the 120 user arms, so the base is half the rated items.
    let rows = runner::load_prepared(&cfg).unwrap().n_users();
    assert_eq!(outcome.resolved.base_k, Some(rows / 2));
    let dump = fs::read_to_string(out.join("base_svd_seed4.csv")).unwrap();
    assert_eq!(dump.lines().count(), rows / 2);
    assert_eq!(dump.lines().next().unwrap().split(',').count(), 120);
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_coldstart"));
    c.env("RUST_LOG", "warn");
    c
}

#[test]
fn no_arguments_prints_required_keys() {
    let out = bin().output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("required keys: dataset"), "{err}");
}

#[test]
fn negative_alpha_is_rejected_by_name() {
    let out = bin()
        .args(["--dataset", "x.dat", "--policy", "alinucb", "--alpha", "-1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("'alpha'"), "{err}");
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "dataset=x\nhorizon=5\n").unwrap();
    let out = bin().arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key 'horizon'"));
}

#[test]
fn missing_dataset_file_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["--dataset", "/nonexistent/ratings.dat"])
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn binary_run_with_config_file_and_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_dataset(tmp.path());
    let out = tmp.path().join("out");
    let cfg = tmp.path().join("run.cfg");
    fs::write(
        &cfg,
        format!(
            "dataset={}\nformat=csv\npolicy=alinucb,random\nt=50\nseeds=0,1\nout={}\n",
            data.display(),
            out.display()
        ),
    )
    .unwrap();
    let run = bin()
        .arg("--config")
        .arg(&cfg)
        .args(["--t", "80"])
        .output()
        .unwrap();
    assert!(run.status.success());
    assert!(String::from_utf8_lossy(&run.stdout).starts_with(SUMMARY_HEADER));
    let resolved = fs::read_to_string(out.join("config.resolved")).unwrap();
    assert!(resolved.lines().any(|l| l == "t=80"), "{resolved}");
    let trace = fs::read_to_string(out.join("traces").join("random_seed1.csv")).unwrap();
    assert_eq!(trace.lines().count(), 81);
}

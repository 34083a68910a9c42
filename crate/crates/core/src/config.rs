//! Experiment configuration: a flat `key=value` file and command-line flags
//! share one key space; flags win over file values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::dataset::ProblemKind;
use crate::imputation::{ImputationMethod, DEFAULT_RANK};
use crate::policies::{
    PolicySpec, DEFAULT_ALPHA, DEFAULT_EGREEDY_C, DEFAULT_EGREEDY_D, DEFAULT_EXP3_GAMMA,
    DEFAULT_TS_V,
};

/// Every accepted key, in the order they are echoed.
pub const KEYS: &[&str] = &[
    "dataset",
    "format",
    "scale-max",
    "problem",
    "base-k",
    "impute",
    "rank",
    "policy",
    "alpha",
    "c",
    "d",
    "gamma",
    "v",
    "t",
    "seeds",
    "max-users",
    "max-items",
    "subsample-seed",
    "min-ratings",
    "workers",
    "out",
    "dump-base",
    "timing",
];

pub const REQUIRED_KEYS: &[&str] = &["dataset"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("missing required key(s): {}", .0.join(", "))]
    Missing(Vec<&'static str>),
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("invalid value for '{key}': {reason}")]
    Invalid { key: String, reason: String },
    #[error("config file {path}, line {line}: {reason}")]
    Syntax {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    MovieLens,
    Csv,
}

impl FromStr for DataFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "movielens" => Ok(DataFormat::MovieLens),
            "csv" => Ok(DataFormat::Csv),
            other => Err(format!("unknown format '{other}' (expected movielens|csv)")),
        }
    }
}

impl DataFormat {
    pub fn id(&self) -> &'static str {
        match self {
            DataFormat::MovieLens => "movielens",
            DataFormat::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub format: DataFormat,
    pub scale_max: f64,
    pub problem: ProblemKind,
    /// `None` means the default square base (`k = n` when the data allows it).
    pub base_k: Option<usize>,
    pub imputations: Vec<ImputationMethod>,
    pub rank: usize,
    /// Fully expanded policy grid.
    pub policies: Vec<PolicySpec>,
    /// `None` means one tenth of the held-out ratings.
    pub horizon: Option<usize>,
    pub seeds: Vec<u64>,
    pub max_users: Option<usize>,
    pub max_items: Option<usize>,
    pub subsample_seed: u64,
    pub min_ratings: usize,
    pub workers: usize,
    pub out: PathBuf,
    pub dump_base: bool,
    /// When off, wall times are reported as 0 so result files are reproducible byte for byte.
    pub timing: bool,
}

/// Raw key/value pairs before validation.
pub type RawConfig = BTreeMap<String, String>;

/// Parses a `key=value` file. Blank lines and `#` comments are ignored.
pub fn parse_config_text(text: &str, path: &Path) -> Result<RawConfig, ConfigError> {
    let mut raw = RawConfig::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                path: path.to_path_buf(),
                line: idx + 1,
                reason: "expected key=value".into(),
            });
        };
        let key = key.trim().trim_start_matches("--").to_string();
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey(key));
        }
        raw.insert(key, value.trim().to_string());
    }
    Ok(raw)
}

pub fn read_config_file(path: &Path) -> Result<RawConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_text(&text, path)
}

/// Layers `overrides` on top of `base`; unknown keys in either are rejected.
pub fn merge(base: RawConfig, overrides: RawConfig) -> Result<RawConfig, ConfigError> {
    let mut out = base;
    for (k, v) in overrides {
        if !KEYS.contains(&k.as_str()) {
            return Err(ConfigError::UnknownKey(k));
        }
        out.insert(k, v);
    }
    Ok(out)
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .trim()
        .parse()
        .map_err(|_| invalid(key, format!("cannot parse '{value}'")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError> {
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_one(key, s))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(invalid(key, "empty list"));
    }
    Ok(items)
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(invalid(key, format!("expected a boolean, got '{other}'"))),
    }
}

fn positive(key: &str, v: usize) -> Result<usize, ConfigError> {
    if v == 0 {
        Err(invalid(key, "must be positive"))
    } else {
        Ok(v)
    }
}

fn floats(raw: &RawConfig, key: &str, default: f64) -> Result<Vec<f64>, ConfigError> {
    match raw.get(key) {
        Some(v) => parse_list(key, v),
        None => Ok(vec![default]),
    }
}

/// Expands the policy ids against their hyperparameter lists.
fn policy_grid(raw: &RawConfig) -> Result<Vec<PolicySpec>, ConfigError> {
    let ids: Vec<String> = match raw.get("policy") {
        Some(v) => parse_list("policy", v)?,
        None => vec!["alinucb".to_string()],
    };
    let alphas = floats(raw, "alpha", DEFAULT_ALPHA)?;
    let cs = floats(raw, "c", DEFAULT_EGREEDY_C)?;
    let ds = floats(raw, "d", DEFAULT_EGREEDY_D)?;
    let gammas = floats(raw, "gamma", DEFAULT_EXP3_GAMMA)?;
    let vs = floats(raw, "v", DEFAULT_TS_V)?;

    let mut grid = Vec::new();
    for id in &ids {
        let specs: Vec<(PolicySpec, &'static str)> = match id.as_str() {
            "random" => vec![(PolicySpec::Random, "policy")],
            "aver" => vec![(PolicySpec::Aver, "policy")],
            "ucb" => vec![(PolicySpec::Ucb, "policy")],
            "egreedy" => cs
                .iter()
                .flat_map(|&c| {
                    ds.iter().map(move |&d| {
                        (
                            PolicySpec::EGreedy { c, d },
                            if c > 0.0 { "d" } else { "c" },
                        )
                    })
                })
                .collect(),
            "exp3" => gammas
                .iter()
                .map(|&gamma| (PolicySpec::Exp3 { gamma }, "gamma"))
                .collect(),
            "thompson" => vs
                .iter()
                .map(|&v| (PolicySpec::Thompson { v }, "v"))
                .collect(),
            "linucb" => alphas
                .iter()
                .map(|&alpha| (PolicySpec::LinUcb { alpha }, "alpha"))
                .collect(),
            "alinucb" => alphas
                .iter()
                .map(|&alpha| (PolicySpec::ALinUcb { alpha }, "alpha"))
                .collect(),
            other => {
                return Err(invalid(
                    "policy",
                    format!(
                        "unknown policy '{other}' (expected {})",
                        PolicySpec::IDS.join("|")
                    ),
                ))
            }
        };
        for (spec, key) in specs {
            spec.validate().map_err(|e| invalid(key, e.to_string()))?;
            if !grid.contains(&spec) {
                grid.push(spec);
            }
        }
    }
    Ok(grid)
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        if let Some(k) = raw.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(ConfigError::UnknownKey(k.clone()));
        }
        let missing: Vec<&'static str> = REQUIRED_KEYS
            .iter()
            .copied()
            .filter(|k| raw.get(*k).is_none_or(|v| v.trim().is_empty()))
            .collect();
        if !missing.is_empty() {
            return Err(ConfigError::Missing(missing));
        }
        let get = |k: &str| raw.get(k).map(String::as_str);

        let format: DataFormat = match get("format") {
            Some(v) => v.parse().map_err(|e: String| invalid("format", e))?,
            None => DataFormat::MovieLens,
        };
        let scale_max = match get("scale-max") {
            Some(v) => parse_one::<f64>("scale-max", v)?,
            None => 5.0,
        };
        if !(scale_max.is_finite() && scale_max > 0.0) {
            return Err(invalid("scale-max", "must be positive"));
        }
        let problem = match get("problem") {
            Some(v) => v.parse().map_err(|e: String| invalid("problem", e))?,
            None => ProblemKind::NewUser,
        };
        let base_k = get("base-k")
            .map(|v| parse_one::<usize>("base-k", v).and_then(|k| positive("base-k", k)))
            .transpose()?;
        let rank = match get("rank") {
            Some(v) => positive("rank", parse_one("rank", v)?)?,
            None => DEFAULT_RANK,
        };
        let imputations = match get("impute") {
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    ImputationMethod::parse_with_rank(s, rank).map_err(|e| invalid("impute", e))
                })
                .collect::<Result<Vec<_>, _>>()?,
            None => vec![ImputationMethod::Zero],
        };
        if imputations.is_empty() {
            return Err(invalid("impute", "empty list"));
        }
        let horizon = get("t")
            .map(|v| {
                let t: i64 = parse_one("t", v)?;
                if t <= 0 {
                    Err(invalid("t", "must be positive"))
                } else {
                    Ok(t as usize)
                }
            })
            .transpose()?;
        let seeds = match get("seeds") {
            Some(v) => parse_list::<u64>("seeds", v)?,
            None => vec![0],
        };
        let opt_usize = |key: &str| -> Result<Option<usize>, ConfigError> {
            get(key)
                .map(|v| parse_one::<usize>(key, v).and_then(|x| positive(key, x)))
                .transpose()
        };
        let workers = match get("workers") {
            Some(v) => positive("workers", parse_one("workers", v)?)?,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };

        Ok(Self {
            dataset: PathBuf::from(get("dataset").unwrap_or_default()),
            format,
            scale_max,
            problem,
            base_k,
            imputations,
            rank,
            policies: policy_grid(raw)?,
            horizon,
            seeds,
            max_users: opt_usize("max-users")?,
            max_items: opt_usize("max-items")?,
            subsample_seed: get("subsample-seed")
                .map(|v| parse_one("subsample-seed", v))
                .transpose()?
                .unwrap_or(0),
            min_ratings: opt_usize("min-ratings")?.unwrap_or(1),
            workers,
            out: PathBuf::from(get("out").unwrap_or("results")),
            dump_base: get("dump-base")
                .map(|v| parse_bool("dump-base", v))
                .transpose()?
                .unwrap_or(false),
            timing: get("timing")
                .map(|v| parse_bool("timing", v))
                .transpose()?
                .unwrap_or(true),
        })
    }

    /// `key=value` text that [`parse_config_text`] reads back into an equal config.
    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        put("dataset", self.dataset.display().to_string());
        put("format", self.format.id().to_string());
        put("scale-max", self.scale_max.to_string());
        put("problem", self.problem.to_string());
        if let Some(k) = self.base_k {
            put("base-k", k.to_string());
        }
        put("impute", join(self.imputations.iter().map(|m| m.id())));
        put("rank", self.rank.to_string());

        let mut ids: Vec<&str> = Vec::new();
        let (mut alphas, mut cs, mut ds, mut gammas, mut vs) =
            (vec![], vec![], vec![], vec![], vec![]);
        for p in &self.policies {
            if !ids.contains(&p.id()) {
                ids.push(p.id());
            }
            match *p {
                PolicySpec::LinUcb { alpha } | PolicySpec::ALinUcb { alpha } => {
                    push_unique(&mut alphas, alpha)
                }
                PolicySpec::EGreedy { c, d } => {
                    push_unique(&mut cs, c);
                    push_unique(&mut ds, d);
                }
                PolicySpec::Exp3 { gamma } => push_unique(&mut gammas, gamma),
                PolicySpec::Thompson { v } => push_unique(&mut vs, v),
                _ => {}
            }
        }
        put("policy", ids.join(","));
        for (key, values) in [
            ("alpha", alphas),
            ("c", cs),
            ("d", ds),
            ("gamma", gammas),
            ("v", vs),
        ] {
            if !values.is_empty() {
                put(key, join(values.iter()));
            }
        }
        if let Some(t) = self.horizon {
            put("t", t.to_string());
        }
        put("seeds", join(self.seeds.iter()));
        if let Some(m) = self.max_users {
            put("max-users", m.to_string());
        }
        if let Some(m) = self.max_items {
            put("max-items", m.to_string());
        }
        put("subsample-seed", self.subsample_seed.to_string());
        put("min-ratings", self.min_ratings.to_string());
        put("workers", self.workers.to_string());
        put("out", self.out.display().to_string());
        put("dump-base", self.dump_base.to_string());
        put("timing", self.timing.to_string());
        s
    }
}

fn push_unique(values: &mut Vec<f64>, v: f64) {
    if !values.contains(&v) {
        values.push(v);
    }
}

fn join<T: ToString>(items: impl Iterator<Item = T>) -> String {
    items.map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(pairs: &[(&str, &str)]) -> RawConfig {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn alinucb_with_alpha() {
        let cfg = ExperimentConfig::from_raw(&raw(&[
            ("dataset", "r.dat"),
            ("policy", "alinucb"),
            ("alpha", "0.001"),
        ]))
        .unwrap();
        assert_eq!(cfg.policies, vec![PolicySpec::ALinUcb { alpha: 0.001 }]);
    }

    #[test]
    fn negative_alpha_names_key() {
        let err = ExperimentConfig::from_raw(&raw(&[
            ("dataset", "r.dat"),
            ("policy", "alinucb"),
            ("alpha", "-1"),
        ]))
        .unwrap_err();
        assert!(
            matches!(&err, ConfigError::Invalid { key, .. } if key == "alpha"),
            "{err}"
        );
    }

    #[test]
    fn missing_dataset_lists_required_keys() {
        let err = ExperimentConfig::from_raw(&RawConfig::new()).unwrap_err();
        assert_eq!(err.to_string(), "missing required key(s): dataset");
    }

    #[test]
    fn bad_policy_and_horizon() {
        let err = ExperimentConfig::from_raw(&raw(&[("dataset", "x"), ("policy", "greedy")]))
            .unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { key, .. } if key == "policy"));
        for t in ["0", "-5"] {
            let err = ExperimentConfig::from_raw(&raw(&[("dataset", "x"), ("t", t)])).unwrap_err();
            assert!(matches!(&err, ConfigError::Invalid { key, .. } if key == "t"));
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = parse_config_text("dataset=x\nfoo=1\n", Path::new("c.cfg")).unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey(k) if k == "foo"));
        assert!(merge(RawConfig::new(), raw(&[("bar", "1")])).is_err());
    }

    #[test]
    fn flags_override_file() {
        let file =
            parse_config_text("# comment\ndataset = a.dat\nt=10\n", Path::new("c.cfg")).unwrap();
        let merged = merge(file, raw(&[("t", "20")])).unwrap();
        let cfg = ExperimentConfig::from_raw(&merged).unwrap();
        assert_eq!(cfg.horizon, Some(20));
        assert_eq!(cfg.dataset, PathBuf::from("a.dat"));
    }

    #[test]
    fn grid_expands_parameters() {
        let cfg = ExperimentConfig::from_raw(&raw(&[
            ("dataset", "x"),
            ("policy", "alinucb,random,egreedy"),
            ("alpha", "0,0.001"),
            ("c", "0.1,0.2"),
        ]))
        .unwrap();
        assert_eq!(cfg.policies.len(), 2 + 1 + 2);
    }

    #[test]
    fn resolved_text_round_trips() {
        let cfg = ExperimentConfig::from_raw(&raw(&[
            ("dataset", "data/ratings.dat"),
            ("policy", "alinucb,linucb,egreedy,exp3,thompson,ucb"),
            ("alpha", "0,0.001"),
            ("impute", "zero,svd"),
            ("rank", "4"),
            ("seeds", "1,2,3"),
            ("t", "50"),
            ("max-users", "100"),
            ("workers", "2"),
            ("timing", "off"),
        ]))
        .unwrap();
        let text = cfg.to_config_text();
        let back =
            ExperimentConfig::from_raw(&parse_config_text(&text, Path::new("r")).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}

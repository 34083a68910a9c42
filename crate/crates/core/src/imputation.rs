//! Filling the sparse base split into the dense context matrix used by the
//! contextual policies.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use thiserror::Error;

use crate::dataset::RatingDataset;
use crate::linalg::{self, LinalgError, Matrix};

pub const DEFAULT_RANK: usize = 16;
pub const DEFAULT_ALS_LAMBDA: f64 = 0.05;
pub const DEFAULT_ALS_ITERS: usize = 15;

#[derive(Debug, Error)]
pub enum ImputeError {
    #[error("base split is empty")]
    EmptyBase,
    #[error("base rating {0} is not normalized to [0, 1]")]
    NotNormalized(f64),
    #[error("arm {index} out of range (n = {n})")]
    ArmOutOfRange { index: usize, n: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ImputationMethod {
    Zero,
    ItemAverage,
    ImputedSvd {
        rank: usize,
    },
    AlsWr {
        rank: usize,
        lambda: f64,
        iters: usize,
    },
}

impl ImputationMethod {
    /// Short identifier used on the command line and in result files.
    pub fn id(&self) -> &'static str {
        match self {
            ImputationMethod::Zero => "zero",
            ImputationMethod::ItemAverage => "average",
            ImputationMethod::ImputedSvd { .. } => "svd",
            ImputationMethod::AlsWr { .. } => "alswr",
        }
    }

    /// Parses `zero|average|svd|alswr`, using `rank` for the factorization methods.
    pub fn parse_with_rank(s: &str, rank: usize) -> Result<Self, String> {
        if rank == 0 {
            return Err("rank must be at least 1".into());
        }
        match s {
            "zero" => Ok(ImputationMethod::Zero),
            "average" => Ok(ImputationMethod::ItemAverage),
            "svd" => Ok(ImputationMethod::ImputedSvd { rank }),
            "alswr" => Ok(ImputationMethod::AlsWr {
                rank,
                lambda: DEFAULT_ALS_LAMBDA,
                iters: DEFAULT_ALS_ITERS,
            }),
            other => Err(format!(
                "unknown imputation '{other}' (expected zero|average|svd|alswr)"
            )),
        }
    }
}

impl FromStr for ImputationMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::parse_with_rank(s, DEFAULT_RANK)
    }
}

impl fmt::Display for ImputationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImputationMethod::Zero | ImputationMethod::ItemAverage => f.write_str(self.id()),
            ImputationMethod::ImputedSvd { rank } => write!(f, "svd(rank={rank})"),
            ImputationMethod::AlsWr {
                rank,
                lambda,
                iters,
            } => {
                write!(f, "alswr(rank={rank},lambda={lambda},iters={iters})")
            }
        }
    }
}

/// Dense `k × n` context matrix; arm `j` is column `X_j`.
///
/// Stored arm-major so each context is a contiguous slice, with `‖X_j‖²` cached.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseMatrix {
    k: usize,
    n: usize,
    contexts: Matrix,
    column_norms_sq: Vec<f64>,
}

impl BaseMatrix {
    /// Builds from a `k × n` matrix whose columns are the arm contexts.
    pub fn from_matrix(x: &Matrix) -> Result<Self, ImputeError> {
        Self::from_contexts(x.transpose())
    }

    /// Builds from an `n × k` matrix whose rows are the arm contexts.
    pub fn from_contexts(contexts: Matrix) -> Result<Self, ImputeError> {
        if contexts.rows() == 0 || contexts.cols() == 0 {
            return Err(ImputeError::EmptyBase);
        }
        if let Some(&bad) = contexts
            .as_slice()
            .iter()
            .find(|v| !(0.0..=1.0).contains(*v))
        {
            return Err(ImputeError::NotNormalized(bad));
        }
        let column_norms_sq = (0..contexts.rows())
            .map(|j| linalg::norm_sq(contexts.row(j)))
            .collect();
        Ok(Self {
            k: contexts.cols(),
            n: contexts.rows(),
            contexts,
            column_norms_sq,
        })
    }

    /// Context dimension (number of base rows).
    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of arms.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn column_norms_sq(&self) -> &[f64] {
        &self.column_norms_sq
    }

    /// Context vector of arm `j`.
    pub fn column_context(&self, j: usize) -> Result<&[f64], ImputeError> {
        if j >= self.n {
            return Err(ImputeError::ArmOutOfRange {
                index: j,
                n: self.n,
            });
        }
        Ok(self.contexts.row(j))
    }

    /// Unchecked variant for hot loops that already validated `j`.
    #[inline]
    pub fn context(&self, j: usize) -> &[f64] {
        self.contexts.row(j)
    }

    /// The `k × n` matrix `X`.
    pub fn to_matrix(&self) -> Matrix {
        self.contexts.transpose()
    }

    /// Writes `X` as CSV, one row per base row.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        for r in 0..self.k {
            let row: Vec<String> = (0..self.n)
                .map(|j| self.contexts.get(j, r).to_string())
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()
    }
}

/// Dense values plus observation mask of the base split, `k × n` row-major.
struct Observed {
    values: Matrix,
    mask: Vec<bool>,
}

fn observed(base: &RatingDataset) -> Result<Observed, ImputeError> {
    let (k, n) = (base.n_users(), base.n_items());
    if k == 0 || n == 0 || base.is_empty() {
        return Err(ImputeError::EmptyBase);
    }
    let mut values = Matrix::zeros(k, n);
    let mut mask = vec![false; k * n];
    for t in base.triples() {
        if !(0.0..=1.0).contains(&t.rating) {
            return Err(ImputeError::NotNormalized(t.rating));
        }
        values.set(t.user, t.item, t.rating);
        mask[t.user * n + t.item] = true;
    }
    Ok(Observed { values, mask })
}

/// Mean of the observed entries of each column, or 0 for unobserved columns.
fn column_means(obs: &Observed) -> Vec<f64> {
    let (k, n) = (obs.values.rows(), obs.values.cols());
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    for i in 0..k {
        for j in 0..n {
            if obs.mask[i * n + j] {
                sums[j] += obs.values.get(i, j);
                counts[j] += 1;
            }
        }
    }
    sums.iter()
        .zip(&counts)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect()
}

fn mean_filled(obs: &Observed) -> Matrix {
    let means = column_means(obs);
    let n = obs.values.cols();
    let mut x = obs.values.clone();
    for i in 0..x.rows() {
        for (j, &mean) in means.iter().enumerate() {
            if !obs.mask[i * n + j] {
                x.set(i, j, mean);
            }
        }
    }
    x
}

fn clipped(mut x: Matrix) -> Matrix {
    for i in 0..x.rows() {
        for v in x.row_mut(i) {
            *v = v.clamp(0.0, 1.0);
        }
    }
    x
}

/// Fills the base split with `method`. `seed` drives the ALS-WR initialization.
pub fn fill(
    base_raw: &RatingDataset,
    method: ImputationMethod,
    seed: u64,
) -> Result<BaseMatrix, ImputeError> {
    let obs = observed(base_raw)?;
    let x = match method {
        ImputationMethod::Zero => obs.values,
        ImputationMethod::ItemAverage => mean_filled(&obs),
        ImputationMethod::ImputedSvd { rank } => {
            let filled = mean_filled(&obs);
            let rank = rank.min(filled.rows().min(filled.cols()));
            clipped(linalg::truncated_svd(&filled, rank)?.reconstruct())
        }
        ImputationMethod::AlsWr {
            rank,
            lambda,
            iters,
        } => {
            let (values, mask) = prefill_empty_slices(&obs);
            let factors = linalg::als_wr_factorize(&values, &mask, rank, lambda, iters, seed)?;
            clipped(factors.reconstruct())
        }
    };
    BaseMatrix::from_matrix(&x)
}

/// Rows or columns without any observation get the column-mean rule and are
/// then treated as observed, so the factorization is well posed.
fn prefill_empty_slices(obs: &Observed) -> (Matrix, Vec<bool>) {
    let (k, n) = (obs.values.rows(), obs.values.cols());
    let means = column_means(obs);
    let mut values = obs.values.clone();
    let mut mask = obs.mask.clone();
    for i in 0..k {
        if !mask[i * n..(i + 1) * n].iter().any(|&m| m) {
            for j in 0..n {
                values.set(i, j, means[j]);
                mask[i * n + j] = true;
            }
        }
    }
    for j in 0..n {
        if !(0..k).any(|i| obs.mask[i * n + j]) {
            for i in 0..k {
                values.set(i, j, means[j]);
                mask[i * n + j] = true;
            }
        }
    }
    (values, mask)
}

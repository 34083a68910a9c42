//! Synthetic environments for tests and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::dataset::{RatingDataset, RatingTriple};
use crate::imputation::BaseMatrix;
use crate::linalg::Matrix;

/// Linear environment: base contexts `X ∈ [0,1]^{k×n}` drawn uniformly,
/// eval users with Dirichlet(1) weights `θ_i` over the base rows, and
/// ratings `clip(θ_i·X_j + N(0, σ²), 0, 1)` on every arm.
#[derive(Debug, Clone, Copy)]
pub struct LinearEnvConfig {
    pub k: usize,
    pub n: usize,
    pub eval_users: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

pub struct LinearEnv {
    pub base: BaseMatrix,
    pub eval: RatingDataset,
    /// `eval_users × k` user weights.
    pub thetas: Matrix,
}

pub fn linear_environment(cfg: &LinearEnvConfig) -> LinearEnv {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let contexts: Vec<f64> = (0..cfg.n * cfg.k).map(|_| rng.random::<f64>()).collect();
    let contexts = Matrix::from_vec(cfg.n, cfg.k, contexts).expect("shape");

    let mut thetas = Matrix::zeros(cfg.eval_users, cfg.k);
    let mut triples = Vec::with_capacity(cfg.eval_users * cfg.n);
    for i in 0..cfg.eval_users {
        let raw: Vec<f64> = (0..cfg.k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = raw.iter().sum();
        thetas
            .row_mut(i)
            .iter_mut()
            .zip(&raw)
            .for_each(|(t, r)| *t = r / total);
        for j in 0..cfg.n {
            let mean: f64 = thetas
                .row(i)
                .iter()
                .zip(contexts.row(j))
                .map(|(a, b)| a * b)
                .sum();
            let noise: f64 = rng.sample(StandardNormal);
            triples.push(RatingTriple {
                user: i,
                item: j,
                rating: (mean + cfg.noise_sd * noise).clamp(0.0, 1.0),
            });
        }
    }
    LinearEnv {
        base: BaseMatrix::from_contexts(contexts).expect("uniform [0,1] contexts"),
        eval: RatingDataset::new(cfg.eval_users, cfg.n, triples, 1.0)
            .expect("valid synthetic ratings"),
        thetas,
    }
}

/// Sparse 1–5 star ratings from a low-rank taste model with popularity-biased
/// observation, shaped loosely like public movie-rating corpora.
#[derive(Debug, Clone, Copy)]
pub struct SparseRatingsConfig {
    pub users: usize,
    pub items: usize,
    pub rank: usize,
    /// Target fraction of observed cells.
    pub density: f64,
    pub seed: u64,
}

pub fn sparse_ratings(cfg: &SparseRatingsConfig) -> RatingDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = |rng: &mut ChaCha8Rng| rng.sample::<f64, _>(StandardNormal);
    let scale = 1.0 / (cfg.rank as f64).sqrt();

    let quality: Vec<f64> = (0..cfg.items).map(|_| normal(&mut rng)).collect();
    let item_factors: Vec<Vec<f64>> = (0..cfg.items)
        .map(|_| (0..cfg.rank).map(|_| normal(&mut rng) * scale).collect())
        .collect();
    // Popular items are also the better ones on average.
    let popularity: Vec<f64> = quality
        .iter()
        .map(|q| (0.8 * q + 0.8 * normal(&mut rng)).exp())
        .collect();
    let activity: Vec<f64> = (0..cfg.users)
        .map(|_| (0.7 * normal(&mut rng)).exp())
        .collect();
    let pop_mean = popularity.iter().sum::<f64>() / cfg.items as f64;
    let act_mean = activity.iter().sum::<f64>() / cfg.users as f64;

    let mut triples = Vec::new();
    for u in 0..cfg.users {
        let taste: Vec<f64> = (0..cfg.rank).map(|_| normal(&mut rng) * scale).collect();
        let bias = 0.4 * normal(&mut rng);
        let mut rated = false;
        for j in 0..cfg.items {
            let p = (cfg.density * popularity[j] / pop_mean * activity[u] / act_mean).min(1.0);
            let observe = rng.random::<f64>() < p;
            let last_chance = j + 1 == cfg.items && !rated;
            if !(observe || last_chance) {
                continue;
            }
            let affinity: f64 = taste.iter().zip(&item_factors[j]).map(|(a, b)| a * b).sum();
            let score = 3.5 + 0.6 * quality[j] + bias + 1.2 * affinity + 0.5 * normal(&mut rng);
            triples.push(RatingTriple {
                user: u,
                item: j,
                rating: score.round().clamp(1.0, 5.0),
            });
            rated = true;
        }
    }
    RatingDataset::new(cfg.users, cfg.items, triples, 5.0).expect("valid synthetic ratings")
}

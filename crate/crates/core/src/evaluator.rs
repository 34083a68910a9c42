//! Replay evaluation: draw a user, let the policy pick one of that user's
//! unknown arms, reveal the held-out rating (zero when absent) and charge the
//! gap to the best rating still hidden for that user.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::RatingDataset;
use crate::policies::{Decision, Policy, PolicyError};

pub const TRACE_HEADER: &str = "t,user,arm,revealed,best,increment,cumulative";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("evaluation set has no ratings")]
    EmptyEval,
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("evaluation set has {eval} arms but the policy has {policy}")]
    ArmCountMismatch { eval: usize, policy: usize },
    #[error("user {user} already saw arm {arm}")]
    RepeatReveal { user: usize, arm: usize },
    #[error("policy chose arm {arm}, which is not available to user {user}")]
    ArmNotAvailable { user: usize, arm: usize },
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Held-out ratings indexed by user, each list sorted by arm.
#[derive(Debug, Clone)]
pub struct EvalSet {
    n_arms: usize,
    ratings: Vec<Vec<(usize, f64)>>,
}

impl EvalSet {
    pub fn from_dataset(d: &RatingDataset) -> Self {
        let ratings = (0..d.n_users())
            .map(|u| {
                d.user_ratings(u)
                    .iter()
                    .map(|t| (t.item, t.rating))
                    .collect()
            })
            .collect();
        Self {
            n_arms: d.n_items(),
            ratings,
        }
    }

    pub fn n_users(&self) -> usize {
        self.ratings.len()
    }

    pub fn n_arms(&self) -> usize {
        self.n_arms
    }

    pub fn n_ratings(&self) -> usize {
        self.ratings.iter().map(Vec::len).sum()
    }

    pub fn user_ratings(&self, user: usize) -> &[(usize, f64)] {
        &self.ratings[user]
    }

    pub fn rating(&self, user: usize, arm: usize) -> Option<f64> {
        let r = &self.ratings[user];
        r.binary_search_by_key(&arm, |&(a, _)| a)
            .ok()
            .map(|i| r[i].1)
    }
}

/// Highest rating among the user's known arms that are not yet revealed, or 0.
pub fn best_surrogate(ratings: &[(usize, f64)], revealed: &[bool]) -> f64 {
    ratings
        .iter()
        .filter(|&&(arm, _)| !revealed.get(arm).copied().unwrap_or(false))
        .map(|&(_, r)| r)
        .fold(0.0, f64::max)
}

/// Per-user revealed arms plus the pool of users that still have unknown arms.
pub struct Replay<'a> {
    y: &'a EvalSet,
    revealed: Vec<Vec<bool>>,
    unrevealed: Vec<usize>,
    pool: Vec<usize>,
    pool_slot: Vec<usize>,
}

impl<'a> Replay<'a> {
    pub fn new(y: &'a EvalSet) -> Self {
        let users = y.n_users();
        Self {
            y,
            revealed: vec![Vec::new(); users],
            unrevealed: vec![y.n_arms; users],
            pool: if y.n_arms > 0 {
                (0..users).collect()
            } else {
                Vec::new()
            },
            pool_slot: (0..users).collect(),
        }
    }

    pub fn is_revealed(&self, user: usize, arm: usize) -> bool {
        self.revealed[user].get(arm).copied().unwrap_or(false)
    }

    /// Users that still have at least one unknown arm.
    pub fn pool(&self) -> &[usize] {
        &self.pool
    }

    pub fn available(&self, user: usize, out: &mut Vec<usize>) {
        out.clear();
        let seen = &self.revealed[user];
        out.extend((0..self.y.n_arms).filter(|&a| !seen.get(a).copied().unwrap_or(false)));
    }

    pub fn best(&self, user: usize) -> f64 {
        best_surrogate(self.y.user_ratings(user), &self.revealed[user])
    }

    /// Reveals the rating of `(user, arm)`, zero when it is not in the held-out set.
    pub fn reveal(&mut self, user: usize, arm: usize) -> Result<f64, EvalError> {
        if self.is_revealed(user, arm) {
            return Err(EvalError::RepeatReveal { user, arm });
        }
        if arm >= self.y.n_arms {
            return Err(EvalError::ArmNotAvailable { user, arm });
        }
        let seen = &mut self.revealed[user];
        if seen.is_empty() {
            seen.resize(self.y.n_arms, false);
        }
        seen[arm] = true;
        self.unrevealed[user] -= 1;
        if self.unrevealed[user] == 0 {
            let slot = self.pool_slot[user];
            self.pool.swap_remove(slot);
            if let Some(&moved) = self.pool.get(slot) {
                self.pool_slot[moved] = slot;
            }
        }
        Ok(self.y.rating(user, arm).unwrap_or(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub user: usize,
    pub arm: usize,
    pub revealed: f64,
    pub best: f64,
    pub increment: f64,
}

#[derive(Debug, Clone)]
pub struct RegretTrace {
    pub records: Vec<StepRecord>,
    pub cumulative: Vec<f64>,
    pub wall_time_seconds: f64,
    pub requested_steps: usize,
    /// Every user ran out of unknown arms before the horizon.
    pub early_stopped: bool,
}

impl RegretTrace {
    pub fn steps(&self) -> usize {
        self.records.len()
    }

    pub fn final_regret(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{TRACE_HEADER}")?;
        for (r, c) in self.records.iter().zip(&self.cumulative) {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.t, r.user, r.arm, r.revealed, r.best, r.increment, c
            )?;
        }
        w.flush()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ReplayConfig {
    pub horizon: usize,
    /// Seed of the user-draw stream; independent of the policy's own randomness.
    pub user_seed: u64,
}

/// Runs `cfg.horizon` steps of the replay protocol (fewer if every user is exhausted).
/// Wall time covers the decision loop only.
pub fn run_experiment(
    cfg: &ReplayConfig,
    n_arms: usize,
    y: &EvalSet,
    policy: &mut dyn Policy,
) -> Result<RegretTrace, EvalError> {
    if cfg.horizon == 0 {
        return Err(EvalError::ZeroHorizon);
    }
    if y.n_ratings() == 0 {
        return Err(EvalError::EmptyEval);
    }
    if y.n_arms() != n_arms {
        return Err(EvalError::ArmCountMismatch {
            eval: y.n_arms(),
            policy: n_arms,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.user_seed);
    let mut replay = Replay::new(y);
    let mut records = Vec::with_capacity(cfg.horizon);
    let mut cumulative = Vec::with_capacity(cfg.horizon);
    let mut available = Vec::with_capacity(n_arms);
    let mut total = 0.0;
    let mut early_stopped = false;

    let start = Instant::now();
    for t in 1..=cfg.horizon {
        if replay.pool().is_empty() {
            early_stopped = true;
            break;
        }
        let user = replay.pool()[rng.random_range(0..replay.pool().len())];
        replay.available(user, &mut available);
        let best = replay.best(user);

        let arm = policy.select(&Decision {
            t,
            user,
            available: &available,
        })?;
        if available.binary_search(&arm).is_err() {
            return Err(EvalError::ArmNotAvailable { user, arm });
        }
        let revealed = replay.reveal(user, arm)?;
        policy.update(arm, revealed)?;

        let increment = best - revealed;
        debug_assert!(increment >= 0.0);
        total += increment;
        records.push(StepRecord {
            t,
            user,
            arm,
            revealed,
            best,
            increment,
        });
        cumulative.push(total);
    }
    let wall_time_seconds = start.elapsed().as_secs_f64();

    Ok(RegretTrace {
        records,
        cumulative,
        wall_time_seconds,
        requested_steps: cfg.horizon,
        early_stopped,
    })
}

//! Arm-selection policies behind a single [`Policy`] interface.
//!
//! Every policy sees the same protocol: `select` over the arms still unknown
//! for the current user, then exactly one `update` with the revealed reward.
//! Score ties are always broken towards the lowest arm index.
//!
//! Non-contextual baselines (`random`, `aver`, `egreedy`, `ucb`, `exp3`) only
//! look at arm indices. The contextual ones (`thompson`, `linucb`, `alinucb`)
//! use the arm contexts `X_j` from a [`BaseMatrix`].

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::imputation::BaseMatrix;
use crate::linalg::{self, LinalgError, Matrix};

pub const DEFAULT_ALPHA: f64 = 0.001;
pub const DEFAULT_EGREEDY_C: f64 = 0.1;
pub const DEFAULT_EGREEDY_D: f64 = 0.5;
pub const DEFAULT_EXP3_GAMMA: f64 = 0.01;
pub const DEFAULT_TS_V: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("no arms available")]
    NoArms,
    #[error("arm {arm} out of range (n = {n})")]
    ArmOutOfRange { arm: usize, n: usize },
    #[error("reward {0} outside [0, 1]")]
    RewardOutOfRange(f64),
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, PolicyError>;

/// What a policy sees at step `t` (1-based).
#[derive(Debug, Clone, Copy)]
pub struct Decision<'a> {
    pub t: usize,
    pub user: usize,
    /// Candidate arms in ascending order.
    pub available: &'a [usize],
}

pub trait Policy: Send {
    fn id(&self) -> &'static str;

    /// Picks one arm out of `decision.available`.
    fn select(&mut self, decision: &Decision<'_>) -> Result<usize>;

    /// Consumes the reward revealed for the arm returned by the last `select`.
    fn update(&mut self, arm: usize, reward: f64) -> Result<()>;
}

/// First arm (in `available` order) with the strictly largest score.
pub fn argmax_lowest(available: &[usize], mut score: impl FnMut(usize) -> f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &arm in available {
        let s = score(arm);
        let better = match best {
            Some((_, b)) => s > b,
            None => true,
        };
        if better {
            best = Some((arm, s));
        }
    }
    best.map(|(arm, _)| arm)
}

fn check_reward(reward: f64) -> Result<()> {
    if (0.0..=1.0).contains(&reward) {
        Ok(())
    } else {
        Err(PolicyError::RewardOutOfRange(reward))
    }
}

fn check_arm(arm: usize, n: usize) -> Result<()> {
    if arm < n {
        Ok(())
    } else {
        Err(PolicyError::ArmOutOfRange { arm, n })
    }
}

fn non_empty<'a>(decision: &Decision<'a>) -> Result<&'a [usize]> {
    if decision.available.is_empty() {
        Err(PolicyError::NoArms)
    } else {
        Ok(decision.available)
    }
}

fn require(name: &'static str, value: f64, ok: bool, reason: &'static str) -> Result<()> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(PolicyError::InvalidParameter {
            name,
            value,
            reason,
        })
    }
}

/// Policy id plus hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicySpec {
    Random,
    Aver,
    EGreedy { c: f64, d: f64 },
    Ucb,
    Exp3 { gamma: f64 },
    Thompson { v: f64 },
    LinUcb { alpha: f64 },
    ALinUcb { alpha: f64 },
}

impl PolicySpec {
    pub const IDS: [&'static str; 8] = [
        "random", "aver", "egreedy", "ucb", "exp3", "thompson", "linucb", "alinucb",
    ];

    pub fn id(&self) -> &'static str {
        match self {
            PolicySpec::Random => "random",
            PolicySpec::Aver => "aver",
            PolicySpec::EGreedy { .. } => "egreedy",
            PolicySpec::Ucb => "ucb",
            PolicySpec::Exp3 { .. } => "exp3",
            PolicySpec::Thompson { .. } => "thompson",
            PolicySpec::LinUcb { .. } => "linucb",
            PolicySpec::ALinUcb { .. } => "alinucb",
        }
    }

    /// Whether the policy reads arm contexts (and so depends on the imputation).
    pub fn is_contextual(&self) -> bool {
        matches!(
            self,
            PolicySpec::Thompson { .. } | PolicySpec::LinUcb { .. } | PolicySpec::ALinUcb { .. }
        )
    }

    /// `key=value` list of the hyperparameters, `;`-separated.
    pub fn params(&self) -> String {
        match self {
            PolicySpec::Random | PolicySpec::Aver | PolicySpec::Ucb => String::new(),
            PolicySpec::EGreedy { c, d } => format!("c={c};d={d}"),
            PolicySpec::Exp3 { gamma } => format!("gamma={gamma}"),
            PolicySpec::Thompson { v } => format!("v={v}"),
            PolicySpec::LinUcb { alpha } | PolicySpec::ALinUcb { alpha } => {
                format!("alpha={alpha}")
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PolicySpec::EGreedy { c, d } => {
                require("c", c, c > 0.0, "must be positive")?;
                require("d", d, d > 0.0, "must be positive")
            }
            PolicySpec::Exp3 { gamma } => require(
                "gamma",
                gamma,
                gamma > 0.0 && gamma <= 1.0,
                "must be in (0, 1]",
            ),
            PolicySpec::Thompson { v } => require("v", v, v >= 0.0, "must be non-negative"),
            PolicySpec::LinUcb { alpha } | PolicySpec::ALinUcb { alpha } => {
                require("alpha", alpha, alpha >= 0.0, "must be non-negative")
            }
            _ => Ok(()),
        }
    }

    /// Instantiates the policy over the arms of `x` with its own random stream.
    pub fn build(&self, x: Arc<BaseMatrix>, seed: u64) -> Result<Box<dyn Policy>> {
        self.validate()?;
        let n = x.n();
        Ok(match *self {
            PolicySpec::Random => Box::new(RandomPolicy::new(n, seed)),
            PolicySpec::Aver => Box::new(AveragePolicy::new(n)),
            PolicySpec::EGreedy { c, d } => Box::new(EpsilonGreedy::new(n, c, d, seed)?),
            PolicySpec::Ucb => Box::new(Ucb1::new(n)),
            PolicySpec::Exp3 { gamma } => Box::new(Exp3::new(n, gamma, seed)?),
            PolicySpec::Thompson { v } => Box::new(LinearThompson::new(x, v, seed)?),
            PolicySpec::LinUcb { alpha } => Box::new(LinUcb::new(x, alpha, LinUcbInverse::Dense)?),
            PolicySpec::ALinUcb { alpha } => Box::new(ALinUcb::new(&x, alpha)?),
        })
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let params = self.params();
        if params.is_empty() {
            f.write_str(self.id())
        } else {
            write!(f, "{}({})", self.id(), params)
        }
    }
}

/// Running reward sums and pull counts per arm.
#[derive(Debug, Clone)]
struct ArmStats {
    counts: Vec<u64>,
    sums: Vec<f64>,
}

impl ArmStats {
    fn new(n: usize) -> Self {
        Self {
            counts: vec![0; n],
            sums: vec![0.0; n],
        }
    }

    fn record(&mut self, arm: usize, reward: f64) -> Result<()> {
        check_arm(arm, self.counts.len())?;
        check_reward(reward)?;
        self.counts[arm] += 1;
        self.sums[arm] += reward;
        Ok(())
    }

    fn mean(&self, arm: usize) -> Option<f64> {
        match self.counts[arm] {
            0 => None,
            c => Some(self.sums[arm] / c as f64),
        }
    }
}

/// Uniformly random arm.
pub struct RandomPolicy {
    n: usize,
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn id(&self) -> &'static str {
        "random"
    }

    fn select(&mut self, decision: &Decision<'_>) -> Result<usize> {
        let available = non_empty(decision)?;
        Ok(available[self.rng.random_range(0..available.len())])
    }

    fn update(&mut self, arm: usize, reward: f64) -> Result<()> {
        check_arm(arm, self.n)?;
        check_reward(reward)
    }
}

/// Greedy on the observed mean reward; arms never played are scored with the
/// global mean observed so far.
pub struct AveragePolicy {
    stats: ArmStats,
    total: f64,
    pulls: u64,
}

impl AveragePolicy {
    pub fn new(n: usize) -> Self {
        Self {
            stats: ArmStats::new(n),
            total: 0.0,
            pulls: 0,
        }
    }

    pub fn score(&self, arm: usize) -> f64 {
        let global = if self.pulls == 0 {
            0.0
        } else {
            self.total / self.pulls as f64
        };
        self.stats.mean(arm).unwrap_or(global)
    }
}

impl Policy for AveragePolicy {
    fn id(&self) -> &'static str {
        "aver"
    }

    fn select(&mut self, decision: &Decision<'_>) -> Result<usize> {
        let available = non_empty(decision)?;
        Ok(argmax_lowest(available, |j| self.score(j)).expect("non-empty"))
    }

    fn update(&mut self, arm: usize, reward: f64) -> Result<()> {
        self.stats.record(arm, reward)?;
        self.total += reward;
        self.pulls += 1;
        Ok(())
    }
}

/// `ε_t = min(1, c·n / (d²·(t − n − 1)))`, and 1 while `t ≤ n + 1`.
pub fn egreedy_epsilon(c: f64, d: f64, n: usize, t: usize) -> f64 {
    if t <= n + 1 {
        return 1.0;
    }
    let eps = c * n as f64 / (d * d * (t - n - 1) as f64);
    eps.clamp(0.0, 1.0)
}

/// Explores uniformly with probability `ε_t`, otherwise exploits the best observed mean.
pub struct EpsilonGreedy {
    c: f64,
    d: f64,
    stats: ArmStats,
    rng: ChaCha8Rng,
}

impl EpsilonGreedy {
    pub fn new(n: usize, c: f64, d: f64, seed: u64) -> Result<Self> {
        PolicySpec::EGreedy { c, d }.validate()?;
        Ok(Self {
            c,
            d,
            stats: ArmStats::new(n),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

impl Policy for EpsilonGreedy {
    fn id(&self) -> &'static str {
        "egreedy"
    }

    fn select(&mut self, decision: &Decision<'_>) -> Result<usize> {
        let available = non_empty(decision)?;
        let eps = egreedy_epsilon(self.c, self.d, self.stats.counts.len(), decision.t);
        let explore: f64 = self.rng.random();
        if explore < eps {
            Ok(available[self.rng.random_range(0..available.len())])
        } else {
            Ok(argmax_lowest(available, |j| self.stats.mean(j).unwrap_or(0.0)).expect("non-empty"))
        }
    }

    fn update(&mut self, arm: usize, reward: f64) -> Result<()> {
        self.stats.record(arm, reward)
    }
}

/// `mean + √(2 ln t / t_j)`, or `+∞` for an arm never played.
pub fn ucb_score(mean: f64, t: usize, pulls: u64) -> f64 {
    if pulls == 0 {
        return f64::INFINITY;
    }
    mean + (2.0 * (t.max(1) as f64).ln() / pulls as f64).sqrt()
}

pub struct Ucb1 {
    stats: ArmStats,
}

impl Ucb1 {
    pub fn new(n: usize) -> Self {
        Self {
            stats: ArmStats::new(n),
        }
    }
}

impl Policy for Ucb1 {
    fn id(&self) -> &'static str {
        "ucb"
    }

    fn select(&mut self, decision: &Decision<'_>) -> Result<usize> {
        let available = non_empty(decision)?;
        let t = decision.t;
        Ok(argmax_lowest(available, |j| {
            ucb_score(self.stats.mean(j).unwrap_or(0.0), t, self.stats.counts[j])
        })
        .expect("non-empty"))
    }

    fn update(&mut self, arm: usize, reward: f64) -> Result<()> {
        self.stats.record(arm, reward)
    }
}

/// `p_j = (1 − γ)·w_j / Σw + γ / n`.
pub fn exp3_distribution(weights: &[f64], gamma: f64) -> Vec<f64> {
    let n = weights.len() as f64;
    let total: f64 = weights.iter().sum();
    weights
        .iter()
        .map(|w| (1.0 - gamma) * w / total + gamma / n)
        .collect()
}

/// EXP3 over the currently available arms. Weights are kept in log space.
pub struct Exp3 {
    gamma: f64,
    log_weights: Vec<f64>,
    rng: ChaCha8Rng,
    /// (arm, probability, number of candidates) of the last draw.
    pending: Option<(usize, f64, usize)>,
}

impl Exp3 {
    pub fn new(n: usize, gamma: f64, seed: u64) -> Result<Self> {
        PolicySpec::Exp3 { gamma }.validate()?;
        Ok(Self {
            gamma,
            log_weights: vec![0.0; n],
            rng: ChaCha8Rng::seed_from_u64(seed),
            pending: None,
        })
    }

    /// Weights of `arms`, rescaled so the largest is 1.
    pub fn weights(&self, arms: &[usize]) -> Vec<f64> {
        let max = arms
            .iter()
            .map(|&j| self.log_weights[j])
            .fold(f64::NEG_INFINITY, f64::max);
        arms.iter()
            .map(|&j| (self.log_weights[j] - max).exp())
            .collect()
    }
}

impl Policy for Exp3 {
    fn id(&self) -> &'static str {
        "exp3"
    }

    fn select(&mut self, decision: &Decision<'_>) -> Result<usize> {
        let available = non_empty(decision)?;
        let probs = exp3_distribution(&self.weights(available), self.gamma);
        let draw: f64 = self.rng.random();
        let mut acc = 0.0;
        let mut pick = available.len() - 1;
        for (idx, p) in probs.iter().enumerate() {
            acc += p;
            if draw < acc {
                pick = idx;
                break;
            }
        }
        self.pending = Some((available[pick], probs[pick], available.len()));
        Ok(available[pick])
    }

    fn update(&mut self, arm: usize, reward: f64) -> Result<()> {
        check_arm(arm, self.log_weights.len())?;
        check_reward(reward)?;
        if let Some((pending_arm, prob, candidates)) = self.pending.take() {
            if pending_arm == arm {
                let estimate = reward / prob;
                self.log_weights[arm] += self.gamma * estimate / candidates as f64;
            }
        }
        Ok(())
    }
}

/// Gaussian Thompson sampling on a single shared linear model:
/// `θ̃ ~ N(A⁻¹b, v²A⁻¹)`, pick `argmax θ̃·X_j`, then `A += X_j X_jᵀ`, `b += r X_j`.
///
/// `A` is held through its Cholesky factor, updated in `O(k²)` per step.
pub struct LinearThompson {
    x: Arc<BaseMatrix>,
    v: f64,
    chol: Matrix,
    b: Vec<f64>,
    rng: ChaCha8Rng,
}

impl LinearThompson {
    pub fn new(x: Arc<BaseMatrix>, v: f64, seed: u64) -> Result<Self> {
        PolicySpec::Thompson { v }.validate()?;
        let k = x.k();
        Ok(Self {
            x,
            v,
            chol: Matrix::identity(k),
            b: vec![0.0; k],
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Posterior mean `A⁻¹b`.
    pub fn mean(&self) -> Vec<f64> {
        linalg::cholesky_solve(&self.chol, &self.b)
    }

    /// The design matrix `A = L Lᵀ`.
    pub fn design(&self) -> Matrix {
        self.chol
            .matmul(&self.chol.transpose())
            .expect("square factor")
    }

    /// One draw of `θ̃`.
    pub fn sample_theta(&mut self) -> Vec<f64> {
        let mut theta = self.mean();
        if self.v > 0.0 {
            let z: Vec<f64> = (0..theta.len())
                .map(|_| self.rng.sample(StandardNormal))
                .collect();
            let noise = linalg::solve_lower_transposed(&self.chol, &z);
            linalg::axpy(self.v, &noise, &mut theta);
        }
        theta
    }
}

/// In-place rank-one update of a lower Cholesky factor: `L Lᵀ + x xᵀ`.
fn cholesky_rank_one_update(l: &mut Matrix, x: &[f64]) {
    let n = l.rows();
    let mut w = x.to_vec();
    for k in 0..n {
        let lkk = l.get(k, k);
        let r = lkk.hypot(w[k]);
        let c = r / lkk;
        let s = w[k] / lkk;
        l.set(k, k, r);
        for i in (k + 1)..n {
            let lik = (l.get(i, k) + s * w[i]) / c;
            l.set(i, k, lik);
            w[i] = c * w[i] - s * lik;
        }
    }
}

impl Policy for LinearThompson {
    fn id(&self) -> &'static str {
        "thompson"
    }

    fn select(&mut self, decision: &Decision<'_>) -> Result<usize> {
        let available = non_empty(decision)?;
        let theta = self.sample_theta();
        Ok(
            argmax_lowest(available, |j| linalg::dot(&theta, self.x.context(j)))
                .expect("non-empty"),
        )
    }

    fn update(&mut self, arm: usize, reward: f64) -> Result<()> {
        check_arm(arm, self.x.n())?;
        check_reward(reward)?;
        let ctx = self.x.context(arm);
        cholesky_rank_one_update(&mut self.chol, ctx);
        linalg::axpy(reward, ctx, &mut self.b);
        Ok(())
    }
}

/// How [`LinUcb`] inverts `A_{t,j}` after each update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinUcbInverse {
    /// Materialize `A_{t,j}` and invert it with a dense `O(k³)` routine.
    Dense,
    /// Closed-form Sherman–Morrison inverse (ablation only).
    RankOne,
}

/// Per-arm ridge LinUCB. Since every row of arm `j`'s design is `X_j`,
/// `A_{t,j} = I + t_j X_j X_jᵀ` and `b_j = S_j X_j`; only `t_j` and `S_j`
/// are stored and `A_{t,j}` is rebuilt when the arm is updated.
pub struct LinUcb {
    x: Arc<BaseMatrix>,
    alpha: f64,
    inverse: LinUcbInverse,
    counts: Vec<u64>,
    reward_sums: Vec<f64>,
    means: Vec<f64>,
    widths: Vec<f64>,
}

impl LinUcb {
    pub fn new(x: Arc<BaseMatrix>, alpha: f64, inverse: LinUcbInverse) -> Result<Self> {
        PolicySpec::LinUcb { alpha }.validate()?;
        let n = x.n();
        // With A = I and b = 0 the estimate is 0 and the width is ‖X_j‖.
        let widths = x.column_norms_sq().iter().map(|s| s.sqrt()).collect();
        Ok(Self {
            x,
            alpha,
            inverse,
            counts: vec![0; n],
            reward_sums: vec![0.0; n],
            means: vec![0.0; n],
            widths,
        })
    }

    pub fn score(&self, arm: usize) -> f64 {
        self.means[arm] + self.alpha * self.widths[arm]
    }

    /// Current `√(X_jᵀ A_{t,j}⁻¹ X_j)`.
    pub fn width(&self, arm: usize) -> f64 {
        self.widths[arm]
    }

    pub fn pulls(&self, arm: usize) -> u64 {
        self.counts[arm]
    }

    /// `A_{t,j} = I + t_j X_j X_jᵀ`.
    pub fn design(&self, arm: usize) -> Matrix {
        let ctx = self.x.context(arm);
        let mut a = Matrix::outer(ctx, ctx).scale(self.counts[arm] as f64);
        for i in 0..ctx.len() {
            a.set(i, i, a.get(i, i) + 1.0);
        }
        a
    }

    fn refresh(&mut self, arm: usize) -> Result<()> {
        let ctx = self.x.context(arm);
        let (mean, width_sq) = match self.inverse {
            LinUcbInverse::Dense => {
                let a_inv = linalg::invert(&self.design(arm))?;
                let b: Vec<f64> = ctx.iter().map(|v| v * self.reward_sums[arm]).collect();
                let theta = a_inv.mul_vec(&b)?;
                let a_inv_x = a_inv.mul_vec(ctx)?;
                (linalg::dot(&theta, ctx), linalg::dot(ctx, &a_inv_x))
            }
            LinUcbInverse::RankOne => {
                let norm_sq = self.x.column_norms_sq()[arm];
                let shrink = 1.0 + self.counts[arm] as f64 * norm_sq;
                (self.reward_sums[arm] * norm_sq / shrink, norm_sq / shrink)
            }
        };
        self.means[arm] = mean;
        self.widths[arm] = width_sq.max(0.0).sqrt();
        Ok(())
    }
}

impl Policy for LinUcb {
    fn id(&self) -> &'static str {
        "linucb"
    }

    fn select(&mut self, decision: &Decision<'_>) -> Result<usize> {
        let available = non_empty(decision)?;
        Ok(argmax_lowest(available, |j| self.score(j)).expect("non-empty"))
    }

    fn update(&mut self, arm: usize, reward: f64) -> Result<()> {
        check_arm(arm, self.counts.len())?;
        check_reward(reward)?;
        self.counts[arm] += 1;
        self.reward_sums[arm] += reward;
        self.refresh(arm)
    }
}

/// LinUCB with the design frozen at `A_j = I + X_j X_jᵀ`.
///
/// With `b_j = S_j X_j`, the score `θ·X_j + α√(X_jᵀA_j⁻¹X_j)` reduces to
/// `S_j·q_j + α·√q_j` where `q_j = ‖X_j‖² / (1 + ‖X_j‖²)`, so each arm
/// carries two constants and a running reward sum.
#[derive(Debug, Clone)]
pub struct ALinUcb {
    alpha: f64,
    quad: Vec<f64>,
    widths: Vec<f64>,
    reward_sums: Vec<f64>,
}

impl ALinUcb {
    pub fn new(x: &BaseMatrix, alpha: f64) -> Result<Self> {
        PolicySpec::ALinUcb { alpha }.validate()?;
        let quad: Vec<f64> = x
            .column_norms_sq()
            .iter()
            .map(|&s| linalg::quadratic_form_from_norm_sq(s))
            .collect();
        let widths = quad.iter().map(|q| q.sqrt()).collect();
        Ok(Self {
            alpha,
            reward_sums: vec![0.0; quad.len()],
            quad,
            widths,
        })
    }

    #[inline]
    pub fn score(&self, arm: usize) -> f64 {
        self.reward_sums[arm] * self.quad[arm] + self.alpha * self.widths[arm]
    }

    /// The constant confidence widths `√(X_jᵀ A_j⁻¹ X_j)`.
    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    /// `S_j`, the total reward collected on arm `j`.
    pub fn reward_sum(&self, arm: usize) -> f64 {
        self.reward_sums[arm]
    }
}

impl Policy for ALinUcb {
    fn id(&self) -> &'static str {
        "alinucb"
    }

    fn select(&mut self, decision: &Decision<'_>) -> Result<usize> {
        let available = non_empty(decision)?;
        Ok(argmax_lowest(available, |j| self.score(j)).expect("non-empty"))
    }

    fn update(&mut self, arm: usize, reward: f64) -> Result<()> {
        check_arm(arm, self.reward_sums.len())?;
        check_reward(reward)?;
        self.reward_sums[arm] += reward;
        Ok(())
    }
}

/// A-LinUCB computed literally: explicit `A_j⁻¹` matrices and `b_j` vectors.
/// Memory is `O(n k²)`; it exists to cross-check [`ALinUcb`].
pub struct ALinUcbMatrixPath {
    x: Arc<BaseMatrix>,
    alpha: f64,
    inverses: Vec<Matrix>,
    accumulators: Vec<Vec<f64>>,
}

impl ALinUcbMatrixPath {
    pub fn new(x: Arc<BaseMatrix>, alpha: f64) -> Result<Self> {
        PolicySpec::ALinUcb { alpha }.validate()?;
        let mut inverses = Vec::with_capacity(x.n());
        for j in 0..x.n() {
            let ctx = x.context(j);
            let mut a = Matrix::outer(ctx, ctx);
            for i in 0..ctx.len() {
                a.set(i, i, a.get(i, i) + 1.0);
            }
            inverses.push(linalg::invert(&a)?);
        }
        let accumulators = vec![vec![0.0; x.k()]; x.n()];
        Ok(Self {
            x,
            alpha,
            inverses,
            accumulators,
        })
    }

    /// `θ·X_j + α√(X_jᵀA_j⁻¹X_j)` with `θ = A_j⁻¹ b_j`.
    pub fn score(&self, arm: usize) -> f64 {
        let ctx = self.x.context(arm);
        let a_inv = &self.inverses[arm];
        let theta = a_inv.mul_vec(&self.accumulators[arm]).expect("k-vector");
        let a_inv_x = a_inv.mul_vec(ctx).expect("k-vector");
        linalg::dot(&theta, ctx) + self.alpha * linalg::dot(ctx, &a_inv_x).max(0.0).sqrt()
    }

    pub fn accumulator(&self, arm: usize) -> &[f64] {
        &self.accumulators[arm]
    }
}

impl Policy for ALinUcbMatrixPath {
    fn id(&self) -> &'static str {
        "alinucb"
    }

    fn select(&mut self, decision: &Decision<'_>) -> Result<usize> {
        let available = non_empty(decision)?;
        Ok(argmax_lowest(available, |j| self.score(j)).expect("non-empty"))
    }

    fn update(&mut self, arm: usize, reward: f64) -> Result<()> {
        check_arm(arm, self.x.n())?;
        check_reward(reward)?;
        linalg::axpy(reward, self.x.context(arm), &mut self.accumulators[arm]);
        Ok(())
    }
}

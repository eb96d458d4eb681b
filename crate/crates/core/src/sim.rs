//! Tabular softmax-policy GRPO simulator.
//!
//! Each state of a [`BanditEnv`] has one correct action. The policy is a
//! per-state logit row; every step samples a rollout group of `K` actions
//! per state, turns rewards into advantages with the configured estimator,
//! and takes one gradient-ascent step on
//!
//! ```text
//! J = (1/K) sum_i A_i log pi(a_i | s) - beta * KL(pi(.|s) || pi_ref(.|s))
//! ```
//!
//! with the exact categorical KL against a frozen reference. Rollout
//! randomness comes from a ChaCha8 stream keyed by `(seed, step, state)`, so
//! two runs that share a seed draw identical uniforms (common random numbers)
//! regardless of estimator.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::advantage::{estimate, group_stats, EstimatorConfig, RolloutGroup, StdKind, Variant};
use crate::diagnostics::near_zero_mass;

/// Near-zero advantage thresholds reported in every trace row.
pub const SMALL_ADV_DELTAS: [f64; 2] = [0.01, 0.1];

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid environment: {0}")]
    InvalidEnv(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("state {state} out of range (n_states = {n_states})")]
    StateOutOfRange { state: usize, n_states: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardLevels {
    /// Reward for choosing the state's target action.
    pub exact: f64,
    /// Reward for any other action.
    pub other: f64,
}

impl Default for RewardLevels {
    fn default() -> Self {
        RewardLevels {
            exact: 1.0,
            other: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditEnv {
    n_actions: usize,
    target: Vec<usize>,
    reward_levels: RewardLevels,
}

impl BanditEnv {
    pub fn new(n_actions: usize, target: Vec<usize>) -> Result<Self, SimError> {
        Self::with_levels(n_actions, target, RewardLevels::default())
    }

    pub fn with_levels(
        n_actions: usize,
        target: Vec<usize>,
        reward_levels: RewardLevels,
    ) -> Result<Self, SimError> {
        if n_actions == 0 || target.is_empty() {
            return Err(SimError::InvalidEnv(
                "need at least one state and one action".into(),
            ));
        }
        if let Some(t) = target.iter().find(|&&t| t >= n_actions) {
            return Err(SimError::InvalidEnv(format!(
                "target action {t} out of range for {n_actions} actions"
            )));
        }
        for level in [reward_levels.exact, reward_levels.other] {
            if !(0.0..=1.0).contains(&level) {
                return Err(SimError::InvalidEnv(format!(
                    "reward level {level} outside [0, 1]"
                )));
            }
        }
        Ok(BanditEnv {
            n_actions,
            target,
            reward_levels,
        })
    }

    pub fn n_states(&self) -> usize {
        self.target.len()
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn target(&self, state: usize) -> usize {
        self.target[state]
    }

    pub fn reward(&self, state: usize, action: usize) -> f64 {
        if self.target[state] == action {
            self.reward_levels.exact
        } else {
            self.reward_levels.other
        }
    }
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Exact categorical `KL(p || q)` from log-probabilities.
pub fn categorical_kl(log_p: &[f64], log_q: &[f64]) -> f64 {
    log_p
        .iter()
        .zip(log_q)
        .map(|(lp, lq)| lp.exp() * (lp - lq))
        .sum()
}

/// Tabular policy with a frozen reference copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    logits: Vec<Vec<f64>>,
    ref_logits: Vec<Vec<f64>>,
    seed: u64,
    step: u64,
}

impl PolicyState {
    /// Starts from `logits`; the reference is a snapshot of them.
    pub fn new(logits: Vec<Vec<f64>>, seed: u64) -> Result<Self, SimError> {
        let ref_logits = logits.clone();
        Self::with_reference(logits, ref_logits, seed)
    }

    /// Starts from `logits` against a separately given reference snapshot.
    pub fn with_reference(
        logits: Vec<Vec<f64>>,
        ref_logits: Vec<Vec<f64>>,
        seed: u64,
    ) -> Result<Self, SimError> {
        let n_actions = logits.first().map_or(0, Vec::len);
        if logits.is_empty() || n_actions == 0 {
            return Err(SimError::InvalidPolicy("empty logit table".into()));
        }
        let well_formed = |table: &[Vec<f64>]| {
            table.len() == logits.len()
                && table
                    .iter()
                    .all(|row| row.len() == n_actions && row.iter().all(|z| z.is_finite()))
        };
        if !well_formed(&logits) || !well_formed(&ref_logits) {
            return Err(SimError::InvalidPolicy(
                "logit rows must be finite and share one shape".into(),
            ));
        }
        Ok(PolicyState {
            logits,
            ref_logits,
            seed,
            step: 0,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize, seed: u64) -> Result<Self, SimError> {
        Self::new(vec![vec![0.0; n_actions]; n_states], seed)
    }

    /// Puts probability `mass` on `favored[s]` in each state and spreads the
    /// rest uniformly over the other actions.
    pub fn concentrated(
        n_actions: usize,
        favored: &[usize],
        mass: f64,
        seed: u64,
    ) -> Result<Self, SimError> {
        if !(mass > 0.0 && mass < 1.0) || n_actions < 2 {
            return Err(SimError::InvalidPolicy(
                "need 0 < mass < 1 and at least two actions".into(),
            ));
        }
        let boost = (mass * (n_actions - 1) as f64 / (1.0 - mass)).ln();
        let logits = favored
            .iter()
            .map(|&f| {
                let mut row = vec![0.0; n_actions];
                row[f] = boost;
                row
            })
            .collect();
        Self::new(logits, seed)
    }

    pub fn n_states(&self) -> usize {
        self.logits.len()
    }

    pub fn n_actions(&self) -> usize {
        self.logits[0].len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn logits(&self, state: usize) -> &[f64] {
        &self.logits[state]
    }

    pub fn ref_logits(&self, state: usize) -> &[f64] {
        &self.ref_logits[state]
    }

    pub fn probs(&self, state: usize) -> Vec<f64> {
        softmax(&self.logits[state])
    }

    pub fn ref_probs(&self, state: usize) -> Vec<f64> {
        softmax(&self.ref_logits[state])
    }

    pub fn kl_to_ref(&self, state: usize) -> f64 {
        categorical_kl(
            &log_softmax(&self.logits[state]),
            &log_softmax(&self.ref_logits[state]),
        )
    }

    /// Adds `delta` to the logits of `state`. The reference never moves.
    pub fn apply_update(&mut self, state: usize, delta: &[f64]) {
        for (z, d) in self.logits[state].iter_mut().zip(delta) {
            *z += d;
        }
    }

    fn check_state(&self, state: usize) -> Result<(), SimError> {
        if state >= self.n_states() {
            return Err(SimError::StateOutOfRange {
                state,
                n_states: self.n_states(),
            });
        }
        Ok(())
    }
}

/// Per-(step, state) random stream derived from the master seed.
pub fn stream_rng(seed: u64, step: u64, state: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((step << 24) ^ state as u64);
    rng
}

fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding slack above the last cumulative sum.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Samples `k` actions for `state` at the policy's current step.
pub fn rollout(
    env: &BanditEnv,
    policy: &PolicyState,
    state: usize,
    k: usize,
    temperature: f64,
) -> Result<(RolloutGroup, Vec<usize>), SimError> {
    policy.check_state(state)?;
    if state >= env.n_states() {
        return Err(SimError::StateOutOfRange {
            state,
            n_states: env.n_states(),
        });
    }
    let scaled: Vec<f64> = policy.logits[state]
        .iter()
        .map(|z| z / temperature)
        .collect();
    let probs = softmax(&scaled);
    let mut rng = stream_rng(policy.seed, policy.step, state);
    let actions: Vec<usize> = (0..k)
        .map(|_| sample_index(&probs, rng.random::<f64>()))
        .collect();
    let rewards = actions.iter().map(|&a| env.reward(state, a)).collect();
    let group = RolloutGroup {
        group_id: format!("step{}-state{}", policy.step, state),
        rewards,
        step: Some(policy.step as i64),
    };
    Ok((group, actions))
}

/// Gradient of `KL(pi || pi_ref)` with respect to the logits of `state`.
pub fn kl_gradient(policy: &PolicyState, state: usize) -> Vec<f64> {
    let log_p = log_softmax(&policy.logits[state]);
    let log_q = log_softmax(&policy.ref_logits[state]);
    let kl = categorical_kl(&log_p, &log_q);
    log_p
        .iter()
        .zip(&log_q)
        .map(|(lp, lq)| lp.exp() * (lp - lq - kl))
        .collect()
}

/// Objective value and its analytic gradient with respect to the logits of
/// `state`.
pub fn objective_and_gradient(
    policy: &PolicyState,
    state: usize,
    actions: &[usize],
    advantages: &[f64],
    beta: f64,
) -> (f64, Vec<f64>) {
    assert_eq!(actions.len(), advantages.len(), "one advantage per action");
    let log_p = log_softmax(&policy.logits[state]);
    let log_q = log_softmax(&policy.ref_logits[state]);
    let probs: Vec<f64> = log_p.iter().map(|lp| lp.exp()).collect();
    let kl = categorical_kl(&log_p, &log_q);
    let k = actions.len().max(1) as f64;

    let mut pg = vec![0.0; probs.len()];
    let mut surrogate = 0.0;
    for (&a, &adv) in actions.iter().zip(advantages) {
        surrogate += adv * log_p[a];
        // d log pi(a) / dz = e_a - pi
        for (j, g) in pg.iter_mut().enumerate() {
            let indicator = if j == a { 1.0 } else { 0.0 };
            *g += adv * (indicator - probs[j]);
        }
    }
    let grad = pg
        .iter()
        .zip(log_p.iter().zip(&log_q))
        .map(|(g, (lp, lq))| g / k - beta * (lp.exp() * (lp - lq - kl)))
        .collect();
    (surrogate / k - beta * kl, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Rollouts per state per step.
    pub k: usize,
    pub beta: f64,
    pub learning_rate: f64,
    pub steps: u64,
    pub estimator: EstimatorConfig,
    /// Sampling temperature; the objective always uses softmax(logits).
    pub temperature: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 8,
            beta: 0.01,
            learning_rate: 0.05,
            steps: 200,
            estimator: EstimatorConfig::default(),
            temperature: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.k == 0 {
            return Err(SimError::InvalidConfig("k must be at least 1".into()));
        }
        if !(self.beta >= 0.0) {
            return Err(SimError::InvalidConfig(format!(
                "beta must be non-negative, got {}",
                self.beta
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(SimError::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.temperature > 0.0) {
            return Err(SimError::InvalidConfig(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// One (step, state) record of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub state: usize,
    pub mean_reward: f64,
    /// Empirical population std of the group's rewards.
    pub group_sigma: f64,
    pub mean_abs_adv: f64,
    pub p_small_adv_001: f64,
    pub p_small_adv_01: f64,
    pub grad_norm: f64,
    /// KL to the reference before this step's update.
    pub kl_to_ref: f64,
    /// Probability of the target action before this step's update.
    pub p_target: f64,
    pub actions: Vec<usize>,
    pub advantages: Vec<f64>,
    /// Logit change applied at this step (`learning_rate * grad`).
    pub update: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct CsvRow {
    step: u64,
    state: usize,
    mean_reward: f64,
    group_sigma: f64,
    mean_abs_adv: f64,
    p_small_adv_001: f64,
    p_small_adv_01: f64,
    grad_norm: f64,
    kl_to_ref: f64,
}

pub const TRACE_COLUMNS: [&str; 9] = [
    "step",
    "state",
    "mean_reward",
    "group_sigma",
    "mean_abs_adv",
    "p_small_adv_001",
    "p_small_adv_01",
    "grad_norm",
    "kl_to_ref",
];

#[derive(Debug, Clone)]
pub struct TrainTrace {
    pub config: TrainConfig,
    pub rows: Vec<TraceRow>,
    pub final_policy: PolicyState,
}

impl TrainTrace {
    /// Rows of one state, in step order.
    pub fn state_rows(&self, state: usize) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(move |r| r.state == state)
    }

    /// First step at which `p_target` of `state` reached `threshold`, looking
    /// at pre-update probabilities and the final policy.
    pub fn first_step_reaching(&self, state: usize, threshold: f64) -> Option<u64> {
        self.state_rows(state)
            .find(|r| r.p_target >= threshold)
            .map(|r| r.step)
    }

    /// Writes the trace as CSV, preceded by a `# config: ...` comment line.
    pub fn write_csv<W: Write>(&self, mut out: W, config_echo: &str) -> Result<(), SimError> {
        writeln!(out, "# config: {config_echo}")?;
        let mut writer = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(out);
        writer.write_record(TRACE_COLUMNS)?;
        for r in &self.rows {
            writer.serialize(CsvRow {
                step: r.step,
                state: r.state,
                mean_reward: r.mean_reward,
                group_sigma: r.group_sigma,
                mean_abs_adv: r.mean_abs_adv,
                p_small_adv_001: r.p_small_adv_001,
                p_small_adv_01: r.p_small_adv_01,
                grad_norm: r.grad_norm,
                kl_to_ref: r.kl_to_ref,
            })?;
        }
        writer.flush()?;
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Runs `cfg.steps` synchronous gradient-ascent steps over all states.
pub fn train(
    env: &BanditEnv,
    cfg: &TrainConfig,
    mut policy: PolicyState,
) -> Result<TrainTrace, SimError> {
    cfg.validate()?;
    if policy.n_states() != env.n_states() || policy.n_actions() != env.n_actions() {
        return Err(SimError::InvalidPolicy(format!(
            "policy shape {}x{} does not match environment {}x{}",
            policy.n_states(),
            policy.n_actions(),
            env.n_states(),
            env.n_actions()
        )));
    }
    let mut rows = Vec::with_capacity(cfg.steps as usize * env.n_states());
    for _ in 0..cfg.steps {
        let mut updates = Vec::with_capacity(env.n_states());
        for state in 0..env.n_states() {
            let (group, actions) = rollout(env, &policy, state, cfg.k, cfg.temperature)?;
            let adv = estimate(&group.rewards, &cfg.estimator);
            let (_, grad) =
                objective_and_gradient(&policy, state, &actions, &adv.advantages, cfg.beta);
            let update: Vec<f64> = grad.iter().map(|g| cfg.learning_rate * g).collect();
            let (mean_reward, group_sigma) = group_stats(&group.rewards, StdKind::Population);
            rows.push(TraceRow {
                step: policy.step,
                state,
                mean_reward,
                group_sigma,
                mean_abs_adv: adv.advantages.iter().map(|a| a.abs()).sum::<f64>()
                    / adv.advantages.len() as f64,
                p_small_adv_001: near_zero_mass(&adv.advantages, SMALL_ADV_DELTAS[0])
                    .unwrap_or(0.0),
                p_small_adv_01: near_zero_mass(&adv.advantages, SMALL_ADV_DELTAS[1]).unwrap_or(0.0),
                grad_norm: norm(&grad),
                kl_to_ref: policy.kl_to_ref(state),
                p_target: policy.probs(state)[env.target(state)],
                actions,
                advantages: adv.advantages,
                update: update.clone(),
            });
            updates.push(update);
        }
        for (state, update) in updates.iter().enumerate() {
            policy.apply_update(state, update);
        }
        policy.step += 1;
    }
    Ok(TrainTrace {
        config: *cfg,
        rows,
        final_policy: policy,
    })
}

/// Near-zero mass and mean |A| of base GRPO vs GuAE at one schedule point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulePoint {
    pub collapse_prob: f64,
    pub n_groups: usize,
    pub collapsed_groups: usize,
    pub base_p_small_001: f64,
    pub base_p_small_01: f64,
    pub base_mean_abs_adv: f64,
    pub guae_p_small_001: f64,
    pub guae_p_small_01: f64,
    pub guae_mean_abs_adv: f64,
}

/// Synthesizes `n_groups` groups of size `cfg.k` at each schedule point: with
/// probability `collapse_prob` a group is all-0 or all-1 (fair coin),
/// otherwise its rewards are i.i.d. Bernoulli(`bernoulli_p`). Both estimators
/// see the same groups.
pub fn collapse_schedule_sim(
    cfg: &TrainConfig,
    schedule: &[f64],
    n_groups: usize,
    bernoulli_p: f64,
    seed: u64,
) -> Result<Vec<SchedulePoint>, SimError> {
    cfg.validate()?;
    if let Some(bad) = schedule.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(SimError::InvalidConfig(format!(
            "collapse probability {bad} outside [0, 1]"
        )));
    }
    if !(0.0..=1.0).contains(&bernoulli_p) {
        return Err(SimError::InvalidConfig(format!(
            "bernoulli_p {bernoulli_p} outside [0, 1]"
        )));
    }
    let base_cfg = EstimatorConfig {
        variant: Variant::BaseGrpo,
        ..cfg.estimator
    };
    let guae_cfg = EstimatorConfig {
        variant: Variant::Guae,
        ..cfg.estimator
    };
    let mut points = Vec::with_capacity(schedule.len());
    for (idx, &collapse_prob) in schedule.iter().enumerate() {
        let mut rng = stream_rng(seed, idx as u64, 0);
        let mut base_adv = Vec::with_capacity(n_groups * cfg.k);
        let mut guae_adv = Vec::with_capacity(n_groups * cfg.k);
        let mut collapsed_groups = 0;
        for _ in 0..n_groups {
            let rewards: Vec<f64> = if rng.random::<f64>() < collapse_prob {
                collapsed_groups += 1;
                let c = if rng.random::<bool>() { 1.0 } else { 0.0 };
                vec![c; cfg.k]
            } else {
                (0..cfg.k)
                    .map(|_| f64::from(u8::from(rng.random::<f64>() < bernoulli_p)))
                    .collect()
            };
            base_adv.extend(estimate(&rewards, &base_cfg).advantages);
            guae_adv.extend(estimate(&rewards, &guae_cfg).advantages);
        }
        let mass = |a: &[f64], d: f64| near_zero_mass(a, d).unwrap_or(0.0);
        let mean_abs = |a: &[f64]| {
            if a.is_empty() {
                0.0
            } else {
                a.iter().map(|x| x.abs()).sum::<f64>() / a.len() as f64
            }
        };
        points.push(SchedulePoint {
            collapse_prob,
            n_groups,
            collapsed_groups,
            base_p_small_001: mass(&base_adv, 0.01),
            base_p_small_01: mass(&base_adv, 0.1),
            base_mean_abs_adv: mean_abs(&base_adv),
            guae_p_small_001: mass(&guae_adv, 0.01),
            guae_p_small_01: mass(&guae_adv, 0.1),
            guae_mean_abs_adv: mean_abs(&guae_adv),
        });
    }
    Ok(points)
}

pub fn write_schedule_csv<W: Write>(out: W, points: &[SchedulePoint]) -> Result<(), SimError> {
    let mut writer = csv::Writer::from_writer(out);
    for p in points {
        writer.serialize(p)?;
    }
    writer.flush()?;
    Ok(())
}

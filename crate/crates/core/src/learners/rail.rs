use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::discriminator::{disc_update, AdamState, DiscriminatorParams, LabeledBatch, EXPERT_LABEL, POLICY_LABEL};
use crate::error::{Error, Result};
use crate::io::sha256_hex;
use crate::policy::{sample_directions, NoiseDirection, NoiseSchedule, NormalizerState, PolicyKind, PolicyParams, PolicyShape};
use crate::seed;
use crate::sim::{DrivingAction, HighwayConfig};

use super::engine::{HighwayRollout, RewardAggregation, RolloutEngine, RolloutEnv, RolloutResult, RolloutTask, Snapshot};
use super::{compute_update, reward_std, DemonstrationSet};

/// Hyperparameters of the random-search imitation learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RailConfig {
    /// Step size α.
    pub alpha: f64,
    /// Directions per iteration N; each is rolled out with both signs.
    pub directions: usize,
    pub nu_init: f64,
    pub tau: f64,
    /// Noise schedule evaluation period η.
    pub eta: u64,
    pub iterations: u64,
    pub workers: usize,
    pub seed: u64,
    pub sigma_floor: f64,
    pub policy: PolicyKind,
    pub hidden: usize,
    pub disc_hidden: usize,
    pub disc_learning_rate: f64,
    /// Minibatch size, split evenly between expert and policy samples.
    pub disc_batch: usize,
    /// Minibatches per iteration; `None` makes one pass over the fresh rollouts.
    pub disc_minibatches: Option<usize>,
    pub reward: RewardAggregation,
}

impl Default for RailConfig {
    fn default() -> Self {
        RailConfig {
            alpha: 0.001,
            directions: 512,
            nu_init: 0.03,
            tau: 0.001,
            eta: 10,
            iterations: 1000,
            workers: 1,
            seed: 0,
            sigma_floor: 1e-8,
            policy: PolicyKind::TwoLayer,
            hidden: 10,
            disc_hidden: 64,
            disc_learning_rate: 1e-3,
            disc_batch: 128,
            disc_minibatches: Some(16),
            reward: RewardAggregation::Sum,
        }
    }
}

impl RailConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.alpha) {
            return Err(Error::config("alpha", "must be positive"));
        }
        if self.directions == 0 {
            return Err(Error::config("directions", "must be at least 1"));
        }
        if !positive(self.nu_init) {
            return Err(Error::config("nu_init", "must be positive"));
        }
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(Error::config("tau", "must be non-negative"));
        }
        if self.eta == 0 {
            return Err(Error::config("eta", "must be at least 1"));
        }
        if self.workers == 0 {
            return Err(Error::config("workers", "must be at least 1"));
        }
        if !positive(self.sigma_floor) {
            return Err(Error::config("sigma_floor", "must be positive"));
        }
        if self.policy == PolicyKind::TwoLayer && self.hidden == 0 {
            return Err(Error::config("hidden", "must be positive for a two-layer policy"));
        }
        if self.disc_hidden == 0 {
            return Err(Error::config("disc_hidden", "must be positive"));
        }
        if !positive(self.disc_learning_rate) {
            return Err(Error::config("disc_learning_rate", "must be positive"));
        }
        if self.disc_batch < 2 || !self.disc_batch.is_multiple_of(2) {
            return Err(Error::config("disc_batch", "must be an even number of at least 2"));
        }
        if self.disc_minibatches == Some(0) {
            return Err(Error::config("disc_minibatches", "must be at least 1 when set"));
        }
        Ok(())
    }

    pub fn shape(&self, n: usize, p: usize) -> PolicyShape {
        match self.policy {
            PolicyKind::Linear => PolicyShape::linear(n, p),
            PolicyKind::TwoLayer => PolicyShape::two_layer(n, self.hidden, p),
        }
    }
}

/// Starting weights, e.g. from behavior cloning, with the normalizer they were fit under.
#[derive(Debug, Clone, PartialEq)]
pub struct RailInit {
    pub params: PolicyParams,
    pub normalizer: NormalizerState,
}

/// Everything needed to continue training after iteration `iteration`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub iteration: u64,
    pub theta: PolicyParams,
    pub normalizer: NormalizerState,
    pub discriminator: DiscriminatorParams,
    pub optimizer: AdamState,
    pub schedule: NoiseSchedule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: u64,
    pub mean_reward: f64,
    pub max_reward: f64,
    pub sigma_r: f64,
    pub disc_loss: f64,
    /// Noise level after this iteration's schedule decision.
    pub nu: f64,
    pub seconds: f64,
}

impl IterationReport {
    pub const CSV_HEADER: &'static str = "iter,mean_reward,max_reward,sigma_r,disc_loss,nu,seconds";

    /// Every field but the wall time, in shortest round-trip form.
    pub fn deterministic_fields(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.iteration, self.mean_reward, self.max_reward, self.sigma_r, self.disc_loss, self.nu
        )
    }

    pub fn to_csv_row(&self) -> String {
        format!("{},{:.6}", self.deterministic_fields(), self.seconds)
    }

    pub fn from_csv_row(line: &str) -> Result<Self> {
        let cols: Vec<&str> = line.trim_end().split(',').collect();
        if cols.len() != 7 {
            return Err(Error::format(format!("metrics row has {} columns, expected 7", cols.len())));
        }
        let f = |i: usize| cols[i].parse::<f64>().map_err(|e| Error::format(format!("metrics column {i}: {e}")));
        Ok(IterationReport {
            iteration: cols[0].parse().map_err(|e| Error::format(format!("metrics iteration: {e}")))?,
            mean_reward: f(1)?,
            max_reward: f(2)?,
            sigma_r: f(3)?,
            disc_loss: f(4)?,
            nu: f(5)?,
            seconds: f(6)?,
        })
    }
}

/// Hash of a report stream that ignores wall-clock time.
pub fn metrics_digest(reports: &[IterationReport]) -> String {
    let mut text = String::new();
    for r in reports {
        text.push_str(&r.deterministic_fields());
        text.push('\n');
    }
    sha256_hex(text.as_bytes())
}

/// The N directions of iteration `t`.
pub fn iteration_directions(run_seed: u64, t: u64, count: usize, shape: PolicyShape) -> Vec<NoiseDirection> {
    sample_directions(&mut seed::rng(&[seed::stream::DIRECTIONS, run_seed, t]), count, shape)
}

/// Environment seed of direction `k` at iteration `t`, shared by both signs.
pub fn rollout_seed(run_seed: u64, t: u64, k: usize) -> u64 {
    seed::mix(&[seed::stream::ROLLOUT, run_seed, t, k as u64])
}

/// Coordinator of random-search imitation training. Owns θ, the normalizer, the
/// discriminator and the noise schedule; workers only see snapshots.
pub struct RailTrainer<'a, E: RolloutEnv> {
    env: &'a E,
    rail: RailConfig,
    shape: PolicyShape,
    engine: RolloutEngine,
    expert: Vec<(Vec<f64>, DrivingAction)>,
    state: TrainerState,
}

impl<'a, E: RolloutEnv> RailTrainer<'a, E> {
    pub fn new(env: &'a E, demos: Option<&DemonstrationSet>, rail: &RailConfig, init: Option<RailInit>) -> Result<Self> {
        rail.validate()?;
        let (n, p) = (env.observation_len(), env.action_count());
        let shape = rail.shape(n, p);
        let (theta, normalizer) = match init {
            Some(init) => {
                if init.params.shape() != shape {
                    return Err(Error::domain(format!(
                        "initial policy shape {:?} does not match the configured {:?}",
                        init.params.shape(),
                        shape
                    )));
                }
                if init.normalizer.dim() != n {
                    return Err(Error::domain("initial normalizer dimension does not match the observation"));
                }
                (init.params, init.normalizer)
            }
            None => (PolicyParams::zeros(shape)?, NormalizerState::new(n)),
        };
        let discriminator =
            DiscriminatorParams::init(n, p, rail.disc_hidden, &mut seed::rng(&[seed::stream::DISCRIMINATOR, rail.seed]));
        let optimizer = AdamState::new(discriminator.values().len(), rail.disc_learning_rate);
        let state = TrainerState {
            iteration: 0,
            theta,
            normalizer,
            discriminator,
            optimizer,
            schedule: NoiseSchedule::new(rail.nu_init, rail.tau, rail.eta),
        };
        Self::resume(env, demos, rail, state)
    }

    /// Continues from a saved state; iteration numbering picks up after it.
    pub fn resume(env: &'a E, demos: Option<&DemonstrationSet>, rail: &RailConfig, state: TrainerState) -> Result<Self> {
        rail.validate()?;
        let (n, p) = (env.observation_len(), env.action_count());
        let shape = rail.shape(n, p);
        if state.theta.shape() != shape || state.normalizer.dim() != n {
            return Err(Error::domain("saved trainer state does not match the configuration"));
        }
        if state.discriminator.state_dim() != n || state.discriminator.actions() != p {
            return Err(Error::domain("saved discriminator does not match the observation and action sizes"));
        }
        let expert = match (env.trains_discriminator(), demos) {
            (false, _) => Vec::new(),
            (true, None) => return Err(Error::domain("adversarial training needs expert demonstrations")),
            (true, Some(d)) => {
                d.validate()?;
                if d.n != n || d.p != p {
                    return Err(Error::domain(format!(
                        "demonstrations have n={}, p={} but the environment has n={n}, p={p}",
                        d.n, d.p
                    )));
                }
                d.pairs().map(|(o, a)| (o.iter().map(|&v| v as f64).collect(), a)).collect()
            }
        };
        Ok(RailTrainer { env, rail: rail.clone(), shape, engine: RolloutEngine::new(rail.workers)?, expert, state })
    }

    pub fn state(&self) -> &TrainerState {
        &self.state
    }

    pub fn into_state(self) -> TrainerState {
        self.state
    }

    pub fn config(&self) -> &RailConfig {
        &self.rail
    }

    /// Runs one iteration. On error the trainer state is left as it was
    /// before the iteration.
    pub fn step(&mut self) -> Result<IterationReport> {
        let started = Instant::now();
        let t = self.state.iteration + 1;
        let rs = self.rail.seed;
        let directions = iteration_directions(rs, t, self.rail.directions, self.shape);
        let tasks: Vec<RolloutTask> = (0..self.rail.directions)
            .flat_map(|k| [-1i8, 1].map(|sign| RolloutTask { k, sign, snapshot: t, seed: rollout_seed(rs, t, k) }))
            .collect();
        let snapshot = Snapshot {
            id: t,
            theta: &self.state.theta,
            directions: &directions,
            nu: self.state.schedule.nu,
            normalizer: &self.state.normalizer,
            discriminator: &self.state.discriminator,
        };
        let results = self.engine.run(self.env, &snapshot, &tasks)?;
        if let Some(bad) = results.iter().find(|r| !r.reward.is_finite()) {
            return Err(Error::NonFinite {
                iteration: t,
                what: format!("reward {} of rollout (k={}, sign={})", bad.reward, bad.k, bad.sign),
            });
        }

        let (discriminator, optimizer, disc_loss) = if self.env.trains_discriminator() {
            self.train_discriminator(t, &results)?
        } else {
            (self.state.discriminator.clone(), self.state.optimizer.clone(), 0.0)
        };

        let records: Vec<_> = results.iter().map(RolloutResult::record).collect();
        let theta = compute_update(&self.state.theta, &directions, &records, self.rail.alpha, self.rail.sigma_floor)?;
        if !theta.is_finite() {
            return Err(Error::NonFinite { iteration: t, what: "policy parameters".into() });
        }
        let normalizer = self
            .state
            .normalizer
            .update(results.iter().flat_map(|r| r.trajectory.transitions.iter().map(|s| s.observation.as_slice())))?;

        let rewards: Vec<f64> = results.iter().map(|r| r.reward).collect();
        let mean_reward = rewards.iter().sum::<f64>() / rewards.len() as f64;
        let max_reward = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let schedule = self.state.schedule.step(t, mean_reward);

        self.state = TrainerState { iteration: t, theta, normalizer, discriminator, optimizer, schedule };
        Ok(IterationReport {
            iteration: t,
            mean_reward,
            max_reward,
            sigma_r: reward_std(&rewards),
            disc_loss,
            nu: schedule.nu,
            seconds: started.elapsed().as_secs_f64(),
        })
    }

    fn train_discriminator(&self, t: u64, results: &[RolloutResult]) -> Result<(DiscriminatorParams, AdamState, f64)> {
        let policy_index: Vec<(usize, usize)> = results
            .iter()
            .enumerate()
            .flat_map(|(i, r)| (0..r.trajectory.len()).map(move |s| (i, s)))
            .collect();
        let mut phi = self.state.discriminator.clone();
        let mut opt = self.state.optimizer.clone();
        if policy_index.is_empty() {
            return Ok((phi, opt, 0.0));
        }
        let half = self.rail.disc_batch / 2;
        let mut rng = seed::rng(&[seed::stream::DISCRIMINATOR, self.rail.seed, t]);
        // Policy samples per minibatch: uniform draws, or a shuffled pass.
        let batches: Vec<Vec<(usize, usize)>> = match self.rail.disc_minibatches {
            Some(count) => (0..count)
                .map(|_| (0..half).map(|_| policy_index[rng.random_range(0..policy_index.len())]).collect())
                .collect(),
            None => {
                let mut order = policy_index;
                for i in (1..order.len()).rev() {
                    order.swap(i, rng.random_range(0..=i));
                }
                order.chunks(half).map(<[_]>::to_vec).collect()
            }
        };
        let mut loss_sum = 0.0;
        for picks in &batches {
            let mut policy = LabeledBatch::new();
            for &(i, s) in picks {
                let tr = &results[i].trajectory.transitions[s];
                policy.push(tr.observation.iter().map(|&v| v as f64).collect(), tr.action, POLICY_LABEL);
            }
            let mut expert = LabeledBatch::new();
            for _ in 0..picks.len() {
                let (obs, action) = &self.expert[rng.random_range(0..self.expert.len())];
                expert.push(obs.clone(), *action, EXPERT_LABEL);
            }
            let (next, next_opt, loss) = disc_update(&phi, &opt, &expert, &policy)?;
            phi = next;
            opt = next_opt;
            loss_sum += loss;
        }
        if !phi.values().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { iteration: t, what: "discriminator parameters".into() });
        }
        Ok((phi, opt, loss_sum / batches.len() as f64))
    }
}

/// Final state of a training run.
#[derive(Debug, Clone)]
pub struct RailOutcome {
    pub params: PolicyParams,
    pub normalizer: NormalizerState,
    pub discriminator: DiscriminatorParams,
    pub reports: Vec<IterationReport>,
}

/// Trains on the highway for `rail.iterations` iterations.
pub fn rail_train(
    cfg: &HighwayConfig,
    demos: &DemonstrationSet,
    rail: &RailConfig,
    init: Option<RailInit>,
) -> Result<RailOutcome> {
    cfg.validate()?;
    let env = HighwayRollout::new(cfg.clone(), rail.reward);
    let mut trainer = RailTrainer::new(&env, Some(demos), rail, init)?;
    let reports = (0..rail.iterations).map(|_| trainer.step()).collect::<Result<Vec<_>>>()?;
    let state = trainer.into_state();
    Ok(RailOutcome { params: state.theta, normalizer: state.normalizer, discriminator: state.discriminator, reports })
}

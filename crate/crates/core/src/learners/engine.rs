use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discriminator::{trajectory_reward, DiscriminatorParams};
use crate::error::{Error, Result};
use crate::policy::{perturb, NoiseDirection, NormalizedPolicy, NormalizerState, PolicyParams};
use crate::sim::{run_episode, DrivingAction, HighwayConfig};
use crate::trajectory::Trajectory;

use super::RewardRecord;

/// One perturbed-policy episode to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RolloutTask {
    pub k: usize,
    pub sign: i8,
    /// Identifier of the snapshot the task was issued against.
    pub snapshot: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    pub k: usize,
    pub sign: i8,
    pub trajectory: Trajectory,
    pub reward: f64,
}

impl RolloutResult {
    pub fn record(&self) -> RewardRecord {
        RewardRecord { k: self.k, sign: self.sign, reward: self.reward }
    }
}

/// Immutable state shared by all tasks of one iteration.
#[derive(Debug, Clone, Copy)]
pub struct Snapshot<'a> {
    pub id: u64,
    pub theta: &'a PolicyParams,
    pub directions: &'a [NoiseDirection],
    pub nu: f64,
    pub normalizer: &'a NormalizerState,
    pub discriminator: &'a DiscriminatorParams,
}

/// Something that turns a policy and a seed into a scored episode.
pub trait RolloutEnv: Sync {
    fn observation_len(&self) -> usize;

    fn action_count(&self) -> usize;

    /// Whether rollouts produce state-action data for the discriminator.
    fn trains_discriminator(&self) -> bool {
        true
    }

    fn rollout(
        &self,
        policy: &PolicyParams,
        normalizer: &NormalizerState,
        discriminator: &DiscriminatorParams,
        seed: u64,
    ) -> Result<(Trajectory, f64)>;
}

/// The highway simulator scored by the discriminator's summed logit reward.
#[derive(Debug, Clone)]
pub struct HighwayRollout {
    pub cfg: HighwayConfig,
    pub reward: RewardAggregation,
}

/// How per-step discriminator rewards become one rollout score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardAggregation {
    /// Undiscounted sum over the episode.
    #[default]
    Sum,
    /// Sum divided by the number of steps, so episode length carries no
    /// reward of its own.
    Mean,
}

impl HighwayRollout {
    pub fn new(cfg: HighwayConfig, reward: RewardAggregation) -> Self {
        HighwayRollout { cfg, reward }
    }
}

impl RolloutEnv for HighwayRollout {
    fn observation_len(&self) -> usize {
        self.cfg.observation_len()
    }

    fn action_count(&self) -> usize {
        DrivingAction::COUNT
    }

    fn rollout(
        &self,
        policy: &PolicyParams,
        normalizer: &NormalizerState,
        discriminator: &DiscriminatorParams,
        seed: u64,
    ) -> Result<(Trajectory, f64)> {
        let mut actor = NormalizedPolicy::new(policy, normalizer)?;
        let traj = run_episode(&self.cfg, seed, &mut actor)?;
        let total = trajectory_reward(discriminator, &traj)?;
        let reward = match self.reward {
            RewardAggregation::Sum => total,
            RewardAggregation::Mean => total / traj.len() as f64,
        };
        Ok((traj, reward))
    }
}

/// Test environment whose reward is `-||θ - θ*||²`, independent of the seed.
#[derive(Debug, Clone)]
pub struct QuadraticSurrogate {
    pub target: Vec<f64>,
    pub observation_len: usize,
    pub action_count: usize,
}

impl RolloutEnv for QuadraticSurrogate {
    fn observation_len(&self) -> usize {
        self.observation_len
    }

    fn action_count(&self) -> usize {
        self.action_count
    }

    fn trains_discriminator(&self) -> bool {
        false
    }

    fn rollout(&self, policy: &PolicyParams, _: &NormalizerState, _: &DiscriminatorParams, _: u64) -> Result<(Trajectory, f64)> {
        if policy.values().len() != self.target.len() {
            return Err(Error::domain("surrogate target does not match the policy size"));
        }
        let r = -policy.values().iter().zip(&self.target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        Ok((Trajectory::default(), r))
    }
}

/// A fixed-size worker pool for rollout tasks.
pub struct RolloutEngine {
    pool: rayon::ThreadPool,
    workers: usize,
}

impl std::fmt::Debug for RolloutEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RolloutEngine").field("workers", &self.workers).finish()
    }
}

impl RolloutEngine {
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::config("workers", "must be at least 1"));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .thread_name(|i| format!("rollout-{i}"))
            .build()
            .map_err(|e| Error::State(format!("cannot start worker pool: {e}")))?;
        Ok(RolloutEngine { pool, workers })
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Runs every task against the snapshot and returns results sorted by
    /// `(k, sign)`. The first failure cancels tasks that have not started.
    pub fn run<E: RolloutEnv>(&self, env: &E, snap: &Snapshot<'_>, tasks: &[RolloutTask]) -> Result<Vec<RolloutResult>> {
        validate_tasks(snap, tasks)?;
        let cancelled = AtomicBool::new(false);
        let outcomes: Vec<Option<Result<RolloutResult>>> = self.pool.install(|| {
            tasks
                .par_iter()
                .map(|task| {
                    if cancelled.load(Ordering::Relaxed) {
                        return None;
                    }
                    let out = run_task(env, snap, task);
                    if out.is_err() {
                        cancelled.store(true, Ordering::Relaxed);
                    }
                    Some(out)
                })
                .collect()
        });
        let mut results = Vec::with_capacity(tasks.len());
        let mut failures = Vec::new();
        for outcome in outcomes.into_iter().flatten() {
            match outcome {
                Ok(r) => results.push(r),
                Err(e) => failures.push(e),
            }
        }
        if let Some(first) = failures.into_iter().min_by_key(|e| match e {
            Error::Rollout { k, sign, .. } => (*k, *sign),
            _ => (usize::MAX, 0),
        }) {
            return Err(first);
        }
        results.sort_by_key(|r| (r.k, r.sign));
        Ok(results)
    }
}

fn validate_tasks(snap: &Snapshot<'_>, tasks: &[RolloutTask]) -> Result<()> {
    if tasks.is_empty() {
        return Err(Error::domain("no rollout tasks"));
    }
    let mut seen = HashSet::with_capacity(tasks.len());
    for t in tasks {
        if t.snapshot != snap.id {
            return Err(Error::domain(format!("task (k={}, sign={}) targets snapshot {} not {}", t.k, t.sign, t.snapshot, snap.id)));
        }
        if t.k >= snap.directions.len() {
            return Err(Error::domain(format!("task direction {} out of range", t.k)));
        }
        if t.sign != 1 && t.sign != -1 {
            return Err(Error::domain(format!("task sign must be +1 or -1, got {}", t.sign)));
        }
        if !seen.insert((t.k, t.sign)) {
            return Err(Error::domain(format!("duplicate task (k={}, sign={})", t.k, t.sign)));
        }
    }
    Ok(())
}

fn run_task<E: RolloutEnv>(env: &E, snap: &Snapshot<'_>, task: &RolloutTask) -> Result<RolloutResult> {
    let wrap = |message: String| Error::Rollout { k: task.k, sign: task.sign, message };
    let run = || -> Result<(Trajectory, f64)> {
        let policy = perturb(snap.theta, &snap.directions[task.k], snap.nu, task.sign)?;
        env.rollout(&policy, snap.normalizer, snap.discriminator, task.seed)
    };
    match catch_unwind(AssertUnwindSafe(run)) {
        Ok(Ok((trajectory, reward))) => Ok(RolloutResult { k: task.k, sign: task.sign, trajectory, reward }),
        Ok(Err(e)) => Err(wrap(e.to_string())),
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "worker panicked".to_string());
            Err(wrap(format!("panic: {message}")))
        }
    }
}

/// One-shot convenience wrapper that builds a pool of `workers` threads.
pub fn rollout_engine_run<E: RolloutEnv>(
    env: &E,
    snap: &Snapshot<'_>,
    tasks: &[RolloutTask],
    workers: usize,
) -> Result<Vec<RolloutResult>> {
    RolloutEngine::new(workers)?.run(env, snap, tasks)
}

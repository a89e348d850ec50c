use serde::{Deserialize, Serialize};

use super::{env_reset, DrivingAction, HighwayConfig, HighwayState};
use crate::error::{Error, Result};
use crate::seed;
use crate::trajectory::{StepMetrics, Trajectory};

/// Anything that picks a driving decision each step.
pub trait DrivingPolicy {
    fn act(
        &mut self,
        cfg: &HighwayConfig,
        observation: &[f64],
        state: &HighwayState,
    ) -> DrivingAction;
}

impl<F> DrivingPolicy for F
where
    F: FnMut(&HighwayConfig, &[f64], &HighwayState) -> DrivingAction,
{
    fn act(
        &mut self,
        cfg: &HighwayConfig,
        observation: &[f64],
        state: &HighwayState,
    ) -> DrivingAction {
        self(cfg, observation, state)
    }
}

/// Always the same decision.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPolicy(pub DrivingAction);

impl DrivingPolicy for ConstantPolicy {
    fn act(&mut self, _: &HighwayConfig, _: &[f64], _: &HighwayState) -> DrivingAction {
        self.0
    }
}

/// Totals for one episode.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub steps: usize,
    pub avg_speed: f64,
    pub lane_changes: u32,
    pub overtakes: u32,
    pub longitudinal_sum: f64,
    pub lateral_sum: f64,
    pub collision: bool,
}

impl EpisodeStats {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let m = &traj.metrics;
        let steps = m.len();
        EpisodeStats {
            steps,
            avg_speed: if steps == 0 {
                0.0
            } else {
                m.iter().map(|s| s.speed).sum::<f64>() / steps as f64
            },
            lane_changes: m.iter().filter(|s| s.lane_change_completed).count() as u32,
            overtakes: m.iter().map(|s| s.overtakes).sum(),
            longitudinal_sum: m.iter().map(|s| s.longitudinal_reward).sum(),
            lateral_sum: m.iter().map(|s| s.lateral_reward).sum(),
            collision: m.iter().any(|s| s.collision),
        }
    }
}

/// Driving statistics averaged over an evaluation episode set.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DrivingStats {
    pub avg_speed: f64,
    pub lane_changes: f64,
    pub overtakes: f64,
    pub longitudinal_sum: f64,
    pub lateral_sum: f64,
}

impl DrivingStats {
    pub const CSV_HEADER: &'static str = "avg_speed,lane_changes,overtakes,longitudinal,lateral";

    pub fn mean_of(episodes: &[EpisodeStats]) -> Self {
        let n = episodes.len().max(1) as f64;
        let sum = |f: fn(&EpisodeStats) -> f64| episodes.iter().map(f).sum::<f64>() / n;
        DrivingStats {
            avg_speed: sum(|e| e.avg_speed),
            lane_changes: sum(|e| e.lane_changes as f64),
            overtakes: sum(|e| e.overtakes as f64),
            longitudinal_sum: sum(|e| e.longitudinal_sum),
            lateral_sum: sum(|e| e.lateral_sum),
        }
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{}\n{},{},{},{},{}\n",
            Self::CSV_HEADER,
            self.avg_speed,
            self.lane_changes,
            self.overtakes,
            self.longitudinal_sum,
            self.lateral_sum
        )
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(Self::CSV_HEADER) {
            return Err(Error::format("driving stats CSV header mismatch"));
        }
        let row = lines
            .next()
            .ok_or_else(|| Error::format("driving stats CSV has no data row"))?;
        let vals: Vec<f64> = row
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::format(format!("bad number in stats CSV: {e}")))?;
        if vals.len() != 5 {
            return Err(Error::format("driving stats CSV needs five columns"));
        }
        Ok(DrivingStats {
            avg_speed: vals[0],
            lane_changes: vals[1],
            overtakes: vals[2],
            longitudinal_sum: vals[3],
            lateral_sum: vals[4],
        })
    }
}

/// Runs one episode until collision or horizon.
pub fn run_episode<P: DrivingPolicy + ?Sized>(
    cfg: &HighwayConfig,
    seed: u64,
    policy: &mut P,
) -> Result<Trajectory> {
    let (mut state, mut obs) = env_reset(cfg, seed)?;
    let mut traj = Trajectory::default();
    loop {
        let action = policy.act(cfg, &obs, &state);
        let out = state.step_mut(cfg, action)?;
        traj.push(
            &obs,
            action,
            StepMetrics {
                speed: state.host.speed,
                longitudinal_reward: out.longitudinal_reward,
                lateral_reward: out.lateral_reward,
                overtakes: out.info.overtakes_delta,
                lane_change_completed: out.info.lane_change_completed,
                collision: out.info.collision,
            },
        );
        if out.terminated {
            return Ok(traj);
        }
        obs = out.observation;
    }
}

/// Seed of evaluation episode `i` under evaluation seed `seed`.
pub fn evaluation_episode_seed(seed: u64, i: usize) -> u64 {
    seed::mix(&[seed::stream::EVALUATION, seed, i as u64])
}

/// Averages driving statistics over a fixed, seeded episode set.
pub fn evaluate_policy<P: DrivingPolicy + ?Sized>(
    policy: &mut P,
    cfg: &HighwayConfig,
    episodes: usize,
    seed: u64,
) -> Result<DrivingStats> {
    if episodes == 0 {
        return Err(Error::domain("evaluation needs at least one episode"));
    }
    let per_episode = (0..episodes)
        .map(|i| {
            run_episode(cfg, evaluation_episode_seed(seed, i), policy)
                .map(|t| EpisodeStats::from_trajectory(&t))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DrivingStats::mean_of(&per_episode))
}

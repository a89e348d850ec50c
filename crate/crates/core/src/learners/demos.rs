use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::sim::{run_episode, DrivingAction, DrivingPolicy, HighwayConfig};
use crate::trajectory::Trajectory;

/// Collision episodes are resampled at most this many times per slot.
pub const MAX_DEMO_ATTEMPTS: u64 = 1000;

/// Expert state-action episodes used as the imitation target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemonstrationSet {
    pub n: usize,
    pub p: usize,
    pub source: String,
    pub config_digest: String,
    pub episodes: Vec<Trajectory>,
    /// Environment seed each stored episode was generated from.
    pub episode_seeds: Vec<u64>,
}

impl DemonstrationSet {
    pub fn validate(&self) -> Result<()> {
        if self.episodes.is_empty() {
            return Err(Error::domain("a demonstration set needs at least one episode"));
        }
        if self.p == 0 || self.p > DrivingAction::COUNT {
            return Err(Error::domain(format!("unsupported action count {}", self.p)));
        }
        for (i, ep) in self.episodes.iter().enumerate() {
            if ep.is_empty() {
                return Err(Error::domain(format!("demonstration episode {i} is empty")));
            }
            for t in &ep.transitions {
                if t.observation.len() != self.n {
                    return Err(Error::domain(format!(
                        "episode {i} has an observation of length {} (expected {})",
                        t.observation.len(),
                        self.n
                    )));
                }
                if t.action.id() >= self.p {
                    return Err(Error::domain(format!("episode {i} has action {} >= {}", t.action.id(), self.p)));
                }
            }
        }
        Ok(())
    }

    pub fn step_count(&self) -> usize {
        self.episodes.iter().map(Trajectory::len).sum()
    }

    /// All `(observation, action)` pairs in episode order.
    pub fn pairs(&self) -> impl Iterator<Item = (&[f32], DrivingAction)> {
        self.episodes
            .iter()
            .flat_map(|e| e.transitions.iter().map(|t| (t.observation.as_slice(), t.action)))
    }
}

/// Records `episodes` collision-free episodes of `expert`. Slot `i` tries
/// sub-seeds `0, 1, ...` until an episode ends without a collision.
pub fn record_demonstrations<P: DrivingPolicy + ?Sized>(
    cfg: &HighwayConfig,
    expert: &mut P,
    source: &str,
    episodes: usize,
    seed: u64,
) -> Result<DemonstrationSet> {
    cfg.validate()?;
    if episodes == 0 {
        return Err(Error::domain("at least one demonstration episode is required"));
    }
    let mut set = DemonstrationSet {
        n: cfg.observation_len(),
        p: DrivingAction::COUNT,
        source: source.to_string(),
        config_digest: cfg.digest()?,
        episodes: Vec::with_capacity(episodes),
        episode_seeds: Vec::with_capacity(episodes),
    };
    for i in 0..episodes {
        let mut attempt = 0;
        loop {
            if attempt == MAX_DEMO_ATTEMPTS {
                return Err(Error::State(format!(
                    "demonstrator collided in {MAX_DEMO_ATTEMPTS} consecutive attempts for episode {i}"
                )));
            }
            let episode_seed = seed::mix(&[seed::stream::DEMOS, seed, i as u64, attempt]);
            let traj = run_episode(cfg, episode_seed, expert)?;
            if !traj.collided() {
                set.episodes.push(traj);
                set.episode_seeds.push(episode_seed);
                break;
            }
            attempt += 1;
        }
    }
    Ok(set)
}

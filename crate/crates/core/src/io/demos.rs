use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{put_header, Reader};
use crate::error::{Error, Result};
use crate::learners::DemonstrationSet;
use crate::sim::DrivingAction;
use crate::trajectory::{StepMetrics, Trajectory, Transition};

pub const DEMO_MAGIC: &[u8; 5] = b"RDEM1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    n: usize,
    p: usize,
    episodes: usize,
    config_digest: String,
    source: String,
    episode_seeds: Vec<u64>,
}

/// Encodes a demonstration set. Each episode is a `u32` step count followed
/// by `n` little-endian f32 values and one action byte per step. Step
/// metrics are not stored.
pub fn demonstrations_to_bytes(demos: &DemonstrationSet) -> Result<Vec<u8>> {
    demos.validate()?;
    let header = Header {
        n: demos.n,
        p: demos.p,
        episodes: demos.episodes.len(),
        config_digest: demos.config_digest.clone(),
        source: demos.source.clone(),
        episode_seeds: demos.episode_seeds.clone(),
    };
    let mut out = Vec::with_capacity(demos.step_count() * (4 * demos.n + 1) + 256);
    put_header(&mut out, DEMO_MAGIC, &header)?;
    for ep in &demos.episodes {
        let steps = u32::try_from(ep.len()).map_err(|_| Error::domain("episode too long to store"))?;
        out.extend_from_slice(&steps.to_le_bytes());
        for t in &ep.transitions {
            for v in &t.observation {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.push(t.action.id() as u8);
        }
    }
    Ok(out)
}

pub fn demonstrations_from_bytes(bytes: &[u8]) -> Result<DemonstrationSet> {
    let mut r = Reader::new(bytes);
    r.magic(DEMO_MAGIC)?;
    let h: Header = r.json("demonstration header")?;
    if !h.episode_seeds.is_empty() && h.episode_seeds.len() != h.episodes {
        return Err(Error::format("episode seed list does not match the episode count"));
    }
    let step_bytes = h.n.checked_mul(4).and_then(|b| b.checked_add(1)).ok_or_else(|| Error::format("bad n"))?;
    let mut episodes = Vec::new();
    for i in 0..h.episodes {
        let steps = r.u32("episode length")? as usize;
        if steps.saturating_mul(step_bytes) > r.remaining() {
            return Err(Error::format(format!("episode {i} is truncated")));
        }
        let mut ep = Trajectory::default();
        for _ in 0..steps {
            let observation: Vec<f32> = r
                .take(4 * h.n, "observation")?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if observation.iter().any(|v| !v.is_finite()) {
                return Err(Error::format(format!("episode {i} has a non-finite observation")));
            }
            let id = r.u8("action")? as usize;
            if id >= h.p {
                return Err(Error::format(format!("episode {i} has action {id} >= {}", h.p)));
            }
            let action = DrivingAction::from_id(id).map_err(|e| Error::format(e.to_string()))?;
            ep.transitions.push(Transition { observation, action });
            ep.metrics.push(StepMetrics::default());
        }
        episodes.push(ep);
    }
    r.finish("demonstrations")?;
    let demos = DemonstrationSet {
        n: h.n,
        p: h.p,
        source: h.source,
        config_digest: h.config_digest,
        episodes,
        episode_seeds: h.episode_seeds,
    };
    demos.validate().map_err(|e| Error::format(e.to_string()))?;
    Ok(demos)
}

pub fn write_demonstrations(path: &Path, demos: &DemonstrationSet) -> Result<()> {
    std::fs::write(path, demonstrations_to_bytes(demos)?)?;
    Ok(())
}

pub fn read_demonstrations(path: &Path) -> Result<DemonstrationSet> {
    demonstrations_from_bytes(&std::fs::read(path)?)
}

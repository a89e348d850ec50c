use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{put_f32s, put_header, put_json, Reader};
use crate::discriminator::{AdamState, DiscriminatorParams};
use crate::error::{Error, Result};
use crate::learners::TrainerState;
use crate::policy::{NoiseSchedule, NormalizerState, PolicyKind, PolicyParams, PolicyShape};

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"RCKP1";

/// Run bookkeeping stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckpointMeta {
    /// Last completed training iteration (BC checkpoints use 0).
    pub iteration: u64,
    pub config_digest: String,
    pub schedule: Option<NoiseSchedule>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorSection {
    pub params: DiscriminatorParams,
    pub optimizer: AdamState,
}

/// A policy with its normalizer, plus optional trainer state for resuming.
///
/// Values are stored as 32-bit floats, so a loaded checkpoint equals the
/// written one only up to that rounding. Writing a loaded checkpoint again
/// reproduces the file byte for byte.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: PolicyParams,
    pub normalizer: NormalizerState,
    pub meta: CheckpointMeta,
    pub discriminator: Option<DiscriminatorSection>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    kind: PolicyKind,
    n: usize,
    h: usize,
    p: usize,
    count: u64,
    iteration: u64,
    config_digest: String,
    schedule: Option<ScheduleHeader>,
    discriminator: bool,
}

// JSON has no infinities, so a schedule that has not scored yet stores null.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleHeader {
    nu: f64,
    nu_init: f64,
    tau: f64,
    eta: u64,
    best_metric: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiscHeader {
    state_dim: usize,
    actions: usize,
    hidden: usize,
    adam_step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Checkpoint {
    pub fn new(params: PolicyParams, normalizer: NormalizerState) -> Self {
        Checkpoint { params, normalizer, meta: CheckpointMeta::default(), discriminator: None }
    }

    pub fn from_trainer(state: &TrainerState, config_digest: &str) -> Self {
        Checkpoint {
            params: state.theta.clone(),
            normalizer: state.normalizer.clone(),
            meta: CheckpointMeta {
                iteration: state.iteration,
                config_digest: config_digest.to_owned(),
                schedule: Some(state.schedule),
            },
            discriminator: Some(DiscriminatorSection {
                params: state.discriminator.clone(),
                optimizer: state.optimizer.clone(),
            }),
        }
    }

    /// Trainer state to resume from; needs the schedule and discriminator.
    pub fn trainer_state(&self) -> Result<TrainerState> {
        let (Some(schedule), Some(disc)) = (self.meta.schedule, &self.discriminator) else {
            return Err(Error::State("checkpoint carries no trainer state to resume from".into()));
        };
        Ok(TrainerState {
            iteration: self.meta.iteration,
            theta: self.params.clone(),
            normalizer: self.normalizer.clone(),
            discriminator: disc.params.clone(),
            optimizer: disc.optimizer.clone(),
            schedule,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let shape = self.params.shape();
        if self.normalizer.dim() != shape.n {
            return Err(Error::domain(format!(
                "normalizer dimension {} does not match policy input {}",
                self.normalizer.dim(),
                shape.n
            )));
        }
        let header = Header {
            kind: shape.kind,
            n: shape.n,
            h: shape.h,
            p: shape.p,
            count: self.normalizer.count,
            iteration: self.meta.iteration,
            config_digest: self.meta.config_digest.clone(),
            schedule: self.meta.schedule.map(|s| ScheduleHeader {
                nu: s.nu,
                nu_init: s.nu_init,
                tau: s.tau,
                eta: s.eta,
                best_metric: s.best_metric.is_finite().then_some(s.best_metric),
            }),
            discriminator: self.discriminator.is_some(),
        };
        let mut out = Vec::new();
        put_header(&mut out, CHECKPOINT_MAGIC, &header)?;
        // Flat policy order is already θⁱ, θᵒ, bⁱ, bᵒ.
        put_f32s(&mut out, self.params.values());
        put_f32s(&mut out, &self.normalizer.mean);
        put_f32s(&mut out, &self.normalizer.m2);
        if let Some(d) = &self.discriminator {
            let o = &d.optimizer;
            if o.m.len() != d.params.values().len() || o.v.len() != o.m.len() {
                return Err(Error::domain("optimizer state does not match the discriminator"));
            }
            let sub = DiscHeader {
                state_dim: d.params.state_dim(),
                actions: d.params.actions(),
                hidden: d.params.hidden(),
                adam_step: o.step,
                lr: o.lr,
                beta1: o.beta1,
                beta2: o.beta2,
                eps: o.eps,
            };
            put_json(&mut out, &serde_json::to_vec(&sub)?)?;
            put_f32s(&mut out, d.params.values());
            put_f32s(&mut out, &o.m);
            put_f32s(&mut out, &o.v);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(CHECKPOINT_MAGIC)?;
        let h: Header = r.json("checkpoint header")?;
        let shape = PolicyShape { kind: h.kind, n: h.n, h: h.h, p: h.p };
        shape.validate().map_err(|e| Error::format(format!("checkpoint shape: {e}")))?;
        // Reject absurd shapes before allocating for them.
        let expected = shape.len().saturating_add(2 * h.n).saturating_mul(4);
        if expected > r.remaining() {
            return Err(Error::format(format!(
                "checkpoint payload needs {expected} bytes, {} present",
                r.remaining()
            )));
        }
        let params = PolicyParams::from_values(shape, r.f32s(shape.len(), "policy weights")?)
            .map_err(|e| Error::format(e.to_string()))?;
        let normalizer = NormalizerState {
            count: h.count,
            mean: r.f32s(h.n, "normalizer mean")?,
            m2: r.f32s(h.n, "normalizer M2")?,
        };
        if !normalizer.is_valid() {
            return Err(Error::format("normalizer statistics are invalid"));
        }
        let discriminator = if h.discriminator {
            let d: DiscHeader = r.json("discriminator header")?;
            let len = DiscriminatorParams::param_count(d.state_dim, d.actions, d.hidden);
            if len.saturating_mul(12) > r.remaining() {
                return Err(Error::format("truncated discriminator section"));
            }
            let params = DiscriminatorParams::from_values(
                d.state_dim,
                d.actions,
                d.hidden,
                r.f32s(len, "discriminator weights")?,
            )
            .map_err(|e| Error::format(e.to_string()))?;
            let optimizer = AdamState {
                m: r.f32s(len, "optimizer first moment")?,
                v: r.f32s(len, "optimizer second moment")?,
                step: d.adam_step,
                lr: d.lr,
                beta1: d.beta1,
                beta2: d.beta2,
                eps: d.eps,
            };
            Some(DiscriminatorSection { params, optimizer })
        } else {
            None
        };
        r.finish("checkpoint")?;
        let schedule = h.schedule.map(|s| NoiseSchedule {
            nu: s.nu,
            nu_init: s.nu_init,
            tau: s.tau,
            eta: s.eta.max(1),
            best_metric: s.best_metric.unwrap_or(f64::NEG_INFINITY),
        });
        Ok(Checkpoint {
            params,
            normalizer,
            meta: CheckpointMeta { iteration: h.iteration, config_digest: h.config_digest, schedule },
            discriminator,
        })
    }
}

pub fn write_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    std::fs::write(path, checkpoint.to_bytes()?)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}

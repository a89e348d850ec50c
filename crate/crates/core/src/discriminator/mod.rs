//! Expert-vs-policy classifier `D(s, a)` trained with the least-squares GAN
//! objective; its logit is the imitation reward.
//!
//! Input is the observation concatenated with a one-hot action, one tanh
//! hidden layer and a sigmoid output clamped to `[ε, 1 - ε]`.

mod adam;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot};
use crate::sim::DrivingAction;
use crate::trajectory::Trajectory;

pub use adam::AdamState;

/// Output clamp applied before logs.
pub const OUTPUT_EPS: f64 = 1e-6;
/// Label of policy samples.
pub const POLICY_LABEL: f64 = 0.0;
/// Label of expert samples.
pub const EXPERT_LABEL: f64 = 1.0;

/// Flat parameter vector `[W1 (m x d), b1 (m), W2 (m), b2]` with
/// `d = state_dim + actions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorParams {
    state_dim: usize,
    actions: usize,
    hidden: usize,
    values: Vec<f64>,
}

impl DiscriminatorParams {
    pub fn param_count(state_dim: usize, actions: usize, hidden: usize) -> usize {
        hidden * (state_dim + actions) + 2 * hidden + 1
    }

    pub fn zeros(state_dim: usize, actions: usize, hidden: usize) -> Self {
        DiscriminatorParams {
            state_dim,
            actions,
            hidden,
            values: vec![0.0; Self::param_count(state_dim, actions, hidden)],
        }
    }

    /// Gaussian initialisation scaled by fan-in, zero biases.
    pub fn init<R: Rng + ?Sized>(state_dim: usize, actions: usize, hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(state_dim, actions, hidden);
        let d = p.input_dim();
        let s1 = 1.0 / (d as f64).sqrt();
        let s2 = 1.0 / (hidden as f64).sqrt();
        for w in p.w1_mut() {
            *w = s1 * rng.sample::<f64, _>(StandardNormal);
        }
        let o = p.w2_offset();
        for w in &mut p.values[o..o + hidden] {
            *w = s2 * rng.sample::<f64, _>(StandardNormal);
        }
        p
    }

    pub fn from_values(state_dim: usize, actions: usize, hidden: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != Self::param_count(state_dim, actions, hidden) {
            return Err(Error::domain("discriminator parameter count mismatch"));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::domain("discriminator parameters must be finite"));
        }
        Ok(DiscriminatorParams { state_dim, actions, hidden, values })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.state_dim + self.actions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    fn b1_offset(&self) -> usize {
        self.hidden * self.input_dim()
    }

    fn w2_offset(&self) -> usize {
        self.b1_offset() + self.hidden
    }

    fn b2_offset(&self) -> usize {
        self.w2_offset() + self.hidden
    }

    fn w1_mut(&mut self) -> &mut [f64] {
        let end = self.b1_offset();
        &mut self.values[..end]
    }

    fn w1_row(&self, j: usize) -> &[f64] {
        let d = self.input_dim();
        &self.values[j * d..(j + 1) * d]
    }

    pub fn b1(&self) -> &[f64] {
        &self.values[self.b1_offset()..self.w2_offset()]
    }

    pub fn w2(&self) -> &[f64] {
        &self.values[self.w2_offset()..self.b2_offset()]
    }

    pub fn b2(&self) -> f64 {
        self.values[self.b2_offset()]
    }

    fn check(&self, state: &[f64], action: usize) -> Result<()> {
        if state.len() != self.state_dim || action >= self.actions {
            return Err(Error::domain(format!(
                "discriminator expects a state of length {} and action < {}, got {} / {}",
                self.state_dim,
                self.actions,
                state.len(),
                action
            )));
        }
        Ok(())
    }

    /// Hidden activations and the unclamped sigmoid output.
    fn forward_raw(&self, state: &[f64], action: usize, hidden: &mut [f64]) -> f64 {
        let n = self.state_dim;
        let b1 = self.b1();
        for (j, h) in hidden.iter_mut().enumerate() {
            let row = self.w1_row(j);
            *h = (dot(&row[..n], state) + row[n + action] + b1[j]).tanh();
        }
        sigmoid(dot(self.w2(), hidden) + self.b2())
    }

    /// Clamped `D(s, a)` using caller-provided scratch of length `hidden`.
    pub fn forward_with(&self, state: &[f64], action: usize, hidden: &mut [f64]) -> f64 {
        clamp_output(self.forward_raw(state, action, hidden))
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn clamp_output(d: f64) -> f64 {
    d.clamp(OUTPUT_EPS, 1.0 - OUTPUT_EPS)
}

/// `D(s, a)` in `[ε, 1 - ε]`.
pub fn disc_forward(phi: &DiscriminatorParams, state: &[f64], action: DrivingAction) -> Result<f64> {
    phi.check(state, action.id())?;
    let mut hidden = vec![0.0; phi.hidden];
    Ok(phi.forward_with(state, action.id(), &mut hidden))
}

/// Imitation reward `log D - log(1 - D)`.
pub fn reward_from_output(d: f64) -> f64 {
    d.ln() - (1.0 - d).ln()
}

pub fn reward_signal(phi: &DiscriminatorParams, state: &[f64], action: DrivingAction) -> Result<f64> {
    Ok(reward_from_output(disc_forward(phi, state, action)?))
}

/// Undiscounted sum of per-step rewards over a trajectory.
pub fn trajectory_reward(phi: &DiscriminatorParams, traj: &Trajectory) -> Result<f64> {
    if traj.is_empty() {
        return Err(Error::domain("cannot score an empty trajectory"));
    }
    let mut hidden = vec![0.0; phi.hidden];
    let mut state = vec![0.0; phi.state_dim];
    let mut total = 0.0;
    for t in &traj.transitions {
        if t.observation.len() != phi.state_dim {
            return Err(Error::domain("trajectory observation length does not match the discriminator"));
        }
        for (s, &o) in state.iter_mut().zip(&t.observation) {
            *s = o as f64;
        }
        total += reward_from_output(phi.forward_with(&state, t.action.id(), &mut hidden));
    }
    Ok(total)
}

/// State-action samples with per-sample target labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledBatch {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub labels: Vec<f64>,
}

impl LabeledBatch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, state: Vec<f64>, action: DrivingAction, label: f64) {
        self.states.push(state);
        self.actions.push(action.id());
        self.labels.push(label);
    }

    pub fn with_label<'a, I>(pairs: I, label: f64) -> Self
    where
        I: IntoIterator<Item = (&'a [f64], DrivingAction)>,
    {
        let mut b = LabeledBatch::new();
        for (s, a) in pairs {
            b.push(s.to_vec(), a, label);
        }
        b
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn check(&self, phi: &DiscriminatorParams) -> Result<()> {
        if self.is_empty() {
            return Err(Error::domain("discriminator batches must be nonempty"));
        }
        if self.states.len() != self.labels.len() || self.actions.len() != self.labels.len() {
            return Err(Error::domain("batch columns have different lengths"));
        }
        if self.labels.iter().any(|&l| l != POLICY_LABEL && l != EXPERT_LABEL) {
            return Err(Error::domain("labels must be 0 or 1"));
        }
        for (s, &a) in self.states.iter().zip(&self.actions) {
            phi.check(s, a)?;
        }
        Ok(())
    }
}

/// `½ mean_expert[(D - label)²] + ½ mean_policy[(D - label)²]`.
pub fn lsgan_loss(phi: &DiscriminatorParams, expert: &LabeledBatch, policy: &LabeledBatch) -> Result<f64> {
    expert.check(phi)?;
    policy.check(phi)?;
    let mut hidden = vec![0.0; phi.hidden];
    let mut half_mean = |batch: &LabeledBatch| {
        let sum: f64 = (0..batch.len())
            .map(|i| {
                let d = phi.forward_with(&batch.states[i], batch.actions[i], &mut hidden);
                (d - batch.labels[i]).powi(2)
            })
            .sum();
        0.5 * sum / batch.len() as f64
    };
    Ok(half_mean(expert) + half_mean(policy))
}

/// Exact gradient of [`lsgan_loss`], laid out like the parameters. The clamp
/// passes gradient only strictly inside `(ε, 1 - ε)`.
pub fn disc_grad(phi: &DiscriminatorParams, expert: &LabeledBatch, policy: &LabeledBatch) -> Result<Vec<f64>> {
    expert.check(phi)?;
    policy.check(phi)?;
    let mut grad = vec![0.0; phi.values.len()];
    let mut hidden = vec![0.0; phi.hidden];
    let mut dz1 = vec![0.0; phi.hidden];
    let n = phi.state_dim;
    let d_in = phi.input_dim();
    let (b1_off, w2_off, b2_off) = (phi.b1_offset(), phi.w2_offset(), phi.b2_offset());
    for batch in [expert, policy] {
        let weight = 1.0 / batch.len() as f64;
        for i in 0..batch.len() {
            let state = &batch.states[i];
            let action = batch.actions[i];
            let raw = phi.forward_raw(state, action, &mut hidden);
            if raw <= OUTPUT_EPS || raw >= 1.0 - OUTPUT_EPS {
                continue;
            }
            // d/dz2 of ½·w·(σ(z2) - y)²
            let g2 = weight * (raw - batch.labels[i]) * raw * (1.0 - raw);
            grad[b2_off] += g2;
            axpy(g2, &hidden, &mut grad[w2_off..b2_off]);
            let w2 = phi.w2();
            for j in 0..phi.hidden {
                dz1[j] = g2 * w2[j] * (1.0 - hidden[j] * hidden[j]);
            }
            for j in 0..phi.hidden {
                let row = &mut grad[j * d_in..(j + 1) * d_in];
                axpy(dz1[j], state, &mut row[..n]);
                row[n + action] += dz1[j];
                grad[b1_off + j] += dz1[j];
            }
        }
    }
    Ok(grad)
}

/// One adaptive-moment step on the LS-GAN loss. Returns the new parameters,
/// the new optimizer state and the loss before the step.
pub fn disc_update(
    phi: &DiscriminatorParams,
    opt: &AdamState,
    expert: &LabeledBatch,
    policy: &LabeledBatch,
) -> Result<(DiscriminatorParams, AdamState, f64)> {
    let loss = lsgan_loss(phi, expert, policy)?;
    let grad = disc_grad(phi, expert, policy)?;
    let mut next = phi.clone();
    let opt = opt.step(&mut next.values, &grad)?;
    Ok((next, opt, loss))
}

#[cfg(test)]
mod tests;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::discriminator::AdamState;
use crate::error::{Error, Result};
use crate::linalg::axpy;
use crate::policy::{NormalizedPolicy, NormalizerState, PolicyKind, PolicyParams, PolicyShape};
use crate::seed;

use super::DemonstrationSet;

/// Behavior-cloning hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BcConfig {
    pub kind: PolicyKind,
    /// Hidden width of a two-layer policy; ignored for linear policies.
    pub hidden: usize,
    pub epochs: usize,
    pub seed: u64,
    pub learning_rate: f64,
    /// L2 penalty `λ·||W||²` on the weight matrices (biases are not penalized).
    pub weight_decay: f64,
}

impl Default for BcConfig {
    fn default() -> Self {
        BcConfig { kind: PolicyKind::TwoLayer, hidden: 10, epochs: 1500, seed: 0, learning_rate: 0.01, weight_decay: 1e-3 }
    }
}

impl BcConfig {
    pub fn shape(&self, n: usize, p: usize) -> PolicyShape {
        match self.kind {
            PolicyKind::Linear => PolicyShape::linear(n, p),
            PolicyKind::TwoLayer => PolicyShape::two_layer(n, self.hidden, p),
        }
    }
}

/// Seeded starting point: Gaussian weights scaled by fan-in, zero biases.
pub fn bc_initial_params(shape: PolicyShape, seed: u64) -> Result<PolicyParams> {
    let mut params = PolicyParams::zeros(shape)?;
    let mut rng = seed::rng(&[seed::stream::INIT, seed]);
    let mut offset = 0;
    let values = params.values_mut();
    for (rows, cols) in shape.layer_shapes() {
        let scale = 1.0 / (cols as f64).sqrt();
        for v in &mut values[offset..offset + rows * cols] {
            *v = scale * rng.sample::<f64, _>(StandardNormal);
        }
        offset += rows * cols;
    }
    Ok(params)
}

/// Behavior cloning with the default optimizer settings.
pub fn bc_train(
    demos: &DemonstrationSet,
    kind: PolicyKind,
    hidden: usize,
    epochs: usize,
    seed: u64,
) -> Result<(PolicyParams, NormalizerState)> {
    bc_train_with(demos, &BcConfig { kind, hidden, epochs, seed, ..BcConfig::default() })
}

/// Fits the policy logits to one-hot expert actions by full-batch Adam on the
/// mean squared error, in coordinates whitened by the demonstration states.
pub fn bc_train_with(demos: &DemonstrationSet, cfg: &BcConfig) -> Result<(PolicyParams, NormalizerState)> {
    demos.validate()?;
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::config("learning_rate", "must be positive"));
    }
    if !(cfg.weight_decay >= 0.0) {
        return Err(Error::config("weight_decay", "must be non-negative"));
    }
    let shape = cfg.shape(demos.n, demos.p);
    let mut params = bc_initial_params(shape, cfg.seed)?;
    let normalizer = NormalizerState::from_batch(demos.n, demos.pairs().map(|(o, _)| o))?;

    let n = demos.n;
    let count = demos.step_count();
    let mut inputs = vec![0.0; count * n];
    let mut raw = vec![0.0; n];
    let mut labels = Vec::with_capacity(count);
    for (i, (obs, action)) in demos.pairs().enumerate() {
        for (r, &o) in raw.iter_mut().zip(obs) {
            *r = o as f64;
        }
        normalizer.whiten_into(&raw, &mut inputs[i * n..(i + 1) * n]);
        labels.push(action.id());
    }

    let weight_count: usize = shape.layer_shapes().iter().map(|(r, c)| r * c).sum();
    let mut opt = AdamState::new(shape.len(), cfg.learning_rate);
    let mut grad = vec![0.0; shape.len()];
    for _ in 0..cfg.epochs {
        mse_gradient(&params, &inputs, &labels, &mut grad);
        if cfg.weight_decay > 0.0 {
            let v = params.values();
            for i in 0..weight_count {
                grad[i] += 2.0 * cfg.weight_decay * v[i];
            }
        }
        opt = opt.step(params.values_mut(), &grad)?;
    }
    if !params.is_finite() {
        return Err(Error::NonFinite { iteration: cfg.epochs as u64, what: "behavior cloning weights".into() });
    }
    Ok((params, normalizer))
}

/// Gradient of `mean_i ||f(x_i) - onehot(y_i)||²` in the flat parameter layout.
fn mse_gradient(params: &PolicyParams, inputs: &[f64], labels: &[usize], grad: &mut [f64]) {
    let s = params.shape();
    let (n, h, p) = (s.n, s.h, s.p);
    grad.iter_mut().for_each(|g| *g = 0.0);
    let scale = 2.0 / labels.len() as f64;
    let v = params.values();
    let mut logits = vec![0.0; p];
    let mut hidden = vec![0.0; h];
    let mut err = vec![0.0; p];
    let mut dh = vec![0.0; h];
    for (i, &y) in labels.iter().enumerate() {
        let x = &inputs[i * n..(i + 1) * n];
        params.logits_into(x, &mut hidden, &mut logits);
        for a in 0..p {
            err[a] = scale * (logits[a] - if a == y { 1.0 } else { 0.0 });
        }
        match s.kind {
            PolicyKind::Linear => {
                let (w, b) = grad.split_at_mut(p * n);
                for a in 0..p {
                    axpy(err[a], x, &mut w[a * n..(a + 1) * n]);
                    b[a] += err[a];
                }
            }
            PolicyKind::TwoLayer => {
                let wo = &v[h * n..h * n + p * h];
                let (gwi, rest) = grad.split_at_mut(h * n);
                let (gwo, rest) = rest.split_at_mut(p * h);
                let (gbi, gbo) = rest.split_at_mut(h);
                dh.iter_mut().for_each(|d| *d = 0.0);
                for a in 0..p {
                    axpy(err[a], &hidden, &mut gwo[a * h..(a + 1) * h]);
                    axpy(err[a], &wo[a * h..(a + 1) * h], &mut dh);
                    gbo[a] += err[a];
                }
                for j in 0..h {
                    let da = dh[j] * (1.0 - hidden[j] * hidden[j]);
                    axpy(da, x, &mut gwi[j * n..(j + 1) * n]);
                    gbi[j] += da;
                }
            }
        }
    }
}

/// Fraction of demonstration pairs on which the policy picks the recorded action.
pub fn bc_accuracy(params: &PolicyParams, normalizer: &NormalizerState, demos: &DemonstrationSet) -> Result<f64> {
    demos.validate()?;
    let mut policy = NormalizedPolicy::new(params, normalizer)?;
    let mut raw = vec![0.0; demos.n];
    let mut hits = 0usize;
    for (obs, action) in demos.pairs() {
        for (r, &o) in raw.iter_mut().zip(obs) {
            *r = o as f64;
        }
        hits += usize::from(policy.act_on(&raw) == action);
    }
    Ok(hits as f64 / demos.step_count() as f64)
}

#[cfg(test)]
pub(crate) fn mse_loss(params: &PolicyParams, inputs: &[f64], labels: &[usize]) -> f64 {
    let s = params.shape();
    let mut hidden = vec![0.0; s.h];
    let mut logits = vec![0.0; s.p];
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        params.logits_into(&inputs[i * s.n..(i + 1) * s.n], &mut hidden, &mut logits);
        total += logits
            .iter()
            .enumerate()
            .map(|(a, z)| (z - if a == y { 1.0 } else { 0.0 }).powi(2))
            .sum::<f64>();
    }
    total / labels.len() as f64
}

#[cfg(test)]
pub(crate) fn mse_gradient_for_tests(params: &PolicyParams, inputs: &[f64], labels: &[usize]) -> Vec<f64> {
    let mut g = vec![0.0; params.shape().len()];
    mse_gradient(params, inputs, labels, &mut g);
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_roundtrips_json() {
        let c = BcConfig::default();
        let back: BcConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, back);
        assert!(serde_json::from_str::<BcConfig>(r#"{"epoch": 3}"#).is_err());
    }

    #[test]
    fn initial_params_are_seeded() {
        let shape = PolicyShape::two_layer(6, 3, 5);
        let a = bc_initial_params(shape, 1).unwrap();
        assert_eq!(a, bc_initial_params(shape, 1).unwrap());
        assert_ne!(a, bc_initial_params(shape, 2).unwrap());
        assert!(a.bias(0).iter().chain(a.bias(1)).all(|&b| b == 0.0));
    }
}

//! Linear and two-layer argmax policies over whitened observations, their
//! Gaussian parameter-space perturbations, and the running normalizer.

mod normalizer;
mod schedule;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{argmax, dot, Matrix};
use crate::sim::{DrivingAction, DrivingPolicy, HighwayConfig, HighwayState};

pub use normalizer::{NormalizerState, STD_FLOOR};
pub use schedule::NoiseSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Linear,
    TwoLayer,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Linear => "linear",
            PolicyKind::TwoLayer => "two_layer",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(PolicyKind::Linear),
            "two_layer" | "two-layer" | "stacked" => Ok(PolicyKind::TwoLayer),
            other => Err(Error::domain(format!("unknown policy kind `{other}`"))),
        }
    }
}

/// Shape of a policy: state dimension `n`, hidden width `h`, actions `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PolicyShape {
    pub kind: PolicyKind,
    pub n: usize,
    pub h: usize,
    pub p: usize,
}

impl PolicyShape {
    pub fn linear(n: usize, p: usize) -> Self {
        PolicyShape { kind: PolicyKind::Linear, n, h: 0, p }
    }

    pub fn two_layer(n: usize, h: usize, p: usize) -> Self {
        PolicyShape { kind: PolicyKind::TwoLayer, n, h, p }
    }

    pub fn validate(&self) -> Result<()> {
        let hidden_ok = match self.kind {
            PolicyKind::Linear => self.h == 0,
            PolicyKind::TwoLayer => self.h > 0,
        };
        if self.n == 0 || self.p == 0 || !hidden_ok {
            return Err(Error::domain(format!("invalid policy shape {self:?}")));
        }
        Ok(())
    }

    /// Weight matrix shapes `(rows, cols)` in storage order.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        match self.kind {
            PolicyKind::Linear => vec![(self.p, self.n)],
            PolicyKind::TwoLayer => vec![(self.h, self.n), (self.p, self.h)],
        }
    }

    /// Bias vector lengths in storage order.
    pub fn bias_lens(&self) -> Vec<usize> {
        match self.kind {
            PolicyKind::Linear => vec![self.p],
            PolicyKind::TwoLayer => vec![self.h, self.p],
        }
    }

    /// Total number of scalar parameters.
    pub fn len(&self) -> usize {
        self.layer_shapes().iter().map(|(r, c)| r * c).sum::<usize>()
            + self.bias_lens().iter().sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Policy weights stored flat: weight matrices row-major in layer order,
/// then the bias vectors in layer order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    shape: PolicyShape,
    values: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(shape: PolicyShape) -> Result<Self> {
        shape.validate()?;
        Ok(PolicyParams { shape, values: vec![0.0; shape.len()] })
    }

    pub fn from_values(shape: PolicyShape, values: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        if values.len() != shape.len() {
            return Err(Error::domain(format!(
                "policy shape {shape:?} needs {} values, got {}",
                shape.len(),
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::domain("policy parameters must be finite"));
        }
        Ok(PolicyParams { shape, values })
    }

    /// Builds from explicit weight matrices and zero biases.
    pub fn from_layers(kind: PolicyKind, layers: &[Matrix]) -> Result<Self> {
        let shape = match (kind, layers) {
            (PolicyKind::Linear, [w]) => PolicyShape::linear(w.cols(), w.rows()),
            (PolicyKind::TwoLayer, [wi, wo]) if wo.cols() == wi.rows() => {
                PolicyShape::two_layer(wi.cols(), wi.rows(), wo.rows())
            }
            _ => return Err(Error::domain("layer matrices do not form a policy")),
        };
        let mut values: Vec<f64> = layers.iter().flat_map(|m| m.as_slice().iter().copied()).collect();
        values.resize(shape.len(), 0.0);
        PolicyParams::from_values(shape, values)
    }

    pub fn shape(&self) -> PolicyShape {
        self.shape
    }

    pub fn kind(&self) -> PolicyKind {
        self.shape.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    fn weight_range(&self, layer: usize) -> std::ops::Range<usize> {
        let shapes = self.shape.layer_shapes();
        let start: usize = shapes[..layer].iter().map(|(r, c)| r * c).sum();
        start..start + shapes[layer].0 * shapes[layer].1
    }

    fn bias_range(&self, layer: usize) -> std::ops::Range<usize> {
        let weights: usize = self.shape.layer_shapes().iter().map(|(r, c)| r * c).sum();
        let lens = self.shape.bias_lens();
        let start = weights + lens[..layer].iter().sum::<usize>();
        start..start + lens[layer]
    }

    pub fn layer_count(&self) -> usize {
        self.shape.layer_shapes().len()
    }

    /// Weight matrix of `layer` (0 = input layer).
    pub fn layer(&self, layer: usize) -> Result<Matrix> {
        if layer >= self.layer_count() {
            return Err(Error::domain(format!(
                "layer {layer} does not exist in a {} policy",
                self.kind().as_str()
            )));
        }
        let (r, c) = self.shape.layer_shapes()[layer];
        Matrix::from_vec(r, c, self.values[self.weight_range(layer)].to_vec())
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        &self.values[self.bias_range(layer)]
    }

    /// Raw logits for an already whitened state. `hidden` is scratch space of
    /// length `h` (ignored by linear policies).
    pub fn logits_into(&self, white: &[f64], hidden: &mut [f64], out: &mut [f64]) {
        let s = self.shape;
        match s.kind {
            PolicyKind::Linear => {
                let w = &self.values[self.weight_range(0)];
                let b = self.bias(0);
                for a in 0..s.p {
                    out[a] = dot(&w[a * s.n..(a + 1) * s.n], white) + b[a];
                }
            }
            PolicyKind::TwoLayer => {
                let wi = &self.values[self.weight_range(0)];
                let wo = &self.values[self.weight_range(1)];
                let bi = self.bias(0);
                let bo = self.bias(1);
                for j in 0..s.h {
                    hidden[j] = (dot(&wi[j * s.n..(j + 1) * s.n], white) + bi[j]).tanh();
                }
                for a in 0..s.p {
                    out[a] = dot(&wo[a * s.h..(a + 1) * s.h], hidden) + bo[a];
                }
            }
        }
    }

    pub fn logits(&self, normalizer: &NormalizerState, state: &[f64]) -> Result<Vec<f64>> {
        self.check_input(normalizer, state)?;
        let white = normalizer.whiten(state)?;
        let mut hidden = vec![0.0; self.shape.h];
        let mut out = vec![0.0; self.shape.p];
        self.logits_into(&white, &mut hidden, &mut out);
        Ok(out)
    }

    fn check_input(&self, normalizer: &NormalizerState, state: &[f64]) -> Result<()> {
        if state.len() != self.shape.n || normalizer.dim() != self.shape.n {
            return Err(Error::domain(format!(
                "policy expects states of length {}, got state {} / normalizer {}",
                self.shape.n,
                state.len(),
                normalizer.dim()
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Whitens the state, evaluates the logits and returns the argmax action,
/// lowest id on ties.
pub fn policy_act(
    params: &PolicyParams,
    normalizer: &NormalizerState,
    state: &[f64],
) -> Result<DrivingAction> {
    if params.shape().p != DrivingAction::COUNT {
        return Err(Error::domain(format!(
            "driving policies need {} outputs, got {}",
            DrivingAction::COUNT,
            params.shape().p
        )));
    }
    let logits = params.logits(normalizer, state)?;
    DrivingAction::from_id(argmax(&logits))
}

/// A Gaussian direction in parameter space, laid out like [`PolicyParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseDirection {
    shape: PolicyShape,
    values: Vec<f64>,
}

impl NoiseDirection {
    pub fn from_values(shape: PolicyShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::domain("noise direction length does not match its shape"));
        }
        Ok(NoiseDirection { shape, values })
    }

    pub fn shape(&self) -> PolicyShape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `θ + sign·ν·δ` as a new parameter set.
pub fn perturb(params: &PolicyParams, dir: &NoiseDirection, nu: f64, sign: i8) -> Result<PolicyParams> {
    if params.shape != dir.shape {
        return Err(Error::domain(format!(
            "direction shape {:?} does not match policy shape {:?}",
            dir.shape, params.shape
        )));
    }
    if sign != 1 && sign != -1 {
        return Err(Error::domain(format!("perturbation sign must be +1 or -1, got {sign}")));
    }
    let scale = nu * sign as f64;
    let values = params.values.iter().zip(&dir.values).map(|(t, d)| t + scale * d).collect();
    Ok(PolicyParams { shape: params.shape, values })
}

/// Draws `count` i.i.d. standard normal directions shaped like `shape`.
pub fn sample_directions<R: Rng + ?Sized>(
    rng: &mut R,
    count: usize,
    shape: PolicyShape,
) -> Vec<NoiseDirection> {
    (0..count)
        .map(|_| NoiseDirection {
            shape,
            values: (0..shape.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        })
        .collect()
}

/// A policy plus the frozen normalizer it reads through, with scratch
/// buffers so acting does not allocate.
#[derive(Debug, Clone)]
pub struct NormalizedPolicy<'a> {
    pub params: &'a PolicyParams,
    pub normalizer: &'a NormalizerState,
    white: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

impl<'a> NormalizedPolicy<'a> {
    pub fn new(params: &'a PolicyParams, normalizer: &'a NormalizerState) -> Result<Self> {
        let s = params.shape();
        if normalizer.dim() != s.n {
            return Err(Error::domain(format!(
                "normalizer dimension {} does not match policy input {}",
                normalizer.dim(),
                s.n
            )));
        }
        if s.p != DrivingAction::COUNT {
            return Err(Error::domain("driving policies need five outputs"));
        }
        Ok(NormalizedPolicy {
            params,
            normalizer,
            white: vec![0.0; s.n],
            hidden: vec![0.0; s.h],
            logits: vec![0.0; s.p],
        })
    }

    pub fn act_on(&mut self, observation: &[f64]) -> DrivingAction {
        self.normalizer.whiten_into(observation, &mut self.white);
        self.params.logits_into(&self.white, &mut self.hidden, &mut self.logits);
        DrivingAction::ALL[argmax(&self.logits)]
    }
}

impl DrivingPolicy for NormalizedPolicy<'_> {
    fn act(&mut self, _: &HighwayConfig, observation: &[f64], _: &HighwayState) -> DrivingAction {
        self.act_on(observation)
    }
}

use serde::{Deserialize, Serialize};

use crate::sim::DrivingAction;

/// One recorded decision: the observation the policy saw and what it chose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub observation: Vec<f32>,
    pub action: DrivingAction,
}

/// Environment metrics of a single step. Evaluation only; never a training signal.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepMetrics {
    /// Host speed after the step, km/h.
    pub speed: f64,
    pub longitudinal_reward: f64,
    pub lateral_reward: f64,
    pub overtakes: u32,
    pub lane_change_completed: bool,
    pub collision: bool,
}

/// Ordered state-action record of one episode.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    pub metrics: Vec<StepMetrics>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn push(&mut self, observation: &[f64], action: DrivingAction, metrics: StepMetrics) {
        self.transitions.push(Transition {
            observation: observation.iter().map(|&v| v as f32).collect(),
            action,
        });
        self.metrics.push(metrics);
    }

    pub fn collided(&self) -> bool {
        self.metrics.iter().any(|m| m.collision)
    }
}

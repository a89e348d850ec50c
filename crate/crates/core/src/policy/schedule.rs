use serde::{Deserialize, Serialize};

/// Adaptive exploration noise: reset to the initial level whenever the
/// periodic metric improves, grow by `tau` whenever it does not.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub nu: f64,
    pub nu_init: f64,
    pub tau: f64,
    /// Evaluation period in iterations.
    pub eta: u64,
    pub best_metric: f64,
}

impl NoiseSchedule {
    pub fn new(nu_init: f64, tau: f64, eta: u64) -> Self {
        NoiseSchedule { nu: nu_init, nu_init, tau, eta: eta.max(1), best_metric: f64::NEG_INFINITY }
    }

    /// Applies one schedule decision. Iterations that are not a multiple of
    /// `eta` leave the schedule untouched.
    pub fn step(&self, iteration: u64, metric: f64) -> Self {
        if !iteration.is_multiple_of(self.eta) {
            return *self;
        }
        let mut next = *self;
        if metric <= self.best_metric {
            next.nu += self.tau;
        } else {
            next.nu = self.nu_init;
            next.best_metric = metric;
        }
        next
    }
}

//! Randomized adversarial imitation learning for highway driving.
//!
//! Policies are trained by random search in parameter space: paired
//! perturbations of the weights are rolled out on a deterministic highway
//! simulator and scored by a least-squares GAN discriminator that learns to
//! tell the policy's state-action pairs from an expert's.

pub mod discriminator;
pub mod error;
pub mod io;
pub mod learners;
pub mod linalg;
pub mod policy;
pub mod seed;
pub mod sim;
pub mod trajectory;

pub use error::{Error, Result};

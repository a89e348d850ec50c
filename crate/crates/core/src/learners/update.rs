use crate::error::{Error, Result};
use crate::linalg::axpy;
use crate::policy::{NoiseDirection, PolicyParams};

/// The scalar outcome of one rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardRecord {
    pub k: usize,
    pub sign: i8,
    pub reward: f64,
}

/// Population standard deviation.
pub fn reward_std(rewards: &[f64]) -> f64 {
    if rewards.is_empty() {
        return 0.0;
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    (rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n).sqrt()
}

/// `θ + α / (N·max(σ_R, σ_floor)) · Σ_k (r₊k − r₋k)·δ_k`, where σ_R is the
/// standard deviation of all 2N rewards. Results may arrive in any order.
pub fn compute_update(
    theta: &PolicyParams,
    directions: &[NoiseDirection],
    results: &[RewardRecord],
    alpha: f64,
    sigma_floor: f64,
) -> Result<PolicyParams> {
    let n = directions.len();
    if n == 0 {
        return Err(Error::domain("no directions"));
    }
    if directions.iter().any(|d| d.shape() != theta.shape()) {
        return Err(Error::domain("direction shape does not match the policy"));
    }
    let mut plus: Vec<Option<f64>> = vec![None; n];
    let mut minus: Vec<Option<f64>> = vec![None; n];
    for r in results {
        let slot = match r.sign {
            1 => plus.get_mut(r.k),
            -1 => minus.get_mut(r.k),
            s => return Err(Error::domain(format!("invalid sign {s} in rollout results"))),
        }
        .ok_or_else(|| Error::domain(format!("result for direction {} of {n}", r.k)))?;
        if slot.replace(r.reward).is_some() {
            return Err(Error::domain(format!("duplicate result (k={}, sign={})", r.k, r.sign)));
        }
        if !r.reward.is_finite() {
            return Err(Error::domain(format!("non-finite reward for (k={}, sign={})", r.k, r.sign)));
        }
    }
    let mut ordered = Vec::with_capacity(2 * n);
    let mut diffs = Vec::with_capacity(n);
    for k in 0..n {
        let (Some(rp), Some(rm)) = (plus[k], minus[k]) else {
            let sign = if plus[k].is_none() { 1 } else { -1 };
            return Err(Error::domain(format!("missing result (k={k}, sign={sign})")));
        };
        ordered.push(rm);
        ordered.push(rp);
        diffs.push(rp - rm);
    }
    let sigma = reward_std(&ordered).max(sigma_floor);
    let mut step = vec![0.0; theta.values().len()];
    for (d, dir) in diffs.iter().zip(directions) {
        axpy(*d, dir.values(), &mut step);
    }
    let scale = alpha / (n as f64 * sigma);
    let mut next = theta.clone();
    axpy(scale, &step, next.values_mut());
    Ok(next)
}

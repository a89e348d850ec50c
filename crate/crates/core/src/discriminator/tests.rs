use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::sim::DrivingAction as A;
use crate::trajectory::StepMetrics;

fn random_net(seed: u64, n: usize, m: usize, scale: f64) -> DiscriminatorParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = DiscriminatorParams::param_count(n, 5, m);
    let values = (0..len).map(|_| scale * (rng.random::<f64>() * 2.0 - 1.0)).collect();
    DiscriminatorParams::from_values(n, 5, m, values).unwrap()
}

fn random_batch(rng: &mut ChaCha8Rng, n: usize, size: usize, label: f64) -> LabeledBatch {
    let mut b = LabeledBatch::new();
    for _ in 0..size {
        let s = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        b.push(s, A::ALL[rng.random_range(0..5)], label);
    }
    b
}

/// Straight-line evaluation on the explicit concatenated input.
fn oracle_forward(phi: &DiscriminatorParams, s: &[f64], a: usize) -> f64 {
    let (n, m) = (phi.state_dim(), phi.hidden());
    let d = n + 5;
    let mut x = s.to_vec();
    for k in 0..5 {
        x.push(if k == a { 1.0 } else { 0.0 });
    }
    let v = phi.values();
    let mut z2 = v[m * d + 2 * m];
    for j in 0..m {
        let mut z = v[m * d + j];
        for i in 0..d {
            z += v[j * d + i] * x[i];
        }
        z2 += v[m * d + m + j] * z.tanh();
    }
    let sig = 1.0 / (1.0 + (-z2).exp());
    sig.clamp(1e-6, 1.0 - 1e-6)
}

fn oracle_loss(phi: &DiscriminatorParams, e: &LabeledBatch, p: &LabeledBatch) -> f64 {
    let mut total = 0.0;
    for b in [e, p] {
        let mut acc = 0.0;
        for i in 0..b.len() {
            let d = oracle_forward(phi, &b.states[i], b.actions[i]);
            acc += (d - b.labels[i]) * (d - b.labels[i]);
        }
        total += 0.5 * acc / b.len() as f64;
    }
    total
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn zero_net_outputs_half() {
    let phi = DiscriminatorParams::zeros(4, 5, 8);
    for a in A::ALL {
        assert_eq!(disc_forward(&phi, &[1.0, -2.0, 3.0, 0.5], a).unwrap(), 0.5);
        assert_eq!(reward_signal(&phi, &[0.0; 4], a).unwrap(), 0.0);
    }
}

#[test]
fn forward_rejects_wrong_dimension() {
    let phi = DiscriminatorParams::zeros(4, 5, 8);
    assert!(disc_forward(&phi, &[0.0; 3], A::Maintain).unwrap_err().is_validation());
}

#[test]
fn from_values_checks_length_and_finiteness() {
    assert!(DiscriminatorParams::from_values(2, 5, 3, vec![0.0; 5]).is_err());
    let len = DiscriminatorParams::param_count(2, 5, 3);
    let mut v = vec![0.0; len];
    v[0] = f64::NAN;
    assert!(DiscriminatorParams::from_values(2, 5, 3, v).is_err());
}

#[test]
fn output_is_clamped_for_saturated_nets() {
    let phi = random_net(1, 3, 4, 1e4);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let s: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 20.0 - 10.0).collect();
        let d = disc_forward(&phi, &s, A::ALL[rng.random_range(0..5)]).unwrap();
        assert!((1e-6..=1.0 - 1e-6).contains(&d));
    }
}

#[test]
fn forward_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..20 {
        let phi = random_net(seed, 6, 7, 1.0);
        let s: Vec<f64> = (0..6).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        for a in A::ALL {
            let got = disc_forward(&phi, &s, a).unwrap();
            assert!((got - oracle_forward(&phi, &s, a.id())).abs() < 1e-12);
        }
    }
}

#[test]
fn loss_of_half_everywhere_is_quarter() {
    let phi = DiscriminatorParams::zeros(3, 5, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let e = random_batch(&mut rng, 3, 7, EXPERT_LABEL);
    let p = random_batch(&mut rng, 3, 5, POLICY_LABEL);
    assert_eq!(lsgan_loss(&phi, &e, &p).unwrap(), 0.25);
}

#[test]
fn perfect_classifier_has_clamp_sized_loss() {
    // D depends only on the action: hidden unit 0 fires on action 1
    let (n, m) = (2, 1);
    let mut phi = DiscriminatorParams::zeros(n, 5, m);
    let d = n + 5;
    let v = phi.values_mut();
    v[n + 1] = 10.0; // W1[0, onehot(1)]
    v[m * d] = -5.0; // b1
    v[m * d + m] = 1e3; // W2
    let mut e = LabeledBatch::new();
    e.push(vec![0.3, -0.2], A::Accelerate, EXPERT_LABEL);
    let mut p = LabeledBatch::new();
    p.push(vec![0.1, 0.9], A::Maintain, POLICY_LABEL);
    let loss = lsgan_loss(&phi, &e, &p).unwrap();
    assert!(loss > 0.0 && (loss - 1e-12).abs() < 1e-15, "{loss}");
}

#[test]
fn loss_matches_oracle_and_is_symmetric_in_batches() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..20 {
        let phi = random_net(seed, 5, 6, 2.0);
        let e = random_batch(&mut rng, 5, 9, EXPERT_LABEL);
        let p = random_batch(&mut rng, 5, 4, POLICY_LABEL);
        let l = lsgan_loss(&phi, &e, &p).unwrap();
        assert!(l >= 0.0);
        assert!((l - oracle_loss(&phi, &e, &p)).abs() < 1e-12);
        assert_eq!(l, lsgan_loss(&phi, &p, &e).unwrap());
    }
}

#[test]
fn batches_are_validated() {
    let phi = DiscriminatorParams::zeros(2, 5, 3);
    let empty = LabeledBatch::new();
    let mut one = LabeledBatch::new();
    one.push(vec![0.0, 0.0], A::Maintain, EXPERT_LABEL);
    assert!(lsgan_loss(&phi, &empty, &one).is_err());
    assert!(disc_grad(&phi, &one, &empty).is_err());
    let mut bad = LabeledBatch::new();
    bad.push(vec![0.0, 0.0], A::Maintain, 0.5);
    assert!(lsgan_loss(&phi, &one, &bad).is_err());
    let mut short = LabeledBatch::new();
    short.push(vec![0.0], A::Maintain, 0.0);
    assert!(lsgan_loss(&phi, &one, &short).is_err());
}

pub(crate) fn finite_difference_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfd);
    let n = rng.random_range(1..6);
    let m = rng.random_range(1..8);
    let phi = random_net(seed, n, m, 1.0);
    let (be, bp) = (rng.random_range(1..6), rng.random_range(1..6));
    let e = random_batch(&mut rng, n, be, EXPERT_LABEL);
    let p = random_batch(&mut rng, n, bp, POLICY_LABEL);
    let g = disc_grad(&phi, &e, &p).unwrap();
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for i in 0..g.len() {
        let mut plus = phi.clone();
        plus.values_mut()[i] += h;
        let mut minus = phi.clone();
        minus.values_mut()[i] -= h;
        let fd = (oracle_loss(&plus, &e, &p) - oracle_loss(&minus, &e, &p)) / (2.0 * h);
        let denom = g[i].abs().max(fd.abs()).max(1e-4);
        worst = worst.max((g[i] - fd).abs() / denom);
    }
    worst
}

#[test]
fn gradient_matches_finite_differences() {
    for seed in 0..50 {
        let err = finite_difference_error(seed);
        assert!(err <= 1e-4, "seed {seed}: relative error {err}");
    }
}

#[test]
fn duplicated_sample_keeps_the_mean_gradient() {
    let phi = random_net(9, 3, 4, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let e = random_batch(&mut rng, 3, 1, EXPERT_LABEL);
    let p = random_batch(&mut rng, 3, 2, POLICY_LABEL);
    let mut e2 = e.clone();
    e2.push(e.states[0].clone(), A::from_id(e.actions[0]).unwrap(), EXPERT_LABEL);
    assert_eq!(disc_grad(&phi, &e, &p).unwrap(), disc_grad(&phi, &e2, &p).unwrap());
}

#[test]
fn gradient_vanishes_after_convergence_on_separable_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut e = LabeledBatch::new();
    let mut p = LabeledBatch::new();
    for _ in 0..8 {
        e.push(vec![1.0 + rng.random::<f64>(), rng.random::<f64>()], A::Maintain, EXPERT_LABEL);
        p.push(vec![-1.0 - rng.random::<f64>(), rng.random::<f64>()], A::Maintain, POLICY_LABEL);
    }
    let mut phi = DiscriminatorParams::init(2, 5, 4, &mut rng);
    let mut opt = AdamState::new(phi.values().len(), 0.05);
    for _ in 0..20_000 {
        let (next, o, _) = disc_update(&phi, &opt, &e, &p).unwrap();
        phi = next;
        opt = o;
    }
    let g = disc_grad(&phi, &e, &p).unwrap();
    assert!(norm(&g) < 1e-4, "gradient norm {}", norm(&g));
    assert!(lsgan_loss(&phi, &e, &p).unwrap() < 1e-3);
}

#[test]
fn update_with_zero_gradient_is_identity() {
    let phi = DiscriminatorParams::zeros(2, 5, 3);
    // zero net: tanh(0) = 0 so only b2 sees gradient; balance the labels to cancel it
    let mut e = LabeledBatch::new();
    e.push(vec![0.0, 0.0], A::Maintain, EXPERT_LABEL);
    let mut p = LabeledBatch::new();
    p.push(vec![0.0, 0.0], A::Maintain, POLICY_LABEL);
    assert!(disc_grad(&phi, &e, &p).unwrap().iter().all(|&g| g == 0.0));
    let opt = AdamState::new(phi.values().len(), 1e-3);
    let (next, opt2, _) = disc_update(&phi, &opt, &e, &p).unwrap();
    assert_eq!(next, phi);
    assert_eq!(opt2.step, 1);
}

#[test]
fn training_reduces_loss_deterministically() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let e = random_batch(&mut rng, 4, 16, EXPERT_LABEL);
    let p = random_batch(&mut rng, 4, 16, POLICY_LABEL);
    let phi0 = DiscriminatorParams::init(4, 5, 8, &mut rng);
    let run = || {
        let mut phi = phi0.clone();
        let mut opt = AdamState::new(phi.values().len(), 1e-3);
        for _ in 0..200 {
            let (a, b, _) = disc_update(&phi, &opt, &e, &p).unwrap();
            phi = a;
            opt = b;
        }
        phi
    };
    let a = run();
    assert_eq!(a, run());
    assert!(lsgan_loss(&a, &e, &p).unwrap() < lsgan_loss(&phi0, &e, &p).unwrap());
}

#[test]
fn reward_is_logit_of_output() {
    assert_eq!(reward_from_output(0.5), 0.0);
    let e = std::f64::consts::E;
    assert!((reward_from_output(e / (1.0 + e)) - 1.0).abs() < 1e-12);
    let mut prev = f64::NEG_INFINITY;
    for i in 0..1000 {
        let d = 1e-6 + (1.0 - 2e-6) * i as f64 / 999.0;
        let r = reward_from_output(d);
        assert!(r > prev);
        prev = r;
        assert!((r - (d / (1.0 - d)).ln()).abs() < 1e-12 * r.abs().max(1.0));
    }
}

fn trajectory(len: usize, n: usize, seed: u64) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Trajectory::default();
    for _ in 0..len {
        let s: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        t.push(&s, A::ALL[rng.random_range(0..5)], StepMetrics::default());
    }
    t
}

#[test]
fn trajectory_reward_sums_steps() {
    let phi = random_net(13, 3, 5, 1.0);
    assert!(trajectory_reward(&phi, &Trajectory::default()).is_err());
    let one = trajectory(1, 3, 1);
    let s: Vec<f64> = one.transitions[0].observation.iter().map(|&x| x as f64).collect();
    assert_eq!(trajectory_reward(&phi, &one).unwrap(), reward_signal(&phi, &s, one.transitions[0].action).unwrap());
    let long = trajectory(40, 3, 2);
    let oracle: f64 = long
        .transitions
        .iter()
        .map(|t| {
            let s: Vec<f64> = t.observation.iter().map(|&x| x as f64).collect();
            let d = oracle_forward(&phi, &s, t.action.id());
            (d / (1.0 - d)).ln()
        })
        .sum();
    assert!((trajectory_reward(&phi, &long).unwrap() - oracle).abs() < 1e-10);
    assert_eq!(trajectory_reward(&DiscriminatorParams::zeros(3, 5, 5), &long).unwrap(), 0.0);
    assert!(trajectory_reward(&DiscriminatorParams::zeros(4, 5, 5), &long).is_err());
}

proptest! {
    #[test]
    fn reward_equals_logit_on_random_inputs(seed in 0u64..1000, a in 0usize..5) {
        let phi = random_net(seed, 4, 6, 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let action = A::from_id(a).unwrap();
        let d = disc_forward(&phi, &s, action).unwrap();
        let r = reward_signal(&phi, &s, action).unwrap();
        prop_assert!((r - (d.ln() - (1.0 - d).ln())).abs() < 1e-12);
    }

    #[test]
    fn loss_is_nonnegative(seed in 0u64..1000, scale in 0.1f64..20.0) {
        let phi = random_net(seed, 3, 4, scale);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = random_batch(&mut rng, 3, 3, EXPERT_LABEL);
        let p = random_batch(&mut rng, 3, 3, POLICY_LABEL);
        prop_assert!(lsgan_loss(&phi, &e, &p).unwrap() >= 0.0);
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whitening divides by at least this standard deviation.
pub const STD_FLOOR: f64 = 1e-8;

/// Running per-dimension mean and sum of squared deviations of visited
/// states. Whitening uses the population variance `m2 / count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizerState {
    pub count: u64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl NormalizerState {
    pub fn new(dim: usize) -> Self {
        NormalizerState { count: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Statistics of a batch by Welford's recurrence, in batch order.
    pub fn from_batch<'a, T, I>(dim: usize, batch: I) -> Result<Self>
    where
        T: Copy + Into<f64> + 'a,
        I: IntoIterator<Item = &'a [T]>,
    {
        let mut stats = NormalizerState::new(dim);
        for row in batch {
            if row.len() != dim {
                return Err(Error::domain(format!(
                    "state of length {} fed to a normalizer of dimension {dim}",
                    row.len()
                )));
            }
            stats.count += 1;
            let n = stats.count as f64;
            for ((m, s), &x) in stats.mean.iter_mut().zip(stats.m2.iter_mut()).zip(row) {
                let x: f64 = x.into();
                let delta = x - *m;
                *m += delta / n;
                *s += delta * (x - *m);
            }
        }
        Ok(stats)
    }

    /// Pairwise merge of two sets of statistics.
    pub fn merge(&self, other: &NormalizerState) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::domain(format!(
                "cannot merge normalizers of dimension {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        if other.count == 0 {
            return Ok(self.clone());
        }
        if self.count == 0 {
            return Ok(other.clone());
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let mut out = NormalizerState::new(self.dim());
        out.count = self.count + other.count;
        for i in 0..self.dim() {
            let delta = other.mean[i] - self.mean[i];
            out.mean[i] = self.mean[i] + delta * nb / n;
            out.m2[i] = self.m2[i] + other.m2[i] + delta * delta * na * nb / n;
        }
        Ok(out)
    }

    /// Folds a batch of states into the statistics.
    pub fn update<'a, T, I>(&self, batch: I) -> Result<Self>
    where
        T: Copy + Into<f64> + 'a,
        I: IntoIterator<Item = &'a [T]>,
    {
        self.merge(&NormalizerState::from_batch(self.dim(), batch)?)
    }

    pub fn variance(&self) -> Vec<f64> {
        if self.count == 0 {
            return vec![0.0; self.dim()];
        }
        self.m2.iter().map(|s| s / self.count as f64).collect()
    }

    /// `out = diag(var)^(-1/2) (s - mean)`; identity while fewer than two
    /// states have been seen.
    pub fn whiten_into(&self, state: &[f64], out: &mut [f64]) {
        debug_assert_eq!(state.len(), self.dim());
        if self.count <= 1 {
            out.copy_from_slice(state);
            return;
        }
        let n = self.count as f64;
        for i in 0..state.len() {
            let std = (self.m2[i] / n).sqrt().max(STD_FLOOR);
            out[i] = (state[i] - self.mean[i]) / std;
        }
    }

    pub fn whiten(&self, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.dim() {
            return Err(Error::domain(format!(
                "state of length {} for a normalizer of dimension {}",
                state.len(),
                self.dim()
            )));
        }
        let mut out = vec![0.0; state.len()];
        self.whiten_into(state, &mut out);
        Ok(out)
    }

    pub fn is_valid(&self) -> bool {
        self.mean.len() == self.m2.len()
            && self.mean.iter().all(|v| v.is_finite())
            && self.m2.iter().all(|v| v.is_finite() && *v >= 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_pass(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let n = rows.len() as f64;
        let dim = rows[0].len();
        let mean: Vec<f64> = (0..dim).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let var = (0..dim)
            .map(|j| rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n)
            .collect();
        (mean, var)
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn repeated_vector_has_zero_variance() {
        let v = vec![1.5, -2.0, 3.25];
        let s = NormalizerState::new(3).update([v.as_slice(), v.as_slice()]).unwrap();
        assert_eq!(s.mean, v);
        assert_eq!(s.variance(), vec![0.0; 3]);
        // Constant dimensions whiten to zero instead of dividing by zero.
        assert_eq!(s.whiten(&v).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn empty_batch_is_noop() {
        let s = NormalizerState::new(2).update([[1.0, 2.0].as_slice()]).unwrap();
        let empty: [&[f64]; 0] = [];
        assert_eq!(s.update(empty).unwrap(), s);
    }

    #[test]
    fn identity_until_two_samples() {
        let s = NormalizerState::new(2);
        assert_eq!(s.whiten(&[3.0, -4.0]).unwrap(), vec![3.0, -4.0]);
        let s = s.update([[10.0, 10.0].as_slice()]).unwrap();
        assert_eq!(s.whiten(&[3.0, -4.0]).unwrap(), vec![3.0, -4.0]);
    }

    #[test]
    fn length_mismatch_is_domain_error() {
        let s = NormalizerState::new(2);
        assert!(matches!(s.update([[1.0].as_slice()]), Err(Error::Domain(_))));
        assert!(matches!(s.whiten(&[1.0]), Err(Error::Domain(_))));
        assert!(s.merge(&NormalizerState::new(3)).is_err());
    }

    fn batch(dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-50.0f64..50.0, dim), 2..40)
    }

    proptest! {
        #[test]
        fn merge_equals_concatenation(a in batch(4), b in batch(4), offset in -1e3f64..1e3) {
            let shift = |rows: Vec<Vec<f64>>| rows.into_iter().map(|r| r.into_iter().map(|x| x + offset).collect::<Vec<_>>()).collect::<Vec<_>>();
            let (a, b) = (shift(a), shift(b));
            let merged = NormalizerState::new(4)
                .update(a.iter().map(Vec::as_slice)).unwrap()
                .update(b.iter().map(Vec::as_slice)).unwrap();
            let all: Vec<Vec<f64>> = a.iter().chain(&b).cloned().collect();
            let (mean, var) = two_pass(&all);
            prop_assert_eq!(merged.count as usize, all.len());
            for j in 0..4 {
                prop_assert!(close(merged.mean[j], mean[j], 1e-10), "mean {} vs {}", merged.mean[j], mean[j]);
                prop_assert!(close(merged.variance()[j], var[j], 1e-10), "var {} vs {}", merged.variance()[j], var[j]);
            }
        }

        #[test]
        fn whitened_batch_is_standardised(rows in batch(5)) {
            let (_, var) = two_pass(&rows);
            prop_assume!(var.iter().all(|&v| v > 1e-6));
            let s = NormalizerState::new(5).update(rows.iter().map(Vec::as_slice)).unwrap();
            let white: Vec<Vec<f64>> = rows.iter().map(|r| s.whiten(r).unwrap()).collect();
            let (m, v) = two_pass(&white);
            for j in 0..5 {
                prop_assert!(m[j].abs() < 1e-8);
                prop_assert!((v[j].sqrt() - 1.0).abs() < 1e-6);
            }
        }
    }
}

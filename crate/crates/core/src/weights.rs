//! Development-year weights, cross-validation folds and the weighted
//! log-likelihood.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::density::ResponseDistribution;
use crate::error::{Error, Result};

/// Weight per development year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    /// `weights[&j]` is `w_j`.
    pub weights: BTreeMap<u32, f64>,
}

impl WeightVector {
    /// Weight 1 for development years `1..=d`.
    pub fn unit(d: u32) -> Self {
        Self { weights: (1..=d).map(|j| (j, 1.0)).collect() }
    }

    pub fn get(&self, dev_year: u32) -> Result<f64> {
        self.weights
            .get(&dev_year)
            .copied()
            .ok_or_else(|| Error::Config(format!("no weight for development year {dev_year}")))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { weights: self.weights.iter().map(|(&j, &w)| (j, w * factor)).collect() }
    }
}

/// `w_j = Σ_{i=τ−j+2}^{τ} n_i / Σ_{i=1}^{τ−j+1} n_i` with `τ = n.len()`,
/// for `j = 1..=min(d, τ)`. `w_1 = 1`.
pub fn development_year_weights(reported_counts: &[usize], d: u32) -> Result<WeightVector> {
    let tau = reported_counts.len() as u32;
    if tau == 0 || d == 0 {
        return Err(Error::Config("weights need at least one reporting year and d >= 1".into()));
    }
    let mut prefix = vec![0.0f64; reported_counts.len() + 1];
    for (i, &n) in reported_counts.iter().enumerate() {
        prefix[i + 1] = prefix[i] + n as f64;
    }
    let mut weights = BTreeMap::new();
    weights.insert(1, 1.0);
    for j in 2..=d.min(tau) {
        let split = (tau - j + 1) as usize;
        let numerator = prefix[tau as usize] - prefix[split];
        let denominator = prefix[split];
        if denominator <= 0.0 {
            return Err(Error::DegenerateExposure { dev_year: j });
        }
        weights.insert(j, numerator / denominator);
    }
    Ok(WeightVector { weights })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldScheme {
    /// Uniform random permutation of all observations.
    #[default]
    Random,
    /// Random permutation within each development year, folds dealt
    /// round-robin across years.
    StratifiedByDevYear,
}

/// Fold labels `1..=k`, one per observation (identified by its development
/// year). Fold sizes differ by at most one.
pub fn assign_folds(dev_years: &[u32], k: usize, seed: u64, scheme: FoldScheme) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if k > dev_years.len() {
        return Err(Error::Config(format!("{k} folds for only {} observations", dev_years.len())));
    }
    let mut rng = crate::rng::substream(seed, 0xf01d, 0);
    let mut order: Vec<usize> = (0..dev_years.len()).collect();
    match scheme {
        FoldScheme::Random => order.shuffle(&mut rng),
        FoldScheme::StratifiedByDevYear => {
            order.shuffle(&mut rng);
            order.sort_by_key(|&i| dev_years[i]);
        }
    }
    let mut labels = vec![0; dev_years.len()];
    for (pos, &i) in order.iter().enumerate() {
        labels[i] = pos % k + 1;
    }
    Ok(labels)
}

/// `Σ w_{j_i} log f(y_i; mean_i)` over `(dev_year, response, mean)` triples.
pub fn weighted_loglik_values(
    distribution: &ResponseDistribution,
    observations: impl IntoIterator<Item = (u32, f64, f64)>,
    weights: &WeightVector,
) -> Result<f64> {
    let mut total = 0.0;
    for (j, y, mean) in observations {
        let w = weights.get(j)?;
        if w != 0.0 {
            total += w * distribution.log_density(y, mean)?;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_cohorts() {
        let w = development_year_weights(&[10, 10, 10], 3).unwrap();
        assert_eq!(w.get(1).unwrap(), 1.0);
        assert_eq!(w.get(2).unwrap(), 0.5);
        assert_eq!(w.get(3).unwrap(), 2.0);
        let w = development_year_weights(&[7, 7], 2).unwrap();
        assert_eq!(w.get(2).unwrap(), 1.0);
    }

    #[test]
    fn zero_denominator() {
        let err = development_year_weights(&[0, 10], 2).unwrap_err();
        assert!(matches!(err, Error::DegenerateExposure { dev_year: 2 }));
    }

    #[test]
    fn fold_balance() {
        let years = vec![1u32; 7];
        let labels = assign_folds(&years, 5, 3, FoldScheme::Random).unwrap();
        let mut sizes = [0; 5];
        for l in &labels {
            sizes[l - 1] += 1;
        }
        let mut sorted = sizes.to_vec();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(sorted, vec![2, 2, 1, 1, 1]);
        assert_eq!(labels, assign_folds(&years, 5, 3, FoldScheme::Random).unwrap());
        assert!(assign_folds(&years, 8, 3, FoldScheme::Random).is_err());
        assert!(assign_folds(&years, 1, 3, FoldScheme::Random).is_err());
    }

    #[test]
    fn bernoulli_direct() {
        let mut w = WeightVector::unit(1);
        w.weights.insert(1, 2.0);
        let v = weighted_loglik_values(&ResponseDistribution::bernoulli(), [(1, 1.0, 0.5)], &w).unwrap();
        assert_eq!(v, 2.0 * 0.5f64.ln());
    }
}

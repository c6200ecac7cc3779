use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::multiplicative::{fit_multiplicative_with, ZeroMargins};
use super::{build_triangle, Triangle};
use crate::data::Portfolio;
use crate::error::{Error, Result};
use crate::model::Response;

/// Payment probability, mean size and reporting-year inflation per claim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DclParams {
    /// `π̃_j`
    pub payment_probability: Vec<f64>,
    /// `μ̃_j`
    pub mean_size: Vec<f64>,
    /// `γ_i`, with `γ_1 = 1`.
    pub inflation: Vec<f64>,
    pub exposure: Vec<f64>,
    /// Observed development years per row.
    pub observed: Vec<usize>,
    pub reserve: f64,
}

impl DclParams {
    /// Expected payments per claim in cell `(i, j)`.
    pub fn per_claim(&self, i: usize, j: usize) -> f64 {
        self.payment_probability[j] * self.mean_size[j] * self.inflation[i]
    }

    /// Expected payments of the next `h` development years.
    pub fn reserve_within(&self, h: usize) -> f64 {
        let d = self.mean_size.len();
        let mut total = 0.0;
        for (i, &k) in self.observed.iter().enumerate() {
            for j in k..(k + h).min(d) {
                total += self.exposure[i] * self.per_claim(i, j);
            }
        }
        total
    }
}

fn column_rates(counts: &Triangle, exposure: &[f64]) -> Result<Vec<f64>> {
    (0..counts.n_cols())
        .map(|j| {
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..counts.n_rows() {
                if let Some(x) = counts.get(i, j) {
                    num += x;
                    den += exposure[i];
                }
            }
            if den > 0.0 {
                Ok(num / den)
            } else {
                Err(Error::Estimability(format!("development year {} has zero exposure", j + 1)))
            }
        })
        .collect()
}

/// DCL-style RBNS model from payment-count and size triangles.
pub fn dcl_from_triangles(counts: &Triangle, sizes: &Triangle, exposure: &[f64]) -> Result<DclParams> {
    let fit = fit_multiplicative_with(sizes, None, ZeroMargins::Allow)?;
    let pi = column_rates(counts, exposure)?;
    let i0 = (0..exposure.len())
        .find(|&i| exposure[i] > 0.0 && fit.alpha[i] > 0.0)
        .ok_or_else(|| Error::Estimability("no reporting year with payments".into()))?;
    let c = fit.alpha[i0] / exposure[i0];
    let inflation: Vec<f64> =
        fit.alpha.iter().zip(exposure).map(|(a, n)| if *n > 0.0 { a / (n * c) } else { 0.0 }).collect();
    let mean_size: Vec<f64> =
        fit.beta.iter().zip(&pi).map(|(b, p)| if *p > 0.0 { c * b / p } else { 0.0 }).collect();
    let observed: Vec<usize> = (0..sizes.n_rows()).map(|i| sizes.observed_len(i)).collect();
    let mut params = DclParams {
        payment_probability: pi,
        mean_size,
        inflation,
        exposure: exposure.to_vec(),
        observed,
        reserve: 0.0,
    };
    params.reserve = params.reserve_within(sizes.n_cols());
    Ok(params)
}

pub fn dcl_rbns(portfolio: &Portfolio) -> Result<DclParams> {
    let counts = build_triangle(portfolio, Response::Payment);
    let sizes = build_triangle(portfolio, Response::Size);
    dcl_from_triangles(&counts, &sizes, &counts.exposure.clone())
}

/// Poisson payment counts per claim with multiplicative payment sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrmParams {
    /// `λ_j`
    pub intensity: Vec<f64>,
    /// `α_i`
    pub alpha: Vec<f64>,
    /// `β_j`, summing to one.
    pub beta: Vec<f64>,
    pub exposure: Vec<f64>,
    /// Observed development years per row.
    pub observed: Vec<usize>,
    pub reserve: f64,
}

impl CrmParams {
    /// Expected payments of the next `h` development years.
    pub fn reserve_within(&self, h: usize) -> f64 {
        let d = self.intensity.len();
        let mut total = 0.0;
        for (i, &k) in self.observed.iter().enumerate() {
            for j in k..(k + h).min(d) {
                total += self.exposure[i] * self.intensity[j] * self.alpha[i] * self.beta[j];
            }
        }
        total
    }

    /// Simulated reserves with per-claim yearly counts capped at `cap`.
    pub fn simulate_reserve(&self, n_paths: usize, cap: u32, seed: u64) -> Result<Vec<f64>> {
        let mut totals = Vec::with_capacity(n_paths);
        for p in 0..n_paths as u64 {
            let mut rng = crate::rng::substream(seed, p, 0xc7a);
            let mut total = 0.0;
            for (i, &k) in self.observed.iter().enumerate() {
                for j in k..self.intensity.len() {
                    let lambda = self.intensity[j];
                    if lambda <= 0.0 {
                        continue;
                    }
                    let pois = Poisson::new(lambda).map_err(|e| Error::Evaluation(format!("Poisson({lambda}): {e}")))?;
                    let mut count = 0.0;
                    for _ in 0..self.exposure[i] as u64 {
                        let c: f64 = pois.sample(&mut rng);
                        count += c.min(cap as f64);
                    }
                    // Random rounding keeps the expected count when exposure is fractional.
                    let frac = self.exposure[i].fract();
                    if frac > 0.0 && rng.random::<f64>() < frac {
                        count += pois.sample(&mut rng).min(cap as f64);
                    }
                    total += count * self.alpha[i] * self.beta[j];
                }
            }
            totals.push(total);
        }
        Ok(totals)
    }
}

/// CRM-style RBNS model: `E X1_ij = n_i λ_j`, `E(X2_ij | X1_ij) = X1_ij α_i β_j`.
pub fn crm_from_triangles(counts: &Triangle, sizes: &Triangle, exposure: &[f64]) -> Result<CrmParams> {
    let intensity = column_rates(counts, exposure)?;
    let cell_exposure: Vec<Vec<f64>> = (0..counts.n_rows())
        .map(|i| (0..counts.n_cols()).map(|j| counts.get(i, j).unwrap_or(exposure[i] * intensity[j])).collect())
        .collect();
    let fit = fit_multiplicative_with(sizes, Some(&cell_exposure), ZeroMargins::Allow)?;
    let observed: Vec<usize> = (0..sizes.n_rows()).map(|i| sizes.observed_len(i)).collect();
    let mut params =
        CrmParams { intensity, alpha: fit.alpha, beta: fit.beta, exposure: exposure.to_vec(), observed, reserve: 0.0 };
    params.reserve = params.reserve_within(sizes.n_cols());
    Ok(params)
}

pub fn crm_rbns(portfolio: &Portfolio) -> Result<CrmParams> {
    let counts = build_triangle(portfolio, Response::Payment);
    let sizes = build_triangle(portfolio, Response::Size);
    crm_from_triangles(&counts, &sizes, &counts.exposure.clone())
}

use serde::{Deserialize, Serialize};

use super::Triangle;
use crate::error::{Error, Result};

/// `E X_ij = e_ij · alpha_i · beta_j` with `Σ_j beta_j = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplicativeFit {
    /// Row effects `α̃_i`.
    pub alpha: Vec<f64>,
    /// Column effects `β_j`, summing to one.
    pub beta: Vec<f64>,
    pub iterations: usize,
}

impl MultiplicativeFit {
    pub fn fitted(&self, i: usize, j: usize) -> f64 {
        self.alpha[i] * self.beta[j]
    }

    /// Row ultimates `Σ_j α̃_i β_j` (unit exposure).
    pub fn ultimates(&self) -> Vec<f64> {
        self.alpha.clone()
    }

    /// Sum of fitted values over the unobserved cells of `triangle`, scaled
    /// by `exposure(i, j)`.
    pub fn reserve_with(&self, triangle: &Triangle, exposure: impl Fn(usize, usize) -> f64) -> f64 {
        let mut total = 0.0;
        for i in 0..triangle.n_rows() {
            for j in triangle.observed_len(i)..triangle.n_cols() {
                total += exposure(i, j) * self.fitted(i, j);
            }
        }
        total
    }

    pub fn reserve(&self, triangle: &Triangle) -> f64 {
        self.reserve_with(triangle, |_, _| 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroMargins {
    /// An all-zero row or column is an estimability error.
    #[default]
    Reject,
    /// All-zero rows and columns get zero effects.
    Allow,
}

/// Poisson (ODP) maximum-likelihood fit of the multiplicative model on the
/// observed cells, by iterative proportional fitting.
///
/// `exposure`, when given, holds a cell-level exposure `e_ij` for observed
/// cells; otherwise `e_ij = 1`.
pub fn fit_multiplicative_with(
    triangle: &Triangle,
    exposure: Option<&[Vec<f64>]>,
    zeros: ZeroMargins,
) -> Result<MultiplicativeFit> {
    let (n_rows, n_cols) = (triangle.n_rows(), triangle.n_cols());
    if n_rows == 0 || n_cols == 0 {
        return Err(Error::Estimability("empty triangle".into()));
    }
    let e = |i: usize, j: usize| exposure.map_or(1.0, |e| e[i][j]);
    let mut row_sum = vec![0.0; n_rows];
    let mut col_sum = vec![0.0; n_cols];
    let mut row_obs = vec![false; n_rows];
    let mut col_obs = vec![false; n_cols];
    for i in 0..n_rows {
        for j in 0..n_cols {
            if let Some(x) = triangle.get(i, j) {
                if x < 0.0 {
                    return Err(Error::Estimability(format!("negative cell ({}, {})", i + 1, j + 1)));
                }
                if e(i, j) < 0.0 {
                    return Err(Error::Estimability(format!("negative exposure in cell ({}, {})", i + 1, j + 1)));
                }
                row_sum[i] += x;
                col_sum[j] += x;
                if e(i, j) > 0.0 {
                    row_obs[i] = true;
                    col_obs[j] = true;
                }
            }
        }
    }
    if let Some(j) = (0..n_cols).find(|&j| (0..n_rows).all(|i| triangle.get(i, j).is_none())) {
        return Err(Error::Estimability(format!("development year {} is never observed", j + 1)));
    }
    if zeros == ZeroMargins::Reject {
        if let Some(j) = (0..n_cols).find(|&j| !col_obs[j]) {
            return Err(Error::Estimability(format!("development year {} has no observed exposure", j + 1)));
        }
        if let Some(i) = (0..n_rows).find(|&i| !row_obs[i]) {
            return Err(Error::Estimability(format!("reporting year {} has no observed exposure", i + 1)));
        }
    }
    if zeros == ZeroMargins::Reject {
        if let Some(i) = (0..n_rows).find(|&i| row_sum[i] <= 0.0) {
            return Err(Error::Estimability(format!("reporting year {} is all zero", i + 1)));
        }
        if let Some(j) = (0..n_cols).find(|&j| col_sum[j] <= 0.0) {
            return Err(Error::Estimability(format!("development year {} is all zero", j + 1)));
        }
    }
    let mut alpha: Vec<f64> = row_sum.clone();
    let mut beta = vec![1.0 / n_cols as f64; n_cols];
    let mut iterations = 0;
    loop {
        iterations += 1;
        for i in 0..n_rows {
            let den: f64 = (0..triangle.observed_len(i)).map(|j| e(i, j) * beta[j]).sum();
            alpha[i] = if den > 0.0 { row_sum[i] / den } else { 0.0 };
        }
        let mut max_rel = 0.0f64;
        for j in 0..n_cols {
            let den: f64 = (0..n_rows).filter(|&i| triangle.get(i, j).is_some()).map(|i| e(i, j) * alpha[i]).sum();
            let new = if den > 0.0 { col_sum[j] / den } else { 0.0 };
            let scale = new.abs().max(beta[j].abs()).max(1e-300);
            max_rel = max_rel.max((new - beta[j]).abs() / scale);
            beta[j] = new;
        }
        let total: f64 = beta.iter().sum();
        if total > 0.0 {
            beta.iter_mut().for_each(|b| *b /= total);
            alpha.iter_mut().for_each(|a| *a *= total);
        }
        if max_rel < 1e-14 || iterations >= 100_000 {
            if max_rel >= 1e-10 {
                return Err(Error::NonConvergence {
                    iterations,
                    message: format!("multiplicative fit stalled at relative change {max_rel:.3e}"),
                });
            }
            break;
        }
    }
    // Final row update so row margins hold exactly under normalized beta.
    for i in 0..n_rows {
        let den: f64 = (0..triangle.observed_len(i)).map(|j| e(i, j) * beta[j]).sum();
        alpha[i] = if den > 0.0 { row_sum[i] / den } else { 0.0 };
    }
    Ok(MultiplicativeFit { alpha, beta, iterations })
}

/// Multiplicative fit without exposure; zero rows or columns are rejected.
pub fn fit_multiplicative(triangle: &Triangle) -> Result<MultiplicativeFit> {
    fit_multiplicative_with(triangle, None, ZeroMargins::Reject)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell() {
        let t = Triangle::from_rows("x", &[vec![7.0]], 1).unwrap();
        let fit = fit_multiplicative(&t).unwrap();
        assert_eq!(fit.alpha, vec![7.0]);
        assert_eq!(fit.beta, vec![1.0]);
    }

    #[test]
    fn recovers_exact_parameters() {
        let (a, b) = ([100.0, 200.0], [0.6, 0.4]);
        let t = Triangle::from_rows("x", &[vec![a[0] * b[0], a[0] * b[1]], vec![a[1] * b[0]]], 2).unwrap();
        let fit = fit_multiplicative(&t).unwrap();
        for i in 0..2 {
            assert!((fit.alpha[i] - a[i]).abs() < 1e-8);
            assert!((fit.beta[i] - b[i]).abs() < 1e-8);
        }
        assert!((fit.reserve(&t) - 80.0).abs() < 1e-8);
    }

    #[test]
    fn zero_margins() {
        let t = Triangle::from_rows("x", &[vec![1.0, 0.0], vec![0.0]], 2).unwrap();
        assert!(matches!(fit_multiplicative(&t), Err(Error::Estimability(_))));
        let fit = fit_multiplicative_with(&t, None, ZeroMargins::Allow).unwrap();
        assert_eq!(fit.alpha[1], 0.0);
        assert_eq!(fit.beta, vec![1.0, 0.0]);
    }
}

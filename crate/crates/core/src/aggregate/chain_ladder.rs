use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::Triangle;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainLadder {
    /// `factors[j]` develops column `j` into column `j + 1` (0-based).
    pub factors: Vec<f64>,
    /// Cumulative triangle completed multiplicatively.
    pub completed: Vec<Vec<f64>>,
    /// Latest observed cumulative value per row.
    pub latest: Vec<f64>,
    pub ultimates: Vec<f64>,
    pub reserves: Vec<f64>,
    pub total_reserve: f64,
    /// Observed development years per row.
    pub observed: Vec<usize>,
}

impl ChainLadder {
    /// Projected payments of the next `h` development years per row.
    pub fn reserves_within(&self, h: usize) -> Vec<f64> {
        self.completed
            .iter()
            .zip(&self.observed)
            .map(|(row, &k)| {
                let last = (k + h).min(row.len());
                if k == 0 || last <= k {
                    0.0
                } else {
                    row[last - 1] - row[k - 1]
                }
            })
            .collect()
    }
}

/// Volume-weighted chain ladder on an incremental triangle.
pub fn chain_ladder(triangle: &Triangle) -> Result<ChainLadder> {
    let cum = triangle.cumulative();
    let (n_rows, n_cols) = (cum.n_rows(), cum.n_cols());
    let observed: Vec<usize> = (0..n_rows).map(|i| cum.observed_len(i)).collect();
    if observed.contains(&0) {
        return Err(Error::Estimability("chain ladder needs at least one observed cell per row".into()));
    }
    let mut factors = Vec::with_capacity(n_cols.saturating_sub(1));
    for j in 0..n_cols.saturating_sub(1) {
        let (mut num, mut den) = (0.0, 0.0);
        let mut rows = 0;
        for i in 0..n_rows {
            if let (Some(a), Some(b)) = (cum.get(i, j), cum.get(i, j + 1)) {
                den += a;
                num += b;
                rows += 1;
            }
        }
        let needed = observed.iter().any(|&k| k <= j + 1);
        if rows == 0 {
            if needed {
                return Err(Error::Estimability(format!(
                    "no row observes development years {} and {}",
                    j + 1,
                    j + 2
                )));
            }
            factors.push(f64::NAN);
            continue;
        }
        if den <= 0.0 {
            return Err(Error::Estimability(format!(
                "zero cumulative column sum at development year {}",
                j + 1
            )));
        }
        factors.push(num / den);
    }
    let mut completed = Vec::with_capacity(n_rows);
    let mut latest = Vec::with_capacity(n_rows);
    for i in 0..n_rows {
        let k = observed[i];
        let mut row: Vec<f64> = (0..k).map(|j| cum.get(i, j).unwrap_or(0.0)).collect();
        for j in k..n_cols {
            let prev = row[j - 1];
            row.push(prev * factors[j - 1]);
        }
        latest.push(row[k - 1]);
        completed.push(row);
    }
    let ultimates: Vec<f64> = completed.iter().map(|r| *r.last().unwrap_or(&0.0)).collect();
    let reserves: Vec<f64> = ultimates.iter().zip(&latest).map(|(u, l)| u - l).collect();
    let total_reserve = reserves.iter().sum();
    Ok(ChainLadder { factors, completed, latest, ultimates, reserves, total_reserve, observed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MackResult {
    /// `sigma2[j]` belongs to `factors[j]`.
    pub sigma2: Vec<f64>,
    pub row_se: Vec<f64>,
    pub total_se: f64,
    pub reserves: Vec<f64>,
    pub total_reserve: f64,
}

impl MackResult {
    /// Two-sided normal interval for the total reserve.
    pub fn interval(&self, level: f64) -> Result<(f64, f64)> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Input(format!("interval level {level} outside (0, 1)")));
        }
        let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
        Ok((self.total_reserve - z * self.total_se, self.total_reserve + z * self.total_se))
    }
}

/// Mack standard errors of the chain-ladder reserve.
///
/// `σ²_j = Σ_i C_ij (C_i,j+1 / C_ij − f_j)² / (n_j − 1)` over the `n_j` rows
/// observing `j + 1`. A period observed by a single row takes
/// `min(σ⁴_{j−1} / σ²_{j−2}, σ²_{j−2}, σ²_{j−1})`, or `σ²_{j−1}` when only
/// one earlier period exists.
pub fn mack_se(triangle: &Triangle) -> Result<MackResult> {
    let cl = chain_ladder(triangle)?;
    let cum = triangle.cumulative();
    let (n_rows, n_cols) = (cum.n_rows(), cum.n_cols());
    let m = n_cols.saturating_sub(1);
    let mut sigma2 = vec![0.0; m];
    let mut s = vec![0.0; m];
    for j in 0..m {
        let rows: Vec<(f64, f64)> =
            (0..n_rows).filter_map(|i| Some((cum.get(i, j)?, cum.get(i, j + 1)?))).collect();
        s[j] = rows.iter().map(|r| r.0).sum();
        let needed = cl.observed.iter().any(|&k| k <= j + 1);
        match rows.len() {
            0 if needed => {
                return Err(Error::Estimability(format!("no data for development year {}", j + 1)));
            }
            0 => {}
            1 => {
                sigma2[j] = match j {
                    0 => {
                        return Err(Error::Estimability(format!(
                            "variance of development year {} needs at least two rows",
                            j + 1
                        )))
                    }
                    1 => sigma2[0],
                    _ => {
                        let (a, b): (f64, f64) = (sigma2[j - 1], sigma2[j - 2]);
                        if b > 0.0 {
                            (a * a / b).min(b).min(a)
                        } else {
                            0.0
                        }
                    }
                };
            }
            n => {
                let f = cl.factors[j];
                let ss: f64 = rows.iter().filter(|r| r.0 > 0.0).map(|(c, c1)| c * (c1 / c - f).powi(2)).sum();
                sigma2[j] = ss / (n - 1) as f64;
            }
        }
    }
    // Relative variance increment of each period.
    let term = |k: usize| -> f64 {
        let f = cl.factors[k];
        if f > 0.0 && f.is_finite() {
            sigma2[k] / (f * f)
        } else {
            0.0
        }
    };
    let mut row_mse = vec![0.0; n_rows];
    for i in 0..n_rows {
        let ult = cl.ultimates[i];
        let mut acc = 0.0;
        for k in cl.observed[i] - 1..m {
            let c = cl.completed[i][k];
            let inv_c = if c > 0.0 { 1.0 / c } else { 0.0 };
            let inv_s = if s[k] > 0.0 { 1.0 / s[k] } else { 0.0 };
            acc += term(k) * (inv_c + inv_s);
        }
        row_mse[i] = ult * ult * acc;
    }
    let mut total_mse: f64 = row_mse.iter().sum();
    for i in 0..n_rows {
        let younger: f64 = (i + 1..n_rows).map(|j| cl.ultimates[j]).sum();
        let mut acc = 0.0;
        for k in cl.observed[i] - 1..m {
            if s[k] > 0.0 {
                acc += 2.0 * term(k) / s[k];
            }
        }
        total_mse += cl.ultimates[i] * younger * acc;
    }
    Ok(MackResult {
        sigma2,
        row_se: row_mse.iter().map(|v| v.max(0.0).sqrt()).collect(),
        total_se: total_mse.max(0.0).sqrt(),
        reserves: cl.reserves.clone(),
        total_reserve: cl.total_reserve,
    })
}

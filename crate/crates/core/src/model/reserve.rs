use serde::{Deserialize, Serialize};

use super::simulate::simulates;
use super::{HierarchicalModel, Response, SimulatedPath};
use crate::data::Portfolio;
use crate::engines::LayerEngine;
use crate::error::{Error, Result};
use crate::features::{FeatureRef, FeatureRow, PartialOutcome};

/// Mean simulated development in one future calendar year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FutureYear {
    /// Calendar year.
    pub calendar_year: i32,
    /// Claims open at the start of the year.
    pub open_claims: f64,
    pub payments: f64,
    pub paid: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReserveReport {
    /// Mean of `path_totals`.
    pub mean: f64,
    pub std_dev: f64,
    /// Empirical quantiles `(level, value)`.
    pub quantiles: Vec<(f64, f64)>,
    /// Total future payments per path, in path order.
    pub path_totals: Vec<f64>,
    pub horizon: Option<u32>,
    pub future_years: Vec<FutureYear>,
}

impl ReserveReport {
    pub fn quantile(&self, level: f64) -> Option<f64> {
        self.quantiles.iter().find(|(l, _)| (*l - level).abs() < 1e-12).map(|(_, v)| *v)
    }

    /// Monte Carlo standard error of `mean`.
    pub fn standard_error(&self) -> f64 {
        self.std_dev / (self.path_totals.len() as f64).sqrt()
    }
}

/// Empirical quantile `sorted[ceil(q n) - 1]` of sorted data.
pub fn empirical_quantile(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    let idx = ((level * n as f64).ceil() as usize).clamp(1, n) - 1;
    sorted[idx]
}

/// Summarize simulated paths. With a horizon `h`, only development years
/// `observed_years + 1 ..= observed_years + h` of each claim count.
pub fn rbns_reserve(
    paths: &[SimulatedPath],
    portfolio: &Portfolio,
    levels: &[f64],
    horizon: Option<u32>,
) -> Result<ReserveReport> {
    if paths.is_empty() {
        return Err(Error::Input("no simulation paths".into()));
    }
    if let Some(l) = levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        return Err(Error::Input(format!("quantile level {l} outside (0, 1)")));
    }
    if horizon == Some(0) {
        return Err(Error::Input("horizon must be at least 1".into()));
    }
    let window = portfolio.window;
    let n_future = window.d.saturating_sub(1) as usize;
    let mut open = vec![0.0; n_future];
    let mut payments = vec![0.0; n_future];
    let mut paid = vec![0.0; n_future];
    let mut totals = Vec::with_capacity(paths.len());
    for path in paths {
        let mut total = 0.0;
        for r in &path.records {
            let claim = portfolio
                .claims
                .get(r.claim_index as usize)
                .ok_or_else(|| Error::Input(format!("simulated claim index {} out of range", r.claim_index)))?;
            let ahead = r.dev_year - claim.observed_years;
            if horizon.is_some_and(|h| ahead > h) {
                continue;
            }
            total += r.size;
            // Calendar offset beyond the window end.
            let offset = (claim.reporting_year + r.dev_year - 1 - window.tau) as usize;
            if (1..=n_future).contains(&offset) {
                open[offset - 1] += 1.0;
                payments[offset - 1] += r.payment as u8 as f64;
                paid[offset - 1] += r.size;
            }
        }
        totals.push(total);
    }
    let n = paths.len() as f64;
    let mean = totals.iter().sum::<f64>() / n;
    let var = if paths.len() > 1 { totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    let mut sorted = totals.clone();
    sorted.sort_by(f64::total_cmp);
    let quantiles = levels.iter().map(|&l| (l, empirical_quantile(&sorted, l))).collect();
    let future_years = (0..n_future)
        .map(|c| FutureYear {
            calendar_year: window.calendar_year(window.tau + c as u32 + 1),
            open_claims: open[c] / n,
            payments: payments[c] / n,
            paid: paid[c] / n,
        })
        .filter(|y| y.open_claims > 0.0 || horizon.is_none())
        .collect();
    Ok(ReserveReport { mean, std_dev: var.sqrt(), quantiles, path_totals: totals, horizon, future_years })
}

/// Exact expected reserve of a single-layer size model whose covariates do
/// not depend on the development history: the sum of predicted means over
/// the future years of every simulated claim.
pub fn expected_reserve(model: &HierarchicalModel, portfolio: &Portfolio, horizon: Option<u32>) -> Result<f64> {
    let [layer] = model.config.layers.as_slice() else {
        return Err(Error::Config("expected_reserve needs a single-layer model".into()));
    };
    if layer.response != Response::Size || !layer.filter.is_empty() {
        return Err(Error::Config("expected_reserve needs an unfiltered size layer".into()));
    }
    let history_free = |f: &FeatureRef| {
        !matches!(
            f,
            FeatureRef::SizeLastYear | FeatureRef::TotalAmountPaid | FeatureRef::PaymentLastYear | FeatureRef::Interaction(_)
        )
    };
    if !layer.covariates.iter().all(history_free) {
        return Err(Error::Config("expected_reserve needs covariates free of development history".into()));
    }
    let engine = model.fit(0)?;
    let d = model.window.d;
    let mut total = 0.0;
    for claim in portfolio.claims.iter().filter(|c| simulates(model, c)) {
        let history = claim.history_before(claim.observed_years + 1);
        let last = horizon.map_or(d, |h| d.min(claim.observed_years + h));
        for j in claim.observed_years + 1..=last {
            total += engine.predict(&FeatureRow::new(claim, j, history, PartialOutcome::default()))?;
        }
    }
    Ok(total)
}

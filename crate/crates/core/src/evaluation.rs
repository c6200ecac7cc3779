//! Out-of-time evaluation over a moving window of yearly cutoffs.
//!
//! At a cutoff `t` every method sees the portfolio as known at the end of
//! window year `t` and predicts the payments of the next `horizon` calendar
//! years on the claims reported by then. The realized payments of those years
//! come from the full portfolio.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::aggregate::{build_triangle, chain_ladder, crm_rbns, dcl_rbns, mack_se};
use crate::data::Portfolio;
use crate::error::{Error, Result};
use crate::model::{fit_hrm, model_weights, rbns_reserve, simulate_paths, ModelConfig, Response};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Hierarchical { name: String, model: ModelConfig },
    ChainLadder,
    Dcl,
    Crm,
}

impl Method {
    pub fn name(&self) -> &str {
        match self {
            Method::Hierarchical { name, .. } => name,
            Method::ChainLadder => "chain_ladder",
            Method::Dcl => "dcl",
            Method::Crm => "crm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    /// Window years `t` after which to predict.
    pub cutoffs: Vec<u32>,
    pub horizon: u32,
    pub methods: Vec<Method>,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    /// Magnitude cap for percentage errors.
    #[serde(default)]
    pub cap: Option<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    crate::rng::DEFAULT_SEED
}

fn default_paths() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationEntry {
    pub cutoff: u32,
    /// Last calendar year of the training data.
    pub calendar_year: i32,
    pub method: String,
    pub predicted: f64,
    pub actual: f64,
    /// `None` when the actual development is zero.
    pub pe: Option<f64>,
    /// 95% bounds where the method provides them.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRun {
    pub horizon: u32,
    /// Ordered by cutoff, then method.
    pub entries: Vec<EvaluationEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub mean_pe: f64,
    pub mean_abs_pe: f64,
    pub n: usize,
    /// Entries without a percentage error.
    pub excluded: usize,
}

/// `(predicted − actual) / actual · 100`, capped in magnitude.
pub fn percentage_error(predicted: f64, actual: f64, cap: Option<f64>) -> Option<f64> {
    if actual == 0.0 || !actual.is_finite() || !predicted.is_finite() {
        return None;
    }
    let pe = (predicted - actual) / actual * 100.0;
    Some(match cap {
        Some(c) => pe.clamp(-c, c),
        None => pe,
    })
}

/// Payments in window years `t + 1 ..= t + horizon` on claims reported by `t`.
pub fn actual_development(portfolio: &Portfolio, cutoff: u32, horizon: u32) -> f64 {
    portfolio
        .claims
        .iter()
        .filter(|c| c.reporting_year <= cutoff)
        .flat_map(|c| c.records.iter().map(move |r| (c.reporting_year + r.dev_year - 1, r.size)))
        .filter(|&(k, _)| k > cutoff && k <= cutoff + horizon)
        .map(|(_, s)| s)
        .sum()
}

fn predict(
    method: &Method,
    train: &Portfolio,
    horizon: u32,
    n_paths: usize,
    seed: u64,
) -> Result<(f64, Option<f64>, Option<f64>)> {
    let h = horizon as usize;
    match method {
        Method::Hierarchical { model, .. } => {
            let weights = model_weights(model, train)?;
            let fitted = fit_hrm(train, model, &weights, seed)?;
            let paths = simulate_paths(&fitted, train, n_paths, seed)?;
            let report = rbns_reserve(&paths, train, &[0.025, 0.975], Some(horizon))?;
            Ok((report.mean, report.quantile(0.025), report.quantile(0.975)))
        }
        Method::ChainLadder => {
            let tri = build_triangle(train, Response::Size);
            let cl = chain_ladder(&tri)?;
            let predicted: f64 = cl.reserves_within(h).iter().sum();
            // Mack bounds, with the coefficient of variation of the full reserve.
            let bounds = mack_se(&tri).ok().filter(|m| m.total_reserve > 0.0).map(|m| {
                let z = Normal::standard().inverse_cdf(0.975);
                let half = z * m.total_se * predicted / m.total_reserve;
                (predicted - half, predicted + half)
            });
            Ok((predicted, bounds.map(|b| b.0), bounds.map(|b| b.1)))
        }
        Method::Dcl => Ok((dcl_rbns(train)?.reserve_within(h), None, None)),
        Method::Crm => Ok((crm_rbns(train)?.reserve_within(h), None, None)),
    }
}

/// Refit every method at each cutoff and compare its horizon-limited reserve
/// with the realized development.
pub fn moving_window_eval(portfolio: &Portfolio, config: &EvaluationConfig) -> Result<EvaluationRun> {
    let tau = portfolio.window.tau;
    if config.horizon == 0 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    if config.cutoffs.is_empty() || config.methods.is_empty() {
        return Err(Error::Config("evaluation needs at least one cutoff and one method".into()));
    }
    if let Some(t) = config.cutoffs.iter().find(|&&t| t == 0 || t + config.horizon > tau) {
        return Err(Error::Config(format!(
            "cutoff {t} with horizon {} leaves the data window 1..={tau}",
            config.horizon
        )));
    }
    if config.cutoffs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("cutoffs must be strictly increasing".into()));
    }
    for m in &config.methods {
        if let Method::Hierarchical { model, .. } = m {
            model.validate()?;
        }
    }
    let entries: Vec<Vec<EvaluationEntry>> = config
        .cutoffs
        .par_iter()
        .map(|&t| {
            let train = portfolio.truncate(t)?;
            let actual = actual_development(portfolio, t, config.horizon);
            config
                .methods
                .iter()
                .enumerate()
                .map(|(m, method)| {
                    let seed = crate::rng::mix(config.seed, t as u64, m as u64);
                    let (predicted, lower, upper) = predict(method, &train, config.horizon, config.n_paths, seed)?;
                    Ok(EvaluationEntry {
                        cutoff: t,
                        calendar_year: portfolio.window.calendar_year(t),
                        method: method.name().to_string(),
                        predicted,
                        actual,
                        pe: percentage_error(predicted, actual, config.cap),
                        lower,
                        upper,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(EvaluationRun { horizon: config.horizon, entries: entries.into_iter().flatten().collect() })
}

/// Mean and mean absolute percentage error per method, in first-seen order.
pub fn summarize(run: &EvaluationRun) -> Result<Vec<MethodSummary>> {
    if run.entries.is_empty() {
        return Err(Error::Evaluation("empty evaluation run".into()));
    }
    let mut methods: Vec<&str> = Vec::new();
    for e in &run.entries {
        if !methods.contains(&e.method.as_str()) {
            methods.push(&e.method);
        }
    }
    methods
        .into_iter()
        .map(|m| {
            let all: Vec<&EvaluationEntry> = run.entries.iter().filter(|e| e.method == m).collect();
            let pes: Vec<f64> = all.iter().filter_map(|e| e.pe).collect();
            if pes.is_empty() {
                return Err(Error::Evaluation(format!("method `{m}` has no defined percentage error")));
            }
            let n = pes.len() as f64;
            Ok(MethodSummary {
                method: m.to_string(),
                mean_pe: pes.iter().sum::<f64>() / n,
                mean_abs_pe: pes.iter().map(|p| p.abs()).sum::<f64>() / n,
                n: pes.len(),
                excluded: all.len() - pes.len(),
            })
        })
        .collect()
}

/// Long-format results: `date,model,predicted,actual,pe,lower,upper`.
pub fn write_results_csv<W: Write>(run: &EvaluationRun, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "model", "predicted", "actual", "pe", "lower", "upper"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for e in &run.entries {
        w.write_record([
            format!("{}-12-31", e.calendar_year),
            e.method.clone(),
            e.predicted.to_string(),
            e.actual.to_string(),
            opt(e.pe),
            opt(e.lower),
            opt(e.upper),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentage_errors() {
        assert_eq!(percentage_error(110.0, 100.0, None), Some(10.0));
        assert_eq!(percentage_error(100.0, 100.0, None), Some(0.0));
        assert_eq!(percentage_error(500.0, 100.0, Some(100.0)), Some(100.0));
        assert_eq!(percentage_error(5.0, 0.0, None), None);
    }

    fn run(pes: &[Option<f64>]) -> EvaluationRun {
        let entries = pes
            .iter()
            .enumerate()
            .map(|(i, &pe)| EvaluationEntry {
                cutoff: i as u32 + 1,
                calendar_year: 2011 + i as i32,
                method: "m".into(),
                predicted: 0.0,
                actual: 0.0,
                pe,
                lower: None,
                upper: None,
            })
            .collect();
        EvaluationRun { horizon: 1, entries }
    }

    #[test]
    fn summaries() {
        let s = summarize(&run(&[Some(10.0), Some(-10.0), None])).unwrap();
        assert_eq!((s[0].mean_pe, s[0].mean_abs_pe, s[0].excluded), (0.0, 10.0, 1));
        let s = summarize(&run(&[Some(7.32)])).unwrap();
        assert_eq!((s[0].mean_pe, s[0].mean_abs_pe), (7.32, 7.32));
        assert!(summarize(&run(&[None])).is_err());
        assert!(summarize(&run(&[])).is_err());
    }
}

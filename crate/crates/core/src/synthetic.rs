//! Synthetic portfolios drawn from a known settlement / payment / size model.
//!
//! Baselines are given per development year on the response scale;
//! reporting-year and covariate effects add on the link scale (logit for the
//! probabilities, log for the mean size). Development after the observation
//! window is never generated into the portfolio.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Claim, CovariateColumn, CovariateValue, DevelopmentRecord, ObservationWindow, Portfolio};
use crate::density::logistic;
use crate::error::{Error, Result};
use crate::rng::substream;

/// Name of the covariate flagging claims added by a [`FrequencyShock`].
pub const SHOCK_COVARIATE: &str = "shock";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CovariateDistribution {
    Categorical { levels: Vec<String>, probabilities: Vec<f64> },
    /// Uniform on `[low, high]`.
    Numeric { low: f64, high: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    #[serde(flatten)]
    pub distribution: CovariateDistribution,
}

/// Link-scale effect of one covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Effect {
    /// Coefficient of a numeric covariate.
    Slope(f64),
    /// Per-level shifts of a categorical covariate; absent levels get 0.
    Levels(BTreeMap<String, f64>),
}

/// Ground truth of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTruth {
    /// Baseline per development year `1..=d` on the response scale.
    pub by_dev_year: Vec<f64>,
    /// Link-scale shift per reporting year `1..=tau`; empty means none.
    #[serde(default)]
    pub by_reporting_year: Vec<f64>,
    #[serde(default)]
    pub effects: BTreeMap<String, Effect>,
    /// Link-scale shift when the claim settles in the same year (payment layer).
    #[serde(default)]
    pub close: f64,
}

impl LayerTruth {
    pub fn constant(values: Vec<f64>) -> Self {
        Self { by_dev_year: values, by_reporting_year: Vec::new(), effects: BTreeMap::new(), close: 0.0 }
    }
}

/// Extra claims in one reporting year that all settle in their first year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyShock {
    pub reporting_year: u32,
    /// Total claim count of the year becomes `factor · n`.
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    #[serde(default = "default_start_year")]
    pub start_year: i32,
    pub tau: u32,
    pub d: u32,
    /// Claims reported per year `1..=tau`.
    pub claims_per_year: Vec<usize>,
    #[serde(default)]
    pub covariates: Vec<CovariateSpec>,
    pub settlement: LayerTruth,
    pub payment: LayerTruth,
    pub size: LayerTruth,
    /// Gamma dispersion: `Var = dispersion · mean²`.
    pub dispersion: f64,
    /// Ignore covariate and settlement effects: development depends on
    /// reporting and development year only.
    #[serde(default)]
    pub multiplicative_only: bool,
    #[serde(default)]
    pub shock: Option<FrequencyShock>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    crate::rng::DEFAULT_SEED
}

fn default_start_year() -> i32 {
    2011
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Closed-form expectations of a multiplicative-only configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplicativeTruth {
    /// `E X_ij = alpha_i · beta_j` for the size triangle, `Σ beta = 1`.
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Expected payments per reported claim in development year `j`.
    pub payment_rate: Vec<f64>,
    /// Mean payment size in development year `j` for reporting year 1.
    pub mean_size: Vec<f64>,
    /// Size multiplier of reporting year `i` relative to year 1.
    pub inflation: Vec<f64>,
}

impl MultiplicativeTruth {
    pub fn cell_mean(&self, i: usize, j: usize) -> f64 {
        self.alpha[i] * self.beta[j]
    }

    /// Expected payments over the cells after the observation window.
    pub fn reserve(&self, tau: u32) -> f64 {
        let d = self.beta.len();
        (0..self.alpha.len())
            .map(|i| {
                let observed = (tau as usize - i).min(d);
                (observed..d).map(|j| self.cell_mean(i, j)).sum::<f64>()
            })
            .sum()
    }
}

impl GeneratorConfig {
    pub fn window(&self) -> Result<ObservationWindow> {
        ObservationWindow::new(self.start_year, self.tau, self.d)
    }

    pub fn validate(&self) -> Result<()> {
        self.window().map_err(|e| Error::Config(e.to_string()))?;
        let d = self.d as usize;
        let tau = self.tau as usize;
        if self.claims_per_year.len() != tau {
            return Err(Error::Config(format!(
                "claims_per_year has {} entries, expected tau = {tau}",
                self.claims_per_year.len()
            )));
        }
        if !(self.dispersion.is_finite() && self.dispersion > 0.0) {
            return Err(Error::Config(format!("dispersion must be positive, got {}", self.dispersion)));
        }
        let mut names = BTreeMap::new();
        for c in &self.covariates {
            if names.insert(c.name.as_str(), &c.distribution).is_some() {
                return Err(Error::Config(format!("covariate `{}` declared twice", c.name)));
            }
            match &c.distribution {
                CovariateDistribution::Categorical { levels, probabilities } => {
                    let total: f64 = probabilities.iter().sum();
                    if levels.is_empty()
                        || levels.len() != probabilities.len()
                        || probabilities.iter().any(|p| !(p.is_finite() && *p >= 0.0))
                        || (total - 1.0).abs() > 1e-9
                    {
                        return Err(Error::Config(format!(
                            "covariate `{}` needs one probability per level summing to 1",
                            c.name
                        )));
                    }
                }
                CovariateDistribution::Numeric { low, high } => {
                    if !(low.is_finite() && high.is_finite() && low <= high) {
                        return Err(Error::Config(format!("covariate `{}` has an invalid range", c.name)));
                    }
                }
            }
        }
        if self.shock.is_some() && names.contains_key(SHOCK_COVARIATE) {
            return Err(Error::Config(format!("covariate name `{SHOCK_COVARIATE}` is reserved")));
        }
        if let Some(s) = self.shock {
            if s.reporting_year == 0 || s.reporting_year > self.tau || !(s.factor.is_finite() && s.factor >= 1.0) {
                return Err(Error::Config(format!("invalid frequency shock {s:?}")));
            }
        }
        for (layer, truth, probability) in
            [("settlement", &self.settlement, true), ("payment", &self.payment, true), ("size", &self.size, false)]
        {
            if truth.by_dev_year.len() != d {
                return Err(Error::Config(format!(
                    "{layer}: by_dev_year has {} entries, expected d = {d}",
                    truth.by_dev_year.len()
                )));
            }
            let ok = |v: &f64| if probability { (0.0..=1.0).contains(v) } else { v.is_finite() && *v > 0.0 };
            if let Some(v) = truth.by_dev_year.iter().find(|v| !ok(v)) {
                return Err(Error::Config(format!("{layer}: baseline {v} out of range")));
            }
            if !truth.by_reporting_year.is_empty() && truth.by_reporting_year.len() != tau {
                return Err(Error::Config(format!(
                    "{layer}: by_reporting_year has {} entries, expected tau = {tau}",
                    truth.by_reporting_year.len()
                )));
            }
            if truth.by_reporting_year.iter().any(|v| !v.is_finite()) || !truth.close.is_finite() {
                return Err(Error::Config(format!("{layer}: non-finite effect")));
            }
            if truth.close != 0.0 && layer != "payment" {
                return Err(Error::Config(format!("{layer}: only the payment layer has a close effect")));
            }
            for (name, effect) in &truth.effects {
                let dist = names
                    .get(name.as_str())
                    .ok_or_else(|| Error::Config(format!("{layer}: effect of undeclared covariate `{name}`")))?;
                match (effect, dist) {
                    (Effect::Slope(b), CovariateDistribution::Numeric { .. }) if b.is_finite() => {}
                    (Effect::Levels(m), CovariateDistribution::Categorical { levels, .. })
                        if m.iter().all(|(l, v)| levels.contains(l) && v.is_finite()) => {}
                    _ => {
                        return Err(Error::Config(format!("{layer}: effect of `{name}` does not match its type")));
                    }
                }
            }
        }
        Ok(())
    }

    fn shift(&self, truth: &LayerTruth, reporting_year: u32, covariates: &BTreeMap<String, CovariateValue>) -> f64 {
        let mut eta = truth.by_reporting_year.get(reporting_year as usize - 1).copied().unwrap_or(0.0);
        if self.multiplicative_only {
            return eta;
        }
        for (name, effect) in &truth.effects {
            eta += match (effect, covariates.get(name)) {
                (Effect::Slope(b), Some(CovariateValue::Numeric(x))) => b * x,
                (Effect::Levels(m), Some(CovariateValue::Categorical(l))) => m.get(l).copied().unwrap_or(0.0),
                _ => 0.0,
            };
        }
        eta
    }

    /// True settlement probability in development year `j` (before forcing at `d`).
    pub fn settlement_probability(&self, j: u32, reporting_year: u32, covariates: &BTreeMap<String, CovariateValue>) -> f64 {
        let base = self.settlement.by_dev_year[j as usize - 1];
        logistic(logit(base) + self.shift(&self.settlement, reporting_year, covariates))
    }

    pub fn payment_probability(
        &self,
        j: u32,
        reporting_year: u32,
        covariates: &BTreeMap<String, CovariateValue>,
        close: bool,
    ) -> f64 {
        let base = self.payment.by_dev_year[j as usize - 1];
        let mut eta = logit(base) + self.shift(&self.payment, reporting_year, covariates);
        if close && !self.multiplicative_only {
            eta += self.payment.close;
        }
        logistic(eta)
    }

    pub fn mean_size(&self, j: u32, reporting_year: u32, covariates: &BTreeMap<String, CovariateValue>) -> f64 {
        self.size.by_dev_year[j as usize - 1] * self.shift(&self.size, reporting_year, covariates).exp()
    }

    /// Closed-form triangle expectations; needs `multiplicative_only`, no
    /// shock, and reporting-year effects on the size layer only.
    pub fn multiplicative_truth(&self) -> Result<MultiplicativeTruth> {
        self.validate()?;
        if !self.multiplicative_only || self.shock.is_some() {
            return Err(Error::Config("closed-form expectations need multiplicative_only and no shock".into()));
        }
        if self.settlement.by_reporting_year.iter().chain(&self.payment.by_reporting_year).any(|v| *v != 0.0) {
            return Err(Error::Config("reporting-year effects on settlement or payment do not factorize".into()));
        }
        let none = BTreeMap::new();
        let mut open = 1.0;
        let mut payment_rate = Vec::with_capacity(self.d as usize);
        let mut mean_size = Vec::with_capacity(self.d as usize);
        for j in 1..=self.d {
            payment_rate.push(open * self.payment_probability(j, 1, &none, false));
            mean_size.push(self.mean_size(j, 1, &none));
            open *= 1.0 - self.settlement_probability(j, 1, &none);
        }
        let inflation: Vec<f64> = (1..=self.tau).map(|i| self.mean_size(1, i, &none) / self.mean_size(1, 1, &none)).collect();
        let column: Vec<f64> = payment_rate.iter().zip(&mean_size).map(|(p, m)| p * m).collect();
        let total: f64 = column.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Config("expected payments are zero in every development year".into()));
        }
        let beta = column.iter().map(|c| c / total).collect();
        let alpha = (0..self.tau as usize).map(|i| self.claims_per_year[i] as f64 * inflation[i] * total).collect();
        Ok(MultiplicativeTruth { alpha, beta, payment_rate, mean_size, inflation })
    }
}

fn draw_covariate(dist: &CovariateDistribution, rng: &mut ChaCha8Rng) -> CovariateValue {
    match dist {
        CovariateDistribution::Categorical { levels, probabilities } => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (l, p) in levels.iter().zip(probabilities) {
                acc += p;
                if u < acc {
                    return CovariateValue::Categorical(l.clone());
                }
            }
            CovariateValue::Categorical(levels[levels.len() - 1].clone())
        }
        CovariateDistribution::Numeric { low, high } => CovariateValue::Numeric(low + (high - low) * rng.random::<f64>()),
    }
}

struct ClaimPlan {
    reporting_year: u32,
    seq: usize,
    shocked: bool,
}

fn generate_claim(config: &GeneratorConfig, window: &ObservationWindow, plan: &ClaimPlan) -> Result<Claim> {
    let mut rng = substream(config.seed, plan.reporting_year as u64, plan.seq as u64);
    let id = format!("C{:02}-{:06}", plan.reporting_year, plan.seq);
    let mut covariates = BTreeMap::new();
    for c in &config.covariates {
        covariates.insert(c.name.clone(), draw_covariate(&c.distribution, &mut rng));
    }
    if config.shock.is_some() {
        let level = if plan.shocked { "1" } else { "0" };
        covariates.insert(SHOCK_COVARIATE.to_string(), CovariateValue::Categorical(level.into()));
    }
    let observed = window.observed_years(plan.reporting_year);
    let mut records = Vec::with_capacity(observed as usize);
    for j in 1..=config.d {
        let p = config.settlement_probability(j, plan.reporting_year, &covariates);
        let u: f64 = rng.random();
        let close = j == config.d || plan.shocked || u < p;
        let q = config.payment_probability(j, plan.reporting_year, &covariates, close);
        let payment = rng.random::<f64>() < q;
        let size = if payment {
            let mean = config.mean_size(j, plan.reporting_year, &covariates);
            let shape = 1.0 / config.dispersion;
            let g = Gamma::new(shape, mean / shape).map_err(|e| Error::Config(format!("gamma size: {e}")))?;
            g.sample(&mut rng).max(f64::MIN_POSITIVE)
        } else {
            0.0
        };
        if j > observed {
            break;
        }
        records.push(DevelopmentRecord::new(id.clone(), j, close, payment, size));
        if close {
            break;
        }
    }
    Ok(Claim::new(id, plan.reporting_year, covariates, records))
}

/// Draw a portfolio. Claims use independent random streams derived from the
/// seed, so the result does not depend on the thread count.
pub fn generate(config: &GeneratorConfig) -> Result<Portfolio> {
    config.validate()?;
    let window = config.window()?;
    let mut plans = Vec::new();
    for (i, &n) in config.claims_per_year.iter().enumerate() {
        let r = i as u32 + 1;
        let extra = match config.shock {
            Some(s) if s.reporting_year == r => ((s.factor - 1.0) * n as f64).round() as usize,
            _ => 0,
        };
        plans.extend((0..n + extra).map(|seq| ClaimPlan { reporting_year: r, seq, shocked: seq >= n }));
    }
    let claims = plans.par_iter().map(|p| generate_claim(config, &window, p)).collect::<Result<Vec<_>>>()?;
    let mut columns: Vec<CovariateColumn> = config
        .covariates
        .iter()
        .map(|c| match c.distribution {
            CovariateDistribution::Categorical { .. } => CovariateColumn::categorical(&c.name),
            CovariateDistribution::Numeric { .. } => CovariateColumn::numeric(&c.name),
        })
        .collect();
    if config.shock.is_some() {
        columns.push(CovariateColumn::categorical(SHOCK_COVARIATE));
    }
    Portfolio::new(window, columns, claims)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(p: Vec<f64>, q: Vec<f64>) -> GeneratorConfig {
        GeneratorConfig {
            start_year: 2011,
            tau: 3,
            d: 3,
            claims_per_year: vec![50, 50, 50],
            covariates: vec![],
            settlement: LayerTruth::constant(p),
            payment: LayerTruth::constant(q),
            size: LayerTruth::constant(vec![100.0, 50.0, 20.0]),
            dispersion: 0.5,
            multiplicative_only: false,
            shock: None,
            seed: 7,
        }
    }

    #[test]
    fn immediate_settlement() {
        let p = generate(&config(vec![1.0, 0.5, 0.5], vec![0.5, 0.5, 0.5])).unwrap();
        assert!(p.claims.iter().all(|c| c.records.len() == 1 && c.records[0].close));
    }

    #[test]
    fn no_payments() {
        let p = generate(&config(vec![0.3, 0.3, 0.3], vec![0.0, 0.0, 0.0])).unwrap();
        assert!(p.records().all(|r| !r.payment && r.size == 0.0));
    }

    #[test]
    fn deterministic_and_truncated() {
        let c = config(vec![0.2, 0.2, 0.2], vec![0.7, 0.6, 0.5]);
        let a = generate(&c).unwrap();
        assert_eq!(a, generate(&c).unwrap());
        assert!(a.claims.iter().all(|c| c.records.len() as u32 <= c.observed_years));
        assert!(a.claims.iter().filter(|c| c.reporting_year == 1).all(|c| c.is_settled()));
    }

    #[test]
    fn invalid_configs() {
        let mut c = config(vec![0.2, 0.2], vec![0.7, 0.6, 0.5]);
        assert!(generate(&c).unwrap_err().is_config());
        c = config(vec![0.2, 0.2, 1.2], vec![0.7, 0.6, 0.5]);
        assert!(generate(&c).unwrap_err().is_config());
        c = config(vec![0.2, 0.2, 0.2], vec![0.7, 0.6, 0.5]);
        c.payment.effects.insert("x".into(), Effect::Slope(1.0));
        assert!(generate(&c).unwrap_err().is_config());
    }

    #[test]
    fn shock_claims_settle_at_once() {
        let mut c = config(vec![0.2, 0.2, 0.2], vec![0.7, 0.6, 0.5]);
        c.shock = Some(FrequencyShock { reporting_year: 2, factor: 3.0 });
        let p = generate(&c).unwrap();
        assert_eq!(p.reported_counts, vec![50, 150, 50]);
        let shocked: Vec<_> = p
            .claims
            .iter()
            .filter(|c| c.covariate(SHOCK_COVARIATE) == Some(&CovariateValue::Categorical("1".into())))
            .collect();
        assert_eq!(shocked.len(), 100);
        assert!(shocked.iter().all(|c| c.settlement_year() == Some(1)));
    }
}

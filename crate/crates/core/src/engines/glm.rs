//! Weighted GLMs fitted by iteratively reweighted least squares.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::density::{logistic, Family, ResponseDistribution};
use crate::error::{Error, Result};

/// Dense row-major design matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub columns: Vec<String>,
    n_rows: usize,
    data: Vec<f64>,
}

impl Design {
    pub fn new(columns: Vec<String>, n_rows: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n_rows * columns.len(), "design data has the wrong length");
        Self { columns, n_rows, data }
    }

    pub fn from_rows(columns: Vec<String>, rows: &[Vec<f64>]) -> Self {
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(columns, rows.len(), data)
    }

    /// Intercept-only design with `n` rows.
    pub fn intercept(n: usize) -> Self {
        Self::new(vec!["(Intercept)".into()], n, vec![1.0; n])
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_columns();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn select_rows(&self, idx: &[usize]) -> Design {
        let data = idx.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        Design::new(self.columns.clone(), idx.len(), data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlmOptions {
    pub max_iter: usize,
    /// Relative gradient tolerance.
    pub tolerance: f64,
    /// Variance power for log-link families; `None` uses the family default
    /// (2 for gamma, 1 for Poisson).
    pub variance_power: Option<f64>,
}

impl Default for GlmOptions {
    fn default() -> Self {
        Self { max_iter: 100, tolerance: 1e-8, variance_power: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Logit,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    pub family: Family,
    pub link: Link,
    pub columns: Vec<String>,
    /// Aligned with `columns`; aliased columns have coefficient 0.
    pub coefficients: Vec<f64>,
    pub aliased: Vec<String>,
    pub dispersion: f64,
    pub variance_power: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub deviance: f64,
}

impl GlmFit {
    pub fn coefficient_map(&self) -> BTreeMap<String, f64> {
        self.columns.iter().cloned().zip(self.coefficients.iter().copied()).collect()
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.columns.iter().position(|c| c == name).map(|i| self.coefficients[i])
    }

    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum()
    }

    /// Mean on the response scale, kept strictly inside the family's range.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let eta = self.linear_predictor(x);
        match self.family {
            Family::Bernoulli => logistic(eta).clamp(1e-15, 1.0 - 1e-15),
            Family::Gamma | Family::Poisson => eta.exp().clamp(f64::MIN_POSITIVE, f64::MAX),
        }
    }

    pub fn distribution(&self) -> ResponseDistribution {
        ResponseDistribution { family: self.family, dispersion: self.dispersion, variance_power: self.variance_power }
    }
}

pub fn fit_logistic(design: &Design, y: &[f64], w: &[f64], options: &GlmOptions) -> Result<GlmFit> {
    fit_glm(Family::Bernoulli, design, y, w, options)
}

pub fn fit_gamma(design: &Design, y: &[f64], w: &[f64], options: &GlmOptions) -> Result<GlmFit> {
    fit_glm(Family::Gamma, design, y, w, options)
}

pub fn fit_poisson(design: &Design, y: &[f64], w: &[f64], options: &GlmOptions) -> Result<GlmFit> {
    fit_glm(Family::Poisson, design, y, w, options)
}

struct Working {
    family: Family,
    power: f64,
}

impl Working {
    fn mean(&self, eta: f64) -> f64 {
        match self.family {
            Family::Bernoulli => logistic(eta),
            _ => eta.exp(),
        }
    }

    /// IRLS weight (without the prior weight) and working-response increment.
    fn irls(&self, y: f64, mu: f64) -> (f64, f64) {
        match self.family {
            Family::Bernoulli => {
                let v = (mu * (1.0 - mu)).max(1e-300);
                (v, (y - mu) / v)
            }
            _ => (mu.powf(2.0 - self.power), (y - mu) / mu),
        }
    }

    /// Score contribution `∂ℓ/∂η` (dispersion 1).
    fn score(&self, y: f64, mu: f64) -> f64 {
        match self.family {
            Family::Bernoulli => y - mu,
            _ => (y - mu) * mu.powf(1.0 - self.power),
        }
    }

    fn unit_deviance(&self, y: f64, mu: f64) -> f64 {
        match self.family {
            Family::Bernoulli => {
                if y > 0.5 {
                    -2.0 * mu.ln()
                } else {
                    -2.0 * (1.0 - mu).ln()
                }
            }
            _ => tweedie_unit_deviance(y, mu, self.power),
        }
    }

    fn variance(&self, mu: f64) -> f64 {
        match self.family {
            Family::Bernoulli => mu * (1.0 - mu),
            _ => mu.powf(self.power),
        }
    }
}

pub(crate) fn tweedie_unit_deviance(y: f64, mu: f64, p: f64) -> f64 {
    if (p - 1.0).abs() < 1e-12 {
        let t = if y > 0.0 { y * (y / mu).ln() } else { 0.0 };
        2.0 * (t - (y - mu))
    } else if (p - 2.0).abs() < 1e-12 {
        2.0 * ((mu / y).ln() + y / mu - 1.0)
    } else {
        let a = if y > 0.0 { y.powf(2.0 - p) / ((1.0 - p) * (2.0 - p)) } else { 0.0 };
        2.0 * (a - y * mu.powf(1.0 - p) / (1.0 - p) + mu.powf(2.0 - p) / (2.0 - p))
    }
}

fn validate(family: Family, design: &Design, y: &[f64], w: &[f64], power: f64) -> Result<()> {
    let n = design.n_rows();
    if y.len() != n || w.len() != n {
        return Err(Error::Input(format!(
            "design has {n} rows but {} responses and {} weights",
            y.len(),
            w.len()
        )));
    }
    if design.n_columns() == 0 {
        return Err(Error::Input("design has no columns".into()));
    }
    if w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::Input("weights must be finite and nonnegative".into()));
    }
    if !(w.iter().sum::<f64>() > 0.0) {
        return Err(Error::Input("weights must have a positive total".into()));
    }
    if design.data.iter().any(|x| !x.is_finite()) {
        return Err(Error::Input("design contains non-finite values".into()));
    }
    for &v in y {
        match family {
            Family::Bernoulli if v != 0.0 && v != 1.0 => {
                return Err(Error::Domain(format!("Bernoulli response {v} not in {{0, 1}}")))
            }
            Family::Gamma if !(v > 0.0 && v.is_finite()) => {
                return Err(Error::Domain(format!("gamma response {v} must be positive")))
            }
            Family::Poisson if !(v >= 0.0 && v.is_finite()) => {
                return Err(Error::Domain(format!("Poisson response {v} must be nonnegative")))
            }
            _ => {}
        }
    }
    if family != Family::Bernoulli && !(power.is_finite() && (power <= 0.0 || power >= 1.0)) {
        return Err(Error::Config(format!("variance power {power} not supported")));
    }
    Ok(())
}

/// Columns that are linearly dependent on earlier ones under weights `w`.
fn aliased_columns(design: &Design, w: &[f64]) -> Vec<bool> {
    let p = design.n_columns();
    let mut g = DMatrix::<f64>::zeros(p, p);
    for i in 0..design.n_rows() {
        if w[i] == 0.0 {
            continue;
        }
        let x = design.row(i);
        for a in 0..p {
            if x[a] == 0.0 {
                continue;
            }
            let wa = w[i] * x[a];
            for b in a..p {
                g[(a, b)] += wa * x[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            g[(a, b)] = g[(b, a)];
        }
    }
    // Gram-Schmidt on the weighted inner product, column by column.
    let mut aliased = vec![false; p];
    let mut l = DMatrix::<f64>::zeros(p, p);
    let mut kept: Vec<usize> = Vec::new();
    for c in 0..p {
        let diag = g[(c, c)];
        if diag <= 0.0 {
            aliased[c] = true;
            continue;
        }
        let mut residual = diag;
        for (ki, &k) in kept.iter().enumerate() {
            let mut v = g[(c, k)];
            for (mi, _) in kept.iter().enumerate().take(ki) {
                v -= l[(c, mi)] * l[(k, mi)];
            }
            let lkk = l[(k, ki)];
            l[(c, ki)] = v / lkk;
            residual -= l[(c, ki)] * l[(c, ki)];
        }
        if residual <= 1e-9 * diag {
            aliased[c] = true;
            continue;
        }
        l[(c, kept.len())] = residual.sqrt();
        kept.push(c);
    }
    aliased
}

/// Maximize the weighted log-likelihood of `family` by IRLS.
pub fn fit_glm(family: Family, design: &Design, y: &[f64], w: &[f64], options: &GlmOptions) -> Result<GlmFit> {
    let power = match family {
        Family::Bernoulli => 2.0,
        _ => options.variance_power.unwrap_or_else(|| family.canonical_variance_power()),
    };
    validate(family, design, y, w, power)?;
    let n = design.n_rows();
    let total_w: f64 = w.iter().sum();
    let ybar = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / total_w;
    match family {
        Family::Bernoulli if ybar <= 0.0 || ybar >= 1.0 => {
            return Err(Error::Separation(format!(
                "all weighted responses equal {}; fitted probability on the boundary",
                ybar.round()
            )))
        }
        Family::Poisson if ybar <= 0.0 => {
            return Err(Error::Estimability("all weighted Poisson responses are zero".into()))
        }
        _ => {}
    }

    let aliased = aliased_columns(design, w);
    let kept: Vec<usize> = (0..design.n_columns()).filter(|&c| !aliased[c]).collect();
    let aliased_names: Vec<String> =
        (0..design.n_columns()).filter(|&c| aliased[c]).map(|c| design.columns[c].clone()).collect();
    if !aliased_names.is_empty() {
        log::debug!("dropping aliased columns {aliased_names:?}");
    }
    let p = kept.len();
    let x = |i: usize, k: usize| design.row(i)[kept[k]];
    let working = Working { family, power };

    let deviance_of = |eta: &[f64]| -> f64 {
        (0..n)
            .filter(|&i| w[i] > 0.0)
            .map(|i| w[i] * working.unit_deviance(y[i], working.mean(eta[i])))
            .sum()
    };
    let eta_of = |beta: &DVector<f64>| -> Vec<f64> { (0..n).map(|i| (0..p).map(|k| x(i, k) * beta[k]).sum()).collect() };
    // Score scale so the tolerance is relative.
    let scale = total_w
        * match family {
            Family::Bernoulli => 1.0,
            _ => ybar.powf(2.0 - power),
        };

    let mut eta: Vec<f64> = y
        .iter()
        .map(|&v| match family {
            Family::Bernoulli => family.link((v + 0.5) / 2.0),
            _ => family.link((v + ybar) / 2.0),
        })
        .collect();
    let mut beta = DVector::<f64>::zeros(p);
    let mut deviance = f64::INFINITY;
    let mut trace = Vec::new();
    let mut gradient_norm = f64::INFINITY;
    let mut iterations = 0;
    let mut first = true;
    let mut polished = false;

    while iterations < options.max_iter {
        iterations += 1;
        let mut xtwx = DMatrix::<f64>::zeros(p, p);
        let mut xtwz = DVector::<f64>::zeros(p);
        for i in 0..n {
            if w[i] == 0.0 {
                continue;
            }
            let mu = working.mean(eta[i]);
            let (wi, dz) = working.irls(y[i], mu);
            let wi = w[i] * wi;
            let z = eta[i] + dz;
            for a in 0..p {
                let xa = x(i, a);
                if xa == 0.0 {
                    continue;
                }
                xtwz[a] += wi * xa * z;
                for b in a..p {
                    xtwx[(a, b)] += wi * xa * x(i, b);
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtwx[(a, b)] = xtwx[(b, a)];
            }
        }
        let chol = xtwx.cholesky().ok_or_else(|| Error::NonConvergence {
            iterations,
            message: "weighted normal equations are numerically singular".into(),
        })?;
        let candidate = chol.solve(&xtwz);
        let mut step = candidate - &beta;
        let mut new_beta = &beta + &step;
        let mut new_eta = eta_of(&new_beta);
        let mut new_dev = deviance_of(&new_eta);
        if !first {
            let mut halvings = 0;
            while !(new_dev.is_finite() && new_dev <= deviance * (1.0 + 1e-12) + 1e-12) && halvings < 40 {
                step *= 0.5;
                new_beta = &beta + &step;
                new_eta = eta_of(&new_beta);
                new_dev = deviance_of(&new_eta);
                halvings += 1;
            }
            if !new_dev.is_finite() {
                return Err(Error::NonConvergence {
                    iterations,
                    message: format!("deviance diverged; trace {trace:?}"),
                });
            }
        }
        first = false;
        beta = new_beta;
        eta = new_eta;
        let prev = deviance;
        deviance = new_dev;
        trace.push(deviance);

        let mut grad = vec![0.0; p];
        for i in 0..n {
            if w[i] == 0.0 {
                continue;
            }
            let s = w[i] * working.score(y[i], working.mean(eta[i]));
            for (k, g) in grad.iter_mut().enumerate() {
                *g += s * x(i, k);
            }
        }
        gradient_norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) / scale;
        let stalled = prev.is_finite() && (prev - deviance).abs() <= 1e-15 * (deviance.abs() + 1.0);
        let converged = gradient_norm < options.tolerance || (stalled && gradient_norm < options.tolerance.sqrt());
        // One extra Newton step after convergence brings the estimate to
        // machine precision.
        if converged && (polished || stalled || gradient_norm == 0.0) {
            break;
        }
        polished = converged;
        if iterations == options.max_iter && !converged {
            return Err(Error::NonConvergence {
                iterations,
                message: format!("relative gradient {gradient_norm:.3e} above tolerance; deviance trace {trace:?}"),
            });
        }
    }

    if family == Family::Bernoulli {
        let separated = (0..n).filter(|&i| w[i] > 0.0).all(|i| (y[i] - working.mean(eta[i])).abs() < 1e-6);
        if separated {
            return Err(Error::Separation(
                "complete separation: every fitted probability is on the boundary".into(),
            ));
        }
    }

    let dispersion = match family {
        Family::Gamma => {
            let (mut num, mut active) = (0.0, 0usize);
            for i in 0..n {
                if w[i] > 0.0 {
                    let mu = working.mean(eta[i]);
                    num += w[i] * (y[i] - mu).powi(2) / working.variance(mu);
                    active += 1;
                }
            }
            let base = num / total_w;
            if active > p {
                base * active as f64 / (active - p) as f64
            } else {
                base
            }
        }
        _ => 1.0,
    };

    let mut coefficients = vec![0.0; design.n_columns()];
    for (k, &c) in kept.iter().enumerate() {
        coefficients[c] = beta[k];
    }
    Ok(GlmFit {
        family,
        link: if family == Family::Bernoulli { Link::Logit } else { Link::Log },
        columns: design.columns.clone(),
        coefficients,
        aliased: aliased_names,
        dispersion,
        variance_power: power,
        iterations,
        gradient_norm,
        deviance,
    })
}

/// Weighted log-likelihood of a fit (dispersion fixed at the fitted value,
/// or 1 for gamma fits with zero dispersion) as a function of coefficients.
pub fn loglik_at(fit: &GlmFit, design: &Design, y: &[f64], w: &[f64], beta: &[f64]) -> Result<f64> {
    let mut dist = fit.distribution();
    if dist.family == Family::Gamma && !(dist.dispersion > 0.0) {
        dist.dispersion = 1.0;
    }
    let mut total = 0.0;
    for i in 0..design.n_rows() {
        if w[i] == 0.0 {
            continue;
        }
        let eta: f64 = design.row(i).iter().zip(beta).map(|(a, b)| a * b).sum();
        total += w[i] * dist.log_density(y[i], dist.family.inverse_link(eta))?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> GlmOptions {
        GlmOptions::default()
    }

    #[test]
    fn bernoulli_proportion() {
        let fit = fit_logistic(&Design::intercept(4), &[1.0, 1.0, 1.0, 0.0], &[1.0; 4], &opts()).unwrap();
        assert!((fit.coefficients[0] - 3f64.ln()).abs() < 1e-8);
        let fit = fit_logistic(&Design::intercept(2), &[1.0, 0.0], &[2.0, 1.0], &opts()).unwrap();
        assert!((fit.predict(&[1.0]) - 2.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn bernoulli_degenerate() {
        let err = fit_logistic(&Design::intercept(3), &[0.0; 3], &[1.0; 3], &opts()).unwrap_err();
        assert!(matches!(err, Error::Separation(_)));
    }

    #[test]
    fn complete_separation() {
        let d = Design::from_rows(
            vec!["(Intercept)".into(), "x".into()],
            &[vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 1.0]],
        );
        let err = fit_logistic(&d, &[0.0, 0.0, 1.0, 1.0], &[1.0; 4], &opts()).unwrap_err();
        assert!(matches!(err, Error::Separation(_) | Error::NonConvergence { .. }), "{err}");
    }

    #[test]
    fn gamma_mean_and_dispersion() {
        let fit = fit_gamma(&Design::intercept(2), &[2.0, 4.0], &[1.0; 2], &opts()).unwrap();
        assert!((fit.coefficients[0] - 3f64.ln()).abs() < 1e-8);
        let fit = fit_gamma(&Design::intercept(3), &[5.0; 3], &[1.0; 3], &opts()).unwrap();
        assert!((fit.predict(&[1.0]) - 5.0).abs() < 1e-8);
        assert!(fit.dispersion.abs() < 1e-20);
    }

    #[test]
    fn gamma_groups() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0, (i >= 3) as u8 as f64]).collect();
        let d = Design::from_rows(vec!["(Intercept)".into(), "g".into()], &rows);
        let y = [1.0, 2.0, 3.0, 6.0, 8.0, 10.0];
        let fit = fit_gamma(&d, &y, &[1.0; 6], &opts()).unwrap();
        assert!((fit.predict(&rows[0]) - 2.0).abs() < 1e-8);
        assert!((fit.predict(&rows[3]) - 8.0).abs() < 1e-8);
    }

    #[test]
    fn aliased_columns_are_dropped() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0, (i % 2) as f64, (i % 2) as f64]).collect();
        let d = Design::from_rows(vec!["(Intercept)".into(), "a".into(), "b".into()], &rows);
        let y = [1.0, 2.0, 1.5, 2.5, 1.2, 2.2];
        let fit = fit_gamma(&d, &y, &[1.0; 6], &opts()).unwrap();
        assert_eq!(fit.aliased, vec!["b".to_string()]);
        assert_eq!(fit.coefficients[2], 0.0);
    }

    #[test]
    fn gamma_rejects_nonpositive() {
        let err = fit_gamma(&Design::intercept(2), &[0.0, 1.0], &[1.0; 2], &opts()).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn poisson_rate() {
        let fit = fit_poisson(&Design::intercept(3), &[0.0, 1.0, 5.0], &[1.0; 3], &opts()).unwrap();
        assert!((fit.predict(&[1.0]) - 2.0).abs() < 1e-9);
    }
}

//! Response families and their log-densities.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Binary response, logit link.
    Bernoulli,
    /// Positive response, log link.
    Gamma,
    /// Nonnegative (quasi-)count response, log link.
    Poisson,
}

impl Family {
    pub fn canonical_variance_power(self) -> f64 {
        match self {
            Family::Bernoulli => f64::NAN,
            Family::Gamma => 2.0,
            Family::Poisson => 1.0,
        }
    }

    /// Mean from the linear predictor.
    pub fn inverse_link(self, eta: f64) -> f64 {
        match self {
            Family::Bernoulli => logistic(eta),
            Family::Gamma | Family::Poisson => eta.exp(),
        }
    }

    pub fn link(self, mu: f64) -> f64 {
        match self {
            Family::Bernoulli => (mu / (1.0 - mu)).ln(),
            Family::Gamma | Family::Poisson => mu.ln(),
        }
    }
}

pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Conditional distribution of a layer response given its mean.
///
/// For the gamma family the variance is `dispersion * mean^variance_power`;
/// the standard gamma GLM has `variance_power = 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseDistribution {
    pub family: Family,
    #[serde(default = "one")]
    pub dispersion: f64,
    #[serde(default = "two")]
    pub variance_power: f64,
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

impl ResponseDistribution {
    pub fn bernoulli() -> Self {
        Self { family: Family::Bernoulli, dispersion: 1.0, variance_power: 2.0 }
    }

    pub fn gamma(dispersion: f64) -> Self {
        Self { family: Family::Gamma, dispersion, variance_power: 2.0 }
    }

    pub fn poisson() -> Self {
        Self { family: Family::Poisson, dispersion: 1.0, variance_power: 1.0 }
    }

    /// Gamma shape and scale matching `mean` and the configured variance.
    pub fn gamma_shape_scale(&self, mean: f64) -> (f64, f64) {
        let p = self.variance_power;
        let shape = mean.powf(2.0 - p) / self.dispersion;
        let scale = self.dispersion * mean.powf(p - 1.0);
        (shape, scale)
    }

    pub fn log_density(&self, y: f64, mean: f64) -> Result<f64> {
        match self.family {
            Family::Bernoulli => {
                if !(0.0..=1.0).contains(&mean) {
                    return Err(Error::Evaluation(format!("Bernoulli probability {mean} outside [0, 1]")));
                }
                Ok(if y > 0.5 { mean.ln() } else { (1.0 - mean).ln() })
            }
            Family::Gamma => {
                if !(mean > 0.0 && mean.is_finite()) {
                    return Err(Error::Evaluation(format!("nonpositive predicted gamma mean {mean}")));
                }
                if !(self.dispersion > 0.0) {
                    return Err(Error::Evaluation(format!("gamma dispersion {} must be positive", self.dispersion)));
                }
                if !(y > 0.0) {
                    return Err(Error::Domain(format!("gamma response {y} must be positive")));
                }
                let (shape, scale) = self.gamma_shape_scale(mean);
                Ok((shape - 1.0) * y.ln() - y / scale - shape * scale.ln() - ln_gamma(shape))
            }
            Family::Poisson => {
                if !(mean > 0.0) {
                    return Err(Error::Evaluation(format!("nonpositive predicted Poisson mean {mean}")));
                }
                if y < 0.0 {
                    return Err(Error::Domain(format!("Poisson response {y} must be nonnegative")));
                }
                Ok(y * mean.ln() - mean - ln_gamma(y + 1.0))
            }
        }
    }
}

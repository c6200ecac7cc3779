//! Layer definitions of a hierarchical model.

use serde::{Deserialize, Serialize};

use crate::data::YearOutcome;
use crate::density::Family;
use crate::engines::EngineConfig;
use crate::error::{Error, Result};
use crate::features::{Feature, FeatureRef, FeatureRow};

/// Component of the yearly update vector modelled by a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    Close,
    Payment,
    Size,
}

impl Response {
    pub fn feature(self) -> FeatureRef {
        match self {
            Response::Close => FeatureRef::Close,
            Response::Payment => FeatureRef::Payment,
            Response::Size => FeatureRef::Size,
        }
    }

    pub fn value(self, outcome: &YearOutcome) -> f64 {
        match self {
            Response::Close => outcome.close as u8 as f64,
            Response::Payment => outcome.payment as u8 as f64,
            Response::Size => outcome.size,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    fn holds(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }
}

/// One conjunct of a layer's inclusion filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterCondition {
    /// Claim open at the start of the development year.
    Open,
    /// Development year strictly before the maximum settlement delay `d`.
    BeforeMaxDelay,
    /// Numeric comparison of a covariate; flags compare as 0/1.
    Compare { field: FeatureRef, op: CmpOp, value: f64 },
}

impl FilterCondition {
    pub fn payment_made() -> Self {
        FilterCondition::Compare { field: FeatureRef::Payment, op: CmpOp::Eq, value: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    /// Position in the update vector, `1..=s`.
    pub order: usize,
    pub response: Response,
    pub family: Family,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default)]
    pub covariates: Vec<FeatureRef>,
    #[serde(default)]
    pub filter: Vec<FilterCondition>,
}

impl LayerSpec {
    /// Whether the row passes every filter condition. Rows are open claims
    /// unless the model includes settled claims.
    pub fn includes(&self, row: &FeatureRow<'_>, d: u32, open: bool) -> Result<bool> {
        for c in &self.filter {
            let pass = match c {
                FilterCondition::Open => open,
                FilterCondition::BeforeMaxDelay => row.dev_year < d,
                FilterCondition::Compare { field, op, value } => {
                    let x = match row.get(field)? {
                        Feature::Number(x) => x,
                        Feature::Level(l) => l.parse::<f64>().map_err(|_| {
                            Error::Config(format!("filter field `{field}` has non-numeric level `{l}`"))
                        })?,
                        Feature::Missing => return Ok(false),
                    };
                    op.holds(x, *value)
                }
            };
            if !pass {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn referenced(&self) -> impl Iterator<Item = &FeatureRef> {
        self.covariates.iter().chain(self.filter.iter().filter_map(|c| match c {
            FilterCondition::Compare { field, .. } => Some(field),
            _ => None,
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// Development-year covariate-shift weights.
    #[default]
    CovariateShift,
    Unit,
}

fn one() -> u32 {
    1
}

/// A complete model configuration, as read from a model JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: Vec<LayerSpec>,
    /// 1 models every development year; 2 treats year 1 as known
    /// information and exposes it through `payment_dev1` / `size_dev1`.
    #[serde(default = "one")]
    pub first_modeled_year: u32,
    #[serde(default)]
    pub weights: WeightMode,
    /// Keep claim-years after settlement in training and simulate settled
    /// claims (used by aggregate-equivalent models without a close layer).
    #[serde(default)]
    pub include_settled: bool,
}

impl ModelConfig {
    pub fn new(layers: Vec<LayerSpec>) -> Self {
        Self { layers, first_modeled_year: 1, weights: WeightMode::CovariateShift, include_settled: false }
    }

    /// Three-layer settlement / payment / size model with GLM engines.
    pub fn three_layer(close: Vec<FeatureRef>, payment: Vec<FeatureRef>, size: Vec<FeatureRef>) -> Self {
        Self::new(vec![
            LayerSpec {
                name: "close".into(),
                order: 1,
                response: Response::Close,
                family: Family::Bernoulli,
                engine: EngineConfig::glm(),
                covariates: close,
                filter: vec![FilterCondition::Open, FilterCondition::BeforeMaxDelay],
            },
            LayerSpec {
                name: "payment".into(),
                order: 2,
                response: Response::Payment,
                family: Family::Bernoulli,
                engine: EngineConfig::glm(),
                covariates: payment,
                filter: vec![FilterCondition::Open],
            },
            LayerSpec {
                name: "size".into(),
                order: 3,
                response: Response::Size,
                family: Family::Gamma,
                engine: EngineConfig::glm(),
                covariates: size,
                filter: vec![FilterCondition::Open, FilterCondition::payment_made()],
            },
        ])
    }

    pub fn with_engine(mut self, engine: EngineConfig) -> Self {
        for l in &mut self.layers {
            l.engine = engine;
        }
        self
    }

    /// Layers sorted by order.
    pub fn ordered(&self) -> Vec<&LayerSpec> {
        let mut v: Vec<&LayerSpec> = self.layers.iter().collect();
        v.sort_by_key(|l| l.order);
        v
    }

    pub fn layer_for(&self, response: Response) -> Option<&LayerSpec> {
        self.layers.iter().find(|l| l.response == response)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("model has no layers".into()));
        }
        if !(1..=2).contains(&self.first_modeled_year) {
            return Err(Error::Config(format!("first_modeled_year must be 1 or 2, got {}", self.first_modeled_year)));
        }
        let layers = self.ordered();
        for (i, l) in layers.iter().enumerate() {
            if l.order != i + 1 {
                return Err(Error::Config(format!(
                    "layer orders must be 1..={} without gaps; found {} at position {}",
                    layers.len(),
                    l.order,
                    i + 1
                )));
            }
            if layers[..i].iter().any(|o| o.response == l.response) {
                return Err(Error::Config(format!("response {:?} modelled by two layers", l.response)));
            }
            let family_ok = match l.response {
                Response::Close | Response::Payment => l.family == Family::Bernoulli,
                Response::Size => l.family != Family::Bernoulli,
            };
            if !family_ok {
                return Err(Error::Config(format!("layer `{}`: family {:?} unsuitable", l.name, l.family)));
            }
            for f in l.referenced() {
                if f.uses_dev1() && self.first_modeled_year != 2 {
                    return Err(Error::Config(format!(
                        "layer `{}`: `{f}` needs first_modeled_year = 2",
                        l.name
                    )));
                }
                for current in f.current_outcomes() {
                    let lower = layers[..i].iter().any(|o| o.response.feature() == current);
                    if !lower {
                        return Err(Error::Config(format!(
                            "layer `{}` references current-year `{current}`, which is not a lower layer",
                            l.name
                        )));
                    }
                }
            }
        }
        if self.layer_for(Response::Payment).is_some() && self.layer_for(Response::Size).is_none() {
            return Err(Error::Config("a payment layer needs a size layer".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_three_layer_is_valid() {
        let cfg = ModelConfig::three_layer(vec![FeatureRef::DevYear], vec![FeatureRef::Close], vec![FeatureRef::Close]);
        cfg.validate().unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ModelConfig>(&json).unwrap(), cfg);
    }

    #[test]
    fn rejects_upward_references() {
        let cfg = ModelConfig::three_layer(vec![FeatureRef::Payment], vec![], vec![]);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = ModelConfig::three_layer(vec![], vec![], vec![]);
        cfg.layers[2].order = 4;
        assert!(cfg.validate().is_err());
        let cfg = ModelConfig::three_layer(vec![FeatureRef::PaymentDev1], vec![], vec![]);
        assert!(cfg.validate().is_err());
    }
}

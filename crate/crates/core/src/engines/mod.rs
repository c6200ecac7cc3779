//! Per-layer regression engines: weighted GLMs and gradient-boosted trees,
//! plus covariate selection.

pub mod encode;
pub mod gbm;
pub mod glm;
pub mod select;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::density::{Family, ResponseDistribution};
use crate::error::{Error, Result};
use crate::features::{FeatureRef, FeatureRow};

pub use encode::{DesignEncoder, TreeEncoder};
pub use gbm::{fit_gbm, gbm_importance, GbmData, GbmFit, GbmLoss, GbmParams};
pub use glm::{fit_gamma, fit_glm, fit_logistic, fit_poisson, Design, GlmFit, GlmOptions};
pub use select::{forward_select, SelectionResult};

/// A fitted conditional model for one layer.
pub trait LayerEngine: Send + Sync + fmt::Debug {
    /// Mean of the layer response (probability for Bernoulli layers).
    fn predict(&self, row: &FeatureRow<'_>) -> Result<f64>;
    fn distribution(&self) -> ResponseDistribution;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    #[default]
    Glm,
    Gbm,
}

/// Engine choice with its settings.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub kind: EngineKind,
    pub glm: GlmOptions,
    pub gbm: GbmParams,
}

impl EngineConfig {
    pub fn glm() -> Self {
        Self::default()
    }

    pub fn gbm(params: GbmParams) -> Self {
        Self { kind: EngineKind::Gbm, gbm: params, ..Self::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "snake_case")]
pub enum LayerFit {
    Glm {
        encoder: DesignEncoder,
        fit: GlmFit,
    },
    Gbm {
        encoder: TreeEncoder,
        fit: GbmFit,
    },
    /// User-supplied engine; not serializable.
    #[serde(skip)]
    Custom(Arc<dyn LayerEngine>),
}

impl PartialEq for LayerFit {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (LayerFit::Glm { encoder: a, fit: b }, LayerFit::Glm { encoder: c, fit: d }) => a == c && b == d,
            (LayerFit::Gbm { encoder: a, fit: b }, LayerFit::Gbm { encoder: c, fit: d }) => a == c && b == d,
            (LayerFit::Custom(a), LayerFit::Custom(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl LayerEngine for LayerFit {
    fn predict(&self, row: &FeatureRow<'_>) -> Result<f64> {
        match self {
            LayerFit::Glm { encoder, fit } => Ok(fit.predict(&encoder.encode(row)?)),
            LayerFit::Gbm { encoder, fit } => Ok(fit.predict(&encoder.encode(row)?)),
            LayerFit::Custom(engine) => engine.predict(row),
        }
    }

    fn distribution(&self) -> ResponseDistribution {
        match self {
            LayerFit::Glm { fit, .. } => fit.distribution(),
            LayerFit::Gbm { fit, .. } => match fit.loss {
                GbmLoss::Bernoulli => ResponseDistribution::bernoulli(),
                GbmLoss::Gamma => ResponseDistribution::gamma(fit_dispersion(fit)),
            },
            LayerFit::Custom(engine) => engine.distribution(),
        }
    }
}

fn fit_dispersion(fit: &GbmFit) -> f64 {
    fit.dispersion.unwrap_or(1.0)
}

impl LayerFit {
    pub fn glm_fit(&self) -> Option<&GlmFit> {
        match self {
            LayerFit::Glm { fit, .. } => Some(fit),
            _ => None,
        }
    }

    pub fn gbm_fit(&self) -> Option<&GbmFit> {
        match self {
            LayerFit::Gbm { fit, .. } => Some(fit),
            _ => None,
        }
    }
}

/// Fit one engine on `rows` with responses `y` and observation weights `w`.
pub fn fit_engine(
    family: Family,
    covariates: &[FeatureRef],
    rows: &[FeatureRow<'_>],
    y: &[f64],
    w: &[f64],
    config: &EngineConfig,
    seed: u64,
) -> Result<LayerFit> {
    if rows.is_empty() {
        return Err(Error::Input("no training rows".into()));
    }
    match config.kind {
        EngineKind::Glm => {
            let encoder = DesignEncoder::build(covariates, rows)?;
            let design = encoder.design(rows)?;
            let fit = fit_glm(family, &design, y, w, &config.glm)?;
            Ok(LayerFit::Glm { encoder, fit })
        }
        EngineKind::Gbm => {
            let loss = GbmLoss::from_family(family)?;
            let encoder = TreeEncoder::build(covariates, rows)?;
            let data = encoder.data(rows)?;
            let mut fit = fit_gbm(&data, y, loss, w, &config.gbm, seed)?;
            if loss == GbmLoss::Gamma {
                fit.dispersion = Some(gbm::pearson_dispersion(&fit, &data, y, w));
            }
            Ok(LayerFit::Gbm { encoder, fit })
        }
    }
}

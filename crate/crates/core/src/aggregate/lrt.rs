use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::Portfolio;
use crate::density::Family;
use crate::engines::{fit_engine, EngineKind, LayerEngine, LayerFit};
use crate::error::{Error, Result};
use crate::features::{FeatureRef, FeatureRow};
use crate::model::{layer_observations, ModelConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrtResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Likelihood ratio test of a reduced model nested in a full one.
pub fn lrt_bridge(full_loglik: f64, reduced_loglik: f64, dof: usize) -> Result<LrtResult> {
    if dof == 0 {
        return Err(Error::Input("likelihood ratio test needs at least one degree of freedom".into()));
    }
    let mut statistic = 2.0 * (full_loglik - reduced_loglik);
    let tolerance = 1e-6 * full_loglik.abs().max(reduced_loglik.abs()).max(1.0);
    if statistic < -tolerance {
        return Err(Error::Nesting(statistic));
    }
    statistic = statistic.max(0.0);
    let chi = ChiSquared::new(dof as f64).map_err(|e| Error::Input(format!("chi-square({dof}): {e}")))?;
    Ok(LrtResult { statistic, dof, p_value: chi.sf(statistic) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTest {
    pub layer: String,
    pub full_loglik: f64,
    pub reduced_loglik: f64,
    pub test: LrtResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeTest {
    pub layers: Vec<LayerTest>,
    /// Sum of the per-layer statistics against the summed degrees of freedom.
    pub joint: LrtResult,
}

impl BridgeTest {
    pub fn rejects(&self, level: f64) -> bool {
        self.joint.p_value < level
    }
}

fn effective_columns(fit: &LayerFit) -> usize {
    fit.glm_fit().map_or(0, |g| g.columns.len() - g.aliased.len())
}

fn loglik(fit: &LayerFit, rows: &[FeatureRow<'_>], y: &[f64], dispersion: Option<f64>) -> Result<f64> {
    let mut dist = fit.distribution();
    if let Some(theta) = dispersion {
        dist.dispersion = theta;
    }
    let mut total = 0.0;
    for (row, &v) in rows.iter().zip(y) {
        total += dist.log_density(v, fit.predict(row)?)?;
    }
    Ok(total)
}

/// Test, layer by layer, whether the covariates of `config` improve on the
/// multiplicative model with reporting-year and development-year effects
/// only. Each layer is fitted twice with GLM engines and unit weights;
/// gamma layers evaluate both fits at the full model's dispersion. Layers
/// without further covariates are left out of the joint test.
pub fn bridge_test(portfolio: &Portfolio, config: &ModelConfig) -> Result<BridgeTest> {
    config.validate()?;
    let base = [FeatureRef::ReportingYear, FeatureRef::DevYear];
    let mut layers = Vec::new();
    for layer in config.ordered() {
        if layer.engine.kind != EngineKind::Glm {
            return Err(Error::Config(format!("bridge test needs GLM engines; layer `{}` is not", layer.name)));
        }
        let obs = layer_observations(config, layer, portfolio)?;
        if obs.is_empty() {
            return Err(Error::Fitting { layer: layer.name.clone(), message: "no observations".into() });
        }
        let rows: Vec<FeatureRow<'_>> = obs.iter().map(|o| o.row).collect();
        let y: Vec<f64> = obs.iter().map(|o| o.y).collect();
        let w = vec![1.0; y.len()];
        let mut full_covariates = base.to_vec();
        for c in &layer.covariates {
            if !full_covariates.contains(c) {
                full_covariates.push(c.clone());
            }
        }
        let fitting = |e: Error| Error::Fitting { layer: layer.name.clone(), message: e.to_string() };
        let reduced = fit_engine(layer.family, &base, &rows, &y, &w, &layer.engine, 0).map_err(fitting)?;
        let full = fit_engine(layer.family, &full_covariates, &rows, &y, &w, &layer.engine, 0).map_err(fitting)?;
        let theta = (layer.family == Family::Gamma).then(|| full.distribution().dispersion);
        let full_ll = loglik(&full, &rows, &y, theta)?;
        let reduced_ll = loglik(&reduced, &rows, &y, theta)?;
        let dof = effective_columns(&full).saturating_sub(effective_columns(&reduced));
        if dof == 0 {
            continue;
        }
        let test = lrt_bridge(full_ll, reduced_ll, dof)?;
        layers.push(LayerTest { layer: layer.name.clone(), full_loglik: full_ll, reduced_loglik: reduced_ll, test });
    }
    if layers.is_empty() {
        return Err(Error::Config("no layer adds covariates beyond reporting and development year".into()));
    }
    let statistic: f64 = layers.iter().map(|l| l.test.statistic).sum();
    let dof: usize = layers.iter().map(|l| l.test.dof).sum();
    let chi = ChiSquared::new(dof as f64).map_err(|e| Error::Input(e.to_string()))?;
    let joint = LrtResult { statistic, dof, p_value: chi.sf(statistic) };
    Ok(BridgeTest { layers, joint })
}

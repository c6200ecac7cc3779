//! Hierarchical reserving models: layer specifications, sequential fitting,
//! simulation of future development and reserve summaries.

mod reserve;
mod simulate;
mod spec;

pub use reserve::{empirical_quantile, expected_reserve, rbns_reserve, FutureYear, ReserveReport};
pub use simulate::{simulate_paths, SimulatedPath, SimulatedRecord};
pub use spec::{CmpOp, FilterCondition, LayerSpec, ModelConfig, Response, WeightMode};

use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ObservationWindow, Portfolio};
use crate::engines::select::{forward_select, CvData, SelectionResult};
use crate::engines::{fit_engine, LayerEngine, LayerFit};
use crate::error::{Error, Result};
use crate::features::{FeatureRef, FeatureRow, PartialOutcome};
use crate::weights::{assign_folds, development_year_weights, FoldScheme, WeightVector};

/// One training observation of a layer.
#[derive(Debug, Clone, Copy)]
pub struct LayerObservation<'a> {
    pub row: FeatureRow<'a>,
    pub y: f64,
}

impl LayerObservation<'_> {
    pub fn dev_year(&self) -> u32 {
        self.row.dev_year
    }
}

/// Weights configured by `config` for `portfolio`.
pub fn model_weights(config: &ModelConfig, portfolio: &Portfolio) -> Result<WeightVector> {
    match config.weights {
        WeightMode::Unit => Ok(WeightVector::unit(portfolio.window.d)),
        WeightMode::CovariateShift => development_year_weights(&portfolio.reported_counts, portfolio.window.d),
    }
}

/// Claim-years of `portfolio` that enter layer `layer`, with the realized
/// outcomes of lower layers attached as current-year covariates.
pub fn layer_observations<'a>(
    config: &ModelConfig,
    layer: &LayerSpec,
    portfolio: &'a Portfolio,
) -> Result<Vec<LayerObservation<'a>>> {
    let lower: Vec<Response> =
        config.layers.iter().filter(|l| l.order < layer.order).map(|l| l.response).collect();
    let d = portfolio.window.d;
    let mut out = Vec::new();
    for claim in &portfolio.claims {
        let last = if config.include_settled { claim.observed_years } else { claim.last_observed_year() };
        let settled = claim.settlement_year();
        let mut history = crate::data::History::default();
        for j in 1..=last {
            let outcome = claim.outcome(j);
            if j >= config.first_modeled_year {
                let mut current = PartialOutcome::default();
                for r in &lower {
                    match r {
                        Response::Close => current.close = Some(outcome.close),
                        Response::Payment => current.payment = Some(outcome.payment),
                        Response::Size => current.size = Some(outcome.size),
                    }
                }
                let row = FeatureRow::new(claim, j, history, current);
                let open = settled.is_none_or(|s| j <= s);
                if layer.includes(&row, d, open)? {
                    out.push(LayerObservation { row, y: layer.response.value(&outcome) });
                }
            }
            history = history.advance(j, &outcome);
        }
    }
    Ok(out)
}

fn observation_weights(obs: &[LayerObservation<'_>], weights: &WeightVector) -> Result<Vec<f64>> {
    obs.iter().map(|o| weights.get(o.dev_year())).collect()
}

/// A hierarchical model with one fitted engine per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalModel {
    /// Configuration with layers sorted by order.
    pub config: ModelConfig,
    pub window: ObservationWindow,
    pub weights: WeightVector,
    /// Fitted engine per layer, aligned with `config.layers`.
    pub fits: Vec<Option<LayerFit>>,
    /// Number of training observations per layer.
    pub n_observations: Vec<usize>,
}

const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format_version: u32,
    model: HierarchicalModel,
}

impl HierarchicalModel {
    /// Model with no fitted layers.
    pub fn unfitted(mut config: ModelConfig, window: ObservationWindow) -> Result<Self> {
        config.validate()?;
        config.layers.sort_by_key(|l| l.order);
        let s = config.layers.len();
        Ok(Self { config, window, weights: WeightVector::unit(window.d), fits: vec![None; s], n_observations: vec![0; s] })
    }

    /// Replace the engine of the layer with the given order.
    pub fn set_engine(&mut self, order: usize, engine: Arc<dyn LayerEngine>) -> Result<()> {
        let slot = self
            .fits
            .get_mut(order.wrapping_sub(1))
            .ok_or_else(|| Error::Config(format!("no layer with order {order}")))?;
        *slot = Some(LayerFit::Custom(engine));
        Ok(())
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.config.layers
    }

    pub fn fit(&self, index: usize) -> Result<&LayerFit> {
        self.fits.get(index).and_then(|f| f.as_ref()).ok_or_else(|| {
            Error::State(format!(
                "layer `{}` is not fitted",
                self.config.layers.get(index).map_or("?", |l| l.name.as_str())
            ))
        })
    }

    pub fn is_fitted(&self) -> bool {
        self.fits.iter().all(|f| f.is_some())
    }

    /// Weighted log-likelihood of layer `index` on `portfolio`.
    pub fn layer_loglik(&self, portfolio: &Portfolio, index: usize, weights: &WeightVector) -> Result<f64> {
        let engine = self.fit(index)?;
        let layer = &self.config.layers[index];
        let obs = layer_observations(&self.config, layer, portfolio)?;
        let dist = engine.distribution();
        let mut total = 0.0;
        for o in &obs {
            let w = weights.get(o.dev_year())?;
            if w != 0.0 {
                total += w * dist.log_density(o.y, engine.predict(&o.row)?)?;
            }
        }
        Ok(total)
    }

    /// Sum of the per-layer weighted log-likelihoods.
    pub fn weighted_loglik(&self, portfolio: &Portfolio, weights: &WeightVector) -> Result<f64> {
        (0..self.config.layers.len()).map(|i| self.layer_loglik(portfolio, i, weights)).sum()
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        if self.fits.iter().any(|f| matches!(f, Some(LayerFit::Custom(_)))) {
            return Err(Error::State("models with custom engines cannot be saved".into()));
        }
        let doc = ModelDocument { format_version: FORMAT_VERSION, model: self.clone() };
        serde_json::to_writer_pretty(writer, &doc)?;
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_reader(reader)?;
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!("unsupported model format version {}", doc.format_version)));
        }
        Ok(doc.model)
    }
}

/// Fit every layer on the observations passing its filter.
pub fn fit_hrm(portfolio: &Portfolio, config: &ModelConfig, weights: &WeightVector, seed: u64) -> Result<HierarchicalModel> {
    let mut model = HierarchicalModel::unfitted(config.clone(), portfolio.window)?;
    model.weights = weights.clone();
    let results: Vec<Result<(LayerFit, usize)>> = model
        .config
        .layers
        .par_iter()
        .map(|layer| {
            let fitting = |message: String| Error::Fitting { layer: layer.name.clone(), message };
            let obs = layer_observations(&model.config, layer, portfolio)?;
            if obs.is_empty() {
                return Err(fitting(format!("no training observations pass the filter {:?}", layer.filter)));
            }
            let rows: Vec<FeatureRow<'_>> = obs.iter().map(|o| o.row).collect();
            let y: Vec<f64> = obs.iter().map(|o| o.y).collect();
            let w = observation_weights(&obs, weights)?;
            let fit = fit_engine(layer.family, &layer.covariates, &rows, &y, &w, &layer.engine, seed ^ layer.order as u64)
                .map_err(|e| fitting(e.to_string()))?;
            Ok((fit, obs.len()))
        })
        .collect();
    for (i, r) in results.into_iter().enumerate() {
        let (fit, n) = r?;
        model.fits[i] = Some(fit);
        model.n_observations[i] = n;
    }
    Ok(model)
}

/// Forward selection of covariates for the layer with order `order`,
/// starting from `base` (the spec's own covariate list is ignored).
#[allow(clippy::too_many_arguments)]
pub fn select_covariates(
    portfolio: &Portfolio,
    config: &ModelConfig,
    order: usize,
    base: &[FeatureRef],
    candidates: &[FeatureRef],
    k: usize,
    weights: &WeightVector,
    seed: u64,
    scheme: FoldScheme,
) -> Result<SelectionResult> {
    let layer = config
        .layers
        .iter()
        .find(|l| l.order == order)
        .ok_or_else(|| Error::Config(format!("no layer with order {order}")))?;
    let obs = layer_observations(config, layer, portfolio)?;
    let rows: Vec<FeatureRow<'_>> = obs.iter().map(|o| o.row).collect();
    let y: Vec<f64> = obs.iter().map(|o| o.y).collect();
    let w = observation_weights(&obs, weights)?;
    let years: Vec<u32> = obs.iter().map(|o| o.dev_year()).collect();
    let folds = assign_folds(&years, k, seed, scheme)?;
    let data = CvData { rows: &rows, y: &y, w: &w, folds: &folds, k };
    forward_select(layer.family, base, candidates, &data, &layer.engine, seed)
}

//! Greedy forward covariate selection on the cross-validated weighted
//! log-likelihood.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_engine, EngineConfig, LayerEngine};
use crate::density::Family;
use crate::error::{Error, Result};
use crate::features::{FeatureRef, FeatureRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Selected covariates in the order they were added.
    pub selected: Vec<FeatureRef>,
    /// Hold-out log-likelihood gain of each step, aligned with `selected`.
    pub gains: Vec<f64>,
    /// Gains rescaled to sum to 100; empty when nothing was selected.
    pub importance: Vec<(String, f64)>,
    /// Hold-out weighted log-likelihood of the starting covariate set.
    pub baseline: f64,
    /// Hold-out weighted log-likelihood after the last step.
    pub score: f64,
}

/// Observations of one layer with per-row weights and fold labels.
pub struct CvData<'r, 'a> {
    pub rows: &'r [FeatureRow<'a>],
    pub y: &'r [f64],
    pub w: &'r [f64],
    /// Fold labels `1..=k`.
    pub folds: &'r [usize],
    pub k: usize,
}

/// Sum over folds of the weighted hold-out log-likelihood of a model fitted
/// on the other folds. Any failed fold fit scores `-inf`.
pub fn cross_validated_loglik(
    family: Family,
    covariates: &[FeatureRef],
    data: &CvData<'_, '_>,
    config: &EngineConfig,
    seed: u64,
) -> f64 {
    let per_fold: Vec<f64> = (1..=data.k)
        .into_par_iter()
        .map(|fold| fold_loglik(family, covariates, data, config, seed, fold).unwrap_or(f64::NEG_INFINITY))
        .collect();
    per_fold.iter().sum()
}

fn fold_loglik(
    family: Family,
    covariates: &[FeatureRef],
    data: &CvData<'_, '_>,
    config: &EngineConfig,
    seed: u64,
    fold: usize,
) -> Result<f64> {
    let (train, test): (Vec<usize>, Vec<usize>) = (0..data.rows.len()).partition(|&i| data.folds[i] != fold);
    let pick = |idx: &[usize], v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let rows: Vec<FeatureRow<'_>> = train.iter().map(|&i| data.rows[i]).collect();
    let engine = fit_engine(family, covariates, &rows, &pick(&train, data.y), &pick(&train, data.w), config, seed)?;
    let dist = engine.distribution();
    let mut total = 0.0;
    for &i in &test {
        if data.w[i] != 0.0 {
            total += data.w[i] * dist.log_density(data.y[i], engine.predict(&data.rows[i])?)?;
        }
    }
    Ok(total)
}

/// Greedily add the candidate with the largest hold-out log-likelihood,
/// stopping when no candidate gives a strictly positive gain.
pub fn forward_select(
    family: Family,
    base: &[FeatureRef],
    candidates: &[FeatureRef],
    data: &CvData<'_, '_>,
    config: &EngineConfig,
    seed: u64,
) -> Result<SelectionResult> {
    if candidates.is_empty() {
        return Err(Error::Config("forward selection needs at least one candidate".into()));
    }
    let mut current: Vec<FeatureRef> = base.to_vec();
    let baseline = cross_validated_loglik(family, &current, data, config, seed);
    let mut score = baseline;
    let mut remaining: Vec<FeatureRef> = candidates.iter().filter(|c| !base.contains(c)).cloned().collect();
    let mut selected = Vec::new();
    let mut gains = Vec::new();
    while !remaining.is_empty() {
        let scores: Vec<f64> = remaining
            .par_iter()
            .map(|c| {
                let mut set = current.clone();
                set.push(c.clone());
                cross_validated_loglik(family, &set, data, config, seed)
            })
            .collect();
        let mut best: Option<usize> = None;
        for (i, &s) in scores.iter().enumerate() {
            if s.is_finite() && best.is_none_or(|b| s > scores[b]) {
                best = Some(i);
            }
        }
        let Some(b) = best else { break };
        let gain = scores[b] - score;
        if !(gain > 0.0) {
            break;
        }
        log::debug!("selected `{}` with hold-out gain {gain}", remaining[b]);
        let chosen = remaining.remove(b);
        current.push(chosen.clone());
        selected.push(chosen);
        // A failing starting set has no finite baseline; count the step as
        // the magnitude of the first finite score.
        gains.push(if gain.is_finite() { gain } else { scores[b].abs().max(1.0) });
        score = scores[b];
    }
    let total: f64 = gains.iter().sum();
    let importance = selected.iter().zip(&gains).map(|(c, g)| (c.to_string(), 100.0 * g / total)).collect();
    Ok(SelectionResult { selected, gains, importance, baseline, score })
}

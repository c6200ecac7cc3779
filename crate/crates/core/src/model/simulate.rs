use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{HierarchicalModel, Response};
use crate::data::{Claim, History, Portfolio, YearOutcome};
use crate::density::{Family, ResponseDistribution};
use crate::engines::LayerEngine;
use crate::error::{Error, Result};
use crate::features::{FeatureRow, PartialOutcome};

/// A simulated future development year of one claim.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulatedRecord {
    /// Index of the claim in `Portfolio::claims`.
    pub claim_index: u32,
    pub dev_year: u32,
    pub close: bool,
    pub payment: bool,
    pub size: f64,
}

impl SimulatedRecord {
    pub fn outcome(&self) -> YearOutcome {
        YearOutcome { close: self.close, payment: self.payment, size: self.size }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedPath {
    pub path_id: u64,
    /// Records ordered by claim, then development year.
    pub records: Vec<SimulatedRecord>,
}

impl SimulatedPath {
    pub fn total_size(&self) -> f64 {
        self.records.iter().map(|r| r.size).sum()
    }
}

fn draw(dist: &ResponseDistribution, mean: f64, rng: &mut ChaCha8Rng) -> Result<f64> {
    match dist.family {
        Family::Bernoulli => Ok((rng.random::<f64>() < mean) as u8 as f64),
        Family::Gamma => {
            if dist.dispersion == 0.0 {
                return Ok(mean);
            }
            let (shape, scale) = dist.gamma_shape_scale(mean);
            let g = Gamma::new(shape, scale)
                .map_err(|e| Error::Evaluation(format!("gamma(mean {mean}, dispersion {}): {e}", dist.dispersion)))?;
            Ok(g.sample(rng))
        }
        Family::Poisson => {
            if mean <= 0.0 {
                return Ok(0.0);
            }
            let p = Poisson::new(mean).map_err(|e| Error::Evaluation(format!("Poisson({mean}): {e}")))?;
            Ok(p.sample(rng))
        }
    }
}

/// Whether `claim` has future development to simulate under `model`.
pub(crate) fn simulates(model: &HierarchicalModel, claim: &Claim) -> bool {
    claim.observed_years < model.window.d && (model.config.include_settled || !claim.is_settled())
}

/// Simulate the development of one claim from year `observed_years + 1`.
pub(crate) fn simulate_claim(
    model: &HierarchicalModel,
    engines: &[(&super::LayerSpec, &dyn LayerEngine)],
    claim: &Claim,
    claim_index: u32,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<SimulatedRecord>,
) -> Result<()> {
    let d = model.window.d;
    let start = claim.observed_years + 1;
    let mut history: History = claim.history_before(start);
    let open = !claim.is_settled();
    let has_close = engines.iter().any(|(l, _)| l.response == Response::Close);
    let has_payment = engines.iter().any(|(l, _)| l.response == Response::Payment);
    for j in start..=d {
        let mut current = PartialOutcome::default();
        for (layer, engine) in engines {
            if layer.response == Response::Close && j == d {
                current.close = Some(true);
                continue;
            }
            let row = FeatureRow::new(claim, j, history, current);
            let value = if layer.includes(&row, d, open)? {
                let mean = engine.predict(&row)?;
                draw(&engine.distribution(), mean, rng)?
            } else {
                0.0
            };
            match layer.response {
                Response::Close => current.close = Some(value > 0.5),
                Response::Payment => current.payment = Some(value > 0.5),
                Response::Size => current.size = Some(value),
            }
        }
        let close = if has_close { current.close.unwrap_or(j == d) } else { false };
        let size = current.size.unwrap_or(0.0);
        let payment = if has_payment { current.payment.unwrap_or(false) && size > 0.0 } else { size > 0.0 };
        let size = if payment { size } else { 0.0 };
        let record = SimulatedRecord { claim_index, dev_year: j, close, payment, size };
        history = history.advance(j, &record.outcome());
        out.push(record);
        if close {
            break;
        }
    }
    Ok(())
}

/// Simulate `n_paths` independent futures of every open claim.
///
/// Draws for path `p` and claim `k` come from their own random stream, so
/// results do not depend on the number of paths or on thread scheduling.
pub fn simulate_paths(
    model: &HierarchicalModel,
    portfolio: &Portfolio,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<SimulatedPath>> {
    if n_paths == 0 {
        return Err(Error::Input("need at least one simulation path".into()));
    }
    let engines: Vec<(&super::LayerSpec, &dyn LayerEngine)> = model
        .config
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| model.fit(i).map(|f| (l, f as &dyn LayerEngine)))
        .collect::<Result<_>>()?;
    if portfolio.window.d != model.window.d {
        return Err(Error::Config(format!(
            "portfolio has d = {} but the model was fitted with d = {}",
            portfolio.window.d, model.window.d
        )));
    }
    let active: Vec<u32> = (0..portfolio.claims.len() as u32)
        .filter(|&k| simulates(model, &portfolio.claims[k as usize]))
        .collect();
    (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut records = Vec::new();
            for &k in &active {
                let mut rng = crate::rng::substream(seed, p, k as u64);
                simulate_claim(model, &engines, &portfolio.claims[k as usize], k, &mut rng, &mut records)?;
            }
            Ok(SimulatedPath { path_id: p, records })
        })
        .collect()
}

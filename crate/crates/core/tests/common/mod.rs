#![allow(dead_code)]

use rbns_core::data::{Portfolio, SchemaConfig};
use rbns_core::features::FeatureRef;
use rbns_core::model::ModelConfig;
use rbns_core::synthetic::{generate, CovariateDistribution, CovariateSpec, Effect, GeneratorConfig, LayerTruth};

pub fn small_config(tau: u32, d: u32, per_year: usize, seed: u64) -> GeneratorConfig {
    let mut settlement = LayerTruth::constant([0.3, 0.4, 0.5, 0.6, 0.6][..d as usize].to_vec());
    settlement.effects.insert("type".into(), Effect::Levels([("B".to_string(), 0.4)].into()));
    let mut payment = LayerTruth::constant([0.7, 0.6, 0.5, 0.5, 0.5][..d as usize].to_vec());
    payment.close = 0.5;
    let mut size = LayerTruth::constant([1000.0, 1500.0, 1800.0, 2000.0, 2200.0][..d as usize].to_vec());
    size.effects.insert("type".into(), Effect::Levels([("B".to_string(), 0.3)].into()));
    size.effects.insert("x".into(), Effect::Slope(0.2));
    GeneratorConfig {
        start_year: 2011,
        tau,
        d,
        claims_per_year: vec![per_year; tau as usize],
        covariates: vec![
            CovariateSpec {
                name: "type".into(),
                distribution: CovariateDistribution::Categorical {
                    levels: vec!["A".into(), "B".into()],
                    probabilities: vec![0.6, 0.4],
                },
            },
            CovariateSpec { name: "x".into(), distribution: CovariateDistribution::Numeric { low: 0.0, high: 1.0 } },
        ],
        settlement,
        payment,
        size,
        dispersion: 0.5,
        multiplicative_only: false,
        shock: None,
        seed,
    }
}

pub fn portfolio(tau: u32, d: u32, per_year: usize, seed: u64) -> Portfolio {
    generate(&small_config(tau, d, per_year, seed)).unwrap()
}

pub fn schema(p: &Portfolio) -> SchemaConfig {
    SchemaConfig { window: Some(p.window), covariates: p.covariate_columns.clone(), ..Default::default() }
}

pub fn features(names: &[&str]) -> Vec<FeatureRef> {
    names.iter().map(|n| FeatureRef::parse(n).unwrap()).collect()
}

pub fn model() -> ModelConfig {
    ModelConfig::three_layer(
        features(&["dev_year", "type"]),
        features(&["dev_year", "close"]),
        features(&["dev_year", "type"]),
    )
}

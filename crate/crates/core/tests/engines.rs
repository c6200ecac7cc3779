use proptest::prelude::*;
use rbns_core::engines::gbm::FeatureKind;
use rbns_core::engines::{fit_gamma, fit_gbm, fit_logistic, fit_poisson, Design, GbmData, GbmLoss, GbmParams, GlmOptions};

fn weighted_mean(y: &[f64], w: &[f64]) -> f64 {
    y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn logistic_intercept_is_logit_of_mean(
        data in prop::collection::vec((any::<bool>(), 0.1f64..3.0), 4..60)
    ) {
        let y: Vec<f64> = data.iter().map(|(b, _)| *b as u8 as f64).collect();
        let w: Vec<f64> = data.iter().map(|(_, w)| *w).collect();
        let p = weighted_mean(&y, &w);
        prop_assume!(p > 0.0 && p < 1.0);
        let fit = fit_logistic(&Design::intercept(y.len()), &y, &w, &GlmOptions::default()).unwrap();
        prop_assert!((fit.coefficients[0] - (p / (1.0 - p)).ln()).abs() < 1e-8);
    }

    #[test]
    fn log_link_intercept_is_log_of_mean(
        data in prop::collection::vec((0.01f64..1e4, 0.1f64..3.0), 2..60)
    ) {
        let y: Vec<f64> = data.iter().map(|(y, _)| *y).collect();
        let w: Vec<f64> = data.iter().map(|(_, w)| *w).collect();
        let target = weighted_mean(&y, &w).ln();
        let design = Design::intercept(y.len());
        let gamma = fit_gamma(&design, &y, &w, &GlmOptions::default()).unwrap();
        prop_assert!((gamma.coefficients[0] - target).abs() < 1e-8);
        let poisson = fit_poisson(&design, &y, &w, &GlmOptions::default()).unwrap();
        prop_assert!((poisson.coefficients[0] - target).abs() < 1e-8);
    }
}

fn gbm_data(n: usize) -> (GbmData, Vec<f64>, Vec<f64>) {
    let x: Vec<f64> = (0..n).map(|i| (i % 17) as f64 / 17.0).collect();
    let g: Vec<f64> = (0..n).map(|i| (i % 3) as f64).collect();
    let noise: Vec<f64> = (0..n).map(|i| ((i * 7919) % 101) as f64 / 101.0).collect();
    let y_bin: Vec<f64> = (0..n).map(|i| (noise[i] < 0.2 + 0.5 * x[i] + 0.1 * g[i]) as u8 as f64).collect();
    let y_size: Vec<f64> = (0..n).map(|i| 100.0 * (1.0 + x[i] + g[i]) * (0.5 + noise[i])).collect();
    let data = GbmData::new(
        vec!["x".into(), "g".into()],
        vec![FeatureKind::Numeric, FeatureKind::Categorical { n_levels: 3 }],
        vec![x, g],
    )
    .unwrap();
    (data, y_bin, y_size)
}

#[test]
fn gbm_training_deviance_does_not_increase() {
    let (data, y_bin, y_size) = gbm_data(600);
    let w = vec![1.0; 600];
    let params = GbmParams { n_trees: 80, min_node_weight: 5.0, ..GbmParams::default() };
    for (loss, y) in [(GbmLoss::Bernoulli, &y_bin), (GbmLoss::Gamma, &y_size)] {
        let fit = fit_gbm(&data, y, loss, &w, &params, 11).unwrap();
        assert!(fit.trees.len() <= params.n_trees);
        assert!(fit.trees.iter().all(|t| t.depth() <= params.max_depth));
        let trace = &fit.deviance_trace;
        assert!(trace.windows(2).all(|p| p[1] <= p[0] + 1e-9 * p[0].abs()), "{loss:?}: {trace:?}");
        assert!(trace.last().unwrap() < &trace[0]);
        let again = fit_gbm(&data, y, loss, &w, &params, 11).unwrap();
        assert_eq!(again.deviance_trace, fit.deviance_trace);
    }
}

#[test]
fn gbm_importance_sums_to_100() {
    let (data, _, y_size) = gbm_data(400);
    let fit = fit_gbm(&data, &y_size, GbmLoss::Gamma, &vec![1.0; 400], &GbmParams::default(), 5).unwrap();
    let imp = fit.importance().unwrap();
    let total: f64 = imp.iter().map(|(_, v)| v).sum();
    assert!((total - 100.0).abs() < 1e-9);
    assert!(imp.iter().all(|(_, v)| *v >= 0.0));
}

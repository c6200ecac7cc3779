mod common;

use rbns_core::model::{fit_hrm, model_weights, rbns_reserve, simulate_paths};
use rbns_core::synthetic::generate;

#[test]
fn synthetic_draws_are_reproducible() {
    let config = common::small_config(4, 3, 50, 77);
    assert_eq!(generate(&config).unwrap(), generate(&config).unwrap());
    let other = common::small_config(4, 3, 50, 78);
    assert_ne!(generate(&config).unwrap(), generate(&other).unwrap());
}

#[test]
fn simulation_is_reproducible_and_path_count_independent() {
    let p = common::portfolio(5, 3, 120, 4);
    let config = common::model();
    let weights = model_weights(&config, &p).unwrap();
    let model = fit_hrm(&p, &config, &weights, 1).unwrap();
    let a = simulate_paths(&model, &p, 40, 123).unwrap();
    let b = simulate_paths(&model, &p, 40, 123).unwrap();
    assert_eq!(a, b);
    let short = simulate_paths(&model, &p, 15, 123).unwrap();
    assert_eq!(&a[..15], &short[..]);
    let other = simulate_paths(&model, &p, 15, 124).unwrap();
    assert_ne!(short, other);
}

#[test]
fn reserve_horizons_are_nested() {
    let p = common::portfolio(5, 3, 120, 4);
    let config = common::model();
    let weights = model_weights(&config, &p).unwrap();
    let model = fit_hrm(&p, &config, &weights, 1).unwrap();
    let paths = simulate_paths(&model, &p, 60, 8).unwrap();
    let one = rbns_reserve(&paths, &p, &[0.5], Some(1)).unwrap();
    let all = rbns_reserve(&paths, &p, &[0.5], None).unwrap();
    assert!(one.mean > 0.0);
    assert!(one.mean <= all.mean);
    for (x, y) in one.path_totals.iter().zip(&all.path_totals) {
        assert!(x <= y);
    }
    let sum: f64 = all.path_totals.iter().sum::<f64>() / all.path_totals.len() as f64;
    assert!((sum - all.mean).abs() <= 1e-9 * all.mean);
}

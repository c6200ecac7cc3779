use proptest::prelude::*;
use rbns_core::aggregate::{chain_ladder, lrt_bridge, mack_se, Triangle};
use rbns_core::Error;

fn rows(n: usize, values: &[f64]) -> Vec<Vec<f64>> {
    (0..n).map(|i| values[i * n..i * n + (n - i)].to_vec()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chain_ladder_scales_with_the_triangle(
        values in prop::collection::vec(1.0f64..1000.0, 16),
        c in 0.01f64..100.0,
    ) {
        let tri = Triangle::from_rows("size", &rows(4, &values), 4).unwrap();
        let a = chain_ladder(&tri).unwrap();
        let b = chain_ladder(&tri.scaled(c)).unwrap();
        for (x, y) in a.factors.iter().zip(&b.factors) {
            prop_assert!((x - y).abs() <= 1e-10 * x.abs());
        }
        prop_assert!((b.total_reserve - c * a.total_reserve).abs() <= 1e-9 * (c * a.total_reserve).abs());
    }

    #[test]
    fn proportional_rows_have_zero_mack_error(
        pattern in prop::collection::vec(1.0f64..500.0, 4),
        scale in prop::collection::vec(0.1f64..10.0, 4),
    ) {
        let full: Vec<f64> = scale.iter().flat_map(|s| pattern.iter().map(move |p| s * p)).collect();
        let tri = Triangle::from_rows("size", &rows(4, &full), 4).unwrap();
        let mack = mack_se(&tri).unwrap();
        prop_assert!(mack.total_se <= 1e-6 * mack.total_reserve);
        let expected: f64 = (1..4).map(|i| scale[i] * pattern[4 - i..].iter().sum::<f64>()).sum();
        prop_assert!((mack.total_reserve - expected).abs() <= 1e-9 * expected);
    }

    #[test]
    fn lrt_p_value_is_a_probability(full in -1e4f64..0.0, gap in 0.0f64..50.0, dof in 1usize..10) {
        let r = lrt_bridge(full, full - gap, dof).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.p_value));
        prop_assert!((r.statistic - 2.0 * gap).abs() <= 1e-9 * (1.0 + gap));
    }
}

#[test]
fn lrt_rejects_non_nested_fits() {
    assert!(matches!(lrt_bridge(-110.0, -100.0, 2), Err(Error::Nesting(_))));
    assert!(lrt_bridge(-100.0, -90.0, 0).is_err());
    let r = lrt_bridge(-100.0, -100.0 + 1e-9, 3).unwrap();
    assert_eq!(r.statistic, 0.0);
    assert_eq!(r.p_value, 1.0);
}

#[test]
fn ragged_csv_triangle() {
    let tri = Triangle::read_csv("size", "100,60,20\n110,70\n120\n".as_bytes()).unwrap();
    assert_eq!(tri.observed_len(0), 3);
    assert_eq!(tri.observed_len(2), 1);
    assert_eq!(tri.get(2, 1), None);
}

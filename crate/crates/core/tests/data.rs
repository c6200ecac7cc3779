mod common;

use proptest::prelude::*;
use rbns_core::data::{read_csv, write_csv};
use rbns_core::weights::development_year_weights;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn csv_round_trip(seed in any::<u64>(), tau in 2u32..5, per_year in 1usize..15) {
        let p = common::portfolio(tau, tau.min(3), per_year, seed);
        let mut bytes = Vec::new();
        write_csv(&p, &mut bytes).unwrap();
        let back = read_csv(bytes.as_slice(), &common::schema(&p)).unwrap();
        prop_assert_eq!(&back, &p);
        let mut again = Vec::new();
        write_csv(&back, &mut again).unwrap();
        prop_assert_eq!(again, bytes);
    }

    #[test]
    fn weights_increase_with_dev_year(counts in prop::collection::vec(1usize..500, 2..12)) {
        let d = counts.len() as u32;
        let w = development_year_weights(&counts, d).unwrap();
        prop_assert_eq!(w.get(1).unwrap(), 1.0);
        let tail: Vec<f64> = (2..=d).map(|j| w.get(j).unwrap()).collect();
        prop_assert!(tail.iter().all(|x| *x > 0.0));
        prop_assert!(tail.windows(2).all(|p| p[0] < p[1]));
    }
}

#[test]
fn equal_exposure_weights() {
    let w = development_year_weights(&[10, 10, 10, 10], 4).unwrap();
    let got: Vec<f64> = (1..=4).map(|j| w.get(j).unwrap()).collect();
    assert_eq!(got, vec![1.0, 1.0 / 3.0, 1.0, 3.0]);
}

#[test]
fn truncation_drops_future_calendar_years() {
    let p = common::portfolio(5, 3, 40, 9);
    let t = p.truncate(3).unwrap();
    assert_eq!(t.window.tau, 3);
    assert!(t.claims.iter().all(|c| c.reporting_year <= 3));
    for c in &t.claims {
        assert!(c.records.iter().all(|r| c.reporting_year + r.dev_year - 1 <= 3));
        let original = p.claim(&c.claim_id).unwrap();
        let kept: Vec<_> = original.records.iter().filter(|r| c.reporting_year + r.dev_year - 1 <= 3).collect();
        assert_eq!(c.records.iter().collect::<Vec<_>>(), kept);
    }
    assert!(p.truncate(0).is_err());
    assert!(p.truncate(6).is_err());
}

#[test]
fn shifted_calendar_moves_only_dates() {
    let p = common::portfolio(4, 3, 20, 3);
    let s = p.shift_calendar(5).unwrap();
    assert_eq!(s.window.start_year, p.window.start_year + 5);
    for (a, b) in p.records().zip(s.records()) {
        assert_eq!(a.calendar_year + 5, b.calendar_year);
        assert_eq!((a.dev_year, a.size), (b.dev_year, b.size));
    }
}

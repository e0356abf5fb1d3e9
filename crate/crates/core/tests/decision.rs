use fleet_core::decision::*;
use proptest::prelude::*;
use rand::{Rng, RngCore};

fn constant(y: f64) -> impl Fn(f64, &mut dyn RngCore) -> f64 + Sync {
    move |_x, _rng| y
}

#[test]
fn default_table() {
    let t = UtilityTable::default();
    let rows: Vec<(f64, f64, f64)> = t.levels.iter().map(|l| (l.threshold, l.payout, l.penalty)).collect();
    assert_eq!(rows, vec![(0.0, 0.0, 0.0), (0.5, 0.3, -0.3), (0.75, 0.75, -1.0)]);
    assert_eq!(WindPrior::default(), WindPrior::Beta { a: 4.0, b: 2.0 });
}

#[test]
fn certain_power_earns_the_payout() {
    let t = UtilityTable::default();
    let u = expected_utility(&constant(1.0), &WindPrior::default(), 2, &t, 100, 0).unwrap();
    assert_eq!(u.mean, 0.75);
    assert_eq!(u.se, 0.0);
}

#[test]
fn even_odds_at_the_middle_level_break_even() {
    let t = UtilityTable::default();
    // y below 0.5 exactly when the wind is below 0.5: probability 1/2 under a uniform prior.
    let sampler = |x: f64, _: &mut dyn RngCore| x;
    let wind = WindPrior::Beta { a: 1.0, b: 1.0 };
    let u = expected_utility(&sampler, &wind, 1, &t, 20_000, 1).unwrap();
    assert!(u.mean.abs() < 3.0 * u.se, "{} ± {}", u.mean, u.se);
}

#[test]
fn bottom_level_is_always_zero() {
    let t = UtilityTable::default();
    let sampler = |x: f64, rng: &mut dyn RngCore| x + rng.random_range(-1.0..1.0);
    let u = expected_utility(&sampler, &WindPrior::default(), 0, &t, 1000, 2).unwrap();
    assert_eq!(u.mean, 0.0);
}

#[test]
fn unknown_level_is_an_error() {
    let t = UtilityTable::default();
    assert!(expected_utility(&constant(1.0), &WindPrior::default(), 3, &t, 10, 0).is_err());
}

#[test]
fn argmax_with_low_tie_break() {
    assert_eq!(optimal_action(&[0.0, 0.246, 0.33]).unwrap(), 2);
    assert_eq!(optimal_action(&[0.1, 0.1, 0.1]).unwrap(), 0);
    assert_eq!(optimal_action(&[-4.0]).unwrap(), 0);
    assert_eq!(optimal_action(&[0.0, 0.2, 0.2]).unwrap(), 1);
    assert!(optimal_action(&[]).is_err());
}

#[test]
fn point_mass_wind_has_no_information_value() {
    let sampler = |x: f64, rng: &mut dyn RngCore| x + 0.2 * rng.random_range(-1.0..1.0);
    let r = vopi(&sampler, &WindPrior::Point { x: 0.6 }, &UtilityTable::default(), 200, 200, 3).unwrap();
    assert_eq!(r.vopi, 0.0);
    assert_eq!(r.preposterior, r.prior_optimal);
}

#[test]
fn two_outcome_toy_matches_enumeration() {
    // Low wind gives 0.4 (only L0 is safe); high wind gives 1.0 (L2 is safe).
    let sampler = |x: f64, _: &mut dyn RngCore| if x < 0.5 { 0.4 } else { 1.0 };
    let wind = WindPrior::Discrete {
        values: vec![0.2, 0.9],
        weights: vec![1.0, 1.0],
    };
    let t = UtilityTable::default();
    // Prior: L0 = 0, L1 = 0.5(0.3) + 0.5(-0.3) = 0, L2 = 0.5(0.75) + 0.5(-1) = -0.125.
    // Preposterior: 0.5(0) + 0.5(0.75) = 0.375.
    let r = vopi(&sampler, &wind, &t, 4000, 10, 4).unwrap();
    assert!((r.preposterior - 0.375).abs() < 3.0 * r.preposterior_se);
    assert!((r.vopi - 0.375).abs() < 3.0 * r.vopi_se, "{} ± {}", r.vopi, r.vopi_se);
    assert!(r.prior_optimal.abs() < 3.0 * r.vopi_se);
    assert!((r.prior_utilities[2] + 0.125).abs() < 3.0 * 1.75 * 0.5 / (4000f64).sqrt());
    let mut buf = Vec::new();
    r.write_measurements_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("x_m,level,utility\n"));
    assert_eq!(text.lines().count(), 4001);
}

fn doubled(t: &UtilityTable) -> UtilityTable {
    let mut d = t.clone();
    for l in d.levels.iter_mut() {
        l.payout *= 2.0;
        l.penalty *= 2.0;
    }
    d
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn information_never_hurts(seed in 0u64..10_000, a in 0.5f64..6.0, b in 0.5f64..6.0, noise in 0.0f64..0.5) {
        let sampler = move |x: f64, rng: &mut dyn RngCore| x.powi(3).min(1.0) + noise * rng.random_range(-1.0..1.0);
        let r = vopi(&sampler, &WindPrior::Beta { a, b }, &UtilityTable::default(), 100, 50, seed).unwrap();
        prop_assert!(r.vopi >= -3.0 * r.vopi_se);
        prop_assert!(r.preposterior >= r.prior_optimal - 3.0 * r.preposterior_se);
    }

    #[test]
    fn utility_is_linear_in_the_table(seed in 0u64..10_000, level in 0usize..3) {
        let sampler = |x: f64, rng: &mut dyn RngCore| x + 0.3 * rng.random_range(-1.0..1.0);
        let t = UtilityTable::default();
        let one = expected_utility(&sampler, &WindPrior::default(), level, &t, 300, seed).unwrap();
        let two = expected_utility(&sampler, &WindPrior::default(), level, &doubled(&t), 300, seed).unwrap();
        prop_assert_eq!(two.mean, 2.0 * one.mean);
    }

    #[test]
    fn argmax_ignores_a_common_shift(u in proptest::collection::vec(-5.0f64..5.0, 1..6), c in -10.0f64..10.0) {
        // Values on a dyadic grid so the shift is exact.
        let c = (c * 4.0).round() / 4.0;
        let q: Vec<f64> = u.iter().map(|v| (v * 8.0).round() / 8.0).collect();
        let qs: Vec<f64> = q.iter().map(|v| v + c).collect();
        prop_assert_eq!(optimal_action(&q).unwrap(), optimal_action(&qs).unwrap());
    }
}

use fleet_core::analysis::*;
use fleet_core::inference::PosteriorSamples;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn normal_samples(n: usize, scales: &[f64], seed: u64) -> PosteriorSamples {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<Vec<f64>> = (0..n)
        .map(|_| scales
                .iter()
                .map(|s| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    s * z
                })
                .collect())
        .collect();
    let labels: Vec<String> = (0..scales.len()).map(|i| format!("alpha2[{},1]", i + 1)).collect();
    PosteriorSamples::from_draws(labels, vec![draws]).unwrap()
}

#[test]
fn independent_draws_are_uncorrelated() {
    let s = normal_samples(8000, &[1.0, 2.0, 0.5, 3.0], 1);
    let c = posterior_corr(&s, "alpha2").unwrap();
    for i in 0..4 {
        assert_eq!(c.get(i, i), Some(1.0));
        for j in 0..4 {
            assert_eq!(c.get(i, j), c.get(j, i));
            if i != j {
                assert!(c.get(i, j).unwrap().abs() < 0.05);
            }
        }
    }
}

#[test]
fn constant_dimension_is_undefined() {
    let draws: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0, (i * i) as f64]).collect();
    let s = PosteriorSamples::from_draws(names(&["a[1]", "a[2]", "a[3]"]), vec![draws]).unwrap();
    let c = posterior_corr(&s, "a[*]").unwrap();
    for j in 0..3 {
        assert_eq!(c.get(1, j), None);
        assert_eq!(c.get(j, 1), None);
    }
    assert!(c.get(0, 2).unwrap() > 0.9);
    let mut buf = Vec::new();
    c.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("param_i,param_j,corr\n"));
    assert!(text.contains("a[1],a[2],\n"));
}

#[test]
fn selector_needs_two_parameters_and_three_draws() {
    let s = normal_samples(100, &[1.0, 1.0], 2);
    assert!(posterior_corr(&s, "alpha2[1,").is_err());
    let short = normal_samples(2, &[1.0, 1.0], 2);
    assert!(posterior_corr(&short, "alpha2").is_err());
}

#[test]
fn glob_selection() {
    assert!(name_matches("alpha2[*,1]", "alpha2[3,1]"));
    assert!(!name_matches("alpha2[*,1]", "alpha2[3,2]"));
    assert!(name_matches("alpha", "alpha1[1,1]"));
    assert!(!name_matches("beta", "alpha1[1,1]"));
    assert!(name_matches("*", "sigma"));
}

#[test]
fn reduction_arithmetic() {
    let s = normal_samples(500, &[1.0, 1.0], 3);
    let same = variance_reduction(&[("stl".into(), &s)], &s, "alpha2").unwrap();
    assert!(same.rows.iter().all(|r| r.reduction.abs() < 1e-12));

    let half = PosteriorSamples::from_draws(
        s.names().to_vec(),
        vec![(0..s.total_draws()).map(|i| s.draw(0, i).iter().map(|v| v / 2.0).collect()).collect()],
    )
    .unwrap();
    let r = variance_reduction(&[("stl".into(), &s)], &half, "alpha2").unwrap();
    for row in &r.rows {
        assert!((row.reduction - 50.0).abs() < 1e-9);
    }
    assert!((r.averages["alpha2"] - 50.0).abs() < 1e-9);
}

#[test]
fn missing_counterparts_are_listed() {
    let mtl = normal_samples(100, &[1.0, 1.0, 1.0], 4);
    let stl = normal_samples(100, &[1.0], 5);
    let r = variance_reduction(&[("task 1".into(), &stl)], &mtl, "alpha2").unwrap();
    assert_eq!(r.rows.len(), 1);
    assert_eq!(r.missing, names(&["alpha2[2,1]", "alpha2[3,1]"]));
}

proptest! {
    #[test]
    fn reduction_is_antisymmetric(sa in 0.1f64..5.0, sb in 0.1f64..5.0, seed in 0u64..1000) {
        let a = normal_samples(50, &[sa], seed);
        let b = normal_samples(50, &[sb], seed + 1);
        let ab = variance_reduction(&[("a".into(), &a)], &b, "alpha2").unwrap().rows[0].reduction;
        let ba = variance_reduction(&[("b".into(), &b)], &a, "alpha2").unwrap().rows[0].reduction;
        prop_assert!(((1.0 - ab / 100.0) * (1.0 - ba / 100.0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn correlations_are_bounded(seed in 0u64..1000) {
        let s = normal_samples(20, &[1.0, 0.3, 2.0], seed);
        let c = posterior_corr(&s, "alpha2").unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v = c.get(i, j).unwrap();
                prop_assert!((-1.0..=1.0).contains(&v));
            }
        }
    }
}

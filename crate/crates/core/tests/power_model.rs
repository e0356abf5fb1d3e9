use fleet_core::dataset::{FleetDataset, Observation, TaskId};
use fleet_core::model::{FleetModel, TaskLayout};
use fleet_core::power::{second_slope, segmented_mean, PowerConfig, PowerModel, PowerParams};
use proptest::prelude::*;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

fn gauss(x: f64, m: f64, s: f64) -> f64 {
    -0.5 * LN_2PI - s.ln() - 0.5 * ((x - m) / s).powi(2)
}

fn inv_gamma(x: f64, a: f64, b: f64) -> f64 {
    a * b.ln() - statrs::function::gamma::ln_gamma(a) - (a + 1.0) * x.ln() - b / x
}

fn model() -> PowerModel {
    let layout = TaskLayout::new(vec![TaskId::new(1, 1), TaskId::new(2, 1), TaskId::new(2, 2)]).unwrap();
    PowerModel::new(layout, &PowerConfig::default()).unwrap()
}

/// Every parameter at its prior mean (modes for the inverse-gamma scales).
fn at_prior_means() -> PowerParams {
    PowerParams {
        p: 0.2,
        q: vec![0.4; 3],
        r: vec![0.6; 3],
        m1: vec![2.5; 3],
        pm: vec![1.0, 0.8],
        mu_p: 0.2,
        mu_q: 0.4,
        mu_r: 0.6,
        sigma_cp: 0.5,
        mu_m1: 2.5,
        sigma_m1: 0.5,
        sigma: 0.4,
    }
}

fn prior_oracle(p: &PowerParams) -> f64 {
    let mut lp = gauss(p.mu_p, 0.2, 0.5) + gauss(p.mu_q, 0.4, 0.5) + gauss(p.mu_r, 0.6, 0.5);
    lp += inv_gamma(p.sigma_cp, 1.0, 1.0) + gauss(p.mu_m1, 2.5, 0.5) + inv_gamma(p.sigma_m1, 1.0, 1.0);
    lp += gauss(p.p, p.mu_p, p.sigma_cp);
    for i in 0..p.q.len() {
        lp += gauss(p.q[i], p.mu_q, p.sigma_cp) + gauss(p.r[i], p.mu_r, p.sigma_cp) + gauss(p.m1[i], p.mu_m1, p.sigma_m1);
    }
    lp += gauss(p.pm[0], 1.0, 0.1) + gauss(p.pm[1], 0.8, 0.1);
    lp + inv_gamma(p.sigma, 3.0, 0.8)
}

#[test]
fn below_cut_in_is_zero() {
    assert_eq!(segmented_mean(0.2, 0.4, 0.6, 2.0, 1.0, 0.1), 0.0);
    assert_eq!(segmented_mean(0.2, 0.4, 0.6, 2.0, 1.0, -5.0), 0.0);
}

#[test]
fn rated_speed_gives_max_power() {
    let (p, q, r, m1, pm) = (0.2, 0.43, 0.61, 1.7, 0.93);
    assert_eq!(segmented_mean(p, q, r, m1, pm, r), pm);
    // The third segment reaches Pm at r by construction of m₂.
    let m2 = second_slope(p, q, r, m1, pm);
    assert!((m2 * (r - q) + m1 * (q - p) - pm).abs() < 1e-12);
}

#[test]
fn continuous_at_second_change_point() {
    let (p, q, r, m1, pm) = (0.2, 0.43, 0.61, 1.7, 0.93);
    let left = segmented_mean(p, q, r, m1, pm, q - 1e-9);
    let right = segmented_mean(p, q, r, m1, pm, q + 1e-9);
    let want = m1 * (q - p);
    assert!((left - want).abs() < 1e-6 * want);
    assert!((right - want).abs() < 1e-6 * want);
}

#[test]
fn ordering_violation_is_rejected() {
    let m = model();
    let mut p = at_prior_means();
    p.q[1] = 0.15;
    let theta = m.pack(&p).unwrap();
    assert_eq!(m.log_prior(&theta).unwrap(), f64::NEG_INFINITY);
    assert!(m.predict_mean(&theta, TaskId::new(2, 1), 0.5).is_err());
    let mut p = at_prior_means();
    p.r[2] = p.q[2];
    assert_eq!(m.log_prior(&m.pack(&p).unwrap()).unwrap(), f64::NEG_INFINITY);
}

#[test]
fn zero_scale_is_rejected() {
    let m = model();
    let mut p = at_prior_means();
    p.sigma_cp = 0.0;
    assert_eq!(m.log_prior(&m.pack(&p).unwrap()).unwrap(), f64::NEG_INFINITY);
    let mut p = at_prior_means();
    p.sigma_m1 = 0.0;
    assert_eq!(m.log_prior(&m.pack(&p).unwrap()).unwrap(), f64::NEG_INFINITY);
}

#[test]
fn prior_at_means_matches_oracle() {
    let m = model();
    let p = at_prior_means();
    let lp = m.log_prior(&m.pack(&p).unwrap()).unwrap();
    assert!(lp.is_finite());
    assert!((lp - prior_oracle(&p)).abs() < 1e-10);
}

#[test]
fn dimension_mismatch_is_an_error() {
    assert!(model().log_prior(&[0.1, 0.2]).is_err());
}

#[test]
fn likelihood_examples() {
    let m = model();
    let mut p = at_prior_means();
    p.sigma = 1.0;
    let theta = m.pack(&p).unwrap();
    let empty = FleetDataset::new(vec![]).unwrap();
    assert_eq!(m.log_likelihood(&theta, &empty).unwrap(), 0.0);

    let x = 0.5;
    let y = m.predict_mean(&theta, TaskId::new(2, 2), x).unwrap();
    let one = FleetDataset::new(vec![Observation { x, y, k: 2, l: 2 }]).unwrap();
    assert!((m.log_likelihood(&theta, &one).unwrap() - -0.918_938_533_204_672_7).abs() < 1e-12);

    let sigma = 0.3;
    p.sigma = sigma;
    let theta = m.pack(&p).unwrap();
    let flat: Vec<Observation> = (0..12)
        .map(|i| Observation {
            x: 0.01 * i as f64,
            y: 0.0,
            k: 1,
            l: 1,
        })
        .collect();
    let n = flat.len() as f64;
    let ll = m.log_likelihood(&theta, &FleetDataset::new(flat).unwrap()).unwrap();
    assert!((ll - n * gauss(0.0, 0.0, sigma)).abs() < 1e-10);

    let unknown = FleetDataset::new(vec![Observation { x, y, k: 3, l: 2 }]).unwrap();
    assert!(m.log_likelihood(&theta, &unknown).is_err());
}

#[test]
fn canonical_names() {
    let names = model().param_names();
    for n in ["p", "q[1,1]", "r[2,2]", "m1[2,1]", "Pm[1]", "Pm[2]", "mu_q", "mu_r", "mu_p", "sigma_cp", "mu_m1", "sigma_m1", "sigma"] {
        assert!(names.iter().any(|x| x == n), "missing {n}");
    }
}

proptest! {
    #[test]
    fn mean_is_continuous(
        p in 0.0f64..0.3, dq in 0.05f64..0.3, dr in 0.05f64..0.3,
        m1 in 0.0f64..4.0, pm in 0.3f64..1.2,
    ) {
        let (q, r) = (p + dq, p + dq + dr);
        for b in [p, q, r] {
            let lo = segmented_mean(p, q, r, m1, pm, b - 1e-9);
            let hi = segmented_mean(p, q, r, m1, pm, b + 1e-9);
            let scale = lo.abs().max(hi.abs()).max(1.0);
            // Slopes are bounded, so a 2e-9 step moves the mean by at most ~1e-7.
            prop_assert!((lo - hi).abs() <= 1e-6 * scale, "jump {} at {}", lo - hi, b);
        }
    }

    #[test]
    fn mean_is_monotone_with_nonnegative_slopes(
        p in 0.0f64..0.3, dq in 0.05f64..0.3, dr in 0.05f64..0.3,
        m1 in 0.0f64..3.0, pm in 0.3f64..1.2,
    ) {
        let (q, r) = (p + dq, p + dq + dr);
        prop_assume!(second_slope(p, q, r, m1, pm) >= 0.0);
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=1000 {
            let x = p + (r - p) * i as f64 / 1000.0;
            let v = segmented_mean(p, q, r, m1, pm, x);
            prop_assert!(v >= prev - 1e-12);
            prev = v;
        }
    }

    #[test]
    fn feasibility_matches_ordering(
        p in -0.5f64..1.0, q0 in -0.5f64..1.0, q1 in -0.5f64..1.0, q2 in -0.5f64..1.0,
        r0 in -0.5f64..1.0, r1 in -0.5f64..1.0, r2 in -0.5f64..1.0,
        scp in -0.1f64..1.0, sm1 in -0.1f64..1.0,
    ) {
        let m = model();
        let mut params = at_prior_means();
        params.p = p;
        params.q = vec![q0, q1, q2];
        params.r = vec![r0, r1, r2];
        params.sigma_cp = scp;
        params.sigma_m1 = sm1;
        let lp = m.log_prior(&m.pack(&params).unwrap()).unwrap();
        let ordered = (0..3).all(|i| p < params.q[i] && params.q[i] < params.r[i]);
        let feasible = ordered && scp > 0.0 && sm1 > 0.0;
        prop_assert_eq!(lp > f64::NEG_INFINITY, feasible);
        if feasible {
            prop_assert!(lp.is_finite());
        }
    }
}

#[test]
fn population_refuses_mostly_infeasible_hypers() {
    use fleet_core::inference::PosteriorSamples;
    use fleet_core::prediction::PopulationSampler;
    let m = model();
    let mut p = at_prior_means();
    // Fresh change points almost always come out reversed.
    p.mu_q = 0.8;
    p.mu_r = 0.3;
    p.sigma_cp = 0.01;
    let theta = m.pack(&p).unwrap();
    let s = PosteriorSamples::from_draws(m.param_names(), vec![vec![theta; 20]]).unwrap();
    assert!(PopulationSampler::new(&s, &m, 1, 0).is_err());

    let ok = m
        .pack(&PowerParams {
            sigma_cp: 0.05,
            ..at_prior_means()
        })
        .unwrap();
    let s = PosteriorSamples::from_draws(m.param_names(), vec![vec![ok; 20]]).unwrap();
    let pop = PopulationSampler::new(&s, &m, 1, 0).unwrap();
    assert!(pop.rejection_rate() < 0.5);
}

use fleet_core::benchmarks::fit_mtl;
use fleet_core::dataset::{presets, simulate_fleet, split_train_test, FleetDataset, Observation, SplitSpec, SyntheticScenario, TaskId};
use fleet_core::hazard::{HazardConfig, HazardModel, HazardParams};
use fleet_core::inference::{ChainConfig, PosteriorSamples};
use fleet_core::model::{FleetModel, ModelSpec, TaskLayout};
use fleet_core::prediction::*;
use fleet_core::stats::normal_logpdf;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn hazard_model(tasks: &[(usize, usize)]) -> HazardModel {
    let layout = TaskLayout::new(tasks.iter().map(|&(k, l)| TaskId::new(k, l)).collect()).unwrap();
    HazardModel::new(
        layout,
        &HazardConfig {
            n_basis: 3,
            x_range: Some((-2.0, 2.0)),
            ..Default::default()
        },
    )
    .unwrap()
}

fn params(k: usize, alpha: [f64; 2], sigma_alpha: [f64; 2], sigma: f64) -> HazardParams {
    HazardParams {
        alpha: vec![alpha; k],
        beta: vec![vec![0.1, -0.2, 0.3]],
        sigma_h: vec![vec![1.0; 3]],
        mu_alpha: alpha,
        sigma_alpha,
        sigma,
    }
}

/// Draws given explicitly: one chain.
fn samples(model: &HazardModel, thetas: Vec<Vec<f64>>) -> PosteriorSamples {
    PosteriorSamples::from_draws(model.param_names(), vec![thetas]).unwrap()
}

/// A small random posterior cloud around a base state.
fn cloud(model: &HazardModel, base: &HazardParams, n: usize, seed: u64) -> PosteriorSamples {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let thetas = (0..n)
        .map(|_| {
            let mut p = base.clone();
            for a in p.alpha.iter_mut() {
                a[0] += 0.2 * rng.sample::<f64, _>(StandardNormal);
                a[1] += 0.1 * rng.sample::<f64, _>(StandardNormal);
            }
            p.sigma *= (0.1 * rng.sample::<f64, _>(StandardNormal)).exp();
            model.pack(&p).unwrap()
        })
        .collect();
    samples(model, thetas)
}

#[test]
fn degenerate_posterior_has_noise_std() {
    let m = hazard_model(&[(1, 1)]);
    let theta = m.pack(&params(1, [0.3, 1.1], [0.5, 0.5], 0.37)).unwrap();
    let s = samples(&m, vec![theta; 50]);
    let c = posterior_predictive(&s, &m, TaskId::new(1, 1), &grid(-1.0, 1.0, 7), 1).unwrap();
    for sd in &c.std {
        assert!((sd - 0.37).abs() < 1e-12);
    }
}

#[test]
fn predictive_mean_is_mean_of_draw_means() {
    let m = hazard_model(&[(1, 1), (2, 1)]);
    let s = cloud(&m, &params(2, [0.1, 1.0], [0.5, 0.5], 0.3), 200, 2);
    let xs = grid(-1.5, 1.5, 9);
    let t = TaskId::new(2, 1);
    let c = posterior_predictive(&s, &m, t, &xs, 3).unwrap();
    for (i, &x) in xs.iter().enumerate() {
        let per_draw: Vec<f64> = s.iter_draws().map(|(th, _)| m.predict_mean(th, t, x).unwrap()).collect();
        let want = per_draw.iter().sum::<f64>() / per_draw.len() as f64;
        assert!((c.mean[i] - want).abs() < 1e-12);
    }
}

#[test]
fn predictive_matches_two_stage_simulation() {
    let m = hazard_model(&[(1, 1)]);
    let s = cloud(&m, &params(1, [0.1, 1.0], [0.5, 0.5], 0.3), 4000, 4);
    let t = TaskId::new(1, 1);
    let x = 0.7;
    let c = posterior_predictive(&s, &m, t, &[x], 5).unwrap();
    // Oracle: pick a draw at random, then add its noise.
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let draws: Vec<&[f64]> = s.iter_draws().map(|(d, _)| d).collect();
    let n = 40_000;
    let ys: Vec<f64> = (0..n)
        .map(|_| {
            let th = draws[rng.random_range(0..draws.len())];
            m.predict_mean(th, t, x).unwrap() + m.noise_sd(th) * rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    let om = ys.iter().sum::<f64>() / n as f64;
    let osd = (ys.iter().map(|y| (y - om).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let se_mean = osd / (n as f64).sqrt();
    let se_sd = osd / (2.0 * n as f64).sqrt();
    assert!((c.mean[0] - om).abs() < 3.0 * se_mean, "{} vs {om}", c.mean[0]);
    assert!((c.std[0] - osd).abs() < 3.0 * se_sd, "{} vs {osd}", c.std[0]);
    // Raw predictive draws carry the same spread.
    let raw = &c.draws[0];
    let rm = raw.iter().sum::<f64>() / raw.len() as f64;
    let rsd = (raw.iter().map(|y| (y - rm).powi(2)).sum::<f64>() / (raw.len() - 1) as f64).sqrt();
    assert!((rsd - osd).abs() < 3.0 * rsd / (2.0 * raw.len() as f64).sqrt() + 3.0 * se_sd);
}

#[test]
fn empty_samples_are_an_error() {
    let m = hazard_model(&[(1, 1)]);
    assert!(PosteriorSamples::from_draws(m.param_names(), vec![vec![]]).is_err());
}

#[test]
fn single_draw_score_is_the_gaussian_logpdf() {
    let m = hazard_model(&[(1, 1)]);
    let p = params(1, [0.3, 1.1], [0.5, 0.5], 0.4);
    let theta = m.pack(&p).unwrap();
    let s = samples(&m, vec![theta.clone()]);
    let obs = vec![
        Observation { x: 0.2, y: 0.9, k: 1, l: 1 },
        Observation { x: -1.0, y: -0.4, k: 1, l: 1 },
    ];
    let test = FleetDataset::new(obs.clone()).unwrap();
    let sc = predictive_log_likelihood(&s, &m, &test).unwrap();
    let want: f64 = obs
        .iter()
        .map(|o| normal_logpdf(o.y, m.predict_mean(&theta, o.task(), o.x).unwrap(), 0.4))
        .sum();
    assert!((sc.total - want).abs() < 1e-12);
}

#[test]
fn score_at_the_mode() {
    let m = hazard_model(&[(1, 1)]);
    let sigma: f64 = 0.25;
    let theta = m.pack(&params(1, [0.3, 1.1], [0.5, 0.5], sigma)).unwrap();
    let s = samples(&m, vec![theta.clone(); 10]);
    let x = 0.4;
    let y = m.predict_mean(&theta, TaskId::new(1, 1), x).unwrap();
    let test = FleetDataset::new(vec![Observation { x, y, k: 1, l: 1 }]).unwrap();
    let sc = predictive_log_likelihood(&s, &m, &test).unwrap();
    let want = -0.5 * (2.0 * std::f64::consts::PI * sigma * sigma).ln();
    assert!((sc.total - want).abs() < 1e-12);
}

#[test]
fn scores_ignore_test_order() {
    let m = hazard_model(&[(1, 1), (2, 1)]);
    let s = cloud(&m, &params(2, [0.1, 1.0], [0.5, 0.5], 0.3), 300, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut obs: Vec<Observation> = (0..40)
        .map(|i| Observation {
            x: rng.random_range(-1.5..1.5),
            y: rng.random_range(-2.0..2.0),
            k: 1 + i % 2,
            l: 1,
        })
        .collect();
    let a = predictive_log_likelihood(&s, &m, &FleetDataset::new(obs.clone()).unwrap()).unwrap();
    obs.reverse();
    obs.swap(3, 17);
    let b = predictive_log_likelihood(&s, &m, &FleetDataset::new(obs).unwrap()).unwrap();
    for (t, v) in &a.per_task {
        assert!((v - b.per_task[t]).abs() < 1e-9);
    }
    assert!((a.total - b.total).abs() < 1e-9);
}

#[test]
fn empty_test_set_scores_zero() {
    let m = hazard_model(&[(1, 1)]);
    let s = cloud(&m, &params(1, [0.1, 1.0], [0.5, 0.5], 0.3), 10, 9);
    let sc = predictive_log_likelihood(&s, &m, &FleetDataset::new(vec![]).unwrap()).unwrap();
    assert_eq!(sc.total, 0.0);
}

#[test]
fn tiny_densities_stay_finite() {
    let m = hazard_model(&[(1, 1)]);
    let s = cloud(&m, &params(1, [0.1, 1.0], [0.5, 0.5], 0.05), 100, 10);
    // Far enough out that every per-draw density underflows.
    let test = FleetDataset::new(vec![Observation { x: 0.0, y: 8.0, k: 1, l: 1 }]).unwrap();
    let sc = predictive_log_likelihood(&s, &m, &test).unwrap();
    assert!(sc.total.is_finite());
    assert!(sc.total < -690.0, "density should be below 1e-300, got log {}", sc.total);
}

fn small_fit() -> (Box<dyn FleetModel>, PosteriorSamples, FleetDataset, FleetDataset) {
    let sc = presets::tiny(11);
    let data = simulate_fleet(&sc).unwrap();
    let split = split_train_test(&data, &SplitSpec::random(0.75, 11)).unwrap();
    let spec = ModelSpec::Hazard(HazardConfig {
        n_basis: 3,
        x_range: Some(sc.x_range()),
        ..Default::default()
    });
    let chains = ChainConfig {
        n_chains: 2,
        burn_in: 500,
        n_samples: 500,
        seed: 11,
        ..Default::default()
    };
    let fit = fit_mtl(&split.train, &spec, &chains, None).unwrap();
    (fit.model, fit.samples, split.train, split.test)
}

#[test]
fn bootstrap_behaviour() {
    let (model, s, _, test) = small_fit();
    let plain = predictive_log_likelihood(&s, model.as_ref(), &test).unwrap();
    let identity = bootstrap_pll(
        &s,
        model.as_ref(),
        &test,
        &BootstrapConfig {
            trials: 1,
            seed: 0,
            resample: false,
        },
    )
    .unwrap();
    assert!((identity.total_mean - plain.total).abs() < 1e-12);
    for (t, v) in &plain.per_task {
        assert!((identity.mean[t] - v).abs() < 1e-12);
    }

    let cfg = BootstrapConfig {
        trials: 100,
        seed: 4,
        resample: true,
    };
    let a = bootstrap_pll(&s, model.as_ref(), &test, &cfg).unwrap();
    let b = bootstrap_pll(&s, model.as_ref(), &test, &cfg).unwrap();
    assert_eq!(a, b);
    assert!((a.total_mean - plain.total).abs() < 2.0 * a.total_std);
    assert!(bootstrap_pll(&s, model.as_ref(), &test, &BootstrapConfig { trials: 0, ..cfg }).is_err());
}

#[test]
fn population_with_no_spread_is_the_mean_task() {
    let m = hazard_model(&[(1, 1), (2, 1)]);
    let mut p = params(2, [0.2, 1.3], [1e-300, 1e-300], 0.3);
    p.alpha = vec![[5.0, -1.0], [-4.0, 2.0]];
    let theta = m.pack(&p).unwrap();
    let s = samples(&m, vec![theta.clone(); 20]);
    let xs = grid(-1.0, 1.0, 5);
    let pop = population_predict(&s, &m, 1, &xs, 3).unwrap();
    let mut at_mean = p.clone();
    at_mean.alpha[0] = p.mu_alpha;
    let th = m.pack(&at_mean).unwrap();
    let task = posterior_predictive(&samples(&m, vec![th; 20]), &m, TaskId::new(1, 1), &xs, 3).unwrap();
    for i in 0..xs.len() {
        assert!((pop.mean[i] - task.mean[i]).abs() < 1e-9);
        assert!((pop.std[i] - task.std[i]).abs() < 1e-9);
    }
}

#[test]
fn population_spread_dominates_each_task() {
    let (model, s, _, _) = small_fit();
    let xs = grid(-1.2, 1.2, 7);
    let pop = population_predict(&s, model.as_ref(), 1, &xs, 5).unwrap();
    for task in model.layout().tasks() {
        let c = posterior_predictive(&s, model.as_ref(), *task, &xs, 5).unwrap();
        for (i, x) in xs.iter().enumerate() {
            assert!(pop.std[i] >= c.std[i], "x={x} task {task}: {} < {}", pop.std[i], c.std[i]);
        }
    }
    let again = population_predict(&s, model.as_ref(), 1, &xs, 5).unwrap();
    assert_eq!(pop, again);
}

#[test]
fn predictive_bands_cover_held_out_points() {
    // Plenty of data in one well-specified task, then 2000 fresh points.
    let mut sc = presets::tiny(21);
    if let SyntheticScenario::TruckHazard(s) = &mut sc {
        s.groups[0].tasks.truncate(1);
        s.groups[0].tasks[0].n = 300;
    }
    let data = simulate_fleet(&sc).unwrap();
    let spec = ModelSpec::Hazard(HazardConfig {
        n_basis: 3,
        x_range: Some(sc.x_range()),
        ..Default::default()
    });
    let chains = ChainConfig {
        n_chains: 2,
        burn_in: 500,
        n_samples: 500,
        seed: 21,
        ..Default::default()
    };
    let fit = fit_mtl(&data, &spec, &chains, None).unwrap();
    let fresh = simulate_fleet(&match sc {
        SyntheticScenario::TruckHazard(mut s) => {
            s.seed = 22;
            s.groups[0].tasks[0].n = 2000;
            SyntheticScenario::TruckHazard(s)
        }
        other => other,
    })
    .unwrap();
    let xs: Vec<f64> = fresh.observations().iter().map(|o| o.x).collect();
    let c = posterior_predictive(&fit.samples, fit.model.as_ref(), TaskId::new(1, 1), &xs, 1).unwrap();
    let inside = fresh
        .observations()
        .iter()
        .enumerate()
        .filter(|(i, o)| (o.y - c.mean[*i]).abs() <= 3.0 * c.std[*i])
        .count();
    assert!(inside as f64 >= 0.99 * 2000.0, "{inside} of 2000 inside the 3-sigma band");
}

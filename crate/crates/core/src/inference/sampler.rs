use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Constraint, LogDensity, PosteriorSamples};
use crate::error::{invalid, FleetError, Result};

/// Starting point of every chain before per-chain jitter.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// The target's own default (hyper-prior means, least-squares effects).
    #[default]
    PriorMean,
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub n_chains: usize,
    pub burn_in: usize,
    pub n_samples: usize,
    /// Sweeps per retained draw after burn-in.
    pub thin: usize,
    pub seed: u64,
    /// Componentwise acceptance rate targeted during burn-in.
    pub adapt_target: f64,
    /// Relative per-chain jitter applied to the initial point.
    pub jitter: f64,
    pub init: Init,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_chains: 4,
            burn_in: 1000,
            n_samples: 2000,
            thin: 1,
            seed: 0,
            adapt_target: 0.44,
            jitter: 0.01,
            init: Init::PriorMean,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains < 1 {
            return Err(invalid("n_chains", "need at least one chain"));
        }
        if self.thin < 1 {
            return Err(invalid("thin", "must be at least 1"));
        }
        if self.n_samples < 1 {
            return Err(invalid("n_samples", "need at least one retained draw"));
        }
        if !(self.adapt_target > 0.0 && self.adapt_target < 1.0) {
            return Err(invalid("adapt_target", "must lie in (0, 1)"));
        }
        if !(self.jitter >= 0.0) {
            return Err(invalid("jitter", "must be non-negative"));
        }
        Ok(())
    }
}

/// Maps between the constrained parameter and the unconstrained sampler
/// coordinate, accumulating the log-Jacobian of positive components.
struct Transform<'a> {
    constraints: &'a [Constraint],
}

impl Transform<'_> {
    fn to_unconstrained(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(self.constraints)
            .map(|(&v, c)| match c {
                Constraint::Real => v,
                Constraint::Positive => v.ln(),
            })
            .collect()
    }

    fn component(&self, i: usize, z: f64) -> f64 {
        match self.constraints[i] {
            Constraint::Real => z,
            Constraint::Positive => z.exp(),
        }
    }

    fn log_jacobian(&self, z: &[f64]) -> f64 {
        z.iter()
            .zip(self.constraints)
            .filter(|(_, c)| **c == Constraint::Positive)
            .map(|(v, _)| v)
            .sum()
    }
}

/// Runs `config.n_chains` independent chains of componentwise adaptive
/// random-walk Metropolis on `target`.
///
/// Positive components move on the log scale (with the Jacobian added).
/// During burn-in each component's proposal scale follows a Robbins-Monro
/// recursion toward `adapt_target`; the scales are frozen afterwards so the
/// retained draws come from a fixed kernel.
pub fn run_mcmc<T: LogDensity + ?Sized>(target: &T, config: &ChainConfig) -> Result<PosteriorSamples> {
    config.validate()?;
    let dim = target.dim();
    let init = match &config.init {
        Init::PriorMean => target.default_init(),
        Init::Custom(v) => v.clone(),
    };
    if init.len() != dim {
        return Err(FleetError::Dimension {
            expected: dim,
            got: init.len(),
        });
    }
    let constraints = target.constraints();
    let names = target.names();
    let start_lp = target.log_density(&init);
    if start_lp.is_nan() {
        return Err(FleetError::NanDensity { state: init });
    }
    if start_lp == f64::NEG_INFINITY || constraints.iter().zip(&init).any(|(c, v)| *c == Constraint::Positive && !(*v > 0.0)) {
        let parameter = first_offender(target, &init, &names);
        return Err(FleetError::InfeasibleInit { parameter });
    }

    let chains: Vec<Result<ChainOutput>> = (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_chain(target, &constraints, &init, config, c))
        .collect();
    let chains = chains.into_iter().collect::<Result<Vec<_>>>()?;

    let mut samples = PosteriorSamples::new(names, config.n_chains, config.n_samples);
    for (c, out) in chains.into_iter().enumerate() {
        samples.set_chain(c, out.draws, out.log_density, out.acceptance);
    }
    Ok(samples)
}

/// Best guess at which coordinate makes the start infeasible.
fn first_offender<T: LogDensity + ?Sized>(target: &T, init: &[f64], names: &[String]) -> String {
    let constraints = target.constraints();
    for (i, (c, v)) in constraints.iter().zip(init).enumerate() {
        if *c == Constraint::Positive && !(*v > 0.0) {
            return names[i].clone();
        }
        if !v.is_finite() {
            return names[i].clone();
        }
    }
    names.first().cloned().unwrap_or_default()
}

struct ChainOutput {
    draws: Vec<f64>,
    log_density: Vec<f64>,
    acceptance: Vec<f64>,
}

fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

fn run_chain<T: LogDensity + ?Sized>(
    target: &T,
    constraints: &[Constraint],
    init: &[f64],
    config: &ChainConfig,
    chain: usize,
) -> Result<ChainOutput> {
    let dim = init.len();
    let tf = Transform { constraints };
    let mut rng = chain_rng(config.seed, chain);

    let base = tf.to_unconstrained(init);
    let mut z = base.clone();
    let mut theta = init.to_vec();
    let mut lp = target.log_density(&theta);
    if config.jitter > 0.0 {
        for _ in 0..100 {
            let cand: Vec<f64> = base
                .iter()
                .map(|&b| b + config.jitter * (1.0 + b.abs()) * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let cand_theta: Vec<f64> = cand.iter().enumerate().map(|(i, &v)| tf.component(i, v)).collect();
            let cand_lp = target.log_density(&cand_theta);
            if cand_lp.is_finite() {
                z = cand;
                theta = cand_theta;
                lp = cand_lp;
                break;
            }
        }
    }
    let mut lp_total = lp + tf.log_jacobian(&z);

    let mut log_scale = vec![(0.1f64).ln(); dim];
    let mut accepted = vec![0usize; dim];
    let mut draws = Vec::with_capacity(config.n_samples * dim);
    let mut log_density = Vec::with_capacity(config.n_samples);

    let total = config.burn_in + config.n_samples * config.thin;
    for iter in 0..total {
        let adapting = iter < config.burn_in;
        let gain = ((iter + 1) as f64).powf(-0.6);
        for i in 0..dim {
            let old_z = z[i];
            let old_theta = theta[i];
            let step = log_scale[i].exp() * rng.sample::<f64, _>(StandardNormal);
            z[i] = old_z + step;
            theta[i] = tf.component(i, z[i]);
            let cand = target.log_density(&theta);
            if cand.is_nan() {
                return Err(FleetError::NanDensity { state: theta });
            }
            let jac_delta = match constraints[i] {
                Constraint::Positive => z[i] - old_z,
                Constraint::Real => 0.0,
            };
            let cand_total = cand + (lp_total - lp) + jac_delta;
            let log_ratio = cand_total - lp_total;
            let accept = cand > f64::NEG_INFINITY
                && theta[i].is_finite()
                && (log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio);
            if accept {
                lp = cand;
                lp_total = cand_total;
            } else {
                z[i] = old_z;
                theta[i] = old_theta;
            }
            if adapting {
                let a = if accept { 1.0 } else { 0.0 };
                log_scale[i] = (log_scale[i] + gain * (a - config.adapt_target)).clamp(-12.0, 3.0);
            } else if accept {
                accepted[i] += 1;
            }
        }
        if !adapting && (iter - config.burn_in + 1).is_multiple_of(config.thin) {
            draws.extend_from_slice(&theta);
            log_density.push(lp);
        }
    }

    let acceptance = accepted
        .iter()
        .map(|&a| a as f64 / (config.n_samples * config.thin) as f64)
        .collect();
    Ok(ChainOutput {
        draws,
        log_density,
        acceptance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{diagnostics, Conditioned, FnDensity};
    use crate::stats::{mean, variance};

    #[test]
    fn standard_normal_moments() {
        let target = FnDensity::new(1, |t: &[f64]| -0.5 * t[0] * t[0]);
        let s = run_mcmc(&target, &ChainConfig { seed: 11, ..Default::default() }).unwrap();
        let xs = s.column(0);
        assert_eq!(xs.len(), 8000);
        assert!(mean(&xs).abs() < 0.05, "mean {}", mean(&xs));
        assert!((variance(&xs) - 1.0).abs() < 0.1, "var {}", variance(&xs));
    }

    #[test]
    fn seeded_runs_are_bit_identical() {
        let target = FnDensity::new(2, |t: &[f64]| -0.5 * (t[0] * t[0] + 4.0 * t[1] * t[1]));
        let cfg = ChainConfig { seed: 3, burn_in: 100, n_samples: 200, ..Default::default() };
        let a = run_mcmc(&target, &cfg).unwrap();
        let b = run_mcmc(&target, &cfg).unwrap();
        assert_eq!(a, b);
        let c = run_mcmc(&target, &ChainConfig { seed: 4, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn positive_component_respects_jacobian() {
        // Exponential(1) on (0, ∞): mean 1, variance 1.
        let target = FnDensity::new(1, |t: &[f64]| if t[0] > 0.0 { -t[0] } else { f64::NEG_INFINITY })
            .with_constraints(vec![Constraint::Positive]);
        let cfg = ChainConfig { seed: 5, n_samples: 5000, init: Init::Custom(vec![1.0]), ..Default::default() };
        let s = run_mcmc(&target, &cfg).unwrap();
        let xs = s.column(0);
        assert!(xs.iter().all(|&v| v > 0.0));
        assert!((mean(&xs) - 1.0).abs() < 0.05, "mean {}", mean(&xs));
        assert!((variance(&xs) - 1.0).abs() < 0.15, "var {}", variance(&xs));
    }

    #[test]
    fn infeasible_start_is_reported() {
        let target = FnDensity::new(1, |t: &[f64]| if t[0] > 0.0 { 0.0 } else { f64::NEG_INFINITY })
            .with_names(vec!["p".into()]);
        let cfg = ChainConfig { init: Init::Custom(vec![-1.0]), ..Default::default() };
        match run_mcmc(&target, &cfg) {
            Err(FleetError::InfeasibleInit { parameter }) => assert_eq!(parameter, "p"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nan_density_is_an_error() {
        let target = FnDensity::new(1, |t: &[f64]| if t[0] > 0.5 { f64::NAN } else { -0.5 * t[0] * t[0] });
        let cfg = ChainConfig { n_chains: 1, ..Default::default() };
        assert!(matches!(run_mcmc(&target, &cfg), Err(FleetError::NanDensity { .. })));
    }

    #[test]
    fn every_draw_is_feasible() {
        // Uniform on the triangle 0 < a < b < 1.
        let target = FnDensity::new(2, |t: &[f64]| {
            if 0.0 < t[0] && t[0] < t[1] && t[1] < 1.0 { 0.0 } else { f64::NEG_INFINITY }
        });
        let cfg = ChainConfig { seed: 2, init: Init::Custom(vec![0.3, 0.6]), ..Default::default() };
        let s = run_mcmc(&target, &cfg).unwrap();
        for (draw, _) in s.iter_draws() {
            assert!(0.0 < draw[0] && draw[0] < draw[1] && draw[1] < 1.0);
        }
        assert!(s.log_densities().all(|lp| lp.is_finite()));
    }

    #[test]
    fn conjugate_normal_normal() {
        // y_i ~ N(θ, 1), θ ~ N(0, 10²): posterior N(m, v) in closed form.
        let ys = [1.2, 0.7, 2.1, 1.5, 0.9, 1.8, 1.1, 1.4];
        let n = ys.len() as f64;
        let v = 1.0 / (n + 1.0 / 100.0);
        let m = v * ys.iter().sum::<f64>();
        let target = FnDensity::new(1, move |t: &[f64]| {
            -0.5 * t[0] * t[0] / 100.0 - 0.5 * ys.iter().map(|y| (y - t[0]).powi(2)).sum::<f64>()
        });
        let s = run_mcmc(&target, &ChainConfig { seed: 8, ..Default::default() }).unwrap();
        let xs = s.column(0);
        assert!(((mean(&xs) - m) / m).abs() < 0.02);
        assert!(((variance(&xs) - v) / v).abs() < 0.1);
        let d = diagnostics(&s).unwrap();
        assert!(d.rhat[0].unwrap() < 1.05);
    }

    #[test]
    fn adaptation_freezes_after_burn_in() {
        // Same post-burn-in kernel regardless of how long it runs: the first
        // draws of a longer run coincide with a shorter run's draws.
        let target = FnDensity::new(2, |t: &[f64]| -0.5 * (t[0] * t[0] + t[1] * t[1]));
        let short = ChainConfig { seed: 21, burn_in: 300, n_samples: 100, n_chains: 1, ..Default::default() };
        let long = ChainConfig { n_samples: 400, ..short.clone() };
        let a = run_mcmc(&target, &short).unwrap();
        let b = run_mcmc(&target, &long).unwrap();
        for i in 0..100 {
            assert_eq!(a.draw(0, i), b.draw(0, i));
        }
    }

    #[test]
    fn conditioned_density_pins_coordinates() {
        let target = FnDensity::new(3, |t: &[f64]| -0.5 * (t[0] - t[2]).powi(2) - 0.5 * t[1] * t[1]);
        let cond = Conditioned::new(&target, vec![0.0, 0.0, 0.0], &[(2, 5.0)]);
        assert_eq!(cond.dim(), 2);
        let s = run_mcmc(&cond, &ChainConfig { seed: 1, ..Default::default() }).unwrap();
        assert!((mean(&s.column(0)) - 5.0).abs() < 0.1);
        assert_eq!(cond.expand(&[1.0, 2.0]), vec![1.0, 2.0, 5.0]);
    }

    #[test]
    fn discretized_target_stationary_distribution() {
        // Piecewise-constant density on [0, 5) with bin masses ∝ 1..=5.
        let weights = [1.0, 2.0, 3.0, 4.0, 5.0];
        let total: f64 = weights.iter().sum();
        let target = FnDensity::new(1, move |t: &[f64]| {
            let x = t[0];
            if (0.0..5.0).contains(&x) {
                weights[x.floor() as usize].ln()
            } else {
                f64::NEG_INFINITY
            }
        });
        let cfg = ChainConfig {
            n_chains: 1,
            burn_in: 2_000,
            n_samples: 1_000_000,
            seed: 99,
            init: Init::Custom(vec![2.5]),
            ..Default::default()
        };
        let s = run_mcmc(&target, &cfg).unwrap();
        let mut counts = [0usize; 5];
        for &x in &s.column(0) {
            counts[x.floor() as usize] += 1;
        }
        let n = s.column(0).len() as f64;
        let tv: f64 = counts
            .iter()
            .zip(&weights)
            .map(|(&c, &w)| (c as f64 / n - w / total).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.02, "total variation {tv}");
    }
}

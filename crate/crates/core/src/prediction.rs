//! Posterior-predictive curves, predictive log-likelihood scores and
//! population-level prediction for an unseen task.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{FleetDataset, TaskId};
use crate::error::{invalid, FleetError, Result};
use crate::inference::PosteriorSamples;
use crate::model::FleetModel;
use crate::stats::{log_mean_exp, normal_logpdf};

/// Predictive summary on a grid of inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveCurve {
    pub xs: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// `draws[i][s]`: predictive draw `s` (noise included) at `xs[i]`.
    pub draws: Vec<Vec<f64>>,
}

impl PredictiveCurve {
    pub fn lower(&self, n_sigma: f64) -> Vec<f64> {
        self.mean.iter().zip(&self.std).map(|(m, s)| m - n_sigma * s).collect()
    }

    pub fn upper(&self, n_sigma: f64) -> Vec<f64> {
        self.mean.iter().zip(&self.std).map(|(m, s)| m + n_sigma * s).collect()
    }
}

/// Writes `k,l,x,mean,std,lo3,hi3` rows for each labelled curve.
pub fn write_curves_csv<W: Write>(writer: W, curves: &[(TaskId, &PredictiveCurve)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["k", "l", "x", "mean", "std", "lo3", "hi3"])?;
    for (task, c) in curves {
        for i in 0..c.xs.len() {
            w.write_record([
                task.k.to_string(),
                task.l.to_string(),
                c.xs[i].to_string(),
                c.mean[i].to_string(),
                c.std[i].to_string(),
                (c.mean[i] - 3.0 * c.std[i]).to_string(),
                (c.mean[i] + 3.0 * c.std[i]).to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| FleetError::Io {
        path: "<predictive>".into(),
        source: e,
    })?;
    Ok(())
}

fn check_samples(samples: &PosteriorSamples, model: &dyn FleetModel) -> Result<()> {
    if samples.total_draws() == 0 {
        return Err(FleetError::Empty("posterior samples".into()));
    }
    let names = model.param_names();
    if samples.names() != names.as_slice() {
        return Err(invalid(
            "samples",
            format!(
                "parameter names do not match the model ({} columns vs {} parameters)",
                samples.dim(),
                names.len()
            ),
        ));
    }
    Ok(())
}

/// Aggregates per-draw means and noise scales into a curve, adding one
/// Gaussian noise draw per posterior draw and input.
fn summarize(xs: &[f64], means: Vec<Vec<f64>>, sigmas: &[f64], rng: &mut ChaCha8Rng) -> PredictiveCurve {
    let n = sigmas.len() as f64;
    let noise_var = sigmas.iter().map(|s| s * s).sum::<f64>() / n;
    let mut mean = Vec::with_capacity(xs.len());
    let mut std = Vec::with_capacity(xs.len());
    let mut draws = Vec::with_capacity(xs.len());
    for row in means {
        let m = row.iter().sum::<f64>() / n;
        let v = row.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
        mean.push(m);
        std.push((v + noise_var).sqrt());
        draws.push(
            row.iter()
                .zip(sigmas)
                .map(|(mu, s)| mu + s * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        );
    }
    PredictiveCurve {
        xs: xs.to_vec(),
        mean,
        std,
        draws,
    }
}

/// Predictive distribution of task `task` at each input.
///
/// The mean is the average of the per-draw means and the variance adds the
/// spread of those means to the average noise variance.
pub fn posterior_predictive(
    samples: &PosteriorSamples,
    model: &dyn FleetModel,
    task: TaskId,
    xs: &[f64],
    seed: u64,
) -> Result<PredictiveCurve> {
    check_samples(samples, model)?;
    if let Some(x) = xs.iter().find(|x| !x.is_finite()) {
        return Err(invalid("xs", format!("non-finite input {x}")));
    }
    let t = model.layout().task_index(task)?;
    let mut means = vec![Vec::with_capacity(samples.total_draws()); xs.len()];
    let mut sigmas = Vec::with_capacity(samples.total_draws());
    for (theta, _) in samples.iter_draws() {
        sigmas.push(model.noise_sd(theta));
        for (row, &x) in means.iter_mut().zip(xs) {
            row.push(model.mean_at(theta, t, x));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(summarize(xs, means, &sigmas, &mut rng))
}

/// Out-of-sample scores: per observation, the log of the posterior-averaged
/// Gaussian density.
#[derive(Debug, Clone, PartialEq)]
pub struct PllScores {
    pub per_task: BTreeMap<TaskId, f64>,
    pub total: f64,
    /// Per test observation, in dataset order.
    pub per_observation: Vec<f64>,
}

pub fn predictive_log_likelihood(
    samples: &PosteriorSamples,
    model: &dyn FleetModel,
    test: &FleetDataset,
) -> Result<PllScores> {
    check_samples(samples, model)?;
    if test.is_empty() {
        log::warn!("empty test set: predictive log-likelihood is 0");
        return Ok(PllScores {
            per_task: BTreeMap::new(),
            total: 0.0,
            per_observation: Vec::new(),
        });
    }
    let tasks = model.layout().observation_tasks(test)?;
    let mut lpd = vec![Vec::with_capacity(samples.total_draws()); test.len()];
    for (theta, _) in samples.iter_draws() {
        let sigma = model.noise_sd(theta);
        for ((o, &t), acc) in test.observations().iter().zip(&tasks).zip(lpd.iter_mut()) {
            acc.push(normal_logpdf(o.y, model.mean_at(theta, t, o.x), sigma));
        }
    }
    let per_observation: Vec<f64> = lpd.iter().map(|v| log_mean_exp(v)).collect();
    let mut per_task = BTreeMap::new();
    for (o, s) in test.observations().iter().zip(&per_observation) {
        *per_task.entry(o.task()).or_insert(0.0) += s;
    }
    let total = per_task.values().sum();
    Ok(PllScores {
        per_task,
        total,
        per_observation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub trials: usize,
    pub seed: u64,
    /// When false every trial reuses the test set unchanged.
    pub resample: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            seed: 0,
            resample: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapScores {
    pub mean: BTreeMap<TaskId, f64>,
    pub std: BTreeMap<TaskId, f64>,
    pub total_mean: f64,
    pub total_std: f64,
}

/// Resamples each task's per-observation scores with replacement and
/// reports the mean and spread of the task sums over trials.
pub fn bootstrap_scores(test: &FleetDataset, scores: &PllScores, config: &BootstrapConfig) -> Result<BootstrapScores> {
    if config.trials < 1 {
        return Err(invalid("trials", "need at least one bootstrap trial"));
    }
    let mut by_task: BTreeMap<TaskId, Vec<f64>> = BTreeMap::new();
    for (o, s) in test.observations().iter().zip(&scores.per_observation) {
        by_task.entry(o.task()).or_default().push(*s);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trials: BTreeMap<TaskId, Vec<f64>> = BTreeMap::new();
    let mut totals = Vec::with_capacity(config.trials);
    for _ in 0..config.trials {
        let mut total = 0.0;
        for (task, vals) in &by_task {
            let s: f64 = if config.resample {
                (0..vals.len()).map(|_| vals[rng.random_range(0..vals.len())]).sum()
            } else {
                vals.iter().sum()
            };
            trials.entry(*task).or_default().push(s);
            total += s;
        }
        totals.push(total);
    }
    let stats = |v: &[f64]| {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let sd = if v.len() > 1 {
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        (m, sd)
    };
    let mut mean = BTreeMap::new();
    let mut std = BTreeMap::new();
    for (task, v) in &trials {
        let (m, s) = stats(v);
        mean.insert(*task, m);
        std.insert(*task, s);
    }
    let (total_mean, total_std) = stats(&totals);
    Ok(BootstrapScores {
        mean,
        std,
        total_mean,
        total_std,
    })
}

pub fn bootstrap_pll(
    samples: &PosteriorSamples,
    model: &dyn FleetModel,
    test: &FleetDataset,
    config: &BootstrapConfig,
) -> Result<BootstrapScores> {
    let scores = predictive_log_likelihood(samples, model, test)?;
    bootstrap_scores(test, &scores, config)
}

/// Fresh-task parameter vectors, one per posterior draw, for group `l`.
///
/// Infeasible draws from the generating distributions are rejected and
/// redrawn; more than 99% rejections is reported as degenerate.
pub struct PopulationSampler<'a> {
    model: &'a dyn FleetModel,
    thetas: Vec<Vec<f64>>,
    slot: usize,
    rejection_rate: f64,
}

const MAX_ATTEMPTS_PER_DRAW: usize = 1000;

impl<'a> PopulationSampler<'a> {
    pub fn new(samples: &PosteriorSamples, model: &'a dyn FleetModel, l: usize, seed: u64) -> Result<Self> {
        check_samples(samples, model)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut thetas = Vec::with_capacity(samples.total_draws());
        let mut slot = 0;
        let (mut attempts, mut rejected) = (0usize, 0usize);
        for (theta, _) in samples.iter_draws() {
            let mut tries = 0;
            loop {
                attempts += 1;
                tries += 1;
                match model.fresh_task(theta, l, &mut rng)? {
                    Some((t, s)) => {
                        thetas.push(t);
                        slot = s;
                        break;
                    }
                    None => rejected += 1,
                }
                if tries >= MAX_ATTEMPTS_PER_DRAW {
                    break;
                }
            }
            if attempts >= 100 && rejected as f64 > 0.99 * attempts as f64 {
                return Err(FleetError::Degenerate(format!(
                    "{rejected} of {attempts} task draws from the generating distributions were infeasible"
                )));
            }
        }
        if thetas.is_empty() {
            return Err(FleetError::Degenerate("no feasible task could be drawn".into()));
        }
        Ok(Self {
            model,
            thetas,
            slot,
            rejection_rate: rejected as f64 / attempts as f64,
        })
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn rejection_rate(&self) -> f64 {
        self.rejection_rate
    }

    /// Noise-free mean of fresh task `i` at `x`.
    pub fn mean(&self, i: usize, x: f64) -> f64 {
        self.model.mean_at(&self.thetas[i], self.slot, x)
    }

    pub fn noise_sd(&self, i: usize) -> f64 {
        self.model.noise_sd(&self.thetas[i])
    }

    /// One predictive draw at `x` from a uniformly chosen fresh task.
    pub fn sample(&self, x: f64, rng: &mut dyn RngCore) -> f64 {
        let i = rng.random_range(0..self.thetas.len());
        let z: f64 = rng.sample(StandardNormal);
        self.mean(i, x) + self.noise_sd(i) * z
    }

    pub fn curve(&self, xs: &[f64], seed: u64) -> PredictiveCurve {
        let means = xs
            .iter()
            .map(|&x| (0..self.thetas.len()).map(|i| self.mean(i, x)).collect())
            .collect();
        let sigmas: Vec<f64> = (0..self.thetas.len()).map(|i| self.noise_sd(i)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        summarize(xs, means, &sigmas, &mut rng)
    }
}

/// Predictive distribution of an unseen task in group `l`.
pub fn population_predict(
    samples: &PosteriorSamples,
    model: &dyn FleetModel,
    l: usize,
    xs: &[f64],
    seed: u64,
) -> Result<PredictiveCurve> {
    let sampler = PopulationSampler::new(samples, model, l, seed)?;
    Ok(sampler.curve(xs, seed.wrapping_add(1)))
}

/// Evenly spaced grid of `n` points on `[lo, hi]`.
pub fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

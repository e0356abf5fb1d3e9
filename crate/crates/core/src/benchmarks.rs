//! Comparison strategies sharing one predictive model and one scoring
//! protocol: single-task learning (STL), complete pooling (CP), CORAL-aligned
//! pooling (CRL) and the multitask model (MTL).

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{split_train_test, FleetDataset, Observation, SplitSpec, TaskId};
use crate::error::{invalid, FleetError, Result};
use crate::inference::{run_mcmc, ChainConfig, PosteriorSamples};
use crate::model::{FleetModel, ModelSpec, TaskLayout};
use crate::prediction::{bootstrap_scores, predictive_log_likelihood, BootstrapConfig, PllScores};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "CP")]
    Cp,
    #[serde(rename = "CRL")]
    Crl,
    #[serde(rename = "STL")]
    Stl,
    #[serde(rename = "MTL")]
    Mtl,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Cp, Method::Crl, Method::Stl, Method::Mtl];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Cp => "CP",
            Method::Crl => "CRL",
            Method::Stl => "STL",
            Method::Mtl => "MTL",
        })
    }
}

/// A fitted model together with its draws.
pub struct Fit {
    pub model: Box<dyn FleetModel>,
    pub samples: PosteriorSamples,
}

impl Fit {
    pub fn score(&self, test: &FleetDataset) -> Result<PllScores> {
        predictive_log_likelihood(&self.samples, self.model.as_ref(), test)
    }
}

fn fit_layout(
    data: &FleetDataset,
    layout: TaskLayout,
    spec: &ModelSpec,
    chains: &ChainConfig,
    range: Option<(f64, f64)>,
) -> Result<Fit> {
    let model = spec.build_with(layout, range.or_else(|| data.x_range()))?;
    let samples = {
        let posterior = model.posterior(data)?;
        run_mcmc(posterior.as_ref(), chains)?
    };
    Ok(Fit { model, samples })
}

/// The multitask model over every task of `train`.
pub fn fit_mtl(train: &FleetDataset, spec: &ModelSpec, chains: &ChainConfig, range: Option<(f64, f64)>) -> Result<Fit> {
    fit_layout(train, TaskLayout::from_dataset(train)?, spec, chains, range)
}

/// One independent single-task fit per task. Every task uses the same chain
/// seed, so a task's draws depend on its own data only.
pub fn fit_stl(
    train: &FleetDataset,
    spec: &ModelSpec,
    chains: &ChainConfig,
    range: Option<(f64, f64)>,
) -> Result<BTreeMap<TaskId, Fit>> {
    let mut fits = BTreeMap::new();
    for task in train.tasks() {
        let data = train.filter(|o| o.task() == task);
        if data.is_empty() {
            log::warn!("task ({task}) has no training data; skipped");
            continue;
        }
        fits.insert(task, fit_layout(&data, TaskLayout::single(task), spec, chains, range)?);
    }
    Ok(fits)
}

/// One model for the whole fleet, treating all observations as task (1,1).
pub fn fit_cp(train: &FleetDataset, spec: &ModelSpec, chains: &ChainConfig, range: Option<(f64, f64)>) -> Result<Fit> {
    if train.is_empty() {
        return Err(FleetError::Empty("training set".into()));
    }
    let pooled = train.collapsed();
    fit_layout(&pooled, TaskLayout::single(TaskId::new(1, 1)), spec, chains, range)
}

/// Closed-form square root of a symmetric positive-definite 2×2 matrix
/// `[[a, b], [b, d]]`.
fn sqrtm2(m: [f64; 3]) -> Option<[f64; 3]> {
    let [a, b, d] = m;
    let det = a * d - b * b;
    if !(det > 0.0) || !(a > 0.0) || !det.is_finite() {
        return None;
    }
    let s = det.sqrt();
    let t = (a + d + 2.0 * s).sqrt();
    Some([(a + s) / t, b / t, (d + s) / t])
}

fn inv2(m: [f64; 3]) -> Option<[f64; 3]> {
    let [a, b, d] = m;
    let det = a * d - b * b;
    if !(det.abs() > 0.0) || !det.is_finite() {
        return None;
    }
    Some([d / det, -b / det, a / det])
}

/// Product of two symmetric 2×2 matrices (not symmetric in general).
fn mul2(p: [f64; 3], q: [f64; 3]) -> [[f64; 2]; 2] {
    let p = [[p[0], p[1]], [p[1], p[2]]];
    let q = [[q[0], q[1]], [q[1], q[2]]];
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = p[i][0] * q[0][j] + p[i][1] * q[1][j];
        }
    }
    out
}

/// Mean and unbiased covariance `[s_xx, s_xy, s_yy]` of 2-vectors.
pub fn mean_cov(points: &[(f64, f64)]) -> ([f64; 2], [f64; 3]) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    if points.len() < 2 {
        return ([mx, my], [0.0; 3]);
    }
    let mut c = [0.0; 3];
    for p in points {
        let (dx, dy) = (p.0 - mx, p.1 - my);
        c[0] += dx * dx;
        c[1] += dx * dy;
        c[2] += dy * dy;
    }
    ([mx, my], c.map(|v| v / (n - 1.0)))
}

/// Correlation alignment of `source` onto `target` in the joint `(x, y)`
/// space: centre, whiten with `(C_s + εI)^{-1/2}`, recolour with
/// `(C_t + εI)^{1/2}` and shift to the target mean.
pub fn coral_transform(source: &[(f64, f64)], target: &[(f64, f64)], eps: f64) -> Result<Vec<(f64, f64)>> {
    if target.len() < 2 {
        return Err(invalid("target", "need at least two target points"));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(invalid("eps", "regularizer must be positive"));
    }
    if source.is_empty() {
        return Ok(Vec::new());
    }
    let (ms, cs) = mean_cov(source);
    let (mt, ct) = mean_cov(target);
    let reg = |c: [f64; 3]| [c[0] + eps, c[1], c[2] + eps];
    let singular = |which: &str| FleetError::Degenerate(format!("{which} covariance is singular even after regularization"));
    let whiten = sqrtm2(reg(cs)).and_then(inv2).ok_or_else(|| singular("source"))?;
    let colour = sqrtm2(reg(ct)).ok_or_else(|| singular("target"))?;
    let a = mul2(colour, whiten);
    Ok(source
        .iter()
        .map(|&(x, y)| {
            let (dx, dy) = (x - ms[0], y - ms[1]);
            (
                a[0][0] * dx + a[0][1] * dy + mt[0],
                a[1][0] * dx + a[1][1] * dy + mt[1],
            )
        })
        .collect())
}

fn pairs(obs: &[Observation]) -> Vec<(f64, f64)> {
    obs.iter().map(|o| (o.x, o.y)).collect()
}

/// Aligns every other task's training pairs onto `target` separately, pools
/// them with the target's own data and fits one single-task model.
pub fn fit_crl(
    train: &FleetDataset,
    target: TaskId,
    spec: &ModelSpec,
    chains: &ChainConfig,
    eps: f64,
    range: Option<(f64, f64)>,
) -> Result<Fit> {
    let own = train.task_data(target);
    if own.len() < 2 {
        return Err(FleetError::Degenerate(format!(
            "target task ({target}) has {} training points; CORAL needs at least 2",
            own.len()
        )));
    }
    let target_pairs = pairs(&own);
    let mut obs = own.clone();
    for task in train.tasks().into_iter().filter(|t| *t != target) {
        let moved = coral_transform(&pairs(&train.task_data(task)), &target_pairs, eps)?;
        obs.extend(moved.into_iter().map(|(x, y)| Observation {
            x,
            y,
            k: target.k,
            l: target.l,
        }));
    }
    let pooled = FleetDataset::new(obs)?;
    fit_layout(&pooled, TaskLayout::single(target), spec, chains, range.or_else(|| train.x_range()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub model: ModelSpec,
    pub chains: ChainConfig,
    pub split: SplitSpec,
    pub bootstrap: BootstrapConfig,
    pub coral_eps: f64,
    pub methods: Vec<Method>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::Hazard(Default::default()),
            chains: ChainConfig::default(),
            split: SplitSpec::random(0.75, 0),
            bootstrap: BootstrapConfig::default(),
            coral_eps: 1e-6,
            methods: Method::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub method: Method,
    pub task: TaskId,
    /// Bootstrap mean of the task's summed predictive log-likelihood.
    pub score: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub rows: Vec<ScoreRow>,
    pub totals: BTreeMap<Method, f64>,
    /// Tasks a method could not score, with the reason.
    pub skipped: Vec<(Method, TaskId, String)>,
}

impl ScoreTable {
    pub fn total(&self, method: Method) -> Option<f64> {
        self.totals.get(&method).copied()
    }

    pub fn score(&self, method: Method, task: TaskId) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.task == task)
            .map(|r| r.score)
    }

    /// `method,k,l,score` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["method", "k", "l", "score"])?;
        for r in &self.rows {
            w.write_record([r.method.to_string(), r.task.k.to_string(), r.task.l.to_string(), r.score.to_string()])?;
        }
        w.flush().map_err(|e| FleetError::Io {
            path: "<benchmark>".into(),
            source: e,
        })?;
        Ok(())
    }

    pub fn totals_json(&self) -> serde_json::Value {
        let mut totals = serde_json::Map::new();
        for (m, v) in &self.totals {
            totals.insert(m.to_string(), serde_json::json!(v));
        }
        let skipped: Vec<_> = self
            .skipped
            .iter()
            .map(|(m, t, why)| serde_json::json!({"method": m.to_string(), "k": t.k, "l": t.l, "reason": why}))
            .collect();
        serde_json::json!({ "totals": totals, "skipped": skipped })
    }
}

/// Runs every configured method on one split and scores each against the
/// same test observations with the same bootstrap seed.
pub fn compare(data: &FleetDataset, config: &BenchmarkConfig) -> Result<ScoreTable> {
    let split = split_train_test(data, &config.split)?;
    compare_split(&split.train, &split.test, config, data.x_range())
}

/// As [`compare`], on an explicit train/test pair.
pub fn compare_split(
    train: &FleetDataset,
    test: &FleetDataset,
    config: &BenchmarkConfig,
    range: Option<(f64, f64)>,
) -> Result<ScoreTable> {
    let spec = &config.model;
    let chains = &config.chains;
    let mut rows = Vec::new();
    let mut totals = BTreeMap::new();
    let mut skipped = Vec::new();
    let test_tasks: Vec<TaskId> = test.tasks();

    for &method in &config.methods {
        // Per-observation scores on the test set, in test order.
        let mut per_obs = vec![f64::NAN; test.len()];
        let index_of = |task: TaskId| -> Vec<usize> {
            test.observations()
                .iter()
                .enumerate()
                .filter(|(_, o)| o.task() == task)
                .map(|(i, _)| i)
                .collect()
        };
        match method {
            Method::Mtl => {
                let fit = fit_mtl(train, spec, chains, range)?;
                let known = test.filter(|o| fit.model.layout().task_index(o.task()).is_ok());
                let s = fit.score(&known)?;
                let mut it = s.per_observation.into_iter();
                for (i, o) in test.observations().iter().enumerate() {
                    if fit.model.layout().task_index(o.task()).is_ok() {
                        per_obs[i] = it.next().expect("score per kept observation");
                    }
                }
            }
            Method::Cp => {
                let fit = fit_cp(train, spec, chains, range)?;
                per_obs = fit.score(&test.collapsed())?.per_observation;
            }
            Method::Stl => {
                let fits = fit_stl(train, spec, chains, range)?;
                for &task in &test_tasks {
                    if let Some(fit) = fits.get(&task) {
                        let s = fit.score(&test.filter(|o| o.task() == task))?;
                        for (i, v) in index_of(task).into_iter().zip(s.per_observation) {
                            per_obs[i] = v;
                        }
                    }
                }
            }
            Method::Crl => {
                for &task in &test_tasks {
                    match fit_crl(train, task, spec, chains, config.coral_eps, range) {
                        Ok(fit) => {
                            let s = fit.score(&test.filter(|o| o.task() == task))?;
                            for (i, v) in index_of(task).into_iter().zip(s.per_observation) {
                                per_obs[i] = v;
                            }
                        }
                        Err(FleetError::Degenerate(why)) => {
                            log::warn!("CRL skips task ({task}): {why}");
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
        }
        let kept: Vec<usize> = (0..test.len()).filter(|&i| per_obs[i].is_finite()).collect();
        for task in &test_tasks {
            if index_of(*task).iter().any(|i| !per_obs[*i].is_finite()) {
                skipped.push((method, *task, "no fitted model for this task".to_string()));
            }
        }
        let kept_data = FleetDataset::new(kept.iter().map(|&i| test.observations()[i]).collect())?;
        let kept_scores = PllScores {
            per_task: BTreeMap::new(),
            total: 0.0,
            per_observation: kept.iter().map(|&i| per_obs[i]).collect(),
        };
        let boot = if kept_data.is_empty() {
            None
        } else {
            Some(bootstrap_scores(&kept_data, &kept_scores, &config.bootstrap)?)
        };
        let mut total = 0.0;
        if let Some(b) = boot {
            for (task, m) in &b.mean {
                rows.push(ScoreRow {
                    method,
                    task: *task,
                    score: *m,
                    std: b.std[task],
                });
                total += m;
            }
        }
        totals.insert(method, total);
    }
    Ok(ScoreTable { rows, totals, skipped })
}

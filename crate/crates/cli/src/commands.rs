//! One function per subcommand. Each reads the configuration, does its work
//! through the library and writes fixed-name files under the output directory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use fleet_core::analysis::{posterior_corr, variance_reduction, ReductionReport};
use fleet_core::benchmarks::{compare, fit_stl, BenchmarkConfig};
use fleet_core::dataset::{load_csv, simulate_fleet, FleetDataset};
use fleet_core::decision::{expected_utilities, optimal_action, vopi};
use fleet_core::inference::{diagnostics, run_mcmc, ChainConfig, PosteriorSamples};
use fleet_core::model::{FleetModel, ModelFamily, ModelSpec};
use fleet_core::prediction::{grid, population_predict, posterior_predictive, write_curves_csv, PopulationSampler};
use fleet_core::splines::{select_h, SelectionConfig};
use log::{info, warn};
use rand::RngCore;
use serde_json::json;

use crate::config::{Config, ConfigError};

const RHAT_WARN: f64 = 1.05;

/// Arguments shared by every subcommand.
pub struct Run {
    pub config: Config,
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

impl Run {
    fn file(&self, name: &str) -> Result<BufWriter<File>> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("cannot create output directory {}", self.out.display()))?;
        let path = self.out.join(name);
        let f = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        Ok(BufWriter::new(f))
    }

    fn write_json(&self, name: &str, value: &serde_json::Value) -> Result<()> {
        let mut w = self.file(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush().with_context(|| format!("cannot write {name}"))
    }

    /// The dataset from `--data`, or simulated from the configured scenario.
    fn dataset(&self) -> Result<FleetDataset> {
        if let Some(path) = &self.data {
            let data = load_csv(path, &self.config.data.columns).with_context(|| format!("cannot load {}", path.display()))?;
            if data.is_empty() {
                bail!("{} has no observations", path.display());
            }
            return Ok(data);
        }
        match &self.config.scenario {
            Some(s) => {
                info!("no --data given; simulating the configured scenario");
                Ok(simulate_fleet(s)?)
            }
            None => Err(ConfigError::new("scenario", "pass --data or configure a [scenario] to simulate").into()),
        }
    }

    fn chains(&self) -> ChainConfig {
        let mut c = self.config.chains.clone();
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        c
    }

    fn model(&self, data: &FleetDataset) -> Result<(ModelSpec, Box<dyn FleetModel>)> {
        let spec = self.config.model_spec()?;
        let model = spec.build(data)?;
        Ok((spec, model))
    }

    /// Draws written by `fit`, checked against the model they must belong to.
    fn draws(&self, model: &dyn FleetModel) -> Result<PosteriorSamples> {
        let path = self.out.join("draws.csv");
        let f = File::open(&path).with_context(|| format!("missing artifact {} (run `fit` first)", path.display()))?;
        let samples = PosteriorSamples::read_csv(f).with_context(|| format!("cannot read {}", path.display()))?;
        if samples.names() != model.param_names().as_slice() {
            bail!(
                "{} does not match the configured model and data ({} columns, model has {} parameters)",
                path.display(),
                samples.dim(),
                model.dim()
            );
        }
        Ok(samples)
    }
}

pub fn simulate(run: &Run) -> Result<()> {
    let mut scenario = run
        .config
        .scenario
        .clone()
        .ok_or_else(|| ConfigError::new("scenario", "simulate needs a [scenario] section"))?;
    if let Some(seed) = run.seed {
        scenario = scenario.with_seed(seed);
    }
    let data = simulate_fleet(&scenario)?;
    let mut w = run.file("data.csv")?;
    data.write_csv(&mut w)?;
    w.flush()?;
    let mut w = run.file("truth.csv")?;
    scenario.write_truth_csv(&mut w)?;
    w.flush()?;
    println!("simulated {} observations over {} tasks", data.len(), data.tasks().len());
    Ok(())
}

pub fn fit(run: &Run) -> Result<()> {
    let data = run.dataset()?;
    let (_, model) = run.model(&data)?;
    let chains = run.chains();
    if chains.burn_in == 0 {
        warn!("burn_in = 0: no adaptation and every draw from the start is kept");
    }
    let samples = {
        let posterior = model.posterior(&data)?;
        run_mcmc(posterior.as_ref(), &chains)?
    };
    let mut w = run.file("draws.csv")?;
    samples.write_csv(&mut w)?;
    w.flush()?;
    let diag = diagnostics(&samples)?;
    run.write_json("diagnostics.json", &diag.to_json())?;
    let bad = diag.unconverged(RHAT_WARN);
    if !bad.is_empty() {
        let shown: Vec<&str> = bad.iter().take(8).copied().collect();
        warn!(
            "{} parameters have R-hat above {RHAT_WARN} (max {:.3}): {}{}",
            bad.len(),
            diag.max_rhat().unwrap_or(f64::NAN),
            shown.join(", "),
            if bad.len() > shown.len() { ", ..." } else { "" }
        );
    }
    println!(
        "{} chains x {} draws of {} parameters; max R-hat {}",
        samples.n_chains(),
        samples.n_samples(),
        samples.dim(),
        diag.max_rhat().map_or("n/a".to_string(), |r| format!("{r:.3}"))
    );
    Ok(())
}

pub fn predict(run: &Run) -> Result<()> {
    let data = run.dataset()?;
    let (_, model) = run.model(&data)?;
    let samples = run.draws(model.as_ref())?;
    let p = &run.config.prediction;
    let seed = run.seed.unwrap_or(p.seed);
    let (lo, hi) = p.x_range.or_else(|| data.x_range()).context("dataset has no x range")?;
    let xs = grid(lo, hi, p.n_points);

    let tasks = model.layout().tasks().to_vec();
    let curves = tasks
        .iter()
        .map(|t| posterior_predictive(&samples, model.as_ref(), *t, &xs, seed))
        .collect::<Result<Vec<_>, _>>()?;
    let pairs: Vec<_> = tasks.iter().copied().zip(curves.iter()).collect();
    let mut w = run.file("predictive.csv")?;
    write_curves_csv(&mut w, &pairs)?;
    w.flush()?;

    let mut w = run.file("population.csv")?;
    writeln!(w, "l,x,mean,std,lo3,hi3")?;
    for l in model.layout().groups() {
        match population_predict(&samples, model.as_ref(), *l, &xs, seed) {
            Ok(c) => {
                let (lo3, hi3) = (c.lower(3.0), c.upper(3.0));
                for i in 0..xs.len() {
                    writeln!(w, "{l},{},{},{},{},{}", xs[i], c.mean[i], c.std[i], lo3[i], hi3[i])?;
                }
            }
            Err(e) => warn!("no population curve for group {l}: {e}"),
        }
    }
    w.flush()?;
    println!("predictive curves for {} tasks on {} points", tasks.len(), xs.len());
    Ok(())
}

pub fn benchmark(run: &Run) -> Result<()> {
    let data = run.dataset()?;
    let c = &run.config;
    let mut split = c.split.clone();
    let mut bootstrap = c.benchmark.bootstrap.clone();
    if let Some(seed) = run.seed {
        split.seed = seed;
        bootstrap.seed = seed;
    }
    let cfg = BenchmarkConfig {
        model: c.model_spec()?,
        chains: run.chains(),
        split: split.spec(),
        bootstrap,
        coral_eps: c.benchmark.coral_eps,
        methods: c.benchmark.methods.clone(),
    };
    let table = compare(&data, &cfg)?;
    let mut w = run.file("benchmark.csv")?;
    table.write_csv(&mut w)?;
    w.flush()?;
    run.write_json("benchmark.json", &table.totals_json())?;
    for (method, total) in &table.totals {
        println!("{method:>4} {total:.3}");
    }
    Ok(())
}

pub fn analyze(run: &Run) -> Result<()> {
    let data = run.dataset()?;
    let (spec, model) = run.model(&data)?;
    let samples = run.draws(model.as_ref())?;
    let a = &run.config.analysis;
    let (corr_default, reduce_default): (&str, &[&str]) = match spec.family() {
        ModelFamily::Hazard => ("alpha2[", &["alpha1[", "alpha2["]),
        ModelFamily::Power => ("q[", &["q[", "r[", "m1[", "Pm["]),
    };
    let selector = a.selector.clone().unwrap_or_else(|| corr_default.to_string());
    let corr = posterior_corr(&samples, &selector).map_err(|e| ConfigError::new("analysis.selector", e))?;
    let mut w = run.file("correlation.csv")?;
    corr.write_csv(&mut w)?;
    w.flush()?;
    println!("correlation over {} parameters", corr.labels.len());

    let selectors: Vec<String> = a
        .reduction
        .clone()
        .unwrap_or_else(|| reduce_default.iter().map(|s| s.to_string()).collect());
    if selectors.is_empty() {
        return Ok(());
    }
    let fits = fit_stl(&data, &spec, &run.chains(), data.x_range())?;
    let stl: Vec<(String, &PosteriorSamples)> = fits
        .iter()
        .map(|(t, f)| (format!("{},{}", t.k, t.l), &f.samples))
        .collect();
    let mut report = ReductionReport {
        rows: Vec::new(),
        averages: Default::default(),
        missing: Vec::new(),
    };
    for s in &selectors {
        let r = variance_reduction(&stl, &samples, s)?;
        report.rows.extend(r.rows);
        report.averages.extend(r.averages);
        report.missing.extend(r.missing);
    }
    let mut w = run.file("reduction.csv")?;
    report.write_csv(&mut w)?;
    w.flush()?;
    for (effect, avg) in &report.averages {
        println!("{effect}: {avg:.1}% lower posterior std than single-task fits");
    }
    Ok(())
}

pub fn decide(run: &Run) -> Result<()> {
    let data = run.dataset()?;
    let (spec, model) = run.model(&data)?;
    if spec.family() != ModelFamily::Power {
        return Err(ConfigError::new("model.family", "decide needs the power model").into());
    }
    let samples = run.draws(model.as_ref())?;
    let d = &run.config.decision;
    let seed = run.seed.unwrap_or(d.seed);
    let pop = PopulationSampler::new(&samples, model.as_ref(), d.group, seed)?;
    let sampler = |x: f64, rng: &mut dyn RngCore| pop.sample(x, rng);

    let utilities = expected_utilities(&sampler, &d.wind, &d.table, d.n_mc, seed.wrapping_add(1))?;
    let means: Vec<f64> = utilities.iter().map(|u| u.mean).collect();
    let best = optimal_action(&means)?;
    let info = vopi(&sampler, &d.wind, &d.table, d.n_outer, d.n_inner, seed.wrapping_add(2))?;

    let levels: Vec<_> = d
        .table
        .levels
        .iter()
        .zip(&utilities)
        .map(|(l, u)| {
            json!({
                "name": l.name,
                "threshold": l.threshold,
                "payout": l.payout,
                "penalty": l.penalty,
                "expected_utility": u.mean,
                "se": u.se,
            })
        })
        .collect();
    let report = json!({
        "group": d.group,
        "wind": d.wind,
        "levels": levels,
        "optimal_level": d.table.levels[best].name,
        "optimal_index": best,
        "vopi": info.vopi,
        "vopi_se": info.vopi_se,
        "preposterior": info.preposterior,
        "preposterior_se": info.preposterior_se,
        "prior_optimal": info.prior_optimal,
        "task_rejection_rate": pop.rejection_rate(),
    });
    run.write_json("decision.json", &report)?;
    let mut w = run.file("vopi.csv")?;
    info.write_measurements_csv(&mut w)?;
    w.flush()?;
    println!(
        "commit to {} (E[u] = {:.4}); value of knowing the wind = {:.4} ± {:.4}",
        d.table.levels[best].name, means[best], info.vopi, info.vopi_se
    );
    Ok(())
}

pub fn select(run: &Run) -> Result<()> {
    let data = run.dataset()?;
    let spec = run.config.model_spec()?;
    let ModelSpec::Hazard(h) = &spec else {
        return Err(ConfigError::new("model.family", "spline selection needs the hazard model").into());
    };
    let s = &run.config.selection;
    let mut cfg = SelectionConfig::new(s.folds, run.seed.unwrap_or(s.seed));
    cfg.x_range = h.x_range;
    let sel = select_h(&data, &s.candidates, &cfg)?;
    let mut w = run.file("spline_scores.csv")?;
    sel.write_csv(&mut w)?;
    w.flush()?;
    println!("selected H = {}", sel.best);
    Ok(())
}

//! Uniform-knot cubic B-splines and cross-validated choice of the basis size.
//!
//! With `H` functions on `[x_lo, x_hi]` the knot spacing is
//! `δ = (x_hi - x_lo) / (H + 1)` and the knots run from `x_lo - δ` to
//! `x_hi + δ`, so function `h` (1-based) is supported on
//! `[x_lo + (h - 2)δ, x_lo + (h + 2)δ]`. Every point of the interval lies in
//! the support of at least one function and points in
//! `[x_lo + 2δ, x_hi - 2δ]` are covered by four.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::FleetDataset;
use crate::error::{invalid, FleetError, Result};
use crate::hazard::{HazardConfig, HazardModel};
use crate::inference::{run_mcmc, ChainConfig};
use crate::model::{FleetModel, TaskLayout};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    n_basis: usize,
    x_lo: f64,
    x_hi: f64,
    delta: f64,
    knots: Vec<f64>,
}

pub fn make_basis(x_lo: f64, x_hi: f64, n_basis: usize) -> Result<SplineBasis> {
    SplineBasis::new(x_lo, x_hi, n_basis)
}

impl SplineBasis {
    pub fn new(x_lo: f64, x_hi: f64, n_basis: usize) -> Result<Self> {
        if n_basis < 1 {
            return Err(invalid("H", "need at least one basis function"));
        }
        if !(x_lo.is_finite() && x_hi.is_finite()) || !(x_lo < x_hi) {
            return Err(invalid("interval", format!("[{x_lo}, {x_hi}] is degenerate")));
        }
        let delta = (x_hi - x_lo) / (n_basis + 1) as f64;
        let knots = (0..n_basis + 4)
            .map(|j| x_lo + (j as f64 - 1.0) * delta)
            .collect();
        Ok(Self {
            n_basis,
            x_lo,
            x_hi,
            delta,
            knots,
        })
    }

    pub fn len(&self) -> usize {
        self.n_basis
    }

    pub fn is_empty(&self) -> bool {
        self.n_basis == 0
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.x_lo, self.x_hi)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Non-zero values at `x`: the index of the first function touched and
    /// the (up to) four values starting there. Functions past either end of
    /// the family are reported as zero.
    pub fn local(&self, x: f64) -> (usize, [f64; 4]) {
        let t = (x - self.knots[0]) / self.delta;
        let segments = self.n_basis + 3;
        if !(t >= 0.0) || t >= segments as f64 {
            return (0, [0.0; 4]);
        }
        let seg = (t.floor() as usize).min(segments - 1);
        let u = t - seg as f64;
        let (u2, u3) = (u * u, u * u * u);
        // Piece j of function (seg - j), for j = 0..4.
        let pieces = [
            u3 / 6.0,
            (1.0 + 3.0 * u + 3.0 * u2 - 3.0 * u3) / 6.0,
            (4.0 - 6.0 * u2 + 3.0 * u3) / 6.0,
            (1.0 - 3.0 * u + 3.0 * u2 - u3) / 6.0,
        ];
        // Functions seg-3 ..= seg; clip to the existing family 0..H.
        let first = seg.saturating_sub(3);
        let mut out = [0.0; 4];
        for (slot, h) in (first..=seg).enumerate() {
            if h < self.n_basis {
                out[slot] = pieces[seg - h];
            }
        }
        (first, out)
    }

    /// All `H` basis values at `x`.
    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_basis];
        self.eval_into(x, &mut out);
        out
    }

    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let (first, vals) = self.local(x);
        for (j, v) in vals.into_iter().enumerate() {
            if first + j < self.n_basis {
                out[first + j] = v;
            }
        }
    }

    /// `Σ_h weights[h] b_h(x)` without allocating.
    pub fn combine(&self, weights: &[f64], x: f64) -> f64 {
        let (first, vals) = self.local(x);
        vals.iter()
            .enumerate()
            .filter(|(j, _)| first + j < self.n_basis)
            .map(|(j, v)| v * weights[first + j])
            .sum()
    }

    pub fn design_matrix(&self, xs: &[f64]) -> DesignMatrix {
        let mut values = vec![0.0; xs.len() * self.n_basis];
        for (row, &x) in values.chunks_mut(self.n_basis.max(1)).zip(xs) {
            self.eval_into(x, row);
        }
        DesignMatrix {
            rows: xs.len(),
            cols: self.n_basis,
            values,
        }
    }
}

/// Dense row-major `N × H` spline design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DesignMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, h: usize) -> f64 {
        self.values[i * self.cols + h]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }
}

pub fn design_matrix(basis: &SplineBasis, xs: &[f64]) -> DesignMatrix {
    basis.design_matrix(xs)
}

/// Cross-validation score of one candidate basis size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BicScore {
    #[serde(rename = "H")]
    pub n_basis: usize,
    pub mean_bic: f64,
    pub std_bic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub best: usize,
    pub scores: Vec<BicScore>,
}

impl Selection {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for s in &self.scores {
            w.serialize(s)?;
        }
        w.flush().map_err(|source| FleetError::Io {
            path: "<csv writer>".into(),
            source,
        })
    }
}

/// Options for [`select_h`]. The per-fold fits only need a good maximum a
/// posteriori draw, so they default to a single shorter chain.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    pub folds: usize,
    pub seed: u64,
    pub chains: ChainConfig,
    /// Spline support; defaults to the data range of the selected task.
    pub x_range: Option<(f64, f64)>,
}

impl SelectionConfig {
    pub fn new(folds: usize, seed: u64) -> Self {
        Self {
            folds,
            seed,
            chains: ChainConfig {
                n_chains: 1,
                burn_in: 600,
                n_samples: 600,
                seed,
                ..ChainConfig::default()
            },
            x_range: None,
        }
    }
}

/// Picks the number of splines for the single-task hazard model on the most
/// data-rich task by K-fold cross-validated BIC,
/// `BIC = d ln(n_fold) - 2 ln L̂_fold`, where `L̂` is the held-out likelihood
/// at the best posterior draw and `d = 2 + H + 1` counts the likelihood
/// parameters. Ties go to the smaller `H`.
pub fn select_h(dataset: &FleetDataset, candidates: &[usize], config: &SelectionConfig) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(invalid("candidates", "no candidate basis sizes"));
    }
    if config.folds < 2 {
        return Err(invalid("folds", "need at least 2 folds"));
    }
    let counts = dataset.task_counts();
    let (&richest, &n) = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .ok_or_else(|| FleetError::Empty("dataset has no observations".into()))?;
    if config.folds > n {
        return Err(invalid(
            "folds",
            format!("{} folds exceed the {n} observations of task ({richest})", config.folds),
        ));
    }
    if candidates.len() == 1 {
        return Ok(Selection {
            best: candidates[0],
            scores: vec![BicScore {
                n_basis: candidates[0],
                mean_bic: f64::NAN,
                std_bic: f64::NAN,
            }],
        });
    }

    let task = dataset.filter(|o| o.task() == richest);
    let x_range = match config.x_range {
        Some(r) => r,
        None => task.x_range().expect("non-empty task"),
    };
    let folds = fold_assignment(n, config.folds, config.seed);
    let layout = TaskLayout::single(richest);

    let mut scores = Vec::with_capacity(candidates.len());
    for &h in candidates {
        let hazard = HazardConfig {
            n_basis: h,
            x_range: Some(x_range),
            ..HazardConfig::default()
        };
        let model = HazardModel::new(layout.clone(), &hazard)?;
        let d = (2 + h + 1) as f64;
        let mut bics = Vec::with_capacity(config.folds);
        for fold in 0..config.folds {
            let train = subset(&task, &folds, |f| f != fold);
            let held_out = subset(&task, &folds, |f| f == fold);
            let posterior = model.posterior(&train)?;
            let mut chains = config.chains.clone();
            chains.seed = config.seed ^ ((h as u64) << 32) ^ fold as u64;
            let samples = run_mcmc(posterior.as_ref(), &chains)?;
            let (best, _) = samples.best_draw();
            let ll = model.log_likelihood(best, &held_out)?;
            bics.push(d * (held_out.len() as f64).ln() - 2.0 * ll);
        }
        scores.push(BicScore {
            n_basis: h,
            mean_bic: crate::stats::mean(&bics),
            std_bic: crate::stats::std_dev(&bics),
        });
    }

    let best = scores
        .iter()
        .min_by(|a, b| a.mean_bic.total_cmp(&b.mean_bic).then(a.n_basis.cmp(&b.n_basis)))
        .map(|s| s.n_basis)
        .expect("non-empty candidates");
    Ok(Selection { best, scores })
}

/// Seeded random fold labels with sizes differing by at most one.
fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut labels: Vec<usize> = (0..n).map(|i| i % folds).collect();
    labels.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    labels
}

fn subset(task: &FleetDataset, folds: &[usize], keep: impl Fn(usize) -> bool) -> FleetDataset {
    let obs = task
        .observations()
        .iter()
        .zip(folds)
        .filter(|(_, &f)| keep(f))
        .map(|(o, _)| *o)
        .collect();
    FleetDataset::new(obs).expect("subset of a valid dataset")
}

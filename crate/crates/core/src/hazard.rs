//! Semi-parametric mixed-effects log-hazard model.
//!
//! Task `(k, l)` has mean `α₁ + α₂ x + Σ_h β_h b_h(x)` where the linear
//! effects are partially pooled through `μ_α, σ_α` and the spline weights
//! are tied per group `l` (or across the whole fleet).

use rand::RngCore;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{FleetDataset, TaskId};
use crate::error::{invalid, FleetError, Result};
use crate::inference::{Constraint, LogDensity};
use crate::model::{FleetModel, ModelFamily, TaskLayout};
use crate::splines::SplineBasis;
use crate::stats::{inv_gamma_logpdf, normal_logpdf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HazardHyperPriors {
    /// Means of the Normal prior on `μ_α`.
    pub m_alpha: [f64; 2],
    /// Standard deviations of the Normal prior on `μ_α`.
    pub s_alpha: [f64; 2],
    /// Inverse-gamma shape and scale on each `σ_α`.
    pub a: f64,
    pub b: f64,
    pub noise_shape: f64,
    pub noise_scale: f64,
    /// `σ_h² ~ IG(v, v)`.
    pub shrinkage: f64,
}

impl Default for HazardHyperPriors {
    fn default() -> Self {
        Self {
            m_alpha: [0.0, 1.5],
            s_alpha: [2.0, 0.5],
            a: 1.0,
            b: 1.0,
            noise_shape: 3.0,
            noise_scale: 0.8,
            shrinkage: 1e-3,
        }
    }
}

impl HazardHyperPriors {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.s_alpha[0],
            self.s_alpha[1],
            self.a,
            self.b,
            self.noise_shape,
            self.noise_scale,
            self.shrinkage,
        ];
        if positive.iter().all(|v| *v > 0.0 && v.is_finite()) && self.m_alpha.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(invalid("hyper", "hazard hyper-prior scales must be positive and finite"))
        }
    }
}

/// How the spline weights are shared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaTying {
    /// One weight vector per component group `l`.
    #[default]
    PerGroup,
    /// One weight vector for the whole fleet.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HazardConfig {
    pub n_basis: usize,
    /// Spline support; taken from the data when absent.
    pub x_range: Option<(f64, f64)>,
    pub hyper: HazardHyperPriors,
    pub beta_tying: BetaTying,
}

impl Default for HazardConfig {
    fn default() -> Self {
        Self {
            n_basis: 5,
            x_range: None,
            hyper: HazardHyperPriors::default(),
            beta_tying: BetaTying::PerGroup,
        }
    }
}

/// Structured view of a hazard parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardParams {
    /// `[α₁, α₂]` per task, in layout order.
    pub alpha: Vec<[f64; 2]>,
    /// Spline weights per tying slot (group, or a single global slot).
    pub beta: Vec<Vec<f64>>,
    pub sigma_h: Vec<Vec<f64>>,
    pub mu_alpha: [f64; 2],
    pub sigma_alpha: [f64; 2],
    pub sigma: f64,
}

#[derive(Debug, Clone)]
pub struct HazardModel {
    layout: TaskLayout,
    basis: SplineBasis,
    hyper: HazardHyperPriors,
    tying: BetaTying,
}

impl HazardModel {
    pub fn new(layout: TaskLayout, config: &HazardConfig) -> Result<Self> {
        config.hyper.validate()?;
        let (lo, hi) = config
            .x_range
            .ok_or_else(|| invalid("x_range", "hazard model needs a spline support interval"))?;
        let basis = SplineBasis::new(lo, hi, config.n_basis)?;
        Ok(Self {
            layout,
            basis,
            hyper: config.hyper.clone(),
            tying: config.beta_tying,
        })
    }

    pub fn basis(&self) -> &SplineBasis {
        &self.basis
    }

    pub fn hyper(&self) -> &HazardHyperPriors {
        &self.hyper
    }

    pub fn tying(&self) -> BetaTying {
        self.tying
    }

    fn k(&self) -> usize {
        self.layout.n_tasks()
    }

    fn h(&self) -> usize {
        self.basis.len()
    }

    pub fn n_beta_slots(&self) -> usize {
        match self.tying {
            BetaTying::PerGroup => self.layout.n_groups(),
            BetaTying::Global => 1,
        }
    }

    /// Spline slot used by task `i`.
    pub fn beta_slot(&self, task: usize) -> usize {
        match self.tying {
            BetaTying::PerGroup => self.layout.group_of(task),
            BetaTying::Global => 0,
        }
    }

    pub fn alpha1_index(&self, task: usize) -> usize {
        task
    }

    pub fn alpha2_index(&self, task: usize) -> usize {
        self.k() + task
    }

    pub fn beta_index(&self, slot: usize, h: usize) -> usize {
        2 * self.k() + slot * self.h() + h
    }

    pub fn sigma_h_index(&self, slot: usize, h: usize) -> usize {
        2 * self.k() + (self.n_beta_slots() + slot) * self.h() + h
    }

    pub fn mu_alpha_index(&self, j: usize) -> usize {
        2 * self.k() + 2 * self.n_beta_slots() * self.h() + j
    }

    pub fn sigma_alpha_index(&self, j: usize) -> usize {
        self.mu_alpha_index(2) + j
    }

    pub fn sigma_index(&self) -> usize {
        self.mu_alpha_index(4)
    }

    pub fn pack(&self, params: &HazardParams) -> Result<Vec<f64>> {
        let slots = self.n_beta_slots();
        if params.alpha.len() != self.k() {
            return Err(FleetError::Dimension {
                expected: self.k(),
                got: params.alpha.len(),
            });
        }
        for v in params.beta.iter().chain(&params.sigma_h) {
            if v.len() != self.h() {
                return Err(FleetError::Dimension {
                    expected: self.h(),
                    got: v.len(),
                });
            }
        }
        if params.beta.len() != slots || params.sigma_h.len() != slots {
            return Err(FleetError::Dimension {
                expected: slots,
                got: params.beta.len().min(params.sigma_h.len()),
            });
        }
        let mut theta = vec![0.0; self.dim()];
        for (i, a) in params.alpha.iter().enumerate() {
            theta[self.alpha1_index(i)] = a[0];
            theta[self.alpha2_index(i)] = a[1];
        }
        for s in 0..slots {
            for h in 0..self.h() {
                theta[self.beta_index(s, h)] = params.beta[s][h];
                theta[self.sigma_h_index(s, h)] = params.sigma_h[s][h];
            }
        }
        for j in 0..2 {
            theta[self.mu_alpha_index(j)] = params.mu_alpha[j];
            theta[self.sigma_alpha_index(j)] = params.sigma_alpha[j];
        }
        theta[self.sigma_index()] = params.sigma;
        Ok(theta)
    }

    pub fn unpack(&self, theta: &[f64]) -> Result<HazardParams> {
        self.check_dim(theta)?;
        let slots = self.n_beta_slots();
        Ok(HazardParams {
            alpha: (0..self.k())
                .map(|i| [theta[self.alpha1_index(i)], theta[self.alpha2_index(i)]])
                .collect(),
            beta: (0..slots)
                .map(|s| (0..self.h()).map(|h| theta[self.beta_index(s, h)]).collect())
                .collect(),
            sigma_h: (0..slots)
                .map(|s| (0..self.h()).map(|h| theta[self.sigma_h_index(s, h)]).collect())
                .collect(),
            mu_alpha: [theta[self.mu_alpha_index(0)], theta[self.mu_alpha_index(1)]],
            sigma_alpha: [theta[self.sigma_alpha_index(0)], theta[self.sigma_alpha_index(1)]],
            sigma: theta[self.sigma_index()],
        })
    }

    /// One single-task model per task of this model's layout, each with its
    /// own copy of every parameter (no tying, no shared hyper-parameters).
    pub fn independent_variant(&self) -> Vec<HazardModel> {
        self.layout
            .tasks()
            .iter()
            .map(|&t| HazardModel {
                layout: TaskLayout::single(t),
                basis: self.basis.clone(),
                hyper: self.hyper.clone(),
                tying: self.tying,
            })
            .collect()
    }

    fn prior_unchecked(&self, theta: &[f64]) -> f64 {
        let hp = &self.hyper;
        let sigma = theta[self.sigma_index()];
        let mut lp = inv_gamma_logpdf(sigma, hp.noise_shape, hp.noise_scale);
        for j in 0..2 {
            let mu = theta[self.mu_alpha_index(j)];
            let sa = theta[self.sigma_alpha_index(j)];
            if !(sa > 0.0) {
                return f64::NEG_INFINITY;
            }
            lp += normal_logpdf(mu, hp.m_alpha[j], hp.s_alpha[j]);
            lp += inv_gamma_logpdf(sa, hp.a, hp.b);
        }
        let (mu1, mu2) = (theta[self.mu_alpha_index(0)], theta[self.mu_alpha_index(1)]);
        let (s1, s2) = (theta[self.sigma_alpha_index(0)], theta[self.sigma_alpha_index(1)]);
        for i in 0..self.k() {
            lp += normal_logpdf(theta[self.alpha1_index(i)], mu1, s1);
            lp += normal_logpdf(theta[self.alpha2_index(i)], mu2, s2);
        }
        let v = hp.shrinkage;
        for s in 0..self.n_beta_slots() {
            for h in 0..self.h() {
                let sh = theta[self.sigma_h_index(s, h)];
                if !(sh > 0.0) {
                    return f64::NEG_INFINITY;
                }
                lp += normal_logpdf(theta[self.beta_index(s, h)], 0.0, sh);
                // IG prior on the variance, carried over to the sampled std.
                lp += inv_gamma_logpdf(sh * sh, v, v) + std::f64::consts::LN_2 + sh.ln();
            }
        }
        lp
    }

    fn mean_unchecked(&self, theta: &[f64], task: usize, x: f64) -> f64 {
        let slot = self.beta_slot(task);
        let b0 = self.beta_index(slot, 0);
        theta[self.alpha1_index(task)]
            + theta[self.alpha2_index(task)] * x
            + self.basis.combine(&theta[b0..b0 + self.h()], x)
    }

    fn check_dim(&self, theta: &[f64]) -> Result<()> {
        FleetModel::check_dim(self, theta)
    }
}

impl FleetModel for HazardModel {
    fn family(&self) -> ModelFamily {
        ModelFamily::Hazard
    }

    fn layout(&self) -> &TaskLayout {
        &self.layout
    }

    fn dim(&self) -> usize {
        2 * self.k() + 2 * self.n_beta_slots() * self.h() + 5
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = vec![String::new(); self.dim()];
        for (i, t) in self.layout.tasks().iter().enumerate() {
            names[self.alpha1_index(i)] = format!("alpha1[{t}]");
            names[self.alpha2_index(i)] = format!("alpha2[{t}]");
        }
        for s in 0..self.n_beta_slots() {
            let l = match self.tying {
                BetaTying::PerGroup => self.layout.groups()[s].to_string(),
                BetaTying::Global => "*".to_string(),
            };
            for h in 0..self.h() {
                names[self.beta_index(s, h)] = format!("beta[{},{l}]", h + 1);
                names[self.sigma_h_index(s, h)] = format!("sigma_h[{},{l}]", h + 1);
            }
        }
        for j in 0..2 {
            names[self.mu_alpha_index(j)] = format!("mu_alpha[{}]", j + 1);
            names[self.sigma_alpha_index(j)] = format!("sigma_alpha[{}]", j + 1);
        }
        names[self.sigma_index()] = "sigma".into();
        names
    }

    fn constraints(&self) -> Vec<Constraint> {
        let mut c = vec![Constraint::Real; self.dim()];
        for s in 0..self.n_beta_slots() {
            for h in 0..self.h() {
                c[self.sigma_h_index(s, h)] = Constraint::Positive;
            }
        }
        for j in 0..2 {
            c[self.sigma_alpha_index(j)] = Constraint::Positive;
        }
        c[self.sigma_index()] = Constraint::Positive;
        c
    }

    fn log_prior(&self, theta: &[f64]) -> Result<f64> {
        self.check_dim(theta)?;
        Ok(self.prior_unchecked(theta))
    }

    fn log_likelihood(&self, theta: &[f64], data: &FleetDataset) -> Result<f64> {
        self.check_dim(theta)?;
        let tasks = self.layout.observation_tasks(data)?;
        let sigma = theta[self.sigma_index()];
        Ok(data
            .observations()
            .iter()
            .zip(tasks)
            .map(|(o, t)| normal_logpdf(o.y, self.mean_unchecked(theta, t, o.x), sigma))
            .sum())
    }

    fn posterior<'a>(&'a self, data: &FleetDataset) -> Result<Box<dyn LogDensity + 'a>> {
        let tasks = self.layout.observation_tasks(data)?;
        let rows = data
            .observations()
            .iter()
            .zip(tasks)
            .map(|(o, task)| {
                let (first, vals) = self.basis.local(o.x);
                CachedRow {
                    task,
                    x: o.x,
                    y: o.y,
                    first,
                    vals,
                }
            })
            .collect();
        Ok(Box::new(HazardPosterior {
            model: self,
            rows,
            init: self.initial_point(data),
        }))
    }

    fn initial_point(&self, data: &FleetDataset) -> Vec<f64> {
        let pooled = ols(data.observations().iter().map(|o| (o.x, o.y)));
        let hp = &self.hyper;
        let alpha = self
            .layout
            .tasks()
            .iter()
            .map(|&t| {
                let obs = data.task_data(t);
                ols(obs.iter().map(|o| (o.x, o.y)))
                    .or_else(|| {
                        // Too little data for a slope: borrow the pooled slope.
                        let (a, b) = pooled?;
                        let n = obs.len() as f64;
                        (n > 0.0).then(|| {
                            let r = obs.iter().map(|o| o.y - a - b * o.x).sum::<f64>() / n;
                            (a + r, b)
                        })
                    })
                    .or(pooled)
                    .map(|(a, b)| [a, b])
                    .unwrap_or(hp.m_alpha)
            })
            .collect();
        let slots = self.n_beta_slots();
        let params = HazardParams {
            alpha,
            beta: vec![vec![0.0; self.h()]; slots],
            sigma_h: vec![vec![1.0; self.h()]; slots],
            mu_alpha: hp.m_alpha,
            // Modes of the inverse-gamma priors (the means need not exist).
            sigma_alpha: [hp.b / (hp.a + 1.0); 2],
            sigma: hp.noise_scale / (hp.noise_shape - 1.0).max(1.0),
        };
        self.pack(&params).expect("consistent layout")
    }

    fn mean_at(&self, theta: &[f64], task: usize, x: f64) -> f64 {
        self.mean_unchecked(theta, task, x)
    }

    fn noise_sd(&self, theta: &[f64]) -> f64 {
        theta[self.sigma_index()]
    }

    fn fresh_task(&self, theta: &[f64], l: usize, rng: &mut dyn RngCore) -> Result<Option<(Vec<f64>, usize)>> {
        self.check_dim(theta)?;
        let g = self.layout.group_index(l)?;
        let slot = (0..self.k()).find(|&i| self.layout.group_of(i) == g).expect("group has a task");
        let mut out = theta.to_vec();
        for j in 0..2 {
            let mu = theta[self.mu_alpha_index(j)];
            let sd = theta[self.sigma_alpha_index(j)];
            let idx = if j == 0 { self.alpha1_index(slot) } else { self.alpha2_index(slot) };
            out[idx] = if sd > 0.0 {
                Normal::new(mu, sd).map_err(|e| invalid("sigma_alpha", e.to_string()))?.sample(rng)
            } else {
                mu
            };
        }
        Ok(Some((out, slot)))
    }
}

/// Least-squares line through the points; `None` without two distinct `x`.
fn ols(points: impl Iterator<Item = (f64, f64)>) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = points.collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 1e-12) {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    Some((my - b * mx, b))
}

struct CachedRow {
    task: usize,
    x: f64,
    y: f64,
    first: usize,
    vals: [f64; 4],
}

struct HazardPosterior<'a> {
    model: &'a HazardModel,
    rows: Vec<CachedRow>,
    init: Vec<f64>,
}

impl LogDensity for HazardPosterior<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn constraints(&self) -> Vec<Constraint> {
        self.model.constraints()
    }

    fn names(&self) -> Vec<String> {
        self.model.param_names()
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        let m = self.model;
        let lp = m.prior_unchecked(theta);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        let sigma = theta[m.sigma_index()];
        if !(sigma > 0.0) {
            return f64::NEG_INFINITY;
        }
        let h = m.h();
        let inv_var = 1.0 / (sigma * sigma);
        let mut ss = 0.0;
        for r in &self.rows {
            let b0 = m.beta_index(m.beta_slot(r.task), 0);
            let mut mean = theta[r.task] + theta[m.alpha2_index(r.task)] * r.x;
            for (j, v) in r.vals.iter().enumerate() {
                if r.first + j < h {
                    mean += v * theta[b0 + r.first + j];
                }
            }
            ss += (r.y - mean).powi(2);
        }
        let n = self.rows.len() as f64;
        lp - n * (crate::stats::LN_SQRT_2PI + sigma.ln()) - 0.5 * ss * inv_var
    }

    fn default_init(&self) -> Vec<f64> {
        self.init.clone()
    }
}

impl HazardModel {
    /// The task labels this model covers, in layout order.
    pub fn tasks(&self) -> &[TaskId] {
        self.layout.tasks()
    }
}

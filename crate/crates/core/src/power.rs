//! Segmented power-curve model with hierarchical mixed effects.
//!
//! The cut-in speed `p` is shared by every turbine, the maximum power `Pm`
//! is shared within an operating condition `l`, and the change points
//! `q, r` and first slope `m₁` are partially pooled per turbine.

use rand::RngCore;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::FleetDataset;
use crate::error::{invalid, FleetError, Result};
use crate::inference::{Constraint, LogDensity};
use crate::model::{FleetModel, ModelFamily, TaskLayout};
use crate::stats::{inv_gamma_logpdf, normal_logpdf};

/// Fixed constants of the power-curve prior. Normal priors are given as
/// `(mean, standard deviation)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerHyperPriors {
    pub mu_p: (f64, f64),
    pub mu_q: (f64, f64),
    pub mu_r: (f64, f64),
    /// Inverse-gamma `(shape, scale)` of `σ_cp`.
    pub sigma_cp: (f64, f64),
    pub mu_m1: (f64, f64),
    pub sigma_m1: (f64, f64),
    /// Prior of `Pm` for the normal-operation group.
    pub pm_normal: (f64, f64),
    /// Prior of `Pm` for every other (curtailed) group.
    pub pm_curtailed: (f64, f64),
    /// Group label `l` that denotes normal operation.
    pub normal_group: usize,
    pub noise_shape: f64,
    pub noise_scale: f64,
}

impl Default for PowerHyperPriors {
    fn default() -> Self {
        Self {
            mu_p: (0.2, 0.5),
            mu_q: (0.4, 0.5),
            mu_r: (0.6, 0.5),
            sigma_cp: (1.0, 1.0),
            mu_m1: (2.5, 0.5),
            sigma_m1: (1.0, 1.0),
            pm_normal: (1.0, 0.1),
            pm_curtailed: (0.8, 0.1),
            normal_group: 1,
            noise_shape: 3.0,
            noise_scale: 0.8,
        }
    }
}

impl PowerHyperPriors {
    pub fn validate(&self) -> Result<()> {
        let pairs = [
            self.mu_p,
            self.mu_q,
            self.mu_r,
            self.sigma_cp,
            self.mu_m1,
            self.sigma_m1,
            self.pm_normal,
            self.pm_curtailed,
            (self.noise_shape, self.noise_scale),
        ];
        if pairs.iter().all(|(a, b)| a.is_finite() && *b > 0.0 && b.is_finite())
            && self.sigma_cp.0 > 0.0
            && self.sigma_m1.0 > 0.0
            && self.noise_shape > 0.0
        {
            Ok(())
        } else {
            Err(invalid("hyper", "power hyper-prior scales must be positive and finite"))
        }
    }

    pub fn pm_prior(&self, l: usize) -> (f64, f64) {
        if l == self.normal_group {
            self.pm_normal
        } else {
            self.pm_curtailed
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerConfig {
    pub hyper: PowerHyperPriors,
}

/// Structured view of a power parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerParams {
    pub p: f64,
    /// Per task, in layout order.
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub m1: Vec<f64>,
    /// Per group, in layout order.
    pub pm: Vec<f64>,
    pub mu_p: f64,
    pub mu_q: f64,
    pub mu_r: f64,
    pub sigma_cp: f64,
    pub mu_m1: f64,
    pub sigma_m1: f64,
    pub sigma: f64,
}

/// The segmented mean. `m₂` follows from continuity at `r`.
pub fn segmented_mean(p: f64, q: f64, r: f64, m1: f64, pm: f64, x: f64) -> f64 {
    if x < p {
        0.0
    } else if x < q {
        m1 * (x - p)
    } else if x < r {
        let m2 = (pm - m1 * (q - p)) / (r - q);
        m2 * (x - q) + m1 * (q - p)
    } else {
        pm
    }
}

/// Second slope implied by the other parameters.
pub fn second_slope(p: f64, q: f64, r: f64, m1: f64, pm: f64) -> f64 {
    (pm - m1 * (q - p)) / (r - q)
}

// Fixed positions of the scalar parameters.
const P: usize = 0;
const MU_P: usize = 1;
const MU_Q: usize = 2;
const MU_R: usize = 3;
const SIGMA_CP: usize = 4;
const MU_M1: usize = 5;
const SIGMA_M1: usize = 6;
const SIGMA: usize = 7;
const N_SCALAR: usize = 8;

#[derive(Debug, Clone)]
pub struct PowerModel {
    layout: TaskLayout,
    hyper: PowerHyperPriors,
}

impl PowerModel {
    pub fn new(layout: TaskLayout, config: &PowerConfig) -> Result<Self> {
        config.hyper.validate()?;
        Ok(Self {
            layout,
            hyper: config.hyper.clone(),
        })
    }

    pub fn hyper(&self) -> &PowerHyperPriors {
        &self.hyper
    }

    fn k(&self) -> usize {
        self.layout.n_tasks()
    }

    pub fn p_index(&self) -> usize {
        P
    }

    pub fn sigma_index(&self) -> usize {
        SIGMA
    }

    pub fn sigma_cp_index(&self) -> usize {
        SIGMA_CP
    }

    pub fn q_index(&self, task: usize) -> usize {
        N_SCALAR + task
    }

    pub fn r_index(&self, task: usize) -> usize {
        N_SCALAR + self.k() + task
    }

    pub fn m1_index(&self, task: usize) -> usize {
        N_SCALAR + 2 * self.k() + task
    }

    pub fn pm_index(&self, group: usize) -> usize {
        N_SCALAR + 3 * self.k() + group
    }

    pub fn pack(&self, params: &PowerParams) -> Result<Vec<f64>> {
        for v in [&params.q, &params.r, &params.m1] {
            if v.len() != self.k() {
                return Err(FleetError::Dimension {
                    expected: self.k(),
                    got: v.len(),
                });
            }
        }
        if params.pm.len() != self.layout.n_groups() {
            return Err(FleetError::Dimension {
                expected: self.layout.n_groups(),
                got: params.pm.len(),
            });
        }
        let mut theta = vec![0.0; self.dim()];
        theta[P] = params.p;
        theta[MU_P] = params.mu_p;
        theta[MU_Q] = params.mu_q;
        theta[MU_R] = params.mu_r;
        theta[SIGMA_CP] = params.sigma_cp;
        theta[MU_M1] = params.mu_m1;
        theta[SIGMA_M1] = params.sigma_m1;
        theta[SIGMA] = params.sigma;
        for i in 0..self.k() {
            theta[self.q_index(i)] = params.q[i];
            theta[self.r_index(i)] = params.r[i];
            theta[self.m1_index(i)] = params.m1[i];
        }
        for (g, &pm) in params.pm.iter().enumerate() {
            theta[self.pm_index(g)] = pm;
        }
        Ok(theta)
    }

    pub fn unpack(&self, theta: &[f64]) -> Result<PowerParams> {
        self.check_dim(theta)?;
        Ok(PowerParams {
            p: theta[P],
            q: (0..self.k()).map(|i| theta[self.q_index(i)]).collect(),
            r: (0..self.k()).map(|i| theta[self.r_index(i)]).collect(),
            m1: (0..self.k()).map(|i| theta[self.m1_index(i)]).collect(),
            pm: (0..self.layout.n_groups()).map(|g| theta[self.pm_index(g)]).collect(),
            mu_p: theta[MU_P],
            mu_q: theta[MU_Q],
            mu_r: theta[MU_R],
            sigma_cp: theta[SIGMA_CP],
            mu_m1: theta[MU_M1],
            sigma_m1: theta[SIGMA_M1],
            sigma: theta[SIGMA],
        })
    }

    /// Whether `p < q < r` holds for every task.
    pub fn is_ordered(&self, theta: &[f64]) -> bool {
        let p = theta[P];
        (0..self.k()).all(|i| {
            let (q, r) = (theta[self.q_index(i)], theta[self.r_index(i)]);
            p < q && q < r
        })
    }

    fn prior_unchecked(&self, theta: &[f64]) -> f64 {
        let hp = &self.hyper;
        let (scp, sm1, sigma) = (theta[SIGMA_CP], theta[SIGMA_M1], theta[SIGMA]);
        if !(scp > 0.0 && sm1 > 0.0 && sigma > 0.0) || !self.is_ordered(theta) {
            return f64::NEG_INFINITY;
        }
        let mut lp = normal_logpdf(theta[MU_P], hp.mu_p.0, hp.mu_p.1)
            + normal_logpdf(theta[MU_Q], hp.mu_q.0, hp.mu_q.1)
            + normal_logpdf(theta[MU_R], hp.mu_r.0, hp.mu_r.1)
            + inv_gamma_logpdf(scp, hp.sigma_cp.0, hp.sigma_cp.1)
            + normal_logpdf(theta[MU_M1], hp.mu_m1.0, hp.mu_m1.1)
            + inv_gamma_logpdf(sm1, hp.sigma_m1.0, hp.sigma_m1.1)
            + inv_gamma_logpdf(sigma, hp.noise_shape, hp.noise_scale)
            + normal_logpdf(theta[P], theta[MU_P], scp);
        for i in 0..self.k() {
            lp += normal_logpdf(theta[self.q_index(i)], theta[MU_Q], scp);
            lp += normal_logpdf(theta[self.r_index(i)], theta[MU_R], scp);
            lp += normal_logpdf(theta[self.m1_index(i)], theta[MU_M1], sm1);
        }
        for (g, &l) in self.layout.groups().iter().enumerate() {
            let (m, s) = hp.pm_prior(l);
            lp += normal_logpdf(theta[self.pm_index(g)], m, s);
        }
        lp
    }

    fn mean_unchecked(&self, theta: &[f64], task: usize, x: f64) -> f64 {
        segmented_mean(
            theta[P],
            theta[self.q_index(task)],
            theta[self.r_index(task)],
            theta[self.m1_index(task)],
            theta[self.pm_index(self.layout.group_of(task))],
            x,
        )
    }
}

impl FleetModel for PowerModel {
    fn family(&self) -> ModelFamily {
        ModelFamily::Power
    }

    fn layout(&self) -> &TaskLayout {
        &self.layout
    }

    fn dim(&self) -> usize {
        N_SCALAR + 3 * self.k() + self.layout.n_groups()
    }

    fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = ["p", "mu_p", "mu_q", "mu_r", "sigma_cp", "mu_m1", "sigma_m1", "sigma"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        names.resize(self.dim(), String::new());
        for (i, t) in self.layout.tasks().iter().enumerate() {
            names[self.q_index(i)] = format!("q[{t}]");
            names[self.r_index(i)] = format!("r[{t}]");
            names[self.m1_index(i)] = format!("m1[{t}]");
        }
        for (g, l) in self.layout.groups().iter().enumerate() {
            names[self.pm_index(g)] = format!("Pm[{l}]");
        }
        names
    }

    fn constraints(&self) -> Vec<Constraint> {
        let mut c = vec![Constraint::Real; self.dim()];
        for i in [SIGMA_CP, SIGMA_M1, SIGMA] {
            c[i] = Constraint::Positive;
        }
        c
    }

    fn log_prior(&self, theta: &[f64]) -> Result<f64> {
        self.check_dim(theta)?;
        Ok(self.prior_unchecked(theta))
    }

    fn log_likelihood(&self, theta: &[f64], data: &FleetDataset) -> Result<f64> {
        self.check_dim(theta)?;
        let tasks = self.layout.observation_tasks(data)?;
        if !data.is_empty() && !self.is_ordered(theta) {
            return Err(invalid("theta", "change points violate p < q < r"));
        }
        let sigma = theta[SIGMA];
        Ok(data
            .observations()
            .iter()
            .zip(tasks)
            .map(|(o, t)| normal_logpdf(o.y, self.mean_unchecked(theta, t, o.x), sigma))
            .sum())
    }

    fn posterior<'a>(&'a self, data: &FleetDataset) -> Result<Box<dyn LogDensity + 'a>> {
        let tasks = self.layout.observation_tasks(data)?;
        let rows = data.observations().iter().zip(tasks).map(|(o, t)| (t, o.x, o.y)).collect();
        Ok(Box::new(PowerPosterior {
            model: self,
            rows,
            init: self.initial_point(data),
        }))
    }

    fn initial_point(&self, data: &FleetDataset) -> Vec<f64> {
        let hp = &self.hyper;
        // The largest responses of each group give a rough maximum power.
        let pm = self
            .layout
            .groups()
            .iter()
            .map(|&l| {
                let mut ys: Vec<f64> = data.observations().iter().filter(|o| o.l == l).map(|o| o.y).collect();
                if ys.len() < 10 {
                    return hp.pm_prior(l).0;
                }
                ys.sort_by(f64::total_cmp);
                let top = &ys[ys.len() * 9 / 10..];
                top.iter().sum::<f64>() / top.len() as f64
            })
            .collect();
        let params = PowerParams {
            p: hp.mu_p.0,
            q: vec![hp.mu_q.0; self.k()],
            r: vec![hp.mu_r.0; self.k()],
            m1: vec![hp.mu_m1.0; self.k()],
            pm,
            mu_p: hp.mu_p.0,
            mu_q: hp.mu_q.0,
            mu_r: hp.mu_r.0,
            sigma_cp: hp.sigma_cp.1 / (hp.sigma_cp.0 + 1.0),
            mu_m1: hp.mu_m1.0,
            sigma_m1: hp.sigma_m1.1 / (hp.sigma_m1.0 + 1.0),
            sigma: hp.noise_scale / (hp.noise_shape - 1.0).max(1.0),
        };
        self.pack(&params).expect("consistent layout")
    }

    fn mean_at(&self, theta: &[f64], task: usize, x: f64) -> f64 {
        self.mean_unchecked(theta, task, x)
    }

    fn noise_sd(&self, theta: &[f64]) -> f64 {
        theta[SIGMA]
    }

    fn predict_mean(&self, theta: &[f64], task: crate::dataset::TaskId, x: f64) -> Result<f64> {
        self.check_dim(theta)?;
        let i = self.layout.task_index(task)?;
        let (p, q, r) = (theta[P], theta[self.q_index(i)], theta[self.r_index(i)]);
        if !(p < q && q < r) {
            return Err(invalid("theta", format!("change points of task ({task}) violate p < q < r")));
        }
        Ok(self.mean_unchecked(theta, i, x))
    }

    fn fresh_task(&self, theta: &[f64], l: usize, rng: &mut dyn RngCore) -> Result<Option<(Vec<f64>, usize)>> {
        self.check_dim(theta)?;
        let g = self.layout.group_index(l)?;
        let slot = (0..self.k()).find(|&i| self.layout.group_of(i) == g).expect("group has a task");
        let normal = |m: f64, s: f64| Normal::new(m, s).map_err(|e| invalid("theta", e.to_string()));
        let cp = normal(0.0, theta[SIGMA_CP])?;
        let q = theta[MU_Q] + cp.sample(rng);
        let r = theta[MU_R] + cp.sample(rng);
        let m1 = normal(theta[MU_M1], theta[SIGMA_M1])?.sample(rng);
        if !(theta[P] < q && q < r) {
            return Ok(None);
        }
        let mut out = theta.to_vec();
        out[self.q_index(slot)] = q;
        out[self.r_index(slot)] = r;
        out[self.m1_index(slot)] = m1;
        Ok(Some((out, slot)))
    }
}

struct PowerPosterior<'a> {
    model: &'a PowerModel,
    rows: Vec<(usize, f64, f64)>,
    init: Vec<f64>,
}

impl LogDensity for PowerPosterior<'_> {
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
        let sigma = theta[SIGMA];
        let mut ss = 0.0;
        for &(t, x, y) in &self.rows {
            ss += (y - m.mean_unchecked(theta, t, x)).powi(2);
        }
        let n = self.rows.len() as f64;
        lp - n * (crate::stats::LN_SQRT_2PI + sigma.ln()) - 0.5 * ss / (sigma * sigma)
    }

    fn default_init(&self) -> Vec<f64> {
        self.init.clone()
    }
}

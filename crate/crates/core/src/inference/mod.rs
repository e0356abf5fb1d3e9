//! Gradient-free MCMC: componentwise adaptive random-walk Metropolis with
//! multi-chain execution and convergence diagnostics.

mod diagnostics;
mod samples;
mod sampler;

pub use diagnostics::{diagnostics, DimFlag, Diagnostics};
pub use samples::PosteriorSamples;
pub use sampler::{run_mcmc, ChainConfig, Init};

/// Support of one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    Real,
    /// Strictly positive; sampled on the log scale.
    Positive,
}

/// An unnormalized log density over a constrained parameter vector.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    fn constraints(&self) -> Vec<Constraint> {
        vec![Constraint::Real; self.dim()]
    }

    fn names(&self) -> Vec<String> {
        (1..=self.dim()).map(|i| format!("theta[{i}]")).collect()
    }

    /// `-inf` outside the support; must never be NaN on valid input.
    fn log_density(&self, theta: &[f64]) -> f64;

    /// Starting point used by [`Init::Default`].
    fn default_init(&self) -> Vec<f64> {
        self.constraints()
            .iter()
            .map(|c| match c {
                Constraint::Real => 0.0,
                Constraint::Positive => 1.0,
            })
            .collect()
    }
}

/// A [`LogDensity`] built from a closure.
pub struct FnDensity<F> {
    f: F,
    constraints: Vec<Constraint>,
    names: Vec<String>,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnDensity<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self {
            f,
            constraints: vec![Constraint::Real; dim],
            names: (1..=dim).map(|i| format!("theta[{i}]")).collect(),
        }
    }

    pub fn with_constraints(mut self, constraints: Vec<Constraint>) -> Self {
        assert_eq!(constraints.len(), self.constraints.len());
        self.constraints = constraints;
        self
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        assert_eq!(names.len(), self.constraints.len());
        self.names = names;
        self
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> LogDensity for FnDensity<F> {
    fn dim(&self) -> usize {
        self.constraints.len()
    }

    fn constraints(&self) -> Vec<Constraint> {
        self.constraints.clone()
    }

    fn names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        (self.f)(theta)
    }
}

/// Restricts a density to a subset of its coordinates by pinning the others.
pub struct Conditioned<'a, T: LogDensity + ?Sized> {
    base: &'a T,
    template: Vec<f64>,
    free: Vec<usize>,
}

impl<'a, T: LogDensity + ?Sized> Conditioned<'a, T> {
    /// `fixed` lists `(index, value)` pairs of the base parameter vector;
    /// free coordinates start from `template`.
    pub fn new(base: &'a T, template: Vec<f64>, fixed: &[(usize, f64)]) -> Self {
        assert_eq!(template.len(), base.dim());
        let mut template = template;
        for &(i, v) in fixed {
            template[i] = v;
        }
        let free = (0..base.dim())
            .filter(|i| !fixed.iter().any(|&(j, _)| j == *i))
            .collect();
        Self { base, template, free }
    }

    pub fn free_indices(&self) -> &[usize] {
        &self.free
    }

    /// Expands a free-coordinate vector into the full base vector.
    pub fn expand(&self, free: &[f64]) -> Vec<f64> {
        let mut full = self.template.clone();
        for (&i, &v) in self.free.iter().zip(free) {
            full[i] = v;
        }
        full
    }
}

impl<T: LogDensity + ?Sized> LogDensity for Conditioned<'_, T> {
    fn dim(&self) -> usize {
        self.free.len()
    }

    fn constraints(&self) -> Vec<Constraint> {
        let all = self.base.constraints();
        self.free.iter().map(|&i| all[i]).collect()
    }

    fn names(&self) -> Vec<String> {
        let all = self.base.names();
        self.free.iter().map(|&i| all[i].clone()).collect()
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        self.base.log_density(&self.expand(theta))
    }

    fn default_init(&self) -> Vec<f64> {
        self.free.iter().map(|&i| self.template[i]).collect()
    }
}

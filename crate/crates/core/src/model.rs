//! The interface shared by the hazard and power-curve models.

use std::collections::BTreeMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::dataset::{FleetDataset, TaskId};
use crate::error::{FleetError, Result};
use crate::hazard::{HazardConfig, HazardModel};
use crate::inference::{Constraint, LogDensity};
use crate::power::{PowerConfig, PowerModel};

/// Maps task labels `(k, l)` onto dense indices.
///
/// Tasks are ordered by `(l, k)`, groups by `l`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskLayout {
    tasks: Vec<TaskId>,
    groups: Vec<usize>,
    task_group: Vec<usize>,
    index: BTreeMap<TaskId, usize>,
}

impl TaskLayout {
    pub fn new(mut tasks: Vec<TaskId>) -> Result<Self> {
        if tasks.is_empty() {
            return Err(FleetError::Empty("task layout".into()));
        }
        tasks.sort();
        tasks.dedup();
        let mut groups: Vec<usize> = tasks.iter().map(|t| t.l).collect();
        groups.dedup();
        let task_group = tasks
            .iter()
            .map(|t| groups.iter().position(|&g| g == t.l).expect("group present"))
            .collect();
        let index = tasks.iter().enumerate().map(|(i, t)| (*t, i)).collect();
        Ok(Self {
            tasks,
            groups,
            task_group,
            index,
        })
    }

    pub fn from_dataset(data: &FleetDataset) -> Result<Self> {
        Self::new(data.tasks())
    }

    pub fn single(task: TaskId) -> Self {
        Self::new(vec![task]).expect("one task")
    }

    pub fn tasks(&self) -> &[TaskId] {
        &self.tasks
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    /// Distinct group labels `l`, ascending.
    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn task_index(&self, task: TaskId) -> Result<usize> {
        self.index
            .get(&task)
            .copied()
            .ok_or(FleetError::UnknownTask { k: task.k, l: task.l })
    }

    pub fn group_index(&self, l: usize) -> Result<usize> {
        self.groups
            .iter()
            .position(|&g| g == l)
            .ok_or(FleetError::UnknownTask { k: 0, l })
    }

    /// Group index of task `i`.
    pub fn group_of(&self, i: usize) -> usize {
        self.task_group[i]
    }

    /// Dense task index of each observation.
    pub fn observation_tasks(&self, data: &FleetDataset) -> Result<Vec<usize>> {
        data.observations().iter().map(|o| self.task_index(o.task())).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Hazard,
    Power,
}

/// A hierarchical fleet model with a flat parameter vector.
pub trait FleetModel: Send + Sync {
    fn family(&self) -> ModelFamily;

    fn layout(&self) -> &TaskLayout;

    fn dim(&self) -> usize;

    fn param_names(&self) -> Vec<String>;

    fn constraints(&self) -> Vec<Constraint>;

    fn log_prior(&self, theta: &[f64]) -> Result<f64>;

    fn log_likelihood(&self, theta: &[f64], data: &FleetDataset) -> Result<f64>;

    /// Log posterior for `data` with per-observation work cached.
    fn posterior<'a>(&'a self, data: &FleetDataset) -> Result<Box<dyn LogDensity + 'a>>;

    /// Feasible starting point informed by `data`.
    fn initial_point(&self, data: &FleetDataset) -> Vec<f64>;

    /// Noise-free mean of task `task` (dense index) at `x`. No validation.
    fn mean_at(&self, theta: &[f64], task: usize, x: f64) -> f64;

    fn noise_sd(&self, theta: &[f64]) -> f64;

    /// Replaces the random effects of the first task in group `l` with a
    /// fresh draw from the generating distributions. Returns the modified
    /// vector and the task slot, or `None` when the draw was infeasible.
    fn fresh_task(&self, theta: &[f64], l: usize, rng: &mut dyn RngCore) -> Result<Option<(Vec<f64>, usize)>>;

    fn predict_mean(&self, theta: &[f64], task: TaskId, x: f64) -> Result<f64> {
        self.check_dim(theta)?;
        let i = self.layout().task_index(task)?;
        Ok(self.mean_at(theta, i, x))
    }

    fn log_posterior(&self, theta: &[f64], data: &FleetDataset) -> Result<f64> {
        let lp = self.log_prior(theta)?;
        if lp == f64::NEG_INFINITY {
            return Ok(lp);
        }
        Ok(lp + self.log_likelihood(theta, data)?)
    }

    fn check_dim(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(FleetError::Dimension {
                expected: self.dim(),
                got: theta.len(),
            });
        }
        Ok(())
    }
}

/// Model choice plus its settings, as read from configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Hazard(HazardConfig),
    Power(PowerConfig),
}

impl ModelSpec {
    pub fn family(&self) -> ModelFamily {
        match self {
            ModelSpec::Hazard(_) => ModelFamily::Hazard,
            ModelSpec::Power(_) => ModelFamily::Power,
        }
    }

    /// Builds the model for an explicit layout. A hazard model without a
    /// configured spline range takes it from `range_hint`.
    pub fn build_with(&self, layout: TaskLayout, range_hint: Option<(f64, f64)>) -> Result<Box<dyn FleetModel>> {
        match self {
            ModelSpec::Hazard(cfg) => {
                let mut cfg = cfg.clone();
                if cfg.x_range.is_none() {
                    cfg.x_range = range_hint;
                }
                Ok(Box::new(HazardModel::new(layout, &cfg)?))
            }
            ModelSpec::Power(cfg) => Ok(Box::new(PowerModel::new(layout, cfg)?)),
        }
    }

    /// Builds the model over every task of `data`.
    pub fn build(&self, data: &FleetDataset) -> Result<Box<dyn FleetModel>> {
        self.build_with(TaskLayout::from_dataset(data)?, data.x_range())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_orders_by_group_then_task() {
        let l = TaskLayout::new(vec![TaskId::new(2, 1), TaskId::new(1, 2), TaskId::new(1, 1), TaskId::new(2, 1)]).unwrap();
        assert_eq!(l.tasks(), &[TaskId::new(1, 1), TaskId::new(2, 1), TaskId::new(1, 2)]);
        assert_eq!(l.groups(), &[1, 2]);
        assert_eq!(l.group_of(2), 1);
        assert_eq!(l.task_index(TaskId::new(1, 2)).unwrap(), 2);
        assert!(matches!(l.task_index(TaskId::new(9, 9)), Err(FleetError::UnknownTask { k: 9, l: 9 })));
    }
}

//! Fleet observations: CSV ingestion, z-scoring, stratified splits, empirical
//! hazards and seeded synthetic fleets.

mod hazard;
mod synthetic;

pub use hazard::{empirical_hazard, simulate_failure_times, HazardSample, HazardSeries};
pub use synthetic::{
    presets, simulate_fleet, SyntheticScenario, TruckGroup, TruckScenario, TruckTask, WindGroup,
    WindScenario, WindTask,
};

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, FleetError, Result};

/// One response measurement tagged with its task `k` and group `l` (both 1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: f64,
    pub y: f64,
    pub k: usize,
    pub l: usize,
}

impl Observation {
    pub fn task(&self) -> TaskId {
        TaskId::new(self.k, self.l)
    }
}

/// Task label `(k, l)`. Ordered by group first so that tasks of one group
/// form a contiguous block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskId {
    pub k: usize,
    pub l: usize,
}

impl TaskId {
    pub const fn new(k: usize, l: usize) -> Self {
        Self { k, l }
    }
}

impl Ord for TaskId {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.l, self.k).cmp(&(other.l, other.k))
    }
}

impl PartialOrd for TaskId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.k, self.l)
    }
}

/// Affine z-score map stored alongside a normalized dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationTransform {
    pub mean_x: f64,
    pub std_x: f64,
    pub mean_y: f64,
    pub std_y: f64,
}

impl NormalizationTransform {
    pub fn normalize_x(&self, x: f64) -> f64 {
        (x - self.mean_x) / self.std_x
    }

    pub fn normalize_y(&self, y: f64) -> f64 {
        (y - self.mean_y) / self.std_y
    }

    pub fn denormalize_x(&self, x: f64) -> f64 {
        x * self.std_x + self.mean_x
    }

    pub fn denormalize_y(&self, y: f64) -> f64 {
        y * self.std_y + self.mean_y
    }
}

/// Observations from every task in a fleet.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FleetDataset {
    observations: Vec<Observation>,
    transform: Option<NormalizationTransform>,
}

impl FleetDataset {
    pub fn new(observations: Vec<Observation>) -> Result<Self> {
        for (i, o) in observations.iter().enumerate() {
            if o.k == 0 || o.l == 0 {
                return Err(FleetError::BadRow {
                    row: i + 1,
                    column: if o.k == 0 { "k" } else { "l" }.to_string(),
                    message: "indices are 1-based".to_string(),
                });
            }
            if !o.x.is_finite() || !o.y.is_finite() {
                return Err(FleetError::BadRow {
                    row: i + 1,
                    column: if o.x.is_finite() { "y" } else { "x" }.to_string(),
                    message: "value is not finite".to_string(),
                });
            }
        }
        Ok(Self {
            observations,
            transform: None,
        })
    }

    pub fn with_transform(mut self, transform: Option<NormalizationTransform>) -> Self {
        self.transform = transform;
        self
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn transform(&self) -> Option<&NormalizationTransform> {
        self.transform.as_ref()
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Observation count for every task present.
    pub fn task_counts(&self) -> BTreeMap<TaskId, usize> {
        let mut counts = BTreeMap::new();
        for o in &self.observations {
            *counts.entry(o.task()).or_insert(0) += 1;
        }
        counts
    }

    pub fn tasks(&self) -> Vec<TaskId> {
        self.task_counts().into_keys().collect()
    }

    /// Number of distinct tasks in each group `l`.
    pub fn tasks_per_group(&self) -> BTreeMap<usize, usize> {
        let mut out = BTreeMap::new();
        for task in self.task_counts().keys() {
            *out.entry(task.l).or_insert(0) += 1;
        }
        out
    }

    /// True when the task labels of each group run 1..=K_l without gaps.
    pub fn has_contiguous_tasks(&self) -> bool {
        let mut per_group: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for task in self.task_counts().keys() {
            per_group.entry(task.l).or_default().push(task.k);
        }
        per_group
            .values()
            .all(|ks| ks.iter().enumerate().all(|(i, &k)| k == i + 1))
    }

    pub fn task_data(&self, task: TaskId) -> Vec<Observation> {
        self.observations
            .iter()
            .filter(|o| o.task() == task)
            .copied()
            .collect()
    }

    pub fn filter<F: Fn(&Observation) -> bool>(&self, keep: F) -> Self {
        Self {
            observations: self.observations.iter().filter(|o| keep(o)).copied().collect(),
            transform: self.transform,
        }
    }

    /// Relabels every observation as task (1, 1).
    pub fn collapsed(&self) -> Self {
        Self {
            observations: self
                .observations
                .iter()
                .map(|o| Observation { k: 1, l: 1, ..*o })
                .collect(),
            transform: self.transform,
        }
    }

    pub fn x_range(&self) -> Option<(f64, f64)> {
        let mut it = self.observations.iter().map(|o| o.x);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), x| (lo.min(x), hi.max(x))))
    }

    /// Writes the canonical `x,y,k,l` CSV.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "y", "k", "l"])?;
        for o in &self.observations {
            w.write_record(&[
                o.x.to_string(),
                o.y.to_string(),
                o.k.to_string(),
                o.l.to_string(),
            ])?;
        }
        w.flush().map_err(|source| FleetError::Io {
            path: "<csv writer>".into(),
            source,
        })?;
        Ok(())
    }
}

/// Column names used by [`load_csv`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub x: String,
    pub y: String,
    pub k: String,
    pub l: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            x: "x".into(),
            y: "y".into(),
            k: "k".into(),
            l: "l".into(),
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<FleetDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| FleetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file, schema)
}

/// Parses a fleet CSV from any reader. Row numbers in errors are 1-based
/// data rows (the header is row 0).
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<FleetDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| FleetError::MissingColumn(name.to_string()))
    };
    let (ix, iy, ik, il) = (
        column(&schema.x)?,
        column(&schema.y)?,
        column(&schema.k)?,
        column(&schema.l)?,
    );

    let mut observations = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| FleetError::BadRow {
            row,
            column: "*".into(),
            message: e.to_string(),
        })?;
        let field = |idx: usize, name: &str| -> Result<&str> {
            record.get(idx).ok_or_else(|| FleetError::BadRow {
                row,
                column: name.to_string(),
                message: "missing field".into(),
            })
        };
        let real = |idx: usize, name: &str| -> Result<f64> {
            let raw = field(idx, name)?;
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(FleetError::BadRow {
                    row,
                    column: name.to_string(),
                    message: format!("cannot parse `{raw}` as a finite number"),
                }),
            }
        };
        let index = |idx: usize, name: &str| -> Result<usize> {
            let raw = field(idx, name)?;
            match raw.parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v),
                _ => Err(FleetError::BadRow {
                    row,
                    column: name.to_string(),
                    message: format!("cannot parse `{raw}` as a positive integer"),
                }),
            }
        };
        observations.push(Observation {
            x: real(ix, &schema.x)?,
            y: real(iy, &schema.y)?,
            k: index(ik, &schema.k)?,
            l: index(il, &schema.l)?,
        });
    }
    if observations.is_empty() {
        return Err(FleetError::Empty("csv contains no data rows".into()));
    }
    let dataset = FleetDataset::new(observations)?;
    if !dataset.has_contiguous_tasks() {
        log::warn!("task labels are not contiguous within every group");
    }
    for (task, n) in dataset.task_counts() {
        log::debug!("task ({task}): {n} observations");
    }
    Ok(dataset)
}

fn population_moments(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Z-scores `x` and `y` with the population (divide-by-n) standard deviation.
pub fn zscore_normalize(dataset: &FleetDataset) -> Result<(FleetDataset, NormalizationTransform)> {
    if dataset.len() < 2 {
        return Err(invalid("dataset", "z-scoring needs at least 2 observations"));
    }
    let obs = dataset.observations();
    let (mean_x, std_x) = population_moments(obs.iter().map(|o| o.x));
    let (mean_y, std_y) = population_moments(obs.iter().map(|o| o.y));
    if !(std_x > 0.0) {
        return Err(FleetError::Degenerate("column x has zero variance".into()));
    }
    if !(std_y > 0.0) {
        return Err(FleetError::Degenerate("column y has zero variance".into()));
    }
    let transform = NormalizationTransform {
        mean_x,
        std_x,
        mean_y,
        std_y,
    };
    let normalized = obs
        .iter()
        .map(|o| Observation {
            x: transform.normalize_x(o.x),
            y: transform.normalize_y(o.y),
            ..*o
        })
        .collect();
    Ok((
        FleetDataset {
            observations: normalized,
            transform: Some(transform),
        },
        transform,
    ))
}

/// Maps a normalized dataset back to original units using its stored transform.
pub fn denormalize(dataset: &FleetDataset) -> Result<FleetDataset> {
    let t = dataset
        .transform
        .ok_or_else(|| invalid("dataset", "dataset carries no normalization transform"))?;
    Ok(FleetDataset {
        observations: dataset
            .observations
            .iter()
            .map(|o| Observation {
                x: t.denormalize_x(o.x),
                y: t.denormalize_y(o.y),
                ..*o
            })
            .collect(),
        transform: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    Random,
    Ordered,
}

/// Per-task train fraction and ordering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub fraction: f64,
    pub mode: SplitMode,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl SplitSpec {
    pub fn random(fraction: f64, seed: u64) -> Self {
        Self {
            fraction,
            mode: SplitMode::Random,
            seed: Some(seed),
        }
    }

    pub fn ordered(fraction: f64) -> Self {
        Self {
            fraction,
            mode: SplitMode::Ordered,
            seed: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: FleetDataset,
    pub test: FleetDataset,
    /// Tasks too small to split, sent entirely to `train`.
    pub warnings: Vec<String>,
}

/// Stratified train/test split: each task keeps `floor(fraction * n)` rows
/// (at least one) for training.
pub fn split_train_test(dataset: &FleetDataset, spec: &SplitSpec) -> Result<Split> {
    if !(spec.fraction > 0.0 && spec.fraction < 1.0) {
        return Err(invalid("fraction", format!("{} is not in (0, 1)", spec.fraction)));
    }
    let mut rng = match spec.mode {
        SplitMode::Random => {
            let seed = spec
                .seed
                .ok_or_else(|| invalid("seed", "random split mode requires a seed"))?;
            Some(ChaCha8Rng::seed_from_u64(seed))
        }
        SplitMode::Ordered => None,
    };

    let mut rows_by_task: BTreeMap<TaskId, Vec<usize>> = BTreeMap::new();
    for (i, o) in dataset.observations.iter().enumerate() {
        rows_by_task.entry(o.task()).or_default().push(i);
    }

    let mut in_train = vec![false; dataset.len()];
    let mut warnings = Vec::new();
    for (task, mut rows) in rows_by_task {
        let n = rows.len();
        if n < 2 {
            warnings.push(format!(
                "task ({task}) has {n} observation(s); all assigned to train"
            ));
            rows.iter().for_each(|&i| in_train[i] = true);
            continue;
        }
        let n_train = ((spec.fraction * n as f64).floor() as usize).clamp(1, n);
        if let Some(rng) = rng.as_mut() {
            rows.shuffle(rng);
        }
        rows[..n_train].iter().for_each(|&i| in_train[i] = true);
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    let pick = |flag: bool| FleetDataset {
        observations: dataset
            .observations
            .iter()
            .zip(&in_train)
            .filter(|(_, &t)| t == flag)
            .map(|(o, _)| *o)
            .collect(),
        transform: dataset.transform,
    };
    Ok(Split {
        train: pick(true),
        test: pick(false),
        warnings,
    })
}

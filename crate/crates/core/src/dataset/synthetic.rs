use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{FleetDataset, Observation, TaskId};
use crate::error::{invalid, Result};
use crate::power::segmented_mean;
use crate::splines::SplineBasis;

/// A seeded synthetic fleet with known parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SyntheticScenario {
    TruckHazard(TruckScenario),
    WindPower(WindScenario),
}

/// Log-hazard data: `y = α₁ + α₂ x + Σ_h β_h^l b_h(x) + ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruckScenario {
    pub seed: u64,
    pub x_range: (f64, f64),
    pub noise: f64,
    /// Size of the spline family the discrepancy weights refer to.
    pub n_basis: usize,
    pub groups: Vec<TruckGroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruckGroup {
    pub l: usize,
    pub beta: Vec<f64>,
    pub tasks: Vec<TruckTask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruckTask {
    pub k: usize,
    pub n: usize,
    pub alpha1: f64,
    pub alpha2: f64,
}

/// Power data from the segmented curve plus Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindScenario {
    pub seed: u64,
    pub x_range: (f64, f64),
    pub noise: f64,
    pub p: f64,
    pub groups: Vec<WindGroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindGroup {
    pub l: usize,
    pub pm: f64,
    pub tasks: Vec<WindTask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindTask {
    pub k: usize,
    pub n: usize,
    pub q: f64,
    pub r: f64,
    pub m1: f64,
}

impl SyntheticScenario {
    pub fn seed(&self) -> u64 {
        match self {
            SyntheticScenario::TruckHazard(s) => s.seed,
            SyntheticScenario::WindPower(s) => s.seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            SyntheticScenario::TruckHazard(s) => s.seed = seed,
            SyntheticScenario::WindPower(s) => s.seed = seed,
        }
        self
    }

    pub fn x_range(&self) -> (f64, f64) {
        match self {
            SyntheticScenario::TruckHazard(s) => s.x_range,
            SyntheticScenario::WindPower(s) => s.x_range,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi, noise) = match self {
            SyntheticScenario::TruckHazard(s) => (s.x_range.0, s.x_range.1, s.noise),
            SyntheticScenario::WindPower(s) => (s.x_range.0, s.x_range.1, s.noise),
        };
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(invalid("x_range", format!("[{lo}, {hi}] is not an interval")));
        }
        if !(noise >= 0.0) || !noise.is_finite() {
            return Err(invalid("noise", "noise std must be finite and non-negative"));
        }
        let mut seen = std::collections::BTreeSet::new();
        let mut check_task = |k: usize, l: usize| {
            if k == 0 || l == 0 {
                return Err(invalid("tasks", "task and group labels are 1-based"));
            }
            if !seen.insert(TaskId::new(k, l)) {
                return Err(invalid("tasks", format!("task ({k},{l}) listed twice")));
            }
            Ok(())
        };
        match self {
            SyntheticScenario::TruckHazard(s) => {
                if s.n_basis < 1 {
                    return Err(invalid("n_basis", "need at least one basis function"));
                }
                for g in &s.groups {
                    if g.beta.len() != s.n_basis {
                        return Err(invalid(
                            "beta",
                            format!("group {} has {} weights for {} basis functions", g.l, g.beta.len(), s.n_basis),
                        ));
                    }
                    for t in &g.tasks {
                        check_task(t.k, g.l)?;
                    }
                }
            }
            SyntheticScenario::WindPower(s) => {
                for g in &s.groups {
                    for t in &g.tasks {
                        check_task(t.k, g.l)?;
                        if !(s.p < t.q && t.q < t.r) {
                            return Err(invalid(
                                "change_points",
                                format!("task ({},{}) violates p < q < r: {} , {}, {}", t.k, g.l, s.p, t.q, t.r),
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Noise-free mean of task `(k, l)` at `x`, or `None` for an unknown task.
    pub fn true_mean(&self, task: TaskId, x: f64) -> Option<f64> {
        match self {
            SyntheticScenario::TruckHazard(s) => {
                let g = s.groups.iter().find(|g| g.l == task.l)?;
                let t = g.tasks.iter().find(|t| t.k == task.k)?;
                let basis = SplineBasis::new(s.x_range.0, s.x_range.1, s.n_basis).ok()?;
                Some(t.alpha1 + t.alpha2 * x + basis.combine(&g.beta, x))
            }
            SyntheticScenario::WindPower(s) => {
                let g = s.groups.iter().find(|g| g.l == task.l)?;
                let t = g.tasks.iter().find(|t| t.k == task.k)?;
                Some(segmented_mean(s.p, t.q, t.r, t.m1, g.pm, x))
            }
        }
    }

    /// True parameter values under the canonical parameter names.
    pub fn truth(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        match self {
            SyntheticScenario::TruckHazard(s) => {
                for g in &s.groups {
                    for t in &g.tasks {
                        out.push((format!("alpha1[{},{}]", t.k, g.l), t.alpha1));
                        out.push((format!("alpha2[{},{}]", t.k, g.l), t.alpha2));
                    }
                }
                for g in &s.groups {
                    for (h, b) in g.beta.iter().enumerate() {
                        out.push((format!("beta[{},{}]", h + 1, g.l), *b));
                    }
                }
                out.push(("sigma".into(), s.noise));
            }
            SyntheticScenario::WindPower(s) => {
                out.push(("p".into(), s.p));
                for g in &s.groups {
                    for t in &g.tasks {
                        out.push((format!("q[{},{}]", t.k, g.l), t.q));
                        out.push((format!("r[{},{}]", t.k, g.l), t.r));
                        out.push((format!("m1[{},{}]", t.k, g.l), t.m1));
                    }
                }
                for g in &s.groups {
                    out.push((format!("Pm[{}]", g.l), g.pm));
                }
                out.push(("sigma".into(), s.noise));
            }
        }
        out
    }

    pub fn write_truth_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["name", "value"])?;
        for (n, v) in self.truth() {
            w.write_record([n, v.to_string()])?;
        }
        w.flush().map_err(|e| crate::error::FleetError::Io {
            path: "<truth>".into(),
            source: e,
        })?;
        Ok(())
    }
}

/// Draws a dataset from `scenario`. Inputs are uniform on the scenario
/// range; tasks are generated in `(l, k)` order.
pub fn simulate_fleet(scenario: &SyntheticScenario) -> Result<FleetDataset> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed());
    let (lo, hi) = scenario.x_range();
    let mut tasks: Vec<(TaskId, usize, f64)> = match scenario {
        SyntheticScenario::TruckHazard(s) => s
            .groups
            .iter()
            .flat_map(|g| g.tasks.iter().map(move |t| (TaskId::new(t.k, g.l), t.n, s.noise)))
            .collect(),
        SyntheticScenario::WindPower(s) => s
            .groups
            .iter()
            .flat_map(|g| g.tasks.iter().map(move |t| (TaskId::new(t.k, g.l), t.n, s.noise)))
            .collect(),
    };
    tasks.sort_by_key(|t| t.0);
    let mut obs = Vec::new();
    for (task, n, noise) in tasks {
        for _ in 0..n {
            let x = rng.random_range(lo..hi);
            let e: f64 = rng.sample(StandardNormal);
            let mean = scenario.true_mean(task, x).expect("task from scenario");
            obs.push(Observation {
                x,
                y: mean + noise * e,
                k: task.k,
                l: task.l,
            });
        }
    }
    FleetDataset::new(obs)
}

/// Bundled scenarios.
pub mod presets {
    use super::*;

    /// Task sizes of the single-component truck fleet (437 observations).
    pub const TRUCK_SIZES: [usize; 8] = [180, 108, 70, 49, 15, 7, 7, 1];

    const TRUCK_ALPHA: [(f64, f64); 8] = [
        (0.10, 1.20),
        (-0.20, 0.90),
        (0.30, 1.40),
        (-0.10, 1.00),
        (0.20, 1.30),
        (-0.30, 0.80),
        (0.00, 1.10),
        (0.15, 1.25),
    ];

    /// Spline discrepancy of the truck fleet: five active weights of
    /// alternating sign.
    pub const TRUCK_BETA: [f64; 5] = [1.0, -1.4, 1.6, -1.4, 1.0];

    /// One component group, eight sub-fleets with the given sizes.
    pub fn truck(seed: u64) -> SyntheticScenario {
        let tasks = TRUCK_SIZES
            .iter()
            .zip(TRUCK_ALPHA)
            .enumerate()
            .map(|(i, (&n, (a1, a2)))| TruckTask {
                k: i + 1,
                n,
                alpha1: a1,
                alpha2: a2,
            })
            .collect();
        SyntheticScenario::TruckHazard(TruckScenario {
            seed,
            x_range: (-1.7, 1.7),
            noise: 0.25,
            n_basis: 5,
            groups: vec![TruckGroup {
                l: 1,
                beta: TRUCK_BETA.to_vec(),
                tasks,
            }],
        })
    }

    /// Two component groups of three sub-fleets each whose discrepancies
    /// differ in shape.
    pub fn truck_two_component(seed: u64) -> SyntheticScenario {
        let group = |l: usize, beta: Vec<f64>, sizes: [usize; 3], alpha: [(f64, f64); 3]| TruckGroup {
            l,
            beta,
            tasks: sizes
                .iter()
                .zip(alpha)
                .enumerate()
                .map(|(i, (&n, (a1, a2)))| TruckTask {
                    k: i + 1,
                    n,
                    alpha1: a1,
                    alpha2: a2,
                })
                .collect(),
        };
        SyntheticScenario::TruckHazard(TruckScenario {
            seed,
            x_range: (-1.7, 1.7),
            noise: 0.25,
            n_basis: 5,
            groups: vec![
                group(1, vec![0.0, 0.9, 0.0, -0.9, 0.0], [90, 40, 12], [(0.1, 1.2), (-0.2, 0.9), (0.2, 1.1)]),
                group(2, vec![0.0, -0.9, 0.0, 0.9, 0.0], [80, 45, 20], [(-0.1, 1.0), (0.3, 1.3), (0.0, 0.8)]),
            ],
        })
    }

    /// Three turbines under normal operation and two of them also curtailed.
    /// The first slope is shallower than the second so both change points
    /// are visible in the data.
    pub fn wind(seed: u64) -> SyntheticScenario {
        SyntheticScenario::WindPower(WindScenario {
            seed,
            x_range: (0.0, 1.0),
            noise: 0.05,
            p: 0.2,
            groups: vec![
                WindGroup {
                    l: 1,
                    pm: 1.0,
                    tasks: vec![
                        WindTask { k: 1, n: 215, q: 0.40, r: 0.60, m1: 1.8 },
                        WindTask { k: 2, n: 374, q: 0.42, r: 0.62, m1: 1.7 },
                        WindTask { k: 3, n: 1169, q: 0.38, r: 0.58, m1: 1.9 },
                    ],
                },
                WindGroup {
                    l: 2,
                    pm: 0.8,
                    tasks: vec![
                        WindTask { k: 2, n: 127, q: 0.41, r: 0.55, m1: 1.8 },
                        WindTask { k: 3, n: 231, q: 0.39, r: 0.53, m1: 1.9 },
                    ],
                },
            ],
        })
    }

    /// A few dozen hazard observations over two tasks; for quick smoke runs.
    pub fn tiny(seed: u64) -> SyntheticScenario {
        SyntheticScenario::TruckHazard(TruckScenario {
            seed,
            x_range: (-1.5, 1.5),
            noise: 0.3,
            n_basis: 3,
            groups: vec![TruckGroup {
                l: 1,
                beta: vec![0.0, 0.5, 0.0],
                tasks: vec![
                    TruckTask { k: 1, n: 24, alpha1: 0.0, alpha2: 1.2 },
                    TruckTask { k: 2, n: 8, alpha1: 0.3, alpha2: 0.9 },
                ],
            }],
        })
    }

    pub fn by_name(name: &str, seed: u64) -> Option<SyntheticScenario> {
        match name {
            "truck" => Some(truck(seed)),
            "truck_two_component" => Some(truck_two_component(seed)),
            "wind" => Some(wind(seed)),
            "tiny" => Some(tiny(seed)),
            _ => None,
        }
    }
}

//! Utility-based choice of a power commitment level and the expected value
//! of perfectly knowing the wind speed before committing.

use std::io::Write;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, FleetError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityLevel {
    pub name: String,
    /// Power that must be met or exceeded for the payout.
    pub threshold: f64,
    pub payout: f64,
    /// Non-positive amount incurred when the threshold is missed.
    pub penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityTable {
    pub levels: Vec<UtilityLevel>,
}

impl Default for UtilityTable {
    fn default() -> Self {
        let level = |name: &str, threshold, payout, penalty| UtilityLevel {
            name: name.into(),
            threshold,
            payout,
            penalty,
        };
        Self {
            levels: vec![
                level("L0", 0.0, 0.0, 0.0),
                level("L1", 0.5, 0.3, -0.3),
                level("L2", 0.75, 0.75, -1.0),
            ],
        }
    }
}

impl UtilityTable {
    pub fn validate(&self) -> Result<()> {
        let first = self
            .levels
            .first()
            .ok_or_else(|| invalid("levels", "utility table has no levels"))?;
        if first.payout != 0.0 || first.penalty != 0.0 {
            return Err(invalid("levels", "the first level must have zero payout and zero penalty"));
        }
        for w in self.levels.windows(2) {
            if !(w[0].threshold <= w[1].threshold) {
                return Err(invalid("levels", "thresholds must be non-decreasing"));
            }
        }
        for l in &self.levels {
            if !(l.payout >= 0.0) || !(l.penalty <= 0.0) || !l.threshold.is_finite() {
                return Err(invalid(
                    "levels",
                    format!("level {} needs payout >= 0, penalty <= 0 and a finite threshold", l.name),
                ));
            }
        }
        Ok(())
    }

    /// Utility of committing to `level` when the delivered power is `y`.
    pub fn utility(&self, level: usize, y: f64) -> f64 {
        let l = &self.levels[level];
        if y >= l.threshold {
            l.payout
        } else {
            l.penalty
        }
    }
}

/// Distribution of the (normalised) wind speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WindPrior {
    Beta { a: f64, b: f64 },
    Point { x: f64 },
    /// Finite support with (unnormalised) weights.
    Discrete { values: Vec<f64>, weights: Vec<f64> },
}

impl Default for WindPrior {
    fn default() -> Self {
        WindPrior::Beta { a: 4.0, b: 2.0 }
    }
}

impl WindPrior {
    pub fn validate(&self) -> Result<()> {
        match self {
            WindPrior::Beta { a, b } => {
                if !(*a > 0.0 && *b > 0.0) {
                    return Err(invalid("wind", "beta shapes must be positive"));
                }
            }
            WindPrior::Point { x } => {
                if !x.is_finite() {
                    return Err(invalid("wind", "point mass must be finite"));
                }
            }
            WindPrior::Discrete { values, weights } => {
                if values.is_empty() || values.len() != weights.len() {
                    return Err(invalid("wind", "need one weight per support point"));
                }
                if weights.iter().any(|w| !(*w >= 0.0)) || !(weights.iter().sum::<f64>() > 0.0) {
                    return Err(invalid("wind", "weights must be non-negative with a positive sum"));
                }
            }
        }
        Ok(())
    }

    /// True when the prior carries no uncertainty at all.
    pub fn is_degenerate(&self) -> bool {
        match self {
            WindPrior::Beta { .. } => false,
            WindPrior::Point { .. } => true,
            WindPrior::Discrete { values, weights } => {
                let mut support = values.iter().zip(weights).filter(|(_, w)| **w > 0.0).map(|(v, _)| *v);
                let first = support.next();
                support.all(|v| Some(v) == first)
            }
        }
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        match self {
            WindPrior::Beta { a, b } => Beta::new(*a, *b).expect("validated shapes").sample(rng),
            WindPrior::Point { x } => *x,
            WindPrior::Discrete { values, weights } => {
                let total: f64 = weights.iter().sum();
                let mut u = rng.random::<f64>() * total;
                for (v, w) in values.iter().zip(weights) {
                    if u < *w {
                        return *v;
                    }
                    u -= w;
                }
                *values.last().expect("validated support")
            }
        }
    }
}

/// Draws a power value given a wind speed.
pub type PowerSampler<'a> = dyn Fn(f64, &mut dyn RngCore) -> f64 + Sync + 'a;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UtilityEstimate {
    pub mean: f64,
    /// Monte Carlo standard error.
    pub se: f64,
}

fn estimate(p_hit: f64, n: usize, payout: f64, penalty: f64) -> UtilityEstimate {
    let mean = p_hit * payout + (1.0 - p_hit) * penalty;
    let se = (p_hit * (1.0 - p_hit) / n as f64).sqrt() * (payout - penalty).abs();
    UtilityEstimate { mean, se }
}

/// Expected utility of every level from one common set of `n_mc` power
/// draws (wind drawn from `wind`, then power from `sampler`).
pub fn expected_utilities(
    sampler: &PowerSampler<'_>,
    wind: &WindPrior,
    table: &UtilityTable,
    n_mc: usize,
    seed: u64,
) -> Result<Vec<UtilityEstimate>> {
    table.validate()?;
    wind.validate()?;
    if n_mc < 1 {
        return Err(invalid("n_mc", "need at least one Monte Carlo draw"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ys: Vec<f64> = (0..n_mc)
        .map(|_| {
            let x = wind.sample(&mut rng);
            sampler(x, &mut rng)
        })
        .collect();
    Ok(utilities_from_draws(&ys, table))
}

fn utilities_from_draws(ys: &[f64], table: &UtilityTable) -> Vec<UtilityEstimate> {
    table
        .levels
        .iter()
        .map(|l| {
            let hits = ys.iter().filter(|&&y| y >= l.threshold).count();
            estimate(hits as f64 / ys.len() as f64, ys.len(), l.payout, l.penalty)
        })
        .collect()
}

/// Expected utility of committing to `level`.
pub fn expected_utility(
    sampler: &PowerSampler<'_>,
    wind: &WindPrior,
    level: usize,
    table: &UtilityTable,
    n_mc: usize,
    seed: u64,
) -> Result<UtilityEstimate> {
    if level >= table.levels.len() {
        return Err(invalid("level", format!("level {level} is not in the utility table")));
    }
    Ok(expected_utilities(sampler, wind, table, n_mc, seed)?[level])
}

/// Index of the highest utility; ties go to the lowest level.
pub fn optimal_action(utilities: &[f64]) -> Result<usize> {
    if utilities.is_empty() {
        return Err(invalid("utilities", "need at least one level"));
    }
    let mut best = 0;
    for (i, &u) in utilities.iter().enumerate().skip(1) {
        if u > utilities[best] {
            best = i;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VopiResult {
    pub vopi: f64,
    pub vopi_se: f64,
    /// Mean over measurements of the re-optimised expected utility.
    pub preposterior: f64,
    pub preposterior_se: f64,
    /// Expected utility of the best commitment without a measurement.
    pub prior_optimal: f64,
    pub prior_level: usize,
    pub prior_utilities: Vec<f64>,
    /// Per hypothetical measurement: wind speed, chosen level, its utility.
    pub measurements: Vec<(f64, usize, f64)>,
}

impl VopiResult {
    /// `x_m,level,utility` rows for a histogram of per-measurement utilities.
    pub fn write_measurements_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x_m", "level", "utility"])?;
        for (x, l, u) in &self.measurements {
            w.write_record([x.to_string(), l.to_string(), u.to_string()])?;
        }
        w.flush().map_err(|e| FleetError::Io {
            path: "<measurements>".into(),
            source: e,
        })?;
        Ok(())
    }
}

/// Preposterior value of perfectly measuring the wind speed.
///
/// Each of `n_outer` hypothetical measurements is drawn from the prior and
/// the level re-optimised given `n_inner` power draws at that speed. The
/// prior-optimal utility is computed from the same power draws, so the
/// estimate is a paired difference.
pub fn vopi(
    sampler: &PowerSampler<'_>,
    wind: &WindPrior,
    table: &UtilityTable,
    n_outer: usize,
    n_inner: usize,
    seed: u64,
) -> Result<VopiResult> {
    table.validate()?;
    wind.validate()?;
    if n_outer < 1 || n_inner < 1 {
        return Err(invalid("n_outer", "need at least one outer and one inner draw"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_levels = table.levels.len();
    let mut per_level: Vec<Vec<f64>> = Vec::with_capacity(n_outer);
    let mut xs = Vec::with_capacity(n_outer);
    for _ in 0..n_outer {
        let x = wind.sample(&mut rng);
        let ys: Vec<f64> = (0..n_inner).map(|_| sampler(x, &mut rng)).collect();
        per_level.push(utilities_from_draws(&ys, table).iter().map(|u| u.mean).collect());
        xs.push(x);
    }
    let prior_utilities: Vec<f64> = (0..n_levels)
        .map(|l| per_level.iter().map(|u| u[l]).sum::<f64>() / n_outer as f64)
        .collect();
    let prior_level = optimal_action(&prior_utilities)?;
    let prior_optimal = prior_utilities[prior_level];

    if wind.is_degenerate() {
        // Measuring a known quantity changes nothing.
        let measurements = xs.iter().map(|&x| (x, prior_level, prior_optimal)).collect();
        return Ok(VopiResult {
            vopi: 0.0,
            vopi_se: 0.0,
            preposterior: prior_optimal,
            preposterior_se: 0.0,
            prior_optimal,
            prior_level,
            prior_utilities,
            measurements,
        });
    }

    let mut measurements = Vec::with_capacity(n_outer);
    let mut gains = Vec::with_capacity(n_outer);
    for (x, u) in xs.iter().zip(&per_level) {
        let best = optimal_action(u)?;
        measurements.push((*x, best, u[best]));
        gains.push(u[best] - u[prior_level]);
    }
    let preposterior = measurements.iter().map(|m| m.2).sum::<f64>() / n_outer as f64;
    let vopi = gains.iter().sum::<f64>() / n_outer as f64;
    let se = |xs: &[f64], m: f64| {
        if n_outer > 1 {
            let var = xs.iter().map(|g| (g - m).powi(2)).sum::<f64>() / (n_outer - 1) as f64;
            (var / n_outer as f64).sqrt()
        } else {
            0.0
        }
    };
    let vopi_se = se(&gains, vopi);
    let best: Vec<f64> = measurements.iter().map(|m| m.2).collect();
    let preposterior_se = se(&best, preposterior);
    Ok(VopiResult {
        vopi,
        vopi_se,
        preposterior,
        preposterior_se,
        prior_optimal,
        prior_level,
        prior_utilities,
        measurements,
    })
}

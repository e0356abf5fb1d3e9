use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, FleetError, Result};

/// One empirical hazard estimate located at the midpoint of its interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HazardSample {
    pub t: f64,
    pub hazard: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HazardSeries {
    pub samples: Vec<HazardSample>,
    /// Interval indices with failures but no surviving units.
    pub skipped: Vec<usize>,
}

/// Empirical hazard: for each interval that contains at least one failure,
/// the number failed in the interval over the number still in service at
/// its start.
pub fn empirical_hazard(failure_times: &[f64], n_units: usize, interval: f64) -> Result<HazardSeries> {
    if !(interval > 0.0) || !interval.is_finite() {
        return Err(invalid("interval", "must be a positive finite length"));
    }
    if failure_times.len() > n_units {
        return Err(invalid(
            "n_units",
            format!("{} failures exceed {} units", failure_times.len(), n_units),
        ));
    }
    let mut bins = Vec::with_capacity(failure_times.len());
    for &t in failure_times {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(invalid("failure_times", format!("{t} is not a non-negative time")));
        }
        bins.push((t / interval).floor() as usize);
    }
    bins.sort_unstable();

    let mut series = HazardSeries::default();
    let mut surviving = n_units;
    let mut i = 0;
    while i < bins.len() {
        let bin = bins[i];
        let failed = bins[i..].iter().take_while(|&&b| b == bin).count();
        if surviving == 0 {
            log::warn!("interval {bin} has failures but no surviving units; skipped");
            series.skipped.push(bin);
        } else {
            series.samples.push(HazardSample {
                t: (bin as f64 + 0.5) * interval,
                hazard: failed as f64 / surviving as f64,
            });
        }
        surviving = surviving.saturating_sub(failed);
        i += failed;
    }
    Ok(series)
}

/// Gompertz inverse CDF at `u` in [0, 1).
pub(crate) fn gompertz_quantile(gamma: f64, phi: f64, u: f64) -> Result<f64> {
    let log_surv = (-u).ln_1p();
    if phi.abs() < 1e-12 {
        return Ok(-log_surv / gamma);
    }
    let arg = 1.0 - (phi / gamma) * log_surv;
    if !(arg > 0.0) {
        return Err(FleetError::Degenerate(format!(
            "gompertz(γ={gamma}, φ={phi}) has no finite failure time at u={u}"
        )));
    }
    Ok(arg.ln() / phi)
}

/// I.i.d. Gompertz failure times by inversion, `t = ln(1 - (φ/γ) ln(1-U)) / φ`.
pub fn simulate_failure_times(gamma: f64, phi: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    if !(gamma > 0.0) {
        return Err(invalid("gamma", "must be positive"));
    }
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    if !phi.is_finite() {
        return Err(invalid("phi", "must be finite"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| gompertz_quantile(gamma, phi, rng.random::<f64>()))
        .collect()
}

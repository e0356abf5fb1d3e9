use serde::Serialize;
use serde_json::{json, Map, Value};

use super::PosteriorSamples;
use crate::error::{FleetError, Result};

/// Per-dimension health flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DimFlag {
    Ok,
    /// Chains sit at different values with no within-chain spread.
    Divergent,
    /// No variation at all; R̂ and ESS are undefined.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub names: Vec<String>,
    /// Split-chain R̂; `None` with one chain, too few draws, or a degenerate dimension.
    pub rhat: Vec<Option<f64>>,
    /// Effective sample size; `None` when degenerate.
    pub ess: Vec<Option<f64>>,
    pub acceptance: Vec<Option<f64>>,
    pub flags: Vec<DimFlag>,
}

impl Diagnostics {
    pub fn max_rhat(&self) -> Option<f64> {
        self.rhat.iter().flatten().copied().fold(None, |m, r| Some(m.map_or(r, |m: f64| m.max(r))))
    }

    /// Names whose R̂ exceeds `threshold` (divergent dimensions included).
    pub fn unconverged(&self, threshold: f64) -> Vec<&str> {
        self.names
            .iter()
            .zip(&self.rhat)
            .zip(&self.flags)
            .filter(|((_, r), f)| **f == DimFlag::Divergent || r.is_some_and(|r| r > threshold))
            .map(|((n, _), _)| n.as_str())
            .collect()
    }

    /// JSON summary keyed by parameter name. Non-finite values become null.
    pub fn to_json(&self) -> Value {
        let num = |v: Option<f64>| match v {
            Some(x) if x.is_finite() => json!(x),
            _ => Value::Null,
        };
        let mut rhat = Map::new();
        let mut ess = Map::new();
        let mut acc = Map::new();
        let mut flags = Map::new();
        for (j, n) in self.names.iter().enumerate() {
            rhat.insert(n.clone(), num(self.rhat[j]));
            ess.insert(n.clone(), num(self.ess[j]));
            acc.insert(n.clone(), num(self.acceptance[j]));
            if self.flags[j] != DimFlag::Ok {
                flags.insert(n.clone(), serde_json::to_value(self.flags[j]).unwrap_or(Value::Null));
            }
        }
        json!({
            "rhat": rhat,
            "ess": ess,
            "acceptance": acc,
            "flags": flags,
            "max_rhat": num(self.max_rhat()),
        })
    }
}

/// Split-chain R̂ and autocorrelation-based effective sample size per dimension.
pub fn diagnostics(samples: &PosteriorSamples) -> Result<Diagnostics> {
    if samples.total_draws() == 0 {
        return Err(FleetError::Empty("posterior samples".into()));
    }
    let mut rhat = Vec::with_capacity(samples.dim());
    let mut ess = Vec::with_capacity(samples.dim());
    let mut flags = Vec::with_capacity(samples.dim());
    for j in 0..samples.dim() {
        let chains: Vec<Vec<f64>> = (0..samples.n_chains()).map(|c| samples.chain_column(c, j)).collect();
        let (r, flag) = split_rhat(&chains);
        let e = if all_constant(&chains) {
            None
        } else {
            Some(effective_sample_size(&chains))
        };
        rhat.push(r);
        ess.push(e);
        flags.push(flag);
    }
    Ok(Diagnostics {
        names: samples.names().to_vec(),
        rhat,
        ess,
        acceptance: samples.acceptance(),
        flags,
    })
}

fn all_constant(chains: &[Vec<f64>]) -> bool {
    chains.iter().all(|c| c.iter().all(|&v| v == c[0]))
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = if xs.len() > 1 {
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, v)
}

fn split_rhat(chains: &[Vec<f64>]) -> (Option<f64>, DimFlag) {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    let everything_constant = {
        let first = chains.first().and_then(|c| c.first()).copied();
        chains.iter().flatten().all(|&v| Some(v) == first)
    };
    if everything_constant {
        return (None, DimFlag::Degenerate);
    }
    if chains.len() < 2 || n < 4 {
        return (None, DimFlag::Ok);
    }
    let half = n / 2;
    let mut means = Vec::with_capacity(2 * chains.len());
    let mut vars = Vec::with_capacity(2 * chains.len());
    for c in chains {
        for part in [&c[..half], &c[n - half..n]] {
            let (m, v) = mean_var(part);
            means.push(m);
            vars.push(v);
        }
    }
    let w = vars.iter().sum::<f64>() / vars.len() as f64;
    let (_, var_means) = mean_var(&means);
    let b = half as f64 * var_means;
    if w == 0.0 {
        return if b > 0.0 {
            (Some(f64::INFINITY), DimFlag::Divergent)
        } else {
            (None, DimFlag::Degenerate)
        };
    }
    let nf = half as f64;
    let var_plus = (nf - 1.0) / nf * w + b / nf;
    (Some((var_plus / w).sqrt()), DimFlag::Ok)
}

/// Multi-chain ESS with Geyer's initial positive sequence.
fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    let total = (m * n) as f64;
    if n < 4 {
        return total;
    }
    let stats: Vec<(f64, f64)> = chains.iter().map(|c| mean_var(&c[..n])).collect();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / m as f64;
    let var_plus = if m > 1 {
        let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
        let (_, vm) = mean_var(&means);
        (n as f64 - 1.0) / n as f64 * w + vm
    } else {
        (n as f64 - 1.0) / n as f64 * w
    };
    if !(var_plus > 0.0) {
        return total;
    }
    // Biased autocovariance at lag t, averaged over chains.
    let acov = |t: usize| -> f64 {
        let mut s = 0.0;
        for (c, (mu, _)) in chains.iter().zip(&stats) {
            let x = &c[..n];
            let mut a = 0.0;
            for i in 0..n - t {
                a += (x[i] - mu) * (x[i + t] - mu);
            }
            s += a / n as f64;
        }
        s / m as f64
    };
    let rho = |t: usize| -> f64 {
        if t == 0 {
            1.0
        } else {
            1.0 - (w * (n as f64 - 1.0) / n as f64 - acov(t)) / var_plus
        }
    };

    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let mut pair = rho(t) + rho(t + 1);
        if pair < 0.0 {
            break;
        }
        // Initial monotone sequence.
        if pair > prev_pair {
            pair = prev_pair;
        }
        tau += 2.0 * pair;
        prev_pair = pair;
        t += 2;
    }
    let tau = tau.max(1.0 / total.log10().max(1.0));
    (total / tau).min(total)
}

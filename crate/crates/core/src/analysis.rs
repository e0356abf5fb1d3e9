//! Posterior structure reports: correlation between task parameters and
//! the reduction in posterior spread from pooling.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{invalid, FleetError, Result};
use crate::inference::PosteriorSamples;
use crate::stats::{mean, std_dev};

/// Matches parameter names against `pattern`. `*` matches any run of
/// characters; a pattern without `*` matches by prefix.
pub fn name_matches(pattern: &str, name: &str) -> bool {
    if !pattern.contains('*') {
        return name.starts_with(pattern);
    }
    let parts: Vec<&str> = pattern.split('*').collect();
    let mut rest = name;
    for (i, part) in parts.iter().enumerate() {
        if i == 0 {
            match rest.strip_prefix(part) {
                Some(r) => rest = r,
                None => return false,
            }
        } else if i == parts.len() - 1 {
            return rest.ends_with(part);
        } else {
            match rest.find(part) {
                Some(pos) => rest = &rest[pos + part.len()..],
                None => return false,
            }
        }
    }
    true
}

/// Symmetric correlation matrix; `None` where a dimension has no variance.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl CorrMatrix {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i][j]
    }

    /// `param_i,param_j,corr` for every ordered pair; undefined entries are left empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["param_i", "param_j", "corr"])?;
        for (i, a) in self.labels.iter().enumerate() {
            for (j, b) in self.labels.iter().enumerate() {
                let v = self.values[i][j].map(|v| v.to_string()).unwrap_or_default();
                w.write_record([a.as_str(), b.as_str(), v.as_str()])?;
            }
        }
        w.flush().map_err(|e| FleetError::Io {
            path: "<correlation>".into(),
            source: e,
        })?;
        Ok(())
    }
}

/// Pearson correlation of the pooled draws over the parameters matching
/// `selector`, in sample order (tasks ordered by group, then task).
pub fn posterior_corr(samples: &PosteriorSamples, selector: &str) -> Result<CorrMatrix> {
    let idx: Vec<usize> = (0..samples.dim())
        .filter(|&j| name_matches(selector, &samples.names()[j]))
        .collect();
    if idx.len() < 2 {
        return Err(invalid("selector", format!("`{selector}` selects {} parameters; need 2", idx.len())));
    }
    if samples.total_draws() < 3 {
        return Err(invalid("samples", "need at least 3 draws"));
    }
    let cols: Vec<Vec<f64>> = idx.iter().map(|&j| samples.column(j)).collect();
    let centred: Vec<Option<(Vec<f64>, f64)>> = cols
        .iter()
        .map(|c| {
            let m = mean(c);
            let d: Vec<f64> = c.iter().map(|v| v - m).collect();
            let ss: f64 = d.iter().map(|v| v * v).sum();
            (ss > 0.0).then(|| (d, ss.sqrt()))
        })
        .collect();
    let n = idx.len();
    let mut values = vec![vec![None; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = match (&centred[i], &centred[j]) {
                (Some((a, na)), Some((b, nb))) => {
                    if i == j {
                        Some(1.0)
                    } else {
                        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                        Some((dot / (na * nb)).clamp(-1.0, 1.0))
                    }
                }
                _ => None,
            };
            values[i][j] = v;
            values[j][i] = v;
        }
    }
    Ok(CorrMatrix {
        labels: idx.iter().map(|&j| samples.names()[j].clone()).collect(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionRow {
    pub name: String,
    /// Label of the single-task sample set the parameter came from.
    pub source: String,
    pub std_stl: f64,
    pub std_mtl: f64,
    /// `100 (1 - std_MTL / std_STL)`.
    pub reduction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionReport {
    pub rows: Vec<ReductionRow>,
    /// Mean reduction per effect type (the name before `[`).
    pub averages: BTreeMap<String, f64>,
    /// Selected parameters without a single-task counterpart.
    pub missing: Vec<String>,
}

impl ReductionReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["param", "source", "std_stl", "std_mtl", "reduction_pct"])?;
        for r in &self.rows {
            w.write_record([
                r.name.clone(),
                r.source.clone(),
                r.std_stl.to_string(),
                r.std_mtl.to_string(),
                r.reduction.to_string(),
            ])?;
        }
        for (effect, avg) in &self.averages {
            w.write_record([format!("mean({effect})"), String::new(), String::new(), String::new(), avg.to_string()])?;
        }
        for m in &self.missing {
            w.write_record([m.clone(), "missing".into(), String::new(), String::new(), String::new()])?;
        }
        w.flush().map_err(|e| FleetError::Io {
            path: "<reduction>".into(),
            source: e,
        })?;
        Ok(())
    }
}

/// Effect type of a parameter name: `alpha2[3,1]` → `alpha2`.
pub fn effect_type(name: &str) -> &str {
    name.split('[').next().unwrap_or(name)
}

/// Percentage reduction in posterior standard deviation of every selected
/// MTL parameter relative to each single-task fit that also has it.
pub fn variance_reduction(
    stl: &[(String, &PosteriorSamples)],
    mtl: &PosteriorSamples,
    selector: &str,
) -> Result<ReductionReport> {
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for (j, name) in mtl.names().iter().enumerate() {
        if !name_matches(selector, name) {
            continue;
        }
        let std_mtl = std_dev(&mtl.column(j));
        let mut found = false;
        for (label, s) in stl {
            if let Some(col) = s.column_by_name(name) {
                found = true;
                let std_stl = std_dev(&col);
                rows.push(ReductionRow {
                    name: name.clone(),
                    source: label.clone(),
                    std_stl,
                    std_mtl,
                    reduction: 100.0 * (1.0 - std_mtl / std_stl),
                });
            }
        }
        if !found {
            missing.push(name.clone());
        }
    }
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in &rows {
        if r.reduction.is_finite() {
            groups.entry(effect_type(&r.name).to_string()).or_default().push(r.reduction);
        }
    }
    let averages = groups.into_iter().map(|(k, v)| (k, mean(&v))).collect();
    Ok(ReductionReport { rows, averages, missing })
}

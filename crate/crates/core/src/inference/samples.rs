use std::io::{Read, Write};

use crate::error::{FleetError, Result};

/// Retained draws of every chain, stored row-major per chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    names: Vec<String>,
    n_samples: usize,
    /// `chains[c][i * dim + j]`
    chains: Vec<Vec<f64>>,
    /// Log target density of each retained draw; NaN when unknown (loaded from CSV).
    log_density: Vec<Vec<f64>>,
    /// Post-burn-in acceptance rate per chain and dimension; empty when unknown.
    acceptance: Vec<Vec<f64>>,
}

impl PosteriorSamples {
    pub(crate) fn new(names: Vec<String>, n_chains: usize, n_samples: usize) -> Self {
        Self {
            names,
            n_samples,
            chains: vec![Vec::new(); n_chains],
            log_density: vec![Vec::new(); n_chains],
            acceptance: vec![Vec::new(); n_chains],
        }
    }

    /// Builds a sample set from explicit per-chain draws (`draws[c][i]` is one parameter vector).
    pub fn from_draws(names: Vec<String>, draws: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if draws.is_empty() || draws[0].is_empty() {
            return Err(FleetError::Empty("posterior samples".into()));
        }
        let dim = names.len();
        let n_samples = draws[0].len();
        let mut out = Self::new(names, draws.len(), n_samples);
        for (c, chain) in draws.into_iter().enumerate() {
            if chain.len() != n_samples {
                return Err(FleetError::Dimension {
                    expected: n_samples,
                    got: chain.len(),
                });
            }
            let mut flat = Vec::with_capacity(n_samples * dim);
            for d in chain {
                if d.len() != dim {
                    return Err(FleetError::Dimension {
                        expected: dim,
                        got: d.len(),
                    });
                }
                flat.extend(d);
            }
            out.chains[c] = flat;
            out.log_density[c] = vec![f64::NAN; n_samples];
        }
        Ok(out)
    }

    pub(crate) fn set_chain(&mut self, c: usize, draws: Vec<f64>, log_density: Vec<f64>, acceptance: Vec<f64>) {
        debug_assert_eq!(draws.len(), self.n_samples * self.dim());
        self.chains[c] = draws;
        self.log_density[c] = log_density;
        self.acceptance[c] = acceptance;
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn total_draws(&self) -> usize {
        self.n_chains() * self.n_samples
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn draw(&self, chain: usize, iteration: usize) -> &[f64] {
        let d = self.dim();
        &self.chains[chain][iteration * d..(iteration + 1) * d]
    }

    /// All draws in (chain, iteration) order with their log density.
    pub fn iter_draws(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        let d = self.dim().max(1);
        self.chains
            .iter()
            .zip(&self.log_density)
            .flat_map(move |(c, lp)| c.chunks(d).zip(lp.iter().copied()))
    }

    pub fn log_densities(&self) -> impl Iterator<Item = f64> + '_ {
        self.log_density.iter().flatten().copied()
    }

    /// Values of dimension `j` from one chain.
    pub fn chain_column(&self, chain: usize, j: usize) -> Vec<f64> {
        let d = self.dim();
        self.chains[chain].iter().skip(j).step_by(d).copied().collect()
    }

    /// Values of dimension `j` pooled over chains.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_chains()).flat_map(|c| self.chain_column(c, j)).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.index_of(name).map(|j| self.column(j))
    }

    /// The retained draw with the highest log density.
    ///
    /// Falls back to the first draw when densities are unknown.
    pub fn best_draw(&self) -> (&[f64], f64) {
        let mut best: Option<(&[f64], f64)> = None;
        for (d, lp) in self.iter_draws() {
            match best {
                None => best = Some((d, lp)),
                Some((_, b)) if lp > b || (b.is_nan() && !lp.is_nan()) => best = Some((d, lp)),
                _ => {}
            }
        }
        best.expect("posterior samples are never empty")
    }

    /// Mean acceptance over chains, per dimension; `None` when not recorded.
    pub fn acceptance(&self) -> Vec<Option<f64>> {
        (0..self.dim())
            .map(|j| {
                let rates: Vec<f64> = self.acceptance.iter().filter_map(|a| a.get(j).copied()).collect();
                if rates.is_empty() {
                    None
                } else {
                    Some(rates.iter().sum::<f64>() / rates.len() as f64)
                }
            })
            .collect()
    }

    /// Keeps only the named dimensions, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Self> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.index_of(n).ok_or_else(|| FleetError::MissingColumn(n.clone())))
            .collect::<Result<_>>()?;
        let d = self.dim();
        let mut out = Self::new(names.to_vec(), self.n_chains(), self.n_samples);
        for c in 0..self.n_chains() {
            let mut flat = Vec::with_capacity(self.n_samples * idx.len());
            for row in self.chains[c].chunks(d) {
                flat.extend(idx.iter().map(|&j| row[j]));
            }
            out.chains[c] = flat;
            out.log_density[c] = self.log_density[c].clone();
            out.acceptance[c] = if self.acceptance[c].is_empty() {
                Vec::new()
            } else {
                idx.iter().map(|&j| self.acceptance[c][j]).collect()
            };
        }
        Ok(out)
    }

    /// Writes one row per (chain, iteration): `chain,iteration,<names...>`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["chain".to_string(), "iteration".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for c in 0..self.n_chains() {
            for i in 0..self.n_samples {
                let mut rec = vec![(c + 1).to_string(), (i + 1).to_string()];
                rec.extend(self.draw(c, i).iter().map(|v| v.to_string()));
                w.write_record(&rec)?;
            }
        }
        w.flush().map_err(|e| FleetError::Io {
            path: "<draws>".into(),
            source: e,
        })?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        if header.get(0) != Some("chain") {
            return Err(FleetError::MissingColumn("chain".into()));
        }
        if header.get(1) != Some("iteration") {
            return Err(FleetError::MissingColumn("iteration".into()));
        }
        let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let mut chains: Vec<Vec<Vec<f64>>> = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |column: &str, message: String| FleetError::BadRow {
                row: row + 1,
                column: column.to_string(),
                message,
            };
            let chain: usize = rec
                .get(0)
                .unwrap_or("")
                .parse()
                .map_err(|e| bad("chain", format!("{e}")))?;
            if chain == 0 {
                return Err(bad("chain", "chain indices are 1-based".into()));
            }
            let values = names
                .iter()
                .enumerate()
                .map(|(j, n)| {
                    rec.get(j + 2)
                        .unwrap_or("")
                        .parse::<f64>()
                        .map_err(|e| bad(n, format!("{e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if chains.len() < chain {
                chains.resize(chain, Vec::new());
            }
            chains[chain - 1].push(values);
        }
        Self::from_draws(names, chains)
    }
}

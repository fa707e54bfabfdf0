//! Pearson correlation and redundancy pruning.

use std::fmt::Write as _;

use super::dataset::TabularDataset;
use crate::error::{Error, Result};

pub const DEFAULT_REDUNDANCY_THRESHOLD: f64 = 0.95;

/// Pearson's product-moment coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape(format!("columns of length {} and {}", x.len(), y.len())));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::UndefinedCorrelation("need at least two values".into()));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant column".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Symmetric matrix of pairwise coefficients; `None` where undefined.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix {
    pub columns: Vec<String>,
    pub values: Vec<Option<f64>>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.columns.len() + j]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature");
        for c in &self.columns {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
        for (i, name) in self.columns.iter().enumerate() {
            out.push_str(name);
            for j in 0..self.columns.len() {
                match self.get(i, j) {
                    Some(r) => {
                        let _ = write!(out, ",{r}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

pub fn correlation_matrix(ds: &TabularDataset, rows: &[usize]) -> CorrelationMatrix {
    let cols: Vec<Vec<f64>> = (0..ds.n_cols()).map(|c| rows.iter().map(|&r| ds.value(r, c)).collect()).collect();
    let k = cols.len();
    let mut values = vec![None; k * k];
    for i in 0..k {
        for j in i..k {
            let r = pearson(&cols[i], &cols[j]).ok();
            values[i * k + j] = r;
            values[j * k + i] = r;
        }
    }
    CorrelationMatrix { columns: ds.columns.clone(), values }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PruneReport {
    /// `(column, reason)` in column order.
    pub dropped: Vec<(String, String)>,
    pub correlation: CorrelationMatrix,
}

impl PruneReport {
    pub fn dropped_csv(&self) -> String {
        let mut out = String::from("column,reason\n");
        for (c, r) in &self.dropped {
            let _ = writeln!(out, "{c},{r}");
        }
        out
    }
}

/// Drops constant columns, then every column whose |r| with an earlier kept
/// column exceeds `threshold`. Correlations are computed over `rows`.
/// Afterwards no kept pair exceeds the threshold, so a second pass drops
/// nothing.
pub fn prune_redundant(ds: &TabularDataset, rows: &[usize], threshold: f64) -> Result<(TabularDataset, PruneReport)> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::config(format!("redundancy threshold {threshold} must lie in (0, 1]")));
    }
    let corr = correlation_matrix(ds, rows);
    let mut kept: Vec<usize> = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..ds.n_cols() {
        if corr.get(j, j).is_none() {
            dropped.push((ds.columns[j].clone(), "constant".to_owned()));
            continue;
        }
        match kept.iter().find(|&&i| corr.get(i, j).is_some_and(|r| r.abs() > threshold)) {
            Some(&i) => dropped.push((
                ds.columns[j].clone(),
                format!("correlated with {} (r={})", ds.columns[i], corr.get(i, j).unwrap_or(f64::NAN)),
            )),
            None => kept.push(j),
        }
    }
    Ok((ds.select_columns(&kept), PruneReport { dropped, correlation: corr }))
}

//! Min-max scaling fitted on the training rows.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::dataset::TabularDataset;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Scaler {
    pub columns: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

pub fn fit_scaler(ds: &TabularDataset, rows: &[usize]) -> Result<Scaler> {
    if rows.is_empty() {
        return Err(Error::config("cannot fit a scaler on zero rows"));
    }
    let mut min = vec![f64::INFINITY; ds.n_cols()];
    let mut max = vec![f64::NEG_INFINITY; ds.n_cols()];
    for &r in rows {
        for (c, &v) in ds.row(r).iter().enumerate() {
            if v.is_nan() {
                return Err(Error::Impute(format!("column `{}` still has missing values", ds.columns[c])));
            }
            min[c] = min[c].min(v);
            max[c] = max[c].max(v);
        }
    }
    Ok(Scaler { columns: ds.columns.clone(), min, max })
}

impl Scaler {
    /// `(x - min) / (max - min)`, clamped to `[0, 1]` for rows outside the
    /// fitted range.
    pub fn transform(&self, ds: &TabularDataset) -> Result<TabularDataset> {
        if ds.columns != self.columns {
            return Err(Error::shape("dataset columns differ from the fitted scaler"));
        }
        for (c, name) in self.columns.iter().enumerate() {
            if self.max[c] == self.min[c] {
                return Err(Error::ConstantFeature(name.clone()));
            }
        }
        let cols = ds.n_cols();
        let mut out = ds.clone();
        for (i, v) in out.values.iter_mut().enumerate() {
            let c = i % cols;
            *v = ((*v - self.min[c]) / (self.max[c] - self.min[c])).clamp(0.0, 1.0);
        }
        Ok(out)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,min,max\n");
        for ((c, lo), hi) in self.columns.iter().zip(&self.min).zip(&self.max) {
            let _ = writeln!(out, "{c},{lo},{hi}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut s = Scaler { columns: Vec::new(), min: Vec::new(), max: Vec::new() };
        for line in text.lines().skip(1) {
            let bad = || Error::Format(format!("bad scaler line `{line}`"));
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 3 {
                return Err(bad());
            }
            s.columns.push(cells[0].to_owned());
            s.min.push(cells[1].parse().map_err(|_| bad())?);
            s.max.push(cells[2].parse().map_err(|_| bad())?);
        }
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

pub fn normalize(ds: &TabularDataset, scaler: &Scaler) -> Result<TabularDataset> {
    scaler.transform(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_max_with_clamp() {
        let train = TabularDataset::new(vec!["x".into()], vec![0.0, 10.0, 5.0], vec![1, 0, 1]).unwrap();
        let s = fit_scaler(&train, &[0, 1, 2]).unwrap();
        assert_eq!(normalize(&train, &s).unwrap().values, vec![0.0, 1.0, 0.5]);
        let test = TabularDataset::new(vec!["x".into()], vec![12.0, -3.0], vec![1, 0]).unwrap();
        // Unclamped these would be 1.2 and -0.3.
        assert_eq!(normalize(&test, &s).unwrap().values, vec![1.0, 0.0]);
        assert_eq!(Scaler::from_csv(&s.to_csv()).unwrap(), s);
    }

    #[test]
    fn constant_feature_is_rejected() {
        let ds = TabularDataset::new(vec!["k".into()], vec![2.0, 2.0], vec![1, 0]).unwrap();
        let s = fit_scaler(&ds, &[0, 1]).unwrap();
        assert!(matches!(normalize(&ds, &s), Err(Error::ConstantFeature(_))));
    }
}

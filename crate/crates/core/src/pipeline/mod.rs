//! Data preparation: ingestion, encoding, cleaning, pruning, scaling and
//! splitting.

pub mod clean;
pub mod correlate;
pub mod dataset;
pub mod input;
pub mod scale;
pub mod schema;
pub mod split;

use crate::error::{Error, Result};
use clean::{esd_test, fit_imputer, ImputeStrategy};
use correlate::{prune_redundant, PruneReport, DEFAULT_REDUNDANCY_THRESHOLD};
use dataset::{encode_labels, RawDataset, TabularDataset};
use scale::{fit_scaler, Scaler};
use split::Split;

pub const DEFAULT_ESD_ALPHA: f64 = 0.05;
pub const DEFAULT_ESD_MAX_OUTLIERS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct PrepareConfig {
    pub seed: u64,
    pub redundancy_threshold: f64,
    pub esd_alpha: f64,
    pub esd_max_outliers: usize,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        PrepareConfig {
            seed: 0,
            redundancy_threshold: DEFAULT_REDUNDANCY_THRESHOLD,
            esd_alpha: DEFAULT_ESD_ALPHA,
            esd_max_outliers: DEFAULT_ESD_MAX_OUTLIERS,
        }
    }
}

/// Outliers flagged in one numeric column of the training rows. Rows are
/// indices into the encoded dataset; nothing is removed.
#[derive(Clone, Debug, PartialEq)]
pub struct OutlierReport {
    pub column: String,
    pub rows: Vec<usize>,
}

pub fn outliers_csv(reports: &[OutlierReport]) -> String {
    let mut out = String::from("column,row\n");
    for r in reports {
        for row in &r.rows {
            out.push_str(&format!("{},{row}\n", r.column));
        }
    }
    out
}

/// Imputation, column pruning and scaling fitted on reference rows.
#[derive(Clone, Debug)]
pub struct Preprocessor {
    /// Per-column fill values for the kept columns.
    pub fill: Vec<f64>,
    pub scaler: Scaler,
    pub pruning: PruneReport,
    pub outliers: Vec<OutlierReport>,
}

impl Preprocessor {
    pub fn columns(&self) -> &[String] {
        &self.scaler.columns
    }

    /// Selects the kept columns of `ds` by name, fills missing cells and
    /// scales. Works on any table with the fitted feature columns, such as
    /// a target domain that must be scaled like its source.
    pub fn apply(&self, ds: &TabularDataset) -> Result<TabularDataset> {
        let cols = self
            .columns()
            .iter()
            .map(|c| ds.column_index(c).ok_or_else(|| Error::Schema(format!("column `{c}` is missing"))))
            .collect::<Result<Vec<_>>>()?;
        let mut out = ds.select_columns(&cols);
        let k = out.n_cols();
        for (i, v) in out.values.iter_mut().enumerate() {
            if v.is_nan() {
                *v = self.fill[i % k];
            }
        }
        self.scaler.transform(&out)
    }
}

/// Fits imputation, the ESD report, redundancy pruning and min-max scaling
/// on `rows` of an encoded table.
pub fn fit_preprocessor(encoded: &TabularDataset, rows: &[usize], cfg: &PrepareConfig) -> Result<Preprocessor> {
    let fill_all = fit_imputer(encoded, rows, ImputeStrategy::Median)?;
    let mut filled = encoded.clone();
    let k = filled.n_cols();
    for (i, v) in filled.values.iter_mut().enumerate() {
        if v.is_nan() {
            *v = fill_all[i % k];
        }
    }

    let mut outliers = Vec::new();
    for c in (0..k).filter(|&c| !filled.categorical[c]) {
        // Screen observed values only; imputed cells would bias the test
        // towards the median.
        let present: Vec<usize> = rows.iter().copied().filter(|&r| !encoded.value(r, c).is_nan()).collect();
        let column: Vec<f64> = present.iter().map(|&r| encoded.value(r, c)).collect();
        match esd_test(&column, cfg.esd_alpha, cfg.esd_max_outliers) {
            Ok(res) if !res.outliers.is_empty() => {
                let mut flagged: Vec<usize> = res.outliers.iter().map(|&i| present[i]).collect();
                flagged.sort_unstable();
                outliers.push(OutlierReport { column: filled.columns[c].clone(), rows: flagged });
            }
            Ok(_) | Err(Error::TestInapplicable(_)) => {}
            Err(e) => return Err(e),
        }
    }

    let (pruned, pruning) = prune_redundant(&filled, rows, cfg.redundancy_threshold)?;
    if pruned.n_cols() == 0 {
        return Err(Error::ConstantFeature("every feature column was dropped".into()));
    }
    let fill = pruned.columns.iter().map(|c| fill_all[filled.column_index(c).unwrap_or(0)]).collect();
    let scaler = fit_scaler(&pruned, rows)?;
    Ok(Preprocessor { fill, scaler, pruning, outliers })
}

/// Prepared train / validation / test tables and what was fitted on the
/// training rows.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub train: TabularDataset,
    pub val: TabularDataset,
    pub test: TabularDataset,
    pub split: Split,
    pub preprocessor: Preprocessor,
}

/// Encode, split (stratified), then fit the [`Preprocessor`] on the
/// training rows only and apply it to all three parts.
pub fn prepare(raw: &RawDataset, cfg: &PrepareConfig) -> Result<Prepared> {
    prepare_table(&encode_labels(raw)?, cfg)
}

pub fn prepare_table(encoded: &TabularDataset, cfg: &PrepareConfig) -> Result<Prepared> {
    let split = split::split(&encoded.labels, cfg.seed)?;
    let preprocessor = fit_preprocessor(encoded, &split.train, cfg)?;
    let scaled = preprocessor.apply(encoded)?;
    Ok(Prepared {
        train: scaled.select_rows(&split.train),
        val: scaled.select_rows(&split.val),
        test: scaled.select_rows(&split.test),
        split,
        preprocessor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(n: usize) -> TabularDataset {
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for r in 0..n {
            let a = (r * 37 % 101) as f64;
            let b = (r * 53 % 97) as f64;
            // c duplicates a, d is constant.
            values.extend([a, b, 2.0 * a + 1.0, 7.0]);
            labels.push(usize::from(r % 3 != 0));
        }
        values[4 * 5 + 1] = f64::NAN;
        TabularDataset::new(vec!["a".into(), "b".into(), "c".into(), "d".into()], values, labels).unwrap()
    }

    #[test]
    fn prepare_fits_on_train_only() {
        let ds = table(200);
        let p = prepare_table(&ds, &PrepareConfig::default()).unwrap();
        assert_eq!(p.train.columns, vec!["a", "b"]);
        assert_eq!(p.train.n_rows() + p.val.n_rows() + p.test.n_rows(), 200);
        assert_eq!(p.train.missing_count() + p.val.missing_count() + p.test.missing_count(), 0);
        for part in [&p.train, &p.val, &p.test] {
            assert!(part.values.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        // Training columns span the full range exactly.
        for c in 0..2 {
            let col = p.train.column(c);
            assert_eq!(col.iter().cloned().fold(f64::INFINITY, f64::min), 0.0);
            assert_eq!(col.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 1.0);
        }
        assert_eq!(p.preprocessor.apply(&ds).unwrap().select_rows(&p.split.test), p.test);
    }

    #[test]
    fn prepare_is_deterministic() {
        let ds = table(120);
        let cfg = PrepareConfig { seed: 9, ..Default::default() };
        let (a, b) = (prepare_table(&ds, &cfg).unwrap(), prepare_table(&ds, &cfg).unwrap());
        assert_eq!(a.split, b.split);
        assert_eq!(a.train, b.train);
    }

    #[test]
    fn outliers_are_reported_not_removed() {
        let mut ds = table(200);
        let p0 = prepare_table(&ds, &PrepareConfig::default()).unwrap();
        let victim = p0.split.train[4];
        ds.values[victim * 4 + 1] = 1e6;
        let p = prepare_table(&ds, &PrepareConfig::default()).unwrap();
        assert!(p.preprocessor.outliers.iter().any(|o| o.column == "b" && o.rows.contains(&victim)));
        assert_eq!(p.train.n_rows(), p0.train.n_rows());
    }
}

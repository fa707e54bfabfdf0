//! Outlier screening (generalized ESD) and missing-value imputation.

use statrs::distribution::{ContinuousCDF, StudentsT};

use super::dataset::TabularDataset;
use crate::error::{Error, Result};

/// Smallest sample the generalized ESD test is applied to.
pub const ESD_MIN_SAMPLES: usize = 15;

/// Full trace of a generalized ESD run.
#[derive(Clone, Debug, PartialEq)]
pub struct EsdResult {
    /// Index removed at each step, in removal order.
    pub removed: Vec<usize>,
    /// Test statistic `R_i` per step.
    pub statistics: Vec<f64>,
    /// Critical value `lambda_i` per step.
    pub critical: Vec<f64>,
    /// Indices flagged as outliers: the first `k` removals, where `k` is the
    /// largest step with `R_k > lambda_k`.
    pub outliers: Vec<usize>,
}

/// Rosner's generalized extreme studentized deviate test for up to
/// `max_outliers` outliers at significance `alpha`. Missing values (`NaN`)
/// are skipped; returned indices refer to `column`.
pub fn esd_test(column: &[f64], alpha: f64, max_outliers: usize) -> Result<EsdResult> {
    if max_outliers == 0 {
        return Err(Error::config("max_outliers must be at least 1"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config(format!("alpha {alpha} must lie in (0, 1)")));
    }
    let mut live: Vec<(usize, f64)> = column.iter().copied().enumerate().filter(|(_, v)| !v.is_nan()).collect();
    let n = live.len();
    if n < ESD_MIN_SAMPLES {
        return Err(Error::TestInapplicable(format!("{n} values, the test needs at least {ESD_MIN_SAMPLES}")));
    }
    // Each step needs at least three remaining values for a t quantile.
    let steps = max_outliers.min(n - 3);
    let mut out = EsdResult { removed: Vec::new(), statistics: Vec::new(), critical: Vec::new(), outliers: Vec::new() };
    for i in 1..=steps {
        let m = live.len() as f64;
        let mean = live.iter().map(|(_, v)| v).sum::<f64>() / m;
        let var = live.iter().map(|(_, v)| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
        let sd = var.sqrt();
        if sd == 0.0 {
            break;
        }
        let (pos, dev) = live
            .iter()
            .enumerate()
            .map(|(p, (_, v))| (p, (v - mean).abs()))
            .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        let df = (n - i - 1) as f64;
        let p = 1.0 - alpha / (2.0 * (n - i + 1) as f64);
        let t = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::TestInapplicable(e.to_string()))?.inverse_cdf(p);
        let lambda = (n - i) as f64 * t / (((n - i - 1) as f64 + t * t) * (n - i + 1) as f64).sqrt();
        out.statistics.push(dev / sd);
        out.critical.push(lambda);
        out.removed.push(live.remove(pos).0);
    }
    let k = (0..out.statistics.len()).rev().find(|&i| out.statistics[i] > out.critical[i]).map_or(0, |i| i + 1);
    out.outliers = out.removed[..k].to_vec();
    Ok(out)
}

/// Outlier row indices of `column` (see [`esd_test`]).
pub fn detect_outliers_esd(column: &[f64], alpha: f64, max_outliers: usize) -> Result<Vec<usize>> {
    esd_test(column, alpha, max_outliers).map(|r| r.outliers)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ImputeStrategy {
    /// Numeric columns take the median, categorical columns the most
    /// frequent code (lowest code on ties).
    #[default]
    Median,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn mode(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (mut best, mut best_run, mut i) = (sorted[0], 0, 0);
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        if j > best_run {
            best = sorted[i];
            best_run = j;
        }
        i += j;
    }
    best
}

/// Fill values per column, computed from `reference_rows` only.
pub fn fit_imputer(ds: &TabularDataset, reference_rows: &[usize], _strategy: ImputeStrategy) -> Result<Vec<f64>> {
    (0..ds.n_cols())
        .map(|c| {
            let mut present: Vec<f64> =
                reference_rows.iter().map(|&r| ds.value(r, c)).filter(|v| !v.is_nan()).collect();
            if present.is_empty() {
                return Err(Error::Impute(format!("column `{}` has no observed value to impute from", ds.columns[c])));
            }
            Ok(if ds.categorical[c] { mode(&present) } else { median(&mut present) })
        })
        .collect()
}

/// Replaces every missing cell with its column's fill value from
/// `reference_rows` (normally the training split).
pub fn impute(ds: &TabularDataset, reference_rows: &[usize], strategy: ImputeStrategy) -> Result<TabularDataset> {
    let fill = fit_imputer(ds, reference_rows, strategy)?;
    let mut out = ds.clone();
    let cols = ds.n_cols();
    for (i, v) in out.values.iter_mut().enumerate() {
        if v.is_nan() {
            *v = fill[i % cols];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    // 29 standard-normal draws (fixed seed) and one planted value of 100.
    const SAMPLE: [f64; 30] = [
        1.0288568739519013,
        1.6419200406711503,
        1.1467195295966137,
        -0.9731795154745656,
        -1.3928000963768683,
        0.06719635507109722,
        0.8613509179404263,
        0.509186798845688,
        1.8102855742952833,
        0.7508434731539183,
        0.6397595539314624,
        -0.7313225212292476,
        -1.1077170351272676,
        1.4844055856837017,
        0.048912403069534136,
        0.8115201169815576,
        -1.3764228399745688,
        -0.43637073584081926,
        -1.2910916333479945,
        -0.7756786842437912,
        0.9030630777436289,
        -1.4805813250203528,
        -0.5340928297145819,
        0.16378857220098098,
        -0.6684703049155165,
        -0.25228975964635664,
        -0.22186154087661292,
        0.4181385697197018,
        -0.43125454836060817,
        100.0,
    ];

    #[test]
    fn esd_flags_the_planted_value() {
        let r = esd_test(&SAMPLE, 0.05, 3).unwrap();
        assert_eq!(r.outliers, vec![29]);
        // Statistics and critical values from an independent implementation.
        let want_r = [5.2874278753172765, 1.8418949558643674, 1.8211971978540935];
        let want_l = [2.908473059722726, 2.8927047112054254, 2.8762091343069227];
        for i in 0..3 {
            assert!((r.statistics[i] - want_r[i]).abs() < 1e-9);
            assert!((r.critical[i] - want_l[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn esd_masked_pair() {
        // The second planted value only clears its critical value once the
        // first is gone; both must be flagged.
        let mut x = vec![
            10.001230153357483,
            10.29874553750847,
            9.725862144637782,
            9.109408161242726,
            9.545329214828277,
            9.008353445003538,
            10.060143602597439,
            11.340215245554534,
            9.50779348144867,
            9.379525100180059,
            10.489842050185198,
            10.356887008160061,
            10.1054142489979,
            9.069531955291795,
            9.970748177536727,
            10.695303194458289,
            8.655785452714918,
            9.542384238959782,
            8.098777260199157,
            8.710462260215024,
            8.158264962208268,
            9.76490886892532,
            8.732553518556298,
            10.271264358821702,
            10.156751086624226,
            9.813069055370045,
            7.483240289179487,
            9.461307104153363,
            9.951499054598928,
            10.113308986003307,
            8.469864234494606,
            9.52224672396607,
            9.021480921943361,
            9.1911627605744,
            11.060898623386079,
            9.192465324668104,
            9.96747829505448,
            10.884389867383174,
            9.416399567256699,
            9.888298050415841,
        ];
        x.extend([16.0, 4.5]);
        let r = esd_test(&x, 0.05, 5).unwrap();
        let mut flagged = r.outliers.clone();
        flagged.sort_unstable();
        assert_eq!(flagged, vec![40, 41]);
        let want_r = [4.22153230557651, 4.3808777355738595, 2.584920107148968, 2.226790380788738, 2.129603443082109];
        let want_l = [3.056723301234089, 3.046570812564991, 3.0360973845091865, 3.025283887587578, 3.014109499996099];
        for i in 0..5 {
            assert!((r.statistics[i] - want_r[i]).abs() < 1e-9);
            assert!((r.critical[i] - want_l[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn esd_degenerate_and_error_cases() {
        assert!(detect_outliers_esd(&[4.0; 20], 0.05, 3).unwrap().is_empty());
        assert!(matches!(detect_outliers_esd(&SAMPLE, 0.05, 0), Err(Error::Config(_))));
        assert!(matches!(detect_outliers_esd(&SAMPLE[..10], 0.05, 2), Err(Error::TestInapplicable(_))));
    }

    #[test]
    fn median_imputation() {
        let ds = TabularDataset::new(vec!["a".into()], vec![1.0, f64::NAN, 3.0], vec![1, 0, 1]).unwrap();
        assert_eq!(impute(&ds, &[0, 1, 2], ImputeStrategy::Median).unwrap().values, vec![1.0, 2.0, 3.0]);
        let full = TabularDataset::new(vec!["a".into()], vec![1.0, 5.0], vec![1, 0]).unwrap();
        let same = impute(&full, &[0, 1], ImputeStrategy::Median).unwrap();
        assert_eq!(same.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), vec![1f64.to_bits(), 5f64.to_bits()]);
        let empty = TabularDataset::new(vec!["a".into()], vec![f64::NAN, f64::NAN], vec![1, 0]).unwrap();
        assert!(matches!(impute(&empty, &[0, 1], ImputeStrategy::Median), Err(Error::Impute(_))));
    }

    #[test]
    fn categorical_imputation_uses_mode() {
        let mut ds =
            TabularDataset::new(vec!["c".into()], vec![1.0, 0.0, 1.0, f64::NAN, 0.0, 1.0], vec![1; 6]).unwrap();
        ds.categorical = vec![true];
        assert_eq!(impute(&ds, &[0, 1, 2, 3, 4, 5], ImputeStrategy::Median).unwrap().values[3], 1.0);
    }
}

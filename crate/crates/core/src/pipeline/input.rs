//! Tables to network inputs.

use super::dataset::TabularDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::transfer::{build_domain, Domain, DomainRole, LabeledSeries, SegmentationConfig};
use crate::LABEL_NORMAL;

#[derive(Clone, Debug, PartialEq)]
pub enum Geometry {
    /// One sample per row; each of `channels` features becomes a channel
    /// holding the value repeated `window` times.
    Tabular { channels: usize, window: usize },
    /// Sliding windows over the rows (in order) of the named columns, one
    /// channel per column.
    Windowed { columns: Vec<String>, segmentation: SegmentationConfig },
}

/// Class targets of tabular samples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LabelMode {
    /// Attack 0, normal 1.
    #[default]
    Binary,
    /// Normal 0, attack type `t` as class `t + 1` (ten classes).
    AttackType,
}

impl LabelMode {
    pub fn classes(&self) -> usize {
        match self {
            LabelMode::Binary => 2,
            LabelMode::AttackType => 1 + super::schema::ATTACK_TYPES.len(),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "binary" => Ok(LabelMode::Binary),
            "attack-type" => Ok(LabelMode::AttackType),
            other => Err(Error::config(format!("unknown label mode `{other}` (binary|attack-type)"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LabelMode::Binary => "binary",
            LabelMode::AttackType => "attack-type",
        }
    }

    fn targets(&self, ds: &TabularDataset) -> Result<Vec<usize>> {
        match self {
            LabelMode::Binary => Ok(ds.labels.clone()),
            LabelMode::AttackType => {
                let types =
                    ds.attack_types.as_ref().ok_or_else(|| Error::config("attack-type labels need a type column"))?;
                ds.labels
                    .iter()
                    .zip(types)
                    .enumerate()
                    .map(|(r, (&l, t))| match (l == LABEL_NORMAL, t) {
                        (true, _) => Ok(0),
                        (false, Some(code)) => Ok(code + 1),
                        (false, None) => Err(Error::Encode(format!("row {}: attack row without a type", r + 1))),
                    })
                    .collect()
            }
        }
    }
}

pub fn to_domain(ds: &TabularDataset, geometry: &Geometry, labels: LabelMode, role: DomainRole) -> Result<Domain> {
    if ds.missing_count() > 0 {
        return Err(Error::Impute("dataset still has missing values".into()));
    }
    match geometry {
        Geometry::Tabular { channels, window } => {
            if *channels != ds.n_cols() {
                return Err(Error::shape(format!("{} feature columns, geometry declares {channels}", ds.n_cols())));
            }
            if *window == 0 {
                return Err(Error::config("window must be positive"));
            }
            let mut x = Vec::with_capacity(ds.n_rows() * channels * window);
            for r in 0..ds.n_rows() {
                for &v in ds.row(r) {
                    x.extend(std::iter::repeat_n(v, *window));
                }
            }
            let y = labels.targets(ds)?;
            let n = ds.n_rows();
            Domain::new(role, Tensor::new(vec![n, *channels, *window], x)?, y, labels.classes(), (0..n).collect())
        }
        Geometry::Windowed { columns, segmentation } => {
            if labels != LabelMode::Binary {
                return Err(Error::config("windowed inputs support binary labels only"));
            }
            let idx = columns
                .iter()
                .map(|c| ds.column_index(c).ok_or_else(|| Error::shape(format!("no column `{c}`"))))
                .collect::<Result<Vec<_>>>()?;
            let series =
                LabeledSeries { channels: idx.iter().map(|&c| ds.column(c)).collect(), labels: ds.labels.clone() };
            build_domain(role, &[series], segmentation)
        }
    }
}

/// Input tensor `[N, channels, L]` for `geometry`.
pub fn to_model_input(ds: &TabularDataset, geometry: &Geometry) -> Result<Tensor> {
    Ok(to_domain(ds, geometry, LabelMode::Binary, DomainRole::Target)?.x().clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tabular_broadcast() {
        let n = 3;
        let f = 21;
        let values: Vec<f64> = (0..n * f).map(|i| i as f64 / 100.0).collect();
        let ds = TabularDataset::new((0..f).map(|i| format!("f{i}")).collect(), values, vec![1, 0, 1]).unwrap();
        let x = to_model_input(&ds, &Geometry::Tabular { channels: 21, window: 10 }).unwrap();
        assert_eq!(x.shape(), &[3, 21, 10]);
        for r in 0..n {
            for c in 0..f {
                let ch = &x.data()[(r * f + c) * 10..(r * f + c + 1) * 10];
                assert!(ch.iter().all(|&v| v == ds.value(r, c)));
            }
        }
        assert!(to_model_input(&ds, &Geometry::Tabular { channels: 20, window: 10 }).is_err());
    }

    #[test]
    fn windowed_channels() {
        let cols: Vec<String> = (0..7).map(|i| format!("s{i}")).collect();
        let n = 30;
        let values: Vec<f64> = (0..n * 7).map(|i| (i % 13) as f64).collect();
        let ds = TabularDataset::new(cols.clone(), values, vec![1; n]).unwrap();
        let g = Geometry::Windowed { columns: cols, segmentation: SegmentationConfig { window: 10, stride: 5 } };
        let d = to_domain(&ds, &g, LabelMode::Binary, DomainRole::Target).unwrap();
        assert_eq!(d.x().shape(), &[5, 7, 10]);
    }

    #[test]
    fn attack_type_targets() {
        let mut ds = TabularDataset::new(vec!["a".into()], vec![0.0, 1.0, 0.5], vec![1, 0, 0]).unwrap();
        ds.attack_types = Some(vec![None, Some(0), Some(8)]);
        let d =
            to_domain(&ds, &Geometry::Tabular { channels: 1, window: 8 }, LabelMode::AttackType, DomainRole::Target)
                .unwrap();
        assert_eq!(d.y(), &[0, 1, 9]);
        assert_eq!(d.classes(), 10);
    }
}

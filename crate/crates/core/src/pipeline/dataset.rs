//! Raw and encoded tables, CSV ingestion and categorical encoding.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::schema::{
    attack_type_code, FeatureKind, SensorSchema, ATTACK_TYPES, LABEL_COLUMN, NORMAL_TYPE, TIME_COLUMNS, TYPE_COLUMN,
};
use crate::error::{Error, Result};
use crate::{LABEL_ATTACK, LABEL_NORMAL};

/// Cell spellings read as missing.
pub const MISSING_MARKERS: [&str; 6] = ["", "-", "NA", "NaN", "nan", "null"];

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Missing,
    Number(f64),
    Text(String),
}

/// Ingested rows before categorical encoding.
#[derive(Clone, Debug, PartialEq)]
pub struct RawDataset {
    pub columns: Vec<String>,
    pub kinds: Vec<FeatureKind>,
    pub rows: Vec<Vec<Cell>>,
    pub labels: Vec<usize>,
    /// Present when any input carried a type column; `None` marks normal rows.
    pub attack_types: Option<Vec<Option<usize>>>,
}

/// How the label column of an input file encodes normal traffic.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LabelPolarity {
    /// `1` = normal, `0` = attack (the toolkit's own convention).
    #[default]
    NormalIsOne,
    /// `1` = attack, as in the public telemetry releases; flipped on ingest.
    AttackIsOne,
}

impl LabelPolarity {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "normal=1" => Ok(LabelPolarity::NormalIsOne),
            "attack=1" => Ok(LabelPolarity::AttackIsOne),
            other => Err(Error::config(format!("unknown label polarity `{other}` (normal=1|attack=1)"))),
        }
    }
}

fn parse_label(raw: &str, polarity: LabelPolarity) -> Option<usize> {
    let one = match raw.trim() {
        "1" | "1.0" => true,
        "0" | "0.0" => false,
        _ => return None,
    };
    let normal = one == (polarity == LabelPolarity::NormalIsOne);
    Some(if normal { LABEL_NORMAL } else { LABEL_ATTACK })
}

fn csv_error(path: &Path, source: csv::Error) -> Error {
    Error::Csv { path: path.to_path_buf(), source }
}

/// Reads per-sensor (or combined) CSV files and concatenates their rows.
///
/// Columns are the union of the files' feature columns in schema order;
/// a row lacks the columns its file does not have. Time columns are dropped.
/// Cell row numbers in errors are 1-based data rows of the offending file.
pub fn ingest(paths: &[&Path], schemas: &[SensorSchema]) -> Result<RawDataset> {
    ingest_with(paths, schemas, LabelPolarity::default())
}

/// [`ingest`] for files whose label column uses `polarity`.
pub fn ingest_with(paths: &[&Path], schemas: &[SensorSchema], polarity: LabelPolarity) -> Result<RawDataset> {
    super::schema::check_disjoint(schemas)?;
    let all_features: Vec<(&str, &FeatureKind)> =
        schemas.iter().flat_map(|s| s.features.iter().map(|f| (f.name.as_str(), &f.kind))).collect();

    struct FileRows {
        columns: Vec<usize>,
        rows: Vec<Vec<Cell>>,
        labels: Vec<usize>,
        types: Option<Vec<Option<usize>>>,
    }

    let mut files = Vec::new();
    let mut used = vec![false; all_features.len()];
    for path in paths {
        let mut reader =
            csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| csv_error(path, e))?;
        let header: Vec<String> = reader.headers().map_err(|e| csv_error(path, e))?.iter().map(str::to_owned).collect();
        let mut label_at = None;
        let mut type_at = None;
        // (position in file, feature index)
        let mut feature_at = Vec::new();
        for (i, name) in header.iter().enumerate() {
            if name == LABEL_COLUMN {
                label_at = Some(i);
            } else if name == TYPE_COLUMN {
                type_at = Some(i);
            } else if TIME_COLUMNS.contains(&name.as_str()) {
            } else if let Some(f) = all_features.iter().position(|(n, _)| n == name) {
                if feature_at.iter().any(|&(_, g)| g == f) {
                    return Err(Error::Schema(format!("{}: duplicate column `{name}`", path.display())));
                }
                feature_at.push((i, f));
                used[f] = true;
            } else {
                return Err(Error::Schema(format!("{}: unknown column `{name}`", path.display())));
            }
        }
        let label_at =
            label_at.ok_or_else(|| Error::Schema(format!("{}: missing `{LABEL_COLUMN}` column", path.display())))?;

        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut types = type_at.map(|_| Vec::new());
        for (r, record) in reader.records().enumerate() {
            let record = record.map_err(|e| csv_error(path, e))?;
            let row_no = r + 1;
            let cell_err =
                |column: &str, message: String| Error::Ingest { row: row_no, column: column.into(), message };
            let label = parse_label(&record[label_at], polarity)
                .ok_or_else(|| cell_err(LABEL_COLUMN, format!("label `{}` is not 0 or 1", &record[label_at])))?;
            labels.push(label);
            if let (Some(t), Some(types)) = (type_at, types.as_mut()) {
                let raw = &record[t];
                let code = if raw.eq_ignore_ascii_case(NORMAL_TYPE) || raw.is_empty() {
                    None
                } else {
                    Some(attack_type_code(raw).ok_or_else(|| {
                        cell_err(TYPE_COLUMN, format!("unknown attack type `{raw}` (expected one of {ATTACK_TYPES:?})"))
                    })?)
                };
                types.push(code);
            }
            let mut row = Vec::with_capacity(feature_at.len());
            for &(i, f) in &feature_at {
                let (name, kind) = all_features[f];
                let raw = &record[i];
                let cell = if MISSING_MARKERS.contains(&raw) {
                    Cell::Missing
                } else {
                    match kind {
                        FeatureKind::Numeric => Cell::Number(
                            raw.parse::<f64>()
                                .ok()
                                .filter(|v| v.is_finite())
                                .ok_or_else(|| cell_err(name, format!("`{raw}` is not a finite number")))?,
                        ),
                        FeatureKind::Categorical(_) => Cell::Text(raw.to_owned()),
                    }
                };
                row.push(cell);
            }
            rows.push(row);
        }
        files.push(FileRows { columns: feature_at.iter().map(|&(_, f)| f).collect(), rows, labels, types });
    }

    let kept: Vec<usize> = (0..all_features.len()).filter(|&f| used[f]).collect();
    let any_types = files.iter().any(|f| f.types.is_some());
    let mut out = RawDataset {
        columns: kept.iter().map(|&f| all_features[f].0.to_owned()).collect(),
        kinds: kept.iter().map(|&f| all_features[f].1.clone()).collect(),
        rows: Vec::new(),
        labels: Vec::new(),
        attack_types: any_types.then(Vec::new),
    };
    for file in files {
        let slot: Vec<Option<usize>> = kept.iter().map(|f| file.columns.iter().position(|c| c == f)).collect();
        for (row, label) in file.rows.into_iter().zip(&file.labels) {
            let mut cells: Vec<Option<Cell>> = row.into_iter().map(Some).collect();
            out.rows.push(slot.iter().map(|s| s.and_then(|i| cells[i].take()).unwrap_or(Cell::Missing)).collect());
            out.labels.push(*label);
        }
        if let Some(all) = out.attack_types.as_mut() {
            match file.types {
                Some(t) => all.extend(t),
                // Without a type column only the label is known.
                None => all.extend(std::iter::repeat_n(None, file.labels.len())),
            }
        }
    }
    Ok(out)
}

/// Numeric table with `NaN` marking missing cells.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularDataset {
    pub columns: Vec<String>,
    /// Row-major, `rows * columns`.
    pub values: Vec<f64>,
    pub labels: Vec<usize>,
    pub attack_types: Option<Vec<Option<usize>>>,
    /// Columns that hold categorical codes.
    pub categorical: Vec<bool>,
}

impl TabularDataset {
    pub fn new(columns: Vec<String>, values: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        let categorical = vec![false; columns.len()];
        let ds = TabularDataset { columns, values, labels, attack_types: None, categorical };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.labels.len() * self.columns.len() {
            return Err(Error::shape(format!(
                "{} values for {} rows x {} columns",
                self.values.len(),
                self.labels.len(),
                self.columns.len()
            )));
        }
        if self.categorical.len() != self.columns.len() {
            return Err(Error::shape("categorical flags do not match the columns"));
        }
        if let Some(t) = &self.attack_types {
            if t.len() != self.labels.len() {
                return Err(Error::shape("attack-type column length differs from the labels"));
            }
        }
        if self.labels.iter().any(|&l| l != LABEL_NORMAL && l != LABEL_ATTACK) {
            return Err(Error::shape("labels must be binary"));
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let c = self.n_cols();
        &self.values[row * c..(row + 1) * c]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|r| self.value(r, col)).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }

    pub fn select_rows(&self, rows: &[usize]) -> TabularDataset {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols());
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        TabularDataset {
            columns: self.columns.clone(),
            values,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            attack_types: self.attack_types.as_ref().map(|t| rows.iter().map(|&r| t[r]).collect()),
            categorical: self.categorical.clone(),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> TabularDataset {
        let mut values = Vec::with_capacity(self.n_rows() * cols.len());
        for r in 0..self.n_rows() {
            let row = self.row(r);
            values.extend(cols.iter().map(|&c| row[c]));
        }
        TabularDataset {
            columns: cols.iter().map(|&c| self.columns[c].clone()).collect(),
            values,
            labels: self.labels.clone(),
            attack_types: self.attack_types.clone(),
            categorical: cols.iter().map(|&c| self.categorical[c]).collect(),
        }
    }

    /// Features, then `label`, then `type` when known. Values use the
    /// shortest representation that parses back to the same bits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let mut header: Vec<&str> = self.columns.iter().map(String::as_str).collect();
        header.push(LABEL_COLUMN);
        if self.attack_types.is_some() {
            header.push(TYPE_COLUMN);
        }
        out.push_str(&header.join(","));
        out.push('\n');
        for r in 0..self.n_rows() {
            for v in self.row(r) {
                if v.is_nan() {
                    out.push(',');
                } else {
                    let _ = write!(out, "{v},");
                }
            }
            let _ = write!(out, "{}", self.labels[r]);
            if let Some(t) = &self.attack_types {
                let _ = write!(out, ",{}", t[r].map_or(NORMAL_TYPE, |c| ATTACK_TYPES[c]));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Reads a prepared (all-numeric) CSV written by [`Self::to_csv`].
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let header: Vec<String> = reader.headers().map_err(|e| csv_error(path, e))?.iter().map(str::to_owned).collect();
        let label_at = header
            .iter()
            .position(|h| h == LABEL_COLUMN)
            .ok_or_else(|| Error::Schema(format!("{}: missing `{LABEL_COLUMN}` column", path.display())))?;
        let type_at = header.iter().position(|h| h == TYPE_COLUMN);
        let feature_at: Vec<usize> = (0..header.len()).filter(|&i| i != label_at && Some(i) != type_at).collect();
        let mut ds = TabularDataset {
            columns: feature_at.iter().map(|&i| header[i].clone()).collect(),
            values: Vec::new(),
            labels: Vec::new(),
            attack_types: type_at.map(|_| Vec::new()),
            categorical: vec![false; feature_at.len()],
        };
        for (r, record) in reader.records().enumerate() {
            let record = record.map_err(|e| csv_error(path, e))?;
            let err = |column: &str, message: String| Error::Ingest { row: r + 1, column: column.into(), message };
            for &i in &feature_at {
                let raw = &record[i];
                ds.values.push(if raw.is_empty() {
                    f64::NAN
                } else {
                    raw.parse().map_err(|_| err(&header[i], format!("`{raw}` is not a number")))?
                });
            }
            ds.labels.push(
                parse_label(&record[label_at], LabelPolarity::NormalIsOne)
                    .ok_or_else(|| err(LABEL_COLUMN, "bad label".into()))?,
            );
            if let (Some(t), Some(types)) = (type_at, ds.attack_types.as_mut()) {
                let raw = &record[t];
                types.push(if raw == NORMAL_TYPE {
                    None
                } else {
                    Some(attack_type_code(raw).ok_or_else(|| err(TYPE_COLUMN, format!("unknown type `{raw}`")))?)
                });
            }
        }
        ds.validate()?;
        Ok(ds)
    }
}

/// Replaces categorical values by their vocabulary index. Missing cells stay
/// missing (`NaN`).
pub fn encode_labels(raw: &RawDataset) -> Result<TabularDataset> {
    let mut values = Vec::with_capacity(raw.rows.len() * raw.columns.len());
    for (r, row) in raw.rows.iter().enumerate() {
        for ((cell, kind), name) in row.iter().zip(&raw.kinds).zip(&raw.columns) {
            values.push(match (cell, kind) {
                (Cell::Missing, _) => f64::NAN,
                (Cell::Number(v), FeatureKind::Numeric) => *v,
                (Cell::Text(t), FeatureKind::Categorical(vocab)) => {
                    vocab.iter().position(|v| v == t).ok_or_else(|| {
                        Error::Encode(format!("row {}: `{t}` is not in the vocabulary of `{name}` {vocab:?}", r + 1))
                    })? as f64
                }
                _ => return Err(Error::Encode(format!("row {}: cell kind does not match column `{name}`", r + 1))),
            });
        }
    }
    let ds = TabularDataset {
        columns: raw.columns.clone(),
        values,
        labels: raw.labels.clone(),
        attack_types: raw.attack_types.clone(),
        categorical: raw.kinds.iter().map(|k| matches!(k, FeatureKind::Categorical(_))).collect(),
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::schema::FeatureSpec;
    use std::io::Write;

    fn door_schema() -> SensorSchema {
        SensorSchema::new(
            "garage_door_sensor",
            vec![
                FeatureSpec {
                    name: "door_state".into(),
                    kind: FeatureKind::Categorical(vec!["closed".into(), "open".into()]),
                },
                FeatureSpec { name: "sphone_signal".into(), kind: FeatureKind::Numeric },
            ],
        )
        .unwrap()
    }

    fn fridge_schema() -> SensorSchema {
        SensorSchema::new(
            "fridge_sensor",
            vec![FeatureSpec { name: "fridge_temperature".into(), kind: FeatureKind::Numeric }],
        )
        .unwrap()
    }

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::File::create(&p).unwrap().write_all(text.as_bytes()).unwrap();
        p
    }

    #[test]
    fn concatenates_and_drops_time_columns() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::from("ts,date,time,door_state,sphone_signal,label,type\n");
        for i in 0..10 {
            body.push_str(&format!("{i},01-Apr-19,00:00:0{},open,{i},1,normal\n", i % 10));
        }
        let a = write(dir.path(), "a.csv", &body);
        let b = write(dir.path(), "b.csv", &body.replace(",1,normal", ",0,dos"));
        let raw = ingest(&[&a, &b], &[door_schema()]).unwrap();
        assert_eq!(raw.rows.len(), 20);
        assert_eq!(raw.columns, vec!["door_state", "sphone_signal"]);
        let enc = encode_labels(&raw).unwrap();
        assert_eq!(enc.value(0, 0), 1.0);
        assert_eq!(enc.labels[15], LABEL_ATTACK);
        assert_eq!(enc.attack_types.as_ref().unwrap()[15], Some(0));
    }

    #[test]
    fn union_of_columns_marks_missing() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(dir.path(), "door.csv", "door_state,sphone_signal,label\nclosed,1,1\n");
        let f = write(dir.path(), "fridge.csv", "fridge_temperature,label\n3.5,0\n");
        let raw = ingest(&[&a, &f], &[door_schema(), fridge_schema()]).unwrap();
        assert_eq!(raw.columns, vec!["door_state", "sphone_signal", "fridge_temperature"]);
        let enc = encode_labels(&raw).unwrap();
        assert!(enc.value(0, 2).is_nan() && enc.value(1, 0).is_nan());
        assert_eq!(enc.value(1, 2), 3.5);
        assert_eq!(enc.missing_count(), 3);
    }

    #[test]
    fn error_contracts() {
        let dir = tempfile::tempdir().unwrap();
        let unknown = write(dir.path(), "u.csv", "door_state,wheels,label\nopen,4,1\n");
        let err = ingest(&[&unknown], &[door_schema()]).unwrap_err();
        assert!(matches!(&err, Error::Schema(m) if m.contains("wheels")), "{err}");

        let bad = write(dir.path(), "b.csv", "door_state,sphone_signal,label\nopen,1,1\nopen,x,1\n");
        match ingest(&[&bad], &[door_schema()]).unwrap_err() {
            Error::Ingest { row, column, .. } => assert_eq!((row, column.as_str()), (2, "sphone_signal")),
            other => panic!("{other}"),
        }

        let ajar = write(dir.path(), "c.csv", "door_state,label\najar,1\n");
        let raw = ingest(&[&ajar], &[door_schema()]).unwrap();
        assert!(matches!(encode_labels(&raw), Err(Error::Encode(_))));
    }

    #[test]
    fn prepared_csv_round_trip() {
        let mut ds =
            TabularDataset::new(vec!["a".into(), "b".into()], vec![0.1, 1.0 / 3.0, f64::NAN, 2.0], vec![1, 0]).unwrap();
        ds.attack_types = Some(vec![None, Some(8)]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        ds.write_csv(&p).unwrap();
        let back = TabularDataset::read_csv(&p).unwrap();
        assert_eq!(back.to_csv(), ds.to_csv());
        assert_eq!(back.value(0, 1), 1.0 / 3.0);
    }
}

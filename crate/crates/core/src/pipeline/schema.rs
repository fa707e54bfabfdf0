//! Per-sensor schema files.
//!
//! ```text
//! sensor = garage_door_sensor
//! feature.door_state = categorical: closed, open
//! feature.sphone_signal = numeric
//! ```
//!
//! Categorical codes follow the declared vocabulary order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kv::{split_list, KvFile};

pub const LABEL_COLUMN: &str = "label";
pub const TYPE_COLUMN: &str = "type";
/// Time-keeping columns, never used as features.
pub const TIME_COLUMNS: [&str; 4] = ["ts", "date", "time", "timestamp"];
/// Attack-type vocabulary; the code of a type is its index here.
pub const ATTACK_TYPES: [&str; 9] =
    ["dos", "ddos", "injection", "mitm", "backdoor", "password", "scanning", "xss", "ransomware"];
/// Type value of normal rows.
pub const NORMAL_TYPE: &str = "normal";

pub fn attack_type_code(name: &str) -> Option<usize> {
    ATTACK_TYPES.iter().position(|t| t.eq_ignore_ascii_case(name))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    Numeric,
    Categorical(Vec<String>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SensorSchema {
    pub sensor: String,
    pub features: Vec<FeatureSpec>,
}

impl SensorSchema {
    pub fn new(sensor: impl Into<String>, features: Vec<FeatureSpec>) -> Result<Self> {
        let schema = SensorSchema { sensor: sensor.into(), features };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, f) in self.features.iter().enumerate() {
            if self.features[..i].iter().any(|g| g.name == f.name) {
                return Err(Error::Schema(format!("{}: duplicate feature `{}`", self.sensor, f.name)));
            }
            if f.name == LABEL_COLUMN || f.name == TYPE_COLUMN || TIME_COLUMNS.contains(&f.name.as_str()) {
                return Err(Error::Schema(format!("{}: reserved column name `{}`", self.sensor, f.name)));
            }
            if let FeatureKind::Categorical(vocab) = &f.kind {
                if vocab.is_empty() {
                    return Err(Error::Schema(format!("{}: `{}` has an empty vocabulary", self.sensor, f.name)));
                }
            }
        }
        Ok(())
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureSpec> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = KvFile::parse(text).map_err(|e| Error::Schema(e.to_string()))?;
        let sensor = kv.get("sensor").ok_or_else(|| Error::Schema("schema lacks `sensor`".into()))?;
        let mut features = Vec::new();
        for (key, value) in kv.entries() {
            let Some(name) = key.strip_prefix("feature.") else {
                if key != "sensor" {
                    return Err(Error::Schema(format!("unexpected schema key `{key}`")));
                }
                continue;
            };
            let kind = if value == "numeric" {
                FeatureKind::Numeric
            } else if let Some(vocab) = value.strip_prefix("categorical:") {
                FeatureKind::Categorical(split_list(vocab))
            } else {
                return Err(Error::Schema(format!("feature `{name}`: unknown kind `{value}`")));
            };
            features.push(FeatureSpec { name: name.to_owned(), kind });
        }
        SensorSchema::new(sensor, features)
    }

    pub fn to_text(&self) -> String {
        let mut kv = KvFile::new();
        kv.set("sensor", &self.sensor);
        for f in &self.features {
            let kind = match &f.kind {
                FeatureKind::Numeric => "numeric".to_owned(),
                FeatureKind::Categorical(v) => format!("categorical: {}", v.join(", ")),
            };
            kv.set(&format!("feature.{}", f.name), kind);
        }
        kv.to_text()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
    }
}

/// Every `*.schema` file of a directory, in file-name order.
pub fn load_schema_dir(dir: &Path) -> Result<Vec<SensorSchema>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "schema") {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Schema(format!("no .schema files in {}", dir.display())));
    }
    let schemas = paths.iter().map(|p| SensorSchema::load(p)).collect::<Result<Vec<_>>>()?;
    check_disjoint(&schemas)?;
    Ok(schemas)
}

/// Feature names must be unique across sensors.
pub fn check_disjoint(schemas: &[SensorSchema]) -> Result<()> {
    let mut seen: Vec<(&str, &str)> = Vec::new();
    for s in schemas {
        for f in &s.features {
            if let Some((_, other)) = seen.iter().find(|(n, _)| *n == f.name) {
                return Err(Error::Schema(format!("feature `{}` declared by {other} and {}", f.name, s.sensor)));
            }
            seen.push((&f.name, &s.sensor));
        }
    }
    Ok(())
}

pub fn write_schema_dir(dir: &Path, schemas: &[SensorSchema]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for s in schemas {
        let path = dir.join(format!("{}.schema", s.sensor));
        fs::write(&path, s.to_text()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

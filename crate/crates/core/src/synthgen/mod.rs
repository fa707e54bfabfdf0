//! Seeded synthetic telemetry for seven IoT sensors with injectable attacks.
//!
//! Every sensor advances on a shared tick. Normal behaviour is a noisy
//! sinusoid per numeric feature and a Markov chain per categorical feature;
//! an attack scenario overrides the targeted sensors' values on a half-open
//! tick interval with a kind-specific pattern whose magnitude grows with
//! `severity`.
//!
//! Each sensor draws from its own ChaCha stream and draws the same amount of
//! randomness per tick whether or not it is under attack, so injecting a
//! scenario changes only the rows inside its interval.

mod benchmark;
mod profiles;

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kv::{split_list, KvFile};
use crate::pipeline::dataset::{Cell, RawDataset};
use crate::pipeline::schema::{
    write_schema_dir, FeatureKind, FeatureSpec, SensorSchema, ATTACK_TYPES, LABEL_COLUMN, NORMAL_TYPE, TYPE_COLUMN,
};
use crate::{LABEL_ATTACK, LABEL_NORMAL};

pub use benchmark::{make_benchmark, Bundle, BENCHMARKS};
pub use profiles::default_profiles;

/// First timestamp written to the `ts` column (2019-04-25 00:00:00 UTC).
pub const BASE_TIMESTAMP: i64 = 1_556_150_400;
/// Values are rounded to this many decimals so written CSVs read back exactly.
pub const DECIMALS: i32 = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct NumericGenerator {
    pub name: String,
    pub offset: f64,
    pub amplitude: f64,
    /// Seconds per cycle.
    pub period: f64,
    pub phase: f64,
    pub noise_sd: f64,
}

impl NumericGenerator {
    /// Typical spread, used to size attack perturbations.
    fn scale(&self) -> f64 {
        (self.amplitude.abs() + self.noise_sd).max(1e-3)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalGenerator {
    pub name: String,
    pub states: Vec<String>,
    /// Row `i` is the distribution of the next state after state `i`.
    pub transitions: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeatureGenerator {
    Numeric(NumericGenerator),
    Categorical(CategoricalGenerator),
}

impl FeatureGenerator {
    pub fn name(&self) -> &str {
        match self {
            FeatureGenerator::Numeric(g) => &g.name,
            FeatureGenerator::Categorical(g) => &g.name,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensorProfile {
    pub sensor: String,
    pub features: Vec<FeatureGenerator>,
    /// Seconds between samples; scales the waveform clock.
    pub sample_period: f64,
}

impl SensorProfile {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(format!("profile {}: {m}", self.sensor)));
        if !(self.sample_period > 0.0 && self.sample_period.is_finite()) {
            return bad("sample period must be positive".into());
        }
        for f in &self.features {
            match f {
                FeatureGenerator::Numeric(g) => {
                    if !(g.noise_sd >= 0.0 && g.noise_sd.is_finite()) {
                        return bad(format!("`{}` noise sd must be non-negative", g.name));
                    }
                    if g.period.is_nan()
                        || g.period <= 0.0
                        || ![g.offset, g.amplitude, g.phase].iter().all(|v| v.is_finite())
                    {
                        return bad(format!("`{}` has a non-finite or non-positive waveform parameter", g.name));
                    }
                }
                FeatureGenerator::Categorical(g) => {
                    let n = g.states.len();
                    if n < 2 {
                        return bad(format!("`{}` needs at least two states", g.name));
                    }
                    if g.transitions.len() != n || g.transitions.iter().any(|r| r.len() != n) {
                        return bad(format!("`{}` transition matrix must be {n}x{n}", g.name));
                    }
                    for row in &g.transitions {
                        if row.iter().any(|&p| p.is_nan() || p < 0.0) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                            return bad(format!("`{}` transition rows must be distributions", g.name));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> Result<SensorSchema> {
        let features = self
            .features
            .iter()
            .map(|f| FeatureSpec {
                name: f.name().to_owned(),
                kind: match f {
                    FeatureGenerator::Numeric(_) => FeatureKind::Numeric,
                    FeatureGenerator::Categorical(g) => FeatureKind::Categorical(g.states.clone()),
                },
            })
            .collect();
        SensorSchema::new(self.sensor.clone(), features)
    }

    /// Key-value description, e.g. `numeric.fridge_temperature = 7, 3, 600, 0, 0.5`
    /// (offset, amplitude, period, phase, noise sd) and
    /// `categorical.door_state = closed, open; 0.9, 0.1; 0.1, 0.9`.
    pub fn to_text(&self) -> String {
        let mut kv = KvFile::new();
        kv.set("sensor", &self.sensor);
        kv.set("sample_period", self.sample_period);
        for f in &self.features {
            match f {
                FeatureGenerator::Numeric(g) => kv.set(
                    &format!("numeric.{}", g.name),
                    format!("{}, {}, {}, {}, {}", g.offset, g.amplitude, g.period, g.phase, g.noise_sd),
                ),
                FeatureGenerator::Categorical(g) => {
                    let mut v = g.states.join(", ");
                    for row in &g.transitions {
                        v.push_str("; ");
                        v.push_str(&row.iter().map(f64::to_string).collect::<Vec<_>>().join(", "));
                    }
                    kv.set(&format!("categorical.{}", g.name), v);
                }
            }
        }
        kv.to_text()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = KvFile::parse(text)?;
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::config(format!("`{s}` is not a number")));
        let mut features = Vec::new();
        for (key, value) in kv.entries() {
            if let Some(name) = key.strip_prefix("numeric.") {
                let v = split_list(value).iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
                if v.len() != 5 {
                    return Err(Error::config(format!("`{key}` needs offset, amplitude, period, phase, noise sd")));
                }
                features.push(FeatureGenerator::Numeric(NumericGenerator {
                    name: name.into(),
                    offset: v[0],
                    amplitude: v[1],
                    period: v[2],
                    phase: v[3],
                    noise_sd: v[4],
                }));
            } else if let Some(name) = key.strip_prefix("categorical.") {
                let mut parts = value.split(';');
                let states = split_list(parts.next().unwrap_or(""));
                let transitions = parts
                    .map(|row| split_list(row).iter().map(|s| num(s)).collect::<Result<Vec<_>>>())
                    .collect::<Result<Vec<_>>>()?;
                features.push(FeatureGenerator::Categorical(CategoricalGenerator {
                    name: name.into(),
                    states,
                    transitions,
                }));
            } else if key != "sensor" && key != "sample_period" {
                return Err(Error::config(format!("unknown profile key `{key}`")));
            }
        }
        let profile = SensorProfile {
            sensor: kv.require("sensor")?.to_owned(),
            sample_period: kv.parse_value("sample_period")?.unwrap_or(1.0),
            features,
        };
        profile.validate()?;
        Ok(profile)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttackKind {
    Dos,
    Ddos,
    Injection,
    Mitm,
    Backdoor,
    Password,
    Scanning,
    Xss,
    Ransomware,
}

impl AttackKind {
    pub const ALL: [AttackKind; 9] = [
        AttackKind::Dos,
        AttackKind::Ddos,
        AttackKind::Injection,
        AttackKind::Mitm,
        AttackKind::Backdoor,
        AttackKind::Password,
        AttackKind::Scanning,
        AttackKind::Xss,
        AttackKind::Ransomware,
    ];

    /// Index into the attack-type vocabulary.
    pub fn code(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        ATTACK_TYPES[self.code()]
    }

    pub fn parse(name: &str) -> Result<Self> {
        crate::pipeline::schema::attack_type_code(name)
            .map(|c| AttackKind::ALL[c])
            .ok_or_else(|| Error::Scenario(format!("unknown attack kind `{name}` (expected one of {ATTACK_TYPES:?})")))
    }
}

/// One attack on ticks `start..end`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackScenario {
    pub kind: AttackKind,
    pub start: usize,
    pub end: usize,
    /// Perturbation size in units of each feature's typical spread.
    pub severity: f64,
    /// Targeted sensors; `None` targets all of them.
    pub sensors: Option<Vec<String>>,
}

impl AttackScenario {
    pub fn new(kind: AttackKind, start: usize, end: usize, severity: f64) -> Self {
        AttackScenario { kind, start, end, severity, sensors: None }
    }

    fn targets(&self, sensor: &str) -> bool {
        self.sensors.as_ref().is_none_or(|s| s.iter().any(|n| n == sensor))
    }

    fn overlaps(&self, other: &AttackScenario) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Checks bounds, severities, sensor names and per-sensor overlap.
pub fn validate_scenarios(profiles: &[SensorProfile], length: usize, scenarios: &[AttackScenario]) -> Result<()> {
    for (i, s) in scenarios.iter().enumerate() {
        if s.start >= s.end || s.end > length {
            return Err(Error::Scenario(format!(
                "scenario {i} ({}): interval {}..{} is empty or outside 0..{length}",
                s.kind.name(),
                s.start,
                s.end
            )));
        }
        if !(s.severity > 0.0 && s.severity.is_finite()) {
            return Err(Error::Scenario(format!("scenario {i}: severity must be positive")));
        }
        for name in s.sensors.iter().flatten() {
            if !profiles.iter().any(|p| &p.sensor == name) {
                return Err(Error::Scenario(format!("scenario {i}: unknown sensor `{name}`")));
            }
        }
        for (j, o) in scenarios[..i].iter().enumerate() {
            if s.overlaps(o) && profiles.iter().any(|p| s.targets(&p.sensor) && o.targets(&p.sensor)) {
                return Err(Error::Scenario(format!("scenarios {j} and {i} overlap on a shared sensor")));
            }
        }
    }
    Ok(())
}

/// Rows of one sensor, aligned with the combined table.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorTable {
    pub sensor: String,
    pub sample_period: f64,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub labels: Vec<usize>,
    pub attack_types: Vec<Option<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub schemas: Vec<SensorSchema>,
    pub sensors: Vec<SensorTable>,
    /// All features side by side, one row per tick. A row is an attack when
    /// any scenario covers its tick; its type is the first such scenario's.
    pub combined: RawDataset,
}

fn round(v: f64) -> f64 {
    let k = 10f64.powi(DECIMALS);
    (v * k).round() / k
}

fn numeric_value(
    g: &NumericGenerator,
    clock: f64,
    noise: f64,
    attack: Option<(&AttackScenario, usize)>,
    u: f64,
) -> f64 {
    let wave = g.amplitude * (2.0 * PI * clock / g.period + g.phase).sin();
    let normal = g.offset + wave + g.noise_sd * noise;
    let Some((a, k)) = attack else { return normal };
    let (s, sev) = (g.scale(), a.severity);
    let high = g.offset + g.amplitude.abs();
    let low = g.offset - g.amplitude.abs();
    match a.kind {
        // Saturated bursts: pinned high on alternate triples of ticks.
        AttackKind::Dos => {
            if (k / 3) % 2 == 0 {
                high + 3.0 * sev * s
            } else {
                normal + 1.5 * sev * s
            }
        }
        AttackKind::Ddos => high + 3.0 * sev * s + g.noise_sd * noise,
        // Out-of-range constant.
        AttackKind::Injection => high + 4.0 * sev * s,
        AttackKind::Mitm => normal + 2.0 * sev * s,
        AttackKind::Backdoor => normal + sev * s * if k % 4 == 0 { 4.0 } else { 2.0 },
        // Erratic: amplified deviations around a raised level.
        AttackKind::Password => g.offset + (wave + g.noise_sd * noise) * (1.0 + sev) + 2.0 * sev * s,
        AttackKind::Scanning => normal + 2.5 * sev * s,
        AttackKind::Xss => normal + sev * s * (2.0 + 2.0 * (k % 5) as f64 / 5.0),
        AttackKind::Ransomware => low - 2.0 * sev * s * (0.75 + 0.5 * u),
    }
}

fn categorical_state(
    g: &CategoricalGenerator,
    normal: usize,
    frozen: usize,
    attack: Option<(&AttackScenario, usize)>,
    u: f64,
) -> usize {
    let Some((a, k)) = attack else { return normal };
    let last = g.states.len() - 1;
    match a.kind {
        AttackKind::Dos | AttackKind::Ddos | AttackKind::Injection => last,
        // High-frequency flips.
        AttackKind::Scanning => k % g.states.len(),
        AttackKind::Mitm => frozen,
        AttackKind::Ransomware => 0,
        _ => {
            if u < a.severity / (1.0 + a.severity) {
                last
            } else {
                normal
            }
        }
    }
}

fn sensor_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generates `length` ticks for every profile with the given attacks.
pub fn generate(
    profiles: &[SensorProfile],
    length: usize,
    scenarios: &[AttackScenario],
    seed: u64,
) -> Result<Generated> {
    generate_with_missing(profiles, length, scenarios, seed, 0.0)
}

/// [`generate`], then blanks each numeric cell with probability
/// `missing_rate` (from separate streams, so values and labels are unchanged).
pub fn generate_with_missing(
    profiles: &[SensorProfile],
    length: usize,
    scenarios: &[AttackScenario],
    seed: u64,
    missing_rate: f64,
) -> Result<Generated> {
    if length == 0 {
        return Err(Error::config("length must be at least 1"));
    }
    if !(0.0..1.0).contains(&missing_rate) {
        return Err(Error::config(format!("missing rate {missing_rate} must lie in [0, 1)")));
    }
    if profiles.is_empty() {
        return Err(Error::config("no sensor profiles"));
    }
    for p in profiles {
        p.validate()?;
    }
    let schemas = profiles.iter().map(SensorProfile::schema).collect::<Result<Vec<_>>>()?;
    crate::pipeline::schema::check_disjoint(&schemas)?;
    validate_scenarios(profiles, length, scenarios)?;

    // Scenario in force per tick, first listed wins in the combined view.
    let covering = |t: usize, sensor: Option<&str>| {
        scenarios.iter().find(|s| s.start <= t && t < s.end && sensor.is_none_or(|n| s.targets(n)))
    };

    let mut sensors = Vec::with_capacity(profiles.len());
    for (p_idx, p) in profiles.iter().enumerate() {
        let mut rng = sensor_rng(seed, 2 * p_idx as u64 + 1);
        let mut holes = sensor_rng(seed, 2 * p_idx as u64 + 2);
        let mut states: Vec<usize> = vec![0; p.features.len()];
        let mut frozen = states.clone();
        let mut table = SensorTable {
            sensor: p.sensor.clone(),
            sample_period: p.sample_period,
            columns: p.features.iter().map(|f| f.name().to_owned()).collect(),
            rows: Vec::with_capacity(length),
            labels: Vec::with_capacity(length),
            attack_types: Vec::with_capacity(length),
        };
        for t in 0..length {
            let attack = covering(t, Some(&p.sensor));
            if attack.is_some_and(|a| a.start == t) {
                frozen.clone_from(&states);
            }
            let phase = attack.map(|a| (a, t - a.start));
            let clock = t as f64 * p.sample_period;
            let mut row = Vec::with_capacity(p.features.len());
            for (f_idx, f) in p.features.iter().enumerate() {
                // Fixed draws per tick: noise, a chain step and an attack draw.
                let noise: f64 = StandardNormal.sample(&mut rng);
                let u: f64 = rng.random();
                let v: f64 = rng.random();
                let hole: f64 = holes.random();
                row.push(match f {
                    FeatureGenerator::Numeric(g) => {
                        if hole < missing_rate {
                            Cell::Missing
                        } else {
                            Cell::Number(round(numeric_value(g, clock, noise, phase, v)))
                        }
                    }
                    FeatureGenerator::Categorical(g) => {
                        if t > 0 {
                            let probs = &g.transitions[states[f_idx]];
                            let mut acc = 0.0;
                            let mut next = probs.len() - 1;
                            for (j, p) in probs.iter().enumerate() {
                                acc += p;
                                if u < acc {
                                    next = j;
                                    break;
                                }
                            }
                            states[f_idx] = next;
                        }
                        Cell::Text(g.states[categorical_state(g, states[f_idx], frozen[f_idx], phase, v)].clone())
                    }
                });
            }
            table.rows.push(row);
            table.labels.push(if attack.is_some() { LABEL_ATTACK } else { LABEL_NORMAL });
            table.attack_types.push(attack.map(|a| a.kind.code()));
        }
        sensors.push(table);
    }

    let mut combined = RawDataset {
        columns: sensors.iter().flat_map(|s| s.columns.iter().cloned()).collect(),
        kinds: schemas.iter().flat_map(|s| s.features.iter().map(|f| f.kind.clone())).collect(),
        rows: Vec::with_capacity(length),
        labels: Vec::with_capacity(length),
        attack_types: Some(Vec::with_capacity(length)),
    };
    for t in 0..length {
        combined.rows.push(sensors.iter().flat_map(|s| s.rows[t].iter().cloned()).collect());
        let attack = covering(t, None);
        combined.labels.push(if attack.is_some() { LABEL_ATTACK } else { LABEL_NORMAL });
        if let Some(types) = combined.attack_types.as_mut() {
            types.push(attack.map(|a| a.kind.code()));
        }
    }
    Ok(Generated { schemas, sensors, combined })
}

/// `YYYY-MM-DD` and `HH:MM:SS` of a Unix timestamp (UTC).
fn civil(ts: i64) -> (String, String) {
    let days = ts.div_euclid(86_400);
    let secs = ts.rem_euclid(86_400);
    // Days-to-civil conversion on the proleptic Gregorian calendar.
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    let y = yoe + era * 400 + i64::from(m <= 2);
    (format!("{y:04}-{m:02}-{d:02}"), format!("{:02}:{:02}:{:02}", secs / 3600, secs / 60 % 60, secs % 60))
}

fn cell_text(c: &Cell) -> String {
    match c {
        Cell::Missing => String::new(),
        Cell::Number(v) => v.to_string(),
        Cell::Text(t) => t.clone(),
    }
}

fn table_csv(columns: &[String], rows: &[Vec<Cell>], labels: &[usize], types: &[Option<usize>], period: f64) -> String {
    let mut out = String::from("ts,date,time,");
    for c in columns {
        out.push_str(c);
        out.push(',');
    }
    let _ = writeln!(out, "{LABEL_COLUMN},{TYPE_COLUMN}");
    for (t, ((row, label), ty)) in rows.iter().zip(labels).zip(types).enumerate() {
        let ts = BASE_TIMESTAMP + (t as f64 * period) as i64;
        let (date, time) = civil(ts);
        let _ = write!(out, "{ts},{date},{time},");
        for c in row {
            out.push_str(&cell_text(c));
            out.push(',');
        }
        let _ = writeln!(out, "{label},{}", ty.map_or(NORMAL_TYPE, |c| ATTACK_TYPES[c]));
    }
    out
}

impl Generated {
    pub fn combined_csv(&self) -> String {
        let period = self.sensors.first().map_or(1.0, |s| s.sample_period);
        let types = self.combined.attack_types.clone().unwrap_or_else(|| vec![None; self.combined.labels.len()]);
        table_csv(&self.combined.columns, &self.combined.rows, &self.combined.labels, &types, period)
    }

    pub fn sensor_csv(&self, sensor: usize) -> String {
        let s = &self.sensors[sensor];
        table_csv(&s.columns, &s.rows, &s.labels, &s.attack_types, s.sample_period)
    }

    /// Writes `combined.csv`, `sensors/<sensor>.csv` and `schema/<sensor>.schema`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let sensors = dir.join("sensors");
        fs::create_dir_all(&sensors).map_err(|e| Error::io(&sensors, e))?;
        let path = dir.join("combined.csv");
        fs::write(&path, self.combined_csv()).map_err(|e| Error::io(&path, e))?;
        for (i, s) in self.sensors.iter().enumerate() {
            let path = sensors.join(format!("{}.csv", s.sensor));
            fs::write(&path, self.sensor_csv(i)).map_err(|e| Error::io(&path, e))?;
        }
        write_schema_dir(&dir.join("schema"), &self.schemas)
    }
}

/// A scenario file: tick count, seed, missing-cell rate and attacks.
///
/// ```text
/// length = 1000
/// seed = 7
/// attack.0.kind = dos
/// attack.0.start = 100
/// attack.0.end = 200
/// attack.0.severity = 2
/// attack.0.sensors = fridge_sensor, modbus_sensor
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub length: usize,
    pub seed: u64,
    pub missing_rate: f64,
    pub scenarios: Vec<AttackScenario>,
}

impl SynthSpec {
    pub fn generate(&self, profiles: &[SensorProfile]) -> Result<Generated> {
        generate_with_missing(profiles, self.length, &self.scenarios, self.seed, self.missing_rate)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = KvFile::parse(text).map_err(|e| Error::Scenario(e.to_string()))?;
        let scen = |e: Error| Error::Scenario(e.to_string());
        let mut ids: Vec<usize> = Vec::new();
        for (key, _) in kv.entries() {
            if let Some(rest) = key.strip_prefix("attack.") {
                let id = rest
                    .split('.')
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Scenario(format!("bad key `{key}`")))?;
                if !ids.contains(&id) {
                    ids.push(id);
                }
            } else if !["length", "seed", "missing_rate"].contains(&key.as_str()) {
                return Err(Error::Scenario(format!("unknown scenario key `{key}`")));
            }
        }
        ids.sort_unstable();
        let scenarios = ids
            .into_iter()
            .map(|id| {
                let key = |f: &str| format!("attack.{id}.{f}");
                let need = |f: &str| -> Result<usize> {
                    kv.parse_value(&key(f))
                        .map_err(scen)?
                        .ok_or_else(|| Error::Scenario(format!("missing `{}`", key(f))))
                };
                Ok(AttackScenario {
                    kind: AttackKind::parse(
                        kv.get(&key("kind")).ok_or_else(|| Error::Scenario(format!("missing `{}`", key("kind"))))?,
                    )?,
                    start: need("start")?,
                    end: need("end")?,
                    severity: kv.parse_value(&key("severity")).map_err(scen)?.unwrap_or(1.0),
                    sensors: kv.get(&key("sensors")).map(split_list),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SynthSpec {
            length: kv
                .parse_value("length")
                .map_err(scen)?
                .ok_or_else(|| Error::Scenario("missing `length`".into()))?,
            seed: kv.parse_value("seed").map_err(scen)?.unwrap_or(0),
            missing_rate: kv.parse_value("missing_rate").map_err(scen)?.unwrap_or(0.0),
            scenarios,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_text(&self) -> String {
        let mut kv = KvFile::new();
        kv.set("length", self.length);
        kv.set("seed", self.seed);
        kv.set("missing_rate", self.missing_rate);
        for (i, s) in self.scenarios.iter().enumerate() {
            kv.set(&format!("attack.{i}.kind"), s.kind.name());
            kv.set(&format!("attack.{i}.start"), s.start);
            kv.set(&format!("attack.{i}.end"), s.end);
            kv.set(&format!("attack.{i}.severity"), s.severity);
            if let Some(names) = &s.sensors {
                kv.set(&format!("attack.{i}.sensors"), names.join(", "));
            }
        }
        kv.to_text()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::dataset::ingest;

    fn attack_rows(g: &Generated) -> usize {
        g.combined.labels.iter().filter(|&&l| l == LABEL_ATTACK).count()
    }

    #[test]
    fn profiles_are_valid() {
        let p = default_profiles();
        assert_eq!(p.len(), 7);
        assert_eq!(p.iter().map(|p| p.features.len()).sum::<usize>(), 17);
        for profile in &p {
            profile.validate().unwrap();
            assert_eq!(SensorProfile::parse(&profile.to_text()).unwrap(), *profile);
        }
    }

    #[test]
    fn no_scenarios_all_normal() {
        let g = generate(&default_profiles(), 50, &[], 1).unwrap();
        assert_eq!(attack_rows(&g), 0);
        assert_eq!(g.combined.columns.len(), 17);
    }

    #[test]
    fn interval_labels() {
        let s = [AttackScenario::new(AttackKind::Dos, 100, 200, 1.0)];
        let g = generate(&default_profiles(), 1000, &s, 1).unwrap();
        assert_eq!(attack_rows(&g), 100);
        for (t, &l) in g.combined.labels.iter().enumerate() {
            assert_eq!(l == LABEL_ATTACK, (100..200).contains(&t));
        }
        let types = g.combined.attack_types.as_ref().unwrap();
        assert!(types[100..200].iter().all(|&c| c == Some(AttackKind::Dos.code())));
    }

    #[test]
    fn attacks_only_touch_their_interval() {
        let clean = generate(&default_profiles(), 300, &[], 4).unwrap();
        let mut s = AttackScenario::new(AttackKind::Scanning, 50, 90, 2.0);
        s.sensors = Some(vec!["modbus_sensor".into(), "garage_door_sensor".into()]);
        let hit = generate(&default_profiles(), 300, &[s], 4).unwrap();
        for t in 0..300 {
            if !(50..90).contains(&t) {
                assert_eq!(clean.combined.rows[t], hit.combined.rows[t], "tick {t}");
            }
        }
        let weather = hit.sensors.iter().find(|s| s.sensor == "weather_sensor").unwrap();
        assert!(weather.labels.iter().all(|&l| l == LABEL_NORMAL));
        assert_eq!(attack_rows(&hit), 40);
    }

    #[test]
    fn overlap_and_bounds_are_rejected() {
        let p = default_profiles();
        let a = AttackScenario::new(AttackKind::Dos, 10, 20, 1.0);
        let b = AttackScenario::new(AttackKind::Xss, 15, 30, 1.0);
        assert!(matches!(generate(&p, 100, &[a.clone(), b.clone()], 0), Err(Error::Scenario(_))));
        let mut a2 = a.clone();
        a2.sensors = Some(vec!["fridge_sensor".into()]);
        let mut b2 = b.clone();
        b2.sensors = Some(vec!["weather_sensor".into()]);
        generate(&p, 100, &[a2, b2], 0).unwrap();
        assert!(matches!(generate(&p, 15, &[a], 0), Err(Error::Scenario(_))));
        assert!(matches!(generate(&p, 0, &[], 0), Err(Error::Config(_))));
    }

    #[test]
    fn deterministic_csv_and_round_trip() {
        let s = [AttackScenario::new(AttackKind::Injection, 5, 25, 1.5)];
        let a = generate_with_missing(&default_profiles(), 60, &s, 9, 0.05).unwrap();
        let b = generate_with_missing(&default_profiles(), 60, &s, 9, 0.05).unwrap();
        assert_eq!(a.combined_csv(), b.combined_csv());
        assert_ne!(a.combined_csv(), generate(&default_profiles(), 60, &s, 10).unwrap().combined_csv());

        let dir = tempfile::tempdir().unwrap();
        a.write(dir.path()).unwrap();
        let mut loaded = crate::pipeline::schema::load_schema_dir(&dir.path().join("schema")).unwrap();
        let mut want = a.schemas.clone();
        loaded.sort_by(|x, y| x.sensor.cmp(&y.sensor));
        want.sort_by(|x, y| x.sensor.cmp(&y.sensor));
        assert_eq!(loaded, want);
        let back = ingest(&[&dir.path().join("combined.csv")], &a.schemas).unwrap();
        assert_eq!(back, a.combined);
    }

    #[test]
    fn spec_round_trip() {
        let mut s = AttackScenario::new(AttackKind::Ransomware, 3, 9, 0.5);
        s.sensors = Some(vec!["thermostat_sensor".into()]);
        let spec = SynthSpec { length: 12, seed: 3, missing_rate: 0.0, scenarios: vec![s] };
        assert_eq!(SynthSpec::parse(&spec.to_text()).unwrap(), spec);
        assert!(matches!(
            SynthSpec::parse("length = 5\nattack.0.kind = worm\nattack.0.start = 0\nattack.0.end = 1"),
            Err(Error::Scenario(_))
        ));
    }

    #[test]
    fn civil_dates() {
        assert_eq!(civil(0), ("1970-01-01".into(), "00:00:00".into()));
        assert_eq!(civil(BASE_TIMESTAMP + 3661), ("2019-04-25".into(), "01:01:01".into()));
        assert_eq!(civil(951_782_400), ("2000-02-29".into(), "00:00:00".into()));
    }
}

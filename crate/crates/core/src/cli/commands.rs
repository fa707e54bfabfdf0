//! Command bodies, each driven by a resolved parameter map.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kv::{split_list, KvFile};
use crate::network::{build_baseline, build_presnet, load_checkpoint, save_checkpoint, BaselineKind};
use crate::pipeline::dataset::{ingest_with, LabelPolarity, TabularDataset};
use crate::pipeline::input::{to_domain, Geometry, LabelMode};
use crate::pipeline::schema::load_schema_dir;
use crate::pipeline::{outliers_csv, prepare, PrepareConfig};
use crate::synthgen::{default_profiles, make_benchmark, SynthSpec};
use crate::training::{self, evaluate, ConfusionMatrix, History, MetricsReport, OptimizerKind, TrainConfig};
use crate::transfer::experiment::{run_seed_with_models, ExperimentConfig, ExperimentReport};
use crate::transfer::{DomainRole, FreezePolicy, DEFAULT_WINDOW};
use crate::Network;

pub const COMMANDS: [&str; 6] = ["synth", "prepare", "train", "transfer", "evaluate", "report"];

/// Parameter names and defaults; an empty default means "required" or
/// "derived", as documented per command.
pub(super) fn defaults(command: &str) -> Result<KvFile> {
    let pairs: &[(&str, String)] = &match command {
        "synth" => vec![("seed", String::new()), ("scenario", String::new()), ("benchmark", String::new())],
        "prepare" => vec![
            ("seed", "0".into()),
            ("raw", String::new()),
            ("schema", String::new()),
            ("threshold", crate::pipeline::correlate::DEFAULT_REDUNDANCY_THRESHOLD.to_string()),
            ("esd_alpha", crate::pipeline::DEFAULT_ESD_ALPHA.to_string()),
            ("esd_max", crate::pipeline::DEFAULT_ESD_MAX_OUTLIERS.to_string()),
            ("polarity", "normal=1".into()),
        ],
        "train" => vec![
            ("seed", "0".into()),
            ("data", String::new()),
            ("model", "presnet".into()),
            ("epochs", training::DEFAULT_EPOCHS.to_string()),
            ("batch", training::DEFAULT_BATCH_SIZE.to_string()),
            ("optimizer", "adam".into()),
            ("lr", String::new()),
            ("patience", String::new()),
            ("window", DEFAULT_WINDOW.to_string()),
            ("labels", "binary".into()),
        ],
        "transfer" => {
            let d = ExperimentConfig::default();
            vec![
                ("seed", "0".into()),
                ("runs", d.seeds.len().to_string()),
                ("epochs", d.target_epochs.to_string()),
                ("source_epochs", d.source_epochs.to_string()),
                ("batch", d.batch_size.to_string()),
                ("optimizer", "adam".into()),
                ("freeze", "all".into()),
                ("window", d.window.to_string()),
                ("stride", d.source_stride.to_string()),
                ("target_stride", d.target_stride.to_string()),
                ("max_source_windows", d.max_source_windows.to_string()),
            ]
        }
        "evaluate" => vec![
            ("seed", "0".into()),
            ("checkpoint", String::new()),
            ("data", String::new()),
            ("split", "test".into()),
            ("labels", "binary".into()),
        ],
        "report" => vec![("runs", String::new())],
        other => return Err(Error::config(format!("unknown command `{other}`"))),
    };
    let mut kv = KvFile::new();
    for (k, v) in pairs {
        kv.set(k, v);
    }
    Ok(kv)
}

fn get<T: FromStr>(p: &KvFile, key: &str) -> Result<T> {
    let raw = p.require(key)?;
    raw.parse().map_err(|_| Error::config(format!("`{key}` = `{raw}` is not valid")))
}

fn required<'a>(p: &'a KvFile, key: &str) -> Result<&'a str> {
    match p.get(key) {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(Error::config(format!("missing --{key}"))),
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Runs `command` with resolved parameters, writing into `out`.
pub fn run_params(command: &str, p: &KvFile, out: &Path) -> Result<()> {
    match command {
        "synth" => synth(p, out),
        "prepare" => prepare_cmd(p, out),
        "train" => train(p, out),
        "transfer" => transfer(p, out),
        "evaluate" => evaluate_cmd(p, out),
        "report" => report(p, out),
        other => Err(Error::config(format!("unknown command `{other}`"))),
    }
}

fn synth(p: &KvFile, out: &Path) -> Result<()> {
    let seed: Option<u64> = match p.require("seed")? {
        "" => None,
        _ => Some(get(p, "seed")?),
    };
    let profiles = default_profiles();
    for profile in &profiles {
        write(out, &format!("profiles/{}.profile", profile.sensor), &profile.to_text())?;
    }
    match (p.require("scenario")?, p.require("benchmark")?) {
        ("", "") => Err(Error::config("synth needs --scenario or --benchmark")),
        (file, "") => {
            let mut spec = SynthSpec::load(Path::new(file))?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            spec.generate(&profiles)?.write(out)?;
            write(out, "scenario.kv", &spec.to_text())
        }
        ("", name) => make_benchmark(name, seed.unwrap_or(0))?.write(out),
        _ => Err(Error::config("--scenario and --benchmark are exclusive")),
    }
}

fn raw_inputs(raw: &Path) -> Result<Vec<PathBuf>> {
    if !raw.is_dir() {
        if !raw.exists() {
            return Err(Error::io(raw, std::io::Error::from(std::io::ErrorKind::NotFound)));
        }
        return Ok(vec![raw.to_path_buf()]);
    }
    let combined = raw.join("combined.csv");
    if combined.is_file() {
        return Ok(vec![combined]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(raw)
        .map_err(|e| Error::io(raw, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Schema(format!("{}: no CSV files", raw.display())));
    }
    Ok(files)
}

fn prepare_cmd(p: &KvFile, out: &Path) -> Result<()> {
    let schemas = load_schema_dir(Path::new(required(p, "schema")?))?;
    let inputs = raw_inputs(Path::new(required(p, "raw")?))?;
    let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let raw = ingest_with(&refs, &schemas, LabelPolarity::parse(p.require("polarity")?)?)?;
    let cfg = PrepareConfig {
        seed: get(p, "seed")?,
        redundancy_threshold: get(p, "threshold")?,
        esd_alpha: get(p, "esd_alpha")?,
        esd_max_outliers: get(p, "esd_max")?,
    };
    let prepared = prepare(&raw, &cfg)?;
    prepared.train.write_csv(&out.join("train.csv"))?;
    prepared.val.write_csv(&out.join("val.csv"))?;
    prepared.test.write_csv(&out.join("test.csv"))?;
    let pre = &prepared.preprocessor;
    pre.scaler.save(&out.join("scaler.csv"))?;
    write(out, "correlation.csv", &pre.pruning.correlation.to_csv())?;
    write(out, "dropped.csv", &pre.pruning.dropped_csv())?;
    write(out, "outliers.csv", &outliers_csv(&pre.outliers))?;
    let mut split = String::from("row,part\n");
    for (name, rows) in [("train", &prepared.split.train), ("val", &prepared.split.val), ("test", &prepared.split.test)]
    {
        for r in rows {
            let _ = writeln!(split, "{r},{name}");
        }
    }
    write(out, "split.csv", &split)
}

/// Display name of a model key, as used in the comparison tables.
pub fn algorithm_name(model: &str) -> &str {
    match model {
        "presnet" => "P-ResNet",
        "mlp" => "MLP",
        "fcn" => "FCN",
        other => other,
    }
}

fn build_model(model: &str, channels: usize, window: usize, classes: usize, seed: u64) -> Result<Network> {
    match model {
        "presnet" => build_presnet(channels, window, classes, seed),
        other => build_baseline(
            BaselineKind::parse(other)
                .map_err(|_| Error::config(format!("unknown model `{other}` (presnet|mlp|fcn)")))?,
            channels,
            window,
            classes,
            seed,
        ),
    }
}

fn load_split(data: &Path, name: &str) -> Result<TabularDataset> {
    TabularDataset::read_csv(&data.join(format!("{name}.csv")))
}

fn optimizer(p: &KvFile) -> Result<OptimizerKind> {
    let kind = OptimizerKind::parse(p.require("optimizer")?)?;
    Ok(match p.get("lr") {
        Some(lr) if !lr.is_empty() => kind.with_learning_rate(get(p, "lr")?),
        _ => kind,
    })
}

fn write_metrics(out: &Path, report: &MetricsReport, algorithm: &str) -> Result<()> {
    let mut kv = report.to_kv();
    kv.set("algorithm", algorithm);
    write(out, "metrics.kv", &kv.to_text())?;
    write(out, "timing.kv", &report.timing_kv().to_text())?;
    write(out, "confusion.csv", &report.confusion.to_csv())
}

fn train(p: &KvFile, out: &Path) -> Result<()> {
    let data = PathBuf::from(required(p, "data")?);
    let (train_t, val_t, test_t) = (load_split(&data, "train")?, load_split(&data, "val")?, load_split(&data, "test")?);
    let window: usize = get(p, "window")?;
    let labels = LabelMode::parse(p.require("labels")?)?;
    let geometry = Geometry::Tabular { channels: train_t.n_cols(), window };
    let domain = |t: &TabularDataset| to_domain(t, &geometry, labels, DomainRole::Target);
    let (tr, va, te) = (domain(&train_t)?, domain(&val_t)?, domain(&test_t)?);

    let seed: u64 = get(p, "seed")?;
    let model = p.require("model")?;
    let epochs: usize = get(p, "epochs")?;
    let patience = match p.require("patience")? {
        "" => Some(training::DEFAULT_PATIENCE.min(epochs.max(1))),
        "none" => None,
        _ => Some(get(p, "patience")?),
    };
    let cfg = TrainConfig {
        epochs,
        batch_size: get(p, "batch")?,
        optimizer: optimizer(p)?,
        patience,
        seed,
        class_weights: None,
    };
    cfg.validate()?;
    let mut net = build_model(model, train_t.n_cols(), window, labels.classes(), seed)?;
    let history = training::train(&mut net, &tr, &va, &cfg)?;
    save_checkpoint(&net, &out.join("model.ckpt"))?;
    write(out, "history.csv", &history.to_csv())?;
    let mut report = evaluate(&net, &te)?;
    report.train_seconds = history.total_seconds();
    write_metrics(out, &report, algorithm_name(model))
}

fn evaluate_cmd(p: &KvFile, out: &Path) -> Result<()> {
    let net = load_checkpoint(Path::new(required(p, "checkpoint")?))?;
    let table = load_split(Path::new(required(p, "data")?), p.require("split")?)?;
    let (channels, window) = net.input_geometry();
    let labels = LabelMode::parse(p.require("labels")?)?;
    let d = to_domain(&table, &Geometry::Tabular { channels, window }, labels, DomainRole::Target)?;
    let report = evaluate(&net, &d)?;
    write_metrics(out, &report, algorithm_name(net.arch().kind.name()))
}

fn transfer(p: &KvFile, out: &Path) -> Result<()> {
    let base: u64 = get(p, "seed")?;
    let runs: u64 = get(p, "runs")?;
    if runs == 0 {
        return Err(Error::config("runs must be at least 1"));
    }
    let cfg = ExperimentConfig {
        seeds: (base..base + runs).collect(),
        window: get(p, "window")?,
        source_stride: get(p, "stride")?,
        target_stride: get(p, "target_stride")?,
        max_source_windows: get(p, "max_source_windows")?,
        source_epochs: get(p, "source_epochs")?,
        target_epochs: get(p, "epochs")?,
        batch_size: get(p, "batch")?,
        optimizer: OptimizerKind::parse(p.require("optimizer")?)?,
        policy: FreezePolicy::parse(p.require("freeze")?)?,
    };
    let mut report = ExperimentReport { runs: Vec::new() };
    for &seed in &cfg.seeds {
        let (run, source, transferred) = run_seed_with_models(seed, &cfg)?;
        let dir = out.join(format!("seed-{seed}"));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        save_checkpoint(&source, &dir.join("source.ckpt"))?;
        save_checkpoint(&transferred, &dir.join("transferred.ckpt"))?;
        report.runs.push(run);
    }
    write(out, "transfer.csv", &report.to_csv())?;
    let mut summary = KvFile::new();
    summary.set("policy", cfg.policy.name());
    summary.set("mean_transferred_val_acc", report.mean_transferred_val());
    summary.set("mean_scratch_val_acc", report.mean_scratch_val());
    summary.set("transfer_helps", report.transfer_helps());
    write(out, "summary.kv", &summary.to_text())
}

/// One run directory as read by `report`.
struct RunRow {
    algorithm: String,
    metrics: MetricsReport,
    history: Option<History>,
}

fn load_run(dir: &Path) -> Result<RunRow> {
    let kv = KvFile::load(&dir.join("metrics.kv"))?;
    let confusion = ConfusionMatrix::from_csv(&read(&dir.join("confusion.csv"))?)?;
    let timing_path = dir.join("timing.kv");
    let timing = if timing_path.is_file() { Some(KvFile::load(&timing_path)?) } else { None };
    let metrics = MetricsReport::from_parts(&kv, confusion, timing.as_ref())?;
    let history_path = dir.join("history.csv");
    let history = if history_path.is_file() { Some(History::from_csv(&read(&history_path)?)?) } else { None };
    Ok(RunRow { algorithm: kv.get("algorithm").unwrap_or("model").to_owned(), metrics, history })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn report(p: &KvFile, out: &Path) -> Result<()> {
    let dirs = split_list(required(p, "runs")?);
    let mut rows: Vec<RunRow> = dirs.iter().map(|d| load_run(Path::new(d))).collect::<Result<_>>()?;
    // Disambiguate repeated algorithms by run directory name.
    let names: Vec<String> = rows.iter().map(|r| r.algorithm.clone()).collect();
    for i in 0..rows.len() {
        if names.iter().filter(|n| **n == names[i]).count() > 1 {
            let name = Path::new(&dirs[i]).file_name().map_or(dirs[i].clone(), |n| n.to_string_lossy().into_owned());
            rows[i].algorithm = format!("{} ({name})", rows[i].algorithm);
        }
    }
    let mut t3 = String::from("Algorithm,Accuracy,Precision,Recall,F1Score,ROC AUC\n");
    let mut t4 = String::from("Algorithm,Params,Training Time (s),Testing Time (s)\n");
    for r in &rows {
        let m = &r.metrics;
        let auc = m.roc_auc.map_or("undefined".to_owned(), |a| a.to_string());
        let _ = writeln!(t3, "{},{},{},{},{},{auc}", csv_field(&r.algorithm), m.accuracy, m.precision, m.recall, m.f1);
        let _ = writeln!(t4, "{},{},{},{}", csv_field(&r.algorithm), m.param_count, m.train_seconds, m.test_seconds);
        if let Some(h) = &r.history {
            let file: String =
                r.algorithm.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect();
            write(out, &format!("curves/{file}.csv"), &h.to_csv())?;
        }
    }
    write(out, "table3.csv", &t3)?;
    write(out, "table4.csv", &t4)
}

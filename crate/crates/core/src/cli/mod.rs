//! Command-line front end.
//!
//! Every command resolves its parameters (flag, then `--config` file, then
//! default) into a flat key-value map, runs from that map alone and writes
//! it to `manifest.kv` next to its outputs; `rerun` replays a manifest.

mod commands;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::kv::KvFile;

pub use commands::{run_params, COMMANDS};

pub const MANIFEST_FILE: &str = "manifest.kv";

#[derive(Debug, Parser)]
#[command(name = "dtlids", version, about = "Transfer-learning intrusion detection for IoT telemetry")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic telemetry from a scenario file or a named benchmark.
    Synth(SynthArgs),
    /// Clean, split, prune and scale a raw dataset.
    Prepare(PrepareArgs),
    /// Train P-ResNet or a baseline on a prepared dataset.
    Train(TrainArgs),
    /// Paired transferred-vs-scratch experiment on the transfer-pair benchmark.
    Transfer(TransferArgs),
    /// Evaluate a checkpoint on a prepared split.
    Evaluate(EvaluateArgs),
    /// Combine run directories into comparison tables and curve files.
    Report(ReportArgs),
    /// Re-execute a run from its manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Key-value file of parameters; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    /// Scenario file (length, seed, attacks).
    #[arg(long, conflicts_with = "benchmark")]
    pub scenario: Option<PathBuf>,
    /// separable-small, transfer-pair or imbalanced.
    #[arg(long)]
    pub benchmark: Option<String>,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[command(flatten)]
    pub common: Common,
    /// Raw CSV file, or a directory (its combined.csv, else every *.csv).
    #[arg(long)]
    pub raw: Option<PathBuf>,
    /// Directory of *.schema files.
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Prepared dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// presnet, mlp or fcn.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// adam or adadelta.
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[command(flatten)]
    pub common: Common,
    /// Target-domain epoch budget of both arms.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub optimizer: Option<String>,
    /// all (fine-tune everything) or head (fine-tune the head only).
    #[arg(long)]
    pub freeze: Option<String>,
    #[arg(long)]
    pub window: Option<usize>,
    /// Stride of the source windows.
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Prepared dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Run directories written by `train` or `evaluate`.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    /// Manifest of the run to repeat.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory; defaults to the original one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn path_text(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

type FlagValues = Vec<(&'static str, Option<String>)>;

/// Flag values of a command, keyed like its configuration.
fn flags(command: &Command) -> (&'static str, Option<&Path>, Option<&Path>, FlagValues) {
    let s = |v: &Option<String>| v.clone();
    let p = |v: &Option<PathBuf>| v.as_deref().map(path_text);
    let n = |v: Option<usize>| v.map(|x| x.to_string());
    let seed = |c: &Common| c.seed.map(|x| x.to_string());
    match command {
        Command::Synth(a) => (
            "synth",
            a.common.config.as_deref(),
            Some(&a.common.out),
            vec![("seed", seed(&a.common)), ("scenario", p(&a.scenario)), ("benchmark", s(&a.benchmark))],
        ),
        Command::Prepare(a) => (
            "prepare",
            a.common.config.as_deref(),
            Some(&a.common.out),
            vec![("seed", seed(&a.common)), ("raw", p(&a.raw)), ("schema", p(&a.schema))],
        ),
        Command::Train(a) => (
            "train",
            a.common.config.as_deref(),
            Some(&a.common.out),
            vec![
                ("seed", seed(&a.common)),
                ("data", p(&a.data)),
                ("model", s(&a.model)),
                ("epochs", n(a.epochs)),
                ("batch", n(a.batch)),
                ("optimizer", s(&a.optimizer)),
                ("window", n(a.window)),
            ],
        ),
        Command::Transfer(a) => (
            "transfer",
            a.common.config.as_deref(),
            Some(&a.common.out),
            vec![
                ("seed", seed(&a.common)),
                ("epochs", n(a.epochs)),
                ("batch", n(a.batch)),
                ("optimizer", s(&a.optimizer)),
                ("freeze", s(&a.freeze)),
                ("window", n(a.window)),
                ("stride", n(a.stride)),
            ],
        ),
        Command::Evaluate(a) => (
            "evaluate",
            a.common.config.as_deref(),
            Some(&a.common.out),
            vec![("seed", seed(&a.common)), ("checkpoint", p(&a.checkpoint)), ("data", p(&a.data))],
        ),
        Command::Report(a) => (
            "report",
            a.config.as_deref(),
            Some(&a.out),
            vec![("runs", Some(a.runs.iter().map(|r| path_text(r)).collect::<Vec<_>>().join(", ")))],
        ),
        Command::Rerun(_) => ("rerun", None, None, Vec::new()),
    }
}

/// Merges flags over the config file over defaults; unknown config keys are
/// rejected.
pub fn resolve(command: &str, config: Option<&Path>, flags: &[(&str, Option<String>)]) -> Result<KvFile> {
    let defaults = commands::defaults(command)?;
    let file = match config {
        Some(path) => KvFile::load(path)?,
        None => KvFile::new(),
    };
    for (key, _) in file.entries() {
        if defaults.get(key).is_none() {
            return Err(Error::config(format!("`{key}` is not a parameter of `{command}`")));
        }
    }
    let mut out = KvFile::new();
    for (key, default) in defaults.entries() {
        let flag = flags.iter().find(|(k, _)| k == key).and_then(|(_, v)| v.clone());
        let value = flag.or_else(|| file.get(key).map(str::to_owned)).unwrap_or_else(|| default.clone());
        out.set(key, value);
    }
    Ok(out)
}

/// Reads a manifest back into `(command, out, params)`.
pub fn read_manifest(path: &Path) -> Result<(String, PathBuf, KvFile)> {
    let kv = KvFile::load(path)?;
    let command = kv.require("command")?.to_owned();
    let out = PathBuf::from(kv.require("out")?);
    let mut params = KvFile::new();
    for (k, v) in kv.entries() {
        if let Some(key) = k.strip_prefix("param.") {
            params.set(key, v);
        }
    }
    Ok((command, out, params))
}

pub fn manifest_text(command: &str, config: Option<&Path>, out: &Path, params: &KvFile) -> String {
    let mut kv = KvFile::new();
    kv.set("command", command);
    kv.set("version", env!("CARGO_PKG_VERSION"));
    kv.set("config", config.map_or("none".to_owned(), path_text));
    kv.set("out", path_text(out));
    for (k, v) in params.entries() {
        kv.set(&format!("param.{k}"), v);
    }
    kv.to_text()
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    if let Command::Rerun(a) = &cli.command {
        let (command, out, params) = read_manifest(&a.manifest)?;
        let config = KvFile::load(&a.manifest)?.get("config").filter(|c| *c != "none").map(PathBuf::from);
        let out = a.out.clone().unwrap_or(out);
        return execute(&command, config.as_deref(), &out, &params);
    }
    let (command, config, out, flag_values) = flags(&cli.command);
    let params = resolve(command, config, &flag_values)?;
    execute(command, config, out.expect("every command but rerun has --out"), &params)
}

fn execute(command: &str, config: Option<&Path>, out: &Path, params: &KvFile) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    run_params(command, params, out)?;
    let path = out.join(MANIFEST_FILE);
    fs::write(&path, manifest_text(command, config, out, params)).map_err(|e| Error::io(&path, e))
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

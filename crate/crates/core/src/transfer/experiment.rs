//! Paired transferred-vs-scratch experiments.
//!
//! For each seed: generate the transfer-pair benchmark, fit preprocessing on
//! the source series, pre-train the single-channel network on windows of
//! every source channel, then train two multi-channel networks on the small
//! target with the same initialization seed and epoch budget: one with the
//! pre-trained hidden layers copied into every branch, one from scratch.

use std::fmt::Write as _;

use super::{
    build_source_domain, build_target_domain, fine_tune, mmd, train_source, transfer_weights, Domain, FeatureMap,
    FreezePolicy, LabeledSeries, SegmentationConfig, TransferPlan,
};
use crate::error::Result;
use crate::network::{build_multi_channel_dnn, build_single_channel_dnn, HIDDEN_LAYERS};
use crate::pipeline::dataset::{encode_labels, TabularDataset};
use crate::pipeline::split::{split, stratified_subsample};
use crate::pipeline::{fit_preprocessor, PrepareConfig, Preprocessor};
use crate::synthgen::make_benchmark;
use crate::training::{self, loss_and_accuracy, OptimizerKind, TrainConfig};
use crate::Network;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub window: usize,
    pub source_stride: usize,
    pub target_stride: usize,
    /// Source windows kept after stratified subsampling.
    pub max_source_windows: usize,
    pub source_epochs: usize,
    /// Epoch budget of both target arms.
    pub target_epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub policy: FreezePolicy,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seeds: (0..5).collect(),
            window: super::DEFAULT_WINDOW,
            source_stride: 5,
            target_stride: 1,
            max_source_windows: 3000,
            source_epochs: 5,
            target_epochs: 20,
            // About 58 target training windows: four updates per epoch.
            batch_size: 16,
            optimizer: OptimizerKind::adam(),
            policy: FreezePolicy::FineTuneAll,
        }
    }
}

/// Outcome of one seed.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedRun {
    pub seed: u64,
    pub source_val_acc: f64,
    pub transferred_val_acc: f64,
    pub scratch_val_acc: f64,
    pub transferred_test_acc: f64,
    pub scratch_test_acc: f64,
    /// Mean over target channels of the MMD between source windows and the
    /// channel's windows, on raw segments.
    pub mmd_raw: f64,
    /// The same on the pre-trained network's pooled features.
    pub mmd_embedded: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub runs: Vec<PairedRun>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

impl ExperimentReport {
    pub fn mean_transferred_val(&self) -> f64 {
        mean(self.runs.iter().map(|r| r.transferred_val_acc))
    }

    pub fn mean_scratch_val(&self) -> f64 {
        mean(self.runs.iter().map(|r| r.scratch_val_acc))
    }

    /// Whether transfer matched or beat training from scratch on average.
    pub fn transfer_helps(&self) -> bool {
        self.mean_transferred_val() >= self.mean_scratch_val()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "seed,source_val_acc,transferred_val_acc,scratch_val_acc,transferred_test_acc,scratch_test_acc,mmd_raw,mmd_embedded\n",
        );
        for r in &self.runs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.seed,
                r.source_val_acc,
                r.transferred_val_acc,
                r.scratch_val_acc,
                r.transferred_test_acc,
                r.scratch_test_acc,
                r.mmd_raw,
                r.mmd_embedded
            );
        }
        let _ = writeln!(
            out,
            "mean,{},{},{},{},{},{},{}",
            mean(self.runs.iter().map(|r| r.source_val_acc)),
            self.mean_transferred_val(),
            self.mean_scratch_val(),
            mean(self.runs.iter().map(|r| r.transferred_test_acc)),
            mean(self.runs.iter().map(|r| r.scratch_test_acc)),
            mean(self.runs.iter().map(|r| r.mmd_raw)),
            mean(self.runs.iter().map(|r| r.mmd_embedded)),
        );
        out
    }
}

fn series(ds: &TabularDataset) -> Vec<Vec<f64>> {
    (0..ds.n_cols()).map(|c| ds.column(c)).collect()
}

/// Source windows from every channel, and the multi-channel target.
fn domains(source: &TabularDataset, target: &TabularDataset, cfg: &ExperimentConfig) -> Result<(Domain, Domain)> {
    let src_seg = SegmentationConfig::new(cfg.window, cfg.source_stride)?;
    let tgt_seg = SegmentationConfig::new(cfg.window, cfg.target_stride)?;
    let singles: Vec<LabeledSeries> =
        series(source).into_iter().map(|c| LabeledSeries::single(c, source.labels.clone())).collect();
    let s = build_source_domain(&singles, &src_seg)?;
    let t =
        build_target_domain(&[LabeledSeries { channels: series(target), labels: target.labels.clone() }], &tgt_seg)?;
    Ok((s, t))
}

fn train_config(cfg: &ExperimentConfig, epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: cfg.batch_size,
        optimizer: cfg.optimizer,
        patience: None,
        seed,
        class_weights: None,
    }
}

fn accuracy(net: &Network, d: &Domain) -> Result<f64> {
    Ok(loss_and_accuracy(net, d)?.1)
}

/// Runs one seed of the paired comparison.
pub fn run_seed(seed: u64, cfg: &ExperimentConfig) -> Result<PairedRun> {
    run_seed_with_models(seed, cfg).map(|r| r.0)
}

/// [`run_seed`], also returning the pre-trained single-channel network and
/// the transferred, fine-tuned multi-channel network.
pub fn run_seed_with_models(seed: u64, cfg: &ExperimentConfig) -> Result<(PairedRun, Network, Network)> {
    let bundle = make_benchmark("transfer-pair", seed)?;
    let part = |n: &str| encode_labels(&bundle.part(n).expect("transfer-pair has both parts").combined);
    let (source, target) = (part("source")?, part("target")?);
    let all: Vec<usize> = (0..source.n_rows()).collect();
    let pre: Preprocessor = fit_preprocessor(&source, &all, &PrepareConfig { seed, ..Default::default() })?;
    let (src, tgt) = domains(&pre.apply(&source)?, &pre.apply(&target)?, cfg)?;

    let keep = stratified_subsample(src.y(), cfg.max_source_windows, seed);
    let src = src.subset(&keep);
    let s_split = split(src.y(), seed)?;
    let (s_train, s_val) = (src.subset(&s_split.train), src.subset(&s_split.val));
    let mut single = build_single_channel_dnn(cfg.window, 2, seed)?;
    train_source(&mut single, &s_train, &s_val, &train_config(cfg, cfg.source_epochs, seed))?;

    let t_split = split(tgt.y(), seed)?;
    let (t_train, t_val, t_test) = (tgt.subset(&t_split.train), tgt.subset(&t_split.val), tgt.subset(&t_split.test));
    let branches = tgt.channels();
    let plan = TransferPlan::identity(HIDDEN_LAYERS, branches, cfg.policy);
    let tcfg = train_config(cfg, cfg.target_epochs, seed);

    let mut transferred = transfer_weights(&single, build_multi_channel_dnn(branches, cfg.window, 2, seed)?, &plan)?;
    fine_tune(&mut transferred, &t_train, &t_val, &plan, &tcfg)?;
    let mut scratch = build_multi_channel_dnn(branches, cfg.window, 2, seed)?;
    training::train(&mut scratch, &t_train, &t_val, &tcfg)?;

    let (mut raw, mut emb) = (Vec::new(), Vec::new());
    for c in 0..branches {
        let ch = tgt.channel(c)?;
        raw.push(mmd(&s_val, &ch, FeatureMap::Identity)?);
        emb.push(mmd(&s_val, &ch, FeatureMap::Network(&single))?);
    }
    let run = PairedRun {
        seed,
        source_val_acc: accuracy(&single, &s_val)?,
        transferred_val_acc: accuracy(&transferred, &t_val)?,
        scratch_val_acc: accuracy(&scratch, &t_val)?,
        transferred_test_acc: accuracy(&transferred, &t_test)?,
        scratch_test_acc: accuracy(&scratch, &t_test)?,
        mmd_raw: mean(raw.into_iter()),
        mmd_embedded: mean(emb.into_iter()),
    };
    Ok((run, single, transferred))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    Ok(ExperimentReport { runs: cfg.seeds.iter().map(|&s| run_seed(s, cfg)).collect::<Result<_>>()? })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_csv_has_a_mean_row() {
        let run = |seed, t, s| PairedRun {
            seed,
            source_val_acc: 0.9,
            transferred_val_acc: t,
            scratch_val_acc: s,
            transferred_test_acc: t,
            scratch_test_acc: s,
            mmd_raw: 0.1,
            mmd_embedded: 0.2,
        };
        let r = ExperimentReport { runs: vec![run(0, 0.8, 0.6), run(1, 0.6, 0.7)] };
        assert!((r.mean_transferred_val() - 0.7).abs() < 1e-15);
        assert!(r.transfer_helps());
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().last().unwrap().starts_with("mean,"));
    }
}

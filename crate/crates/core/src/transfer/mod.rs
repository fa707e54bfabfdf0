//! Source/target domains, sliding-window segmentation, single-to-multi-channel
//! weight transfer, fine-tuning and the MMD domain-distance diagnostic.

pub mod experiment;

use crate::error::{Error, Result};
use crate::network::Network;
use crate::tensor::Tensor;
use crate::training::{self, History, TrainConfig};
use crate::{LABEL_ATTACK, LABEL_NORMAL};

pub const DEFAULT_WINDOW: usize = 10;
pub const DEFAULT_STRIDE: usize = 1;
/// Segments must be at least as long as the widest kernel.
pub const MIN_WINDOW: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainRole {
    Source,
    Target,
}

/// Labelled segments `X: [S, C, L]`, `Y: [S]`, with the index of the
/// dataset each segment came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    role: DomainRole,
    x: Tensor,
    y: Vec<usize>,
    classes: usize,
    provenance: Vec<usize>,
}

impl Domain {
    pub fn new(role: DomainRole, x: Tensor, y: Vec<usize>, classes: usize, provenance: Vec<usize>) -> Result<Self> {
        if x.rank() != 3 {
            return Err(Error::shape(format!("domain segments must be [S, C, L], got {:?}", x.shape())));
        }
        let s = x.shape()[0];
        if y.len() != s || provenance.len() != s {
            return Err(Error::shape(format!(
                "{s} segments with {} labels and {} provenance tags",
                y.len(),
                provenance.len()
            )));
        }
        if let Some(bad) = y.iter().find(|&&v| v >= classes) {
            return Err(Error::shape(format!("label {bad} out of range for {classes} classes")));
        }
        Ok(Domain { role, x, y, classes, provenance })
    }

    pub fn role(&self) -> DomainRole {
        self.role
    }

    pub fn x(&self) -> &Tensor {
        &self.x
    }

    #[cfg(test)]
    pub(crate) fn x_mut(&mut self) -> &mut Tensor {
        &mut self.x
    }

    pub fn y(&self) -> &[usize] {
        &self.y
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn provenance(&self) -> &[usize] {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.x.shape()[1]
    }

    pub fn window(&self) -> usize {
        self.x.shape()[2]
    }

    pub fn subset(&self, indices: &[usize]) -> Domain {
        Domain {
            role: self.role,
            x: self.x.select_rows(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            classes: self.classes,
            provenance: indices.iter().map(|&i| self.provenance[i]).collect(),
        }
    }

    /// Single-channel view of channel `c`.
    pub fn channel(&self, c: usize) -> Result<Domain> {
        let (s, channels, l) = (self.len(), self.channels(), self.window());
        if c >= channels {
            return Err(Error::shape(format!("channel {c} of {channels}")));
        }
        let mut data = Vec::with_capacity(s * l);
        for i in 0..s {
            data.extend_from_slice(&self.x.data()[(i * channels + c) * l..(i * channels + c + 1) * l]);
        }
        Domain::new(self.role, Tensor::new(vec![s, 1, l], data)?, self.y.clone(), self.classes, self.provenance.clone())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        self.y.iter().for_each(|&y| counts[y] += 1);
        counts
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SegmentationConfig {
    pub window: usize,
    pub stride: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig { window: DEFAULT_WINDOW, stride: DEFAULT_STRIDE }
    }
}

impl SegmentationConfig {
    pub fn new(window: usize, stride: usize) -> Result<Self> {
        let cfg = SegmentationConfig { window, stride };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < MIN_WINDOW {
            return Err(Error::config(format!("window {} is shorter than {MIN_WINDOW}", self.window)));
        }
        if self.stride == 0 {
            return Err(Error::config("stride must be at least 1"));
        }
        Ok(())
    }

    /// Start offsets of the windows over a series of `total` samples.
    pub fn offsets(&self, total: usize) -> Vec<usize> {
        if total < self.window {
            return Vec::new();
        }
        (0..=(total - self.window) / self.stride).map(|i| i * self.stride).collect()
    }
}

/// Cuts `series` into windows at offsets `0, stride, 2*stride, ...`; a
/// trailing remainder shorter than the window is dropped.
///
/// Only the stride must be positive here, so short windows can be used
/// outside the networks' minimum.
pub fn segment(series: &[f64], cfg: &SegmentationConfig) -> Result<Vec<Vec<f64>>> {
    if cfg.stride == 0 || cfg.window == 0 {
        return Err(Error::config("window and stride must be positive"));
    }
    if series.len() < cfg.window {
        return Err(Error::EmptyDomain(format!(
            "series of length {} is shorter than the window {}",
            series.len(),
            cfg.window
        )));
    }
    Ok(cfg.offsets(series.len()).into_iter().map(|o| series[o..o + cfg.window].to_vec()).collect())
}

/// Majority label of a window of binary labels; ties go to attack.
pub fn window_label(labels: &[usize]) -> usize {
    let normal = labels.iter().filter(|&&l| l == LABEL_NORMAL).count();
    if 2 * normal > labels.len() {
        LABEL_NORMAL
    } else {
        LABEL_ATTACK
    }
}

/// Equally long channels sharing one per-sample binary label sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSeries {
    pub channels: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl LabeledSeries {
    pub fn single(values: Vec<f64>, labels: Vec<usize>) -> Self {
        LabeledSeries { channels: vec![values], labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::shape("series has no channels"));
        }
        if self.channels.iter().any(|c| c.len() != self.labels.len()) {
            return Err(Error::shape("channel lengths differ from the label count"));
        }
        if self.labels.iter().any(|&l| l != LABEL_NORMAL && l != LABEL_ATTACK) {
            return Err(Error::shape("per-sample labels must be binary"));
        }
        Ok(())
    }
}

/// Windows every dataset, labels each window by majority vote and tags it
/// with its dataset index. Datasets shorter than the window contribute
/// nothing.
pub fn build_domain(role: DomainRole, datasets: &[LabeledSeries], cfg: &SegmentationConfig) -> Result<Domain> {
    cfg.validate()?;
    let channels = datasets.first().map(|d| d.channels.len()).unwrap_or(0);
    let (mut x, mut y, mut provenance) = (Vec::new(), Vec::new(), Vec::new());
    for (n, d) in datasets.iter().enumerate() {
        d.validate()?;
        if d.channels.len() != channels {
            return Err(Error::shape(format!("dataset {n} has {} channels, expected {channels}", d.channels.len())));
        }
        for o in cfg.offsets(d.len()) {
            for c in &d.channels {
                x.extend_from_slice(&c[o..o + cfg.window]);
            }
            y.push(window_label(&d.labels[o..o + cfg.window]));
            provenance.push(n);
        }
    }
    if y.is_empty() {
        return Err(Error::EmptyDomain("no complete window in any dataset".into()));
    }
    Domain::new(role, Tensor::new(vec![y.len(), channels, cfg.window], x)?, y, 2, provenance)
}

/// Source domain from single-channel series (`C_s = 2`).
pub fn build_source_domain(datasets: &[LabeledSeries], cfg: &SegmentationConfig) -> Result<Domain> {
    if datasets.iter().any(|d| d.channels.len() != 1) {
        return Err(Error::shape("source datasets must be single-channel"));
    }
    build_domain(DomainRole::Source, datasets, cfg)
}

/// Target domain whose channels feed the branches of a multi-channel network.
pub fn build_target_domain(datasets: &[LabeledSeries], cfg: &SegmentationConfig) -> Result<Domain> {
    build_domain(DomainRole::Target, datasets, cfg)
}

/// Which parameters move during fine-tuning.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FreezePolicy {
    /// Transferred branch layers stay fixed; input batch-norm and head train.
    Frozen,
    #[default]
    FineTuneAll,
    /// Only the layers after feature extraction train.
    HeadOnly,
}

impl FreezePolicy {
    /// Accepts the policy names and the CLI spellings `all` and `head`.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "frozen" => Ok(FreezePolicy::Frozen),
            "all" | "fine-tune-all" => Ok(FreezePolicy::FineTuneAll),
            "head" | "fine-tune-head-only" => Ok(FreezePolicy::HeadOnly),
            other => Err(Error::config(format!("unknown freeze policy `{other}` (all|head|frozen)"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FreezePolicy::Frozen => "frozen",
            FreezePolicy::FineTuneAll => "fine-tune-all",
            FreezePolicy::HeadOnly => "fine-tune-head-only",
        }
    }
}

/// `mapping[k][j]` is the hidden layer of the single-channel network copied
/// into layer `j` of branch `k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransferPlan {
    pub mapping: Vec<Vec<usize>>,
    pub policy: FreezePolicy,
}

impl TransferPlan {
    pub fn identity(hidden_layers: usize, branches: usize, policy: FreezePolicy) -> Self {
        TransferPlan { mapping: vec![(0..hidden_layers).collect(); branches], policy }
    }

    pub fn branches(&self) -> usize {
        self.mapping.len()
    }

    pub fn validate(&self, hidden_layers: usize) -> Result<()> {
        for (k, layers) in self.mapping.iter().enumerate() {
            let mut seen = layers.clone();
            seen.sort_unstable();
            if seen != (0..hidden_layers).collect::<Vec<_>>() {
                return Err(Error::Transfer(format!(
                    "branch {k} mapping {layers:?} does not cover hidden layers 0..{hidden_layers} exactly once"
                )));
            }
        }
        Ok(())
    }
}

/// Copies the single-channel network's hidden layers into every branch of
/// `multi`. Input batch-norm and head keep their initial values.
pub fn transfer_weights(single: &Network, mut multi: Network, plan: &TransferPlan) -> Result<Network> {
    let source = single.hidden_blocks();
    plan.validate(source.len())?;
    let mut branches = multi.branch_blocks_mut();
    if branches.len() != plan.branches() {
        return Err(Error::Transfer(format!(
            "plan covers {} branches, network has {}",
            plan.branches(),
            branches.len()
        )));
    }
    for (k, (blocks, mapping)) in branches.iter_mut().zip(&plan.mapping).enumerate() {
        if blocks.len() != mapping.len() {
            return Err(Error::Transfer(format!(
                "branch {k} has {} hidden layers, source has {}",
                blocks.len(),
                mapping.len()
            )));
        }
        for (j, &from) in mapping.iter().enumerate() {
            blocks[j]
                .copy_from(source[from])
                .map_err(|_| Error::Transfer(format!("branch {k} layer {j} does not match source layer {from}")))?;
        }
    }
    drop(branches);
    Ok(multi)
}

/// Pre-trains the single-channel network on the source domain.
pub fn train_source(net: &mut Network, train: &Domain, val: &Domain, cfg: &TrainConfig) -> Result<History> {
    if train.channels() != 1 || net.input_geometry().0 != 1 {
        return Err(Error::shape("source training needs single-channel data and network"));
    }
    training::train(net, train, val, cfg)
}

/// Fine-tunes the multi-channel network under the plan's freeze policy.
pub fn fine_tune(
    multi: &mut Network,
    train: &Domain,
    val: &Domain,
    plan: &TransferPlan,
    cfg: &TrainConfig,
) -> Result<History> {
    if train.channels() != plan.branches() {
        return Err(Error::shape(format!(
            "target has {} channels, plan has {} branches",
            train.channels(),
            plan.branches()
        )));
    }
    multi.freeze_feature_extractor(false);
    match plan.policy {
        FreezePolicy::FineTuneAll => {}
        FreezePolicy::HeadOnly => multi.freeze_feature_extractor(true),
        FreezePolicy::Frozen => multi.freeze_branches(true),
    }
    training::train(multi, train, val, cfg)
}

/// Feature map for [`mmd`].
#[derive(Clone, Copy, Debug)]
pub enum FeatureMap<'a> {
    /// Flattened segments.
    Identity,
    /// The network's pooled features ([`Network::embed`]).
    Network(&'a Network),
}

/// Squared distance between the mean feature vectors of two domains.
pub fn mmd(source: &Domain, target: &Domain, map: FeatureMap<'_>) -> Result<f64> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyDomain("MMD needs two non-empty domains".into()));
    }
    let features = |d: &Domain| -> Result<Tensor> {
        match map {
            FeatureMap::Identity => {
                let s = d.len();
                d.x().clone().reshape(&[s, d.channels() * d.window()])
            }
            FeatureMap::Network(net) => net.embed(d.x()),
        }
    };
    mmd_features(&features(source)?, &features(target)?)
}

/// [`mmd`] on explicit feature matrices `[n, F]` and `[m, F]`.
pub fn mmd_features(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.rank() != 2 || b.rank() != 2 {
        return Err(Error::shape("feature matrices must be rank 2"));
    }
    let (n, f) = (a.shape()[0], a.shape()[1]);
    let m = b.shape()[0];
    if n == 0 || m == 0 {
        return Err(Error::EmptyDomain("MMD needs two non-empty domains".into()));
    }
    if b.shape()[1] != f {
        return Err(Error::shape(format!("feature widths differ: {f} vs {}", b.shape()[1])));
    }
    let mean = |t: &Tensor, rows: usize| {
        let mut acc = vec![0.0; f];
        for row in t.data().chunks(f) {
            acc.iter_mut().zip(row).for_each(|(s, v)| *s += v);
        }
        acc.iter_mut().for_each(|s| *s /= rows as f64);
        acc
    };
    let (ma, mb) = (mean(a, n), mean(b, m));
    Ok(ma.iter().zip(&mb).map(|(p, q)| (p - q) * (p - q)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_multi_channel_dnn, build_single_channel_dnn, HIDDEN_LAYERS};
    use proptest::prelude::*;

    #[test]
    fn segmentation_examples() {
        let series: Vec<f64> = (0..10).map(f64::from).collect();
        let cfg = SegmentationConfig { window: 4, stride: 2 };
        let segs = segment(&series, &cfg).unwrap();
        assert_eq!(segs.iter().map(|s| s[0] as usize).collect::<Vec<_>>(), vec![0, 2, 4, 6]);
        assert_eq!(segment(&series[..4], &cfg).unwrap(), vec![series[..4].to_vec()]);
        let one = SegmentationConfig { window: 4, stride: 1 };
        assert_eq!(segment(&series[..5], &one).unwrap().len(), 2);
        assert!(matches!(segment(&series[..3], &one), Err(Error::EmptyDomain(_))));
    }

    proptest! {
        #[test]
        fn segment_count_formula(total in 1usize..200, window in 1usize..50, stride in 1usize..20) {
            prop_assume!(total >= window);
            let series = vec![0.0; total];
            let cfg = SegmentationConfig { window, stride };
            prop_assert_eq!(segment(&series, &cfg).unwrap().len(), (total - window) / stride + 1);
        }
    }

    #[test]
    fn majority_labels() {
        let n = LABEL_NORMAL;
        let a = LABEL_ATTACK;
        assert_eq!(window_label(&[a, a, a, n]), a);
        assert_eq!(window_label(&[n, n, n, a]), n);
        assert_eq!(window_label(&[n, a, n, a]), a);
    }

    #[test]
    fn source_domain_union() {
        let cfg = SegmentationConfig { window: 8, stride: 2 };
        let d1 = LabeledSeries::single(vec![0.5; 12], vec![LABEL_NORMAL; 12]);
        let d2 = LabeledSeries::single(vec![0.1; 9], vec![LABEL_ATTACK; 9]);
        let one = build_source_domain(std::slice::from_ref(&d1), &cfg).unwrap();
        assert_eq!(one.len(), 3);
        assert!(one.y().iter().all(|&y| y == LABEL_NORMAL));
        let both = build_source_domain(&[d1, d2], &cfg).unwrap();
        assert_eq!(both.len(), 4);
        assert_eq!(both.provenance(), &[0, 0, 0, 1]);
        assert_eq!(both.y()[3], LABEL_ATTACK);
        let short = LabeledSeries::single(vec![0.0; 5], vec![LABEL_NORMAL; 5]);
        assert!(matches!(build_source_domain(&[short], &cfg), Err(Error::EmptyDomain(_))));
    }

    fn branch_tensors(multi: &Network) -> Vec<Vec<(String, Tensor)>> {
        let all = multi.named_tensors();
        (0..multi.input_geometry().0)
            .map(|k| {
                let tag = format!(".branch{k}.");
                all.iter().filter(|(n, _)| n.contains(&tag)).cloned().collect()
            })
            .collect()
    }

    fn hidden_tensors(single: &Network) -> Vec<Tensor> {
        single.named_tensors().into_iter().filter(|(n, _)| n.contains(".residual.")).map(|(_, t)| t).collect()
    }

    #[test]
    fn transfer_copies_every_hidden_layer() {
        for s_n in [1, 3, 7] {
            let single = build_single_channel_dnn(10, 2, 11).unwrap();
            let multi = build_multi_channel_dnn(s_n, 10, 2, 12).unwrap();
            let head_before: Vec<_> =
                multi.named_tensors().into_iter().filter(|(n, _)| !n.contains(".branch")).collect();
            let plan = TransferPlan::identity(HIDDEN_LAYERS, s_n, FreezePolicy::FineTuneAll);
            let multi = transfer_weights(&single, multi, &plan).unwrap();
            let want = hidden_tensors(&single);
            for branch in branch_tensors(&multi) {
                let got: Vec<Tensor> = branch.into_iter().map(|(_, t)| t).collect();
                assert_eq!(got, want);
            }
            let head_after: Vec<_> =
                multi.named_tensors().into_iter().filter(|(n, _)| !n.contains(".branch")).collect();
            assert_eq!(head_after, head_before);
        }
    }

    #[test]
    fn transfer_rejects_mismatches() {
        let single = build_single_channel_dnn(10, 2, 1).unwrap();
        let multi = build_multi_channel_dnn(2, 10, 2, 1).unwrap();
        let plan = TransferPlan::identity(HIDDEN_LAYERS, 3, FreezePolicy::FineTuneAll);
        assert!(matches!(transfer_weights(&single, multi.clone(), &plan), Err(Error::Transfer(_))));
        let swapped = TransferPlan { mapping: vec![vec![1, 0, 2, 3]; 2], policy: FreezePolicy::FineTuneAll };
        assert!(matches!(transfer_weights(&single, multi.clone(), &swapped), Err(Error::Transfer(_))));
        let partial = TransferPlan { mapping: vec![vec![0, 1, 2]; 2], policy: FreezePolicy::FineTuneAll };
        assert!(matches!(transfer_weights(&single, multi, &partial), Err(Error::Transfer(_))));
    }

    fn target(n: usize, channels: usize) -> Domain {
        let x: Vec<f64> = (0..n * channels * 10).map(|i| ((i * 37) % 11) as f64 / 11.0).collect();
        let y = (0..n).map(|i| i % 2).collect();
        Domain::new(DomainRole::Target, Tensor::new(vec![n, channels, 10], x).unwrap(), y, 2, vec![0; n]).unwrap()
    }

    #[test]
    fn head_only_keeps_branches() {
        let single = build_single_channel_dnn(10, 2, 3).unwrap();
        let plan = TransferPlan::identity(HIDDEN_LAYERS, 2, FreezePolicy::HeadOnly);
        let mut multi = transfer_weights(&single, build_multi_channel_dnn(2, 10, 2, 4).unwrap(), &plan).unwrap();
        let before = multi.named_tensors();
        let cfg = TrainConfig { epochs: 2, batch_size: 4, patience: None, ..TrainConfig::default() };
        fine_tune(&mut multi, &target(8, 2), &target(4, 2), &plan, &cfg).unwrap();
        let after = multi.named_tensors();
        let head_start = multi.head_start().to_string();
        for ((name, b), (_, a)) in before.iter().zip(&after) {
            let in_head = name.split('.').next().unwrap().parse::<usize>().unwrap() >= head_start.parse().unwrap();
            if in_head {
                if name.ends_with("weight") {
                    assert_ne!(a, b, "{name} should train");
                }
            } else {
                assert_eq!(a, b, "{name} should stay frozen");
            }
        }
    }

    #[test]
    fn frozen_policy_keeps_branch_layers_only() {
        let single = build_single_channel_dnn(10, 2, 3).unwrap();
        let plan = TransferPlan::identity(HIDDEN_LAYERS, 2, FreezePolicy::Frozen);
        let mut multi = transfer_weights(&single, build_multi_channel_dnn(2, 10, 2, 4).unwrap(), &plan).unwrap();
        let before = multi.named_tensors();
        let cfg = TrainConfig { epochs: 1, batch_size: 4, patience: None, ..TrainConfig::default() };
        fine_tune(&mut multi, &target(8, 2), &target(4, 2), &plan, &cfg).unwrap();
        for ((name, b), (_, a)) in before.iter().zip(&multi.named_tensors()) {
            if name.contains(".branch") {
                assert_eq!(a, b, "{name}");
            } else if name == "0.bn.gamma" {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn zero_epoch_fine_tune_keeps_transfer() {
        let single = build_single_channel_dnn(10, 2, 3).unwrap();
        let plan = TransferPlan::identity(HIDDEN_LAYERS, 1, FreezePolicy::FineTuneAll);
        let mut multi = transfer_weights(&single, build_multi_channel_dnn(1, 10, 2, 4).unwrap(), &plan).unwrap();
        let before = multi.named_tensors();
        let cfg = TrainConfig { epochs: 0, patience: None, ..TrainConfig::default() };
        let h = fine_tune(&mut multi, &target(4, 1), &target(2, 1), &plan, &cfg).unwrap();
        assert!(h.is_empty());
        assert_eq!(multi.named_tensors(), before);
        // Smoke: the transferred single-branch network runs.
        assert_eq!(multi.predict(target(3, 1).x()).unwrap().shape(), &[3, 2]);
    }

    #[test]
    fn mmd_hand_case() {
        let a = Tensor::new(vec![1, 2], vec![0.0, 0.0]).unwrap();
        let b = Tensor::new(vec![1, 2], vec![3.0, 4.0]).unwrap();
        assert_eq!(mmd_features(&a, &b).unwrap(), 25.0);
        let empty = Tensor::new(vec![0, 2], vec![]).unwrap();
        assert!(matches!(mmd_features(&a, &empty), Err(Error::EmptyDomain(_))));
        let d = target(5, 2);
        assert_eq!(mmd(&d, &d, FeatureMap::Identity).unwrap(), 0.0);
        let net = build_multi_channel_dnn(2, 10, 2, 1).unwrap();
        assert_eq!(mmd(&d, &d, FeatureMap::Network(&net)).unwrap(), 0.0);
    }
}

//! Mini-batch training with early stopping, and evaluation.

mod metrics;
mod optim;

pub use metrics::{roc_auc, roc_auc_multiclass, time_block, ConfusionMatrix};
pub use optim::{adadelta_step, adam_step, AdaDeltaState, AdamState, Optimizer, OptimizerKind};

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kv::KvFile;
use crate::network::{cross_entropy_grad, Network};
use crate::tensor::Tensor;
use crate::transfer::Domain;
use crate::LABEL_CONVENTION;

pub const DEFAULT_EPOCHS: usize = 200;
pub const DEFAULT_BATCH_SIZE: usize = 64;
pub const DEFAULT_PATIENCE: usize = 20;

/// Rows per inference chunk during validation and evaluation.
const EVAL_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Zero epochs is allowed and leaves the network untouched.
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    /// Epochs without a validation-loss improvement before stopping; `None`
    /// disables early stopping (and best-epoch restoring).
    pub patience: Option<usize>,
    pub seed: u64,
    pub class_weights: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            optimizer: OptimizerKind::adam(),
            patience: Some(DEFAULT_PATIENCE),
            seed: 0,
            class_weights: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if let Some(p) = self.patience {
            if p == 0 || p > self.epochs.max(1) {
                return Err(Error::config(format!("patience {p} must lie in 1..={}", self.epochs.max(1))));
            }
        }
        if let Some(w) = &self.class_weights {
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::config("class weights must be finite and non-negative"));
            }
        }
        self.optimizer.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch (1-based) whose parameters were kept, when early stopping is on.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

impl History {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn total_seconds(&self) -> f64 {
        self.epochs.iter().map(|e| e.seconds).sum()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    /// Deterministic learning-curve CSV; wall-clock time is left out.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_acc,val_acc,train_loss,val_loss\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{},{},{},{},{}", e.epoch, e.train_acc, e.val_acc, e.train_loss, e.val_loss);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut epochs = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            let bad = || Error::Format(format!("history line {}: `{line}`", i + 1));
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 5 {
                return Err(bad());
            }
            let f = |k: usize| cells[k].parse::<f64>().map_err(|_| bad());
            epochs.push(EpochRecord {
                epoch: cells[0].parse().map_err(|_| bad())?,
                train_acc: f(1)?,
                val_acc: f(2)?,
                train_loss: f(3)?,
                val_loss: f(4)?,
                seconds: 0.0,
            });
        }
        Ok(History { epochs, best_epoch: None, stopped_early: false })
    }
}

fn check_domain(net: &Network, d: &Domain, what: &str) -> Result<()> {
    if d.is_empty() {
        return Err(Error::EmptyDomain(format!("{what} set is empty")));
    }
    if (d.channels(), d.window()) != net.input_geometry() {
        return Err(Error::shape(format!(
            "{what} set has geometry {:?}, network expects {:?}",
            (d.channels(), d.window()),
            net.input_geometry()
        )));
    }
    if d.classes() > net.classes() {
        return Err(Error::shape(format!("{what} set has {} classes, network {}", d.classes(), net.classes())));
    }
    Ok(())
}

/// Unweighted mean cross-entropy and accuracy in inference mode.
pub fn loss_and_accuracy(net: &Network, d: &Domain) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0;
    for start in (0..d.len()).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(d.len())).collect();
        let probs = net.predict(&d.x().select_rows(&idx))?;
        let labels: Vec<usize> = idx.iter().map(|&i| d.y()[i]).collect();
        let (_, outcome) = cross_entropy_grad(&probs, &labels, None)?;
        loss += outcome.loss * idx.len() as f64;
        correct += outcome.correct;
    }
    Ok((loss / d.len() as f64, correct as f64 / d.len() as f64))
}

/// Trains `net` in place. Batches are reshuffled every epoch from a stream
/// seeded by `cfg.seed`. With early stopping, the parameters of the epoch
/// with the lowest validation loss are restored at the end.
pub fn train(net: &mut Network, train_set: &Domain, val_set: &Domain, cfg: &TrainConfig) -> Result<History> {
    cfg.validate()?;
    check_domain(net, train_set, "training")?;
    check_domain(net, val_set, "validation")?;
    if let Some(w) = &cfg.class_weights {
        if w.len() != net.classes() {
            return Err(Error::config(format!("{} class weights for {} classes", w.len(), net.classes())));
        }
    }

    let mut history = History::default();
    let mut optimizer = Optimizer::new(cfg.optimizer);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best: Option<(f64, usize, Network)> = None;
    let mut since_best = 0;

    for epoch in 1..=cfg.epochs {
        let (stats, seconds) = time_block(|| -> Result<(f64, f64, f64, f64)> {
            order.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            let mut correct = 0;
            for batch in order.chunks(cfg.batch_size) {
                let x = train_set.x().select_rows(batch);
                let labels: Vec<usize> = batch.iter().map(|&i| train_set.y()[i]).collect();
                let outcome = net.loss_and_backward(&x, &labels, cfg.class_weights.as_deref())?;
                if !outcome.loss.is_finite() {
                    return Err(Error::Diverged { epoch, loss: outcome.loss });
                }
                optimizer.step(net);
                loss_sum += outcome.loss * batch.len() as f64;
                correct += outcome.correct;
            }
            let n = train_set.len() as f64;
            let (val_loss, val_acc) = loss_and_accuracy(net, val_set)?;
            if !val_loss.is_finite() {
                return Err(Error::Diverged { epoch, loss: val_loss });
            }
            Ok((loss_sum / n, correct as f64 / n, val_loss, val_acc))
        });
        let (train_loss, train_acc, val_loss, val_acc) = stats?;
        history.epochs.push(EpochRecord { epoch, train_loss, train_acc, val_loss, val_acc, seconds });

        if let Some(patience) = cfg.patience {
            if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
                best = Some((val_loss, epoch, net.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    history.stopped_early = true;
                    break;
                }
            }
        }
    }

    if let Some((_, epoch, snapshot)) = best {
        *net = snapshot;
        history.best_epoch = Some(epoch);
    }
    Ok(history)
}

/// One row of the comparison tables.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub samples: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` when the test set holds a single class.
    pub roc_auc: Option<f64>,
    pub confusion: ConfusionMatrix,
    pub param_count: usize,
    pub train_seconds: f64,
    pub test_seconds: f64,
}

impl MetricsReport {
    pub fn from_confusion(confusion: ConfusionMatrix, roc_auc: Option<f64>, param_count: usize) -> Self {
        MetricsReport {
            samples: confusion.total() as usize,
            accuracy: confusion.accuracy(),
            precision: confusion.macro_precision(),
            recall: confusion.macro_recall(),
            f1: confusion.macro_f1(),
            roc_auc,
            confusion,
            param_count,
            train_seconds: 0.0,
            test_seconds: 0.0,
        }
    }

    /// Deterministic part of the report (timing goes to [`Self::timing_kv`]).
    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::new();
        kv.set("label_convention", LABEL_CONVENTION);
        kv.set("classes", self.confusion.classes());
        kv.set("samples", self.samples);
        kv.set("accuracy", self.accuracy);
        kv.set("precision", self.precision);
        kv.set("recall", self.recall);
        kv.set("f1", self.f1);
        kv.set("roc_auc", self.roc_auc.map_or("undefined".to_string(), |a| a.to_string()));
        kv.set("params", self.param_count);
        kv
    }

    pub fn timing_kv(&self) -> KvFile {
        let mut kv = KvFile::new();
        kv.set("train_seconds", self.train_seconds);
        kv.set("test_seconds", self.test_seconds);
        kv
    }

    /// Rebuilds a report from its key-value file, confusion matrix and
    /// (optional) timing file.
    pub fn from_parts(kv: &KvFile, confusion: ConfusionMatrix, timing: Option<&KvFile>) -> Result<Self> {
        let num = |k: &str| -> Result<f64> {
            kv.parse_value::<f64>(k)?.ok_or_else(|| Error::Format(format!("metrics missing `{k}`")))
        };
        let roc_auc = match kv.require("roc_auc")? {
            "undefined" => None,
            v => Some(v.parse().map_err(|_| Error::Format(format!("bad roc_auc `{v}`")))?),
        };
        let time = |k: &str| -> Result<f64> {
            Ok(match timing {
                Some(t) => t.parse_value::<f64>(k)?.unwrap_or(0.0),
                None => 0.0,
            })
        };
        Ok(MetricsReport {
            samples: num("samples")? as usize,
            accuracy: num("accuracy")?,
            precision: num("precision")?,
            recall: num("recall")?,
            f1: num("f1")?,
            roc_auc,
            confusion,
            param_count: num("params")? as usize,
            train_seconds: time("train_seconds")?,
            test_seconds: time("test_seconds")?,
        })
    }
}

/// Predicted class per sample (argmax, first maximum on ties) and the
/// probability matrix, with the forward-pass wall time.
pub fn predict_classes(net: &Network, x: &Tensor) -> Result<(Vec<usize>, Vec<f64>, f64)> {
    let n = x.shape().first().copied().unwrap_or(0);
    let mut probs = Vec::with_capacity(n * net.classes());
    let mut seconds = 0.0;
    for start in (0..n).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        let chunk = x.select_rows(&idx);
        let (p, s) = time_block(|| net.predict(&chunk));
        seconds += s;
        probs.extend_from_slice(p?.data());
    }
    let predicted = probs.chunks(net.classes()).map(crate::tensor::argmax).collect();
    Ok((predicted, probs, seconds))
}

pub fn evaluate(net: &Network, test: &Domain) -> Result<MetricsReport> {
    if test.is_empty() {
        return Err(Error::Eval("empty test set".into()));
    }
    check_domain(net, test, "test")?;
    let (predicted, probs, seconds) = predict_classes(net, test.x())?;
    let confusion = ConfusionMatrix::from_predictions(net.classes(), test.y(), &predicted)?;
    let auc = match roc_auc_multiclass(&probs, net.classes(), test.y()) {
        Ok(a) => Some(a),
        Err(Error::UndefinedAuc(_)) => None,
        Err(e) => return Err(e),
    };
    let mut report = MetricsReport::from_confusion(confusion, auc, count_params(net));
    report.test_seconds = seconds;
    Ok(report)
}

/// Stored values of the network, batch-norm running statistics included.
pub fn count_params(net: &Network) -> usize {
    net.param_count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_presnet, ArchKind, Architecture, LayerSpec};
    use crate::transfer::DomainRole;
    use rand::Rng;

    fn toy_domain(n: usize, seed: u64) -> Domain {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = i % 2;
            for _ in 0..2 * 8 {
                x.push(label as f64 * 2.0 - 1.0 + rng.random_range(-0.5..0.5));
            }
            y.push(label);
        }
        Domain::new(DomainRole::Target, Tensor::new(vec![n, 2, 8], x).unwrap(), y, 2, (0..n).collect()).unwrap()
    }

    #[test]
    fn history_length_without_early_stop() {
        let mut net = build_presnet(2, 8, 2, 1).unwrap();
        let cfg = TrainConfig { epochs: 3, batch_size: 16, patience: None, ..TrainConfig::default() };
        let h = train(&mut net, &toy_domain(32, 1), &toy_domain(8, 2), &cfg).unwrap();
        assert_eq!(h.len(), 3);
        assert_eq!(h.epochs.iter().map(|e| e.epoch).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(History::from_csv(&h.to_csv()).unwrap().to_csv(), h.to_csv());
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut net = build_presnet(2, 8, 2, 4).unwrap();
        let trainable = |n: &Network| {
            let mut n = n.clone();
            let mut out = Vec::new();
            n.visit_params_mut(&mut |s| {
                if s.grad.is_some() {
                    out.push(s.value.clone())
                }
            });
            out
        };
        let before = trainable(&net);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 64,
            patience: None,
            optimizer: OptimizerKind::adam().with_learning_rate(0.0),
            ..TrainConfig::default()
        };
        let h = train(&mut net, &toy_domain(20, 3), &toy_domain(6, 4), &cfg).unwrap();
        assert_eq!(trainable(&net), before);
        // One full batch per epoch: only the summation order changes.
        assert!(h.epochs.windows(2).all(|w| (w[0].train_loss - w[1].train_loss).abs() < 1e-12));
    }

    #[test]
    fn early_stopping_restores_best_epoch() {
        let mut net = build_presnet(2, 8, 2, 5).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 8,
            patience: Some(2),
            optimizer: OptimizerKind::adam().with_learning_rate(0.05),
            ..TrainConfig::default()
        };
        let val = toy_domain(10, 6);
        let h = train(&mut net, &toy_domain(24, 5), &val, &cfg).unwrap();
        let best = h.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
        let (val_loss, _) = loss_and_accuracy(&net, &val).unwrap();
        assert_eq!(val_loss, best);
        assert_eq!(h.epochs[h.best_epoch.unwrap() - 1].val_loss, best);
    }

    #[test]
    fn divergence_is_reported() {
        let mut net = build_presnet(2, 8, 2, 5).unwrap();
        let cfg = TrainConfig { epochs: 1, patience: None, ..TrainConfig::default() };
        let mut bad = toy_domain(8, 1);
        bad.x_mut().data_mut()[0] = f64::NAN;
        let err = train(&mut net, &bad, &toy_domain(4, 2), &cfg).unwrap_err();
        assert!(matches!(err, Error::Diverged { epoch: 1, .. }), "{err}");
    }

    #[test]
    fn learns_a_trivial_problem() {
        let mut net = build_presnet(2, 8, 2, 9).unwrap();
        let cfg = TrainConfig { epochs: 15, batch_size: 16, patience: None, ..TrainConfig::default() };
        let h = train(&mut net, &toy_domain(64, 11), &toy_domain(16, 12), &cfg).unwrap();
        assert!(h.last().unwrap().train_acc >= 0.99, "{:?}", h.last());
        let report = evaluate(&net, &toy_domain(40, 13)).unwrap();
        assert!(report.accuracy >= 0.95);
        assert_eq!(report.roc_auc.map(|a| a > 0.95), Some(true));
        let kv = report.to_kv();
        let back = MetricsReport::from_parts(&kv, report.confusion.clone(), None).unwrap();
        assert_eq!(back.to_kv(), kv);
    }

    #[test]
    fn mlp_param_count() {
        let arch = Architecture {
            kind: ArchKind::Mlp,
            channels: 2,
            window: 1,
            classes: 2,
            layers: vec![
                LayerSpec::Flatten,
                LayerSpec::Dense { inputs: 2, units: 3 },
                LayerSpec::Relu,
                LayerSpec::Dense { inputs: 3, units: 2 },
                LayerSpec::Softmax,
            ],
        };
        let a = Network::new(arch.clone(), 1).unwrap();
        let b = Network::new(arch, 2).unwrap();
        assert_eq!(count_params(&a), 17);
        assert_eq!(count_params(&b), 17);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { epochs: 5, patience: Some(6), ..TrainConfig::default() }.validate().is_err());
    }
}

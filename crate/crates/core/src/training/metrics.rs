//! Confusion-matrix metrics and ROC AUC.

use std::time::Instant;

use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix { classes, counts: vec![0; classes * classes] }
    }

    pub fn from_predictions(classes: usize, truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Eval(format!("{} labels vs {} predictions", truth.len(), predicted.len())));
        }
        let mut cm = ConfusionMatrix::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= classes || p >= classes {
                return Err(Error::Eval(format!("class index out of range for {classes} classes")));
            }
            cm.counts[t * classes + p] += 1;
        }
        Ok(cm)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds another matrix's counts (for sharded evaluation).
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::Eval("cannot merge confusion matrices of different sizes".into()));
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        Ok(())
    }

    fn true_count(&self, c: usize) -> u64 {
        (0..self.classes).map(|p| self.get(c, p)).sum()
    }

    fn predicted_count(&self, c: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, c)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let correct: u64 = (0..self.classes).map(|c| self.get(c, c)).sum();
        ratio(correct, self.total())
    }

    /// Precision of class `c`; 0 when the class is never predicted.
    pub fn precision(&self, c: usize) -> f64 {
        ratio(self.get(c, c), self.predicted_count(c))
    }

    /// Recall of class `c`; 0 when the class never occurs.
    pub fn recall(&self, c: usize) -> f64 {
        ratio(self.get(c, c), self.true_count(c))
    }

    pub fn f1(&self, c: usize) -> f64 {
        let (p, r) = (self.precision(c), self.recall(c));
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    /// Classes that occur in the truth or in the predictions; macro averages
    /// run over these only.
    pub fn active_classes(&self) -> Vec<usize> {
        (0..self.classes).filter(|&c| self.true_count(c) > 0 || self.predicted_count(c) > 0).collect()
    }

    fn macro_avg(&self, f: impl Fn(usize) -> f64) -> f64 {
        let active = self.active_classes();
        if active.is_empty() {
            return 0.0;
        }
        active.iter().map(|&c| f(c)).sum::<f64>() / active.len() as f64
    }

    pub fn macro_precision(&self) -> f64 {
        self.macro_avg(|c| self.precision(c))
    }

    pub fn macro_recall(&self) -> f64 {
        self.macro_avg(|c| self.recall(c))
    }

    pub fn macro_f1(&self) -> f64 {
        self.macro_avg(|c| self.f1(c))
    }

    /// CSV with a header row of predicted classes and one row per true class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for p in 0..self.classes {
            out.push_str(&format!(",{p}"));
        }
        out.push('\n');
        for t in 0..self.classes {
            out.push_str(&t.to_string());
            for p in 0..self.classes {
                out.push_str(&format!(",{}", self.get(t, p)));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = || Error::Format("malformed confusion matrix CSV".into());
        let mut lines = text.lines();
        let classes = lines.next().ok_or_else(bad)?.split(',').count() - 1;
        let mut cm = ConfusionMatrix::new(classes);
        for (t, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if t >= classes || cells.len() != classes + 1 {
                return Err(bad());
            }
            for (p, cell) in cells[1..].iter().enumerate() {
                cm.counts[t * classes + p] = cell.parse().map_err(|_| bad())?;
            }
        }
        Ok(cm)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Probability that a random positive scores above a random negative, ties
/// counting one half. Sorting with mid-ranks makes it O(n log n).
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::Eval(format!("{} scores vs {} labels", scores.len(), positive.len())));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc("both classes must be present".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Eval("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of positive ranks (1-based, ties get the mean rank), kept doubled
    // so every quantity stays an integer until the final division.
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let pos_in_group = order[i..=j].iter().filter(|&&k| positive[k]).count() as u128;
        // Mean rank of the group is (i+1 + j+1)/2.
        rank_sum2 += pos_in_group * (i as u128 + j as u128 + 2);
        i = j + 1;
    }
    let (np, nn) = (n_pos as u128, n_neg as u128);
    // U = rank_sum - np(np+1)/2, doubled.
    let u2 = rank_sum2 - np * (np + 1);
    Ok(u2 as f64 / (2 * np * nn) as f64)
}

/// One-vs-rest macro AUC over `[N, C]` probabilities. Binary problems use
/// the class-1 probability directly. Classes absent from (or making up all
/// of) `labels` are skipped.
pub fn roc_auc_multiclass(probs: &[f64], classes: usize, labels: &[usize]) -> Result<f64> {
    if probs.len() != labels.len() * classes {
        return Err(Error::Eval("probability matrix does not match the label count".into()));
    }
    let column = |c: usize| probs.chunks(classes).map(|row| row[c]).collect::<Vec<_>>();
    if classes == 2 {
        let pos: Vec<bool> = labels.iter().map(|&y| y == 1).collect();
        return roc_auc(&column(1), &pos);
    }
    let mut aucs = Vec::new();
    for c in 0..classes {
        let pos: Vec<bool> = labels.iter().map(|&y| y == c).collect();
        match roc_auc(&column(c), &pos) {
            Ok(a) => aucs.push(a),
            Err(Error::UndefinedAuc(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if aucs.is_empty() {
        return Err(Error::UndefinedAuc("no class has both positives and negatives".into()));
    }
    Ok(aucs.iter().sum::<f64>() / aucs.len() as f64)
}

/// Runs `f` and returns its result with the elapsed monotonic wall time.
pub fn time_block<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

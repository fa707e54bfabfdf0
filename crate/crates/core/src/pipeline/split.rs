//! Stratified train / validation / test splits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const TEST_FRACTION: f64 = 0.2;
pub const VAL_FRACTION: f64 = 0.2;
pub const MIN_SPLIT_ROWS: usize = 10;
pub const MIN_CLASS_ROWS: usize = 3;

/// Disjoint, exhaustive, ascending index sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

fn class_members(labels: &[usize], pool: &[usize]) -> Vec<Vec<usize>> {
    let classes = pool.iter().map(|&i| labels[i] + 1).max().unwrap_or(0);
    let mut members = vec![Vec::new(); classes];
    pool.iter().for_each(|&i| members[labels[i]].push(i));
    members
}

/// Per-class quotas summing to `total`, by largest remainder (ties to the
/// lower class index), so each class is within one row of its exact share.
fn allocate(sizes: &[usize], total: usize) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    let exact: Vec<f64> = sizes.iter().map(|&s| s as f64 * total as f64 / n as f64).collect();
    let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let mut left = total - quota.iter().sum::<usize>();
    for c in order {
        if left == 0 {
            break;
        }
        if quota[c] < sizes[c] {
            quota[c] += 1;
            left -= 1;
        }
    }
    quota
}

/// Draws a stratified sample of `share * pool.len()` (rounded) rows from
/// `pool`; returns `(taken, rest)`.
fn stratified_take(labels: &[usize], pool: &[usize], count: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut members = class_members(labels, pool);
    let quotas = allocate(&members.iter().map(Vec::len).collect::<Vec<_>>(), count);
    let (mut taken, mut rest) = (Vec::new(), Vec::new());
    for (m, q) in members.iter_mut().zip(quotas) {
        m.shuffle(rng);
        taken.extend_from_slice(&m[..q]);
        rest.extend_from_slice(&m[q..]);
    }
    taken.sort_unstable();
    rest.sort_unstable();
    (taken, rest)
}

/// Test = 20% of all rows, validation = 20% of the remaining pool, both
/// stratified by label: 64/16/20 overall.
pub fn split(labels: &[usize], seed: u64) -> Result<Split> {
    if labels.len() < MIN_SPLIT_ROWS {
        return Err(Error::Stratification(format!("{} rows, need at least {MIN_SPLIT_ROWS}", labels.len())));
    }
    let all: Vec<usize> = (0..labels.len()).collect();
    for (c, m) in class_members(labels, &all).iter().enumerate() {
        if !m.is_empty() && m.len() < MIN_CLASS_ROWS {
            return Err(Error::Stratification(format!(
                "class {c} has {} rows, need at least {MIN_CLASS_ROWS}",
                m.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_test = (TEST_FRACTION * labels.len() as f64).round() as usize;
    let (test, pool) = stratified_take(labels, &all, n_test, &mut rng);
    let n_val = (VAL_FRACTION * pool.len() as f64).round() as usize;
    let (val, train) = stratified_take(labels, &pool, n_val, &mut rng);
    Ok(Split { train, val, test })
}

/// Stratified subsample of `count` rows (all rows when `count` exceeds them).
pub fn stratified_subsample(labels: &[usize], count: usize, seed: u64) -> Vec<usize> {
    let all: Vec<usize> = (0..labels.len()).collect();
    if count >= labels.len() {
        return all;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    stratified_take(labels, &all, count, &mut rng).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn thousand_rows() {
        let labels: Vec<usize> = (0..1000).map(|i| usize::from(i % 10 < 3)).collect();
        let s = split(&labels, 5).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (640, 160, 200));
        assert_eq!(s, split(&labels, 5).unwrap());
        assert_ne!(s, split(&labels, 6).unwrap());
    }

    #[test]
    fn small_classes_are_rejected() {
        let mut labels = vec![1; 20];
        labels[3] = 0;
        labels[9] = 0;
        assert!(matches!(split(&labels, 0), Err(Error::Stratification(_))));
        assert!(matches!(split(&[0, 1, 0, 1], 0), Err(Error::Stratification(_))));
    }

    proptest! {
        #[test]
        fn split_contract(n in 10usize..400, frac in 0.05f64..0.95, seed in any::<u64>()) {
            let labels: Vec<usize> = (0..n).map(|i| usize::from((i as f64 * frac).fract() < frac)).collect();
            let counts = [labels.iter().filter(|&&l| l == 0).count(), labels.iter().filter(|&&l| l == 1).count()];
            prop_assume!(counts.iter().all(|&c| c == 0 || c >= MIN_CLASS_ROWS));
            let s = split(&labels, seed).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            for (part, share) in [(&s.train, 0.64), (&s.val, 0.16), (&s.test, 0.2)] {
                prop_assert!((part.len() as f64 - share * n as f64).abs() <= 1.0);
                for (c, &count) in counts.iter().enumerate() {
                    let got = part.iter().filter(|&&i| labels[i] == c).count() as f64;
                    let want = count as f64 * part.len() as f64 / n as f64;
                    prop_assert!((got - want).abs() <= 1.0 + 1e-9, "class {} in part: {} vs {}", c, got, want);
                }
            }
        }
    }
}

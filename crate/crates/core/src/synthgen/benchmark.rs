//! Named benchmark datasets.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{default_profiles, AttackKind, AttackScenario, Generated, SynthSpec};
use crate::error::{Error, Result};

pub const BENCHMARKS: [&str; 3] = ["separable-small", "transfer-pair", "imbalanced"];

/// Rows in the transfer-pair target domain.
pub const TARGET_ROWS: usize = 100;

/// One or more generated parts (`data`, or `source` and `target`).
#[derive(Clone, Debug)]
pub struct Bundle {
    pub name: String,
    pub parts: Vec<(String, SynthSpec, Generated)>,
}

impl Bundle {
    pub fn part(&self, name: &str) -> Option<&Generated> {
        self.parts.iter().find(|p| p.0 == name).map(|p| &p.2)
    }

    /// One directory per part, each with the generated files and the
    /// `scenario.kv` that reproduces it.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for (name, spec, data) in &self.parts {
            let sub = dir.join(name);
            data.write(&sub)?;
            let path = sub.join("scenario.kv");
            std::fs::write(&path, spec.to_text()).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Splits `total` into `parts` random positive-weight shares.
fn composition(total: usize, parts: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let w: Vec<f64> = (0..parts).map(|_| rng.random_range(0.5..1.5)).collect();
    let sum: f64 = w.iter().sum();
    let exact: Vec<f64> = w.iter().map(|x| x / sum * total as f64).collect();
    let mut out: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..parts).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    let short = total - out.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        out[i] += 1;
    }
    out
}

/// Exactly `attack_rows` attacked ticks in `blocks` intervals separated by
/// normal gaps, cycling through `kinds`.
fn plan(
    length: usize,
    attack_rows: usize,
    blocks: usize,
    kinds: &[AttackKind],
    severity: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<AttackScenario> {
    let sizes = composition(attack_rows - blocks, blocks, rng).into_iter().map(|s| s + 1);
    // Interior gaps get at least one normal tick.
    let mut gaps = composition(length - attack_rows - (blocks - 1), blocks + 1, rng);
    for g in &mut gaps[1..blocks] {
        *g += 1;
    }
    let mut t = 0;
    sizes
        .enumerate()
        .map(|(i, size)| {
            t += gaps[i];
            let s = AttackScenario::new(kinds[i % kinds.len()], t, t + size, severity);
            t += size;
            s
        })
        .collect()
}

/// Builds a named benchmark:
///
/// - `separable-small`: 500 ticks, 40% attacked at high severity by the
///   eight kinds that raise readings (ransomware, which drives them down,
///   would make the classes non-linearly separable).
/// - `transfer-pair`: a 5,000-tick source attacked by five kinds and a
///   100-tick target attacked by the other four at a lower severity.
/// - `imbalanced`: 2,000 ticks, exactly 30% attacked, 1% missing numeric cells.
pub fn make_benchmark(name: &str, seed: u64) -> Result<Bundle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0xB0);
    use AttackKind::*;
    let specs = match name {
        "separable-small" => vec![(
            "data",
            SynthSpec {
                length: 500,
                seed,
                missing_rate: 0.0,
                scenarios: plan(500, 200, 8, &AttackKind::ALL[..8], 2.5, &mut rng),
            },
        )],
        "transfer-pair" => {
            let source = plan(5000, 1750, 40, &[Dos, Ddos, Injection, Mitm, Scanning], 1.5, &mut rng);
            let target = plan(TARGET_ROWS, 40, 4, &[Backdoor, Password, Xss, Ransomware], 1.0, &mut rng);
            vec![
                ("source", SynthSpec { length: 5000, seed, missing_rate: 0.0, scenarios: source }),
                (
                    "target",
                    SynthSpec {
                        length: TARGET_ROWS,
                        seed: seed ^ 0x5EED_7A26_E700_0000,
                        missing_rate: 0.0,
                        scenarios: target,
                    },
                ),
            ]
        }
        "imbalanced" => vec![(
            "data",
            SynthSpec {
                length: 2000,
                seed,
                missing_rate: 0.01,
                scenarios: plan(2000, 600, 24, &AttackKind::ALL, 1.0, &mut rng),
            },
        )],
        other => {
            return Err(Error::config(format!("unknown benchmark `{other}` (expected one of {BENCHMARKS:?})")));
        }
    };
    let profiles = default_profiles();
    let parts = specs
        .into_iter()
        .map(|(n, spec)| Ok((n.to_owned(), spec.clone(), spec.generate(&profiles)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Bundle { name: name.to_owned(), parts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::dataset::encode_labels;
    use crate::LABEL_ATTACK;

    fn attack_fraction(g: &Generated) -> f64 {
        g.combined.labels.iter().filter(|&&l| l == LABEL_ATTACK).count() as f64 / g.combined.labels.len() as f64
    }

    #[test]
    fn shapes() {
        let b = make_benchmark("transfer-pair", 3).unwrap();
        assert_eq!(b.part("source").unwrap().combined.rows.len(), 5000);
        assert_eq!(b.part("target").unwrap().combined.rows.len(), 100);
        let im = make_benchmark("imbalanced", 3).unwrap();
        assert!((attack_fraction(im.part("data").unwrap()) - 0.3).abs() <= 0.02);
        let sep = make_benchmark("separable-small", 3).unwrap();
        assert_eq!(sep.part("data").unwrap().combined.rows.len(), 500);
        assert!(matches!(make_benchmark("huge", 0), Err(Error::Config(_))));
    }

    #[test]
    fn planned_intervals_are_exact() {
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = plan(300, 90, 7, &AttackKind::ALL, 1.0, &mut rng);
            assert_eq!(s.iter().map(|a| a.end - a.start).sum::<usize>(), 90);
            assert!(s.windows(2).all(|w| w[0].end < w[1].start));
            assert!(s.last().unwrap().end <= 300);
        }
    }

    /// Logistic regression on standardized raw features, fitted by batch
    /// gradient descent, scored on a held-out half.
    fn linear_oracle_accuracy(g: &Generated) -> f64 {
        let ds = encode_labels(&g.combined).unwrap();
        let (n, k) = (ds.n_rows(), ds.n_cols());
        let mean: Vec<f64> = (0..k).map(|c| ds.column(c).iter().sum::<f64>() / n as f64).collect();
        let sd: Vec<f64> = (0..k)
            .map(|c| (ds.column(c).iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>() / n as f64).sqrt().max(1e-12))
            .collect();
        let x: Vec<Vec<f64>> = (0..n).map(|r| (0..k).map(|c| (ds.value(r, c) - mean[c]) / sd[c]).collect()).collect();
        let y: Vec<f64> = ds.labels.iter().map(|&l| l as f64).collect();
        let (fit, held): (Vec<usize>, Vec<usize>) = (0..n).partition(|i| i % 2 == 0);
        let mut w = vec![0.0; k + 1];
        for _ in 0..2000 {
            let mut grad = vec![0.0; k + 1];
            for &i in &fit {
                let z = w[k] + (0..k).map(|c| w[c] * x[i][c]).sum::<f64>();
                let err = 1.0 / (1.0 + (-z).exp()) - y[i];
                for c in 0..k {
                    grad[c] += err * x[i][c];
                }
                grad[k] += err;
            }
            for c in 0..=k {
                w[c] -= 0.5 * grad[c] / fit.len() as f64;
            }
        }
        let correct = held
            .iter()
            .filter(|&&i| {
                let z = w[k] + (0..k).map(|c| w[c] * x[i][c]).sum::<f64>();
                (z > 0.0) == (y[i] > 0.5)
            })
            .count();
        correct as f64 / held.len() as f64
    }

    #[test]
    fn separable_small_is_linearly_separable() {
        for seed in 0..3 {
            let b = make_benchmark("separable-small", seed).unwrap();
            let acc = linear_oracle_accuracy(b.part("data").unwrap());
            assert!(acc >= 0.95, "seed {seed}: linear oracle accuracy {acc}");
        }
    }
}

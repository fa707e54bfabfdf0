use super::ncl;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_BN_EPSILON: f64 = 1e-5;
pub const DEFAULT_BN_MOMENTUM: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    /// Normalize with batch statistics and update the running averages.
    Train,
    /// Normalize with the running statistics.
    Infer,
}

/// Per-channel batch-norm state. `running_var` stays strictly positive.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormParams {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub epsilon: f64,
    pub momentum: f64,
}

impl BatchNormParams {
    pub fn new(channels: usize) -> Self {
        BatchNormParams {
            gamma: Tensor::full(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], 1.0),
            epsilon: DEFAULT_BN_EPSILON,
            momentum: DEFAULT_BN_MOMENTUM,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

#[derive(Clone, Debug)]
pub struct BatchNormCache {
    mode: BnMode,
    /// Normalized input (train) or the raw input (infer).
    saved: Tensor,
    inv_std: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct BatchNormGrads {
    pub input: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

/// Batch normalization over `[N, C, L]` (or `[C, L]`), statistics per channel
/// across `N * L` positions.
pub fn batchnorm(input: &Tensor, params: &mut BatchNormParams, mode: BnMode) -> Result<(Tensor, BatchNormCache)> {
    let (n, c, l) = ncl(input)?;
    if params.channels() != c {
        return Err(Error::shape(format!("batch-norm has {} channels, input has {c}", params.channels())));
    }
    let count = n * l;
    let x = input.data();
    let eps = params.epsilon;

    match mode {
        BnMode::Train => {
            if count < 2 {
                return Err(Error::DegenerateBatch(format!(
                    "train-mode batch-norm needs N*L >= 2 per channel, got {count}"
                )));
            }
            let gamma = params.gamma.data();
            let beta = params.beta.data();
            let mut out = vec![0.0; x.len()];
            let mut xhat = vec![0.0; x.len()];
            let mut inv_std = vec![0.0; c];
            let (mut means, mut vars) = (vec![0.0; c], vec![0.0; c]);
            for ch in 0..c {
                let mut sum = 0.0;
                for s in 0..n {
                    sum += x[(s * c + ch) * l..(s * c + ch + 1) * l].iter().sum::<f64>();
                }
                let mean = sum / count as f64;
                let mut sq = 0.0;
                for s in 0..n {
                    for v in &x[(s * c + ch) * l..(s * c + ch + 1) * l] {
                        sq += (v - mean) * (v - mean);
                    }
                }
                let var = sq / count as f64;
                let is = 1.0 / (var + eps).sqrt();
                for s in 0..n {
                    let base = (s * c + ch) * l;
                    for t in base..base + l {
                        xhat[t] = (x[t] - mean) * is;
                        out[t] = gamma[ch] * xhat[t] + beta[ch];
                    }
                }
                inv_std[ch] = is;
                means[ch] = mean;
                vars[ch] = sq / (count - 1) as f64;
            }
            let m = params.momentum;
            for ch in 0..c {
                let rm = &mut params.running_mean.data_mut()[ch];
                *rm = m * *rm + (1.0 - m) * means[ch];
                let rv = &mut params.running_var.data_mut()[ch];
                *rv = m * *rv + (1.0 - m) * vars[ch];
            }
            let cache = BatchNormCache { mode, saved: Tensor::new(input.shape().to_vec(), xhat)?, inv_std };
            Ok((Tensor::new(input.shape().to_vec(), out)?, cache))
        }
        BnMode::Infer => {
            let out = batchnorm_infer(input, params)?;
            let inv_std = params.running_var.data().iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
            let cache = BatchNormCache { mode, saved: input.clone(), inv_std };
            Ok((out, cache))
        }
    }
}

/// Inference-mode normalization with the running statistics; never mutates.
pub fn batchnorm_infer(input: &Tensor, params: &BatchNormParams) -> Result<Tensor> {
    let (n, c, l) = ncl(input)?;
    if params.channels() != c {
        return Err(Error::shape(format!("batch-norm has {} channels, input has {c}", params.channels())));
    }
    let x = input.data();
    let gamma = params.gamma.data();
    let beta = params.beta.data();
    let rm = params.running_mean.data();
    let mut out = vec![0.0; x.len()];
    for ch in 0..c {
        let is = 1.0 / (params.running_var.data()[ch] + params.epsilon).sqrt();
        for s in 0..n {
            let base = (s * c + ch) * l;
            for t in base..base + l {
                out[t] = gamma[ch] * (x[t] - rm[ch]) * is + beta[ch];
            }
        }
    }
    Tensor::new(input.shape().to_vec(), out)
}

pub fn batchnorm_backward(
    grad_out: &Tensor,
    cache: &BatchNormCache,
    params: &BatchNormParams,
) -> Result<BatchNormGrads> {
    grad_out.ensure_same_shape(&cache.saved)?;
    let (n, c, l) = ncl(grad_out)?;
    let g = grad_out.data();
    let gamma = params.gamma.data();
    let mut gx = vec![0.0; g.len()];
    let mut ggamma = vec![0.0; c];
    let mut gbeta = vec![0.0; c];
    let count = (n * l) as f64;

    for ch in 0..c {
        let is = cache.inv_std[ch];
        match cache.mode {
            BnMode::Train => {
                let xhat = cache.saved.data();
                let (mut sum_g, mut sum_gx) = (0.0, 0.0);
                for s in 0..n {
                    let base = (s * c + ch) * l;
                    for t in base..base + l {
                        sum_g += g[t];
                        sum_gx += g[t] * xhat[t];
                    }
                }
                ggamma[ch] = sum_gx;
                gbeta[ch] = sum_g;
                let scale = gamma[ch] * is / count;
                for s in 0..n {
                    let base = (s * c + ch) * l;
                    for t in base..base + l {
                        gx[t] = scale * (count * g[t] - sum_g - xhat[t] * sum_gx);
                    }
                }
            }
            BnMode::Infer => {
                let x = cache.saved.data();
                let rm = params.running_mean.data()[ch];
                for s in 0..n {
                    let base = (s * c + ch) * l;
                    for t in base..base + l {
                        gbeta[ch] += g[t];
                        ggamma[ch] += g[t] * (x[t] - rm) * is;
                        gx[t] = g[t] * gamma[ch] * is;
                    }
                }
            }
        }
    }
    Ok(BatchNormGrads {
        input: Tensor::new(grad_out.shape().to_vec(), gx)?,
        gamma: Tensor::from_vec(ggamma),
        beta: Tensor::from_vec(gbeta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn channel_stats(t: &Tensor, ch: usize) -> (f64, f64) {
        let (n, c, l) = ncl(t).unwrap();
        let vals: Vec<f64> = (0..n).flat_map(|s| t.data()[(s * c + ch) * l..(s * c + ch + 1) * l].to_vec()).collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / vals.len() as f64;
        (m, v)
    }

    #[test]
    fn constant_channel_normalizes_to_zero() {
        let x = Tensor::full(&[4, 2, 3], 7.5);
        let mut p = BatchNormParams::new(2);
        let (y, _) = batchnorm(&x, &mut p, BnMode::Train).unwrap();
        assert!(y.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn train_output_is_standardized() {
        let data: Vec<f64> = (0..60).map(|i| (i as f64 * 1.7).sin() * 40.0 + 3.0).collect();
        let x = Tensor::new(vec![5, 3, 4], data).unwrap();
        let mut p = BatchNormParams::new(3);
        let (y, _) = batchnorm(&x, &mut p, BnMode::Train).unwrap();
        for ch in 0..3 {
            let (m, v) = channel_stats(&y, ch);
            assert!(m.abs() < 1e-9);
            assert!((v - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn standardized_input_is_kept_when_epsilon_is_tiny() {
        let x = Tensor::new(vec![1, 1, 4], vec![-1.0, 1.0, -1.0, 1.0]).unwrap();
        let mut p = BatchNormParams::new(1);
        p.epsilon = 1e-15;
        let (y, _) = batchnorm(&x, &mut p, BnMode::Train).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn affine_law() {
        let x = Tensor::new(vec![2, 1, 3], vec![1., 4., 2., 8., 5., 7.]).unwrap();
        let mut plain = BatchNormParams::new(1);
        let (z, _) = batchnorm(&x, &mut plain, BnMode::Train).unwrap();
        let mut p = BatchNormParams::new(1);
        p.gamma = Tensor::from_vec(vec![2.0]);
        p.beta = Tensor::from_vec(vec![1.0]);
        let (y, _) = batchnorm(&x, &mut p, BnMode::Train).unwrap();
        for (a, b) in y.data().iter().zip(z.data()) {
            assert!((a - (2.0 * b + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn running_stats_follow_momentum() {
        let x = Tensor::new(vec![1, 1, 4], vec![1., 2., 3., 4.]).unwrap();
        let mut p = BatchNormParams::new(1);
        batchnorm(&x, &mut p, BnMode::Train).unwrap();
        // mean 2.5, unbiased var 5/3
        assert!((p.running_mean.data()[0] - 0.25).abs() < 1e-12);
        assert!((p.running_var.data()[0] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-12);
        let (y, _) = batchnorm(&x, &mut p, BnMode::Infer).unwrap();
        let want = (1.0 - 0.25) / (p.running_var.data()[0] + 1e-5).sqrt();
        assert!((y.data()[0] - want).abs() < 1e-12);
    }

    #[test]
    fn single_position_batch_is_degenerate() {
        let x = Tensor::zeros(&[1, 2, 1]);
        let mut p = BatchNormParams::new(2);
        assert!(matches!(batchnorm(&x, &mut p, BnMode::Train), Err(Error::DegenerateBatch(_))));
        assert!(batchnorm(&x, &mut p, BnMode::Infer).is_ok());
    }
}

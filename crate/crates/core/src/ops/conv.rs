use super::{gemm, ncl};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Zero "same" padding for a kernel of length `k`: `(left, right)`.
///
/// Even kernels put the extra zero on the right.
pub fn same_padding(k: usize) -> (usize, usize) {
    let left = (k - 1) / 2;
    (left, k - 1 - left)
}

/// Saved forward state for [`conv1d_backward`]: the unfolded input.
#[derive(Clone, Debug)]
pub struct Conv1dCache {
    /// `[C_in * K, N * L]`, row-major.
    cols: Vec<f64>,
    input_shape: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Conv1dGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

fn check(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<(usize, usize, usize, usize, usize)> {
    let (n, c_in, l) = ncl(input)?;
    let [c_out, w_in, k] = *weight.shape() else {
        return Err(Error::shape(format!("conv kernel must be [C_out, C_in, K], got {:?}", weight.shape())));
    };
    if w_in != c_in {
        return Err(Error::shape(format!("conv kernel expects {w_in} input channels, input has {c_in}")));
    }
    if k == 0 || l == 0 {
        return Err(Error::shape("conv needs K >= 1 and L >= 1"));
    }
    if bias.shape() != [c_out] {
        return Err(Error::shape(format!("conv bias must be [{c_out}], got {:?}", bias.shape())));
    }
    Ok((n, c_in, l, c_out, k))
}

fn im2col(x: &[f64], n: usize, c_in: usize, l: usize, k: usize) -> Vec<f64> {
    let (left, _) = same_padding(k);
    let width = n * l;
    let mut cols = vec![0.0; c_in * k * width];
    for c in 0..c_in {
        for kk in 0..k {
            let row = &mut cols[(c * k + kk) * width..(c * k + kk + 1) * width];
            for b in 0..n {
                let src = &x[(b * c_in + c) * l..(b * c_in + c + 1) * l];
                let dst = &mut row[b * l..(b + 1) * l];
                // dst[t] = src[t + kk - left]
                for (t, d) in dst.iter_mut().enumerate() {
                    let s = t + kk;
                    if s >= left && s - left < l {
                        *d = src[s - left];
                    }
                }
            }
        }
    }
    cols
}

/// Cross-correlation with zero "same" padding.
///
/// `input` is `[C_in, L]` or `[N, C_in, L]`, `weight` is `[C_out, C_in, K]`,
/// `bias` is `[C_out]`. The output has the input's length.
pub fn conv1d(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    conv1d_forward_cached(input, weight, bias).map(|(out, _)| out)
}

pub fn conv1d_forward_cached(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<(Tensor, Conv1dCache)> {
    let (n, c_in, l, c_out, k) = check(input, weight, bias)?;
    let cols = im2col(input.data(), n, c_in, l, k);
    let width = n * l;
    let mut g = vec![0.0; c_out * width];
    gemm(c_out, c_in * k, width, weight.data(), false, &cols, false, 0.0, &mut g);

    let mut out = vec![0.0; n * c_out * l];
    let b = bias.data();
    for o in 0..c_out {
        for s in 0..n {
            let src = &g[o * width + s * l..o * width + (s + 1) * l];
            let dst = &mut out[(s * c_out + o) * l..(s * c_out + o + 1) * l];
            for (d, v) in dst.iter_mut().zip(src) {
                *d = v + b[o];
            }
        }
    }
    let shape = if input.rank() == 2 { vec![c_out, l] } else { vec![n, c_out, l] };
    let cache = Conv1dCache { cols, input_shape: input.shape().to_vec() };
    Ok((Tensor::new(shape, out)?, cache))
}

/// Gradients of [`conv1d`] given the forward input.
pub fn conv1d_backward(grad_out: &Tensor, input: &Tensor, weight: &Tensor) -> Result<Conv1dGrads> {
    let (n, c_in, l) = ncl(input)?;
    let k = *weight.shape().last().unwrap_or(&0);
    if k == 0 || weight.rank() != 3 || weight.shape()[1] != c_in {
        return Err(Error::shape("conv kernel does not match the input"));
    }
    let cache = Conv1dCache { cols: im2col(input.data(), n, c_in, l, k), input_shape: input.shape().to_vec() };
    backward_with_cache(grad_out, &cache, weight)
}

pub(crate) fn backward_with_cache(grad_out: &Tensor, cache: &Conv1dCache, weight: &Tensor) -> Result<Conv1dGrads> {
    let [c_out, c_in, k] = *weight.shape() else {
        return Err(Error::shape("conv kernel must be rank 3"));
    };
    let (n, l) = match *cache.input_shape {
        [_, l] => (1, l),
        [n, _, l] => (n, l),
        _ => unreachable!("cached input shape is validated on forward"),
    };
    let (gn, gc, gl) = ncl(grad_out)?;
    if (gn, gc, gl) != (n, c_out, l) {
        return Err(Error::shape(format!(
            "conv grad_out {:?} does not match forward output [{n}, {c_out}, {l}]",
            grad_out.shape()
        )));
    }
    let width = n * l;
    // [N, C_out, L] -> [C_out, N*L]
    let go = grad_out.data();
    let mut g = vec![0.0; c_out * width];
    let mut grad_bias = vec![0.0; c_out];
    for s in 0..n {
        for o in 0..c_out {
            let src = &go[(s * c_out + o) * l..(s * c_out + o + 1) * l];
            g[o * width + s * l..o * width + (s + 1) * l].copy_from_slice(src);
        }
    }
    for o in 0..c_out {
        grad_bias[o] = g[o * width..(o + 1) * width].iter().sum();
    }

    let ck = c_in * k;
    let mut grad_w = vec![0.0; c_out * ck];
    gemm(c_out, width, ck, &g, false, &cache.cols, true, 0.0, &mut grad_w);

    let mut dcols = vec![0.0; ck * width];
    gemm(ck, c_out, width, weight.data(), true, &g, false, 0.0, &mut dcols);

    let (left, _) = same_padding(k);
    let mut grad_in = vec![0.0; n * c_in * l];
    for c in 0..c_in {
        for kk in 0..k {
            let row = &dcols[(c * k + kk) * width..(c * k + kk + 1) * width];
            for s in 0..n {
                let src = &row[s * l..(s + 1) * l];
                let dst = &mut grad_in[(s * c_in + c) * l..(s * c_in + c + 1) * l];
                for (t, v) in src.iter().enumerate() {
                    let p = t + kk;
                    if p >= left && p - left < l {
                        dst[p - left] += v;
                    }
                }
            }
        }
    }

    Ok(Conv1dGrads {
        input: Tensor::new(cache.input_shape.clone(), grad_in)?,
        weight: Tensor::new(vec![c_out, c_in, k], grad_w)?,
        bias: Tensor::from_vec(grad_bias),
    })
}

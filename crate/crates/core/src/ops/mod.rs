//! Forward and backward kernels for every layer type the networks use.
//!
//! All kernels are pure functions over caller-owned buffers. Batched inputs
//! are laid out `[N, C, L]`; a rank-2 `[C, L]` input is treated as a batch of
//! one and the output keeps rank 2.

mod activation;
mod batchnorm;
mod conv;
mod dense;
mod pool;

pub use activation::{
    relu, relu_backward, residual_add, residual_backward, softmax, softmax_cross_entropy, SoftmaxCrossEntropy,
};
pub use batchnorm::{
    batchnorm, batchnorm_backward, batchnorm_infer, BatchNormCache, BatchNormGrads, BatchNormParams, BnMode,
    DEFAULT_BN_EPSILON, DEFAULT_BN_MOMENTUM,
};
pub(crate) use conv::backward_with_cache as conv1d_backward_cached;
pub use conv::{conv1d, conv1d_backward, conv1d_forward_cached, same_padding, Conv1dCache, Conv1dGrads};
pub use dense::{dense, dense_backward, DenseGrads};
pub use pool::{global_average_pool, global_average_pool_backward};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Interpret a rank-2 `[C, L]` or rank-3 `[N, C, L]` tensor as `(N, C, L)`.
pub(crate) fn ncl(t: &Tensor) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [c, l] => Ok((1, c, l)),
        [n, c, l] => Ok((n, c, l)),
        _ => Err(Error::shape(format!("expected [C, L] or [N, C, L], got {:?}", t.shape()))),
    }
}

/// Interpret a rank-1 `[F]` or rank-2 `[N, F]` tensor as `(N, F)`.
pub(crate) fn nf(t: &Tensor) -> Result<(usize, usize)> {
    match *t.shape() {
        [f] => Ok((1, f)),
        [n, f] => Ok((n, f)),
        _ => Err(Error::shape(format!("expected [F] or [N, F], got {:?}", t.shape()))),
    }
}

/// `c = a' * b' + beta * c` where `'` optionally transposes.
///
/// `a'` is `m x k`, `b'` is `k x n`, `c` is `m x n`, all row-major.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|x| *x *= beta);
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slice lengths are checked above against the declared extents and
    // strides, so every index dgemm touches is in bounds.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

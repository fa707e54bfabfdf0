use super::{gemm, nf};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

fn check(input: &Tensor, weight: &Tensor) -> Result<(usize, usize, usize)> {
    let (n, f) = nf(input)?;
    let [f_out, w_in] = *weight.shape() else {
        return Err(Error::shape(format!("dense weight must be [F_out, F], got {:?}", weight.shape())));
    };
    if w_in != f {
        return Err(Error::shape(format!("dense weight expects {w_in} features, input has {f}")));
    }
    Ok((n, f, f_out))
}

/// Affine map `W x + b`, `W` is `[F_out, F]`.
pub fn dense(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, f, f_out) = check(input, weight)?;
    if bias.shape() != [f_out] {
        return Err(Error::shape(format!("dense bias must be [{f_out}]")));
    }
    let mut out = vec![0.0; n * f_out];
    for row in out.chunks_mut(f_out) {
        row.copy_from_slice(bias.data());
    }
    gemm(n, f, f_out, input.data(), false, weight.data(), true, 1.0, &mut out);
    let shape = if input.rank() == 1 { vec![f_out] } else { vec![n, f_out] };
    Tensor::new(shape, out)
}

pub fn dense_backward(grad_out: &Tensor, input: &Tensor, weight: &Tensor) -> Result<DenseGrads> {
    let (n, f, f_out) = check(input, weight)?;
    if nf(grad_out)? != (n, f_out) {
        return Err(Error::shape(format!(
            "dense grad_out {:?} does not match output [{n}, {f_out}]",
            grad_out.shape()
        )));
    }
    let g = grad_out.data();
    let mut gw = vec![0.0; f_out * f];
    gemm(f_out, n, f, g, true, input.data(), false, 0.0, &mut gw);
    let mut gx = vec![0.0; n * f];
    gemm(n, f_out, f, g, false, weight.data(), false, 0.0, &mut gx);
    let mut gb = vec![0.0; f_out];
    for row in g.chunks(f_out) {
        gb.iter_mut().zip(row).for_each(|(b, v)| *b += v);
    }
    Ok(DenseGrads {
        input: Tensor::new(input.shape().to_vec(), gx)?,
        weight: Tensor::new(vec![f_out, f], gw)?,
        bias: Tensor::from_vec(gb),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_bias_only() {
        let x = Tensor::from_vec(vec![1.5, -2.0, 3.0]);
        let mut eye = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 3 + i] = 1.0;
        }
        assert_eq!(dense(&x, &eye, &Tensor::zeros(&[3])).unwrap(), x);
        let b = Tensor::from_vec(vec![0.25, -4.0]);
        assert_eq!(dense(&x, &Tensor::zeros(&[2, 3]), &b).unwrap(), b);
    }

    #[test]
    fn feature_mismatch() {
        let x = Tensor::zeros(&[4]);
        assert!(matches!(dense(&x, &Tensor::zeros(&[2, 3]), &Tensor::zeros(&[2])), Err(Error::Shape(_))));
    }
}

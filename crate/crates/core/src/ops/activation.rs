use super::nf;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn relu(input: &Tensor) -> Tensor {
    // NaN propagates so upstream divergence stays visible.
    let data = input.data().iter().map(|&x| if x > 0.0 || x.is_nan() { x } else { 0.0 }).collect();
    Tensor::new(input.shape().to_vec(), data).expect("shape preserved")
}

/// Passes the gradient where the forward input was strictly positive.
pub fn relu_backward(grad_out: &Tensor, input: &Tensor) -> Result<Tensor> {
    grad_out.ensure_same_shape(input)?;
    let data = grad_out.data().iter().zip(input.data()).map(|(g, x)| if *x > 0.0 { *g } else { 0.0 }).collect();
    Tensor::new(input.shape().to_vec(), data)
}

/// Skip connection `f(x) + x`.
pub fn residual_add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.add(b)
}

/// Both branches of a residual sum receive the upstream gradient unchanged.
pub fn residual_backward(grad_out: &Tensor) -> (Tensor, Tensor) {
    (grad_out.clone(), grad_out.clone())
}

/// Row-wise softmax of `[C]` or `[N, C]` logits, max-subtracted.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let (n, c) = nf(logits)?;
    let mut out = logits.data().to_vec();
    for row in out.chunks_mut(c).take(n) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Tensor::new(logits.shape().to_vec(), out)
}

#[derive(Clone, Debug)]
pub struct SoftmaxCrossEntropy {
    pub loss: f64,
    pub probs: Tensor,
    pub grad_logits: Tensor,
}

/// Categorical cross-entropy of a single `[C]` logit vector against `label`.
pub fn softmax_cross_entropy(logits: &Tensor, label: usize) -> Result<SoftmaxCrossEntropy> {
    if logits.rank() != 1 || logits.len() < 2 {
        return Err(Error::shape(format!(
            "softmax cross-entropy needs a [C] vector with C >= 2, got {:?}",
            logits.shape()
        )));
    }
    if label >= logits.len() {
        return Err(Error::shape(format!("label {label} out of range for {} classes", logits.len())));
    }
    let z = logits.data();
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    let loss = -(z[label] - max - log_sum);
    let probs = softmax(logits)?;
    let mut grad = probs.data().to_vec();
    grad[label] -= 1.0;
    Ok(SoftmaxCrossEntropy { loss, probs, grad_logits: Tensor::from_vec(grad) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_examples() {
        let x = Tensor::from_vec(vec![-1.0, 0.0, 2.0]);
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let g = relu_backward(&Tensor::from_vec(vec![5.0, 5.0, 5.0]), &x).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 5.0]);

        let neg = Tensor::from_vec(vec![-3.0, -0.5]);
        assert_eq!(relu(&neg).data(), &[0.0, 0.0]);
        let pos = Tensor::from_vec(vec![0.1, 9.0]);
        assert_eq!(relu(&pos), pos);
        assert_eq!(relu_backward(&pos, &pos).unwrap(), pos);
    }

    #[test]
    fn uniform_logits() {
        for c in 2..6 {
            let r = softmax_cross_entropy(&Tensor::zeros(&[c]), 0).unwrap();
            assert!((r.loss - (c as f64).ln()).abs() < 1e-12);
            assert!(r.probs.data().iter().all(|p| (p - 1.0 / c as f64).abs() < 1e-15));
        }
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let r = softmax_cross_entropy(&Tensor::from_vec(vec![1000.0, 0.0]), 0).unwrap();
        assert!(r.loss.abs() < 1e-12);
        assert!(r.probs.is_finite() && r.grad_logits.is_finite());
        let r = softmax_cross_entropy(&Tensor::from_vec(vec![1000.0, 0.0]), 1).unwrap();
        assert!((r.loss - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn residual_rules() {
        let a = Tensor::from_vec(vec![1.0, -2.0, 0.5]);
        let b = Tensor::from_vec(vec![0.3, 0.7, -1.1]);
        assert_eq!(residual_add(&a, &Tensor::zeros(&[3])).unwrap(), a);
        assert_eq!(residual_add(&a, &b).unwrap(), residual_add(&b, &a).unwrap());
        let (ga, gb) = residual_backward(&b);
        assert_eq!(ga, b);
        assert_eq!(gb, b);
        assert!(residual_add(&a, &Tensor::zeros(&[2])).is_err());
    }
}

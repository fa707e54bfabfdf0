use super::ncl;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean over the time axis: `[C, L] -> [C]`, `[N, C, L] -> [N, C]`.
pub fn global_average_pool(input: &Tensor) -> Result<Tensor> {
    let (n, c, l) = ncl(input)?;
    if l == 0 {
        return Err(Error::shape("global average pool over an empty series"));
    }
    let data = input.data().chunks(l).map(|row| row.iter().sum::<f64>() / l as f64).collect();
    let shape = if input.rank() == 2 { vec![c] } else { vec![n, c] };
    Tensor::new(shape, data)
}

/// Spreads each pooled gradient uniformly as `grad / L`.
pub fn global_average_pool_backward(grad_out: &Tensor, input_shape: &[usize]) -> Result<Tensor> {
    let l = *input_shape.last().unwrap_or(&0);
    let expected: usize = input_shape[..input_shape.len().saturating_sub(1)].iter().product();
    if l == 0 || grad_out.len() != expected {
        return Err(Error::shape(format!("pool grad {:?} does not match input {input_shape:?}", grad_out.shape())));
    }
    let mut data = Vec::with_capacity(expected * l);
    for g in grad_out.data() {
        data.extend(std::iter::repeat_n(g / l as f64, l));
    }
    Tensor::new(input_shape.to_vec(), data)
}

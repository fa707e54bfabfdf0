//! Central finite differences against the analytic backward passes.
//!
//! Each layer is checked through the scalar `sum(r * f(x))` for a random
//! projection `r`, so the analytic gradient is the backward pass fed `r`.
//! Errors are norm-wise: `|a - n| / max(|a|, |n|)`.

use dtlids::network::build_presnet;
use dtlids::ops::{
    batchnorm, batchnorm_backward, batchnorm_infer, conv1d, conv1d_backward, dense, dense_backward,
    global_average_pool, global_average_pool_backward, relu, relu_backward, softmax_cross_entropy, BatchNormParams,
    BnMode,
};
use dtlids::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;

pub fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(n).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(n));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn project(r: &Tensor, y: &Tensor) -> f64 {
    r.data().iter().zip(y.data()).map(|(a, b)| a * b).sum()
}

/// Numeric gradient of `f` with respect to every entry of `x`.
fn numeric(x: &Tensor, f: &dyn Fn(&Tensor) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut p = x.clone();
            p.data_mut()[i] += STEP;
            let mut m = x.clone();
            m.data_mut()[i] -= STEP;
            (f(&p) - f(&m)) / (2.0 * STEP)
        })
        .collect()
}

/// Worst norm-wise error per layer kernel for one seed.
pub fn layer_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    // Conv with odd and even kernels (even kernels pad asymmetrically).
    let mut conv = 0.0f64;
    for k in [1, 3, 4, 8] {
        let x = random(&mut rng, &[2, 3, 9]);
        let w = random(&mut rng, &[4, 3, k]);
        let b = random(&mut rng, &[4]);
        let r = random(&mut rng, &[2, 4, 9]);
        let g = conv1d_backward(&r, &x, &w).unwrap();
        conv = conv.max(rel_err(g.input.data(), &numeric(&x, &|x| project(&r, &conv1d(x, &w, &b).unwrap()))));
        conv = conv.max(rel_err(g.weight.data(), &numeric(&w, &|w| project(&r, &conv1d(&x, w, &b).unwrap()))));
        conv = conv.max(rel_err(g.bias.data(), &numeric(&b, &|b| project(&r, &conv1d(&x, &w, b).unwrap()))));
    }
    out.push(("conv1d", conv));

    let x = random(&mut rng, &[5, 7]);
    let w = random(&mut rng, &[3, 7]);
    let b = random(&mut rng, &[3]);
    let r = random(&mut rng, &[5, 3]);
    let g = dense_backward(&r, &x, &w).unwrap();
    let e = rel_err(g.input.data(), &numeric(&x, &|x| project(&r, &dense(x, &w, &b).unwrap())))
        .max(rel_err(g.weight.data(), &numeric(&w, &|w| project(&r, &dense(&x, w, &b).unwrap()))))
        .max(rel_err(g.bias.data(), &numeric(&b, &|b| project(&r, &dense(&x, &w, b).unwrap()))));
    out.push(("dense", e));

    // Batch-norm in both modes; train mode couples every position of a channel.
    let x = random(&mut rng, &[3, 4, 6]);
    let mut params = BatchNormParams::new(4);
    params.gamma = random(&mut rng, &[4]);
    params.beta = random(&mut rng, &[4]);
    params.running_mean = random(&mut rng, &[4]);
    params.running_var = Tensor::new(vec![4], (0..4).map(|_| rng.random_range(0.5..2.0)).collect()).unwrap();
    let r = random(&mut rng, &[3, 4, 6]);
    for (name, mode) in [("batchnorm_train", BnMode::Train), ("batchnorm_infer", BnMode::Infer)] {
        let run = |x: &Tensor, gamma: &Tensor, beta: &Tensor| {
            let mut p = params.clone();
            p.gamma = gamma.clone();
            p.beta = beta.clone();
            match mode {
                BnMode::Train => batchnorm(x, &mut p, mode).unwrap().0,
                BnMode::Infer => batchnorm_infer(x, &p).unwrap(),
            }
        };
        let mut p = params.clone();
        let (_, cache) = batchnorm(&x, &mut p, mode).unwrap();
        let g = batchnorm_backward(&r, &cache, &params).unwrap();
        let e = rel_err(g.input.data(), &numeric(&x, &|x| project(&r, &run(x, &params.gamma, &params.beta))))
            .max(rel_err(g.gamma.data(), &numeric(&params.gamma, &|gm| project(&r, &run(&x, gm, &params.beta)))))
            .max(rel_err(g.beta.data(), &numeric(&params.beta, &|bt| project(&r, &run(&x, &params.gamma, bt)))));
        out.push((name, e));
    }

    // ReLU away from its kink.
    let mut x = random(&mut rng, &[2, 3, 5]);
    x.data_mut().iter_mut().for_each(|v| {
        if v.abs() < 0.05 {
            *v += 0.1;
        }
    });
    let r = random(&mut rng, &[2, 3, 5]);
    let g = relu_backward(&r, &x).unwrap();
    out.push(("relu", rel_err(g.data(), &numeric(&x, &|x| project(&r, &relu(x))))));

    let x = random(&mut rng, &[2, 3, 5]);
    let r = random(&mut rng, &[2, 3]);
    let g = global_average_pool_backward(&r, x.shape()).unwrap();
    out.push(("gap", rel_err(g.data(), &numeric(&x, &|x| project(&r, &global_average_pool(x).unwrap())))));

    let z = random(&mut rng, &[4]).scale(3.0);
    let label = rng.random_range(0..4);
    let g = softmax_cross_entropy(&z, label).unwrap();
    out.push((
        "softmax_xent",
        rel_err(g.grad_logits.data(), &numeric(&z, &|z| softmax_cross_entropy(z, label).unwrap().loss)),
    ));
    out
}

/// Central difference of `f` along one coordinate that is stable across
/// step sizes. Where two consecutive steps disagree, a ReLU kink lies
/// within the larger step; the next smaller pair is tried. `None` means the
/// coordinate sits on a kink at every step. The analytic gradient plays no
/// part in the choice.
pub fn stable_difference(f: &mut dyn FnMut(f64) -> f64) -> Option<f64> {
    const STEPS: [f64; 3] = [1e-5, 1e-6, 1e-7];
    let agree = |a: f64, b: f64| (a - b).abs() <= 1e-8 + 1e-6 * a.abs().max(b.abs());
    let mut prev = (f(STEPS[0]) - f(-STEPS[0])) / (2.0 * STEPS[0]);
    for &h in &STEPS[1..] {
        let next = (f(h) - f(-h)) / (2.0 * h);
        if agree(prev, next) {
            return Some(prev);
        }
        prev = next;
    }
    None
}

/// End-to-end check of a toy P-ResNet (window 10, 2 channels, 2 classes,
/// batch of 4, batch-norm in training mode): `coords` sampled parameter
/// entries plus the whole input gradient. Returns the norm-wise error and
/// the number of entries skipped as lying on a kink.
pub fn presnet_error(seed: u64, coords: usize) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    let mut net = build_presnet(2, 10, 2, seed).unwrap();
    let x = random(&mut rng, &[4, 2, 10]);
    let labels: Vec<usize> = (0..4).map(|i| i % 2).collect();
    let loss_of = |net: &mut dtlids::Network, x: &Tensor| net.loss_and_backward(x, &labels, None).unwrap().loss;

    let probs = net.forward_train(&x).unwrap();
    let (grad, _) = dtlids::network::cross_entropy_grad(&probs, &labels, None).unwrap();
    let input_grad = net.backward(&grad).unwrap();

    let mut grads: Vec<Vec<f64>> = Vec::new();
    net.visit_params_mut(&mut |s| grads.push(s.grad.map(|g| g.data().to_vec()).unwrap_or_default()));
    let trainable: Vec<usize> = (0..grads.len()).filter(|&i| !grads[i].is_empty()).collect();

    let nudge = |net: &mut dtlids::Network, slot: usize, entry: usize, delta: f64| {
        let mut i = 0;
        net.visit_params_mut(&mut |s| {
            if i == slot {
                s.value.data_mut()[entry] += delta;
            }
            i += 1;
        });
    };
    let (mut analytic, mut numeric_g, mut skipped) = (Vec::new(), Vec::new(), 0);
    for _ in 0..coords {
        let slot = trainable[rng.random_range(0..trainable.len())];
        let entry = rng.random_range(0..grads[slot].len());
        let mut f = |h: f64| {
            let mut p = net.clone();
            nudge(&mut p, slot, entry, h);
            loss_of(&mut p, &x)
        };
        match stable_difference(&mut f) {
            Some(n) => {
                analytic.push(grads[slot][entry]);
                numeric_g.push(n);
            }
            None => skipped += 1,
        }
    }
    for i in 0..x.len() {
        let mut f = |h: f64| {
            let mut xi = x.clone();
            xi.data_mut()[i] += h;
            loss_of(&mut net.clone(), &xi)
        };
        match stable_difference(&mut f) {
            Some(n) => {
                analytic.push(input_grad.data()[i]);
                numeric_g.push(n);
            }
            None => skipped += 1,
        }
    }
    (rel_err(&analytic, &numeric_g), skipped)
}

use super::spec::{ArchKind, Architecture, LayerSpec};
use super::Network;
use crate::error::{Error, Result};
use crate::ops::{DEFAULT_BN_EPSILON, DEFAULT_BN_MOMENTUM};

/// `(filters, kernel length)` of the four feature smoothing blocks.
pub const FSL_BLOCKS: [(usize, usize); 4] = [(64, 8), (128, 8), (256, 5), (128, 3)];

/// Hidden layers per stack; each is one residual FSL block.
pub const HIDDEN_LAYERS: usize = FSL_BLOCKS.len();

/// Width of the dense layer between the concatenated branch features and
/// the softmax layer of the multi-channel network.
pub const MULTI_HEAD_UNITS: usize = 128;

const MLP_UNITS: usize = 500;
const FCN_BLOCKS: [(usize, usize); 3] = [(128, 8), (256, 5), (128, 3)];

fn largest_kernel() -> usize {
    FSL_BLOCKS.iter().map(|b| b.1).max().unwrap_or(1)
}

fn batchnorm(channels: usize) -> LayerSpec {
    LayerSpec::BatchNorm { channels, epsilon: DEFAULT_BN_EPSILON, momentum: DEFAULT_BN_MOMENTUM }
}

/// conv -> batch-norm, wrapped in a skip connection, then ReLU.
fn fsl_block(in_channels: usize, filters: usize, kernel: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Residual {
            body: vec![LayerSpec::Conv1d { in_channels, filters, kernel }, batchnorm(filters)],
            projection: (in_channels != filters).then_some((in_channels, filters)),
        },
        LayerSpec::Relu,
    ]
}

fn hidden_stack(in_channels: usize) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    let mut c = in_channels;
    for (filters, kernel) in FSL_BLOCKS {
        layers.extend(fsl_block(c, filters, kernel));
        c = filters;
    }
    layers
}

fn last_filters() -> usize {
    FSL_BLOCKS[FSL_BLOCKS.len() - 1].0
}

fn softmax_head(inputs: usize, classes: usize) -> [LayerSpec; 2] {
    [LayerSpec::Dense { inputs, units: classes }, LayerSpec::Softmax]
}

fn check_common(channels: usize, window: usize, classes: usize) -> Result<()> {
    if channels == 0 {
        return Err(Error::config("network needs at least one input channel"));
    }
    if window < largest_kernel() {
        return Err(Error::config(format!(
            "window {window} is shorter than the largest kernel ({})",
            largest_kernel()
        )));
    }
    if classes < 2 {
        return Err(Error::config("network needs at least two classes"));
    }
    Ok(())
}

/// Four residual FSL blocks, global average pooling and a softmax layer.
pub fn build_presnet(channels: usize, window: usize, classes: usize, seed: u64) -> Result<Network> {
    check_common(channels, window, classes)?;
    let mut layers = hidden_stack(channels);
    layers.push(LayerSpec::Gap);
    layers.extend(softmax_head(last_filters(), classes));
    Network::new(Architecture { kind: ArchKind::Presnet, channels, window, classes, layers }, seed)
}

/// Input batch-norm followed by the P-ResNet stack on one channel.
pub fn build_single_channel_dnn(window: usize, classes: usize, seed: u64) -> Result<Network> {
    check_common(1, window, classes)?;
    let mut layers = vec![batchnorm(1)];
    layers.extend(hidden_stack(1));
    layers.push(LayerSpec::Gap);
    layers.extend(softmax_head(last_filters(), classes));
    Network::new(Architecture { kind: ArchKind::SingleChannel, channels: 1, window, classes, layers }, seed)
}

/// Input batch-norm, one single-channel branch per input channel, feature
/// concatenation, a dense ReLU layer and a softmax layer.
pub fn build_multi_channel_dnn(branches: usize, window: usize, classes: usize, seed: u64) -> Result<Network> {
    if branches == 0 {
        return Err(Error::config("multi-channel network needs at least one branch"));
    }
    check_common(branches, window, classes)?;
    let mut body = hidden_stack(1);
    body.push(LayerSpec::Gap);
    let concat = branches * last_filters();
    let mut layers = vec![
        batchnorm(branches),
        LayerSpec::Branches { count: branches, body },
        LayerSpec::Dense { inputs: concat, units: MULTI_HEAD_UNITS },
        LayerSpec::Relu,
    ];
    layers.extend(softmax_head(MULTI_HEAD_UNITS, classes));
    Network::new(Architecture { kind: ArchKind::MultiChannel, channels: branches, window, classes, layers }, seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineKind {
    Mlp,
    Fcn,
}

impl BaselineKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(BaselineKind::Mlp),
            "fcn" => Ok(BaselineKind::Fcn),
            other => Err(Error::config(format!("unknown baseline `{other}`"))),
        }
    }
}

/// MLP: flatten, three dense(500)+ReLU layers, softmax.
/// FCN: conv blocks (128,8), (256,5), (128,3) with batch-norm and ReLU, GAP, softmax.
pub fn build_baseline(
    kind: BaselineKind,
    channels: usize,
    window: usize,
    classes: usize,
    seed: u64,
) -> Result<Network> {
    if channels == 0 || window == 0 {
        return Err(Error::config("baseline needs a non-empty input geometry"));
    }
    if classes < 2 {
        return Err(Error::config("network needs at least two classes"));
    }
    let (arch_kind, layers) = match kind {
        BaselineKind::Mlp => {
            let mut layers = vec![LayerSpec::Flatten];
            let mut inputs = channels * window;
            for _ in 0..3 {
                layers.push(LayerSpec::Dense { inputs, units: MLP_UNITS });
                layers.push(LayerSpec::Relu);
                inputs = MLP_UNITS;
            }
            layers.extend(softmax_head(inputs, classes));
            (ArchKind::Mlp, layers)
        }
        BaselineKind::Fcn => {
            let mut layers = Vec::new();
            let mut c = channels;
            for (filters, kernel) in FCN_BLOCKS {
                layers.push(LayerSpec::Conv1d { in_channels: c, filters, kernel });
                layers.push(batchnorm(filters));
                layers.push(LayerSpec::Relu);
                c = filters;
            }
            layers.push(LayerSpec::Gap);
            layers.extend(softmax_head(c, classes));
            (ArchKind::Fcn, layers)
        }
    };
    Network::new(Architecture { kind: arch_kind, channels, window, classes, layers }, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    /// conv: C_out*C_in*K + C_out, bn: 4*C, dense: F_out*F + F_out.
    fn analytic_presnet(channels: usize, classes: usize) -> usize {
        let mut total = 0;
        let mut c = channels;
        for (f, k) in FSL_BLOCKS {
            total += f * c * k + f; // conv
            total += 4 * f; // batch-norm
            if c != f {
                total += f * c + f; // kernel-1 projection
            }
            c = f;
        }
        total + classes * c + classes
    }

    fn probs_ok(p: &Tensor, classes: usize) {
        for row in p.data().chunks(classes) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|v| *v >= 0.0 && v.is_finite()));
        }
    }

    #[test]
    fn presnet_outputs_probabilities() {
        let net = build_presnet(7, 10, 2, 1).unwrap();
        let x = Tensor::new(vec![3, 7, 10], (0..210).map(|i| (i as f64 * 0.3).sin()).collect()).unwrap();
        let p = net.predict(&x).unwrap();
        assert_eq!(p.shape(), &[3, 2]);
        probs_ok(&p, 2);
    }

    #[test]
    fn presnet_param_count_is_analytic() {
        for (channels, classes) in [(1, 2), (2, 2), (7, 2), (17, 9)] {
            let a = analytic_presnet(channels, classes);
            assert_eq!(build_presnet(channels, 10, classes, 3).unwrap().param_count(), a);
            assert_eq!(build_presnet(channels, 10, classes, 99).unwrap().param_count(), a);
        }
        // 2 channels, 2 classes: 406,274 values.
        assert_eq!(analytic_presnet(2, 2), 406_274);
    }

    #[test]
    fn short_window_is_config_error() {
        assert!(matches!(build_presnet(2, 7, 2, 0), Err(Error::Config(_))));
        assert!(matches!(build_multi_channel_dnn(0, 10, 2, 0), Err(Error::Config(_))));
        assert!(build_presnet(2, 8, 2, 0).is_ok());
    }

    #[test]
    fn single_channel_has_four_hidden_blocks() {
        let net = build_single_channel_dnn(10, 2, 5).unwrap();
        assert_eq!(net.hidden_blocks().len(), HIDDEN_LAYERS);
        assert_eq!(HIDDEN_LAYERS, 4);
        let x = Tensor::new(vec![2, 1, 10], (0..20).map(|i| i as f64).collect()).unwrap();
        probs_ok(&net.predict(&x).unwrap(), 2);
    }

    #[test]
    fn multi_channel_geometry() {
        let net = build_multi_channel_dnn(3, 10, 2, 5).unwrap();
        let x = Tensor::new(vec![2, 3, 10], (0..60).map(|i| (i as f64).cos()).collect()).unwrap();
        assert_eq!(net.embed(&x).unwrap().shape(), &[2, 3 * 128]);
        probs_ok(&net.predict(&x).unwrap(), 2);

        // Branch stacks are shape-identical to the single-channel hidden stack.
        let single = build_single_channel_dnn(10, 2, 5).unwrap();
        let mut multi = net.clone();
        let reference: Vec<Vec<usize>> = single
            .named_tensors()
            .iter()
            .filter(|(n, _)| n.contains(".residual."))
            .map(|(_, t)| t.shape().to_vec())
            .collect();
        for branch in multi.branch_blocks_mut() {
            assert_eq!(branch.len(), HIDDEN_LAYERS);
        }
        let branch0: Vec<Vec<usize>> = net
            .named_tensors()
            .iter()
            .filter(|(n, _)| n.contains(".branch0."))
            .map(|(_, t)| t.shape().to_vec())
            .collect();
        assert_eq!(branch0, reference);
    }

    #[test]
    fn baselines() {
        let x = Tensor::new(vec![2, 4, 10], (0..80).map(|i| (i as f64 * 0.1).sin()).collect()).unwrap();
        let mlp = build_baseline(BaselineKind::Mlp, 4, 10, 2, 1).unwrap();
        let fcn = build_baseline(BaselineKind::Fcn, 4, 10, 2, 1).unwrap();
        probs_ok(&mlp.predict(&x).unwrap(), 2);
        probs_ok(&fcn.predict(&x).unwrap(), 2);
        assert!(!mlp.arch().layers.iter().any(|l| matches!(l, LayerSpec::Conv1d { .. })));
        let dense_count = fcn.arch().layers.iter().filter(|l| matches!(l, LayerSpec::Dense { .. })).count();
        assert_eq!(dense_count, 1, "only the softmax layer is dense");
        assert_eq!(mlp.param_count(), (40 * 500 + 500) + 2 * (500 * 500 + 500) + (500 * 2 + 2));
        assert!(BaselineKind::parse("lenet").is_err());
    }

    #[test]
    fn same_seed_same_params() {
        let a = build_presnet(2, 10, 2, 42).unwrap().named_tensors();
        let b = build_presnet(2, 10, 2, 42).unwrap().named_tensors();
        assert_eq!(a, b);
        let c = build_presnet(2, 10, 2, 43).unwrap().named_tensors();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_final_dense_gives_uniform_probabilities() {
        let mut net = build_presnet(2, 10, 3, 1).unwrap();
        let last = format!("{}.dense", net.arch().layers.len() - 2);
        net.visit_params_mut(&mut |slot| {
            if slot.name.starts_with(&last) {
                slot.value.fill(0.0);
            }
        });
        let x = Tensor::new(vec![1, 2, 10], (0..20).map(|i| i as f64).collect()).unwrap();
        for p in net.predict(&x).unwrap().data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn architecture_text_round_trip() {
        for net in [
            build_presnet(3, 12, 2, 0).unwrap(),
            build_multi_channel_dnn(2, 10, 2, 0).unwrap(),
            build_baseline(BaselineKind::Mlp, 2, 10, 3, 0).unwrap(),
        ] {
            let text = net.arch().to_text();
            let back = Architecture::from_text(&text).unwrap();
            assert_eq!(&back, net.arch());
            assert_eq!(back.param_count(), net.param_count());
        }
    }
}

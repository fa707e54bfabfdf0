//! Layer specifications and their canonical text form.
//!
//! The text form is what checkpoints embed, one layer per line:
//!
//! ```text
//! arch presnet
//! input 7 10
//! classes 2
//! residual_begin 7 64
//! conv1d 7 64 8
//! batchnorm 64 0.00001 0.9
//! residual_end
//! relu
//! ...
//! ```

use std::fmt::{self, Write as _};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArchKind {
    Presnet,
    SingleChannel,
    MultiChannel,
    Mlp,
    Fcn,
}

impl ArchKind {
    pub fn name(self) -> &'static str {
        match self {
            ArchKind::Presnet => "presnet",
            ArchKind::SingleChannel => "single_channel",
            ArchKind::MultiChannel => "multi_channel",
            ArchKind::Mlp => "mlp",
            ArchKind::Fcn => "fcn",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "presnet" => ArchKind::Presnet,
            "single_channel" => ArchKind::SingleChannel,
            "multi_channel" => ArchKind::MultiChannel,
            "mlp" => ArchKind::Mlp,
            "fcn" => ArchKind::Fcn,
            other => return Err(Error::config(format!("unknown architecture `{other}`"))),
        })
    }
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    Conv1d {
        in_channels: usize,
        filters: usize,
        kernel: usize,
    },
    BatchNorm {
        channels: usize,
        epsilon: f64,
        momentum: f64,
    },
    Relu,
    /// Global average pooling over time.
    Gap,
    Flatten,
    Dense {
        inputs: usize,
        units: usize,
    },
    Softmax,
    /// `body(x) + shortcut(x)`; the shortcut is a kernel-1 convolution
    /// `(in, out)` when the body changes the channel count.
    Residual {
        body: Vec<LayerSpec>,
        projection: Option<(usize, usize)>,
    },
    /// Splits the input channels, runs `body` on each single channel and
    /// concatenates the per-branch feature vectors.
    Branches {
        count: usize,
        body: Vec<LayerSpec>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub kind: ArchKind,
    pub channels: usize,
    pub window: usize,
    pub classes: usize,
    pub layers: Vec<LayerSpec>,
}

/// Shape of one sample flowing between layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Flow {
    Series { channels: usize, len: usize },
    Features(usize),
    Probs(usize),
}

impl LayerSpec {
    /// Number of stored values, running statistics included.
    pub fn param_count(&self) -> usize {
        match self {
            LayerSpec::Conv1d { in_channels, filters, kernel } => filters * in_channels * kernel + filters,
            LayerSpec::BatchNorm { channels, .. } => 4 * channels,
            LayerSpec::Dense { inputs, units } => units * inputs + units,
            LayerSpec::Residual { body, projection } => {
                body.iter().map(LayerSpec::param_count).sum::<usize>() + projection.map_or(0, |(i, o)| o * i + o)
            }
            LayerSpec::Branches { count, body } => count * body.iter().map(LayerSpec::param_count).sum::<usize>(),
            LayerSpec::Relu | LayerSpec::Gap | LayerSpec::Flatten | LayerSpec::Softmax => 0,
        }
    }

    fn flow(&self, input: Flow) -> Result<Flow> {
        let bad = |what: &str| Err(Error::shape(format!("{what} cannot follow {input:?}")));
        match (self, input) {
            (LayerSpec::Conv1d { in_channels, filters, .. }, Flow::Series { channels, len }) => {
                if *in_channels != channels {
                    return Err(Error::shape(format!("conv1d expects {in_channels} channels, receives {channels}")));
                }
                Ok(Flow::Series { channels: *filters, len })
            }
            (LayerSpec::BatchNorm { channels: c, .. }, Flow::Series { channels, .. }) => {
                if *c != channels {
                    return Err(Error::shape(format!("batchnorm has {c} channels, receives {channels}")));
                }
                Ok(input)
            }
            (LayerSpec::Relu, Flow::Series { .. } | Flow::Features(_)) => Ok(input),
            (LayerSpec::Gap, Flow::Series { channels, .. }) => Ok(Flow::Features(channels)),
            (LayerSpec::Flatten, Flow::Series { channels, len }) => Ok(Flow::Features(channels * len)),
            (LayerSpec::Dense { inputs, units }, Flow::Features(f)) => {
                if *inputs != f {
                    return Err(Error::shape(format!("dense expects {inputs} features, receives {f}")));
                }
                Ok(Flow::Features(*units))
            }
            (LayerSpec::Softmax, Flow::Features(f)) => Ok(Flow::Probs(f)),
            (LayerSpec::Residual { body, projection }, Flow::Series { channels, len }) => {
                let out = flow_all(body, input)?;
                let Flow::Series { channels: out_c, len: out_l } = out else {
                    return bad("residual body that leaves the series domain");
                };
                if out_l != len {
                    return Err(Error::shape("residual body changed the series length"));
                }
                match projection {
                    None if out_c == channels => Ok(out),
                    Some((i, o)) if *i == channels && *o == out_c => Ok(out),
                    _ => Err(Error::shape(format!(
                        "residual shortcut {projection:?} does not map {channels} -> {out_c} channels"
                    ))),
                }
            }
            (LayerSpec::Branches { count, body }, Flow::Series { channels, len }) => {
                if *count != channels {
                    return Err(Error::shape(format!("{count} branches for {channels} channels")));
                }
                match flow_all(body, Flow::Series { channels: 1, len })? {
                    Flow::Features(f) => Ok(Flow::Features(f * count)),
                    other => Err(Error::shape(format!("branch body must end in features, got {other:?}"))),
                }
            }
            (LayerSpec::Conv1d { .. }, _) => bad("conv1d"),
            (LayerSpec::BatchNorm { .. }, _) => bad("batchnorm"),
            (LayerSpec::Relu, _) => bad("relu"),
            (LayerSpec::Gap, _) => bad("gap"),
            (LayerSpec::Flatten, _) => bad("flatten"),
            (LayerSpec::Dense { .. }, _) => bad("dense"),
            (LayerSpec::Softmax, _) => bad("softmax"),
            (LayerSpec::Residual { .. }, _) => bad("residual"),
            (LayerSpec::Branches { .. }, _) => bad("branches"),
        }
    }
}

fn flow_all(layers: &[LayerSpec], mut flow: Flow) -> Result<Flow> {
    for layer in layers {
        flow = layer.flow(flow)?;
    }
    Ok(flow)
}

impl Architecture {
    /// Checks shape compatibility end to end; the last layer must be a
    /// softmax over `classes`.
    pub fn validate(&self) -> Result<()> {
        let out = flow_all(&self.layers, Flow::Series { channels: self.channels, len: self.window })?;
        match out {
            Flow::Probs(c) if c == self.classes => Ok(()),
            other => {
                Err(Error::shape(format!("network ends in {other:?}, expected {} class probabilities", self.classes)))
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "arch {}", self.kind);
        let _ = writeln!(out, "input {} {}", self.channels, self.window);
        let _ = writeln!(out, "classes {}", self.classes);
        write_layers(&mut out, &self.layers);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let mut header = |key: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| Error::Format(format!("architecture text is missing `{key}`")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(Error::Format(format!("expected `{key}`, found `{line}`")));
            }
            Ok(parts.map(str::to_owned).collect())
        };
        let kind = ArchKind::parse(header("arch")?.first().map(String::as_str).unwrap_or(""))
            .map_err(|e| Error::Format(e.to_string()))?;
        let input = header("input")?;
        let classes = header("classes")?;
        if input.len() != 2 || classes.len() != 1 {
            return Err(Error::Format("malformed input/classes header".into()));
        }
        let channels = parse_usize(&input[0])?;
        let window = parse_usize(&input[1])?;
        let classes = parse_usize(&classes[0])?;
        let rest: Vec<&str> = lines.collect();
        let mut pos = 0;
        let layers = parse_layers(&rest, &mut pos, None)?;
        if pos != rest.len() {
            return Err(Error::Format(format!("unexpected line `{}`", rest[pos])));
        }
        let arch = Architecture { kind, channels, window, classes, layers };
        arch.validate().map_err(|e| Error::Format(e.to_string()))?;
        Ok(arch)
    }
}

fn write_layers(out: &mut String, layers: &[LayerSpec]) {
    for layer in layers {
        match layer {
            LayerSpec::Conv1d { in_channels, filters, kernel } => {
                let _ = writeln!(out, "conv1d {in_channels} {filters} {kernel}");
            }
            LayerSpec::BatchNorm { channels, epsilon, momentum } => {
                let _ = writeln!(out, "batchnorm {channels} {epsilon:?} {momentum:?}");
            }
            LayerSpec::Relu => out.push_str("relu\n"),
            LayerSpec::Gap => out.push_str("gap\n"),
            LayerSpec::Flatten => out.push_str("flatten\n"),
            LayerSpec::Dense { inputs, units } => {
                let _ = writeln!(out, "dense {inputs} {units}");
            }
            LayerSpec::Softmax => out.push_str("softmax\n"),
            LayerSpec::Residual { body, projection } => {
                match projection {
                    Some((i, o)) => {
                        let _ = writeln!(out, "residual_begin {i} {o}");
                    }
                    None => out.push_str("residual_begin\n"),
                }
                write_layers(out, body);
                out.push_str("residual_end\n");
            }
            LayerSpec::Branches { count, body } => {
                let _ = writeln!(out, "branches_begin {count}");
                write_layers(out, body);
                out.push_str("branches_end\n");
            }
        }
    }
}

fn parse_usize(s: &str) -> Result<usize> {
    s.parse().map_err(|_| Error::Format(format!("expected an integer, found `{s}`")))
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Format(format!("expected a number, found `{s}`")))
}

fn parse_layers(lines: &[&str], pos: &mut usize, closing: Option<&str>) -> Result<Vec<LayerSpec>> {
    let mut layers = Vec::new();
    while *pos < lines.len() {
        let line = lines[*pos];
        let parts: Vec<&str> = line.split_whitespace().collect();
        *pos += 1;
        let args = &parts[1..];
        let need = |n: usize| -> Result<()> {
            if args.len() != n {
                return Err(Error::Format(format!("`{line}` expects {n} arguments")));
            }
            Ok(())
        };
        let layer = match parts[0] {
            end if Some(end) == closing => return Ok(layers),
            "conv1d" => {
                need(3)?;
                LayerSpec::Conv1d {
                    in_channels: parse_usize(args[0])?,
                    filters: parse_usize(args[1])?,
                    kernel: parse_usize(args[2])?,
                }
            }
            "batchnorm" => {
                need(3)?;
                LayerSpec::BatchNorm {
                    channels: parse_usize(args[0])?,
                    epsilon: parse_f64(args[1])?,
                    momentum: parse_f64(args[2])?,
                }
            }
            "relu" => LayerSpec::Relu,
            "gap" => LayerSpec::Gap,
            "flatten" => LayerSpec::Flatten,
            "softmax" => LayerSpec::Softmax,
            "dense" => {
                need(2)?;
                LayerSpec::Dense { inputs: parse_usize(args[0])?, units: parse_usize(args[1])? }
            }
            "residual_begin" => {
                let projection = match args.len() {
                    0 => None,
                    2 => Some((parse_usize(args[0])?, parse_usize(args[1])?)),
                    _ => return Err(Error::Format(format!("malformed `{line}`"))),
                };
                let body = parse_layers(lines, pos, Some("residual_end"))?;
                LayerSpec::Residual { body, projection }
            }
            "branches_begin" => {
                need(1)?;
                let count = parse_usize(args[0])?;
                let body = parse_layers(lines, pos, Some("branches_end"))?;
                LayerSpec::Branches { count, body }
            }
            other => return Err(Error::Format(format!("unknown layer `{other}`"))),
        };
        layers.push(layer);
    }
    match closing {
        Some(end) => Err(Error::Format(format!("missing `{end}`"))),
        None => Ok(layers),
    }
}

//! Residual generator and patch discriminator.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Scalar, Tensor, Var};
use crate::error::{Error, Result};

const NORM_EPS: f64 = 1e-5;
const LEAKY_SLOPE: f64 = 0.2;
const INIT_STD: f32 = 0.02;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSpec {
    /// Generator base width (channels after the stem).
    pub gen_width: usize,
    pub n_res_blocks: usize,
    /// Number of stride-2 downsampling convolutions (mirrored on the way up).
    pub n_down: usize,
    pub disc_width: usize,
    pub disc_layers: usize,
    /// Image-domain channels.
    pub c_x: usize,
    /// Label-domain channels.
    pub c_y: usize,
}

impl NetSpec {
    pub fn desk(c_y: usize) -> Self {
        Self {
            gen_width: 16,
            n_res_blocks: 4,
            n_down: 2,
            disc_width: 16,
            disc_layers: 3,
            c_x: 3,
            c_y,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_res_blocks == 0 {
            return Err(Error::Config("n_res_blocks must be >= 1".into()));
        }
        if self.gen_width == 0 || self.disc_width == 0 || self.disc_layers == 0 {
            return Err(Error::Config("network widths and disc_layers must be >= 1".into()));
        }
        if self.c_x == 0 || self.c_y == 0 {
            return Err(Error::Config("channel counts must be >= 1".into()));
        }
        Ok(())
    }

    /// Spatial sizes must be divisible by this for the generator to
    /// preserve them.
    pub fn size_multiple(&self) -> usize {
        1 << self.n_down
    }
}

/// Named parameter tensors of one network, in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
}

impl ParamSet {
    fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    fn push(&mut self, name: String, t: Tensor) {
        self.names.push(name);
        self.tensors.push(t);
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Places every tensor on `graph` as a leaf.
    pub fn attach<T: Scalar>(&self, graph: &mut Graph<T>, requires_grad: bool) -> Vec<Var> {
        self.tensors.iter().map(|t| graph.leaf(t.cast(), requires_grad)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Layer {
    Conv {
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
    },
    ConvT {
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
    },
    Norm {
        c: usize,
    },
    Relu,
    Leaky,
    Tanh,
    ResStart,
    ResEnd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NetKind {
    Generator,
    Discriminator,
}

/// A network layout; parameters live separately in a [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub kind: NetKind,
    pub c_in: usize,
    pub c_out: usize,
    layers: Vec<Layer>,
}

impl Network {
    /// Stem conv, `n_down` stride-2 convs, residual blocks, `n_down`
    /// transposed convs, output conv with tanh.
    pub fn generator(spec: &NetSpec, c_in: usize, c_out: usize) -> Self {
        use Layer::*;
        let w = spec.gen_width;
        let mut layers = vec![
            Conv {
                c_in,
                c_out: w,
                k: 7,
                stride: 1,
                pad: 3,
            },
            Norm { c: w },
            Relu,
        ];
        let mut ch = w;
        for _ in 0..spec.n_down {
            layers.extend([
                Conv {
                    c_in: ch,
                    c_out: ch * 2,
                    k: 3,
                    stride: 2,
                    pad: 1,
                },
                Norm { c: ch * 2 },
                Relu,
            ]);
            ch *= 2;
        }
        for _ in 0..spec.n_res_blocks {
            let conv = Conv {
                c_in: ch,
                c_out: ch,
                k: 3,
                stride: 1,
                pad: 1,
            };
            layers.extend([ResStart, conv, Norm { c: ch }, Relu, conv, Norm { c: ch }, ResEnd]);
        }
        for _ in 0..spec.n_down {
            layers.extend([
                ConvT {
                    c_in: ch,
                    c_out: ch / 2,
                    k: 4,
                    stride: 2,
                    pad: 1,
                },
                Norm { c: ch / 2 },
                Relu,
            ]);
            ch /= 2;
        }
        layers.extend([
            Conv {
                c_in: ch,
                c_out,
                k: 7,
                stride: 1,
                pad: 3,
            },
            Tanh,
        ]);
        Self {
            kind: NetKind::Generator,
            c_in,
            c_out,
            layers,
        }
    }

    /// Patch discriminator: `disc_layers` stride-2 convs, one stride-1
    /// conv, and a 1-channel output map of raw scores.
    pub fn discriminator(spec: &NetSpec, c_in: usize) -> Self {
        use Layer::*;
        let f = spec.disc_width;
        let mut layers = vec![
            Conv {
                c_in,
                c_out: f,
                k: 4,
                stride: 2,
                pad: 1,
            },
            Leaky,
        ];
        let mut ch = f;
        for n in 1..=spec.disc_layers {
            let next = f * (1 << n.min(3));
            let stride = if n < spec.disc_layers { 2 } else { 1 };
            layers.extend([
                Conv {
                    c_in: ch,
                    c_out: next,
                    k: 4,
                    stride,
                    pad: 1,
                },
                Norm { c: next },
                Leaky,
            ]);
            ch = next;
        }
        layers.push(Conv {
            c_in: ch,
            c_out: 1,
            k: 4,
            stride: 1,
            pad: 1,
        });
        Self {
            kind: NetKind::Discriminator,
            c_in,
            c_out: 1,
            layers,
        }
    }

    /// Fresh parameters: conv weights ~ N(0, 0.02^2), zero biases, unit
    /// norm gains.
    pub fn init_params(&self, rng: &mut impl Rng) -> ParamSet {
        let normal = Normal::new(0.0f32, INIT_STD).expect("valid std");
        let mut params = ParamSet::new();
        let mut idx = 0;
        for layer in &self.layers {
            match *layer {
                Layer::Conv { c_in, c_out, k, .. } | Layer::ConvT { c_in, c_out, k, .. } => {
                    let shape = match layer {
                        Layer::Conv { .. } => [c_out, c_in, k, k],
                        _ => [c_in, c_out, k, k],
                    };
                    let w = Tensor::from_fn(shape, |_| normal.sample(rng));
                    params.push(format!("l{idx:02}.weight"), w);
                    params.push(format!("l{idx:02}.bias"), Tensor::zeros([1, c_out, 1, 1]));
                }
                Layer::Norm { c } => {
                    params.push(format!("l{idx:02}.gain"), Tensor::full([1, c, 1, 1], 1.0));
                    params.push(format!("l{idx:02}.offset"), Tensor::zeros([1, c, 1, 1]));
                }
                _ => {}
            }
            idx += 1;
        }
        params
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Conv { .. } | Layer::ConvT { .. } | Layer::Norm { .. } => 2,
                _ => 0,
            })
            .sum()
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, params: &[Var], input: Var) -> Result<Var> {
        if params.len() != self.param_count() {
            return Err(Error::shape(
                "network",
                format!("expected {} parameter tensors, got {}", self.param_count(), params.len()),
            ));
        }
        let channels = g.value(input).shape()[1];
        if channels != self.c_in {
            return Err(Error::shape(
                "network",
                format!("{:?} expects {} input channels, got {channels}", self.kind, self.c_in),
            ));
        }
        let mut p = params.iter().copied();
        let mut next = || p.next().expect("param count checked");
        let mut x = input;
        let mut skip = Vec::new();
        for layer in &self.layers {
            x = match *layer {
                Layer::Conv { stride, pad, .. } => {
                    let (w, b) = (next(), next());
                    g.conv2d(x, w, b, stride, pad)?
                }
                Layer::ConvT { stride, pad, .. } => {
                    let (w, b) = (next(), next());
                    g.conv2d_transpose(x, w, b, stride, pad)?
                }
                Layer::Norm { .. } => {
                    let (gain, off) = (next(), next());
                    g.instance_norm(x, gain, off, NORM_EPS)?
                }
                Layer::Relu => g.relu(x)?,
                Layer::Leaky => g.leaky_relu(x, LEAKY_SLOPE)?,
                Layer::Tanh => g.tanh(x)?,
                Layer::ResStart => {
                    skip.push(x);
                    x
                }
                Layer::ResEnd => {
                    let s = skip.pop().expect("balanced residual block");
                    g.add(s, x)?
                }
            };
        }
        Ok(x)
    }
}

//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] is built fresh for every forward pass. Nodes are appended in
//! evaluation order, so the tape is always topologically sorted and
//! [`Graph::backward`] is a single reverse sweep.
//!
//! Gradient contract: `backward` *accumulates* into the stored gradient of
//! every `requires_grad` leaf. Calling it twice on the same loss without
//! [`Graph::zero_grad`] yields exactly twice the gradient.

use super::conv::{self, ConvPlan};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        plan: ConvPlan,
        cols: Vec<T>,
    },
    ConvTranspose2d {
        input: Var,
        weight: Var,
        bias: Var,
        plan: ConvPlan,
    },
    InstanceNorm {
        input: Var,
        gain: Var,
        offset: Var,
        normalized: Vec<T>,
        inv_std: Vec<T>,
    },
    Relu(Var),
    LeakyRelu(Var, T),
    Tanh(Var),
    Sigmoid(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Affine(Var, T),
    L1Mean(Var, Var),
    SquaredErrorMean(Var, T),
    Mean(Var),
    Sum(Var),
    LogClamped(Var, T),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    grad: Option<Tensor<T>>,
}

#[derive(Debug)]
pub struct Graph<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
    check_finite: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    /// Empty tape. Non-finite checks follow `debug_assertions`.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            check_finite: cfg!(debug_assertions),
        }
    }

    pub fn with_finite_checks(mut self, on: bool) -> Self {
        self.check_finite = on;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if `backward` reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<T>> {
        self.nodes[v.0].grad.take()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn push(&mut self, op_name: &'static str, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        if self.check_finite && !value.is_finite() {
            return Err(Error::NonFinite { op: op_name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn unary(&mut self, name: &'static str, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Result<Var> {
        let value = self.value(x).map(f);
        self.push(name, value, op, &[x])
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, stride: usize, padding: usize) -> Result<Var> {
        let plan = conv::plan_conv2d(
            self.value(input).shape(),
            self.value(weight).shape(),
            self.value(bias).shape(),
            stride,
            padding,
        )?;
        let (value, cols) = conv::conv2d_forward(self.value(input), self.value(weight), self.value(bias), &plan);
        let op = Op::Conv2d {
            input,
            weight,
            bias,
            plan,
            cols,
        };
        self.push("conv2d", value, op, &[input, weight, bias])
    }

    /// Transposed convolution; `weight` is `(C_in, C_out, k, k)`, so the
    /// same tensor serves as the adjoint of [`Graph::conv2d`].
    pub fn conv2d_transpose(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let plan = conv::plan_conv_transpose2d(
            self.value(input).shape(),
            self.value(weight).shape(),
            self.value(bias).shape(),
            stride,
            padding,
        )?;
        let value = conv::conv_transpose2d_forward(self.value(input), self.value(weight), self.value(bias), &plan);
        let op = Op::ConvTranspose2d {
            input,
            weight,
            bias,
            plan,
        };
        self.push("conv2d_transpose", value, op, &[input, weight, bias])
    }

    /// Per-(sample, channel) normalization followed by a per-channel affine.
    pub fn instance_norm(&mut self, input: Var, gain: Var, offset: Var, eps: f64) -> Result<Var> {
        let x = self.value(input);
        let [n, c, h, w] = x.shape();
        for (name, p) in [("gain", gain), ("offset", offset)] {
            if self.value(p).numel() != c {
                return Err(Error::shape(
                    "instance_norm",
                    format!("{name} has {} values for {c} channels", self.value(p).numel()),
                ));
            }
        }
        let hw = h * w;
        let mut normalized = vec![T::zero(); x.numel()];
        let mut inv_std = vec![T::zero(); n * c];
        let mut out = Tensor::zeros(x.shape());
        let (g, b) = (self.value(gain).data(), self.value(offset).data());
        for plane in 0..n * c {
            let ch = plane % c;
            let src = &x.data()[plane * hw..(plane + 1) * hw];
            let mean = src.iter().map(|v| v.as_f64()).sum::<f64>() / hw as f64;
            let var = src.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / hw as f64;
            let istd = 1.0 / (var + eps).sqrt();
            inv_std[plane] = T::from_f64_lossy(istd);
            let mean_t = T::from_f64_lossy(mean);
            let istd_t = inv_std[plane];
            let xn = &mut normalized[plane * hw..(plane + 1) * hw];
            let dst = &mut out.data_mut()[plane * hw..(plane + 1) * hw];
            for ((s, xh), d) in src.iter().zip(xn.iter_mut()).zip(dst.iter_mut()) {
                *xh = (*s - mean_t) * istd_t;
                *d = *xh * g[ch] + b[ch];
            }
        }
        let op = Op::InstanceNorm {
            input,
            gain,
            offset,
            normalized,
            inv_std,
        };
        self.push("instance_norm", out, op, &[input, gain, offset])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary("relu", x, |v| v.max(T::zero()), Op::Relu(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        let s = T::from_f64_lossy(slope);
        self.unary("leaky_relu", x, move |v| if v > T::zero() { v } else { v * s }, Op::LeakyRelu(x, s))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary("tanh", x, |v| v.tanh(), Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary("sigmoid", x, |v| T::one() / (T::one() + (-v).exp()), Op::Sigmoid(x))
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Result<Var> {
        let (s, b) = (T::from_f64_lossy(scale), T::from_f64_lossy(shift));
        self.unary("affine", x, move |v| v * s + b, Op::Affine(x, s))
    }

    /// `ln(max(x, floor))`; the gradient is zero where the floor is active.
    pub fn log_clamped(&mut self, x: Var, floor: f64) -> Result<Var> {
        let f = T::from_f64_lossy(floor);
        self.unary("log_clamped", x, move |v| v.max(f).ln(), Op::LogClamped(x, f))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| *x + *y).collect();
        let value = Tensor::new(self.value(a).shape(), data)?;
        self.push("add", value, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| *x - *y).collect();
        let value = Tensor::new(self.value(a).shape(), data)?;
        self.push("sub", value, Op::Sub(a, b), &[a, b])
    }

    /// Mean absolute difference over all elements.
    pub fn l1_mean(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("l1_mean", a, b)?;
        let n = self.value(a).numel() as f64;
        let total: f64 = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| (x.as_f64() - y.as_f64()).abs())
            .sum();
        let value = Tensor::scalar(T::from_f64_lossy(total / n));
        self.push("l1_mean", value, Op::L1Mean(a, b), &[a, b])
    }

    /// Mean of `(x - target)^2` against a constant target.
    pub fn squared_error_mean(&mut self, x: Var, target: f64) -> Result<Var> {
        let n = self.value(x).numel() as f64;
        let total: f64 = self.value(x).data().iter().map(|v| (v.as_f64() - target).powi(2)).sum();
        let value = Tensor::scalar(T::from_f64_lossy(total / n));
        self.push("squared_error_mean", value, Op::SquaredErrorMean(x, T::from_f64_lossy(target)), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let value = Tensor::scalar(T::from_f64_lossy(v.sum_f64() / v.numel() as f64));
        self.push("mean", value, Op::Mean(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let value = Tensor::scalar(T::from_f64_lossy(self.value(x).sum_f64()));
        self.push("sum", value, Op::Sum(x), &[x])
    }

    /// Sums any number of same-shape nodes.
    pub fn add_all(&mut self, terms: &[Var]) -> Result<Var> {
        let (&first, rest) = terms
            .split_first()
            .ok_or_else(|| Error::shape("add_all", "no terms"))?;
        rest.iter().try_fold(first, |acc, &t| self.add(acc, t))
    }

    /// Reverse sweep from a scalar `loss`, accumulating into leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.value(loss).shape();
        if !self.value(loss).is_scalar() {
            return Err(Error::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(shape, T::one()));
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            if matches!(self.nodes[id].op, Op::Leaf) {
                let slot = &mut self.nodes[id].grad;
                match slot {
                    Some(acc) => acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += *b),
                    None => *slot = Some(g),
                }
                continue;
            }
            for (input, contrib) in self.local_grads(id, &g) {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.data_mut().iter_mut().zip(contrib.data()).for_each(|(a, b)| *a += *b),
                    slot @ None => *slot = Some(contrib),
                }
            }
        }
        Ok(())
    }

    fn local_grads(&self, id: usize, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
        let node = &self.nodes[id];
        let out = &node.value;
        let zip_map = |x: Var, f: &dyn Fn(T, T, T) -> T| -> Tensor<T> {
            let xv = self.value(x);
            let data = g
                .data()
                .iter()
                .zip(xv.data())
                .zip(out.data())
                .map(|((&gi, &xi), &yi)| f(gi, xi, yi))
                .collect();
            Tensor::new(xv.shape(), data).expect("same shape")
        };
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::Conv2d {
                input,
                weight,
                bias,
                plan,
                cols,
            } => {
                let gr = conv::conv2d_backward(
                    g,
                    self.value(*input).shape(),
                    self.value(*weight),
                    self.value(*bias).shape(),
                    cols,
                    plan,
                );
                vec![(*input, gr.input), (*weight, gr.weight), (*bias, gr.bias)]
            }
            Op::ConvTranspose2d {
                input,
                weight,
                bias,
                plan,
            } => {
                let gr = conv::conv_transpose2d_backward(
                    g,
                    self.value(*input),
                    self.value(*weight),
                    self.value(*bias).shape(),
                    plan,
                );
                vec![(*input, gr.input), (*weight, gr.weight), (*bias, gr.bias)]
            }
            Op::InstanceNorm {
                input,
                gain,
                offset,
                normalized,
                inv_std,
            } => {
                let [_, c, h, w] = out.shape();
                let hw = h * w;
                let gains = self.value(*gain).data();
                let mut dx = Tensor::zeros(out.shape());
                let mut dgain = Tensor::zeros(self.value(*gain).shape());
                let mut doffset = Tensor::zeros(self.value(*offset).shape());
                for (plane, &istd) in inv_std.iter().enumerate() {
                    let ch = plane % c;
                    let gp = &g.data()[plane * hw..(plane + 1) * hw];
                    let xh = &normalized[plane * hw..(plane + 1) * hw];
                    let mut sum_g = 0.0;
                    let mut sum_gx = 0.0;
                    for (&gi, &xi) in gp.iter().zip(xh) {
                        sum_g += gi.as_f64();
                        sum_gx += gi.as_f64() * xi.as_f64();
                    }
                    dgain.data_mut()[ch] += T::from_f64_lossy(sum_gx);
                    doffset.data_mut()[ch] += T::from_f64_lossy(sum_g);
                    let gain_c = gains[ch];
                    let mean_d = T::from_f64_lossy(sum_g * gain_c.as_f64() / hw as f64);
                    let mean_dx = T::from_f64_lossy(sum_gx * gain_c.as_f64() / hw as f64);
                    let dst = &mut dx.data_mut()[plane * hw..(plane + 1) * hw];
                    for ((d, &gi), &xi) in dst.iter_mut().zip(gp).zip(xh) {
                        *d = istd * (gi * gain_c - mean_d - xi * mean_dx);
                    }
                }
                vec![(*input, dx), (*gain, dgain), (*offset, doffset)]
            }
            Op::Relu(x) => vec![(*x, zip_map(*x, &|gi, xi, _| if xi > T::zero() { gi } else { T::zero() }))],
            Op::LeakyRelu(x, s) => {
                let s = *s;
                vec![(*x, zip_map(*x, &|gi, xi, _| if xi > T::zero() { gi } else { gi * s }))]
            }
            Op::Tanh(x) => vec![(*x, zip_map(*x, &|gi, _, yi| gi * (T::one() - yi * yi)))],
            Op::Sigmoid(x) => vec![(*x, zip_map(*x, &|gi, _, yi| gi * yi * (T::one() - yi)))],
            Op::Affine(x, s) => {
                let s = *s;
                vec![(*x, g.map(|gi| gi * s))]
            }
            Op::LogClamped(x, floor) => {
                let f = *floor;
                vec![(*x, zip_map(*x, &|gi, xi, _| if xi > f { gi / xi } else { T::zero() }))]
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|v| -v))],
            Op::L1Mean(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let scale = g.item() / T::from_usize(av.numel()).expect("size");
                let da: Vec<T> = av
                    .data()
                    .iter()
                    .zip(bv.data())
                    .map(|(&x, &y)| {
                        if x > y {
                            scale
                        } else if x < y {
                            -scale
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                let da = Tensor::new(av.shape(), da).expect("same shape");
                let db = da.map(|v| -v);
                vec![(*a, da), (*b, db)]
            }
            Op::SquaredErrorMean(x, target) => {
                let xv = self.value(*x);
                let scale = g.item() * T::from_f64_lossy(2.0) / T::from_usize(xv.numel()).expect("size");
                let t = *target;
                vec![(*x, xv.map(|v| (v - t) * scale))]
            }
            Op::Mean(x) => {
                let xv = self.value(*x);
                let v = g.item() / T::from_usize(xv.numel()).expect("size");
                vec![(*x, Tensor::full(xv.shape(), v))]
            }
            Op::Sum(x) => vec![(*x, Tensor::full(self.value(*x).shape(), g.item()))],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: [usize; 4], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn conv_sum_of_ones() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::full([1, 1, 3, 3], 1.0));
        let w = g.constant(Tensor::full([1, 1, 3, 3], 1.0));
        let b = g.constant(Tensor::zeros([1, 1, 1, 1]));
        let y = g.conv2d(x, w, b, 1, 0).unwrap();
        assert_eq!(g.value(y).shape(), [1, 1, 1, 1]);
        assert_eq!(g.value(y).item(), 9.0);
    }

    #[test]
    fn conv_shape_error_is_descriptive() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::zeros([1, 2, 4, 4]));
        let w = g.constant(Tensor::zeros([1, 3, 3, 3]));
        let b = g.constant(Tensor::zeros([1, 1, 1, 1]));
        let err = g.conv2d(x, w, b, 1, 1).unwrap_err().to_string();
        assert!(err.contains("2 channels"), "{err}");
    }

    #[test]
    fn transpose_block_expansion() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t([1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let w = g.constant(Tensor::full([1, 1, 2, 2], 1.0));
        let b = g.constant(Tensor::zeros([1, 1, 1, 1]));
        let y = g.conv2d_transpose(x, w, b, 2, 0).unwrap();
        let expect = [
            1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 3.0, 3.0, 4.0, 4.0,
        ];
        assert_eq!(g.value(y).shape(), [1, 1, 4, 4]);
        assert_eq!(g.value(y).data(), &expect);
    }

    #[test]
    fn instance_norm_constant_plane_is_zero() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::full([1, 1, 3, 3], 5.0));
        let gain = g.constant(Tensor::full([1, 1, 1, 1], 1.0));
        let off = g.constant(Tensor::zeros([1, 1, 1, 1]));
        let y = g.instance_norm(x, gain, off, 1e-5).unwrap();
        assert!(g.value(y).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn instance_norm_standardizes_plane() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t([1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let gain = g.constant(Tensor::full([1, 1, 1, 1], 1.0));
        let off = g.constant(Tensor::zeros([1, 1, 1, 1]));
        let y = g.instance_norm(x, gain, off, 1e-9).unwrap();
        let d = g.value(y).data();
        let mean = d.iter().sum::<f64>() / 4.0;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-3);
    }

    #[test]
    fn instance_norm_affine_push_through() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_fn([1, 2, 4, 4], |[_, c, y, x]| ((c * 7 + y * 3 + x) as f64).sin()));
        let gain = g.constant(Tensor::full([1, 2, 1, 1], 2.0));
        let off = g.constant(Tensor::full([1, 2, 1, 1], 3.0));
        let y = g.instance_norm(x, gain, off, 1e-9).unwrap();
        for c in 0..2 {
            let p = g.value(y).plane(0, c);
            let mean = p.iter().sum::<f64>() / 16.0;
            let std = (p.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0).sqrt();
            assert!((mean - 3.0).abs() < 1e-9);
            assert!((std - 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn activations_pointwise() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t([1, 1, 1, 3], &[-1.0, 0.0, 2.0]));
        let r = g.relu(x).unwrap();
        assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.0]);
        let s = g.sigmoid(x).unwrap();
        assert_eq!(g.value(s).data()[1], 0.5);
        let l = g.leaky_relu(x, 0.2).unwrap();
        assert_eq!(g.value(l).data(), &[-0.2, 0.0, 2.0]);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t([1, 1, 1, 1], &[0.0]), true);
        let r = g.relu(x).unwrap();
        let s = g.sum(r).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().item(), 0.0);
    }

    #[test]
    fn l1_values_and_tie_gradient() {
        let mut g = Graph::<f64>::new();
        let a = g.leaf(t([1, 1, 1, 2], &[1.0, 2.0]), true);
        let b = g.constant(Tensor::zeros([1, 1, 1, 2]));
        let l = g.l1_mean(a, b).unwrap();
        assert_eq!(g.value(l).item(), 1.5);
        let same = g.l1_mean(a, a).unwrap();
        assert_eq!(g.value(same).item(), 0.0);
        g.backward(same).unwrap();
        assert_eq!(g.grad(a).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn l1_shape_mismatch() {
        let mut g = Graph::<f32>::new();
        let a = g.constant(Tensor::zeros([1, 1, 1, 2]));
        let b = g.constant(Tensor::zeros([1, 1, 2, 1]));
        assert!(g.l1_mean(a, b).is_err());
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::<f32>::new();
        let x = g.leaf(Tensor::full([2, 3, 4, 5], 0.3), true);
        let s = g.sum(x).unwrap();
        g.backward(s).unwrap();
        assert!(g.grad(x).unwrap().data().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::<f32>::new();
        let x = g.leaf(Tensor::zeros([1, 1, 2, 2]), true);
        assert!(matches!(g.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn second_backward_doubles() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t([1, 1, 1, 3], &[0.5, -1.0, 2.0]), true);
        let y = g.tanh(x).unwrap();
        let s = g.sum(y).unwrap();
        g.backward(s).unwrap();
        let once = g.grad(x).unwrap().clone();
        g.backward(s).unwrap();
        let twice = g.grad(x).unwrap();
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert_eq!(2.0 * a, *b);
        }
        g.zero_grad();
        assert!(g.grad(x).is_none());
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t([1, 1, 1, 1], &[1.0]), true);
        let c = g.constant(t([1, 1, 1, 1], &[2.0]));
        let y = g.add(x, c).unwrap();
        g.backward(y).unwrap();
        assert!(g.grad(c).is_none());
        assert_eq!(g.grad(x).unwrap().item(), 1.0);
    }

    #[test]
    fn finite_check_flags_nan() {
        let mut g = Graph::<f64>::new().with_finite_checks(true);
        let x = g.constant(t([1, 1, 1, 1], &[f64::NAN]));
        assert!(matches!(g.tanh(x), Err(Error::NonFinite { op: "tanh" })));
    }

    #[test]
    fn log_clamped_floor() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t([1, 1, 1, 2], &[0.0, 0.5]), true);
        let y = g.log_clamped(x, 1e-7).unwrap();
        assert!((g.value(y).data()[0] - (1e-7f64).ln()).abs() < 1e-12);
        let s = g.sum(y).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[0.0, 2.0]);
    }
}

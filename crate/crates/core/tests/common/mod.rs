//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

pub mod cases;
pub mod gan;
pub mod pipeline;
pub mod sampler;

use labelgan_core::autodiff::{Graph, Tensor, Var};
use labelgan_core::image::Mask;
use rand::Rng;

pub type Build = dyn Fn(&mut Graph<f64>, &[Var]) -> Var;

pub fn random_tensor(shape: [usize; 4], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Scalar loss of `build` evaluated at `inputs`.
pub fn eval_loss(build: &Build, inputs: &[Tensor<f64>]) -> f64 {
    let mut g = Graph::<f64>::new().with_finite_checks(false);
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), false)).collect();
    let out = build(&mut g, &vars);
    g.value(out).item()
}

pub fn analytic_grads(build: &Build, inputs: &[Tensor<f64>]) -> Vec<Tensor<f64>> {
    let mut g = Graph::<f64>::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let out = build(&mut g, &vars);
    g.backward(out).unwrap();
    vars.iter()
        .zip(inputs)
        .map(|(&v, t)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect()
}

/// Central differences for every coordinate of every input.
pub fn numeric_grads(build: &Build, inputs: &[Tensor<f64>], h: f64) -> Vec<Tensor<f64>> {
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for k in 0..inputs.len() {
        let mut grad = Tensor::zeros(inputs[k].shape());
        for i in 0..inputs[k].numel() {
            let orig = work[k].data()[i];
            work[k].data_mut()[i] = orig + h;
            let plus = eval_loss(build, &work);
            work[k].data_mut()[i] = orig - h;
            let minus = eval_loss(build, &work);
            work[k].data_mut()[i] = orig;
            grad.data_mut()[i] = (plus - minus) / (2.0 * h);
        }
        out.push(grad);
    }
    out
}

/// `|a - n|_2 / max(|a|_2, |n|_2, 1e-4)`. The floor covers gradients that
/// are exactly zero, such as a conv bias feeding an instance norm, where
/// the numeric estimate is pure rounding noise.
pub fn relative_error(a: &Tensor<f64>, n: &Tensor<f64>) -> f64 {
    let diff: f64 = a.data().iter().zip(n.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.dot(a).sqrt().max(n.dot(n).sqrt()).max(1e-4);
    diff / scale
}

/// Worst relative error over all inputs.
pub fn gradcheck(build: &Build, inputs: &[Tensor<f64>]) -> f64 {
    let a = analytic_grads(build, inputs);
    let n = numeric_grads(build, inputs, 1e-6);
    a.iter().zip(&n).map(|(a, n)| relative_error(a, n)).fold(0.0, f64::max)
}

/// Direct 7-loop convolution with zero padding.
pub fn naive_conv2d(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64], stride: usize, pad: usize) -> Tensor<f64> {
    let [n, ci, h, wd] = x.shape();
    let [co, ci2, k, _] = w.shape();
    assert_eq!(ci, ci2);
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    Tensor::from_fn([n, co, oh, ow], |[b_, o, y, xo]| {
        let mut acc = b[o];
        for c in 0..ci {
            for ky in 0..k {
                for kx in 0..k {
                    let iy = (y * stride + ky) as isize - pad as isize;
                    let ix = (xo * stride + kx) as isize - pad as isize;
                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                        acc += x.at([b_, c, iy as usize, ix as usize]) * w.at([o, c, ky, kx]);
                    }
                }
            }
        }
        acc
    })
}

/// Transposed convolution by scattering each input pixel; weight layout
/// `(C_in, C_out, k, k)`.
pub fn naive_conv_transpose2d(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64], stride: usize, pad: usize) -> Tensor<f64> {
    let [n, ci, h, wd] = x.shape();
    let [ci2, co, k, _] = w.shape();
    assert_eq!(ci, ci2);
    let oh = (h - 1) * stride + k - 2 * pad;
    let ow = (wd - 1) * stride + k - 2 * pad;
    let mut out = Tensor::from_fn([n, co, oh, ow], |[_, o, _, _]| b[o]);
    for b_ in 0..n {
        for c in 0..ci {
            for y in 0..h {
                for xi in 0..wd {
                    let v = x.at([b_, c, y, xi]);
                    for o in 0..co {
                        for ky in 0..k {
                            for kx in 0..k {
                                let oy = (y * stride + ky) as isize - pad as isize;
                                let ox = (xi * stride + kx) as isize - pad as isize;
                                if oy >= 0 && ox >= 0 && (oy as usize) < oh && (ox as usize) < ow {
                                    let idx = ((b_ * co + o) * oh + oy as usize) * ow + ox as usize;
                                    out.data_mut()[idx] += v * w.at([c, o, ky, kx]);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn random_mask(h: usize, w: usize, p: f64, rng: &mut impl Rng) -> Mask {
    Mask::from_fn(h, w, |_, _| rng.random_bool(p))
}

/// Per-pixel confusion counts.
pub fn pixel_counts_loop(pred: &Mask, gt: &Mask) -> (u64, u64, u64) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for y in 0..pred.height {
        for x in 0..pred.width {
            match (pred.get(y, x), gt.get(y, x)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
    }
    (tp, fp, fn_)
}

/// Recursive 8-connected flood fill: sorted component areas.
pub fn flood_fill_areas(mask: &Mask) -> Vec<usize> {
    fn fill(mask: &Mask, seen: &mut [bool], y: isize, x: isize) -> usize {
        if y < 0 || x < 0 || y >= mask.height as isize || x >= mask.width as isize {
            return 0;
        }
        let i = y as usize * mask.width + x as usize;
        if seen[i] || !mask.data[i] {
            return 0;
        }
        seen[i] = true;
        let mut n = 1;
        for dy in -1..=1 {
            for dx in -1..=1 {
                n += fill(mask, seen, y + dy, x + dx);
            }
        }
        n
    }
    let mut seen = vec![false; mask.data.len()];
    let mut areas = Vec::new();
    for y in 0..mask.height {
        for x in 0..mask.width {
            let a = fill(mask, &mut seen, y as isize, x as isize);
            if a > 0 {
                areas.push(a);
            }
        }
    }
    areas.sort_unstable();
    areas
}

/// Maximum-cardinality bipartite matching by exhaustive search over all
/// assignments of predictions to ground-truth objects (or to none).
pub fn exhaustive_max_matching(pred: &[(f64, f64)], gt: &[(f64, f64)], radius: f64) -> usize {
    fn go(i: usize, pred: &[(f64, f64)], gt: &[(f64, f64)], used: &mut Vec<bool>, radius: f64) -> usize {
        if i == pred.len() {
            return 0;
        }
        let mut best = go(i + 1, pred, gt, used, radius);
        for j in 0..gt.len() {
            let d = ((pred[i].0 - gt[j].0).powi(2) + (pred[i].1 - gt[j].1).powi(2)).sqrt();
            if !used[j] && d < radius {
                used[j] = true;
                best = best.max(1 + go(i + 1, pred, gt, used, radius));
                used[j] = false;
            }
        }
        best
    }
    go(0, pred, gt, &mut vec![false; gt.len()], radius)
}

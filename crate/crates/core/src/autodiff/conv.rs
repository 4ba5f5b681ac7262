//! Convolution kernels on raw tensors (im2col + gemm). The graph in
//! [`super::graph`] wires these into forward/backward rules.

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Geometry of a strided, zero-padded square-kernel sliding window from an
/// image plane (`channels x height x width`) to a column grid
/// (`out_h x out_w`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Window {
    pub fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

pub fn conv_out_size(size: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = size + 2 * padding;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

pub fn conv_transpose_out_size(
    size: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Option<usize> {
    if stride == 0 || size == 0 {
        return None;
    }
    ((size - 1) * stride + kernel).checked_sub(2 * padding)
}

/// Unfolds one image plane into a `rows x cols` matrix.
pub fn im2col<T: Scalar>(image: &[T], win: &Window, cols: &mut [T]) {
    let k = win.kernel;
    let ncols = win.cols();
    for c in 0..win.channels {
        let plane = &image[c * win.height * win.width..(c + 1) * win.height * win.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for oy in 0..win.out_h {
                    let iy = (oy * win.stride + ki) as isize - win.padding as isize;
                    let line = &mut dst[oy * win.out_w..(oy + 1) * win.out_w];
                    if iy < 0 || iy >= win.height as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * win.width..(iy as usize + 1) * win.width];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * win.stride + kj) as isize - win.padding as isize;
                        *v = if ix < 0 || ix >= win.width as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds a column matrix back into a plane.
pub fn col2im<T: Scalar>(cols: &[T], win: &Window, image: &mut [T]) {
    let k = win.kernel;
    let ncols = win.cols();
    for c in 0..win.channels {
        let plane = &mut image[c * win.height * win.width..(c + 1) * win.height * win.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oy in 0..win.out_h {
                    let iy = (oy * win.stride + ki) as isize - win.padding as isize;
                    if iy < 0 || iy >= win.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * win.width..(iy as usize + 1) * win.width];
                    for ox in 0..win.out_w {
                        let ix = (ox * win.stride + kj) as isize - win.padding as isize;
                        if ix >= 0 && ix < win.width as isize {
                            dst[ix as usize] += src[oy * win.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

fn square_kernel(op: &'static str, weight: [usize; 4]) -> Result<usize> {
    if weight[2] != weight[3] || weight[2] == 0 {
        return Err(Error::shape(op, format!("kernel must be square, got {weight:?}")));
    }
    Ok(weight[2])
}

fn check_bias(op: &'static str, bias: [usize; 4], channels: usize) -> Result<()> {
    if bias[0] * bias[1] * bias[2] * bias[3] != channels {
        return Err(Error::shape(
            op,
            format!("bias {bias:?} must hold {channels} values"),
        ));
    }
    Ok(())
}

/// Validated geometry of a convolution: `out_shape` plus the window from
/// the input plane to the output grid.
#[derive(Clone, Copy, Debug)]
pub struct ConvPlan {
    pub out_shape: [usize; 4],
    pub window: Window,
}

pub fn plan_conv2d(
    input: [usize; 4],
    weight: [usize; 4],
    bias: [usize; 4],
    stride: usize,
    padding: usize,
) -> Result<ConvPlan> {
    let k = square_kernel("conv2d", weight)?;
    let [n, c_in, h, w] = input;
    let [c_out, w_in, _, _] = weight;
    if w_in != c_in {
        return Err(Error::shape(
            "conv2d",
            format!("input has {c_in} channels, weight {weight:?} expects {w_in}"),
        ));
    }
    check_bias("conv2d", bias, c_out)?;
    let (Some(out_h), Some(out_w)) = (
        conv_out_size(h, k, stride, padding),
        conv_out_size(w, k, stride, padding),
    ) else {
        return Err(Error::shape(
            "conv2d",
            format!("input {h}x{w} too small for kernel {k}, stride {stride}, padding {padding}"),
        ));
    };
    Ok(ConvPlan {
        out_shape: [n, c_out, out_h, out_w],
        window: Window {
            channels: c_in,
            height: h,
            width: w,
            kernel: k,
            stride,
            padding,
            out_h,
            out_w,
        },
    })
}

/// Transposed convolution with weight layout `(C_in, C_out, k, k)`; the
/// window runs from the *output* plane to the input grid.
pub fn plan_conv_transpose2d(
    input: [usize; 4],
    weight: [usize; 4],
    bias: [usize; 4],
    stride: usize,
    padding: usize,
) -> Result<ConvPlan> {
    let k = square_kernel("conv2d_transpose", weight)?;
    let [n, c_in, h, w] = input;
    let [w_in, c_out, _, _] = weight;
    if w_in != c_in {
        return Err(Error::shape(
            "conv2d_transpose",
            format!("input has {c_in} channels, weight {weight:?} expects {w_in}"),
        ));
    }
    check_bias("conv2d_transpose", bias, c_out)?;
    let (Some(out_h), Some(out_w)) = (
        conv_transpose_out_size(h, k, stride, padding),
        conv_transpose_out_size(w, k, stride, padding),
    ) else {
        return Err(Error::shape(
            "conv2d_transpose",
            format!("invalid geometry for input {h}x{w}, kernel {k}, stride {stride}, padding {padding}"),
        ));
    };
    if out_h == 0 || out_w == 0 {
        return Err(Error::shape("conv2d_transpose", "empty output"));
    }
    Ok(ConvPlan {
        out_shape: [n, c_out, out_h, out_w],
        window: Window {
            channels: c_out,
            height: out_h,
            width: out_w,
            kernel: k,
            stride,
            padding,
            out_h: h,
            out_w: w,
        },
    })
}

/// Forward convolution. Returns the output and the per-sample im2col
/// buffers, which the backward rule reuses.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    plan: &ConvPlan,
) -> (Tensor<T>, Vec<T>) {
    let win = plan.window;
    let [n, c_out, _, _] = plan.out_shape;
    let (rows, ncols) = (win.rows(), win.cols());
    let in_len = win.channels * win.height * win.width;
    let mut cols = vec![T::zero(); n * rows * ncols];
    let mut out = Tensor::zeros(plan.out_shape);
    for i in 0..n {
        let col = &mut cols[i * rows * ncols..(i + 1) * rows * ncols];
        im2col(&input.data()[i * in_len..(i + 1) * in_len], &win, col);
        let dst = &mut out.data_mut()[i * c_out * ncols..(i + 1) * c_out * ncols];
        for (c, chunk) in dst.chunks_mut(ncols).enumerate() {
            chunk.fill(bias.data()[c]);
        }
        T::gemm(
            c_out,
            rows,
            ncols,
            T::one(),
            weight.data(),
            rows,
            1,
            col,
            ncols,
            1,
            T::one(),
            dst,
            ncols,
            1,
        );
    }
    (out, cols)
}

pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    input_shape: [usize; 4],
    weight: &Tensor<T>,
    bias_shape: [usize; 4],
    cols: &[T],
    plan: &ConvPlan,
) -> ConvGrads<T> {
    let win = plan.window;
    let [n, c_out, _, _] = plan.out_shape;
    let (rows, ncols) = (win.rows(), win.cols());
    let in_len = win.channels * win.height * win.width;
    let mut d_input = Tensor::zeros(input_shape);
    let mut d_weight = Tensor::zeros(weight.shape());
    let mut d_bias = Tensor::zeros(bias_shape);
    let mut d_cols = vec![T::zero(); rows * ncols];
    for i in 0..n {
        let go = &grad_out.data()[i * c_out * ncols..(i + 1) * c_out * ncols];
        let col = &cols[i * rows * ncols..(i + 1) * rows * ncols];
        for (c, chunk) in go.chunks(ncols).enumerate() {
            d_bias.data_mut()[c] += chunk.iter().copied().sum::<T>();
        }
        // dW += dY * cols^T
        T::gemm(
            c_out,
            ncols,
            rows,
            T::one(),
            go,
            ncols,
            1,
            col,
            1,
            ncols,
            T::one(),
            d_weight.data_mut(),
            rows,
            1,
        );
        // dcols = W^T * dY
        T::gemm(
            rows,
            c_out,
            ncols,
            T::one(),
            weight.data(),
            1,
            rows,
            go,
            ncols,
            1,
            T::zero(),
            &mut d_cols,
            ncols,
            1,
        );
        col2im(
            &d_cols,
            &win,
            &mut d_input.data_mut()[i * in_len..(i + 1) * in_len],
        );
    }
    ConvGrads {
        input: d_input,
        weight: d_weight,
        bias: d_bias,
    }
}

pub fn conv_transpose2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    plan: &ConvPlan,
) -> Tensor<T> {
    let win = plan.window;
    let [n, c_in, _, _] = input.shape();
    let (rows, ncols) = (win.rows(), win.cols());
    let out_len = win.channels * win.height * win.width;
    let mut out = Tensor::zeros(plan.out_shape);
    let mut cols = vec![T::zero(); rows * ncols];
    for i in 0..n {
        let x = &input.data()[i * c_in * ncols..(i + 1) * c_in * ncols];
        // cols = W^T * x, W viewed as (C_in, C_out*k*k)
        T::gemm(
            rows,
            c_in,
            ncols,
            T::one(),
            weight.data(),
            1,
            rows,
            x,
            ncols,
            1,
            T::zero(),
            &mut cols,
            ncols,
            1,
        );
        let dst = &mut out.data_mut()[i * out_len..(i + 1) * out_len];
        col2im(&cols, &win, dst);
        let hw = win.height * win.width;
        for (c, chunk) in dst.chunks_mut(hw).enumerate() {
            let b = bias.data()[c];
            chunk.iter_mut().for_each(|v| *v += b);
        }
    }
    out
}

pub fn conv_transpose2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias_shape: [usize; 4],
    plan: &ConvPlan,
) -> ConvGrads<T> {
    let win = plan.window;
    let [n, c_in, _, _] = input.shape();
    let (rows, ncols) = (win.rows(), win.cols());
    let out_len = win.channels * win.height * win.width;
    let hw = win.height * win.width;
    let mut d_input = Tensor::zeros(input.shape());
    let mut d_weight = Tensor::zeros(weight.shape());
    let mut d_bias = Tensor::zeros(bias_shape);
    let mut d_cols = vec![T::zero(); rows * ncols];
    for i in 0..n {
        let go = &grad_out.data()[i * out_len..(i + 1) * out_len];
        for (c, chunk) in go.chunks(hw).enumerate() {
            d_bias.data_mut()[c] += chunk.iter().copied().sum::<T>();
        }
        im2col(go, &win, &mut d_cols);
        let x = &input.data()[i * c_in * ncols..(i + 1) * c_in * ncols];
        // dx = W * dcols
        T::gemm(
            c_in,
            rows,
            ncols,
            T::one(),
            weight.data(),
            rows,
            1,
            &d_cols,
            ncols,
            1,
            T::zero(),
            &mut d_input.data_mut()[i * c_in * ncols..(i + 1) * c_in * ncols],
            ncols,
            1,
        );
        // dW += x * dcols^T
        T::gemm(
            c_in,
            ncols,
            rows,
            T::one(),
            x,
            ncols,
            1,
            &d_cols,
            1,
            ncols,
            T::one(),
            d_weight.data_mut(),
            rows,
            1,
        );
    }
    ConvGrads {
        input: d_input,
        weight: d_weight,
        bias: d_bias,
    }
}

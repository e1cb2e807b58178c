//! Minimal dense/convolution kernels with hand-written backward passes.

use crate::scalar::Scalar;

/// Activation volume `[channels, height, width]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Volume<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
        }
    }

    #[inline]
    fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }
}

/// Output side length of a 3x3 convolution with padding 1.
pub fn conv_out_len(len: usize, stride: usize) -> usize {
    (len - 1) / stride + 1
}

/// 3x3 convolution, zero padding 1, followed by ReLU.
/// `weight` is `[out, in, 3, 3]`.
pub fn conv3x3_relu_forward<T: Scalar>(
    input: &Volume<T>,
    weight: &[T],
    bias: &[T],
    out_channels: usize,
    stride: usize,
) -> Volume<T> {
    let ho = conv_out_len(input.height, stride);
    let wo = conv_out_len(input.width, stride);
    let mut out = Volume::zeros(out_channels, ho, wo);
    let cin = input.channels;
    for oc in 0..out_channels {
        let wbase = oc * cin * 9;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = bias[oc];
                for ic in 0..cin {
                    let wk = &weight[wbase + ic * 9..wbase + ic * 9 + 9];
                    for ky in 0..3 {
                        let iy = (oy * stride + ky) as isize - 1;
                        if iy < 0 || iy >= input.height as isize {
                            continue;
                        }
                        for kx in 0..3 {
                            let ix = (ox * stride + kx) as isize - 1;
                            if ix < 0 || ix >= input.width as isize {
                                continue;
                            }
                            acc = acc + wk[ky * 3 + kx] * input.data[input.idx(ic, iy as usize, ix as usize)];
                        }
                    }
                }
                let i = out.idx(oc, oy, ox);
                out.data[i] = acc.max(T::zero());
            }
        }
    }
    out
}

/// Backward pass of [`conv3x3_relu_forward`].
///
/// `d_out` is the gradient with respect to the post-ReLU output and is masked
/// by `output > 0` here. Weight and bias gradients are accumulated into
/// `d_weight`/`d_bias`; the input gradient is returned when requested.
#[allow(clippy::too_many_arguments)]
pub fn conv3x3_relu_backward<T: Scalar>(
    input: &Volume<T>,
    output: &Volume<T>,
    d_out: &[T],
    weight: &[T],
    stride: usize,
    d_weight: &mut [T],
    d_bias: &mut [T],
    want_input_grad: bool,
) -> Option<Vec<T>> {
    let cin = input.channels;
    let mut d_in = want_input_grad.then(|| vec![T::zero(); input.data.len()]);
    for oc in 0..output.channels {
        let wbase = oc * cin * 9;
        for oy in 0..output.height {
            for ox in 0..output.width {
                let oi = output.idx(oc, oy, ox);
                if output.data[oi] <= T::zero() {
                    continue;
                }
                let g = d_out[oi];
                if g == T::zero() {
                    continue;
                }
                d_bias[oc] = d_bias[oc] + g;
                for ic in 0..cin {
                    for ky in 0..3 {
                        let iy = (oy * stride + ky) as isize - 1;
                        if iy < 0 || iy >= input.height as isize {
                            continue;
                        }
                        for kx in 0..3 {
                            let ix = (ox * stride + kx) as isize - 1;
                            if ix < 0 || ix >= input.width as isize {
                                continue;
                            }
                            let ii = input.idx(ic, iy as usize, ix as usize);
                            let wi = wbase + ic * 9 + ky * 3 + kx;
                            d_weight[wi] = d_weight[wi] + g * input.data[ii];
                            if let Some(d_in) = d_in.as_mut() {
                                d_in[ii] = d_in[ii] + g * weight[wi];
                            }
                        }
                    }
                }
            }
        }
    }
    d_in
}

/// `y = W x + b` with `W` stored `[out, in]`.
pub fn dense_forward<T: Scalar>(x: &[T], weight: &[T], bias: &[T]) -> Vec<T> {
    let n_in = x.len();
    bias.iter()
        .enumerate()
        .map(|(o, &b)| {
            weight[o * n_in..(o + 1) * n_in]
                .iter()
                .zip(x)
                .fold(b, |acc, (&w, &xi)| acc + w * xi)
        })
        .collect()
}

/// Accumulates `dW += dy xᵀ`, `db += dy` and returns `dx = Wᵀ dy`.
pub fn dense_backward<T: Scalar>(
    x: &[T],
    dy: &[T],
    weight: &[T],
    d_weight: &mut [T],
    d_bias: &mut [T],
) -> Vec<T> {
    let n_in = x.len();
    let mut dx = vec![T::zero(); n_in];
    for (o, &g) in dy.iter().enumerate() {
        d_bias[o] = d_bias[o] + g;
        let row = o * n_in;
        for i in 0..n_in {
            d_weight[row + i] = d_weight[row + i] + g * x[i];
            dx[i] = dx[i] + g * weight[row + i];
        }
    }
    dx
}

use crate::error::{Error, Result};
use crate::image::Image;

/// Square convolution with "same" zero padding.
///
/// Weights are laid out `[out][in][ky][kx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub kernel_size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(kernel_size: usize, in_channels: usize, out_channels: usize) -> Self {
        assert!(kernel_size % 2 == 1, "kernel size must be odd");
        ConvLayer {
            kernel_size,
            in_channels,
            out_channels,
            weights: vec![0.0; out_channels * in_channels * kernel_size * kernel_size],
            biases: vec![0.0; out_channels],
        }
    }

    #[inline]
    pub fn weight_index(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_channels + i) * self.kernel_size + ky) * self.kernel_size + kx
    }

    pub fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.weights[self.weight_index(o, i, ky, kx)]
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    pub fn same_shape(&self, other: &ConvLayer) -> bool {
        self.kernel_size == other.kernel_size
            && self.in_channels == other.in_channels
            && self.out_channels == other.out_channels
            && self.weights.len() == other.weights.len()
            && self.biases.len() == other.biases.len()
    }
}

/// Gradients of one [`ConvLayer`], same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl ConvGrads {
    pub fn zeros_like(layer: &ConvLayer) -> Self {
        ConvGrads {
            weights: vec![0.0; layer.weights.len()],
            biases: vec![0.0; layer.biases.len()],
        }
    }
}

/// Visits the overlapping row segments of `plane` shifted by `(dy, dx)`:
/// `f(dst_start, src_start, len)` with output row-major offsets.
#[inline]
fn for_each_shifted_row(
    h: usize,
    w: usize,
    dy: isize,
    dx: isize,
    mut f: impl FnMut(usize, usize, usize),
) {
    let y0 = (-dy).max(0) as usize;
    let y1 = (h as isize - dy).min(h as isize).max(0) as usize;
    let x0 = (-dx).max(0) as usize;
    let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
    if x1 <= x0 {
        return;
    }
    for y in y0..y1 {
        let sy = (y as isize + dy) as usize;
        let sx = (x0 as isize + dx) as usize;
        f(y * w + x0, sy * w + sx, x1 - x0);
    }
}

/// Cross-correlation plus bias, no activation.
pub fn conv_forward(layer: &ConvLayer, input: &Image) -> Result<Image> {
    if input.channels() != layer.in_channels {
        return Err(Error::Dimension(format!(
            "conv expects {} input channels, got {}",
            layer.in_channels,
            input.channels()
        )));
    }
    let (h, w) = (input.height(), input.width());
    let r = (layer.kernel_size / 2) as isize;
    let mut out = Image::new(h, w, layer.out_channels);
    for o in 0..layer.out_channels {
        let dst = out.channel_mut(o);
        dst.fill(layer.biases[o]);
        for i in 0..layer.in_channels {
            let src = input.channel(i);
            for ky in 0..layer.kernel_size {
                for kx in 0..layer.kernel_size {
                    let wv = layer.weight(o, i, ky, kx);
                    if wv == 0.0 {
                        continue;
                    }
                    let (dy, dx) = (ky as isize - r, kx as isize - r);
                    for_each_shifted_row(h, w, dy, dx, |d, s, n| {
                        for (a, &b) in dst[d..d + n].iter_mut().zip(&src[s..s + n]) {
                            *a += wv * b;
                        }
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Returns parameter gradients and, if requested, the gradient w.r.t. the input.
pub fn conv_backward(
    layer: &ConvLayer,
    input: &Image,
    grad_out: &Image,
    want_input_grad: bool,
) -> (ConvGrads, Option<Image>) {
    let (h, w) = (input.height(), input.width());
    let r = (layer.kernel_size / 2) as isize;
    let mut grads = ConvGrads::zeros_like(layer);
    let mut grad_in = want_input_grad.then(|| Image::new(h, w, layer.in_channels));
    for o in 0..layer.out_channels {
        let g = grad_out.channel(o);
        grads.biases[o] = g.iter().sum();
        for i in 0..layer.in_channels {
            let src = input.channel(i);
            for ky in 0..layer.kernel_size {
                for kx in 0..layer.kernel_size {
                    let (dy, dx) = (ky as isize - r, kx as isize - r);
                    let mut acc = 0.0;
                    for_each_shifted_row(h, w, dy, dx, |d, s, n| {
                        acc += g[d..d + n]
                            .iter()
                            .zip(&src[s..s + n])
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                    });
                    let idx = layer.weight_index(o, i, ky, kx);
                    grads.weights[idx] = acc;
                    if let Some(gi) = grad_in.as_mut() {
                        let wv = layer.weights[idx];
                        if wv == 0.0 {
                            continue;
                        }
                        let dst = gi.channel_mut(i);
                        for_each_shifted_row(h, w, dy, dx, |d, s, n| {
                            for (a, &b) in dst[s..s + n].iter_mut().zip(&g[d..d + n]) {
                                *a += wv * b;
                            }
                        });
                    }
                }
            }
        }
    }
    (grads, grad_in)
}

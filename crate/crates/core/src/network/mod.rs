//! The K-estimation network and its manual backward pass.
//!
//! Five convolutions with three filters each:
//!
//! ```text
//! h1 = relu(conv1 1x1 (I))
//! h2 = relu(conv2 3x3 (h1))
//! h3 = relu(conv3 5x5 ([h1, h2]))
//! h4 = relu(conv4 7x7 ([h2, h3]))
//! K  = relu(conv5 3x3 ([h1, h2, h3, h4]))
//! J  = K * I - K + b
//! ```
//!
//! All convolutions use "same" zero padding, so every map shares the
//! input's spatial size. `J` is left unclamped.

mod checkpoint;
mod conv;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use conv::{conv_backward, conv_forward, ConvGrads, ConvLayer};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::haze::KMap;
use crate::image::Image;

/// `(kernel_size, in_channels, out_channels)` of conv1..conv5.
pub const ARCHITECTURE: [(usize, usize, usize); 5] =
    [(1, 3, 3), (3, 3, 3), (5, 6, 3), (7, 6, 3), (3, 12, 3)];

pub const DEFAULT_INIT_STD: f64 = 0.01;
pub const DEFAULT_OUTPUT_BIAS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub layers: [ConvLayer; 5],
    /// Constant bias `b` of the clean-image stage. Not trained.
    pub b: f64,
}

impl NetworkParams {
    /// All weights and biases zero; `K ≡ 0` and therefore `J ≡ b`.
    pub fn zeros() -> Self {
        NetworkParams {
            layers: ARCHITECTURE.map(|(k, cin, cout)| ConvLayer::zeros(k, cin, cout)),
            b: DEFAULT_OUTPUT_BIAS,
        }
    }

    /// Weights drawn from `Normal(0, std²)`, biases zero, `b = 1`.
    pub fn init(seed: u64, std: f64) -> Result<Self> {
        if !(std > 0.0 && std.is_finite()) {
            return Err(Error::invalid("init_std", format!("must be positive, got {std}")));
        }
        let normal = Normal::new(0.0, std).map_err(|e| Error::invalid("init_std", e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Self::zeros();
        for layer in &mut params.layers {
            for w in &mut layer.weights {
                *w = normal.sample(&mut rng);
            }
        }
        Ok(params)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(ConvLayer::num_params).sum()
    }

    /// Checks layer shapes against [`ARCHITECTURE`] and that all values are finite.
    pub fn validate(&self) -> Result<()> {
        for (n, (layer, &(k, cin, cout))) in self.layers.iter().zip(&ARCHITECTURE).enumerate() {
            if !layer.same_shape(&ConvLayer::zeros(k, cin, cout)) {
                return Err(Error::Dimension(format!(
                    "conv{} is {}x{} {}->{}, expected {k}x{k} {cin}->{cout}",
                    n + 1,
                    layer.kernel_size,
                    layer.kernel_size,
                    layer.in_channels,
                    layer.out_channels
                )));
            }
            if layer.weights.iter().chain(&layer.biases).any(|v| !v.is_finite()) {
                return Err(Error::invalid("params", format!("conv{} has non-finite values", n + 1)));
            }
        }
        Ok(())
    }

    /// Runs the network and keeps every intermediate needed by [`NetworkParams::backward`].
    pub fn forward(&self, input: &Image) -> Result<ForwardCache> {
        if input.channels() != 3 {
            return Err(Error::Dimension(format!(
                "network expects a 3-channel image, got {}",
                input.channels()
            )));
        }
        let [c1, c2, c3, c4, c5] = &self.layers;
        let z1 = conv_forward(c1, input)?;
        let h1 = relu(&z1);
        let z2 = conv_forward(c2, &h1)?;
        let h2 = relu(&z2);
        let cat3 = concat(&[&h1, &h2]);
        let z3 = conv_forward(c3, &cat3)?;
        let h3 = relu(&z3);
        let cat4 = concat(&[&h2, &h3]);
        let z4 = conv_forward(c4, &cat4)?;
        let h4 = relu(&z4);
        let cat5 = concat(&[&h1, &h2, &h3, &h4]);
        let z5 = conv_forward(c5, &cat5)?;
        let k = relu(&z5);
        let b = self.b;
        let data = k
            .data()
            .iter()
            .zip(input.data())
            .map(|(&kv, &iv)| kv * iv - kv + b)
            .collect();
        let output = Image::from_vec(input.height(), input.width(), 3, data)?;
        Ok(ForwardCache {
            input: input.clone(),
            pre: [z1, z2, z3, z4, z5],
            post: [h1, h2, h3, h4],
            concat: [cat3, cat4, cat5],
            k: KMap::new(k),
            output,
        })
    }

    /// Gradients of a scalar loss given `grad_output = ∂loss/∂J`.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &Image) -> Result<ParamGrads> {
        cache.output.check_same_shape(grad_output, "backward: grad vs output")?;
        for (z, layer) in cache.pre.iter().zip(&self.layers) {
            if z.channels() != layer.out_channels {
                return Err(Error::Dimension("cache does not match params".into()));
            }
        }
        let [c1, c2, c3, c4, c5] = &self.layers;
        let [z1, z2, z3, z4, z5] = &cache.pre;
        let h1 = &cache.post[0];
        let [cat3, cat4, cat5] = &cache.concat;

        // dK = dJ * (I - 1), masked by the K-head relu
        let mut dz5 = grad_output.clone();
        for ((g, &i), &z) in dz5.data_mut().iter_mut().zip(cache.input.data()).zip(z5.data()) {
            *g = if z > 0.0 { *g * (i - 1.0) } else { 0.0 };
        }
        let (g5, dcat5) = conv_backward(c5, cat5, &dz5, true);
        let mut parts = split(&dcat5.expect("requested"), &[3, 3, 3, 3]);
        let dh4 = parts.pop().expect("4 parts");
        let mut dh3 = parts.pop().expect("4 parts");
        let mut dh2 = parts.pop().expect("4 parts");
        let mut dh1 = parts.pop().expect("4 parts");

        let dz4 = relu_backward(&dh4, z4);
        let (g4, dcat4) = conv_backward(c4, cat4, &dz4, true);
        let [a, b]: [Image; 2] = split(&dcat4.expect("requested"), &[3, 3])
            .try_into()
            .expect("2 parts");
        add_assign(&mut dh2, &a);
        add_assign(&mut dh3, &b);

        let dz3 = relu_backward(&dh3, z3);
        let (g3, dcat3) = conv_backward(c3, cat3, &dz3, true);
        let [a, b]: [Image; 2] = split(&dcat3.expect("requested"), &[3, 3])
            .try_into()
            .expect("2 parts");
        add_assign(&mut dh1, &a);
        add_assign(&mut dh2, &b);

        let dz2 = relu_backward(&dh2, z2);
        let (g2, dh1_from2) = conv_backward(c2, h1, &dz2, true);
        add_assign(&mut dh1, &dh1_from2.expect("requested"));

        let dz1 = relu_backward(&dh1, z1);
        let (g1, _) = conv_backward(c1, &cache.input, &dz1, false);

        Ok(ParamGrads {
            layers: [g1, g2, g3, g4, g5],
        })
    }

    /// Forward pass returning only `J`, unclamped.
    pub fn dehaze(&self, hazy: &Image) -> Result<Image> {
        Ok(self.forward(hazy)?.output)
    }
}

/// Intermediate maps from one [`NetworkParams::forward`] call.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Image,
    pre: [Image; 5],
    post: [Image; 4],
    concat: [Image; 3],
    k: KMap,
    output: Image,
}

impl ForwardCache {
    pub fn input(&self) -> &Image {
        &self.input
    }

    /// Pre-activation of conv1..conv5.
    pub fn pre_activations(&self) -> &[Image; 5] {
        &self.pre
    }

    /// h1..h4.
    pub fn activations(&self) -> &[Image; 4] {
        &self.post
    }

    pub fn k(&self) -> &KMap {
        &self.k
    }

    pub fn output(&self) -> &Image {
        &self.output
    }

    pub fn into_output(self) -> Image {
        self.output
    }
}

/// Gradients for every layer of [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub layers: [ConvGrads; 5],
}

impl ParamGrads {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        ParamGrads {
            layers: std::array::from_fn(|i| ConvGrads::zeros_like(&params.layers[i])),
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn global_norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        self.values_mut().for_each(|v| *v *= s);
    }

    pub fn add_assign(&mut self, other: &ParamGrads) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += b;
        }
    }

    pub fn same_shape(&self, params: &NetworkParams) -> bool {
        self.layers.iter().zip(&params.layers).all(|(g, l)| {
            g.weights.len() == l.weights.len() && g.biases.len() == l.biases.len()
        })
    }
}

fn relu(x: &Image) -> Image {
    x.map(|v| v.max(0.0))
}

fn relu_backward(grad: &Image, pre: &Image) -> Image {
    let data = grad
        .data()
        .iter()
        .zip(pre.data())
        .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
        .collect();
    Image::from_vec(grad.height(), grad.width(), grad.channels(), data).expect("same shape")
}

fn concat(parts: &[&Image]) -> Image {
    let (h, w) = (parts[0].height(), parts[0].width());
    let channels = parts.iter().map(|p| p.channels()).sum();
    let mut data = Vec::with_capacity(h * w * channels);
    for p in parts {
        data.extend_from_slice(p.data());
    }
    Image::from_vec(h, w, channels, data).expect("parts share spatial size")
}

fn split(x: &Image, channels: &[usize]) -> Vec<Image> {
    debug_assert_eq!(channels.iter().sum::<usize>(), x.channels());
    let n = x.plane_len();
    let mut start = 0;
    channels
        .iter()
        .map(|&c| {
            let part = x.data()[start * n..(start + c) * n].to_vec();
            start += c;
            Image::from_vec(x.height(), x.width(), c, part).expect("split sizes")
        })
        .collect()
}

fn add_assign(a: &mut Image, b: &Image) {
    for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
        *x += y;
    }
}

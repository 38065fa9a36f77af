//! Layer parameters and their deterministic initialization.
//!
//! Every parameterized layer draws from its own ChaCha stream, keyed by a
//! global seed plus the layer's position in network construction order.
//! Initialization is a pure function of (shape, seed, layer index): the same
//! inputs always reproduce bit-identical parameters, and adding or removing
//! one layer never shifts the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Tensor;
use crate::error::{Error, Result};

/// One round of SplitMix64; a cheap bijective mixer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed from a base seed and an index, so that
/// per-candidate and per-run seeds never collide for distinct indices.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ 0xA076_1D64_78BD_642F).wrapping_add(splitmix64(index)))
}

/// RNG for one layer: the global seed picks the ChaCha key, the layer index
/// picks the stream.
fn layer_rng(seed: u64, layer: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(layer);
    rng
}

fn he_draws(rng: &mut ChaCha8Rng, count: usize, fan_in: usize) -> Vec<f64> {
    let std = (2.0 / fan_in as f64).sqrt();
    (0..count).map(|_| std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)).collect()
}

/// Convolution weights `[out_ch, in_ch, k, k]` plus per-output-channel bias.
#[derive(Clone, Debug)]
pub struct ConvParams {
    weight: Tensor,
    bias: Vec<f64>,
    init: Option<(u64, u64)>,
}

impl ConvParams {
    /// He initialization: zero-mean Gaussian weights with
    /// `std = sqrt(2 / (in_ch * k * k))`, zero biases.
    pub fn he(out_ch: usize, in_ch: usize, kernel: usize, seed: u64, layer: u64) -> Self {
        let fan_in = in_ch * kernel * kernel;
        let mut rng = layer_rng(seed, layer);
        let data = he_draws(&mut rng, out_ch * fan_in, fan_in);
        let weight = Tensor::new(vec![out_ch, in_ch, kernel, kernel], data)
            .expect("conv weight shape is consistent by construction");
        Self { weight, bias: vec![0.0; out_ch], init: Some((seed, layer)) }
    }

    /// Wraps explicit weights; `weight` must be `[out_ch, in_ch, k, k]` with
    /// a square kernel and `bias` must have one entry per output channel.
    pub fn with_weights(weight: Tensor, bias: Vec<f64>) -> Result<Self> {
        let [out_ch, _, kh, kw] = weight.shape()[..] else {
            return Err(Error::ShapeMismatch {
                op: "conv_params",
                detail: format!("weight must be rank 4, got {:?}", weight.shape()),
            });
        };
        if kh != kw {
            return Err(Error::ShapeMismatch {
                op: "conv_params",
                detail: format!("kernel must be square, got {kh}x{kw}"),
            });
        }
        if bias.len() != out_ch {
            return Err(Error::ShapeMismatch {
                op: "conv_params",
                detail: format!("bias has {} entries for {out_ch} output channels", bias.len()),
            });
        }
        Ok(Self { weight, bias, init: None })
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn out_ch(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_ch(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    /// The `(seed, layer)` pair the weights were drawn from, if they came
    /// from [`ConvParams::he`].
    pub fn init_key(&self) -> Option<(u64, u64)> {
        self.init
    }
}

/// Batch-norm scale and shift, one value per channel.
#[derive(Clone, Debug)]
pub struct NormParams {
    gamma: Vec<f64>,
    beta: Vec<f64>,
}

impl NormParams {
    /// Fresh affine parameters: unit scale, zero shift.
    pub fn identity(ch: usize) -> Self {
        Self { gamma: vec![1.0; ch], beta: vec![0.0; ch] }
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

/// Fully connected weights `[out, features]` plus bias.
#[derive(Clone, Debug)]
pub struct LinearParams {
    weight: Tensor,
    bias: Vec<f64>,
    init: Option<(u64, u64)>,
}

impl LinearParams {
    /// He initialization with `std = sqrt(2 / features)`, zero biases.
    pub fn he(out: usize, features: usize, seed: u64, layer: u64) -> Self {
        let mut rng = layer_rng(seed, layer);
        let data = he_draws(&mut rng, out * features, features);
        let weight = Tensor::new(vec![out, features], data)
            .expect("linear weight shape is consistent by construction");
        Self { weight, bias: vec![0.0; out], init: Some((seed, layer)) }
    }

    /// Wraps explicit weights; `weight` must be `[out, features]` and `bias`
    /// must have one entry per output.
    pub fn with_weights(weight: Tensor, bias: Vec<f64>) -> Result<Self> {
        let [out, _] = weight.shape()[..] else {
            return Err(Error::ShapeMismatch {
                op: "linear_params",
                detail: format!("weight must be rank 2, got {:?}", weight.shape()),
            });
        };
        if bias.len() != out {
            return Err(Error::ShapeMismatch {
                op: "linear_params",
                detail: format!("bias has {} entries for {out} outputs", bias.len()),
            });
        }
        Ok(Self { weight, bias, init: None })
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn out(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn features(&self) -> usize {
        self.weight.shape()[1]
    }

    /// The `(seed, layer)` pair the weights were drawn from, if they came
    /// from [`LinearParams::he`].
    pub fn init_key(&self) -> Option<(u64, u64)> {
        self.init
    }
}

//! Layer stack, the reference architecture builder, and whole-model
//! forward/backward.
//!
//! The reference stack reproduces the published model summary literally,
//! including its batch-normalization placement both before and after some
//! pooling layers. Parameter totals for the (224, 6) build are a hard
//! contract: 440,966 total, 439,942 trainable, 1,024 non-trainable.

use crate::error::{Error, Result};
use crate::nn::layers::{
    batchnorm_backward, batchnorm_forward, conv2d_backward, conv2d_forward, dense_backward,
    dense_forward, maxpool_backward, maxpool_forward, relu_backward, relu_forward, BatchNorm,
    Cache, Conv2d, Dense, Mode,
};
use crate::rng::{derive_seed, SplitMix64};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub enum Layer {
    Conv2d(Conv2d),
    BatchNorm(BatchNorm),
    MaxPool,
    Relu,
    Flatten,
    Dense(Dense),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arch {
    /// The full published stack (six conv blocks, eight BN layers).
    Reference,
    /// Reduced stack for desk-scale tests: two conv blocks, widths 4/8.
    Toy,
}

impl Arch {
    pub fn as_str(self) -> &'static str {
        match self {
            Arch::Reference => "reference",
            Arch::Toy => "toy",
        }
    }

    pub fn parse(s: &str) -> Result<Arch> {
        match s {
            "reference" => Ok(Arch::Reference),
            "toy" => Ok(Arch::Toy),
            _ => Err(Error::Config(format!("unknown architecture '{s}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub layers: Vec<Layer>,
    pub mode: Mode,
    pub arch: Arch,
    pub num_classes: usize,
    pub input_hw: usize,
}

/// One row of the model summary (activation layers are not listed, matching
/// the published table).
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub name: String,
    pub output_shape: Vec<usize>,
    pub params: usize,
    pub trainable: usize,
    pub non_trainable: usize,
}

fn he_uniform(shape: &[usize], fan_in: usize, rng: &mut SplitMix64) -> Tensor {
    let limit = (6.0 / fan_in as f32).sqrt();
    let n: usize = shape.iter().product();
    Tensor::from_vec(
        shape,
        (0..n).map(|_| rng.next_range(-limit, limit)).collect(),
    )
    .unwrap()
}

fn conv_layer(cin: usize, cout: usize, seed: u64, idx: usize) -> Layer {
    let mut rng = SplitMix64::new(derive_seed(seed, "conv2d", idx as u64));
    Layer::Conv2d(Conv2d {
        w: he_uniform(&[3, 3, cin, cout], 9 * cin, &mut rng),
        b: Tensor::zeros(&[cout]).unwrap(),
    })
}

fn dense_layer(fan_in: usize, fan_out: usize, seed: u64, idx: usize) -> Layer {
    let mut rng = SplitMix64::new(derive_seed(seed, "dense", idx as u64));
    Layer::Dense(Dense {
        w: he_uniform(&[fan_in, fan_out], fan_in, &mut rng),
        b: Tensor::zeros(&[fan_out]).unwrap(),
    })
}

/// Build the published architecture. With (num_classes=6, input_hw=224) the
/// per-layer shapes and parameter counts match the reference table exactly;
/// other values reuse the same rules for desk-scale builds.
pub fn build_reference_model(num_classes: usize, input_hw: usize, seed: u64) -> Result<Model> {
    if num_classes == 0 {
        return Err(Error::Config("num_classes must be >= 1".into()));
    }
    // Six 2x2 pooling stages with floor semantics; the spatial side must
    // stay >= 2 going into each of them.
    {
        let mut s = input_hw;
        for _ in 0..6 {
            if s < 2 {
                return Err(Error::Config(format!(
                    "input_hw {input_hw} too small for six pooling stages"
                )));
            }
            s /= 2;
        }
    }
    let mut layers = Vec::new();
    let mut ci = 0usize; // conv index for seed derivation
    // conv(32) BN ReLU pool BN | conv(32) BN ReLU pool BN | conv(64) BN ReLU pool
    // conv(64) BN ReLU pool | conv(128) BN ReLU pool | conv(128) BN ReLU pool
    let blocks: [(usize, usize, bool); 6] = [
        (3, 32, true),
        (32, 32, true),
        (32, 64, false),
        (64, 64, false),
        (64, 128, false),
        (128, 128, false),
    ];
    for &(cin, cout, post_pool_bn) in &blocks {
        layers.push(conv_layer(cin, cout, seed, ci));
        ci += 1;
        layers.push(Layer::BatchNorm(BatchNorm::new(cout)));
        layers.push(Layer::Relu);
        layers.push(Layer::MaxPool);
        if post_pool_bn {
            layers.push(Layer::BatchNorm(BatchNorm::new(cout)));
        }
    }
    layers.push(Layer::Flatten);
    let mut side = input_hw;
    for _ in 0..6 {
        side /= 2;
    }
    let flat = side * side * 128;
    layers.push(dense_layer(flat, 128, seed, 0));
    layers.push(Layer::Relu);
    layers.push(dense_layer(128, 32, seed, 1));
    layers.push(Layer::Relu);
    layers.push(dense_layer(32, num_classes, seed, 2));
    Ok(Model {
        layers,
        mode: Mode::Train,
        arch: Arch::Reference,
        num_classes,
        input_hw,
    })
}

/// Reduced two-block stack (widths 4 and 8) for gradient checks and
/// desk-scale training. input_hw must be divisible by 4.
pub fn build_toy_model(num_classes: usize, input_hw: usize, seed: u64) -> Result<Model> {
    if input_hw % 4 != 0 || input_hw < 4 {
        return Err(Error::Config(format!(
            "toy input_hw {input_hw} must be a positive multiple of 4"
        )));
    }
    let mut layers = vec![
        conv_layer(3, 4, seed, 0),
        Layer::BatchNorm(BatchNorm::new(4)),
        Layer::Relu,
        Layer::MaxPool,
        conv_layer(4, 8, seed, 1),
        Layer::BatchNorm(BatchNorm::new(8)),
        Layer::Relu,
        Layer::MaxPool,
        Layer::Flatten,
    ];
    let flat = (input_hw / 4) * (input_hw / 4) * 8;
    layers.push(dense_layer(flat, 16, seed, 0));
    layers.push(Layer::Relu);
    layers.push(dense_layer(16, num_classes, seed, 1));
    Ok(Model {
        layers,
        mode: Mode::Train,
        arch: Arch::Toy,
        num_classes,
        input_hw,
    })
}

pub fn build_model(arch: Arch, num_classes: usize, input_hw: usize, seed: u64) -> Result<Model> {
    match arch {
        Arch::Reference => build_reference_model(num_classes, input_hw, seed),
        Arch::Toy => build_toy_model(num_classes, input_hw, seed),
    }
}

/// Gradients for every trainable parameter, flattened in layer order
/// (conv: w, b; BN: gamma, beta; dense: w, b).
#[derive(Clone, Debug)]
pub struct GradientSet {
    pub grads: Vec<Tensor>,
}

impl GradientSet {
    pub fn all_finite(&self) -> bool {
        self.grads.iter().all(|g| g.all_finite())
    }
}

pub struct Tape {
    caches: Vec<Cache>,
}

impl Model {
    pub fn trainable_params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv2d(c) => {
                    out.push(&c.w);
                    out.push(&c.b);
                }
                Layer::BatchNorm(bn) => {
                    out.push(&bn.gamma);
                    out.push(&bn.beta);
                }
                Layer::Dense(d) => {
                    out.push(&d.w);
                    out.push(&d.b);
                }
                _ => {}
            }
        }
        out
    }

    pub fn trainable_params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv2d(c) => {
                    out.push(&mut c.w);
                    out.push(&mut c.b);
                }
                Layer::BatchNorm(bn) => {
                    out.push(&mut bn.gamma);
                    out.push(&mut bn.beta);
                }
                Layer::Dense(d) => {
                    out.push(&mut d.w);
                    out.push(&mut d.b);
                }
                _ => {}
            }
        }
        out
    }

    /// Every parameter tensor including BN moving statistics, in the fixed
    /// checkpoint order.
    pub fn param_tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv2d(c) => {
                    out.push(&c.w);
                    out.push(&c.b);
                }
                Layer::BatchNorm(bn) => {
                    out.push(&bn.gamma);
                    out.push(&bn.beta);
                    out.push(&bn.moving_mean);
                    out.push(&bn.moving_var);
                }
                Layer::Dense(d) => {
                    out.push(&d.w);
                    out.push(&d.b);
                }
                _ => {}
            }
        }
        out
    }

    pub fn param_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv2d(c) => {
                    out.push(&mut c.w);
                    out.push(&mut c.b);
                }
                Layer::BatchNorm(bn) => {
                    out.push(&mut bn.gamma);
                    out.push(&mut bn.beta);
                    out.push(&mut bn.moving_mean);
                    out.push(&mut bn.moving_var);
                }
                Layer::Dense(d) => {
                    out.push(&mut d.w);
                    out.push(&mut d.b);
                }
                _ => {}
            }
        }
        out
    }

    pub fn trainable_param_count(&self) -> usize {
        self.trainable_params().iter().map(|t| t.len()).sum()
    }

    pub fn non_trainable_param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::BatchNorm(bn) => bn.moving_mean.len() + bn.moving_var.len(),
                _ => 0,
            })
            .sum()
    }

    pub fn total_param_count(&self) -> usize {
        self.trainable_param_count() + self.non_trainable_param_count()
    }

    /// Train-mode forward: batch statistics, moving-stat updates, full tape.
    pub fn forward(&mut self, x: &Tensor) -> Result<(Tensor, Tape)> {
        let mode = self.mode;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &mut self.layers {
            let (y, cache) = match layer {
                Layer::Conv2d(c) => conv2d_forward(&cur, &c.w, &c.b)?,
                Layer::BatchNorm(bn) => batchnorm_forward(&cur, bn, mode)?,
                Layer::MaxPool => maxpool_forward(&cur)?,
                Layer::Relu => relu_forward(&cur),
                Layer::Flatten => {
                    let s = cur.shape();
                    let in_shape = [s[0], s[1], s[2], s[3]];
                    (
                        cur.reshape(&[s[0], s[1] * s[2] * s[3]])?,
                        Cache::Flatten { in_shape },
                    )
                }
                Layer::Dense(d) => dense_forward(&cur, &d.w, &d.b)?,
            };
            caches.push(cache);
            cur = y;
        }
        Ok((cur, Tape { caches }))
    }

    /// Inference forward on an immutable model: BN uses moving statistics,
    /// no tape, no mutation.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = match layer {
                Layer::Conv2d(c) => conv2d_forward(&cur, &c.w, &c.b)?.0,
                Layer::BatchNorm(bn) => {
                    let mut frozen = bn.clone();
                    batchnorm_forward(&cur, &mut frozen, Mode::Inference)?.0
                }
                Layer::MaxPool => maxpool_forward(&cur)?.0,
                Layer::Relu => relu_forward(&cur).0,
                Layer::Flatten => {
                    let s = cur.shape();
                    cur.reshape(&[s[0], s[1] * s[2] * s[3]])?
                }
                Layer::Dense(d) => dense_forward(&cur, &d.w, &d.b)?.0,
            };
        }
        Ok(cur)
    }

    /// Backward through the tape; returns gradients congruent with
    /// `trainable_params()`.
    pub fn backward(&self, tape: &Tape, dlogits: &Tensor) -> Result<GradientSet> {
        if tape.caches.len() != self.layers.len() {
            return Err(Error::Shape("tape does not match model".into()));
        }
        let mut upstream = dlogits.clone();
        let mut rev_grads: Vec<Vec<Tensor>> = Vec::new();
        for (layer, cache) in self.layers.iter().zip(tape.caches.iter()).rev() {
            match layer {
                Layer::Conv2d(c) => {
                    let (dx, dw, db) = conv2d_backward(cache, &c.w, &upstream)?;
                    rev_grads.push(vec![dw, db]);
                    upstream = dx;
                }
                Layer::BatchNorm(bn) => {
                    let (dx, dg, dbta) = batchnorm_backward(cache, bn, &upstream)?;
                    rev_grads.push(vec![dg, dbta]);
                    upstream = dx;
                }
                Layer::MaxPool => {
                    upstream = maxpool_backward(cache, &upstream)?;
                    rev_grads.push(vec![]);
                }
                Layer::Relu => {
                    upstream = relu_backward(cache, &upstream)?;
                    rev_grads.push(vec![]);
                }
                Layer::Flatten => {
                    let in_shape = match cache {
                        Cache::Flatten { in_shape } => *in_shape,
                        _ => return Err(Error::Shape("flatten backward: wrong cache".into())),
                    };
                    upstream = upstream.reshape(&in_shape)?;
                    rev_grads.push(vec![]);
                }
                Layer::Dense(d) => {
                    let (dx, dw, db) = dense_backward(cache, &d.w, &upstream)?;
                    rev_grads.push(vec![dw, db]);
                    upstream = dx;
                }
            }
        }
        let grads = rev_grads.into_iter().rev().flatten().collect();
        Ok(GradientSet { grads })
    }

    /// Per-layer summary rows via shape inference (no data is run).
    /// Activation layers are omitted, matching the published table.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut rows = Vec::new();
        let mut shape = vec![self.input_hw, self.input_hw, 3usize];
        let mut counters = [0usize; 4]; // conv, bn, pool, dense
        let keras_name = |base: &str, n: usize| {
            if n == 0 {
                base.to_string()
            } else {
                format!("{base}_{n}")
            }
        };
        for layer in &self.layers {
            match layer {
                Layer::Conv2d(c) => {
                    let cout = c.w.shape()[3];
                    shape = vec![shape[0], shape[1], cout];
                    rows.push(SummaryRow {
                        name: keras_name("conv2d", counters[0]),
                        output_shape: shape.clone(),
                        params: c.w.len() + c.b.len(),
                        trainable: c.w.len() + c.b.len(),
                        non_trainable: 0,
                    });
                    counters[0] += 1;
                }
                Layer::BatchNorm(bn) => {
                    let c = bn.gamma.len();
                    rows.push(SummaryRow {
                        name: keras_name("batch_normalization", counters[1]),
                        output_shape: shape.clone(),
                        params: 4 * c,
                        trainable: 2 * c,
                        non_trainable: 2 * c,
                    });
                    counters[1] += 1;
                }
                Layer::MaxPool => {
                    shape = vec![shape[0] / 2, shape[1] / 2, shape[2]];
                    rows.push(SummaryRow {
                        name: keras_name("max_pooling2d", counters[2]),
                        output_shape: shape.clone(),
                        params: 0,
                        trainable: 0,
                        non_trainable: 0,
                    });
                    counters[2] += 1;
                }
                Layer::Relu => {}
                Layer::Flatten => {
                    shape = vec![shape[0] * shape[1] * shape[2]];
                    rows.push(SummaryRow {
                        name: "flatten".to_string(),
                        output_shape: shape.clone(),
                        params: 0,
                        trainable: 0,
                        non_trainable: 0,
                    });
                }
                Layer::Dense(d) => {
                    shape = vec![d.w.shape()[1]];
                    rows.push(SummaryRow {
                        name: keras_name("dense", counters[3]),
                        output_shape: shape.clone(),
                        params: d.w.len() + d.b.len(),
                        trainable: d.w.len() + d.b.len(),
                        non_trainable: 0,
                    });
                    counters[3] += 1;
                }
            }
        }
        rows
    }
}

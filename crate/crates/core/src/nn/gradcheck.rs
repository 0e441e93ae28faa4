//! Central finite-difference verification of every analytic backward pass.
//! The numeric side only ever calls forward code, so it stays independent of
//! the gradients it checks.

use crate::error::Result;
use crate::nn::layers::{
    batchnorm_backward, batchnorm_forward, conv2d_backward, conv2d_forward, dense_backward,
    dense_forward, maxpool_backward, maxpool_forward, softmax_cross_entropy, BatchNorm, Mode,
};
use crate::nn::model::{build_toy_model, Model};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct CheckReport {
    pub name: String,
    pub max_rel_err: f32,
    pub coords_checked: usize,
    /// (tensor index, flat coordinate, analytic, numeric) of the worst coord.
    pub worst: Option<(usize, usize, f32, f32)>,
}

impl CheckReport {
    pub fn passes(&self, tolerance: f32) -> bool {
        self.max_rel_err < tolerance
    }
}

/// Relative disagreement; coordinates where both sides are tiny count as
/// agreeing (finite differences have no signal there at 32-bit).
pub fn relative_error(analytic: f32, numeric: f32) -> f32 {
    let (a, n) = (analytic.abs(), numeric.abs());
    if a < 1e-4 && n < 1e-4 {
        return 0.0;
    }
    (analytic - numeric).abs() / a.max(n)
}

fn random(shape: &[usize], rng: &mut SplitMix64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.next_range(-1.0, 1.0)).collect()).unwrap()
}

/// Compare analytic gradient tensors against central differences of `loss`,
/// perturbing each listed tensor coordinate by coordinate.
fn compare<F>(
    name: &str,
    tensors: &mut [&mut Tensor],
    analytic: &[Tensor],
    eps_scale: f32,
    mut loss: F,
) -> CheckReport
where
    F: FnMut(&[&Tensor]) -> f64,
{
    let mut max_rel = 0.0f32;
    let mut worst = None;
    let mut checked = 0usize;
    for ti in 0..tensors.len() {
        for i in 0..tensors[ti].len() {
            let orig = tensors[ti].data()[i];
            let eps = eps_scale * orig.abs().max(1.0);
            tensors[ti].data_mut()[i] = orig + eps;
            let lp = loss(&tensors.iter().map(|t| &**t).collect::<Vec<_>>());
            tensors[ti].data_mut()[i] = orig - eps;
            let lm = loss(&tensors.iter().map(|t| &**t).collect::<Vec<_>>());
            tensors[ti].data_mut()[i] = orig;
            let numeric = ((lp - lm) / (2.0 * eps as f64)) as f32;
            let a = analytic[ti].data()[i];
            let rel = relative_error(a, numeric);
            if rel > max_rel {
                max_rel = rel;
                worst = Some((ti, i, a, numeric));
            }
            checked += 1;
        }
    }
    CheckReport {
        name: name.to_string(),
        max_rel_err: max_rel,
        coords_checked: checked,
        worst,
    }
}

fn weighted_sum(y: &Tensor, r: &Tensor) -> f64 {
    y.data()
        .iter()
        .zip(r.data())
        .map(|(&a, &b)| a as f64 * b as f64)
        .sum()
}

pub fn check_conv(seed: u64) -> Result<CheckReport> {
    let mut rng = SplitMix64::new(seed);
    let mut x = random(&[2, 5, 5, 3], &mut rng);
    let mut w = random(&[3, 3, 3, 4], &mut rng);
    let mut b = random(&[4], &mut rng);
    let (y, cache) = conv2d_forward(&x, &w, &b)?;
    let r = random(y.shape(), &mut rng);
    let (dx, dw, db) = conv2d_backward(&cache, &w, &r)?;
    let rr = r.clone();
    Ok(compare(
        "conv2d",
        &mut [&mut x, &mut w, &mut b],
        &[dx, dw, db],
        // The probe loss is linear in every perturbed coordinate, so a large
        // step costs nothing in truncation and buys signal over f32 rounding.
        1e-1,
        move |t| {
            let (y, _) = conv2d_forward(t[0], t[1], t[2]).unwrap();
            weighted_sum(&y, &rr)
        },
    ))
}

/// f64 re-derivation of the train-mode normalization, so the numeric side of
/// the check is free of f32 rounding noise (and independent of the forward
/// code it verifies).
fn bn_probe_loss(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64, r: &Tensor) -> f64 {
    let c = *x.shape().last().unwrap();
    let m = (x.len() / c) as f64;
    let mut mean = vec![0.0f64; c];
    for (i, &v) in x.data().iter().enumerate() {
        mean[i % c] += v as f64;
    }
    for mu in &mut mean {
        *mu /= m;
    }
    let mut var = vec![0.0f64; c];
    for (i, &v) in x.data().iter().enumerate() {
        let d = v as f64 - mean[i % c];
        var[i % c] += d * d;
    }
    for va in &mut var {
        *va /= m;
    }
    let mut loss = 0.0f64;
    for (i, &v) in x.data().iter().enumerate() {
        let ch = i % c;
        let h = (v as f64 - mean[ch]) / (var[ch] + eps).sqrt();
        let y = gamma.data()[ch] as f64 * h + beta.data()[ch] as f64;
        loss += y * r.data()[i] as f64;
    }
    loss
}

pub fn check_batchnorm(seed: u64) -> Result<CheckReport> {
    let mut rng = SplitMix64::new(seed);
    let mut x = random(&[4, 3, 3, 2], &mut rng);
    let mut bn = BatchNorm::new(2);
    bn.gamma = random(&[2], &mut rng).map(|v| 1.0 + 0.3 * v);
    bn.beta = random(&[2], &mut rng);
    let (_, cache) = batchnorm_forward(&x, &mut bn.clone(), Mode::Train)?;
    let r = random(&[4, 3, 3, 2], &mut rng);
    let (dx, dgamma, dbeta) = batchnorm_backward(&cache, &bn, &r)?;
    let rr = r.clone();
    let eps = bn.eps as f64;
    let mut gamma = bn.gamma.clone();
    let mut beta = bn.beta.clone();
    Ok(compare(
        "batch_norm",
        &mut [&mut x, &mut gamma, &mut beta],
        &[dx, dgamma, dbeta],
        1e-3,
        move |t| bn_probe_loss(t[0], t[1], t[2], eps, &rr),
    ))
}

pub fn check_maxpool(seed: u64) -> Result<CheckReport> {
    // Distinct well-separated values keep every window off its tie set, so
    // the small finite-difference step never flips an argmax.
    let mut rng = SplitMix64::new(seed);
    let n = 2 * 6 * 6 * 2;
    let mut vals: Vec<f32> = (0..n).map(|i| (i as f32 - n as f32 / 2.0) * 0.05).collect();
    crate::rng::shuffle_in_place(&mut vals, &mut rng);
    let mut x = Tensor::from_vec(&[2, 6, 6, 2], vals).unwrap();
    let (y, cache) = maxpool_forward(&x)?;
    let r = random(y.shape(), &mut rng);
    let dx = maxpool_backward(&cache, &r)?;
    let rr = r.clone();
    Ok(compare(
        "max_pool",
        &mut [&mut x],
        &[dx],
        1e-3,
        move |t| {
            let (y, _) = maxpool_forward(t[0]).unwrap();
            weighted_sum(&y, &rr)
        },
    ))
}

pub fn check_dense(seed: u64) -> Result<CheckReport> {
    let mut rng = SplitMix64::new(seed);
    let mut x = random(&[3, 4], &mut rng);
    let mut w = random(&[4, 5], &mut rng);
    let mut b = random(&[5], &mut rng);
    let (y, cache) = dense_forward(&x, &w, &b)?;
    let r = random(y.shape(), &mut rng);
    let (dx, dw, db) = dense_backward(&cache, &w, &r)?;
    let rr = r.clone();
    Ok(compare(
        "dense",
        &mut [&mut x, &mut w, &mut b],
        &[dx, dw, db],
        1e-2,
        move |t| {
            let (y, _) = dense_forward(t[0], t[1], t[2]).unwrap();
            weighted_sum(&y, &rr)
        },
    ))
}

pub fn check_softmax_ce(seed: u64) -> Result<CheckReport> {
    let mut rng = SplitMix64::new(seed);
    let mut logits = random(&[5, 6], &mut rng);
    let labels: Vec<usize> = (0..5).map(|_| rng.next_below(6)).collect();
    let (_, dlogits) = softmax_cross_entropy(&logits, &labels)?;
    let labels2 = labels.clone();
    Ok(compare(
        "softmax_ce",
        &mut [&mut logits],
        &[dlogits],
        1e-2,
        move |t| {
            let (loss, _) = softmax_cross_entropy(t[0], &labels2).unwrap();
            loss as f64
        },
    ))
}

pub fn per_layer_checks(seed: u64) -> Result<Vec<CheckReport>> {
    Ok(vec![
        check_conv(seed)?,
        check_batchnorm(seed.wrapping_add(1))?,
        check_maxpool(seed.wrapping_add(2))?,
        check_dense(seed.wrapping_add(3))?,
        check_softmax_ce(seed.wrapping_add(4))?,
    ])
}

fn model_loss(model: &Model, x: &Tensor, labels: &[usize]) -> f64 {
    let mut probe = model.clone();
    let (logits, _) = probe.forward(x).unwrap();
    let (loss, _) = softmax_cross_entropy(&logits, labels).unwrap();
    loss as f64
}

/// Finite-difference check over every trainable coordinate of the toy model
/// (8x8 input, 3 classes, 2-sample batch).
///
/// `corrupt` deliberately falsifies the first conv weight gradient before
/// comparison; it exists so the CLI can demonstrate that a broken gradient
/// is detected.
pub fn check_full_toy_model(seed: u64, corrupt: bool) -> Result<CheckReport> {
    let mut model = build_toy_model(3, 8, seed)?;
    let mut rng = SplitMix64::new(seed.wrapping_add(10));
    let x = Tensor::from_vec(
        &[2, 8, 8, 3],
        (0..2 * 8 * 8 * 3).map(|_| rng.next_f32()).collect(),
    )?;
    let labels = vec![0usize, 2usize];

    let (logits, tape) = model.clone().forward(&x)?;
    let (_, dlogits) = softmax_cross_entropy(&logits, &labels)?;
    let mut grads = model.clone().backward(&tape, &dlogits)?;
    if corrupt {
        for g in grads.grads[0].data_mut() {
            *g += 1.0;
        }
    }

    let mut max_rel = 0.0f32;
    let mut worst = None;
    let mut checked = 0usize;
    let l0 = model_loss(&model, &x, &labels);
    let n_tensors = model.trainable_params().len();
    for ti in 0..n_tensors {
        let len = model.trainable_params()[ti].len();
        for i in 0..len {
            let orig = model.trainable_params()[ti].data()[i];
            let eps = 1e-3 * orig.abs().max(1.0);
            model.trainable_params_mut()[ti].data_mut()[i] = orig + eps;
            let lp = model_loss(&model, &x, &labels);
            model.trainable_params_mut()[ti].data_mut()[i] = orig - eps;
            let lm = model_loss(&model, &x, &labels);
            model.trainable_params_mut()[ti].data_mut()[i] = orig;
            // Coordinates sitting on a relu/pool kink have different one-sided
            // slopes; central differences say nothing there, so skip them.
            let fwd = ((lp - l0) / eps as f64) as f32;
            let bwd = ((l0 - lm) / eps as f64) as f32;
            if relative_error(fwd, bwd) > 0.02 {
                continue;
            }
            let numeric = ((lp - lm) / (2.0 * eps as f64)) as f32;
            let a = grads.grads[ti].data()[i];
            // Floor the denominator at the gradient scale of this problem so
            // sub-noise coordinates are judged absolutely, not relatively;
            // the per-layer checks cover the small-magnitude range exactly.
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(5e-2);
            if rel > max_rel {
                max_rel = rel;
                worst = Some((ti, i, a, numeric));
            }
            checked += 1;
        }
    }
    Ok(CheckReport {
        name: "toy_model".to_string(),
        max_rel_err: max_rel,
        coords_checked: checked,
        worst,
    })
}

//! Layer kernels: 3x3 same-padding convolution (im2col + matmul), batch
//! normalization, 2x2 stride-2 max pooling, dense, ReLU, and the
//! softmax/cross-entropy head. Each op has an exact analytic backward.

use crate::error::{Error, Result};
use crate::tensor::{matmul, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

/// 3x3, stride 1, same-padding convolution. Weights [3,3,Cin,Cout], bias [Cout].
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub w: Tensor,
    pub b: Tensor,
}

#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub moving_mean: Tensor,
    pub moving_var: Tensor,
    pub eps: f32,
    pub momentum: f32,
}

#[derive(Clone, Debug)]
pub struct Dense {
    pub w: Tensor,
    pub b: Tensor,
}

impl BatchNorm {
    pub fn new(channels: usize) -> BatchNorm {
        BatchNorm {
            gamma: Tensor::new(&[channels], 1.0).unwrap(),
            beta: Tensor::zeros(&[channels]).unwrap(),
            moving_mean: Tensor::zeros(&[channels]).unwrap(),
            moving_var: Tensor::new(&[channels], 1.0).unwrap(),
            eps: 1e-3,
            momentum: 0.99,
        }
    }
}

/// Per-layer cached activations consumed by the backward pass.
#[derive(Clone, Debug)]
pub enum Cache {
    Conv {
        cols: Tensor,
        in_shape: [usize; 4],
    },
    Bn {
        xhat: Tensor,
        inv_std: Vec<f32>,
    },
    Pool {
        argmax: Vec<usize>,
        in_shape: [usize; 4],
    },
    Relu {
        mask: Vec<bool>,
    },
    Flatten {
        in_shape: [usize; 4],
    },
    Dense {
        x: Tensor,
    },
}

fn conv_dims(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<(usize, usize, usize, usize, usize)> {
    if x.rank() != 4 || w.rank() != 4 {
        return Err(Error::Shape(format!(
            "conv2d expects rank-4 input and weights, got {:?} / {:?}",
            x.shape(),
            w.shape()
        )));
    }
    let [n, h, wd, cin] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    if w.shape()[0] != 3 || w.shape()[1] != 3 || w.shape()[2] != cin {
        return Err(Error::Shape(format!(
            "conv2d weight shape {:?} incompatible with input {:?}",
            w.shape(),
            x.shape()
        )));
    }
    let cout = w.shape()[3];
    if b.shape() != [cout] {
        return Err(Error::Shape(format!(
            "conv2d bias shape {:?}, expected [{cout}]",
            b.shape()
        )));
    }
    Ok((n, h, wd, cin, cout))
}

/// Rearrange 3x3 windows (zero padded) into rows: output [N*H*W, 9*Cin].
fn im2col(x: &Tensor) -> Tensor {
    let [n, h, w, cin] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let mut cols = vec![0.0f32; n * h * w * 9 * cin];
    let row_len = 9 * cin;
    for ni in 0..n {
        for i in 0..h {
            for j in 0..w {
                let row = ((ni * h + i) * w + j) * row_len;
                for di in 0..3usize {
                    let si = i as isize + di as isize - 1;
                    if si < 0 || si >= h as isize {
                        continue;
                    }
                    for dj in 0..3usize {
                        let sj = j as isize + dj as isize - 1;
                        if sj < 0 || sj >= w as isize {
                            continue;
                        }
                        let src = ((ni * h + si as usize) * w + sj as usize) * cin;
                        let dst = row + (di * 3 + dj) * cin;
                        cols[dst..dst + cin].copy_from_slice(&x.data()[src..src + cin]);
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[n * h * w, row_len], cols).unwrap()
}

/// Scatter-add columns back into image layout (adjoint of im2col).
fn col2im(dcols: &Tensor, in_shape: [usize; 4]) -> Tensor {
    let [n, h, w, cin] = in_shape;
    let mut dx = vec![0.0f32; n * h * w * cin];
    let row_len = 9 * cin;
    for ni in 0..n {
        for i in 0..h {
            for j in 0..w {
                let row = ((ni * h + i) * w + j) * row_len;
                for di in 0..3usize {
                    let si = i as isize + di as isize - 1;
                    if si < 0 || si >= h as isize {
                        continue;
                    }
                    for dj in 0..3usize {
                        let sj = j as isize + dj as isize - 1;
                        if sj < 0 || sj >= w as isize {
                            continue;
                        }
                        let dst = ((ni * h + si as usize) * w + sj as usize) * cin;
                        let src = row + (di * 3 + dj) * cin;
                        for c in 0..cin {
                            dx[dst + c] += dcols.data()[src + c];
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[n, h, w, cin], dx).unwrap()
}

pub fn conv2d_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<(Tensor, Cache)> {
    let (n, h, wd, cin, cout) = conv_dims(x, w, b)?;
    let cols = im2col(x);
    let wmat = w.reshape(&[9 * cin, cout])?;
    let mut y = matmul(&cols, &wmat)?;
    for row in 0..n * h * wd {
        for o in 0..cout {
            y.data_mut()[row * cout + o] += b.data()[o];
        }
    }
    Ok((
        y.reshape(&[n, h, wd, cout])?,
        Cache::Conv {
            cols,
            in_shape: [n, h, wd, cin],
        },
    ))
}

pub fn conv2d_backward(
    cache: &Cache,
    w: &Tensor,
    upstream: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (cols, in_shape) = match cache {
        Cache::Conv { cols, in_shape } => (cols, *in_shape),
        _ => return Err(Error::Shape("conv2d_backward: wrong cache".into())),
    };
    let [n, h, wd, cin] = in_shape;
    let cout = w.shape()[3];
    if upstream.shape() != [n, h, wd, cout] {
        return Err(Error::Shape(format!(
            "conv2d_backward upstream shape {:?}",
            upstream.shape()
        )));
    }
    let dy = upstream.reshape(&[n * h * wd, cout])?;
    let dw = matmul(&cols.transpose()?, &dy)?.reshape(&[3, 3, cin, cout])?;
    let mut db = vec![0.0f32; cout];
    for row in 0..n * h * wd {
        for o in 0..cout {
            db[o] += dy.data()[row * cout + o];
        }
    }
    let wmat = w.reshape(&[9 * cin, cout])?;
    let dcols = matmul(&dy, &wmat.transpose()?)?;
    let dx = col2im(&dcols, in_shape);
    Ok((dx, dw, Tensor::from_vec(&[cout], db)?))
}

fn channel_moments(x: &Tensor) -> (Vec<f32>, Vec<f32>) {
    let c = *x.shape().last().unwrap();
    let m = x.len() / c;
    let mut mean = vec![0.0f32; c];
    for (i, &v) in x.data().iter().enumerate() {
        mean[i % c] += v;
    }
    for v in &mut mean {
        *v /= m as f32;
    }
    let mut var = vec![0.0f32; c];
    for (i, &v) in x.data().iter().enumerate() {
        let d = v - mean[i % c];
        var[i % c] += d * d;
    }
    for v in &mut var {
        *v /= m as f32;
    }
    (mean, var)
}

/// Train mode: normalize by batch moments over every non-channel axis and
/// update moving statistics. Inference mode: normalize by moving statistics.
pub fn batchnorm_forward(x: &Tensor, bn: &mut BatchNorm, mode: Mode) -> Result<(Tensor, Cache)> {
    let c = *x.shape().last().unwrap();
    if bn.gamma.len() != c {
        return Err(Error::Shape(format!(
            "batchnorm width {} vs input channels {c}",
            bn.gamma.len()
        )));
    }
    if x.len() == 0 || (mode == Mode::Train && x.shape()[0] == 0) {
        return Err(Error::Numeric("batchnorm on empty batch".into()));
    }
    let (mean, var): (Vec<f32>, Vec<f32>) = match mode {
        Mode::Train => channel_moments(x),
        Mode::Inference => (bn.moving_mean.data().to_vec(), bn.moving_var.data().to_vec()),
    };
    let inv_std: Vec<f32> = var.iter().map(|&v| 1.0 / (v + bn.eps).sqrt()).collect();
    let mut xhat = vec![0.0f32; x.len()];
    let mut y = vec![0.0f32; x.len()];
    for (i, &v) in x.data().iter().enumerate() {
        let ch = i % c;
        let h = (v - mean[ch]) * inv_std[ch];
        xhat[i] = h;
        y[i] = bn.gamma.data()[ch] * h + bn.beta.data()[ch];
    }
    if mode == Mode::Train {
        let mom = bn.momentum;
        for ch in 0..c {
            bn.moving_mean.data_mut()[ch] = mom * bn.moving_mean.data()[ch] + (1.0 - mom) * mean[ch];
            bn.moving_var.data_mut()[ch] = mom * bn.moving_var.data()[ch] + (1.0 - mom) * var[ch];
        }
    }
    Ok((
        Tensor::from_vec(x.shape(), y)?,
        Cache::Bn {
            xhat: Tensor::from_vec(x.shape(), xhat)?,
            inv_std,
        },
    ))
}

/// Exact gradient of the train-mode forward, including the dependence of the
/// batch moments on x.
pub fn batchnorm_backward(
    cache: &Cache,
    bn: &BatchNorm,
    upstream: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (xhat, inv_std) = match cache {
        Cache::Bn { xhat, inv_std } => (xhat, inv_std),
        _ => return Err(Error::Shape("batchnorm_backward: wrong cache".into())),
    };
    let c = *upstream.shape().last().unwrap();
    let m = (upstream.len() / c) as f32;
    let mut dgamma = vec![0.0f32; c];
    let mut dbeta = vec![0.0f32; c];
    let mut sum_dxhat = vec![0.0f32; c];
    let mut sum_dxhat_xhat = vec![0.0f32; c];
    for (i, &dy) in upstream.data().iter().enumerate() {
        let ch = i % c;
        let h = xhat.data()[i];
        dgamma[ch] += dy * h;
        dbeta[ch] += dy;
        let dxh = dy * bn.gamma.data()[ch];
        sum_dxhat[ch] += dxh;
        sum_dxhat_xhat[ch] += dxh * h;
    }
    let mut dx = vec![0.0f32; upstream.len()];
    for (i, &dy) in upstream.data().iter().enumerate() {
        let ch = i % c;
        let dxh = dy * bn.gamma.data()[ch];
        dx[i] = inv_std[ch] / m
            * (m * dxh - sum_dxhat[ch] - xhat.data()[i] * sum_dxhat_xhat[ch]);
    }
    Ok((
        Tensor::from_vec(upstream.shape(), dx)?,
        Tensor::from_vec(&[c], dgamma)?,
        Tensor::from_vec(&[c], dbeta)?,
    ))
}

/// 2x2 stride-2 max pool with floor semantics (odd trailing row/col dropped).
/// Ties go to the first index in row-major window order.
pub fn maxpool_forward(x: &Tensor) -> Result<(Tensor, Cache)> {
    if x.rank() != 4 {
        return Err(Error::Shape(format!("maxpool expects rank 4, got {:?}", x.shape())));
    }
    let [n, h, w, c] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    if h < 2 || w < 2 {
        return Err(Error::Shape(format!("maxpool needs H,W >= 2, got {h}x{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut y = vec![0.0f32; n * oh * ow * c];
    let mut argmax = vec![0usize; n * oh * ow * c];
    for ni in 0..n {
        for i in 0..oh {
            for j in 0..ow {
                for ch in 0..c {
                    let mut best = f32::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for di in 0..2 {
                        for dj in 0..2 {
                            let idx = ((ni * h + 2 * i + di) * w + 2 * j + dj) * c + ch;
                            let v = x.data()[idx];
                            if v > best {
                                best = v;
                                best_idx = idx;
                            }
                        }
                    }
                    let o = ((ni * oh + i) * ow + j) * c + ch;
                    y[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
    }
    Ok((
        Tensor::from_vec(&[n, oh, ow, c], y)?,
        Cache::Pool {
            argmax,
            in_shape: [n, h, w, c],
        },
    ))
}

pub fn maxpool_backward(cache: &Cache, upstream: &Tensor) -> Result<Tensor> {
    let (argmax, in_shape) = match cache {
        Cache::Pool { argmax, in_shape } => (argmax, *in_shape),
        _ => return Err(Error::Shape("maxpool_backward: wrong cache".into())),
    };
    if upstream.len() != argmax.len() {
        return Err(Error::Shape("maxpool_backward upstream size mismatch".into()));
    }
    let mut dx = vec![0.0f32; in_shape.iter().product()];
    for (o, &src) in argmax.iter().enumerate() {
        dx[src] += upstream.data()[o];
    }
    Tensor::from_vec(&in_shape, dx)
}

pub fn relu_forward(x: &Tensor) -> (Tensor, Cache) {
    let mask: Vec<bool> = x.data().iter().map(|&v| v > 0.0).collect();
    (x.map(|v| v.max(0.0)), Cache::Relu { mask })
}

pub fn relu_backward(cache: &Cache, upstream: &Tensor) -> Result<Tensor> {
    let mask = match cache {
        Cache::Relu { mask } => mask,
        _ => return Err(Error::Shape("relu_backward: wrong cache".into())),
    };
    let data = upstream
        .data()
        .iter()
        .zip(mask.iter())
        .map(|(&g, &m)| if m { g } else { 0.0 })
        .collect();
    Tensor::from_vec(upstream.shape(), data)
}

pub fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<(Tensor, Cache)> {
    let mut y = matmul(x, w)?;
    let out = w.shape()[1];
    for row in 0..y.shape()[0] {
        for o in 0..out {
            y.data_mut()[row * out + o] += b.data()[o];
        }
    }
    Ok((y, Cache::Dense { x: x.clone() }))
}

pub fn dense_backward(
    cache: &Cache,
    w: &Tensor,
    upstream: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let x = match cache {
        Cache::Dense { x } => x,
        _ => return Err(Error::Shape("dense_backward: wrong cache".into())),
    };
    let dw = matmul(&x.transpose()?, upstream)?;
    let dx = matmul(upstream, &w.transpose()?)?;
    let out = w.shape()[1];
    let mut db = vec![0.0f32; out];
    for row in 0..upstream.shape()[0] {
        for o in 0..out {
            db[o] += upstream.data()[row * out + o];
        }
    }
    Ok((dx, dw, Tensor::from_vec(&[out], db)?))
}

/// Mean negative log-likelihood of a max-subtracted softmax, plus its
/// gradient (softmax - onehot) / N.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f32, Tensor)> {
    if logits.rank() != 2 {
        return Err(Error::Shape(format!(
            "softmax expects [N,K], got {:?}",
            logits.shape()
        )));
    }
    let (n, k) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != n {
        return Err(Error::Shape(format!("{n} rows but {} labels", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Label {
            label: bad,
            classes: k,
        });
    }
    let mut dlogits = vec![0.0f32; n * k];
    let mut loss = 0.0f64;
    for i in 0..n {
        let row = &logits.data()[i * k..(i + 1) * k];
        let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let exps: Vec<f32> = row.iter().map(|&v| (v - max).exp()).collect();
        let sum: f32 = exps.iter().sum();
        for j in 0..k {
            let p = exps[j] / sum;
            dlogits[i * k + j] = (p - if j == labels[i] { 1.0 } else { 0.0 }) / n as f32;
        }
        loss += -((exps[labels[i]] / sum).max(f32::MIN_POSITIVE).ln()) as f64;
    }
    Ok((
        (loss / n as f64) as f32,
        Tensor::from_vec(&[n, k], dlogits)?,
    ))
}

/// Softmax probabilities (no loss), used at evaluation time.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let (n, k) = (logits.shape()[0], logits.shape()[1]);
    let mut out = vec![0.0f32; n * k];
    for i in 0..n {
        let row = &logits.data()[i * k..(i + 1) * k];
        let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let exps: Vec<f32> = row.iter().map(|&v| (v - max).exp()).collect();
        let sum: f32 = exps.iter().sum();
        for j in 0..k {
            out[i * k + j] = exps[j] / sum;
        }
    }
    Tensor::from_vec(&[n, k], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = SplitMix64::new(seed);
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.next_f32() * 2.0 - 1.0).collect()).unwrap()
    }

    /// Direct 6-loop convolution, the independent oracle for the im2col path.
    fn conv_naive(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
        let [n, h, wd, cin] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
        let cout = w.shape()[3];
        let mut y = Tensor::zeros(&[n, h, wd, cout]).unwrap();
        for ni in 0..n {
            for i in 0..h {
                for j in 0..wd {
                    for o in 0..cout {
                        let mut acc = b.data()[o];
                        for di in 0..3isize {
                            for dj in 0..3isize {
                                let si = i as isize + di - 1;
                                let sj = j as isize + dj - 1;
                                if si < 0 || sj < 0 || si >= h as isize || sj >= wd as isize {
                                    continue;
                                }
                                for c in 0..cin {
                                    acc += x.at4(ni, si as usize, sj as usize, c)
                                        * w.at4(di as usize, dj as usize, c, o);
                                }
                            }
                        }
                        y.set4(ni, i, j, o, acc);
                    }
                }
            }
        }
        y
    }

    #[test]
    fn conv_identity_kernel_passes_through() {
        let x = random(&[1, 5, 5, 1], 1);
        let mut w = Tensor::zeros(&[3, 3, 1, 1]).unwrap();
        w.set4(1, 1, 0, 0, 1.0);
        let b = Tensor::zeros(&[1]).unwrap();
        let (y, _) = conv2d_forward(&x, &w, &b).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn conv_box_sum_on_constant_input() {
        let x = Tensor::new(&[1, 5, 5, 1], 1.0).unwrap();
        let w = Tensor::new(&[3, 3, 1, 1], 1.0).unwrap();
        let b = Tensor::zeros(&[1]).unwrap();
        let (y, _) = conv2d_forward(&x, &w, &b).unwrap();
        assert_eq!(y.at4(0, 2, 2, 0), 9.0);
        assert_eq!(y.at4(0, 0, 0, 0), 4.0);
        assert_eq!(y.at4(0, 0, 2, 0), 6.0);
    }

    #[test]
    fn conv_matches_naive_oracle() {
        let x = random(&[2, 5, 5, 3], 11);
        let w = random(&[3, 3, 3, 4], 12);
        let b = random(&[4], 13);
        let (y, _) = conv2d_forward(&x, &w, &b).unwrap();
        let oracle = conv_naive(&x, &w, &b);
        for (a, e) in y.data().iter().zip(oracle.data()) {
            assert!((a - e).abs() < 1e-5);
        }
    }

    #[test]
    fn conv_backward_zero_upstream_gives_zero() {
        let x = random(&[1, 4, 4, 2], 3);
        let w = random(&[3, 3, 2, 2], 4);
        let b = random(&[2], 5);
        let (_, cache) = conv2d_forward(&x, &w, &b).unwrap();
        let up = Tensor::zeros(&[1, 4, 4, 2]).unwrap();
        let (dx, dw, db) = conv2d_backward(&cache, &w, &up).unwrap();
        assert!(dx.data().iter().all(|&v| v == 0.0));
        assert!(dw.data().iter().all(|&v| v == 0.0));
        assert!(db.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_backward_identity_kernel_sum_loss() {
        // loss = sum(y) with identity kernel: dx is all ones.
        let x = random(&[1, 4, 4, 1], 6);
        let mut w = Tensor::zeros(&[3, 3, 1, 1]).unwrap();
        w.set4(1, 1, 0, 0, 1.0);
        let b = Tensor::zeros(&[1]).unwrap();
        let (_, cache) = conv2d_forward(&x, &w, &b).unwrap();
        let up = Tensor::new(&[1, 4, 4, 1], 1.0).unwrap();
        let (dx, _, db) = conv2d_backward(&cache, &w, &up).unwrap();
        assert!(dx.data().iter().all(|&v| v == 1.0));
        assert_eq!(db.data(), &[16.0]);
    }

    #[test]
    fn batchnorm_normalizes_in_train_mode() {
        let x = random(&[8, 3, 3, 4], 21);
        let mut bn = BatchNorm::new(4);
        let (y, _) = batchnorm_forward(&x, &mut bn, Mode::Train).unwrap();
        let c = 4;
        let m = y.len() / c;
        for ch in 0..c {
            let vals: Vec<f32> = y.data().iter().skip(ch).step_by(c).cloned().collect();
            let mean: f32 = vals.iter().sum::<f32>() / m as f32;
            let var: f32 = vals.iter().map(|v| (v - mean).powi(2)).sum::<f32>() / m as f32;
            assert!(mean.abs() < 1e-4, "channel {ch} mean {mean}");
            // eps = 1e-3 shrinks the variance slightly below 1.
            assert!((var - 1.0).abs() < 0.05, "channel {ch} var {var}");
        }
    }

    #[test]
    fn batchnorm_constant_channel_outputs_beta() {
        let x = Tensor::new(&[4, 2, 2, 2], 0.7).unwrap();
        let mut bn = BatchNorm::new(2);
        bn.beta = Tensor::from_vec(&[2], vec![0.3, -0.2]).unwrap();
        let (y, _) = batchnorm_forward(&x, &mut bn, Mode::Train).unwrap();
        for (i, &v) in y.data().iter().enumerate() {
            assert!((v - bn.beta.data()[i % 2]).abs() < 1e-4);
        }
    }

    #[test]
    fn batchnorm_moving_stats_update_and_inference() {
        let x = random(&[16, 2, 2, 3], 30);
        let mut bn = BatchNorm::new(3);
        let (_, _) = batchnorm_forward(&x, &mut bn, Mode::Train).unwrap();
        assert!(bn.moving_mean.data().iter().any(|&v| v != 0.0));
        let frozen = bn.clone();
        let (y_inf, _) = batchnorm_forward(&x, &mut bn, Mode::Inference).unwrap();
        assert_eq!(bn.moving_mean, frozen.moving_mean);
        assert!(y_inf.all_finite());
    }

    #[test]
    fn batchnorm_dbeta_is_upstream_sum() {
        let x = random(&[3, 2, 2, 2], 40);
        let mut bn = BatchNorm::new(2);
        let (_, cache) = batchnorm_forward(&x, &mut bn, Mode::Train).unwrap();
        let up = random(&[3, 2, 2, 2], 41);
        let (_, _, dbeta) = batchnorm_backward(&cache, &bn, &up).unwrap();
        for ch in 0..2 {
            let expect: f32 = up.data().iter().skip(ch).step_by(2).sum();
            assert!((dbeta.data()[ch] - expect).abs() < 1e-4);
        }
    }

    #[test]
    fn maxpool_basics_and_oracle() {
        let x = Tensor::from_vec(&[1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, _) = maxpool_forward(&x).unwrap();
        assert_eq!(y.data(), &[4.0]);

        let x = random(&[1, 7, 7, 2], 50);
        let (y, _) = maxpool_forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 3, 3, 2]);

        let x = random(&[1, 6, 6, 2], 51);
        let (y, _) = maxpool_forward(&x).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                for ch in 0..2 {
                    let mut best = f32::NEG_INFINITY;
                    for di in 0..2 {
                        for dj in 0..2 {
                            best = best.max(x.at4(0, 2 * i + di, 2 * j + dj, ch));
                        }
                    }
                    assert_eq!(y.at4(0, i, j, ch), best);
                }
            }
        }
        assert!(maxpool_forward(&random(&[1, 1, 4, 1], 0)).is_err());
    }

    #[test]
    fn maxpool_backward_routing_and_ties() {
        let x = Tensor::from_vec(&[1, 2, 2, 1], vec![5.0, 5.0, 5.0, 5.0]).unwrap();
        let (_, cache) = maxpool_forward(&x).unwrap();
        let up = Tensor::from_vec(&[1, 1, 1, 1], vec![2.0]).unwrap();
        let dx = maxpool_backward(&cache, &up).unwrap();
        // Tied window: gradient goes to the first index only.
        assert_eq!(dx.data(), &[2.0, 0.0, 0.0, 0.0]);

        let x = Tensor::from_vec(&[1, 2, 2, 1], vec![1.0, 9.0, 2.0, 3.0]).unwrap();
        let (_, cache) = maxpool_forward(&x).unwrap();
        let dx = maxpool_backward(&cache, &up).unwrap();
        assert_eq!(dx.data(), &[0.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn dense_identity_and_param_count() {
        let x = random(&[3, 4], 60);
        let mut w = Tensor::zeros(&[4, 4]).unwrap();
        for i in 0..4 {
            w.data_mut()[i * 4 + i] = 1.0;
        }
        let b = Tensor::zeros(&[4]).unwrap();
        let (y, _) = dense_forward(&x, &w, &b).unwrap();
        assert_eq!(y.data(), x.data());
        // Table-1 dense head: 1152 -> 128.
        assert_eq!(1152 * 128 + 128, 147_584);
    }

    #[test]
    fn softmax_ce_uniform_and_stability() {
        let logits = Tensor::zeros(&[4, 6]).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &[0, 1, 2, 3]).unwrap();
        assert!((loss - (6.0f32).ln()).abs() < 1e-5);

        let mut hot = Tensor::zeros(&[1, 6]).unwrap();
        hot.data_mut()[2] = 1000.0;
        let (loss, d) = softmax_cross_entropy(&hot, &[2]).unwrap();
        assert!(loss.abs() < 1e-5);
        assert!(d.all_finite());

        assert!(softmax_cross_entropy(&logits, &[0, 1, 2, 6]).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits = random(&[5, 6], 70);
        let p = softmax(&logits).unwrap();
        for i in 0..5 {
            let s: f32 = p.data()[i * 6..(i + 1) * 6].iter().sum();
            assert!((s - 1.0).abs() < 1e-5);
        }
    }
}

//! Dense row-major f32 tensor and the numeric kernels everything else builds on.
//!
//! Kernels run single-threaded with fixed accumulation order, so identical
//! seeds give bit-identical runs.

use crate::error::{Error, Result};

/// Dense N-dimensional array of f32, row-major, 1 to 4 dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
    Max,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > 4 {
        return Err(Error::Shape(format!(
            "rank must be 1..=4, got shape {shape:?}"
        )));
    }
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::Shape(format!("zero dimension in shape {shape:?}")));
    }
    Ok(shape.iter().product())
}

impl Tensor {
    pub fn new(shape: &[usize], fill: f32) -> Result<Tensor> {
        let len = check_shape(shape)?;
        Ok(Tensor {
            shape: shape.to_vec(),
            data: vec![fill; len],
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Tensor> {
        Tensor::new(shape, 0.0)
    }

    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Result<Tensor> {
        let len = check_shape(shape)?;
        if data.len() != len {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {shape:?}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Same data, new shape; element count must match.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let len = check_shape(shape)?;
        if len != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> f32 {
        debug_assert_eq!(self.rank(), 2);
        self.data[i * self.shape[1] + j]
    }

    #[inline]
    pub fn at3(&self, i: usize, j: usize, k: usize) -> f32 {
        debug_assert_eq!(self.rank(), 3);
        self.data[(i * self.shape[1] + j) * self.shape[2] + k]
    }

    #[inline]
    pub fn at4(&self, n: usize, i: usize, j: usize, k: usize) -> f32 {
        debug_assert_eq!(self.rank(), 4);
        self.data[((n * self.shape[1] + i) * self.shape[2] + j) * self.shape[3] + k]
    }

    #[inline]
    pub fn set3(&mut self, i: usize, j: usize, k: usize, v: f32) {
        debug_assert_eq!(self.rank(), 3);
        let idx = (i * self.shape[1] + j) * self.shape[2] + k;
        self.data[idx] = v;
    }

    #[inline]
    pub fn set4(&mut self, n: usize, i: usize, j: usize, k: usize, v: f32) {
        debug_assert_eq!(self.rank(), 4);
        let idx = ((n * self.shape[1] + i) * self.shape[2] + j) * self.shape[3] + k;
        self.data[idx] = v;
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Rank-2 transpose.
    pub fn transpose(&self) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(Error::Shape(format!(
                "transpose needs rank 2, got {:?}",
                self.shape
            )));
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0f32; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Tensor::from_vec(&[n, m], out)
    }
}

#[cfg(any(test, debug_assertions))]
fn debug_check_finite(t: &Tensor, op: &str) {
    debug_assert!(t.all_finite(), "{op} produced non-finite values");
}

#[cfg(not(any(test, debug_assertions)))]
fn debug_check_finite(_t: &Tensor, _op: &str) {}

/// c[i,j] = sum_t a[i,t]*b[t,j], t ascending.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 {
        return Err(Error::Shape(format!(
            "matmul needs rank-2 operands, got {:?} x {:?}",
            a.shape, b.shape
        )));
    }
    let (m, k) = (a.shape[0], a.shape[1]);
    let (k2, n) = (b.shape[0], b.shape[1]);
    if k != k2 {
        return Err(Error::Shape(format!(
            "matmul inner dims disagree: {:?} x {:?}",
            a.shape, b.shape
        )));
    }
    let mut out = vec![0.0f32; m * n];
    // i,t,j loop order: per output element the t-accumulation is still ascending.
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (t, &av) in arow.iter().enumerate() {
            let brow = &b.data[t * n..(t + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o += av * bv;
            }
        }
    }
    let c = Tensor::from_vec(&[m, n], out)?;
    debug_check_finite(&c, "matmul");
    Ok(c)
}

/// Elementwise binary op. `b` may also be a rank-1 vector broadcast over the
/// last (channel) axis of `a`.
pub fn elementwise(a: &Tensor, b: &Tensor, op: BinOp) -> Result<Tensor> {
    let apply = |x: f32, y: f32| match op {
        BinOp::Add => x + y,
        BinOp::Sub => x - y,
        BinOp::Mul => x * y,
        BinOp::Div => x / y,
    };
    let channels = *a.shape.last().unwrap();
    let data: Vec<f32> = if a.shape == b.shape {
        if op == BinOp::Div && b.data.iter().any(|&v| v == 0.0) {
            return Err(Error::Numeric("division by zero".into()));
        }
        a.data
            .iter()
            .zip(b.data.iter())
            .map(|(&x, &y)| apply(x, y))
            .collect()
    } else if b.rank() == 1 && b.len() == channels {
        if op == BinOp::Div && b.data.iter().any(|&v| v == 0.0) {
            return Err(Error::Numeric("division by zero".into()));
        }
        a.data
            .iter()
            .enumerate()
            .map(|(i, &x)| apply(x, b.data[i % channels]))
            .collect()
    } else {
        return Err(Error::Shape(format!(
            "elementwise shapes incompatible: {:?} vs {:?}",
            a.shape, b.shape
        )));
    };
    let out = Tensor::from_vec(&a.shape, data)?;
    debug_check_finite(&out, "elementwise");
    Ok(out)
}

/// Reduce one axis; output shape drops that axis (rank-1 input reduces to [1]).
pub fn reduce(a: &Tensor, axis: usize, op: ReduceOp) -> Result<Tensor> {
    if axis >= a.rank() {
        return Err(Error::Shape(format!(
            "axis {axis} out of range for shape {:?}",
            a.shape
        )));
    }
    let axis_len = a.shape[axis];
    let outer: usize = a.shape[..axis].iter().product();
    let inner: usize = a.shape[axis + 1..].iter().product();
    let mut out = vec![
        match op {
            ReduceOp::Max => f32::NEG_INFINITY,
            _ => 0.0,
        };
        outer * inner
    ];
    for o in 0..outer {
        for t in 0..axis_len {
            for i in 0..inner {
                let v = a.data[(o * axis_len + t) * inner + i];
                let acc = &mut out[o * inner + i];
                match op {
                    ReduceOp::Sum | ReduceOp::Mean => *acc += v,
                    ReduceOp::Max => {
                        if v > *acc {
                            *acc = v;
                        }
                    }
                }
            }
        }
    }
    if op == ReduceOp::Mean {
        let inv = 1.0 / axis_len as f32;
        for v in &mut out {
            *v *= inv;
        }
    }
    let mut shape: Vec<usize> = a
        .shape
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != axis)
        .map(|(_, &d)| d)
        .collect();
    if shape.is_empty() {
        shape.push(1);
    }
    let out = Tensor::from_vec(&shape, out)?;
    debug_check_finite(&out, "reduce");
    Ok(out)
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

    #[test]
    fn new_fill_and_errors() {
        let t = Tensor::new(&[2, 2], 0.0).unwrap();
        assert_eq!(t.data(), &[0.0; 4]);
        let s = Tensor::new(&[1], 3.5).unwrap();
        assert_eq!(s.data(), &[3.5]);
        let t = Tensor::new(&[2, 3], 1.0).unwrap();
        assert_eq!(t.data().iter().sum::<f32>(), 6.0);
        assert!(Tensor::new(&[], 0.0).is_err());
        assert!(Tensor::new(&[2, 0], 0.0).is_err());
        assert!(Tensor::new(&[1, 1, 1, 1, 1], 0.0).is_err());
    }

    #[test]
    fn matmul_identity_and_dot() {
        let i = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::from_vec(&[2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        assert_eq!(matmul(&i, &b).unwrap().data(), b.data());
        assert_eq!(matmul(&b, &i).unwrap().data(), b.data());

        let a = Tensor::from_vec(&[1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let b = Tensor::from_vec(&[3, 1], vec![4.0, 5.0, 6.0]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().data(), &[32.0]);
    }

    #[test]
    fn matmul_matches_naive_triple_loop() {
        let a = random(&[7, 5], 42);
        let b = random(&[5, 3], 43);
        let c = matmul(&a, &b).unwrap();
        for i in 0..7 {
            for j in 0..3 {
                let mut acc = 0.0f32;
                for t in 0..5 {
                    acc += a.at2(i, t) * b.at2(t, j);
                }
                assert!((c.at2(i, j) - acc).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn matmul_associative_within_tolerance() {
        let a = random(&[4, 5], 1);
        let b = random(&[5, 6], 2);
        let c = random(&[6, 3], 3);
        let l = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
        let r = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
        for (x, y) in l.data().iter().zip(r.data()) {
            assert!((x - y).abs() < 1e-4);
        }
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = random(&[2, 3], 0);
        let b = random(&[4, 2], 0);
        assert!(matmul(&a, &b).is_err());
    }

    #[test]
    fn elementwise_basics() {
        let a = Tensor::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        let z = Tensor::zeros(&[3]).unwrap();
        assert_eq!(elementwise(&a, &z, BinOp::Add).unwrap().data(), a.data());

        let a = Tensor::from_vec(&[2], vec![2.0, 4.0]).unwrap();
        let h = Tensor::new(&[2], 0.5).unwrap();
        assert_eq!(
            elementwise(&a, &h, BinOp::Mul).unwrap().data(),
            &[1.0, 2.0]
        );

        let r = random(&[3, 4, 5], 9);
        let d = elementwise(&r, &r, BinOp::Sub).unwrap();
        assert!(d.data().iter().all(|&v| v == 0.0));

        assert!(elementwise(&a, &random(&[3], 0), BinOp::Add).is_err());
        assert!(elementwise(&a, &z.reshape(&[3]).unwrap(), BinOp::Div).is_err());
    }

    #[test]
    fn elementwise_channel_broadcast() {
        let a = Tensor::new(&[2, 2, 3], 1.0).unwrap();
        let b = Tensor::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        let c = elementwise(&a, &b, BinOp::Mul).unwrap();
        assert_eq!(&c.data()[..3], &[1.0, 2.0, 3.0]);
        assert_eq!(&c.data()[9..], &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn reduce_basics() {
        let a = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(reduce(&a, 0, ReduceOp::Sum).unwrap().data(), &[4.0, 6.0]);
        assert_eq!(reduce(&a, 1, ReduceOp::Mean).unwrap().data(), &[1.5, 3.5]);
        assert!(reduce(&a, 2, ReduceOp::Sum).is_err());
    }

    #[test]
    fn reduce_max_matches_scan() {
        let a = random(&[4, 6], 77);
        let m = reduce(&a, 1, ReduceOp::Max).unwrap();
        for i in 0..4 {
            let mut best = f32::NEG_INFINITY;
            for j in 0..6 {
                best = best.max(a.at2(i, j));
            }
            assert_eq!(m.data()[i], best);
        }
    }

    #[test]
    fn reduce_sum_all_axes_matches_flat_sum() {
        let a = random(&[3, 4, 5], 5);
        let flat: f32 = a.data().iter().sum();
        let mut t = a.clone();
        while t.len() > 1 {
            t = reduce(&t, 0, ReduceOp::Sum).unwrap();
        }
        assert!((t.data()[0] - flat).abs() / flat.abs().max(1.0) < 1e-4);
    }

    #[test]
    fn ops_do_not_mutate_inputs() {
        let a = random(&[3, 3], 11);
        let b = random(&[3, 3], 12);
        let (ac, bc) = (a.clone(), b.clone());
        let _ = matmul(&a, &b).unwrap();
        let _ = elementwise(&a, &b, BinOp::Mul).unwrap();
        let _ = reduce(&a, 0, ReduceOp::Mean).unwrap();
        assert_eq!(a, ac);
        assert_eq!(b, bc);
    }
}

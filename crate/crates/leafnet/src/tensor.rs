//! Dense N-dimensional float arrays with a fixed, documented accumulation
//! order for every reduction, so results are bitwise reproducible across
//! runs and thread counts.

use rayon::prelude::*;
use std::fmt::Debug;
use thiserror::Error;

/// Element type for tensors. `f32` is the training default; `f64` is used by
/// the gradient-check suites, which need the extra precision.
pub trait Scalar: num_traits::Float + Debug + Send + Sync + std::iter::Sum + 'static {
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum TensorError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid axis {axis} for rank {rank}")]
    InvalidAxis { axis: usize, rank: usize },
}

/// Row-major dense tensor. `data.len()` always equals the product of `shape`,
/// and every dimension is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F: Scalar = f32> {
    shape: Vec<usize>,
    data: Vec<F>,
}

fn shape_len(shape: &[usize]) -> Result<usize, TensorError> {
    if shape.is_empty() || shape.iter().any(|&d| d == 0) {
        return Err(TensorError::ShapeMismatch(format!(
            "dimensions must be positive, got {shape:?}"
        )));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| TensorError::ShapeMismatch(format!("shape {shape:?} overflows usize")))
}

impl<F: Scalar> Tensor<F> {
    pub fn new(shape: Vec<usize>, data: Vec<F>) -> Result<Self, TensorError> {
        let n = shape_len(&shape)?;
        if n != data.len() {
            return Err(TensorError::ShapeMismatch(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape_len(shape).expect("valid shape");
        Self {
            shape: shape.to_vec(),
            data: vec![F::zero(); n],
        }
    }

    pub fn filled(shape: &[usize], value: F) -> Self {
        let n = shape_len(shape).expect("valid shape");
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// Identity matrix of size `n`.
    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = F::one();
        }
        t
    }

    pub fn from_f64_slice(shape: &[usize], values: &[f64]) -> Result<Self, TensorError> {
        Self::new(shape.to_vec(), values.iter().map(|&v| F::from_f64(v)).collect())
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

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    /// Reinterpret with a new shape of equal element count.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, TensorError> {
        let n = shape_len(shape)?;
        if n != self.data.len() {
            return Err(TensorError::ShapeMismatch(format!(
                "cannot reshape {} elements into {shape:?}",
                self.data.len()
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    fn check_same_shape(&self, other: &Self, op: &str) -> Result<(), TensorError> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch(format!(
                "{op}: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, TensorError> {
        self.check_same_shape(other, "add")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, TensorError> {
        self.check_same_shape(other, "sub")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn mul(&self, other: &Self) -> Result<Self, TensorError> {
        self.check_same_shape(other, "mul")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .collect();
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    /// Scalar broadcast multiply.
    pub fn scale(&self, s: F) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&a| a * s).collect(),
        }
    }

    /// Scalar broadcast add.
    pub fn add_scalar(&self, s: F) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&a| a + s).collect(),
        }
    }

    pub fn relu(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|&a| if a > F::zero() { a } else { F::zero() })
                .collect(),
        }
    }

    /// Elementwise exp. Errors if any result is non-finite.
    pub fn exp(&self) -> Result<Self, TensorError> {
        let data: Vec<F> = self.data.iter().map(|&a| a.exp()).collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::Domain("exp overflow to non-finite".into()));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    /// Elementwise natural log. Errors on any non-positive input.
    pub fn ln(&self) -> Result<Self, TensorError> {
        if self.data.iter().any(|&v| v <= F::zero()) {
            return Err(TensorError::Domain("log of non-positive input".into()));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&a| a.ln()).collect(),
        })
    }

    /// Sum of all elements, accumulated in flat index order.
    pub fn sum_all(&self) -> F {
        let mut acc = F::zero();
        for &v in &self.data {
            acc = acc + v;
        }
        acc
    }

    pub fn mean_all(&self) -> F {
        self.sum_all() / F::from_f64(self.data.len() as f64)
    }

    fn axis_strides(&self, axis: usize) -> Result<(usize, usize, usize), TensorError> {
        if axis >= self.shape.len() {
            return Err(TensorError::InvalidAxis {
                axis,
                rank: self.shape.len(),
            });
        }
        let outer: usize = self.shape[..axis].iter().product();
        let dim = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        Ok((outer, dim, inner))
    }

    fn reduced_shape(&self, axis: usize) -> Vec<usize> {
        let mut s: Vec<usize> = self
            .shape
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != axis)
            .map(|(_, &d)| d)
            .collect();
        if s.is_empty() {
            s.push(1);
        }
        s
    }

    /// Sum along `axis`, accumulating in ascending index order along the axis.
    pub fn sum_axis(&self, axis: usize) -> Result<Self, TensorError> {
        let (outer, dim, inner) = self.axis_strides(axis)?;
        let mut out = vec![F::zero(); outer * inner];
        for o in 0..outer {
            for d in 0..dim {
                let base = (o * dim + d) * inner;
                for i in 0..inner {
                    out[o * inner + i] = out[o * inner + i] + self.data[base + i];
                }
            }
        }
        Tensor::new(self.reduced_shape(axis), out)
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Self, TensorError> {
        let (_, dim, _) = self.axis_strides(axis)?;
        let summed = self.sum_axis(axis)?;
        Ok(summed.scale(F::one() / F::from_f64(dim as f64)))
    }

    /// Index of the maximum along `axis`; ties break toward the lowest index.
    pub fn argmax_axis(&self, axis: usize) -> Result<Vec<usize>, TensorError> {
        let (outer, dim, inner) = self.axis_strides(axis)?;
        let mut out = vec![0usize; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let mut best = self.data[o * dim * inner + i];
                let mut best_d = 0;
                for d in 1..dim {
                    let v = self.data[(o * dim + d) * inner + i];
                    if v > best {
                        best = v;
                        best_d = d;
                    }
                }
                out[o * inner + i] = best_d;
            }
        }
        Ok(out)
    }

    /// Matrix product of two rank-2 tensors. Each output element accumulates
    /// over `k` in ascending order, so the result does not depend on how rows
    /// are distributed across threads.
    pub fn matmul(&self, other: &Self) -> Result<Self, TensorError> {
        if self.rank() != 2 || other.rank() != 2 {
            return Err(TensorError::ShapeMismatch(format!(
                "matmul requires rank-2 operands, got {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        if k != k2 {
            return Err(TensorError::ShapeMismatch(format!(
                "matmul inner dims differ: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = vec![F::zero(); m * n];
        let a = &self.data;
        let b = &other.data;
        let row_work = k * n;
        if m > 1 && row_work >= 16_384 {
            out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                for kk in 0..k {
                    let av = a[i * k + kk];
                    let brow = &b[kk * n..(kk + 1) * n];
                    for (r, &bv) in row.iter_mut().zip(brow) {
                        *r = *r + av * bv;
                    }
                }
            });
        } else {
            for i in 0..m {
                for kk in 0..k {
                    let av = a[i * k + kk];
                    let brow = &b[kk * n..(kk + 1) * n];
                    let row = &mut out[i * n..(i + 1) * n];
                    for (r, &bv) in row.iter_mut().zip(brow) {
                        *r = *r + av * bv;
                    }
                }
            }
        }
        Tensor::new(vec![m, n], out)
    }

    /// Rank-2 transpose.
    pub fn transpose2(&self) -> Result<Self, TensorError> {
        if self.rank() != 2 {
            return Err(TensorError::ShapeMismatch(format!(
                "transpose2 requires rank 2, got {:?}",
                self.shape
            )));
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut out = vec![F::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Tensor::new(vec![n, m], out)
    }
}

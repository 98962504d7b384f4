//! Minimal dense tensors with named-free contraction.
//!
//! A tensor is a flat row-major array over a list of extents (bond
//! dimensions). The only operations the rest of the crate needs are pairwise
//! contraction over matched axis lists, fixing an index to a value, summing
//! an index away, and outer products. Probability semantics (nonnegativity,
//! normalization) are asserted by callers, not by the type.
//!
//! Values are not renormalized here; the decoder keeps its own binary
//! exponents.

use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TensorError {
    #[error("data length {got} does not match shape product {expected}")]
    DataLength { expected: usize, got: usize },
    #[error("axis {axis} out of range for rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },
    #[error("duplicate axis {axis} in contraction list")]
    DuplicateAxis { axis: usize },
    #[error("contracted extents differ: {left} vs {right}")]
    ExtentMismatch { left: usize, right: usize },
    #[error("axis lists have different lengths: {left} vs {right}")]
    AxisCountMismatch { left: usize, right: usize },
    #[error("index value {value} out of range for extent {extent}")]
    ValueOutOfRange { value: usize, extent: usize },
    #[error("non-finite entry at flat index {index}")]
    NonFinite { index: usize },
}

/// Dense real tensor in row-major layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S> {
    dims: Vec<usize>,
    data: Vec<S>,
    labels: Option<Vec<String>>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(dims: Vec<usize>, data: Vec<S>) -> Result<Self, TensorError> {
        let expected: usize = dims.iter().product();
        if data.len() != expected {
            return Err(TensorError::DataLength { expected, got: data.len() });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { index: i });
        }
        Ok(Tensor { dims, data, labels: None })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let len = dims.iter().product();
        Tensor { dims, data: vec![S::zero(); len], labels: None }
    }

    pub fn scalar(v: S) -> Self {
        Tensor { dims: vec![], data: vec![v], labels: None }
    }

    /// Attaches bookkeeping labels, one per axis.
    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        assert_eq!(labels.len(), self.dims.len());
        self.labels = Some(labels);
        self
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Value of a rank-0 tensor.
    pub fn as_scalar(&self) -> S {
        assert!(self.dims.is_empty(), "not a scalar tensor");
        self.data[0]
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1usize; self.dims.len()];
        for i in (0..self.dims.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.dims[i + 1];
        }
        s
    }

    pub fn get(&self, idx: &[usize]) -> S {
        assert_eq!(idx.len(), self.dims.len());
        let strides = self.strides();
        let mut off = 0;
        for (k, &i) in idx.iter().enumerate() {
            assert!(i < self.dims[k]);
            off += i * strides[k];
        }
        self.data[off]
    }

    pub fn set(&mut self, idx: &[usize], v: S) {
        assert_eq!(idx.len(), self.dims.len());
        let strides = self.strides();
        let mut off = 0;
        for (k, &i) in idx.iter().enumerate() {
            assert!(i < self.dims[k]);
            off += i * strides[k];
        }
        self.data[off] = v;
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            labels: self.labels.clone(),
        }
    }

    pub fn sum_all(&self) -> S {
        self.data.iter().fold(S::zero(), |a, &b| a + b)
    }

    pub fn max_abs_diff(&self, other: &Self) -> S {
        assert_eq!(self.dims, other.dims);
        self.data
            .iter()
            .zip(&other.data)
            .fold(S::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// Fixes `axis` to `value`, dropping the axis. Equal to contracting the
    /// axis with a point tensor when the extent is 2.
    pub fn fix_index(&self, axis: usize, value: usize) -> Result<Self, TensorError> {
        if axis >= self.rank() {
            return Err(TensorError::AxisOutOfRange { axis, rank: self.rank() });
        }
        if value >= self.dims[axis] {
            return Err(TensorError::ValueOutOfRange { value, extent: self.dims[axis] });
        }
        let strides = self.strides();
        let mut out_dims = self.dims.clone();
        out_dims.remove(axis);
        let mut out = Tensor::<S>::zeros(out_dims);
        let out_strides = out.strides();
        for flat in 0..out.data.len() {
            // Decompose the output index over the remaining axes and insert
            // the fixed value.
            let mut off = value * strides[axis];
            let mut rem = flat;
            let mut k_in = 0;
            for (k_out, &st) in out_strides.iter().enumerate() {
                if k_in == axis {
                    k_in += 1;
                }
                let i = rem / st;
                rem %= st;
                off += i * strides[k_in];
                k_in += 1;
                let _ = k_out;
            }
            out.data[flat] = self.data[off];
        }
        if let Some(labels) = &self.labels {
            let mut l = labels.clone();
            l.remove(axis);
            out.labels = Some(l);
        }
        Ok(out)
    }

    /// Sums `axis` away. Equal to contracting the axis with an all-ones
    /// vector of the matching extent.
    pub fn sum_index(&self, axis: usize) -> Result<Self, TensorError> {
        if axis >= self.rank() {
            return Err(TensorError::AxisOutOfRange { axis, rank: self.rank() });
        }
        let mut acc = self.fix_index(axis, 0)?;
        for v in 1..self.dims[axis] {
            let slice = self.fix_index(axis, v)?;
            for (a, b) in acc.data.iter_mut().zip(&slice.data) {
                *a = *a + *b;
            }
        }
        Ok(acc)
    }
}

/// Contracts `a` and `b` over the paired axis lists. The result carries
/// `a`'s free axes first (in order), then `b`'s.
pub fn contract<S: Scalar>(
    a: &Tensor<S>,
    axes_a: &[usize],
    b: &Tensor<S>,
    axes_b: &[usize],
) -> Result<Tensor<S>, TensorError> {
    if axes_a.len() != axes_b.len() {
        return Err(TensorError::AxisCountMismatch { left: axes_a.len(), right: axes_b.len() });
    }
    for (list, t) in [(axes_a, a), (axes_b, b)] {
        for (i, &ax) in list.iter().enumerate() {
            if ax >= t.rank() {
                return Err(TensorError::AxisOutOfRange { axis: ax, rank: t.rank() });
            }
            if list[..i].contains(&ax) {
                return Err(TensorError::DuplicateAxis { axis: ax });
            }
        }
    }
    for (&ax_a, &ax_b) in axes_a.iter().zip(axes_b) {
        if a.dims[ax_a] != b.dims[ax_b] {
            return Err(TensorError::ExtentMismatch { left: a.dims[ax_a], right: b.dims[ax_b] });
        }
    }

    let free_a: Vec<usize> = (0..a.rank()).filter(|k| !axes_a.contains(k)).collect();
    let free_b: Vec<usize> = (0..b.rank()).filter(|k| !axes_b.contains(k)).collect();
    let strides_a = a.strides();
    let strides_b = b.strides();

    // Flat offsets for every assignment of a multi-index over `axes`, with
    // the first listed axis slowest-varying so both operands enumerate the
    // shared multi-index in the same order.
    fn offsets(dims: &[usize], strides: &[usize], axes: &[usize]) -> Vec<usize> {
        let mut offs = vec![0usize];
        for &ax in axes {
            let mut next = Vec::with_capacity(offs.len() * dims[ax]);
            for &o in &offs {
                for v in 0..dims[ax] {
                    next.push(o + v * strides[ax]);
                }
            }
            offs = next;
        }
        offs
    }

    let ka = offsets(&a.dims, &strides_a, axes_a);
    let kb = offsets(&b.dims, &strides_b, axes_b);
    let fa = offsets(&a.dims, &strides_a, &free_a);
    let fb = offsets(&b.dims, &strides_b, &free_b);

    let mut out_dims: Vec<usize> = free_a.iter().map(|&k| a.dims[k]).collect();
    out_dims.extend(free_b.iter().map(|&k| b.dims[k]));
    let mut out = Tensor::<S>::zeros(out_dims);
    for (ia, &oa) in fa.iter().enumerate() {
        for (ib, &ob) in fb.iter().enumerate() {
            let mut acc = S::zero();
            for (&sa, &sb) in ka.iter().zip(&kb) {
                acc = acc + a.data[oa + sa] * b.data[ob + sb];
            }
            out.data[ia * fb.len() + ib] = acc;
        }
    }
    if a.labels.is_some() || b.labels.is_some() {
        let la = a.labels.clone().unwrap_or_else(|| vec![String::new(); a.rank()]);
        let lb = b.labels.clone().unwrap_or_else(|| vec![String::new(); b.rank()]);
        let mut l: Vec<String> = free_a.iter().map(|&k| la[k].clone()).collect();
        l.extend(free_b.iter().map(|&k| lb[k].clone()));
        out.labels = Some(l);
    }
    Ok(out)
}

/// Outer product; ranks add, `a`'s axes first.
pub fn outer<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    contract(a, &[], b, &[]).expect("outer product cannot fail")
}

/// Constant tensors used throughout the decoder.
pub mod consts {
    use super::Tensor;
    use crate::Scalar;

    /// Point mass on `bit`: `(1,0)` for 0, `(0,1)` for 1.
    pub fn point<S: Scalar>(bit: bool) -> Tensor<S> {
        let mut data = vec![S::zero(); 2];
        data[bit as usize] = S::one();
        Tensor::new(vec![2], data).unwrap()
    }

    /// All-ones vector of extent `chi`; contracting it sums an index away.
    pub fn ones<S: Scalar>(chi: usize) -> Tensor<S> {
        Tensor::new(vec![chi], vec![S::one(); chi]).unwrap()
    }

    /// Rank-4 CNOT indicator over `(a, b, c, d)`:
    /// entry 1 exactly when `c = a` and `d = a ^ b`.
    pub fn cnot<S: Scalar>() -> Tensor<S> {
        let mut t = Tensor::<S>::zeros(vec![2, 2, 2, 2]);
        for a in 0..2usize {
            for b in 0..2usize {
                t.set(&[a, b, a, a ^ b], S::one());
            }
        }
        t
    }
}

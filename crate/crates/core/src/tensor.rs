//! Dense row-major tensors with right-aligned broadcasting.
//!
//! Data is shared behind `Arc` so reshapes and graph bookkeeping are cheap;
//! all construction goes through fresh buffers, nothing mutates in place.

use std::sync::Arc;

use ndarray::ArrayView2;

use crate::real::Real;

#[derive(Clone, Debug)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Arc<Vec<F>>,
}

impl<F: Real> Tensor<F> {
    pub fn new(shape: Vec<usize>, data: Vec<F>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {:?} does not match data length {}",
            shape,
            data.len()
        );
        Self { shape, data: Arc::new(data) }
    }

    pub fn scalar(v: F) -> Self {
        Self::new(vec![], vec![v])
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::new(shape.to_vec(), vec![F::zero(); n])
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, F::one())
    }

    pub fn full(shape: &[usize], v: F) -> Self {
        let n = shape.iter().product();
        Self::new(shape.to_vec(), vec![v; n])
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> F) -> Self {
        let n = shape.iter().product();
        Self::new(shape.to_vec(), (0..n).map(|i| f(i)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn to_vec(&self) -> Vec<F> {
        self.data.as_ref().clone()
    }

    /// Single-element access for scalars and loss values.
    pub fn item(&self) -> F {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn reshape(&self, shape: &[usize]) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            self.data.len(),
            "reshape {:?} -> {:?} mismatch",
            self.shape,
            shape
        );
        Self { shape: shape.to_vec(), data: Arc::clone(&self.data) }
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Self::new(self.shape.clone(), self.data.iter().map(|&x| f(x)).collect())
    }

    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor::new(self.shape.clone(), self.data.iter().map(|x| G::fl(x.f64())).collect())
    }

    /// Elementwise binary op with numpy-style right-aligned broadcasting.
    pub fn zip(&self, other: &Self, f: impl Fn(F, F) -> F) -> Self {
        if self.shape == other.shape {
            let data = self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect();
            return Self::new(self.shape.clone(), data);
        }
        if other.data.len() == 1 {
            let b = other.data[0];
            return self.map(|a| f(a, b));
        }
        if self.data.len() == 1 {
            let a = self.data[0];
            return Self::new(other.shape.clone(), other.data.iter().map(|&b| f(a, b)).collect());
        }
        broadcast_zip(self, other, f)
    }

    /// Sum-reduce down to `target` shape (the adjoint of broadcasting).
    pub fn reduce_to_shape(&self, target: &[usize]) -> Self {
        if self.shape == target {
            return self.clone();
        }
        let out_n: usize = target.iter().product();
        let mut out = vec![F::zero(); out_n];
        if out_n == 1 {
            let mut acc = F::zero();
            for &v in self.data.iter() {
                acc = acc + v;
            }
            out[0] = acc;
            return Self::new(target.to_vec(), out);
        }
        let strides = broadcast_strides(&self.shape, target);
        let mut walker = Odometer::new(&self.shape, &strides);
        for &v in self.data.iter() {
            out[walker.offset()] = out[walker.offset()] + v;
            walker.step();
        }
        Self::new(target.to_vec(), out)
    }

    pub fn sum_all(&self) -> F {
        let mut acc = F::zero();
        for &v in self.data.iter() {
            acc = acc + v;
        }
        acc
    }

    /// Sum over the last axis. `keepdim` keeps a trailing 1.
    pub fn sum_last_axis(&self, keepdim: bool) -> Self {
        let k = *self.shape.last().expect("sum_last_axis on scalar");
        let rows = self.data.len() / k;
        let mut out = Vec::with_capacity(rows);
        for r in 0..rows {
            let mut acc = F::zero();
            for &v in &self.data[r * k..(r + 1) * k] {
                acc = acc + v;
            }
            out.push(acc);
        }
        let mut shape = self.shape.clone();
        if keepdim {
            *shape.last_mut().unwrap() = 1;
        } else {
            shape.pop();
        }
        Self::new(shape, out)
    }

    /// 2D matrix product via ndarray's GEMM.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.shape.len(), 2, "matmul lhs must be 2D");
        assert_eq!(other.shape.len(), 2, "matmul rhs must be 2D");
        let (n, k) = (self.shape[0], self.shape[1]);
        let (k2, m) = (other.shape[0], other.shape[1]);
        assert_eq!(k, k2, "matmul inner dims {} vs {}", k, k2);
        let a = ArrayView2::from_shape((n, k), &self.data).unwrap();
        let b = ArrayView2::from_shape((k2, m), &other.data).unwrap();
        let c = a.dot(&b);
        let (data, _) = c.into_raw_vec_and_offset();
        Self::new(vec![n, m], data)
    }

    /// Transposed copy of a 2D tensor.
    pub fn transpose2d(&self) -> Self {
        assert_eq!(self.shape.len(), 2);
        let (n, m) = (self.shape[0], self.shape[1]);
        let mut out = vec![F::zero(); n * m];
        for i in 0..n {
            for j in 0..m {
                out[j * n + i] = self.data[i * m + j];
            }
        }
        Self::new(vec![m, n], out)
    }
}

/// Output shape of broadcasting `a` against `b`; panics on incompatibility.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = if da == db {
            da
        } else if da == 1 {
            db
        } else if db == 1 {
            da
        } else {
            panic!("incompatible broadcast {:?} vs {:?}", a, b)
        };
    }
    out
}

/// Strides of `src` aligned to `out` rank, 0 on broadcast axes.
fn broadcast_strides(out: &[usize], src: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let offset = rank - src.len();
    let mut strides = vec![0usize; rank];
    let mut acc = 1usize;
    for i in (0..src.len()).rev() {
        let full = i + offset;
        strides[full] = if src[i] == 1 { 0 } else { acc };
        acc *= src[i];
    }
    for (i, s) in strides.iter_mut().enumerate() {
        if out[i] == 1 {
            *s = 0;
        }
    }
    strides
}

/// Incremental multi-index walker: visits offsets of a (possibly broadcast)
/// source tensor in the row-major order of the output shape.
struct Odometer<'a> {
    shape: &'a [usize],
    strides: &'a [usize],
    coords: Vec<usize>,
    offset: usize,
}

impl<'a> Odometer<'a> {
    fn new(shape: &'a [usize], strides: &'a [usize]) -> Self {
        Self { shape, strides, coords: vec![0; shape.len()], offset: 0 }
    }

    #[inline]
    fn offset(&self) -> usize {
        self.offset
    }

    #[inline]
    fn step(&mut self) {
        for ax in (0..self.shape.len()).rev() {
            self.coords[ax] += 1;
            self.offset += self.strides[ax];
            if self.coords[ax] < self.shape[ax] {
                return;
            }
            self.offset -= self.strides[ax] * self.shape[ax];
            self.coords[ax] = 0;
        }
    }
}

fn broadcast_zip<F: Real>(a: &Tensor<F>, b: &Tensor<F>, f: impl Fn(F, F) -> F) -> Tensor<F> {
    let out_shape = broadcast_shape(a.shape(), b.shape());
    let n: usize = out_shape.iter().product();

    // Hot case: identical leading dims, rhs has a trailing 1 (per-pixel masks
    // gating per-channel maps).
    if a.shape().len() == b.shape().len()
        && a.shape()[..a.shape().len() - 1] == b.shape()[..b.shape().len() - 1]
        && *b.shape().last().unwrap() == 1
        && out_shape == a.shape()
    {
        let c = *a.shape().last().unwrap();
        let mut out = Vec::with_capacity(n);
        for (row, &bv) in b.data().iter().enumerate() {
            for &av in &a.data()[row * c..(row + 1) * c] {
                out.push(f(av, bv));
            }
        }
        return Tensor::new(out_shape, out);
    }
    if a.shape().len() == b.shape().len()
        && a.shape()[..a.shape().len() - 1] == b.shape()[..b.shape().len() - 1]
        && *a.shape().last().unwrap() == 1
        && out_shape == b.shape()
    {
        let c = *b.shape().last().unwrap();
        let mut out = Vec::with_capacity(n);
        for (row, &av) in a.data().iter().enumerate() {
            for &bv in &b.data()[row * c..(row + 1) * c] {
                out.push(f(av, bv));
            }
        }
        return Tensor::new(out_shape, out);
    }

    let sa = broadcast_strides(&out_shape, a.shape());
    let sb = broadcast_strides(&out_shape, b.shape());
    let mut wa = Odometer::new(&out_shape, &sa);
    let mut wb = Odometer::new(&out_shape, &sb);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(f(a.data()[wa.offset()], b.data()[wb.offset()]));
        wa.step();
        wb.step();
    }
    Tensor::new(out_shape, out)
}

/// Elementwise maximum across a non-empty list of same-shape tensors.
pub fn elementwise_max<F: Real>(list: &[&Tensor<F>]) -> Tensor<F> {
    let first = list.first().expect("empty list");
    let mut out = first.to_vec();
    for t in &list[1..] {
        assert_eq!(t.shape(), first.shape());
        for (o, &v) in out.iter_mut().zip(t.data().iter()) {
            if v > *o {
                *o = v;
            }
        }
    }
    Tensor::new(first.shape().to_vec(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_mask_over_channels() {
        let a = Tensor::<f64>::new(vec![1, 2, 2, 3], (0..12).map(|x| x as f64).collect());
        let m = Tensor::<f64>::new(vec![1, 2, 2, 1], vec![1.0, 0.0, 2.0, 1.0]);
        let r = a.zip(&m, |x, y| x * y);
        assert_eq!(r.shape(), &[1, 2, 2, 3]);
        assert_eq!(r.data()[0..3], [0.0, 1.0, 2.0]);
        assert_eq!(r.data()[3..6], [0.0, 0.0, 0.0]);
        assert_eq!(r.data()[6..9], [12.0, 14.0, 16.0]);
    }

    #[test]
    fn reduce_to_shape_sums_broadcast_axes() {
        let g = Tensor::<f64>::ones(&[2, 3, 4]);
        let r = g.reduce_to_shape(&[2, 1, 4]);
        assert_eq!(r.shape(), &[2, 1, 4]);
        assert!(r.data().iter().all(|&v| (v - 3.0).abs() < 1e-12));
        let r2 = g.reduce_to_shape(&[4]);
        assert!(r2.data().iter().all(|&v| (v - 6.0).abs() < 1e-12));
    }

    #[test]
    fn matmul_matches_hand_product() {
        let a = Tensor::<f64>::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]);
        let b = Tensor::<f64>::new(vec![3, 2], vec![7., 8., 9., 10., 11., 12.]);
        let c = a.matmul(&b);
        assert_eq!(c.shape(), &[2, 2]);
        assert_eq!(c.data(), &[58., 64., 139., 154.]);
    }

    #[test]
    fn general_broadcast_leading_axis() {
        let a = Tensor::<f64>::new(vec![2, 1, 2], vec![1., 2., 3., 4.]);
        let b = Tensor::<f64>::new(vec![3, 1], vec![10., 20., 30.]);
        let r = a.zip(&b, |x, y| x + y);
        assert_eq!(r.shape(), &[2, 3, 2]);
        assert_eq!(
            r.data(),
            &[11., 12., 21., 22., 31., 32., 13., 14., 23., 24., 33., 34.]
        );
    }
}

use std::ops::Range;

use super::Scalar;
use crate::error::{Error, Result};

/// Row-major n-dimensional array.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() {
        return Err(Error::config("tensor shape must have at least one axis"));
    }
    if shape.contains(&0) {
        return Err(Error::config(format!("tensor shape {shape:?} has a zero-length axis")));
    }
    Ok(())
}

/// Visits every multi-index of `shape` in row-major order.
pub fn for_each_index(shape: &[usize], mut f: impl FnMut(&[usize])) {
    if shape.contains(&0) {
        return;
    }
    let mut idx = vec![0usize; shape.len()];
    loop {
        f(&idx);
        let mut ax = shape.len();
        loop {
            if ax == 0 {
                return;
            }
            ax -= 1;
            idx[ax] += 1;
            if idx[ax] < shape[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
}

impl<T: Scalar> DenseTensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        check_shape(&shape)?;
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::config(format!(
                "data length {} does not match shape {:?} (expected {n})",
                data.len(),
                shape
            )));
        }
        Ok(Self { shape, data })
    }

    /// Panics on an invalid shape; intended for internally generated shapes.
    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, T::zero())
    }

    pub fn filled(shape: &[usize], v: T) -> Self {
        check_shape(shape).expect("invalid tensor shape");
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![v; n] }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> T) -> Self {
        check_shape(shape).expect("invalid tensor shape");
        let mut data = Vec::with_capacity(shape.iter().product());
        for_each_index(shape, |i| data.push(f(i)));
        Self { shape: shape.to_vec(), data }
    }

    pub fn scalar(v: T) -> Self {
        Self { shape: vec![1], data: vec![v] }
    }

    pub fn vector(data: Vec<T>) -> Result<Self> {
        let n = data.len();
        Self::new(vec![n], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn eye(n: usize) -> Self {
        Self::from_fn(&[n, n], |i| if i[0] == i[1] { T::one() } else { T::zero() })
    }

    pub fn diag(values: &[T]) -> Self {
        let n = values.len();
        Self::from_fn(&[n, n], |i| if i[0] == i[1] { values[i[0]] } else { T::zero() })
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

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0;
        for (i, (&k, &n)) in idx.iter().zip(&self.shape).enumerate() {
            debug_assert!(k < n, "index {k} out of range on axis {i}");
            off = off * n + k;
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> T {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: T) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        check_shape(shape)?;
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::config(format!("cannot reshape {:?} into {:?}", self.shape, shape)));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::config(format!("shape mismatch {:?} vs {:?}", self.shape, other.shape)));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { shape: self.shape.clone(), data })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::config(format!("shape mismatch {:?} vs {:?}", self.shape, other.shape)));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        if self.shape != other.shape {
            return Err(Error::config(format!("shape mismatch {:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum())
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        match self.data.iter().position(|x| !x.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::numeric(format!("{what}: non-finite entry at flat index {i}"))),
        }
    }

    /// `‖self − other‖_F / max(‖other‖_F, floor)`.
    pub fn rel_diff(&self, other: &Self, floor: T) -> Result<T> {
        let d = self.sub(other)?;
        Ok(d.frobenius_norm() / other.frobenius_norm().max(floor))
    }

    pub fn cast<U: Scalar>(&self) -> DenseTensor<U> {
        DenseTensor { shape: self.shape.clone(), data: self.data.iter().map(|&x| U::lit(x.to_f64_lossy())).collect() }
    }

    fn require_matrix(&self, what: &str) -> Result<(usize, usize)> {
        if self.shape.len() != 2 {
            return Err(Error::config(format!("{what}: expected a matrix, got shape {:?}", self.shape)));
        }
        Ok((self.shape[0], self.shape[1]))
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[self.shape.len() - 1]
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (m, k) = self.require_matrix("matmul lhs")?;
        let (k2, n) = other.require_matrix("matmul rhs")?;
        if k != k2 {
            return Err(Error::config(format!("matmul inner dimensions differ: {m}x{k} times {k2}x{n}")));
        }
        let mut out = vec![T::zero(); m * n];
        matmul_into(&self.data, &other.data, &mut out, m, k, n);
        Ok(Self { shape: vec![m, n], data: out })
    }

    pub fn transpose(&self) -> Result<Self> {
        let (m, n) = self.require_matrix("transpose")?;
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Self { shape: vec![n, m], data: out })
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        let (m, n) = (self.shape[0], self.shape[1]);
        (0..m).map(|i| self.data[i * n + j]).collect()
    }

    /// Matrix-vector product for a 2-D tensor.
    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>> {
        let (m, n) = self.require_matrix("matvec")?;
        if x.len() != n {
            return Err(Error::config(format!("matvec: vector length {} vs {n} columns", x.len())));
        }
        Ok((0..m).map(|i| self.data[i * n..(i + 1) * n].iter().zip(x).map(|(&a, &b)| a * b).sum()).collect())
    }

    pub fn slice(&self, ranges: &[Range<usize>]) -> Result<Self> {
        check_ranges(&self.shape, ranges)?;
        let out_shape: Vec<usize> = ranges.iter().map(|r| r.len()).collect();
        let mut out = Vec::with_capacity(out_shape.iter().product());
        copy_blocks(&self.shape, ranges, |src| out.extend_from_slice(&self.data[src.clone()]));
        Self::new(out_shape, out)
    }

    /// Adds `block` into the sub-region `ranges` of `self`.
    pub fn scatter_add(&mut self, ranges: &[Range<usize>], block: &Self) -> Result<()> {
        check_ranges(&self.shape, ranges)?;
        let want: Vec<usize> = ranges.iter().map(|r| r.len()).collect();
        if want != block.shape {
            return Err(Error::config(format!("scatter block {:?} does not fit region {:?}", block.shape, want)));
        }
        let mut pos = 0;
        let data = &mut self.data;
        copy_blocks(&self.shape, ranges, |dst| {
            let n = dst.len();
            for (d, &s) in data[dst].iter_mut().zip(&block.data[pos..pos + n]) {
                *d += s;
            }
            pos += n;
        });
        Ok(())
    }

    pub fn concat(parts: &[&Self], axis: usize) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::config("concat of zero tensors"))?;
        if axis >= first.rank() {
            return Err(Error::config(format!("concat axis {axis} out of range for rank {}", first.rank())));
        }
        let mut shape = first.shape.clone();
        shape[axis] = 0;
        for p in parts {
            if p.rank() != first.rank() || p.shape.iter().enumerate().any(|(i, &d)| i != axis && d != first.shape[i]) {
                return Err(Error::config(format!("concat shape mismatch {:?} vs {:?}", p.shape, first.shape)));
            }
            shape[axis] += p.shape[axis];
        }
        let outer: usize = shape[..axis].iter().product();
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for p in parts {
                let inner: usize = p.shape[axis..].iter().product();
                data.extend_from_slice(&p.data[o * inner..(o + 1) * inner]);
            }
        }
        Self::new(shape, data)
    }
}

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

fn check_ranges(shape: &[usize], ranges: &[Range<usize>]) -> Result<()> {
    if ranges.len() != shape.len() {
        return Err(Error::config(format!("{} ranges for rank-{} tensor", ranges.len(), shape.len())));
    }
    for (ax, (r, &n)) in ranges.iter().zip(shape).enumerate() {
        if r.start >= r.end || r.end > n {
            return Err(Error::config(format!("range {r:?} invalid for axis {ax} of length {n}")));
        }
    }
    Ok(())
}

/// Calls `f` with each contiguous run (flat index range) of the sub-region, in row-major order.
fn copy_blocks(shape: &[usize], ranges: &[Range<usize>], mut f: impl FnMut(Range<usize>)) {
    let strides = strides_of(shape);
    // Trailing axes that are taken whole merge into one contiguous run.
    let mut inner = shape.len();
    while inner > 0 && ranges[inner - 1].start == 0 && ranges[inner - 1].end == shape[inner - 1] {
        inner -= 1;
    }
    let (outer_axes, run) = if inner == 0 {
        (0, shape.iter().product::<usize>())
    } else {
        (inner - 1, ranges[inner - 1].len() * strides[inner - 1])
    };
    let counts: Vec<usize> = ranges[..outer_axes].iter().map(|r| r.len()).collect();
    if counts.is_empty() {
        let start = if inner == 0 { 0 } else { ranges[inner - 1].start * strides[inner - 1] };
        f(start..start + run);
        return;
    }
    for_each_index(&counts, |i| {
        let mut start = 0;
        for ax in 0..outer_axes {
            start += (ranges[ax].start + i[ax]) * strides[ax];
        }
        start += ranges[outer_axes].start * strides[outer_axes];
        f(start..start + run);
    });
}

/// `out[m×n] = a[m×k] · b[k×n]`, accumulating in a fixed i-k-j order.
pub(crate) fn matmul_into<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for o in out.iter_mut() {
        *o = T::zero();
    }
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_validation() {
        assert!(DenseTensor::<f64>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(DenseTensor::<f64>::new(vec![0], vec![]).is_err());
        assert!(DenseTensor::<f64>::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn matmul_small() {
        let a = DenseTensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = DenseTensor::matrix(2, 1, vec![5.0, 6.0]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[17.0, 39.0]);
        assert_eq!(a.transpose().unwrap().data(), &[1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn slice_scatter_roundtrip() {
        let t = DenseTensor::<f64>::from_fn(&[3, 4, 5], |i| (i[0] * 100 + i[1] * 10 + i[2]) as f64);
        let r = [1..3, 0..4, 2..4];
        let s = t.slice(&r).unwrap();
        assert_eq!(s.shape(), &[2, 4, 2]);
        assert_eq!(s.get(&[0, 1, 0]), 112.0);
        assert_eq!(s.get(&[1, 3, 1]), 233.0);
        let mut z = DenseTensor::zeros(&[3, 4, 5]);
        z.scatter_add(&r, &s).unwrap();
        assert_eq!(z.get(&[2, 3, 3]), 233.0);
        assert_eq!(z.get(&[0, 0, 0]), 0.0);
        assert_eq!(z.sum(), s.sum());
        let whole = t.slice(&[0..3, 0..4, 0..5]).unwrap();
        assert_eq!(whole, t);
    }

    #[test]
    fn concat_axes() {
        let a = DenseTensor::<f64>::from_fn(&[2, 2], |i| (i[0] * 2 + i[1]) as f64);
        let b = DenseTensor::<f64>::from_fn(&[2, 1], |i| 10.0 + i[0] as f64);
        let c = DenseTensor::concat(&[&a, &b], 1).unwrap();
        assert_eq!(c.data(), &[0.0, 1.0, 10.0, 2.0, 3.0, 11.0]);
        let d = DenseTensor::concat(&[&a, &a], 0).unwrap();
        assert_eq!(d.shape(), &[4, 2]);
    }

    #[test]
    fn generic_over_f32() {
        let a = DenseTensor::<f32>::eye(3).scale(2.0);
        assert_eq!(a.frobenius_norm(), 12f32.sqrt());
        let b: DenseTensor<f64> = a.cast();
        assert_eq!(b.get(&[1, 1]), 2.0);
    }
}

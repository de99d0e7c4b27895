use super::tensor::{for_each_index, strides_of};
use super::{DenseTensor, Scalar};
use crate::error::{Error, Result};

/// Half spectrum of a real field: the last transformed axis keeps `n/2 + 1` bins.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralTensor<T> {
    pub real: DenseTensor<T>,
    pub imag: DenseTensor<T>,
    pub source_shape: Vec<usize>,
    pub axes: Vec<usize>,
}

impl<T: Scalar> SpectralTensor<T> {
    pub fn zeros(source_shape: &[usize], axes: &[usize]) -> Result<Self> {
        let shape = half_shape(source_shape, axes)?;
        Ok(Self {
            real: DenseTensor::zeros(&shape),
            imag: DenseTensor::zeros(&shape),
            source_shape: source_shape.to_vec(),
            axes: axes.to_vec(),
        })
    }

    pub fn shape(&self) -> &[usize] {
        self.real.shape()
    }

    /// Axis that was reduced to the half spectrum.
    pub fn half_axis(&self) -> usize {
        *self.axes.last().expect("spectrum has no transformed axes")
    }

    /// `Σ|x̂|²` over the full spectrum, counting conjugate bins of the halved axis twice.
    pub fn full_energy(&self) -> T {
        let w = half_weights(self.source_shape[self.half_axis()]);
        let shape = self.shape().to_vec();
        let ha = self.half_axis();
        let mut acc = T::zero();
        let (re, im) = (self.real.data(), self.imag.data());
        let mut flat = 0;
        for_each_index(&shape, |i| {
            acc += T::lit(w[i[ha]]) * (re[flat] * re[flat] + im[flat] * im[flat]);
            flat += 1;
        });
        acc
    }

    pub fn check(&self) -> Result<()> {
        if self.real.shape() != self.imag.shape() {
            return Err(Error::config(format!(
                "spectral planes differ in shape: {:?} vs {:?}",
                self.real.shape(),
                self.imag.shape()
            )));
        }
        let want = half_shape(&self.source_shape, &self.axes)?;
        if want != self.real.shape() {
            return Err(Error::config(format!(
                "spectrum shape {:?} inconsistent with source shape {:?} over axes {:?}",
                self.real.shape(),
                self.source_shape,
                self.axes
            )));
        }
        Ok(())
    }
}

/// Multiplicity of each half-axis bin in the full spectrum: 1 for the self-conjugate bins, else 2.
pub fn half_weights(n: usize) -> Vec<f64> {
    let h = n / 2 + 1;
    (0..h).map(|k| if k == 0 || (n.is_multiple_of(2) && k == n / 2) { 1.0 } else { 2.0 }).collect()
}

fn check_axes(shape: &[usize], axes: &[usize]) -> Result<()> {
    if axes.is_empty() {
        return Err(Error::config("no transform axes given"));
    }
    for (i, &a) in axes.iter().enumerate() {
        if a >= shape.len() {
            return Err(Error::config(format!("axis {a} out of range for rank {}", shape.len())));
        }
        if axes[..i].contains(&a) {
            return Err(Error::config(format!("axis {a} listed twice")));
        }
    }
    Ok(())
}

fn half_shape(source: &[usize], axes: &[usize]) -> Result<Vec<usize>> {
    check_axes(source, axes)?;
    let mut s = source.to_vec();
    let ha = *axes.last().unwrap();
    s[ha] = source[ha] / 2 + 1;
    Ok(s)
}

fn require_pow2(shape: &[usize], axes: &[usize]) -> Result<()> {
    for &a in axes {
        if !shape[a].is_power_of_two() {
            return Err(Error::config(format!("axis {a} has length {}, which is not a power of two", shape[a])));
        }
    }
    Ok(())
}

/// In-place unnormalized radix-2 transform; `sign` is -1 for forward, +1 for inverse.
fn fft_line<T: Scalar>(re: &mut [T], im: &mut [T], sign: f64) {
    let n = re.len();
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * 2.0 * std::f64::consts::PI / len as f64;
        let tw: Vec<(T, T)> = (0..half)
            .map(|k| {
                let a = step * k as f64;
                (T::lit(a.cos()), T::lit(a.sin()))
            })
            .collect();
        for start in (0..n).step_by(len) {
            for (k, &(wr, wi)) in tw.iter().enumerate() {
                let (a, b) = (start + k, start + k + half);
                let xr = re[b] * wr - im[b] * wi;
                let xi = re[b] * wi + im[b] * wr;
                re[b] = re[a] - xr;
                im[b] = im[a] - xi;
                re[a] += xr;
                im[a] += xi;
            }
        }
        len *= 2;
    }
}

/// Applies a unitary complex transform along `axis` of the planes with `shape`.
fn transform_axis<T: Scalar>(re: &mut [T], im: &mut [T], shape: &[usize], axis: usize, inverse: bool) {
    let n = shape[axis];
    if n == 1 {
        return;
    }
    let stride = strides_of(shape)[axis];
    let norm = T::lit(1.0 / (n as f64).sqrt());
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut lr = vec![T::zero(); n];
    let mut li = vec![T::zero(); n];
    let mut outer_shape = shape.to_vec();
    outer_shape[axis] = 1;
    let strides = strides_of(shape);
    for_each_index(&outer_shape, |idx| {
        let base: usize = idx.iter().zip(&strides).map(|(&i, &s)| i * s).sum();
        for k in 0..n {
            lr[k] = re[base + k * stride];
            li[k] = im[base + k * stride];
        }
        fft_line(&mut lr, &mut li, sign);
        for k in 0..n {
            re[base + k * stride] = lr[k] * norm;
            im[base + k * stride] = li[k] * norm;
        }
    });
}

/// Unitary real-to-complex transform over `axes`; the last listed axis is halved.
pub fn rfftn<T: Scalar>(x: &DenseTensor<T>, axes: &[usize]) -> Result<SpectralTensor<T>> {
    let shape = x.shape().to_vec();
    check_axes(&shape, axes)?;
    require_pow2(&shape, axes)?;
    let ha = *axes.last().unwrap();
    let mut re = x.data().to_vec();
    let mut im = vec![T::zero(); re.len()];
    transform_axis(&mut re, &mut im, &shape, ha, false);
    let out_shape = half_shape(&shape, axes)?;
    let (re, im) = (truncate_axis(&re, &shape, ha, out_shape[ha]), truncate_axis(&im, &shape, ha, out_shape[ha]));
    let (mut re, mut im) = (re, im);
    for &a in &axes[..axes.len() - 1] {
        transform_axis(&mut re, &mut im, &out_shape, a, false);
    }
    Ok(SpectralTensor {
        real: DenseTensor::new(out_shape.clone(), re)?,
        imag: DenseTensor::new(out_shape, im)?,
        source_shape: shape,
        axes: axes.to_vec(),
    })
}

fn truncate_axis<T: Scalar>(data: &[T], shape: &[usize], axis: usize, keep: usize) -> Vec<T> {
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let n = shape[axis];
    let mut out = Vec::with_capacity(outer * keep * inner);
    for o in 0..outer {
        let base = o * n * inner;
        out.extend_from_slice(&data[base..base + keep * inner]);
    }
    out
}

/// Inverse of [`rfftn`]; imaginary parts of self-conjugate bins are ignored.
pub fn irfftn<T: Scalar>(s: &SpectralTensor<T>) -> Result<DenseTensor<T>> {
    s.check()?;
    let src = s.source_shape.clone();
    require_pow2(&src, &s.axes)?;
    let half = s.shape().to_vec();
    let ha = s.half_axis();
    let mut re = s.real.data().to_vec();
    let mut im = s.imag.data().to_vec();
    for &a in &s.axes[..s.axes.len() - 1] {
        transform_axis(&mut re, &mut im, &half, a, true);
    }
    let n = src[ha];
    let h = half[ha];
    let inner: usize = src[ha + 1..].iter().product();
    let outer: usize = src[..ha].iter().product();
    let total: usize = src.iter().product();
    let mut fr = vec![T::zero(); total];
    let mut fi = vec![T::zero(); total];
    for o in 0..outer {
        for q in 0..inner {
            let hb = o * h * inner + q;
            let fb = o * n * inner + q;
            for k in 0..h {
                fr[fb + k * inner] = re[hb + k * inner];
                fi[fb + k * inner] = im[hb + k * inner];
            }
            fi[fb] = T::zero();
            if n.is_multiple_of(2) && n > 1 {
                fi[fb + (n / 2) * inner] = T::zero();
            }
            for k in 1..n.div_ceil(2) {
                fr[fb + (n - k) * inner] = re[hb + k * inner];
                fi[fb + (n - k) * inner] = -im[hb + k * inner];
            }
        }
    }
    transform_axis(&mut fr, &mut fi, &src, ha, true);
    DenseTensor::new(src, fr)
}

/// Direct-summation DFT with the same layout and normalization as [`rfftn`].
pub fn naive_dft<T: Scalar>(x: &DenseTensor<T>, axes: &[usize]) -> Result<SpectralTensor<T>> {
    let src = x.shape().to_vec();
    let out_shape = half_shape(&src, axes)?;
    let norm = T::lit(1.0 / (axes.iter().map(|&a| src[a]).product::<usize>() as f64).sqrt());
    let sub: Vec<usize> = axes.iter().map(|&a| src[a]).collect();
    let mut re = Vec::with_capacity(out_shape.iter().product());
    let mut im = Vec::with_capacity(re.capacity());
    let mut pos = src.clone();
    for_each_index(&out_shape, |k| {
        let (mut ar, mut ai) = (T::zero(), T::zero());
        pos.copy_from_slice(k);
        for_each_index(&sub, |n| {
            let mut frac = 0.0;
            for (j, &a) in axes.iter().enumerate() {
                pos[a] = n[j];
                frac += ((k[a] * n[j]) % src[a]) as f64 / src[a] as f64;
            }
            let ang = -2.0 * std::f64::consts::PI * frac;
            let v = x.get(&pos);
            ar += v * T::lit(ang.cos());
            ai += v * T::lit(ang.sin());
        });
        re.push(ar * norm);
        im.push(ai * norm);
    });
    Ok(SpectralTensor {
        real: DenseTensor::new(out_shape.clone(), re)?,
        imag: DenseTensor::new(out_shape, im)?,
        source_shape: src,
        axes: axes.to_vec(),
    })
}

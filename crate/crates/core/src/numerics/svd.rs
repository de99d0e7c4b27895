use super::{DenseTensor, Prng, Scalar};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 60;

/// Thin singular value decomposition `A = u · diag(sigma) · vᵀ`, with `k = min(m, n)`.
#[derive(Clone, Debug)]
pub struct SvdResult<T> {
    pub u: DenseTensor<T>,
    pub sigma: Vec<T>,
    pub v: DenseTensor<T>,
}

impl<T: Scalar> SvdResult<T> {
    pub fn reconstruct(&self) -> DenseTensor<T> {
        self.reconstruct_rank(self.sigma.len())
    }

    /// Sum of the leading `r` singular triplets.
    pub fn reconstruct_rank(&self, r: usize) -> DenseTensor<T> {
        let (m, n) = (self.u.rows(), self.v.rows());
        let k = self.sigma.len();
        let r = r.min(k);
        let (u, v) = (self.u.data(), self.v.data());
        DenseTensor::from_fn(&[m, n], |ix| {
            let (i, j) = (ix[0], ix[1]);
            (0..r).map(|l| u[i * k + l] * self.sigma[l] * v[j * k + l]).sum()
        })
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// One-sided Jacobi (Hestenes) SVD.
pub fn jacobi_svd<T: Scalar>(a: &DenseTensor<T>) -> Result<SvdResult<T>> {
    if a.rank() != 2 {
        return Err(Error::config(format!("svd expects a matrix, got shape {:?}", a.shape())));
    }
    let (m, n) = (a.rows(), a.cols());
    if m < n {
        let t = jacobi_svd(&a.transpose()?)?;
        return Ok(SvdResult { u: t.v, sigma: t.sigma, v: t.u });
    }
    let mut cols: Vec<Vec<T>> = (0..n).map(|j| a.column(j)).collect();
    let mut vcols: Vec<Vec<T>> = (0..n).map(|j| (0..n).map(|i| if i == j { T::one() } else { T::zero() }).collect()).collect();
    let norm_f = a.frobenius_norm();
    let eps = T::epsilon();
    let rel_tol = eps * T::of_usize(m);
    let abs_floor = (eps * norm_f) * (eps * norm_f);
    let mut converged = n < 2 || norm_f == T::zero();
    let mut worst = T::zero();
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        worst = T::zero();
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                let scale = (alpha * beta).sqrt();
                if gamma.abs() <= abs_floor || gamma.abs() <= rel_tol * scale {
                    continue;
                }
                worst = worst.max(gamma.abs() / scale);
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let sign = if zeta >= T::zero() { T::one() } else { -T::one() };
                let t = sign / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut vcols, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::Numeric {
            message: format!("jacobi svd did not converge in {MAX_SWEEPS} sweeps"),
            residual: Some(worst.to_f64_lossy()),
        });
    }
    let mut sigma: Vec<T> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap_or(std::cmp::Ordering::Equal));
    let smax = order.first().map(|&i| sigma[i]).unwrap_or(T::zero());
    let tiny = smax * eps * T::of_usize(m.max(n)) * T::lit(8.0);
    let mut ucols: Vec<Option<Vec<T>>> = vec![None; n];
    for (slot, &j) in order.iter().enumerate() {
        if sigma[j] > tiny && sigma[j] > T::zero() {
            let inv = T::one() / sigma[j];
            ucols[slot] = Some(cols[j].iter().map(|&x| x * inv).collect());
        }
    }
    complete_basis(&mut ucols, m);
    sigma = order.iter().map(|&j| sigma[j]).collect();
    let u = DenseTensor::from_fn(&[m, n], |ix| ucols[ix[1]].as_ref().unwrap()[ix[0]]);
    let v = DenseTensor::from_fn(&[n, n], |ix| vcols[order[ix[1]]][ix[0]]);
    Ok(SvdResult { u, sigma, v })
}

fn rotate<T: Scalar>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (lo, hi) = cols.split_at_mut(q);
    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Fills missing columns with unit vectors orthogonal to every present column.
fn complete_basis<T: Scalar>(cols: &mut [Option<Vec<T>>], m: usize) {
    let mut candidate = 0;
    for slot in 0..cols.len() {
        if cols[slot].is_some() {
            continue;
        }
        while candidate < m {
            let mut e = vec![T::zero(); m];
            e[candidate] = T::one();
            candidate += 1;
            for _ in 0..2 {
                for c in cols.iter().flatten() {
                    let d = dot(&e, c);
                    for (x, &y) in e.iter_mut().zip(c) {
                        *x -= d * y;
                    }
                }
            }
            let nrm = dot(&e, &e).sqrt();
            if nrm > T::lit(1e-3) {
                for x in e.iter_mut() {
                    *x /= nrm;
                }
                cols[slot] = Some(e);
                break;
            }
        }
    }
}

/// Largest singular value by power iteration on `AᵀA` from a seeded start vector.
pub fn spectral_norm<T: Scalar>(a: &DenseTensor<T>, max_iter: usize, tol: f64, seed: u64) -> Result<T> {
    if a.rank() != 2 {
        return Err(Error::config(format!("spectral norm expects a matrix, got shape {:?}", a.shape())));
    }
    let at = a.transpose()?;
    let mut g = Prng::new(seed);
    let mut x: Vec<T> = (0..a.cols()).map(|_| T::lit(g.normal())).collect();
    let nx = dot(&x, &x).sqrt();
    if nx == T::zero() {
        return Ok(T::zero());
    }
    x.iter_mut().for_each(|v| *v /= nx);
    let mut est = T::zero();
    for _ in 0..max_iter {
        let y = a.matvec(&x)?;
        let s = dot(&y, &y).sqrt();
        let z = at.matvec(&y)?;
        let nz = dot(&z, &z).sqrt();
        if nz == T::zero() {
            return Ok(s);
        }
        let prev = est;
        est = s;
        x = z.into_iter().map(|v| v / nz).collect();
        if (est - prev).abs() <= T::lit(tol) * est {
            break;
        }
    }
    // Rayleigh estimate at the final iterate.
    let y = a.matvec(&x)?;
    Ok(dot(&y, &y).sqrt().max(est))
}

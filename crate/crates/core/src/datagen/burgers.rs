use crate::error::{Error, Result};
use crate::numerics::{irfftn, rfftn};
use crate::{Spectrum, Tensor};

/// Half-spectrum coefficients as separate real and imaginary parts.
#[derive(Clone)]
struct Modes {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Modes {
    /// `f ⊙ (self + a·other)`
    fn damp_axpy(&self, f: &[f64], a: f64, other: &Modes) -> Modes {
        let m = |x: &[f64], y: &[f64]| x.iter().zip(y).zip(f).map(|((x, y), f)| f * (x + a * y)).collect();
        Modes { re: m(&self.re, &other.re), im: m(&self.im, &other.im) }
    }

    fn damp(&self, f: &[f64]) -> Modes {
        let m = |x: &[f64]| x.iter().zip(f).map(|(x, f)| f * x).collect();
        Modes { re: m(&self.re), im: m(&self.im) }
    }

    fn axpy(&self, a: f64, other: &Modes) -> Modes {
        let m = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(x, y)| x + a * y).collect();
        Modes { re: m(&self.re, &other.re), im: m(&self.im, &other.im) }
    }

    fn to_field(&self, n: usize) -> Result<Tensor> {
        let mut s = Spectrum::zeros(&[n], &[0])?;
        s.real.data_mut().copy_from_slice(&self.re);
        s.imag.data_mut().copy_from_slice(&self.im);
        irfftn(&s)
    }
}

struct Solver {
    n: usize,
    k: Vec<f64>,
    keep: Vec<bool>,
    e_half: Vec<f64>,
    e_full: Vec<f64>,
}

impl Solver {
    fn new(n: usize, nu: f64, dt: f64) -> Self {
        let tau = 2.0 * std::f64::consts::PI;
        let k: Vec<f64> = (0..=n / 2).map(|j| tau * j as f64).collect();
        let keep = (0..=n / 2).map(|j| 3 * j <= n).collect();
        let e_half = k.iter().map(|kk| (-nu * kk * kk * dt / 2.0).exp()).collect();
        let e_full = k.iter().map(|kk| (-nu * kk * kk * dt).exp()).collect();
        Self { n, k, keep, e_half, e_full }
    }

    /// Dealiased `−∂ₓ(u²/2)`.
    fn nonlinear(&self, v: &Modes) -> Result<Modes> {
        let mut cut = v.clone();
        for j in 0..cut.re.len() {
            if !self.keep[j] {
                cut.re[j] = 0.0;
                cut.im[j] = 0.0;
            }
        }
        let u = cut.to_field(self.n)?;
        let f = rfftn(&u.map(|x| 0.5 * x * x), &[0])?;
        let (fr, fi) = (f.real.data(), f.imag.data());
        let mut out = Modes { re: vec![0.0; fr.len()], im: vec![0.0; fr.len()] };
        for j in 0..fr.len() {
            if self.keep[j] {
                out.re[j] = self.k[j] * fi[j];
                out.im[j] = -self.k[j] * fr[j];
            }
        }
        Ok(out)
    }

    fn step(&self, v: &Modes, dt: f64) -> Result<Modes> {
        let (e2, e) = (&self.e_half, &self.e_full);
        let a = self.nonlinear(v)?;
        let b = self.nonlinear(&v.damp_axpy(e2, dt / 2.0, &a))?;
        let c = self.nonlinear(&v.damp(e2).axpy(dt / 2.0, &b))?;
        let d = self.nonlinear(&v.damp(e).axpy(dt, &c.damp(e2)))?;
        let mid = b.axpy(1.0, &c).damp(e2);
        let incr = a.damp(e).axpy(2.0, &mid).axpy(1.0, &d);
        Ok(v.damp(e).axpy(dt / 6.0, &incr))
    }
}

fn check(u0: &Tensor, nu: f64, dt: f64) -> Result<()> {
    if u0.rank() != 1 || !u0.len().is_power_of_two() || u0.len() < 4 {
        return Err(Error::config(format!("Burgers needs a 1-D power-of-two grid, got {:?}", u0.shape())));
    }
    if !(nu > 0.0 && dt > 0.0) {
        return Err(Error::config(format!("Burgers needs nu > 0 and dt > 0, got nu={nu}, dt={dt}")));
    }
    u0.ensure_finite("Burgers initial condition")?;
    let umax = u0.max_abs();
    let limit = 0.5 / (u0.len() as f64 * umax);
    if umax > 0.0 && dt > limit {
        return Err(Error::config(format!("CFL violated: dt = {dt} exceeds 0.5·dx/max|u0|; use dt <= {limit:.3e}")));
    }
    Ok(())
}

fn run(u0: &Tensor, nu: f64, dt: f64, steps: usize, mut visit: impl FnMut(Tensor)) -> Result<()> {
    check(u0, nu, dt)?;
    let solver = Solver::new(u0.len(), nu, dt);
    let s0 = rfftn(u0, &[0])?;
    let mut v = Modes { re: s0.real.into_data(), im: s0.imag.into_data() };
    for step in 0..steps {
        v = solver.step(&v, dt)?;
        let u = v.to_field(solver.n)?;
        if !u.is_finite() {
            return Err(Error::numeric(format!("Burgers solution became non-finite at step {}", step + 1)));
        }
        visit(u);
    }
    Ok(())
}

/// `u_t + u u_x = ν u_xx` on the periodic unit interval: integrating-factor RK4 in spectral space,
/// flux dealiased by the 2/3 rule. Returns `steps + 1` fields starting with `u0`.
pub fn burgers_rollout(u0: &Tensor, nu: f64, dt: f64, steps: usize) -> Result<Vec<Tensor>> {
    let mut out = Vec::with_capacity(steps + 1);
    out.push(u0.clone());
    run(u0, nu, dt, steps, |u| out.push(u))?;
    Ok(out)
}

/// Final state of [`burgers_rollout`].
pub fn burgers_step(u0: &Tensor, nu: f64, dt: f64, steps: usize) -> Result<Tensor> {
    let mut last = u0.clone();
    run(u0, nu, dt, steps, |u| last = u)?;
    Ok(last)
}

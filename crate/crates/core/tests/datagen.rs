use proptest::prelude::*;
use splab::datagen::*;
use splab::numerics::{rfftn, write_tensor};
use splab::theory::fit_slope;
use splab::{Prng, Tensor};

fn sine(n: usize, k: f64) -> Tensor {
    Tensor::from_fn(&[n], |i| (2.0 * std::f64::consts::PI * k * i[0] as f64 / n as f64).sin())
}

#[test]
fn grf_is_deterministic_and_real() {
    for grid in [vec![64], vec![16, 32]] {
        let a = sample_grf(&grid, 2.0, 7).unwrap();
        assert_eq!(a, sample_grf(&grid, 2.0, 7).unwrap());
        assert_ne!(a, sample_grf(&grid, 2.0, 8).unwrap());
        assert!(a.is_finite());
        let spec = grf_spectrum(&grid, 2.0, 7).unwrap();
        let back = rfftn(&a, &(0..grid.len()).collect::<Vec<_>>()).unwrap();
        let err = back.real.sub(&spec.real).unwrap().max_abs().max(back.imag.sub(&spec.imag).unwrap().max_abs());
        assert!(err <= 1e-12 * spec.real.max_abs(), "hermitian defect {err}");
    }
}

#[test]
fn grf_extreme_decay_is_constant() {
    let u = sample_grf(&[64], 50.0, 3).unwrap();
    let mean = u.sum() / 64.0;
    assert!(u.data().iter().all(|v| (v - mean).abs() < 1e-6 * mean.abs().max(1e-3)));
}

#[test]
fn grf_rejects_rough_fields() {
    assert!(sample_grf(&[32], 0.5, 0).is_err());
    assert!(sample_grf(&[16, 16], 1.0, 0).is_err());
    assert!(sample_grf(&[12], 2.0, 0).is_err());
}

#[test]
fn grf_tail_energy_slope() {
    for (grid, alpha) in [(vec![256], 1.5), (vec![64, 64], 2.0)] {
        let d = grid.len() as f64;
        let axes: Vec<usize> = (0..grid.len()).collect();
        let cutoffs = [4usize, 6, 8, 12, 16];
        let mut tails = vec![0.0; cutoffs.len()];
        for s in 0..16 {
            let sp = rfftn(&sample_grf(&grid, alpha, s).unwrap(), &axes).unwrap();
            let e = splab::numerics::shell_bin(&sp, 200);
            for (t, &k) in tails.iter_mut().zip(&cutoffs) {
                *t += e.shells[k + 1..].iter().sum::<f64>() + e.residual;
            }
        }
        let xs: Vec<f64> = cutoffs.iter().map(|&k| (k as f64).ln()).collect();
        let ys: Vec<f64> = tails.iter().map(|t| t.ln()).collect();
        let slope = fit_slope(&xs, &ys);
        assert!((slope - (d - 2.0 * alpha)).abs() < 0.3, "{grid:?}: slope {slope}");
    }
}

#[test]
fn heat_examples() {
    let c = Tensor::filled(&[32], 1.7);
    assert!(heat_step_exact(&c, 0.3, 1.0).unwrap().sub(&c).unwrap().max_abs() < 1e-14);
    let u = sine(64, 3.0);
    let v = heat_step_exact(&u, 0.01, 0.1).unwrap();
    let f = (-0.01 * (6.0 * std::f64::consts::PI).powi(2) * 0.1).exp();
    assert!(v.sub(&u.scale(f)).unwrap().max_abs() < 1e-13);
    assert!(heat_step_exact(&u, -1.0, 0.1).is_err());
    assert!(heat_step_exact(&u, 0.1, 0.0).is_err());
}

proptest! {
    #[test]
    fn heat_is_dissipative(seed in 0u64..500, nu in 0.0f64..0.5, dt in 0.001f64..1.0) {
        let u = sample_grf(&[16, 16], 1.5, seed).unwrap();
        let v = heat_step_exact(&u, nu, dt).unwrap();
        prop_assert!(v.frobenius_norm() <= u.frobenius_norm() * (1.0 + 1e-14));
    }
}

#[test]
fn burgers_zero_stays_zero() {
    let traj = burgers_rollout(&Tensor::zeros(&[64]), 0.05, 1e-3, 10).unwrap();
    assert_eq!(traj.len(), 11);
    assert!(traj.iter().all(|u| u.max_abs() == 0.0));
}

#[test]
fn burgers_conserves_mean() {
    let u0 = sample_grf(&[128], 1.5, 4).unwrap();
    let dt = 0.25 / (128.0 * u0.max_abs());
    let traj = burgers_rollout(&u0, 0.05, dt, 100).unwrap();
    let m0 = u0.sum() / 128.0;
    for (i, w) in traj.windows(2).enumerate() {
        let (a, b) = (w[0].sum() / 128.0, w[1].sum() / 128.0);
        assert!((a - b).abs() < 1e-10, "step {i}");
    }
    assert!((traj[100].sum() / 128.0 - m0).abs() < 1e-8);
    assert!(traj[100].frobenius_norm() < u0.frobenius_norm());
}

#[test]
fn burgers_half_step_self_consistency() {
    let mut g = Prng::new(21);
    for _ in 0..10 {
        let u0 = sample_grf(&[128], 1.5, g.next_u64()).unwrap();
        let dt = 0.4 / (128.0 * u0.max_abs());
        let steps = 50;
        let coarse = burgers_step(&u0, 0.05, dt, steps).unwrap();
        let fine = burgers_step(&u0, 0.05, dt / 2.0, 2 * steps).unwrap();
        let rel = coarse.sub(&fine).unwrap().frobenius_norm() / fine.frobenius_norm();
        assert!(rel <= 1e-5, "relative half-step difference {rel}");
    }
}

#[test]
fn burgers_cfl_is_enforced() {
    let u0 = sine(64, 1.0).scale(2.0);
    let err = burgers_rollout(&u0, 0.05, 0.01, 1).unwrap_err().to_string();
    assert!(err.contains("CFL") && err.contains("3.906e-3"), "{err}");
    assert!(burgers_rollout(&u0, 0.0, 1e-4, 1).is_err());
    assert!(burgers_rollout(&Tensor::zeros(&[8, 8]), 0.1, 1e-4, 1).is_err());
}

#[test]
fn empty_dataset_is_header_only() {
    let ds = build_dataset(&TaskSpec::heat(vec![16], 0.01, 2.0, 0, 0)).unwrap();
    let mut buf = Vec::new();
    write_dataset(&mut buf, &ds).unwrap();
    let len = u64::from_le_bytes(buf[..8].try_into().unwrap()) as usize;
    assert_eq!(buf.len(), 8 + len);
    let back = read_dataset(&mut buf.as_slice()).unwrap();
    assert_eq!(back, ds);
    assert!(back.is_empty());
    assert!(back.train().is_err());
}

#[test]
fn datasets_rebuild_byte_identically() {
    for spec in [TaskSpec::heat(vec![16, 16], 0.02, 2.0, 12, 5), TaskSpec::burgers(vec![64], 0.05, 1.5, 6, 5)] {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_dataset(&mut a, &build_dataset(&spec).unwrap()).unwrap();
        write_dataset(&mut b, &build_dataset(&spec).unwrap()).unwrap();
        assert_eq!(a, b);
        let back = read_dataset(&mut a.as_slice()).unwrap();
        let mut c = Vec::new();
        write_dataset(&mut c, &back).unwrap();
        assert_eq!(a, c);
    }
}

#[test]
fn heat_targets_regenerate_exactly() {
    let spec = TaskSpec::heat(vec![64], 0.01, 2.0, 20, 9);
    let ds = build_dataset(&spec).unwrap();
    assert_eq!((ds.header.train, ds.header.test), (18, 2));
    for (x, t) in &ds.samples {
        let y = heat_step_exact(&x.clone().reshape(&[64]).unwrap(), 0.01, spec.dt).unwrap();
        assert_eq!(y.data(), t.data());
    }
    let (xtr, _) = ds.train().unwrap();
    let (xte, yte) = ds.test().unwrap();
    assert_eq!(xtr.shape(), &[18, 64, 1]);
    assert_eq!(xte.shape(), &[2, 64, 1]);
    assert_eq!(&yte.data()[64..], ds.samples[19].1.data());
}

#[test]
fn burgers_dataset_matches_solver() {
    let spec = TaskSpec::burgers(vec![64], 0.05, 1.5, 3, 2);
    let ds = build_dataset(&spec).unwrap();
    let x = ds.samples[1].0.clone().reshape(&[64]).unwrap();
    let y = burgers_step(&x, 0.05, spec.dt / spec.substeps as f64, spec.substeps).unwrap();
    assert_eq!(y.data(), ds.samples[1].1.data());
}

#[test]
fn corrupt_dataset_files_are_rejected() {
    let ds = build_dataset(&TaskSpec::heat(vec![8], 0.01, 2.0, 2, 0)).unwrap();
    let mut buf = Vec::new();
    write_dataset(&mut buf, &ds).unwrap();
    let mut extra = buf.clone();
    write_tensor(&mut extra, &Tensor::zeros(&[8, 1])).unwrap();
    assert!(read_dataset(&mut extra.as_slice()).is_err());
    assert!(read_dataset(&mut &buf[..buf.len() - 3]).is_err());
    let mut bad = buf.clone();
    bad[9] = b'X';
    assert!(read_dataset(&mut bad.as_slice()).is_err());
}

#[test]
fn dataset_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("heat.bin");
    let ds = build_dataset(&TaskSpec::heat(vec![16], 0.01, 2.0, 10, 1)).unwrap();
    ds.save(&path).unwrap();
    assert_eq!(Dataset::load(&path).unwrap(), ds);
}

use proptest::prelude::*;
use splab::autodiff::{Graph, ParamStore};
use splab::backbone::BackboneConfig;
use splab::peft::*;
use splab::{Prng, Tensor};

fn random(shape: &[usize], rng: &mut Prng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.normal())
}

#[test]
fn table_row_one_schedule() {
    let s = BandSchedule::new(12, 4, 4.0, 16.0, 2.0, false).unwrap();
    assert_eq!(s.boundaries, vec![0, 3, 6, 9, 12]);
    assert_eq!(s.widths, vec![13, 8, 5, 4]);
    let inv = BandSchedule::new(12, 4, 4.0, 16.0, 2.0, true).unwrap();
    assert_eq!(inv.widths, vec![4, 5, 8, 13]);
    assert_eq!(band_boundaries(10, 4).unwrap(), vec![0, 2, 5, 7, 10]);
}

#[test]
fn bad_bands_are_config_errors() {
    assert!(band_boundaries(3, 4).is_err());
    assert!(band_boundaries(3, 0).is_err());
    assert!(allocate_widths(8.0, 4.0, 2.0, &[0, 4], 4).is_err());
    assert!(allocate_widths(4.0, 8.0, 0.0, &[0, 4], 4).is_err());
}

#[test]
fn eq13_exhaustive() {
    for d in [2, 4, 8] {
        for k in [1, 2, 4] {
            for ht in [1, 2, 3] {
                for b in [1, 2, 4] {
                    let widths: Vec<usize> = (0..b).map(|i| 3 + 2 * i).collect();
                    let sum: u64 = widths.iter().map(|&w| w as u64).sum();
                    let want = (2 * d as u64 + 1) * k as u64 * (2 + ht as u64) * sum;
                    assert_eq!(count_params_eq13(d, k, ht, &widths), want);
                }
            }
        }
    }
    assert_eq!(count_params_eq13(8, 4, 1, &[13, 8, 5, 4]), 6120);
    assert_eq!(count_params_eq13(8, 4, 1, &[0, 0, 0, 0]), 0);
}

#[test]
fn manifest_count_matches_enumeration() {
    let cfg = BackboneConfig::new(vec![64], 32, 4, 1, 12);
    let (m, store) = attach(&cfg, &PeftConfig::new(PeftKind::FAdapter)).unwrap();
    assert_eq!(m.eq13_count(&cfg), Some(6120));
    assert_eq!(m.trainable_count(), store.numel());
    assert_eq!(store.numel() as u64, actual_fadapter_count(8, 4, 1, &[13, 8, 5, 4]));
    assert_eq!(store.numel() as u64, 6120 + bias_surplus(8, 4, 1, &[13, 8, 5, 4]));
    assert_eq!(bias_surplus(8, 4, 1, &[13, 8, 5, 4]), 384);
}

#[test]
fn manifest_kinds_and_shapes() {
    let cfg = BackboneConfig::new(vec![32], 16, 2, 2, 8);
    for kind in PeftKind::ALL {
        let (m, store) = attach(&cfg, &PeftConfig::new(kind)).unwrap();
        for (name, shape) in m.tensor_shapes() {
            assert_eq!(store.require(&name).unwrap().shape(), shape.as_slice(), "{kind} {name}");
        }
        assert_eq!(m.trainable_count(), store.numel());
        let json = serde_json::to_string(&m).unwrap();
        let back: PeftManifest = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }
    let (m, _) = attach(&cfg, &PeftConfig::new(PeftKind::Adapter)).unwrap();
    let w = &m.schedule.as_ref().unwrap().widths;
    assert!(w.iter().all(|&x| x == w[0]));
}

#[test]
fn manifest_referencing_missing_layer_is_rejected() {
    let cfg = BackboneConfig::new(vec![32], 16, 2, 2, 8);
    let (mut m, _) = attach(&cfg, &PeftConfig::new(PeftKind::FAdapter)).unwrap();
    m.adapters[0].layer = 5;
    assert!(m.validate(&cfg).is_err());
    let small = BackboneConfig::new(vec![32], 16, 2, 2, 4);
    let (m, _) = attach(&cfg, &PeftConfig::new(PeftKind::FAdapter)).unwrap();
    assert!(m.validate(&small).is_err());
}

#[test]
fn kind_parsing() {
    for k in PeftKind::ALL {
        assert_eq!(k.name().parse::<PeftKind>().unwrap(), k);
    }
    let err = "dora".parse::<PeftKind>().unwrap_err();
    assert!(err.to_string().contains("f-adapter"));
}

#[test]
fn adapter_scalar_example() {
    let p = AdapterParams {
        w_down: Tensor::matrix(1, 1, vec![1.0]).unwrap(),
        b_down: Tensor::zeros(&[1]),
        w_up: Tensor::matrix(1, 1, vec![1.0]).unwrap(),
        b_up: Tensor::zeros(&[1]),
        scale: 1.0,
    };
    let y = adapter_forward(&Tensor::vector(vec![1.0]).unwrap(), &p).unwrap();
    assert!((y.data()[0] - 1.8411919906082768).abs() < 1e-12);
}

#[test]
fn every_variant_is_identity_at_init() {
    let mut rng = Prng::new(3);
    let x = random(&[7, 6], &mut rng);
    let a = AdapterParams::fresh(6, 4, 1.0, &mut rng);
    let c = ChebyshevParams::fresh(6, 4, 3, &mut rng);
    let f = FourierKanParams::fresh(6, 4, 3, &mut rng);
    let w = WaveActParams::fresh(6, 4, &mut rng);
    for y in [
        adapter_forward(&x, &a).unwrap(),
        chebyshev_adapter_forward(&x, &c).unwrap(),
        fourierkan_adapter_forward(&x, &f).unwrap(),
        waveact_adapter_forward(&x, &w).unwrap(),
    ] {
        assert!(y.sub(&x).unwrap().max_abs() <= 1e-12);
    }
}

#[test]
fn chebyshev_constant_term() {
    let mut rng = Prng::new(4);
    let mut p = ChebyshevParams::fresh(3, 5, 0, &mut rng);
    p.coef = Tensor::filled(&[3, 5, 1], 0.25);
    p.alpha = 2.0;
    let x = random(&[2, 3], &mut rng);
    let y = chebyshev_adapter_forward(&x, &p).unwrap();
    for (a, b) in y.data().iter().zip(x.data()) {
        assert!((a - b - 2.0 * 5.0 * 0.25).abs() < 1e-12);
    }
}

#[test]
fn chebyshev_recurrence_matches_cosine() {
    let theta = std::f64::consts::PI / 3.0;
    let mut rng = Prng::new(1);
    for n in 0..=5 {
        let mut p = ChebyshevParams::fresh(1, 1, 5, &mut rng);
        let mut coef = vec![0.0; 6];
        coef[n] = 1.0;
        p.coef = Tensor::new(vec![1, 1, 6], coef).unwrap();
        // Choose the pre-activation so that tanh(tanh(z)) = cos θ.
        let z = theta.cos().atanh().atanh();
        p.w_down = Tensor::matrix(1, 1, vec![1.0]).unwrap();
        let x = Tensor::vector(vec![z]).unwrap();
        let y = chebyshev_adapter_forward(&x, &p).unwrap().data()[0] - z;
        assert!((y - (n as f64 * theta).cos()).abs() < 1e-12, "n={n}");
    }
}

#[test]
fn fourierkan_series_by_hand() {
    let mut rng = Prng::new(2);
    let mut q = FourierKanParams::fresh(2, 1, 2, &mut rng);
    q.w_down = Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap();
    q.coef_a = Tensor::new(vec![2, 1, 2], vec![0.0, 0.3, 0.0, 0.0]).unwrap();
    q.coef_b = Tensor::new(vec![2, 1, 2], vec![1.0, 0.0, 0.0, 0.5]).unwrap();
    q.alpha = 1.0;
    let x = Tensor::matrix(1, 2, vec![0.7, 0.0]).unwrap();
    let y = fourierkan_adapter_forward(&x, &q).unwrap();
    let z = splab::autodiff::gelu(0.7);
    let raw = [z.sin() + 0.3 * (2.0 * z).cos(), 0.5 * (2.0 * z).sin()];
    let mean = (raw[0] + raw[1]) / 2.0;
    let var = ((raw[0] - mean).powi(2) + (raw[1] - mean).powi(2)) / 2.0;
    let want = [0.7 + (raw[0] - mean) / (var + 1e-5).sqrt(), (raw[1] - mean) / (var + 1e-5).sqrt()];
    assert!((y.data()[0] - want[0]).abs() < 1e-12);
    assert!((y.data()[1] - want[1]).abs() < 1e-12);
}

/// Pre-activation whose GELU equals `target`, for `target > 0`.
fn gelu_inverse(target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, target + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if splab::autodiff::gelu(mid) < target { lo = mid } else { hi = mid }
    }
    0.5 * (lo + hi)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fourierkan_is_2pi_periodic_in_z(z in 0.2f64..2.0, seed in 0u64..50) {
        let mut rng = Prng::new(seed);
        let mut p = FourierKanParams::fresh(3, 1, 3, &mut rng);
        p.alpha = 0.8;
        p.w_down = Tensor::matrix(1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        let at = |pre: f64| {
            let x = Tensor::matrix(1, 3, vec![pre, 0.3, -0.2]).unwrap();
            let y = fourierkan_adapter_forward(&x, &p).unwrap();
            y.sub(&x).unwrap()
        };
        let tau = 2.0 * std::f64::consts::PI;
        let d = at(gelu_inverse(z)).sub(&at(gelu_inverse(z + tau))).unwrap().max_abs();
        prop_assert!(d < 1e-9, "{d}");
    }

    #[test]
    fn widths_monotone_and_bounded(modes in 1usize..40, bands in 1usize..8, r_min in 0.0f64..10.0, span in 0.0f64..30.0, p in 0.2f64..4.0) {
        prop_assume!(bands <= modes);
        let r_max = r_min + span;
        let b = band_boundaries(modes, bands).unwrap();
        let f = allocate_widths(r_min, r_max, p, &b, modes).unwrap();
        let g = inverse_widths(r_min, r_max, p, &b, modes).unwrap();
        prop_assert!(f.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(g.windows(2).all(|w| w[0] <= w[1]));
        for w in f.iter().chain(&g) {
            prop_assert!(*w >= r_min.floor() as usize && *w as f64 <= r_max + 1e-9);
        }
    }

    #[test]
    fn lora_matches_dense_oracle(seed in 0u64..100) {
        let mut rng = Prng::new(seed);
        let m = 1 + rng.below(9);
        let n = 1 + rng.below(9);
        let r = 1 + rng.below(m.min(n));
        let mut p = LoraParams::fresh(m, n, r, 1.0 + rng.uniform() * 4.0, &mut rng).unwrap();
        p.b = random(&[m, r], &mut rng);
        let w0 = random(&[m, n], &mut rng);
        let x = random(&[n], &mut rng);
        let dense = w0.add(&p.b.matmul(&p.a).unwrap().scale(p.alpha)).unwrap();
        let want = dense.matvec(x.data()).unwrap();
        let got = lora_forward(&x, &w0, &p).unwrap();
        for (a, b) in got.data().iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn graph_adapter_matches_plain(kind_i in 0usize..4, seed in 0u64..20) {
        let kind = [PeftKind::FAdapter, PeftKind::Chebyshev, PeftKind::Fourierkan, PeftKind::Waveact][kind_i];
        let cfg = BackboneConfig::new(vec![16], 8, 2, 1, 4);
        let mut pc = PeftConfig::new(kind);
        pc.bands = 2;
        pc.seed = seed;
        let (m, mut store) = attach(&cfg, &pc).unwrap();
        let mut rng = Prng::new(seed + 100);
        for (_, t) in store.iter_mut() {
            for v in t.data_mut() {
                *v += 0.3 * rng.normal();
            }
        }
        let slot = m.adapters[0].clone();
        let x = random(&[5, slot.dim], &mut rng);
        let mut g = Graph::new();
        let xi = g.input("x", &[5, slot.dim]).unwrap();
        let y = build_adapter(&mut g, &m, &slot, xi).unwrap();
        let mut feed = ParamStore::new();
        feed.insert("x", x.clone());
        g.forward(&[&feed, &store]).unwrap();
        let p = &slot.prefix;
        let get = |n: &str| store.require(&format!("{p}.{n}")).unwrap().clone();
        let sc = |n: &str| get(n).data()[0];
        let plain = match kind {
            PeftKind::Chebyshev => chebyshev_adapter_forward(&x, &ChebyshevParams {
                w_down: get("w_down"), b_down: get("b_down"), coef: get("coef"), alpha: sc("alpha"),
            }),
            PeftKind::Fourierkan => fourierkan_adapter_forward(&x, &FourierKanParams {
                w_down: get("w_down"), b_down: get("b_down"), coef_a: get("coef_a"), coef_b: get("coef_b"),
                ln_gamma: get("ln_gamma"), ln_beta: get("ln_beta"), alpha: sc("alpha"),
            }),
            PeftKind::Waveact => waveact_adapter_forward(&x, &WaveActParams {
                w_down: get("w_down"), b_down: get("b_down"), w_up: get("w_up"), b_up: get("b_up"),
                wave_a: sc("wave_a"), wave_b: sc("wave_b"), alpha: sc("alpha"),
            }),
            _ => adapter_forward(&x, &AdapterParams::load(p, &store, m.scale).unwrap()),
        }.unwrap();
        prop_assert!(g.value(y).unwrap().sub(&plain).unwrap().max_abs() < 1e-12);
    }
}

#[test]
fn lora_rank_and_init() {
    let mut rng = Prng::new(0);
    assert!(LoraParams::fresh(4, 3, 4, 4.0, &mut rng).is_err());
    assert!(LoraParams::fresh(4, 3, 0, 4.0, &mut rng).is_err());
    let p = LoraParams::fresh(8, 6, 2, 2.0, &mut rng).unwrap();
    assert_eq!(p.alpha, 1.0);
    assert_eq!(p.delta().unwrap().max_abs(), 0.0);
    let bound = (6.0f64 / 6.0).sqrt();
    assert!(p.a.max_abs() <= bound);
}

#[test]
fn matched_rank_is_closest() {
    let cfg = BackboneConfig::new(vec![64], 32, 4, 1, 12);
    let r = matched_lora_rank(&cfg, false, 6504);
    let count = |r: usize| {
        let mut pc = PeftConfig::new(PeftKind::Lora);
        pc.lora_rank = r;
        attach(&cfg, &pc).unwrap().1.numel() as i64
    };
    for other in 1..=8 {
        assert!((count(r) - 6504).abs() <= (count(other) - 6504).abs());
    }
}

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavereg::diffeo::scaling_and_squaring;
use wavereg::io::{pad_to_multiple, read_field, read_image, write_field, write_image};
use wavereg::metrics::{dice, neg_jac_fraction, LabelVolume};
use wavereg::pyramid::{flow_gradient_to_coeffs, init_pyramid, reconstruct_flow, CoefficientPyramid};
use wavereg::volume::{warp, warp_nearest, warp_transpose, Dims, ScalarVolume, VectorField};
use wavereg::wavelet::{dwt3_volume, idwt3_volume, FilterBank, WaveletKind};

fn random_volume(rng: &mut ChaCha8Rng, dims: Dims) -> ScalarVolume {
    ScalarVolume::new(dims, [1.0; 3], (0..dims.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn random_field(rng: &mut ChaCha8Rng, dims: Dims, amp: f64) -> VectorField {
    let mut f = VectorField::zeros(dims);
    for c in 0..3 {
        f.channel_mut(c).iter_mut().for_each(|v| *v = rng.gen_range(-amp..amp));
    }
    f
}

fn wavelet() -> impl Strategy<Value = WaveletKind> {
    prop_oneof![Just(WaveletKind::Haar), Just(WaveletKind::Db2)]
}

/// Even extents of at least four.
fn even_dims() -> impl Strategy<Value = Dims> {
    (2usize..7, 2usize..7, 2usize..7).prop_map(|(d, h, w)| Dims::new(2 * d, 2 * h, 2 * w))
}

fn any_dims() -> impl Strategy<Value = Dims> {
    (1usize..12, 1usize..12, 1usize..12).prop_map(|(d, h, w)| Dims::new(d, h, w))
}

fn pyramid_dims() -> impl Strategy<Value = Dims> {
    (1usize..3, 1usize..3, 1usize..3).prop_map(|(d, h, w)| Dims::new(8 * d, 8 * h, 8 * w))
}

fn random_pyramid(rng: &mut ChaCha8Rng, dims: Dims, gates: bool) -> CoefficientPyramid {
    let mut v = init_pyramid(dims).unwrap().to_flat();
    let n = v.len() - 28;
    v[..n].iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
    if gates {
        v[n..].iter_mut().for_each(|x| *x = rng.gen_range(-1.0..2.0));
    }
    CoefficientPyramid::from_flat(dims, &v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dwt_round_trip(dims in even_dims(), kind in wavelet(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fb = FilterBank::new(kind);
        let x = random_volume(&mut rng, dims);
        let back = idwt3_volume(&dwt3_volume(&x, &fb).unwrap(), &fb, x.spacing()).unwrap();
        let err = x.data().iter().zip(back.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-10, "{}", err);
    }

    #[test]
    fn dwt_preserves_energy_and_is_adjoint(dims in even_dims(), kind in wavelet(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fb = FilterBank::new(kind);
        let x = random_volume(&mut rng, dims);
        let cx = dwt3_volume(&x, &fb).unwrap();
        let e = x.dot(&x);
        prop_assert!((cx.energy() - e).abs() <= 1e-9 * e);
        let y = dwt3_volume(&random_volume(&mut rng, dims), &fb).unwrap();
        let lhs = cx.dot(&y);
        let rhs = x.dot(&idwt3_volume(&y, &fb, x.spacing()).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (cx.energy() * y.energy()).sqrt());
    }

    #[test]
    fn warp_transpose_is_adjoint(dims in any_dims(), seed in any::<u64>(), amp in 0.0f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_volume(&mut rng, dims);
        let y = random_volume(&mut rng, dims);
        let flow = random_field(&mut rng, dims, amp);
        let lhs = warp(&x, &flow).unwrap().dot(&y);
        let rhs = x.dot(&warp_transpose(&flow, &y).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn zero_flow_warp_is_identity(dims in any_dims(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_volume(&mut rng, dims);
        prop_assert_eq!(warp(&x, &VectorField::zeros(dims)).unwrap().into_data(), x.data().to_vec());
    }

    #[test]
    fn nearest_warp_never_invents_labels(dims in any_dims(), seed in any::<u64>(), amp in 0.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<f64> = (0..dims.len()).map(|_| [0.0, 1.0, 4.0, 9.0][rng.gen_range(0..4)]).collect();
        let vol = ScalarVolume::new(dims, [1.0; 3], labels).unwrap();
        let before = LabelVolume::from_volume(&vol).unwrap().present_labels();
        let out = warp_nearest(&vol, &random_field(&mut rng, dims, amp)).unwrap();
        let after = LabelVolume::from_volume(&out).unwrap().present_labels();
        prop_assert!(after.iter().all(|l| before.contains(l)));
    }

    #[test]
    fn dice_is_symmetric_and_bounded(dims in any_dims(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gen = || LabelVolume::new(dims, [1.0; 3], (0..dims.len()).map(|_| rng.gen_range(0..3)).collect()).unwrap();
        let (a, b) = (gen(), gen());
        let ab = dice(&a, &b, &[1, 2]).unwrap();
        prop_assert_eq!(&ab, &dice(&b, &a, &[1, 2]).unwrap());
        for (_, s) in &ab {
            if let Some(s) = s {
                prop_assert!((0.0..=1.0).contains(s));
            }
        }
        for (l, s) in dice(&a, &a, &[1, 2]).unwrap() {
            prop_assert!(s.is_none() || s == Some(1.0), "label {}", l);
        }
    }

    #[test]
    fn pad_then_crop_is_exact(dims in any_dims(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_volume(&mut rng, dims);
        let (padded, record) = pad_to_multiple(&x, 8).unwrap();
        prop_assert!(padded.dims().to_array().iter().all(|n| n % 8 == 0));
        prop_assert!(padded.dims().to_array().iter().zip(dims.to_array()).all(|(p, n)| *p >= n && *p < n + 8));
        prop_assert_eq!(record.is_empty(), padded.dims() == dims);
        prop_assert_eq!(record.crop(&padded).unwrap().into_data(), x.data().to_vec());
    }

    #[test]
    fn files_round_trip_f32_values(dims in any_dims(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<f64> = (0..dims.len()).map(|_| rng.gen_range(-1e3f32..1e3) as f64).collect();
        let vol = ScalarVolume::new(dims, [0.5, 1.0, 2.5], data).unwrap();
        let p = dir.path().join("v.raw");
        write_image(&p, &vol).unwrap();
        prop_assert_eq!(read_image(&p).unwrap(), vol);
        let mut field = VectorField::zeros(dims);
        for c in 0..3 {
            field.channel_mut(c).iter_mut().for_each(|v| *v = rng.gen_range(-8f32..8.0) as f64);
        }
        let q = dir.path().join("f.raw");
        write_field(&q, &field).unwrap();
        prop_assert_eq!(read_field(&q).unwrap(), field);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn reconstruction_is_linear_for_fixed_gates(dims in pyramid_dims(), kind in wavelet(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fb = FilterBank::new(kind);
        let p = random_pyramid(&mut rng, dims, true);
        let q = random_pyramid(&mut rng, dims, false);
        // same gates, coefficients combined
        let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let pf = p.to_flat();
        let qf = q.to_flat();
        let n = pf.len() - 28;
        let mut mix = pf.clone();
        let mut q_gated = pf.clone();
        for i in 0..n {
            mix[i] = a * pf[i] + b * qf[i];
            q_gated[i] = qf[i];
        }
        let rp = reconstruct_flow(&p, &fb).unwrap();
        let rq = reconstruct_flow(&CoefficientPyramid::from_flat(dims, &q_gated).unwrap(), &fb).unwrap();
        let mut want = rp.scaled(a);
        want.add_scaled(b, &rq);
        let mut got = reconstruct_flow(&CoefficientPyramid::from_flat(dims, &mix).unwrap(), &fb).unwrap();
        got.add_scaled(-1.0, &want);
        prop_assert!(got.max_abs() < 1e-9 * (1.0 + want.max_abs()));
    }

    #[test]
    fn coefficient_gradient_is_the_adjoint(dims in pyramid_dims(), kind in wavelet(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fb = FilterBank::new(kind);
        let p = random_pyramid(&mut rng, dims, true);
        let g = random_field(&mut rng, dims, 1.0);
        let lhs = g.dot(&reconstruct_flow(&p, &fb).unwrap());
        let grad = flow_gradient_to_coeffs(&g, &p, &fb).unwrap().to_flat();
        let n = grad.len() - 28;
        let rhs: f64 = grad[..n].iter().zip(&p.to_flat()[..n]).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn small_velocities_exponentiate_without_folding(seed in any::<u64>(), amp in 0.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = Dims::cube(16);
        // band-limited velocity: few low-frequency modes
        let modes: Vec<([f64; 3], [f64; 3], f64)> = (0..4)
            .map(|_| {
                let k = [rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)];
                let a = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                (k, a, rng.gen_range(0.0..6.3))
            })
            .collect();
        let v = VectorField::from_fn(dims, |d, h, w| {
            let mut out = [0.0; 3];
            for (k, a, ph) in &modes {
                let s = (k[0] * w as f64 + k[1] * h as f64 + k[2] * d as f64 + ph).sin();
                for c in 0..3 {
                    out[c] += amp * a[c] * s;
                }
            }
            out
        });
        let (flow, _) = scaling_and_squaring(&v, 7).unwrap();
        prop_assert_eq!(neg_jac_fraction(&flow).unwrap(), 0.0);
    }
}

//! End-to-end gradient check: loss -> flow -> pyramid coefficients and gates,
//! against central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavereg::pyramid::{flow_gradient_to_coeffs, init_pyramid, reconstruct_flow, CoefficientPyramid, ParamGroup};
use wavereg::similarity::{total_loss, FieldMode, LossConfig, SimilarityKind};
use wavereg::volume::{Dims, ScalarVolume};
use wavereg::wavelet::{FilterBank, WaveletKind};

pub const EPS: f64 = 1e-6;
pub const TOL: f64 = 2e-3;

/// Smooth random image: a few random cosines.
fn smooth_image(rng: &mut ChaCha8Rng, dims: Dims) -> ScalarVolume {
    let terms: Vec<([f64; 3], f64, f64)> = (0..6)
        .map(|_| {
            let k = [rng.gen_range(0.2..0.9), rng.gen_range(0.2..0.9), rng.gen_range(0.2..0.9)];
            (k, rng.gen_range(0.0..6.3), rng.gen_range(0.2..1.0))
        })
        .collect();
    ScalarVolume::from_fn(dims, |d, h, w| {
        terms.iter().map(|(k, ph, a)| a * (k[0] * w as f64 + k[1] * h as f64 + k[2] * d as f64 + ph).cos()).sum()
    })
}

fn random_pyramid(rng: &mut ChaCha8Rng, dims: Dims) -> CoefficientPyramid {
    let p = init_pyramid(dims).unwrap();
    let mut v = p.to_flat();
    let gates = v.len() - 28;
    for x in &mut v[..gates] {
        *x = rng.gen_range(-0.4..0.4);
    }
    for x in &mut v[gates..] {
        *x = rng.gen_range(0.5..1.5);
    }
    CoefficientPyramid::from_flat(dims, &v).unwrap()
}

/// Offsets of each group inside the flat vector, gates separated out.
fn layout(p: &CoefficientPyramid) -> Vec<(&'static str, std::ops::Range<usize>)> {
    let c = p.group_len(ParamGroup::Coarse);
    let r2 = p.group_len(ParamGroup::Level2) - 14;
    let r3 = p.group_len(ParamGroup::Level3) - 14;
    vec![
        ("phi1", 0..c),
        ("res2", c..c + r2),
        ("res3", c + r2..c + r2 + r3),
        ("gates2", c + r2 + r3..c + r2 + r3 + 14),
        ("gates3", c + r2 + r3 + 14..c + r2 + r3 + 28),
    ]
}

/// Largest relative error between the analytic gradient and central
/// differences over sampled parameters of every group.
pub fn max_relative_error(seed: u64, dims: Dims, kind: SimilarityKind, mode: FieldMode, wavelet: WaveletKind) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let moving = smooth_image(&mut rng, dims);
    let fixed = smooth_image(&mut rng, dims);
    let fb = FilterBank::new(wavelet);
    let cfg = LossConfig::new(kind).with_window(5).with_lambda(0.5);
    let p = random_pyramid(&mut rng, dims);
    let flat = p.to_flat();
    let loss = |v: &[f64]| {
        let q = CoefficientPyramid::from_flat(dims, v).unwrap();
        total_loss(&moving, &fixed, &reconstruct_flow(&q, &fb).unwrap(), &cfg, mode).unwrap().value
    };
    let eval = total_loss(&moving, &fixed, &reconstruct_flow(&p, &fb).unwrap(), &cfg, mode).unwrap();
    let grad = flow_gradient_to_coeffs(&eval.grad, &p, &fb).unwrap().to_flat();

    let mut worst = 0.0f64;
    for (name, range) in layout(&p) {
        let peak = grad[range.clone()].iter().fold(0.0f64, |m, g| m.max(g.abs()));
        assert!(peak > 0.0, "{name}: zero gradient");
        // gates are few; check all of them. Coefficients: sample ones that carry signal.
        let candidates: Vec<usize> = range.clone().filter(|&i| grad[i].abs() >= 0.05 * peak).collect();
        let picks: Vec<usize> = if name.starts_with("gates") {
            candidates
        } else {
            (0..8).map(|_| candidates[rng.gen_range(0..candidates.len())]).collect()
        };
        assert!(!picks.is_empty());
        for i in picks {
            let mut v = flat.clone();
            v[i] = flat[i] + EPS;
            let up = loss(&v);
            v[i] = flat[i] - EPS;
            let down = loss(&v);
            let fd = (up - down) / (2.0 * EPS);
            worst = worst.max((fd - grad[i]).abs() / fd.abs().max(grad[i].abs()));
        }
    }
    worst
}


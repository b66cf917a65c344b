//! Synthetic image pairs with known smooth deformations.
//!
//! The fixed image is a phantom of random Gaussian blobs on top of two
//! concentric spheres. The ground-truth flow `gt` is smooth, vanishes at the
//! grid border and never folds; the moving image is `warp(fixed, gt)`.
//! Registering moving onto fixed recovers the inverse of `gt`, which is
//! provided as `target_flow`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics::LabelVolume;
use crate::volume::{jacobian_determinant, warp, warp_field, warp_nearest, Dims, ScalarVolume, VectorField};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    Translation,
    GaussianBumps,
    RadialContraction,
}

impl SynthKind {
    pub const ALL: [SynthKind; 3] = [SynthKind::Translation, SynthKind::GaussianBumps, SynthKind::RadialContraction];

    pub fn name(self) -> &'static str {
        match self {
            SynthKind::Translation => "translation",
            SynthKind::GaussianBumps => "gaussian_bumps",
            SynthKind::RadialContraction => "radial_contraction",
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "translation" => Ok(SynthKind::Translation),
            "gaussian_bumps" | "bumps" => Ok(SynthKind::GaussianBumps),
            "radial_contraction" | "radial" => Ok(SynthKind::RadialContraction),
            other => Err(Error::Config(format!(
                "unknown synthetic kind {other:?} (expected translation, gaussian_bumps or radial_contraction)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub dims: Dims,
    /// Bound on the displacement magnitude, in voxels.
    pub max_disp: f64,
    pub seed: u64,
    pub labels: bool,
}

impl SynthSpec {
    pub fn new(kind: SynthKind, dims: Dims, max_disp: f64, seed: u64) -> Self {
        Self { kind, dims, max_disp, seed, labels: false }
    }

    pub fn with_labels(mut self) -> Self {
        self.labels = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.min_extent() < 8 {
            return Err(Error::Config(format!("synthetic grids need every dim >= 8, got {}", self.dims)));
        }
        let limit = self.dims.min_extent() as f64 / 4.0;
        if !(self.max_disp.is_finite() && self.max_disp >= 0.0 && self.max_disp < limit) {
            return Err(Error::Config(format!(
                "max displacement {} must be in [0, {limit}) for {}",
                self.max_disp, self.dims
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelPair {
    pub moving: LabelVolume,
    pub fixed: LabelVolume,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthPair {
    pub moving: ScalarVolume,
    pub fixed: ScalarVolume,
    /// `moving = warp(fixed, gt_flow)`.
    pub gt_flow: VectorField,
    /// Flow that maps moving back onto fixed: `fixed ≈ warp(moving, target_flow)`.
    pub target_flow: VectorField,
    pub labels: Option<LabelPair>,
}

/// Inner sphere and shell radii as fractions of the smallest extent.
const INNER_RADIUS: f64 = 0.19;
const OUTER_RADIUS: f64 = 0.31;

fn center(dims: Dims) -> [f64; 3] {
    [(dims.w as f64 - 1.0) / 2.0, (dims.h as f64 - 1.0) / 2.0, (dims.d as f64 - 1.0) / 2.0]
}

fn radius(p: [f64; 3], c: [f64; 3]) -> f64 {
    ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2)).sqrt()
}

fn position(d: usize, h: usize, w: usize) -> [f64; 3] {
    [w as f64, h as f64, d as f64]
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let n = radius(v, [0.0; 3]);
        if n > 0.1 && n <= 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Product of per-axis raised-cosine ramps: 0 on the border voxels, 1 once
/// a quarter of the extent away from them.
pub fn border_window(dims: Dims) -> ScalarVolume {
    let ramp = |t: usize, n: usize| {
        let margin = n as f64 / 4.0;
        let e = t.min(n - 1 - t) as f64;
        if e >= margin {
            1.0
        } else {
            0.5 - 0.5 * (PI * e / margin).cos()
        }
    };
    ScalarVolume::from_fn(dims, |d, h, w| ramp(d, dims.d) * ramp(h, dims.h) * ramp(w, dims.w))
}

fn phantom(dims: Dims, rng: &mut ChaCha8Rng) -> ScalarVolume {
    let m = dims.min_extent() as f64;
    let extent = [dims.w as f64, dims.h as f64, dims.d as f64];
    let blobs: Vec<([f64; 3], f64, f64)> = (0..48)
        .map(|_| {
            let c = [
                rng.gen_range(0.0..1.0) * extent[0],
                rng.gen_range(0.0..1.0) * extent[1],
                rng.gen_range(0.0..1.0) * extent[2],
            ];
            (c, rng.gen_range(0.05..0.1) * m, rng.gen_range(-0.6..1.0))
        })
        .collect();
    let c = center(dims);
    let (r1, r2) = (INNER_RADIUS * m, OUTER_RADIUS * m);
    let edge = |t: f64| 1.0 / (1.0 + (-t / 0.7).exp());
    let raw = ScalarVolume::from_fn(dims, |d, h, w| {
        let p = position(d, h, w);
        let r = radius(p, c);
        let mut v = 0.5 * edge(r1 - r) + 0.5 * edge(r2 - r);
        for (bc, sigma, amp) in &blobs {
            v += 0.6 * amp * (-radius(p, *bc).powi(2) / (2.0 * sigma * sigma)).exp();
        }
        v
    });
    raw.normalized()
}

fn sphere_labels(dims: Dims) -> LabelVolume {
    let m = dims.min_extent() as f64;
    let c = center(dims);
    let labels = dims
        .iter()
        .map(|(d, h, w)| {
            let r = radius(position(d, h, w), c);
            if r <= INNER_RADIUS * m {
                1
            } else if r <= OUTER_RADIUS * m {
                2
            } else {
                0
            }
        })
        .collect();
    LabelVolume::new(dims, [1.0; 3], labels).expect("sized to dims")
}

fn raw_flow(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> VectorField {
    let dims = spec.dims;
    let m = dims.min_extent() as f64;
    let c = center(dims);
    match spec.kind {
        SynthKind::Translation => {
            let t = random_unit(rng);
            VectorField::constant(dims, t)
        }
        SynthKind::GaussianBumps => {
            // one bump on the spheres, three elsewhere
            let mut bumps = vec![(c, 0.22 * m, random_unit(rng), 1.0)];
            for _ in 0..3 {
                let bc = [
                    rng.gen_range(0.3..0.7) * dims.w as f64,
                    rng.gen_range(0.3..0.7) * dims.h as f64,
                    rng.gen_range(0.3..0.7) * dims.d as f64,
                ];
                bumps.push((bc, rng.gen_range(0.15..0.22) * m, random_unit(rng), rng.gen_range(0.3..0.8)));
            }
            VectorField::from_fn(dims, |d, h, w| {
                let p = position(d, h, w);
                let mut u = [0.0; 3];
                for (bc, sigma, dir, amp) in &bumps {
                    let g = amp * (-radius(p, *bc).powi(2) / (2.0 * sigma * sigma)).exp();
                    for k in 0..3 {
                        u[k] += g * dir[k];
                    }
                }
                u
            })
        }
        SynthKind::RadialContraction => {
            let sigma = rng.gen_range(0.18..0.24) * m;
            VectorField::from_fn(dims, |d, h, w| {
                let p = position(d, h, w);
                let g = (-radius(p, c).powi(2) / (2.0 * sigma * sigma)).exp() / sigma;
                [-(p[0] - c[0]) * g, -(p[1] - c[1]) * g, -(p[2] - c[2]) * g]
            })
        }
    }
}

fn min_jacobian(flow: &VectorField) -> f64 {
    jacobian_determinant(flow).expect("synthetic grids are at least 8 wide").data().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Fixed-point inverse: `inv(x) = -flow(x + inv(x))`.
pub fn invert_flow(flow: &VectorField, iterations: usize) -> Result<VectorField> {
    let mut inv = flow.scaled(-1.0);
    for _ in 0..iterations {
        inv = warp_field(flow, &inv)?.scaled(-1.0);
    }
    Ok(inv)
}

pub fn synth_pair(spec: &SynthSpec) -> Result<SynthPair> {
    spec.validate()?;
    let dims = spec.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let fixed = phantom(dims, &mut rng);
    let window = border_window(dims);
    let mut gt = raw_flow(spec, &mut rng);
    for c in 0..3 {
        for (u, w) in gt.channel_mut(c).iter_mut().zip(window.data()) {
            *u *= w;
        }
    }
    let peak = gt.max_magnitude();
    if peak > 0.0 {
        gt = gt.scaled(spec.max_disp / peak);
    }
    while min_jacobian(&gt) < 0.2 {
        gt = gt.scaled(0.8);
    }
    let moving = warp(&fixed, &gt)?;
    let target_flow = invert_flow(&gt, 100)?;
    let labels = if spec.labels {
        let fixed_labels = sphere_labels(dims);
        let moving_labels = LabelVolume::from_volume(&warp_nearest(&fixed_labels.to_volume(), &gt)?)?;
        Some(LabelPair { moving: moving_labels, fixed: fixed_labels })
    } else {
        None
    };
    Ok(SynthPair { moving, fixed, gt_flow: gt, target_flow, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{dice, neg_jac_fraction};

    #[test]
    fn same_seed_same_pair() {
        let spec = SynthSpec::new(SynthKind::GaussianBumps, Dims::cube(16), 3.0, 4).with_labels();
        assert_eq!(synth_pair(&spec).unwrap(), synth_pair(&spec).unwrap());
        let other = SynthSpec { seed: 5, ..spec };
        assert_ne!(synth_pair(&spec).unwrap().fixed, synth_pair(&other).unwrap().fixed);
    }

    #[test]
    fn translation_is_the_windowed_constant() {
        let dims = Dims::cube(24);
        let pair = synth_pair(&SynthSpec::new(SynthKind::Translation, dims, 3.0, 1)).unwrap();
        let window = border_window(dims);
        let centre = dims.index(12, 12, 12);
        let t = pair.gt_flow.at(centre);
        assert!((radius(t, [0.0; 3]) - 3.0).abs() < 1e-12);
        for i in 0..dims.len() {
            let u = pair.gt_flow.at(i);
            for k in 0..3 {
                assert!((u[k] - t[k] * window.data()[i]).abs() < 1e-12);
            }
        }
        assert_eq!(warp(&pair.fixed, &pair.gt_flow).unwrap(), pair.moving);
    }

    #[test]
    fn flows_are_bounded_and_fold_free() {
        for kind in SynthKind::ALL {
            for seed in 0..3 {
                let pair = synth_pair(&SynthSpec::new(kind, Dims::cube(32), 6.0, seed)).unwrap();
                assert!(pair.gt_flow.max_magnitude() <= 6.0 + 1e-9);
                assert!(pair.gt_flow.max_magnitude() > 1.0);
                assert_eq!(neg_jac_fraction(&pair.gt_flow).unwrap(), 0.0);
                let fmin = pair.fixed.data().iter().copied().fold(f64::INFINITY, f64::min);
                let fmax = pair.fixed.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
                assert_eq!((fmin, fmax), (0.0, 1.0));
            }
        }
    }

    #[test]
    fn target_flow_inverts_gt() {
        let pair = synth_pair(&SynthSpec::new(SynthKind::GaussianBumps, Dims::cube(32), 6.0, 2)).unwrap();
        // x + t(x) + gt(x + t(x)) = x
        let mut residual = warp_field(&pair.gt_flow, &pair.target_flow).unwrap();
        residual.add_assign(&pair.target_flow);
        assert!(residual.max_abs() < 1e-3, "{}", residual.max_abs());
    }

    #[test]
    fn labels_follow_the_flow() {
        let pair = synth_pair(&SynthSpec::new(SynthKind::GaussianBumps, Dims::cube(32), 7.0, 3).with_labels()).unwrap();
        let labels = pair.labels.unwrap();
        assert_eq!(labels.fixed.present_labels(), vec![1, 2]);
        let scores = dice(&labels.moving, &labels.fixed, &[1, 2]).unwrap();
        assert!(scores.iter().all(|(_, s)| s.unwrap() < 1.0));
    }

    #[test]
    fn oversized_displacement_is_rejected() {
        let spec = SynthSpec::new(SynthKind::Translation, Dims::new(16, 32, 32), 4.0, 0);
        assert!(matches!(synth_pair(&spec), Err(Error::Config(_))));
        assert!(synth_pair(&SynthSpec { max_disp: 3.9, ..spec }).is_ok());
        assert!(matches!(
            synth_pair(&SynthSpec { max_disp: f64::NAN, ..spec }),
            Err(Error::Config(_))
        ));
    }
}

//! Three-level wavelet coefficient pyramid parameterising a full-resolution
//! vector field.
//!
//! The coarsest level holds all eight sub-bands at 1/8 resolution. Each finer
//! level rebuilds its low band from the level below with an inverse
//! transform, and forms its seven high bands by upsampling the coarser high
//! bands and mixing them with free residual coefficients through per-band
//! gates:
//!
//! ```text
//! low2  = idwt(phi1)
//! high2 = a2 * up(high(phi1)) + b2 * res2
//! low3  = idwt([low2, high2])
//! high3 = a3 * up(high2) + b3 * res3
//! field = idwt([low3, high3])
//! ```
//!
//! For fixed gates the map from coefficients to field is linear, and because
//! the transform is orthonormal its adjoint is a forward analysis pass.

use crate::error::{shape_err, Error, Result};
use crate::volume::{check_same_dims, Dims, VectorField, UNIT_SPACING};
use crate::wavelet::{dwt3_unchecked, synthesize3, FilterBank, Subband, Subbands};

pub const LEVELS: usize = 3;
const CHANNELS: usize = 3;

/// Full-resolution grid size, divisible by 8 along every axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FullDims(Dims);

impl FullDims {
    pub fn new(dims: Dims) -> Result<Self> {
        if dims.to_array().iter().any(|&n| n == 0 || n % 8 != 0) {
            return shape_err(format!("pyramid needs dims divisible by 8, got {dims}"));
        }
        Ok(Self(dims))
    }

    pub fn dims(self) -> Dims {
        self.0
    }

    /// Grid size of level `level` (1 = coarsest, at 1/8).
    pub fn level_dims(self, level: usize) -> Dims {
        let div = 1 << (LEVELS + 1 - level);
        self.0.map(|n| n / div)
    }
}

/// Seven high-frequency three-channel grids, in [`Subband::HIGH`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct HighBands {
    dims: Dims,
    bands: [Vec<f64>; 7],
}

impl HighBands {
    pub fn new(dims: Dims, bands: [Vec<f64>; 7]) -> Result<Self> {
        let expected = CHANNELS * dims.len();
        if let Some(k) = bands.iter().position(|b| b.len() != expected) {
            return shape_err(format!("high band {} has wrong length for {dims}", Subband::HIGH[k]));
        }
        Ok(Self { dims, bands })
    }

    pub fn zeros(dims: Dims) -> Self {
        Self { dims, bands: std::array::from_fn(|_| vec![0.0; CHANNELS * dims.len()]) }
    }

    /// The seven high bands of a full sub-band set.
    pub fn from_subbands(s: &Subbands) -> Result<Self> {
        if s.channels() != CHANNELS {
            return shape_err(format!("expected 3-channel sub-bands, got {}", s.channels()));
        }
        Ok(Self { dims: s.dims(), bands: std::array::from_fn(|k| s.band(Subband::HIGH[k]).to_vec()) })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn band(&self, k: usize) -> &[f64] {
        &self.bands[k]
    }

    pub fn band_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.bands[k]
    }

    pub fn bands(&self) -> &[Vec<f64>; 7] {
        &self.bands
    }

    pub fn energy(&self) -> f64 {
        self.bands.iter().flatten().map(|v| v * v).sum()
    }

    pub fn num_values(&self) -> usize {
        7 * CHANNELS * self.dims.len()
    }

    /// Combines with a low band into a full sub-band set.
    fn with_low(&self, low: Vec<f64>) -> Subbands {
        let mut high = self.bands.iter();
        let bands = std::array::from_fn(|b| if b == 0 { low.clone() } else { high.next().unwrap().clone() });
        Subbands::new(self.dims, CHANNELS, bands).expect("consistent sizes")
    }
}

/// Per-band combine weights: `out = a * upsampled + b * residual`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gate {
    pub a: f64,
    pub b: f64,
}

impl Gate {
    pub const IDENTITY: Gate = Gate { a: 1.0, b: 1.0 };
}

pub type Gates = [Gate; 7];

#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientPyramid {
    full: FullDims,
    pub phi1: Subbands,
    pub res2: HighBands,
    pub res3: HighBands,
    pub gates2: Gates,
    pub gates3: Gates,
}

/// Optimizer parameter groups, unfrozen one per stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    /// All eight sub-bands at 1/8 resolution.
    Coarse,
    /// Level-2 residuals and gates.
    Level2,
    /// Level-3 residuals and gates.
    Level3,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 3] = [ParamGroup::Coarse, ParamGroup::Level2, ParamGroup::Level3];
}

pub fn init_pyramid(dims: Dims) -> Result<CoefficientPyramid> {
    let full = FullDims::new(dims)?;
    Ok(CoefficientPyramid {
        full,
        phi1: Subbands::zeros(full.level_dims(1), CHANNELS),
        res2: HighBands::zeros(full.level_dims(2)),
        res3: HighBands::zeros(full.level_dims(3)),
        gates2: [Gate::IDENTITY; 7],
        gates3: [Gate::IDENTITY; 7],
    })
}

impl CoefficientPyramid {
    pub fn full_dims(&self) -> Dims {
        self.full.dims()
    }

    /// `3·D·H·W + 28`: the coefficients form a complete basis for the field,
    /// plus two gates per high band on two levels.
    pub fn expected_num_params(dims: Dims) -> usize {
        CHANNELS * dims.len() + 2 * 2 * 7
    }

    pub fn num_params(&self) -> usize {
        self.phi1.num_values() + self.res2.num_values() + self.res3.num_values() + 2 * 2 * 7
    }

    pub fn group_len(&self, g: ParamGroup) -> usize {
        match g {
            ParamGroup::Coarse => self.phi1.num_values(),
            ParamGroup::Level2 => self.res2.num_values() + 14,
            ParamGroup::Level3 => self.res3.num_values() + 14,
        }
    }

    pub fn set_gates(&mut self, gate: Gate) {
        self.gates2 = [gate; 7];
        self.gates3 = [gate; 7];
    }

    /// Flat parameter vector: phi1 bands in label order, res2 bands, res3
    /// bands, then `(a, b)` pairs of gates2 and gates3.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.phi1.bands().iter().for_each(|b| out.extend_from_slice(b));
        self.res2.bands.iter().for_each(|b| out.extend_from_slice(b));
        self.res3.bands.iter().for_each(|b| out.extend_from_slice(b));
        for g in self.gates2.iter().chain(&self.gates3) {
            out.extend_from_slice(&[g.a, g.b]);
        }
        out
    }

    pub fn from_flat(dims: Dims, values: &[f64]) -> Result<Self> {
        let mut p = init_pyramid(dims)?;
        if values.len() != p.num_params() {
            return shape_err(format!(
                "pyramid for {dims} has {} parameters, got {}",
                p.num_params(),
                values.len()
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite pyramid parameter at index {i}")));
        }
        let mut it = values.iter().copied();
        let mut fill = |dst: &mut [f64]| dst.iter_mut().for_each(|v| *v = it.next().unwrap());
        for b in Subband::ALL {
            fill(p.phi1.band_mut(b));
        }
        for k in 0..7 {
            fill(&mut p.res2.bands[k]);
        }
        for k in 0..7 {
            fill(&mut p.res3.bands[k]);
        }
        for g in p.gates2.iter_mut().chain(p.gates3.iter_mut()) {
            let mut pair = [0.0; 2];
            fill(&mut pair);
            *g = Gate { a: pair[0], b: pair[1] };
        }
        Ok(p)
    }

    pub fn group_values(&self, g: ParamGroup) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.group_len(g));
        let push_gates = |out: &mut Vec<f64>, gates: &Gates| gates.iter().for_each(|g| out.extend_from_slice(&[g.a, g.b]));
        match g {
            ParamGroup::Coarse => self.phi1.bands().iter().for_each(|b| out.extend_from_slice(b)),
            ParamGroup::Level2 => {
                self.res2.bands.iter().for_each(|b| out.extend_from_slice(b));
                push_gates(&mut out, &self.gates2);
            }
            ParamGroup::Level3 => {
                self.res3.bands.iter().for_each(|b| out.extend_from_slice(b));
                push_gates(&mut out, &self.gates3);
            }
        }
        out
    }

    pub fn set_group_values(&mut self, g: ParamGroup, values: &[f64]) -> Result<()> {
        if values.len() != self.group_len(g) {
            return shape_err(format!("group {g:?} has {} parameters, got {}", self.group_len(g), values.len()));
        }
        let mut it = values.iter().copied();
        let mut fill = |dst: &mut [f64]| dst.iter_mut().for_each(|v| *v = it.next().unwrap());
        let (res, gates) = match g {
            ParamGroup::Coarse => {
                for b in Subband::ALL {
                    fill(self.phi1.band_mut(b));
                }
                return Ok(());
            }
            ParamGroup::Level2 => (&mut self.res2, &mut self.gates2),
            ParamGroup::Level3 => (&mut self.res3, &mut self.gates3),
        };
        for band in res.bands.iter_mut() {
            fill(band);
        }
        for gate in gates.iter_mut() {
            let mut pair = [0.0; 2];
            fill(&mut pair);
            *gate = Gate { a: pair[0], b: pair[1] };
        }
        Ok(())
    }

    fn check_shapes(&self) -> Result<()> {
        let f = self.full;
        let ok = self.phi1.dims() == f.level_dims(1)
            && self.phi1.channels() == CHANNELS
            && self.res2.dims == f.level_dims(2)
            && self.res3.dims == f.level_dims(3);
        if !ok {
            return shape_err(format!("pyramid levels inconsistent with full dims {}", f.dims()));
        }
        if self.gates2.iter().chain(&self.gates3).any(|g| !g.a.is_finite() || !g.b.is_finite()) {
            return Err(Error::State("non-finite gate value".into()));
        }
        Ok(())
    }
}

/// Per-axis align-corners interpolation weights for `n -> 2n`.
fn upsample_weights(n: usize) -> Vec<(usize, usize, f64)> {
    let m = 2 * n;
    (0..m)
        .map(|i| {
            if n == 1 {
                return (0, 0, 0.0);
            }
            let pos = i as f64 * (n - 1) as f64 / (m - 1) as f64;
            let i0 = (pos.floor() as usize).min(n - 2);
            (i0, i0 + 1, pos - i0 as f64)
        })
        .collect()
}

fn upsample_axis(x: &[f64], dims: Dims, axis: usize) -> (Vec<f64>, Dims) {
    let (outer, n, stride) = dims.axis_layout(axis);
    let weights = upsample_weights(n);
    let mut out_dims = dims.to_array();
    out_dims[2 - axis] = 2 * n;
    let mut out = vec![0.0; 2 * x.len()];
    if stride == 1 {
        for (src, dst) in x.chunks_exact(n).zip(out.chunks_exact_mut(2 * n)) {
            for (y, &(i0, i1, t)) in dst.iter_mut().zip(&weights) {
                *y = (1.0 - t) * src[i0] + t * src[i1];
            }
        }
        return (out, Dims::from_array(out_dims));
    }
    for o in 0..outer {
        let src = &x[o * n * stride..(o + 1) * n * stride];
        for (p, &(i0, i1, t)) in weights.iter().enumerate() {
            let at = (o * 2 * n + p) * stride;
            let (r0, r1) = (&src[i0 * stride..(i0 + 1) * stride], &src[i1 * stride..(i1 + 1) * stride]);
            for ((y, a), b) in out[at..at + stride].iter_mut().zip(r0).zip(r1) {
                *y = (1.0 - t) * a + t * b;
            }
        }
    }
    (out, Dims::from_array(out_dims))
}

fn upsample_axis_adjoint(y: &[f64], out_dims: Dims, axis: usize) -> (Vec<f64>, Dims) {
    let (outer, m, stride) = out_dims.axis_layout(axis);
    let n = m / 2;
    let weights = upsample_weights(n);
    let mut in_dims = out_dims.to_array();
    in_dims[2 - axis] = n;
    let mut out = vec![0.0; y.len() / 2];
    if stride == 1 {
        for (src, dst) in y.chunks_exact(m).zip(out.chunks_exact_mut(n)) {
            for (v, &(i0, i1, t)) in src.iter().zip(&weights) {
                dst[i0] += (1.0 - t) * v;
                dst[i1] += t * v;
            }
        }
        return (out, Dims::from_array(in_dims));
    }
    for o in 0..outer {
        let dst = &mut out[o * n * stride..(o + 1) * n * stride];
        for (p, &(i0, i1, t)) in weights.iter().enumerate() {
            let at = (o * m + p) * stride;
            for (s, v) in y[at..at + stride].iter().enumerate() {
                dst[i0 * stride + s] += (1.0 - t) * v;
                dst[i1 * stride + s] += t * v;
            }
        }
    }
    (out, Dims::from_array(in_dims))
}

fn upsample_grid(x: &[f64], dims: Dims) -> Vec<f64> {
    let (a, da) = upsample_axis(x, dims, 0);
    let (b, db) = upsample_axis(&a, da, 1);
    upsample_axis(&b, db, 2).0
}

fn upsample_grid_adjoint(y: &[f64], out_dims: Dims) -> Vec<f64> {
    let (a, da) = upsample_axis_adjoint(y, out_dims, 2);
    let (b, db) = upsample_axis_adjoint(&a, da, 1);
    upsample_axis_adjoint(&b, db, 0).0
}

fn map_channels(band: &[f64], dims: Dims, f: impl Fn(&[f64], Dims) -> Vec<f64>) -> Vec<f64> {
    let n = dims.len();
    band.chunks(n).flat_map(|c| f(c, dims)).collect()
}

/// Trilinear (align-corners) upsampling of every band by `factor`, which must be 2.
pub fn upsample_subbands(bands: &HighBands, factor: usize) -> Result<HighBands> {
    if factor != 2 {
        return Err(Error::Config(format!("only factor-2 upsampling is supported, got {factor}")));
    }
    Ok(upsample2(bands))
}

fn upsample2(bands: &HighBands) -> HighBands {
    let dims = bands.dims;
    HighBands {
        dims: dims.map(|n| 2 * n),
        bands: std::array::from_fn(|k| map_channels(&bands.bands[k], dims, upsample_grid)),
    }
}

fn upsample2_adjoint(bands: &HighBands) -> HighBands {
    let dims = bands.dims;
    HighBands {
        dims: dims.map(|n| n / 2),
        bands: std::array::from_fn(|k| map_channels(&bands.bands[k], dims, upsample_grid_adjoint)),
    }
}

/// `out_k = a_k * upsampled_k + b_k * residual_k` for each of the seven bands.
pub fn refine_subbands(upsampled: &HighBands, residual: &HighBands, gates: &Gates) -> Result<HighBands> {
    check_same_dims(upsampled.dims, residual.dims, "refine_subbands")?;
    Ok(HighBands {
        dims: upsampled.dims,
        bands: std::array::from_fn(|k| {
            let Gate { a, b } = gates[k];
            upsampled.bands[k].iter().zip(&residual.bands[k]).map(|(u, r)| a * u + b * r).collect()
        }),
    })
}

fn idwt_channels(s: &Subbands, fb: &FilterBank) -> Vec<f64> {
    (0..CHANNELS)
        .flat_map(|c| {
            let bands = std::array::from_fn(|b| s.band_channel(Subband::from_index(b), c));
            synthesize3(bands, s.dims(), fb, [0, 1, 2])
        })
        .collect()
}

fn dwt_channels(x: &[f64], dims: Dims, fb: &FilterBank) -> Subbands {
    let n = dims.len();
    let chans: Vec<&[f64]> = x.chunks(n).collect();
    dwt3_unchecked(&chans, dims, fb)
}

/// Intermediates of the reconstruction chain.
struct Forward {
    up2: HighBands,
    up3: HighBands,
    field: Vec<f64>,
}

fn forward(p: &CoefficientPyramid, fb: &FilterBank) -> Result<Forward> {
    p.check_shapes()?;
    let low2 = idwt_channels(&p.phi1, fb);
    let up2 = upsample2(&HighBands::from_subbands(&p.phi1)?);
    let high2 = refine_subbands(&up2, &p.res2, &p.gates2)?;
    let low3 = idwt_channels(&high2.with_low(low2), fb);
    let up3 = upsample2(&high2);
    let high3 = refine_subbands(&up3, &p.res3, &p.gates3)?;
    let field = idwt_channels(&high3.with_low(low3), fb);
    Ok(Forward { up2, up3, field })
}

/// Full-resolution field described by the pyramid.
pub fn reconstruct_flow(p: &CoefficientPyramid, fb: &FilterBank) -> Result<VectorField> {
    let f = forward(p, fb)?;
    let dims = p.full_dims();
    let n = dims.len();
    let mut chunks = f.field.chunks(n).map(|c| c.to_vec());
    VectorField::new(dims, UNIT_SPACING, std::array::from_fn(|_| chunks.next().unwrap()))
}

/// Gradient of `<g, reconstruct_flow(p)>` with respect to every pyramid
/// parameter, returned in pyramid shape.
pub fn flow_gradient_to_coeffs(g: &VectorField, p: &CoefficientPyramid, fb: &FilterBank) -> Result<CoefficientPyramid> {
    check_same_dims(g.dims(), p.full_dims(), "flow_gradient_to_coeffs")?;
    let fwd = forward(p, fb)?;
    let full = p.full;
    let flat: Vec<f64> = g.channels().iter().flatten().copied().collect();

    // finest level: dwt is the adjoint of idwt
    let g3 = dwt_channels(&flat, full.dims(), fb);
    let g_high3 = HighBands::from_subbands(&g3)?;
    let (g_res3, g_gates3, g_up3) = refine_adjoint(&g_high3, &fwd.up3, &p.res3, &p.gates3);

    let g2 = dwt_channels(g3.band(Subband::Lll), full.level_dims(3), fb);
    let mut g_high2 = HighBands::from_subbands(&g2)?;
    let back = upsample2_adjoint(&g_up3);
    for k in 0..7 {
        for (a, b) in g_high2.bands[k].iter_mut().zip(&back.bands[k]) {
            *a += b;
        }
    }
    let (g_res2, g_gates2, g_up2) = refine_adjoint(&g_high2, &fwd.up2, &p.res2, &p.gates2);

    let mut g_phi1 = dwt_channels(g2.band(Subband::Lll), full.level_dims(2), fb);
    let back = upsample2_adjoint(&g_up2);
    for (k, band) in Subband::HIGH.iter().enumerate() {
        for (a, b) in g_phi1.band_mut(*band).iter_mut().zip(&back.bands[k]) {
            *a += b;
        }
    }

    Ok(CoefficientPyramid { full, phi1: g_phi1, res2: g_res2, res3: g_res3, gates2: g_gates2, gates3: g_gates3 })
}

/// Adjoint of [`refine_subbands`]: returns gradients for the residual, the
/// gates and the upsampled input.
fn refine_adjoint(g: &HighBands, up: &HighBands, res: &HighBands, gates: &Gates) -> (HighBands, Gates, HighBands) {
    let mut g_gates = [Gate { a: 0.0, b: 0.0 }; 7];
    let mut g_res = HighBands::zeros(g.dims);
    let mut g_up = HighBands::zeros(g.dims);
    for k in 0..7 {
        let Gate { a, b } = gates[k];
        g_gates[k] = Gate {
            a: crate::volume::dot(&g.bands[k], &up.bands[k]),
            b: crate::volume::dot(&g.bands[k], &res.bands[k]),
        };
        for ((gr, gu), gv) in g_res.bands[k].iter_mut().zip(g_up.bands[k].iter_mut()).zip(&g.bands[k]) {
            *gr = b * gv;
            *gu = a * gv;
        }
    }
    (g_res, g_gates, g_up)
}

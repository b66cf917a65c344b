//! Separable single-level 3D orthogonal wavelet transform with periodic
//! extension.
//!
//! One analysis level splits a grid into eight half-resolution sub-bands by
//! running a low-pass/high-pass pair along each axis. With orthonormal filters
//! and circular wrap-around the transform is an orthogonal matrix, so the
//! synthesis pass is both its inverse and its adjoint.

use std::fmt;
use std::str::FromStr;

use crate::error::{shape_err, Error, Result};
use crate::volume::{Dims, ScalarVolume, Spacing, VectorField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WaveletKind {
    Haar,
    /// Four-tap Daubechies (D4).
    Db2,
}

impl WaveletKind {
    pub fn name(self) -> &'static str {
        match self {
            WaveletKind::Haar => "haar",
            WaveletKind::Db2 => "db2",
        }
    }
}

impl fmt::Display for WaveletKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WaveletKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "haar" | "db1" => Ok(WaveletKind::Haar),
            "db2" | "d4" | "daubechies" => Ok(WaveletKind::Db2),
            other => Err(Error::Config(format!("unknown wavelet kind {other:?} (expected haar or db2)"))),
        }
    }
}

/// Orthonormal analysis filter pair. `high[k] = (-1)^k low[len-1-k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank {
    kind: WaveletKind,
    low: Vec<f64>,
    high: Vec<f64>,
}

impl FilterBank {
    pub fn new(kind: WaveletKind) -> Self {
        let low = match kind {
            WaveletKind::Haar => vec![std::f64::consts::FRAC_1_SQRT_2; 2],
            WaveletKind::Db2 => {
                let s3 = 3f64.sqrt();
                let norm = 4.0 * std::f64::consts::SQRT_2;
                vec![(1.0 + s3) / norm, (3.0 + s3) / norm, (3.0 - s3) / norm, (1.0 - s3) / norm]
            }
        };
        let n = low.len();
        let high = (0..n).map(|k| if k % 2 == 0 { low[n - 1 - k] } else { -low[n - 1 - k] }).collect();
        Self { kind, low, high }
    }

    pub fn kind(&self) -> WaveletKind {
        self.kind
    }

    pub fn low(&self) -> &[f64] {
        &self.low
    }

    pub fn high(&self) -> &[f64] {
        &self.high
    }

    pub fn len(&self) -> usize {
        self.low.len()
    }

    pub fn is_empty(&self) -> bool {
        self.low.is_empty()
    }
}

/// Looks up a filter bank by name (`haar` or `db2`).
pub fn filter_bank(kind: &str) -> Result<FilterBank> {
    Ok(FilterBank::new(kind.parse()?))
}

/// Sub-band label. Letters name the filter applied along D, W and H in that
/// order, so `Llh` is low-pass in depth and width and high-pass in height.
/// The discriminant spells the label in binary with `h` = 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Subband {
    Lll = 0,
    Llh = 1,
    Lhl = 2,
    Lhh = 3,
    Hll = 4,
    Hlh = 5,
    Hhl = 6,
    Hhh = 7,
}

impl Subband {
    pub const ALL: [Subband; 8] = [
        Subband::Lll,
        Subband::Llh,
        Subband::Lhl,
        Subband::Lhh,
        Subband::Hll,
        Subband::Hlh,
        Subband::Hhl,
        Subband::Hhh,
    ];

    pub const HIGH: [Subband; 7] =
        [Subband::Llh, Subband::Lhl, Subband::Lhh, Subband::Hll, Subband::Hlh, Subband::Hhl, Subband::Hhh];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Subband {
        Self::ALL[i]
    }

    pub fn label(self) -> &'static str {
        ["lll", "llh", "lhl", "lhh", "hll", "hlh", "hhl", "hhh"][self.index()]
    }

    /// Whether the high-pass filter was applied along coordinate axis `k`
    /// (0 = W, 1 = H, 2 = D).
    pub fn is_high(self, k: usize) -> bool {
        self.index() & axis_bit(k) != 0
    }
}

impl fmt::Display for Subband {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// The eight coefficient grids of one analysis level.
#[derive(Clone, Debug, PartialEq)]
pub struct Subbands {
    dims: Dims,
    channels: usize,
    /// Indexed by [`Subband::index`]; each holds `channels` grids back to back.
    bands: [Vec<f64>; 8],
}

impl Subbands {
    pub fn new(dims: Dims, channels: usize, bands: [Vec<f64>; 8]) -> Result<Self> {
        let expected = channels * dims.len();
        for (b, band) in bands.iter().enumerate() {
            if band.len() != expected {
                return shape_err(format!(
                    "sub-band {} has {} values, expected {expected} ({channels} x {dims})",
                    Subband::from_index(b),
                    band.len()
                ));
            }
        }
        Ok(Self { dims, channels, bands })
    }

    pub fn zeros(dims: Dims, channels: usize) -> Self {
        Self { dims, channels, bands: std::array::from_fn(|_| vec![0.0; channels * dims.len()]) }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn band(&self, b: Subband) -> &[f64] {
        &self.bands[b.index()]
    }

    pub fn band_mut(&mut self, b: Subband) -> &mut [f64] {
        &mut self.bands[b.index()]
    }

    pub fn band_channel(&self, b: Subband, c: usize) -> &[f64] {
        let n = self.dims.len();
        &self.bands[b.index()][c * n..(c + 1) * n]
    }

    pub fn bands(&self) -> &[Vec<f64>; 8] {
        &self.bands
    }

    pub fn into_bands(self) -> [Vec<f64>; 8] {
        self.bands
    }

    pub fn energy(&self) -> f64 {
        self.bands.iter().flatten().map(|v| v * v).sum()
    }

    pub fn dot(&self, other: &Subbands) -> f64 {
        self.bands.iter().zip(&other.bands).map(|(a, b)| crate::volume::dot(a, b)).sum()
    }

    pub fn num_values(&self) -> usize {
        8 * self.channels * self.dims.len()
    }
}

/// Analysis along one axis. Returns the (low, high) halves.
fn analyze_axis(x: &[f64], dims: Dims, axis: usize, fb: &FilterBank) -> (Vec<f64>, Vec<f64>) {
    let (outer, n, stride) = dims.axis_layout(axis);
    let half = n / 2;
    let mut lo = vec![0.0; x.len() / 2];
    let mut hi = vec![0.0; x.len() / 2];
    if stride == 1 {
        for ((src, l), h) in x.chunks_exact(n).zip(lo.chunks_exact_mut(half)).zip(hi.chunks_exact_mut(half)) {
            for m in 0..half {
                let (mut a, mut b) = (0.0, 0.0);
                for k in 0..fb.len() {
                    let v = src[(2 * m + k) % n];
                    a += fb.low[k] * v;
                    b += fb.high[k] * v;
                }
                l[m] = a;
                h[m] = b;
            }
        }
        return (lo, hi);
    }
    for o in 0..outer {
        let src = &x[o * n * stride..(o + 1) * n * stride];
        for m in 0..half {
            let out = (o * half + m) * stride;
            let lo_row = &mut lo[out..out + stride];
            let hi_row = &mut hi[out..out + stride];
            for k in 0..fb.len() {
                let j = (2 * m + k) % n;
                let (a, b) = (fb.low[k], fb.high[k]);
                for ((l, h), v) in lo_row.iter_mut().zip(hi_row.iter_mut()).zip(&src[j * stride..(j + 1) * stride]) {
                    *l += a * v;
                    *h += b * v;
                }
            }
        }
    }
    (lo, hi)
}

/// Synthesis along one axis: the transpose of [`analyze_axis`].
fn synthesize_axis(lo: &[f64], hi: &[f64], half_dims: Dims, axis: usize, fb: &FilterBank) -> Vec<f64> {
    let (outer, half, stride) = half_dims.axis_layout(axis);
    let n = 2 * half;
    let mut out = vec![0.0; 2 * lo.len()];
    if stride == 1 {
        for ((y, l), h) in out.chunks_exact_mut(n).zip(lo.chunks_exact(half)).zip(hi.chunks_exact(half)) {
            for m in 0..half {
                for k in 0..fb.len() {
                    y[(2 * m + k) % n] += fb.low[k] * l[m] + fb.high[k] * h[m];
                }
            }
        }
        return out;
    }
    for o in 0..outer {
        let block = &mut out[o * n * stride..(o + 1) * n * stride];
        for m in 0..half {
            let at = (o * half + m) * stride;
            let (lo_row, hi_row) = (&lo[at..at + stride], &hi[at..at + stride]);
            for k in 0..fb.len() {
                let j = (2 * m + k) % n;
                let (a, b) = (fb.low[k], fb.high[k]);
                for ((y, l), h) in block[j * stride..(j + 1) * stride].iter_mut().zip(lo_row).zip(hi_row) {
                    *y += a * l + b * h;
                }
            }
        }
    }
    out
}

/// Bit of [`Subband::index`] set by the high-pass filter along `axis`.
const fn axis_bit(axis: usize) -> usize {
    [2, 1, 4][axis]
}

const DEFAULT_ORDER: [usize; 3] = [0, 1, 2];

/// Single-channel analysis with an explicit axis order. No precondition
/// checks beyond even extents.
pub(crate) fn analyze3(x: &[f64], dims: Dims, fb: &FilterBank, order: [usize; 3]) -> [Vec<f64>; 8] {
    // keyed by the bit pattern of high-pass axes applied so far
    let mut parts: Vec<(usize, Vec<f64>)> = vec![(0, x.to_vec())];
    let mut cur = dims;
    for &axis in &order {
        let mut next = Vec::with_capacity(parts.len() * 2);
        for (bits, data) in &parts {
            let (lo, hi) = analyze_axis(data, cur, axis, fb);
            next.push((*bits, lo));
            next.push((*bits | axis_bit(axis), hi));
        }
        let mut a = cur.to_array();
        a[2 - axis] /= 2;
        cur = Dims::from_array(a);
        parts = next;
    }
    let mut out: [Vec<f64>; 8] = Default::default();
    for (bits, data) in parts {
        out[bits] = data;
    }
    out
}

pub(crate) fn synthesize3(bands: [&[f64]; 8], half: Dims, fb: &FilterBank, order: [usize; 3]) -> Vec<f64> {
    let mut parts: Vec<(usize, Vec<f64>)> = (0..8).map(|b| (b, bands[b].to_vec())).collect();
    let mut cur = half;
    for &axis in order.iter().rev() {
        let mut next = Vec::with_capacity(parts.len() / 2);
        let (lows, highs): (Vec<_>, Vec<_>) = parts.into_iter().partition(|(bits, _)| bits & axis_bit(axis) == 0);
        for (bits, lo) in lows {
            let hi = &highs.iter().find(|(b, _)| *b == bits | axis_bit(axis)).expect("paired sub-band").1;
            next.push((bits, synthesize_axis(&lo, hi, cur, axis, fb)));
        }
        let mut a = cur.to_array();
        a[2 - axis] *= 2;
        cur = Dims::from_array(a);
        parts = next;
    }
    parts.pop().expect("one grid left").1
}

fn check_analysis_dims(dims: Dims, fb: &FilterBank) -> Result<()> {
    for n in dims.to_array() {
        if n % 2 != 0 {
            return shape_err(format!("wavelet analysis needs even dims, got {dims}"));
        }
        if n < fb.len() {
            return shape_err(format!("dims {dims} shorter than the {}-tap {} filter", fb.len(), fb.kind()));
        }
    }
    Ok(())
}

/// One analysis level over a multi-channel grid.
pub fn dwt3(channels: &[&[f64]], dims: Dims, fb: &FilterBank) -> Result<Subbands> {
    check_analysis_dims(dims, fb)?;
    if let Some(c) = channels.iter().position(|c| c.len() != dims.len()) {
        return shape_err(format!("channel {c} length does not match grid {dims}"));
    }
    Ok(dwt3_unchecked(channels, dims, fb))
}

pub(crate) fn dwt3_unchecked(channels: &[&[f64]], dims: Dims, fb: &FilterBank) -> Subbands {
    let half = dims.map(|n| n / 2);
    let mut bands: [Vec<f64>; 8] = std::array::from_fn(|_| Vec::with_capacity(channels.len() * half.len()));
    for ch in channels {
        for (b, part) in analyze3(ch, dims, fb, DEFAULT_ORDER).into_iter().enumerate() {
            bands[b].extend_from_slice(&part);
        }
    }
    Subbands { dims: half, channels: channels.len(), bands }
}

/// Inverse of [`dwt3`]; returns one full-resolution grid per channel.
pub fn idwt3(coeffs: &Subbands, fb: &FilterBank) -> Result<Vec<Vec<f64>>> {
    let expected = coeffs.channels * coeffs.dims.len();
    if coeffs.bands.iter().any(|b| b.len() != expected) {
        return shape_err("inconsistent sub-band sizes");
    }
    Ok((0..coeffs.channels)
        .map(|c| {
            let bands = std::array::from_fn(|b| coeffs.band_channel(Subband::from_index(b), c));
            synthesize3(bands, coeffs.dims, fb, DEFAULT_ORDER)
        })
        .collect())
}

pub fn dwt3_volume(vol: &ScalarVolume, fb: &FilterBank) -> Result<Subbands> {
    dwt3(&[vol.data()], vol.dims(), fb)
}

pub fn idwt3_volume(coeffs: &Subbands, fb: &FilterBank, spacing: Spacing) -> Result<ScalarVolume> {
    if coeffs.channels != 1 {
        return shape_err(format!("expected 1 channel, sub-bands carry {}", coeffs.channels));
    }
    let data = idwt3(coeffs, fb)?.pop().unwrap_or_default();
    ScalarVolume::new(coeffs.dims.map(|n| 2 * n), spacing, data)
}

pub fn dwt3_field(field: &VectorField, fb: &FilterBank) -> Result<Subbands> {
    let [a, b, c] = field.channels();
    dwt3(&[a, b, c], field.dims(), fb)
}

pub fn idwt3_field(coeffs: &Subbands, fb: &FilterBank, spacing: Spacing) -> Result<VectorField> {
    if coeffs.channels != 3 {
        return shape_err(format!("expected 3 channels, sub-bands carry {}", coeffs.channels));
    }
    let mut chans = idwt3(coeffs, fb)?.into_iter();
    let channels = std::array::from_fn(|_| chans.next().unwrap());
    VectorField::new(coeffs.dims.map(|n| 2 * n), spacing, channels)
}

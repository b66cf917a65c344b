//! Scalar and vector grids, trilinear sampling, backward warping and the
//! differential operators built on top of them.
//!
//! Grids are stored W-fastest (C order over D, H, W). Continuous coordinates
//! and vector channels use the opposite, "x-first" order: component 0 moves
//! along W, component 1 along H, component 2 along D. Displacements are in
//! voxel units.

use crate::error::{shape_err, Error, Result};

/// Grid extents in storage order (depth, height, width).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dims {
    pub d: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub const fn new(d: usize, h: usize, w: usize) -> Self {
        Self { d, h, w }
    }

    pub const fn cube(n: usize) -> Self {
        Self { d: n, h: n, w: n }
    }

    pub const fn len(&self) -> usize {
        self.d * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `[d, h, w]`.
    pub const fn to_array(self) -> [usize; 3] {
        [self.d, self.h, self.w]
    }

    pub const fn from_array(a: [usize; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    #[inline]
    pub const fn index(&self, d: usize, h: usize, w: usize) -> usize {
        (d * self.h + h) * self.w + w
    }

    /// Extent along coordinate axis `k` (0 = W, 1 = H, 2 = D).
    #[inline]
    pub const fn extent(&self, k: usize) -> usize {
        match k {
            0 => self.w,
            1 => self.h,
            _ => self.d,
        }
    }

    /// Memory stride of coordinate axis `k` (0 = W, 1 = H, 2 = D).
    #[inline]
    pub const fn stride(&self, k: usize) -> usize {
        match k {
            0 => 1,
            1 => self.w,
            _ => self.w * self.h,
        }
    }

    pub const fn min_extent(&self) -> usize {
        let m = if self.d < self.h { self.d } else { self.h };
        if m < self.w {
            m
        } else {
            self.w
        }
    }

    pub fn map(self, f: impl Fn(usize) -> usize) -> Self {
        Self::new(f(self.d), f(self.h), f(self.w))
    }

    /// Iterates `(d, h, w)` in storage order.
    pub fn iter(self) -> VoxelIter {
        VoxelIter { dims: self, d: 0, h: 0, w: 0 }
    }

    /// `(outer, n, stride)`: the grid seen as `outer` contiguous blocks of
    /// `n` rows along `axis`, each row `stride` values long.
    pub(crate) fn axis_layout(&self, axis: usize) -> (usize, usize, usize) {
        let n = self.extent(axis);
        let stride = self.stride(axis);
        (self.len() / (n * stride).max(1), n, stride)
    }
}

/// Storage-order voxel coordinates of a grid.
#[derive(Clone, Debug)]
pub struct VoxelIter {
    dims: Dims,
    d: usize,
    h: usize,
    w: usize,
}

impl Iterator for VoxelIter {
    type Item = (usize, usize, usize);

    #[inline]
    fn next(&mut self) -> Option<Self::Item> {
        if self.d >= self.dims.d || self.dims.h == 0 || self.dims.w == 0 {
            return None;
        }
        let out = (self.d, self.h, self.w);
        self.w += 1;
        if self.w == self.dims.w {
            self.w = 0;
            self.h += 1;
            if self.h == self.dims.h {
                self.h = 0;
                self.d += 1;
            }
        }
        Some(out)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let done = if self.dims.is_empty() { 0 } else { self.dims.index(self.d, self.h, self.w) };
        let left = self.dims.len().saturating_sub(done);
        (left, Some(left))
    }
}

impl ExactSizeIterator for VoxelIter {}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.d, self.h, self.w)
    }
}

/// Physical voxel size in millimetres, storage order `[d, h, w]`.
pub type Spacing = [f64; 3];

pub const UNIT_SPACING: Spacing = [1.0, 1.0, 1.0];

fn check_finite(data: &[f64], what: &str) -> Result<()> {
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidSample(format!("{what}: non-finite value at index {i}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarVolume {
    dims: Dims,
    spacing: Spacing,
    data: Vec<f64>,
}

impl ScalarVolume {
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.len() {
            return shape_err(format!("volume {dims} needs {} values, got {}", dims.len(), data.len()));
        }
        check_finite(&data, "volume")?;
        Ok(Self { dims, spacing, data })
    }

    pub fn zeros(dims: Dims) -> Self {
        Self { dims, spacing: UNIT_SPACING, data: vec![0.0; dims.len()] }
    }

    pub fn from_fn(dims: Dims, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let data = dims.iter().map(|(d, h, w)| f(d, h, w)).collect();
        Self { dims, spacing: UNIT_SPACING, data }
    }

    pub fn with_spacing(mut self, spacing: Spacing) -> Self {
        self.spacing = spacing;
        self
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, d: usize, h: usize, w: usize) -> f64 {
        self.data[self.dims.index(d, h, w)]
    }

    pub fn dot(&self, other: &ScalarVolume) -> f64 {
        dot(&self.data, &other.data)
    }

    /// Min-max rescale into `[0, 1]`; a constant volume maps to zeros.
    pub fn normalized(&self) -> ScalarVolume {
        let (lo, hi) = self
            .data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let span = hi - lo;
        let data = if span > 0.0 {
            self.data.iter().map(|v| (v - lo) / span).collect()
        } else {
            vec![0.0; self.data.len()]
        };
        Self { dims: self.dims, spacing: self.spacing, data }
    }
}

/// Three-channel displacement or velocity field in voxel units.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    dims: Dims,
    spacing: Spacing,
    channels: [Vec<f64>; 3],
}

impl VectorField {
    pub fn new(dims: Dims, spacing: Spacing, channels: [Vec<f64>; 3]) -> Result<Self> {
        for (c, ch) in channels.iter().enumerate() {
            if ch.len() != dims.len() {
                return shape_err(format!(
                    "field channel {c} has {} values, grid {dims} needs {}",
                    ch.len(),
                    dims.len()
                ));
            }
            check_finite(ch, "field")?;
        }
        Ok(Self { dims, spacing, channels })
    }

    pub fn zeros(dims: Dims) -> Self {
        let n = dims.len();
        Self { dims, spacing: UNIT_SPACING, channels: [vec![0.0; n], vec![0.0; n], vec![0.0; n]] }
    }

    /// Builds a field from a per-voxel function of `(d, h, w)` returning `[u_w, u_h, u_d]`.
    pub fn from_fn(dims: Dims, f: impl Fn(usize, usize, usize) -> [f64; 3]) -> Self {
        let mut out = Self::zeros(dims);
        for (i, (d, h, w)) in dims.iter().enumerate() {
            let v = f(d, h, w);
            for (ch, x) in out.channels.iter_mut().zip(v) {
                ch[i] = x;
            }
        }
        out
    }

    pub fn constant(dims: Dims, value: [f64; 3]) -> Self {
        Self::from_fn(dims, |_, _, _| value)
    }

    pub fn with_spacing(mut self, spacing: Spacing) -> Self {
        self.spacing = spacing;
        self
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.channels[c]
    }

    pub fn channels(&self) -> &[Vec<f64>; 3] {
        &self.channels
    }

    pub fn into_channels(self) -> [Vec<f64>; 3] {
        self.channels
    }

    pub fn at(&self, i: usize) -> [f64; 3] {
        [self.channels[0][i], self.channels[1][i], self.channels[2][i]]
    }

    pub fn channel_volume(&self, c: usize) -> ScalarVolume {
        ScalarVolume { dims: self.dims, spacing: self.spacing, data: self.channels[c].clone() }
    }

    pub fn dot(&self, other: &VectorField) -> f64 {
        (0..3).map(|c| dot(&self.channels[c], &other.channels[c])).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    /// Largest per-voxel Euclidean displacement.
    pub fn max_magnitude(&self) -> f64 {
        (0..self.dims.len())
            .map(|i| self.at(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.channels.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean_magnitude(&self) -> f64 {
        let n = self.dims.len();
        (0..n).map(|i| self.at(i).iter().map(|v| v * v).sum::<f64>().sqrt()).sum::<f64>() / n as f64
    }

    pub fn scaled(&self, s: f64) -> VectorField {
        let mut out = self.clone();
        out.channels.iter_mut().flatten().for_each(|v| *v *= s);
        out
    }

    pub fn add_assign(&mut self, other: &VectorField) {
        for c in 0..3 {
            for (a, b) in self.channels[c].iter_mut().zip(&other.channels[c]) {
                *a += b;
            }
        }
    }

    pub fn add_scaled(&mut self, s: f64, other: &VectorField) {
        for c in 0..3 {
            for (a, b) in self.channels[c].iter_mut().zip(&other.channels[c]) {
                *a += s * b;
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn check_same_dims(a: Dims, b: Dims, what: &str) -> Result<()> {
    if a != b {
        return shape_err(format!("{what}: dims {a} and {b} differ"));
    }
    Ok(())
}

/// Interpolation stencil along one axis: the two bracketing indices, the
/// fractional weight of the upper one, and whether the coordinate lies inside
/// the grid (clamped coordinates have zero derivative).
#[derive(Clone, Copy, Debug)]
struct Stencil {
    i0: usize,
    i1: usize,
    t: f64,
    active: bool,
}

#[inline]
fn stencil(c: f64, n: usize) -> Stencil {
    if n == 1 {
        return Stencil { i0: 0, i1: 0, t: 0.0, active: false };
    }
    let last = (n - 1) as f64;
    let active = (0.0..=last).contains(&c);
    let cc = c.clamp(0.0, last);
    // cc >= 0, so truncation is floor; the top sample uses the last cell at t = 1
    let i0 = (cc as usize).min(n - 2);
    Stencil { i0, i1: i0 + 1, t: cc - i0 as f64, active }
}

/// Exact (signed zeros included) at `t = 0` and `t = 1`.
#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    // selects rather than branches: t is rarely exactly 0 or 1 inside a warp
    let r = (1.0 - t) * a + t * b;
    let r = if t == 1.0 { b } else { r };
    if t == 0.0 {
        a
    } else {
        r
    }
}

/// Flat indices of the corner cube, ordered by bit pattern
/// `(dz << 2) | (dy << 1) | dx`.
#[inline]
fn corner_indices(dims: Dims, s: &[Stencil; 3]) -> [usize; 8] {
    let b = dims.index(s[2].i0, s[1].i0, s[0].i0);
    let x = s[0].i1 - s[0].i0;
    let y = (s[1].i1 - s[1].i0) * dims.w;
    let z = (s[2].i1 - s[2].i0) * dims.w * dims.h;
    [b, b + x, b + y, b + y + x, b + z, b + z + x, b + z + y, b + z + y + x]
}

#[inline]
fn gather(data: &[f64], idx: &[usize; 8]) -> [f64; 8] {
    let mut out = [0.0; 8];
    for k in 0..8 {
        out[k] = data[idx[k]];
    }
    out
}

#[inline]
fn corners(data: &[f64], dims: Dims, s: &[Stencil; 3]) -> [f64; 8] {
    gather(data, &corner_indices(dims, s))
}

/// Collapses the corner cube axis by axis (x, then y, then z). The axis named
/// by `diff` is differentiated instead of interpolated.
#[inline]
fn reduce(c: [f64; 8], s: &[Stencil; 3], diff: Option<usize>) -> f64 {
    let op = |a: f64, b: f64, k: usize| if diff == Some(k) { b - a } else { lerp(a, b, s[k].t) };
    let x = [op(c[0], c[1], 0), op(c[2], c[3], 0), op(c[4], c[5], 0), op(c[6], c[7], 0)];
    let y = [op(x[0], x[1], 1), op(x[2], x[3], 1)];
    op(y[0], y[1], 2)
}

#[inline]
fn stencils(dims: Dims, coord: [f64; 3]) -> [Stencil; 3] {
    [stencil(coord[0], dims.w), stencil(coord[1], dims.h), stencil(coord[2], dims.d)]
}

#[inline]
fn sample_raw(data: &[f64], dims: Dims, coord: [f64; 3]) -> f64 {
    let s = stencils(dims, coord);
    reduce(corners(data, dims, &s), &s, None)
}

/// Trilinear interpolation at continuous coordinate `(x, y, z)` = (W, H, D)
/// index space, clamping to the border.
pub fn trilinear_sample(vol: &ScalarVolume, coord: [f64; 3]) -> Result<f64> {
    if coord.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidSample(format!("coordinate {coord:?} is not finite")));
    }
    Ok(sample_raw(&vol.data, vol.dims, coord))
}

#[inline]
fn sample_position(flow: &VectorField, i: usize, d: usize, h: usize, w: usize) -> [f64; 3] {
    [w as f64 + flow.channels[0][i], h as f64 + flow.channels[1][i], d as f64 + flow.channels[2][i]]
}

fn warp_raw(data: &[f64], flow: &VectorField) -> Vec<f64> {
    let dims = flow.dims;
    dims.iter()
        .enumerate()
        .map(|(i, (d, h, w))| sample_raw(data, dims, sample_position(flow, i, d, h, w)))
        .collect()
}

/// Backward warp: `out(x) = moving(x + flow(x))`.
pub fn warp(moving: &ScalarVolume, flow: &VectorField) -> Result<ScalarVolume> {
    check_same_dims(moving.dims, flow.dims, "warp")?;
    Ok(ScalarVolume { dims: moving.dims, spacing: moving.spacing, data: warp_raw(&moving.data, flow) })
}

/// Warps every channel of `field` through `flow`.
pub fn warp_field(field: &VectorField, flow: &VectorField) -> Result<VectorField> {
    check_same_dims(field.dims, flow.dims, "warp_field")?;
    let dims = flow.dims;
    let mut channels: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; dims.len()]);
    for (i, (d, h, w)) in dims.iter().enumerate() {
        let s = stencils(dims, sample_position(flow, i, d, h, w));
        let idx = corner_indices(dims, &s);
        for (ch, src) in channels.iter_mut().zip(&field.channels) {
            ch[i] = reduce(gather(src, &idx), &s, None);
        }
    }
    Ok(VectorField { dims: field.dims, spacing: field.spacing, channels })
}

/// Nearest-neighbour backward warp, used for label maps.
pub fn warp_nearest(moving: &ScalarVolume, flow: &VectorField) -> Result<ScalarVolume> {
    check_same_dims(moving.dims, flow.dims, "warp_nearest")?;
    let dims = moving.dims;
    let pick = |c: f64, n: usize| -> usize {
        // half-way ties round up
        let r = (c + 0.5).floor();
        r.clamp(0.0, (n - 1) as f64) as usize
    };
    let data = dims
        .iter()
        .enumerate()
        .map(|(i, (d, h, w))| {
            let p = sample_position(flow, i, d, h, w);
            moving.data[dims.index(pick(p[2], dims.d), pick(p[1], dims.h), pick(p[0], dims.w))]
        })
        .collect();
    Ok(ScalarVolume { dims, spacing: moving.spacing, data })
}

/// Per-axis derivative weights of the trilinear interpolant over the corner
/// cube; all zero for a clamped axis.
#[inline]
#[allow(clippy::needless_range_loop)]
fn corner_grad_weights(s: &[Stencil; 3]) -> [[f64; 8]; 3] {
    let w = [[1.0 - s[0].t, s[0].t], [1.0 - s[1].t, s[1].t], [1.0 - s[2].t, s[2].t]];
    let dw = [-1.0, 1.0];
    let mut out = [[0.0; 8]; 3];
    for bit in 0..8 {
        let (bx, by, bz) = (bit & 1, (bit >> 1) & 1, (bit >> 2) & 1);
        out[0][bit] = dw[bx] * w[1][by] * w[2][bz];
        out[1][bit] = w[0][bx] * dw[by] * w[2][bz];
        out[2][bit] = w[0][bx] * w[1][by] * dw[bz];
    }
    for k in 0..3 {
        if !s[k].active {
            out[k] = [0.0; 8];
        }
    }
    out
}

#[inline]
fn weighted(c: &[f64; 8], w: &[f64; 8]) -> f64 {
    let mut acc = 0.0;
    for k in 0..8 {
        acc += c[k] * w[k];
    }
    acc
}

/// Accumulates `sum_c upstream_c * d warp(moving_c, flow) / d flow` into `out`.
fn warp_backward_raw(moving: &[&[f64]], flow: &VectorField, upstream: &[&[f64]], out: &mut [Vec<f64>; 3]) {
    let dims = flow.dims;
    for (i, (d, h, w)) in dims.iter().enumerate() {
        if upstream.iter().all(|u| u[i] == 0.0) {
            continue;
        }
        let s = stencils(dims, sample_position(flow, i, d, h, w));
        if !(s[0].active || s[1].active || s[2].active) {
            continue;
        }
        let idx = corner_indices(dims, &s);
        let gw = corner_grad_weights(&s);
        let mut acc = [0.0; 3];
        for (m, up) in moving.iter().zip(upstream) {
            let u = up[i];
            if u == 0.0 {
                continue;
            }
            let cv = gather(m, &idx);
            for k in 0..3 {
                acc[k] += u * weighted(&cv, &gw[k]);
            }
        }
        for k in 0..3 {
            out[k][i] += acc[k];
        }
    }
}

/// Gradient of `<upstream, warp(moving, flow)>` with respect to `flow`.
pub fn warp_backward(moving: &ScalarVolume, flow: &VectorField, upstream: &ScalarVolume) -> Result<VectorField> {
    check_same_dims(moving.dims, flow.dims, "warp_backward")?;
    check_same_dims(upstream.dims, flow.dims, "warp_backward")?;
    let mut out = VectorField::zeros(flow.dims).with_spacing(flow.spacing);
    warp_backward_raw(&[&moving.data], flow, &[&upstream.data], &mut out.channels);
    Ok(out)
}

/// Flow gradient of `sum_c <upstream_c, warp(field_c, flow)>`.
pub(crate) fn warp_field_backward_flow(field: &VectorField, flow: &VectorField, upstream: &VectorField) -> VectorField {
    let mut out = VectorField::zeros(flow.dims).with_spacing(flow.spacing);
    let f = [&field.channels[0][..], &field.channels[1][..], &field.channels[2][..]];
    let u = [&upstream.channels[0][..], &upstream.channels[1][..], &upstream.channels[2][..]];
    warp_backward_raw(&f, flow, &u, &mut out.channels);
    out
}

/// Trilinear weights of the corner cube, in [`corner_indices`] order.
#[inline]
fn corner_weights(s: &[Stencil; 3]) -> [f64; 8] {
    let wts = [[1.0 - s[0].t, s[0].t], [1.0 - s[1].t, s[1].t], [1.0 - s[2].t, s[2].t]];
    std::array::from_fn(|bit| wts[0][bit & 1] * wts[1][(bit >> 1) & 1] * wts[2][(bit >> 2) & 1])
}

fn warp_transpose_raw(flow: &VectorField, upstream: &[&[f64]], out: &mut [&mut [f64]]) {
    let dims = flow.dims;
    for (i, (d, h, w)) in dims.iter().enumerate() {
        let s = stencils(dims, sample_position(flow, i, d, h, w));
        let idx = corner_indices(dims, &s);
        let weights = corner_weights(&s);
        for (up, dst) in upstream.iter().zip(out.iter_mut()) {
            let u = up[i];
            if u == 0.0 {
                continue;
            }
            for bit in 0..8 {
                dst[idx[bit]] += weights[bit] * u;
            }
        }
    }
}

/// Adjoint of `m -> warp(m, flow)`: splats `upstream` back onto the moving grid.
pub fn warp_transpose(flow: &VectorField, upstream: &ScalarVolume) -> Result<ScalarVolume> {
    check_same_dims(upstream.dims, flow.dims, "warp_transpose")?;
    let mut data = vec![0.0; flow.dims.len()];
    warp_transpose_raw(flow, &[&upstream.data], &mut [&mut data]);
    Ok(ScalarVolume { dims: flow.dims, spacing: upstream.spacing, data })
}

pub(crate) fn warp_field_transpose(flow: &VectorField, upstream: &VectorField) -> VectorField {
    let mut out = VectorField::zeros(flow.dims).with_spacing(flow.spacing);
    let [a, b, c] = &mut out.channels;
    let up = [&upstream.channels[0][..], &upstream.channels[1][..], &upstream.channels[2][..]];
    warp_transpose_raw(flow, &up, &mut [a, b, c]);
    out
}

/// Forward differences of every channel along every axis.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldGradient {
    pub dims: Dims,
    /// `parts[channel][axis]`, axis in coordinate order (0 = W, 1 = H, 2 = D).
    pub parts: [[Vec<f64>; 3]; 3],
}

fn require_min_extent(dims: Dims, min: usize, what: &str) -> Result<()> {
    if dims.min_extent() < min {
        return shape_err(format!("{what} needs every dim >= {min}, got {dims}"));
    }
    Ok(())
}

fn forward_diff(u: &[f64], dims: Dims, axis: usize) -> Vec<f64> {
    let (outer, n, stride) = dims.axis_layout(axis);
    let mut out = vec![0.0; u.len()];
    for o in 0..outer {
        for j in 0..n.saturating_sub(1) {
            let row = (o * n + j) * stride;
            for i in row..row + stride {
                out[i] = u[i + stride] - u[i];
            }
        }
    }
    out
}

pub fn spatial_gradient(field: &VectorField) -> Result<FieldGradient> {
    require_min_extent(field.dims, 2, "spatial_gradient")?;
    let dims = field.dims;
    let parts = std::array::from_fn(|c| std::array::from_fn(|k| forward_diff(&field.channels[c], dims, k)));
    Ok(FieldGradient { dims, parts })
}

fn det3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Determinant of `I + du/dx` per voxel; central differences in the interior,
/// one-sided on the faces.
pub fn jacobian_determinant(flow: &VectorField) -> Result<ScalarVolume> {
    require_min_extent(flow.dims, 3, "jacobian_determinant")?;
    let dims = flow.dims;
    let data = dims
        .iter()
        .enumerate()
        .map(|(i, (d, h, w))| {
            let pos = [w, h, d];
            let mut m = [[0.0; 3]; 3];
            for k in 0..3 {
                let stride = dims.stride(k);
                let n = dims.extent(k);
                for (c, row) in m.iter_mut().enumerate() {
                    let u = &flow.channels[c];
                    let du = if pos[k] == 0 {
                        u[i + stride] - u[i]
                    } else if pos[k] == n - 1 {
                        u[i] - u[i - stride]
                    } else {
                        0.5 * (u[i + stride] - u[i - stride])
                    };
                    row[k] = du + if c == k { 1.0 } else { 0.0 };
                }
            }
            det3(m)
        })
        .collect();
    Ok(ScalarVolume { dims, spacing: flow.spacing, data })
}

/// True when a voxel is at least one step away from every face.
pub(crate) fn is_interior(dims: Dims, d: usize, h: usize, w: usize) -> bool {
    d > 0 && h > 0 && w > 0 && d + 1 < dims.d && h + 1 < dims.h && w + 1 < dims.w
}

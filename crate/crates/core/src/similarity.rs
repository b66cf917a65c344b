//! Image similarity and smoothness terms with analytic gradients, plus the
//! composed registration objective.

use std::fmt;
use std::str::FromStr;

use crate::diffeo::{exp_backward, scaling_and_squaring};
use crate::error::{Error, Result};
use crate::volume::{
    check_same_dims, warp, warp_backward, Dims, ScalarVolume, VectorField,
};

/// Variance-product guard in the local correlation coefficient.
pub const NCC_EPS: f64 = 1e-5;
pub const DEFAULT_NCC_WINDOW: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SimilarityKind {
    Ncc,
    Mse,
}

impl SimilarityKind {
    /// Regularisation weight used when none is given.
    pub fn default_lambda(self) -> f64 {
        match self {
            SimilarityKind::Ncc => 2.0,
            SimilarityKind::Mse => 0.01,
        }
    }
}

impl fmt::Display for SimilarityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimilarityKind::Ncc => "ncc",
            SimilarityKind::Mse => "mse",
        })
    }
}

impl FromStr for SimilarityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ncc" => Ok(SimilarityKind::Ncc),
            "mse" => Ok(SimilarityKind::Mse),
            other => Err(Error::Config(format!("unknown loss {other:?} (expected ncc or mse)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub kind: SimilarityKind,
    pub lambda: f64,
    pub ncc_window: usize,
}

impl LossConfig {
    pub fn new(kind: SimilarityKind) -> Self {
        Self { kind, lambda: kind.default_lambda(), ncc_window: DEFAULT_NCC_WINDOW }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_window(mut self, window: usize) -> Self {
        self.ncc_window = window;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::Config(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        check_window(self.ncc_window)
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        Self::new(SimilarityKind::Ncc)
    }
}

fn check_window(window: usize) -> Result<()> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::Config(format!("NCC window must be odd and >= 3, got {window}")));
    }
    Ok(())
}

/// Mean squared error and its gradient with respect to `warped`.
pub fn mse(warped: &ScalarVolume, fixed: &ScalarVolume) -> Result<(f64, ScalarVolume)> {
    check_same_dims(warped.dims(), fixed.dims(), "mse")?;
    let n = warped.dims().len() as f64;
    let mut grad = ScalarVolume::zeros(warped.dims()).with_spacing(warped.spacing());
    let mut sum = 0.0;
    for ((g, a), b) in grad.data_mut().iter_mut().zip(warped.data()).zip(fixed.data()) {
        let r = a - b;
        sum += r * r;
        *g = 2.0 * r / n;
    }
    Ok((sum / n, grad))
}

/// Zero-padded sliding sum over a `(2r+1)`-long window along `axis`.
fn box_sum_axis(x: &[f64], dims: Dims, axis: usize, r: usize) -> Vec<f64> {
    let (outer, n, stride) = dims.axis_layout(axis);
    let mut out = vec![0.0; x.len()];
    if stride == 1 {
        let mut prefix = vec![0.0; n + 1];
        for (src, dst) in x.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
            for j in 0..n {
                prefix[j + 1] = prefix[j] + src[j];
            }
            for (j, v) in dst.iter_mut().enumerate() {
                *v = prefix[(j + r + 1).min(n)] - prefix[j.saturating_sub(r)];
            }
        }
        return out;
    }
    // running prefix sums, one row of `stride` values per position
    let mut prefix = vec![0.0; (n + 1) * stride];
    for o in 0..outer {
        let block = o * n * stride;
        for j in 0..n {
            let (done, rest) = prefix.split_at_mut((j + 1) * stride);
            let prev = &done[j * stride..];
            let src = &x[block + j * stride..block + (j + 1) * stride];
            for ((p, q), v) in rest[..stride].iter_mut().zip(prev).zip(src) {
                *p = q + v;
            }
        }
        for j in 0..n {
            let lo = j.saturating_sub(r) * stride;
            let hi = (j + r + 1).min(n) * stride;
            let dst = &mut out[block + j * stride..block + (j + 1) * stride];
            for (s, v) in dst.iter_mut().enumerate() {
                *v = prefix[hi + s] - prefix[lo + s];
            }
        }
    }
    out
}

/// Zero-padded cubic window sum; self-adjoint.
fn box_sum(x: &[f64], dims: Dims, r: usize) -> Vec<f64> {
    let a = box_sum_axis(x, dims, 0, r);
    let b = box_sum_axis(&a, dims, 1, r);
    box_sum_axis(&b, dims, 2, r)
}

/// Mean squared local correlation coefficient over `window³` neighbourhoods,
/// and its gradient with respect to `warped`. Higher is more similar.
pub fn local_ncc(warped: &ScalarVolume, fixed: &ScalarVolume, window: usize) -> Result<(f64, ScalarVolume)> {
    check_same_dims(warped.dims(), fixed.dims(), "local_ncc")?;
    check_window(window)?;
    let dims = warped.dims();
    if window > dims.min_extent() {
        return Err(Error::Config(format!("NCC window {window} exceeds grid {dims}")));
    }
    let r = window / 2;
    // in-bounds voxels per window, so the padding never enters the means
    let count = box_sum(&vec![1.0; dims.len()], dims, r);
    let (i_img, j_img) = (warped.data(), fixed.data());
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> { i_img.iter().zip(j_img).map(|(&a, &b)| f(a, b)).collect() };
    let s_i = box_sum(i_img, dims, r);
    let s_j = box_sum(j_img, dims, r);
    let s_ii = box_sum(&prod(&|a, _| a * a), dims, r);
    let s_jj = box_sum(&prod(&|_, b| b * b), dims, r);
    let s_ij = box_sum(&prod(&|a, b| a * b), dims, r);

    let len = dims.len();
    let mut total = 0.0;
    let mut alpha = vec![0.0; len];
    let mut alpha_mj = vec![0.0; len];
    let mut beta = vec![0.0; len];
    let mut beta_mi = vec![0.0; len];
    for p in 0..len {
        let (mi, mj) = (s_i[p] / count[p], s_j[p] / count[p]);
        let cross = s_ij[p] - s_i[p] * mj;
        let var_i = s_ii[p] - s_i[p] * mi;
        let var_j = s_jj[p] - s_j[p] * mj;
        let denom = var_i * var_j + NCC_EPS;
        total += cross * cross / denom;
        // d cc / d cross and d cc / d var_i
        let a = 2.0 * cross / denom;
        let b = -cross * cross * var_j / (denom * denom);
        alpha[p] = a;
        alpha_mj[p] = a * mj;
        beta[p] = b;
        beta_mi[p] = b * mi;
    }
    let n = len as f64;
    let (box_a, box_amj, box_b, box_bmi) =
        (box_sum(&alpha, dims, r), box_sum(&alpha_mj, dims, r), box_sum(&beta, dims, r), box_sum(&beta_mi, dims, r));
    let mut grad = ScalarVolume::zeros(dims).with_spacing(warped.spacing());
    for (q, g) in grad.data_mut().iter_mut().enumerate() {
        *g = (j_img[q] * box_a[q] - box_amj[q] + 2.0 * i_img[q] * box_b[q] - 2.0 * box_bmi[q]) / n;
    }
    Ok((total / n, grad))
}

/// Mean of squared forward differences over voxels, channels and axes.
pub fn smoothness(field: &VectorField) -> Result<(f64, VectorField)> {
    let dims = field.dims();
    if dims.min_extent() < 2 {
        return Err(Error::Shape(format!("smoothness needs every dim >= 2, got {dims}")));
    }
    let denom = 9.0 * dims.len() as f64;
    let mut grad = VectorField::zeros(dims).with_spacing(field.spacing());
    let mut sum = 0.0;
    let scale = 2.0 / denom;
    for c in 0..3 {
        let u = field.channel(c);
        let g = grad.channel_mut(c);
        for k in 0..3 {
            let (outer, n, stride) = dims.axis_layout(k);
            let mut part = 0.0;
            for o in 0..outer {
                for j in 0..n - 1 {
                    let row = (o * n + j) * stride;
                    for i in row..row + stride {
                        let diff = u[i + stride] - u[i];
                        part += diff * diff;
                        g[i + stride] += scale * diff;
                        g[i] -= scale * diff;
                    }
                }
            }
            sum += part;
        }
    }
    Ok((sum / denom, grad))
}

/// How the optimised field maps to the deformation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldMode {
    /// The field is the displacement itself.
    Displacement,
    /// The field is a stationary velocity, exponentiated with this many
    /// squaring steps; the regulariser acts on the velocity.
    Velocity { steps: usize },
}

/// Objective value, its parts, and the gradient with respect to the
/// optimised field.
#[derive(Clone, Debug)]
pub struct LossEval {
    pub value: f64,
    /// Similarity loss term (MSE, or negative mean CC² for NCC).
    pub similarity: f64,
    /// Unweighted smoothness of the regularised field (zero when lambda = 0).
    pub smoothness: f64,
    pub grad: VectorField,
    /// Deformation used to warp the moving image.
    pub flow: VectorField,
}

/// Similarity loss and its gradient with respect to the warped image.
pub fn similarity_loss(warped: &ScalarVolume, fixed: &ScalarVolume, config: &LossConfig) -> Result<(f64, ScalarVolume)> {
    match config.kind {
        SimilarityKind::Mse => mse(warped, fixed),
        SimilarityKind::Ncc => {
            let (value, mut grad) = local_ncc(warped, fixed, config.ncc_window)?;
            grad.data_mut().iter_mut().for_each(|g| *g = -*g);
            Ok((-value, grad))
        }
    }
}

pub fn total_loss(
    moving: &ScalarVolume,
    fixed: &ScalarVolume,
    field: &VectorField,
    config: &LossConfig,
    mode: FieldMode,
) -> Result<LossEval> {
    config.validate()?;
    check_same_dims(moving.dims(), fixed.dims(), "total_loss")?;
    check_same_dims(moving.dims(), field.dims(), "total_loss")?;
    let (flow, trace) = match mode {
        FieldMode::Displacement => (field.clone(), None),
        FieldMode::Velocity { steps } => {
            let (flow, trace) = scaling_and_squaring(field, steps)?;
            (flow, Some(trace))
        }
    };
    let warped = warp(moving, &flow)?;
    let (similarity, sim_grad) = similarity_loss(&warped, fixed, config)?;
    let flow_grad = warp_backward(moving, &flow, &sim_grad)?;
    let mut grad = match &trace {
        None => flow_grad,
        Some(trace) => exp_backward(&flow_grad, trace, field)?,
    };
    let mut value = similarity;
    let mut smooth = 0.0;
    if config.lambda != 0.0 {
        let (s, s_grad) = smoothness(field)?;
        smooth = s;
        value += config.lambda * s;
        grad.add_scaled(config.lambda, &s_grad);
    }
    Ok(LossEval { value, similarity, smoothness: smooth, grad, flow })
}

//! Overlap, surface distance and folding metrics.

use crate::error::{shape_err, Error, Result};
use crate::volume::{is_interior, jacobian_determinant, Dims, ScalarVolume, Spacing, VectorField};

/// Integer label map; 0 is background.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelVolume {
    dims: Dims,
    spacing: Spacing,
    labels: Vec<u32>,
}

impl LabelVolume {
    pub fn new(dims: Dims, spacing: Spacing, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != dims.len() {
            return shape_err(format!("label map {dims} needs {} values, got {}", dims.len(), labels.len()));
        }
        Ok(Self { dims, spacing, labels })
    }

    /// Rounds a scalar volume holding integer codes. Negative or non-integral
    /// values are rejected.
    pub fn from_volume(vol: &ScalarVolume) -> Result<Self> {
        let labels = vol
            .data()
            .iter()
            .map(|&v| {
                if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                    Err(Error::Format(format!("label value {v} is not a non-negative integer")))
                } else {
                    Ok(v as u32)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(vol.dims(), vol.spacing(), labels)
    }

    pub fn to_volume(&self) -> ScalarVolume {
        ScalarVolume::new(self.dims, self.spacing(), self.labels.iter().map(|&l| l as f64).collect())
            .expect("labels are finite")
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Sorted distinct non-zero labels.
    pub fn present_labels(&self) -> Vec<u32> {
        let mut out: Vec<u32> = self.labels.iter().copied().filter(|&l| l != 0).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn count(&self, label: u32) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

/// Per-label Dice overlap; `None` when the label is absent from both maps.
pub fn dice(a: &LabelVolume, b: &LabelVolume, labels: &[u32]) -> Result<Vec<(u32, Option<f64>)>> {
    if a.dims != b.dims {
        return shape_err(format!("dice: dims {} and {} differ", a.dims, b.dims));
    }
    Ok(labels
        .iter()
        .map(|&l| {
            let inter = a.labels.iter().zip(&b.labels).filter(|(&x, &y)| x == l && y == l).count();
            let total = a.count(l) + b.count(l);
            (l, (total > 0).then(|| 2.0 * inter as f64 / total as f64))
        })
        .collect())
}

/// Mean over the labels for which Dice is defined.
pub fn mean_dice(scores: &[(u32, Option<f64>)]) -> Option<f64> {
    let defined: Vec<f64> = scores.iter().filter_map(|(_, s)| *s).collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

fn coords(dims: Dims, i: usize) -> [usize; 3] {
    let w = i % dims.w;
    let h = (i / dims.w) % dims.h;
    [i / (dims.w * dims.h), h, w]
}

/// Voxels of `label` with at least one 6-neighbour outside the label (grid
/// faces count as outside).
fn boundary_voxels(v: &LabelVolume, label: u32) -> Vec<[usize; 3]> {
    let dims = v.dims;
    let inside = |d: usize, h: usize, w: usize| v.labels[dims.index(d, h, w)] == label;
    (0..dims.len())
        .filter(|&i| v.labels[i] == label)
        .map(|i| coords(dims, i))
        .filter(|&[d, h, w]| {
            !is_interior(dims, d, h, w)
                || !inside(d - 1, h, w)
                || !inside(d + 1, h, w)
                || !inside(d, h - 1, w)
                || !inside(d, h + 1, w)
                || !inside(d, h, w - 1)
                || !inside(d, h, w + 1)
        })
        .collect()
}

fn dist_sq(a: [usize; 3], b: [usize; 3], s: Spacing) -> f64 {
    (0..3).map(|k| ((a[k] as f64 - b[k] as f64) * s[k]).powi(2)).sum()
}

/// `max_{x in from} min_{y in to} |x - y|`. Points of `from` that lie in
/// `to` contribute zero, and the nearest point of `to` for any outside
/// point is always a boundary voxel, so only those are scanned.
fn directed_hausdorff(from: &LabelVolume, to: &LabelVolume, label: u32, s: Spacing) -> f64 {
    let targets = boundary_voxels(to, label);
    let mut worst = 0.0f64;
    for i in 0..from.labels.len() {
        if from.labels[i] != label || to.labels[i] == label {
            continue;
        }
        let p = coords(from.dims, i);
        let mut best = f64::INFINITY;
        for &q in &targets {
            let d = dist_sq(p, q, s);
            if d < best {
                best = d;
                if best <= worst {
                    // cannot raise the running maximum
                    break;
                }
            }
        }
        worst = worst.max(best);
    }
    worst.sqrt()
}

/// Symmetric Hausdorff distance in millimetres between the voxel centres of
/// `label` in the two maps, using the spacing of `a`.
pub fn hausdorff(a: &LabelVolume, b: &LabelVolume, label: u32) -> Result<f64> {
    if a.dims != b.dims {
        return shape_err(format!("hausdorff: dims {} and {} differ", a.dims, b.dims));
    }
    if a.count(label) == 0 || b.count(label) == 0 {
        return Err(Error::UndefinedMetric(format!("label {label} is missing from one of the volumes")));
    }
    let s = a.spacing();
    Ok(directed_hausdorff(a, b, label, s).max(directed_hausdorff(b, a, label, s)))
}

/// Percentage of interior voxels whose Jacobian determinant is negative.
pub fn neg_jac_fraction(flow: &VectorField) -> Result<f64> {
    let det = jacobian_determinant(flow)?;
    let dims = flow.dims();
    let (mut neg, mut total) = (0usize, 0usize);
    for (i, (d, h, w)) in dims.iter().enumerate() {
        if is_interior(dims, d, h, w) {
            total += 1;
            neg += (det.data()[i] < 0.0) as usize;
        }
    }
    Ok(100.0 * neg as f64 / total as f64)
}

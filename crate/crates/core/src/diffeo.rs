//! Stationary-velocity exponentiation by scaling and squaring, with an exact
//! reverse pass.

use crate::error::{Error, Result};
use crate::volume::{warp_field, warp_field_backward_flow, warp_field_transpose, VectorField};

pub const DEFAULT_STEPS: usize = 7;

/// Forward-pass record: the field entering each squaring step.
#[derive(Clone, Debug)]
pub struct ExpTrace {
    steps: usize,
    intermediates: Vec<VectorField>,
}

impl ExpTrace {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn intermediates(&self) -> &[VectorField] {
        &self.intermediates
    }
}

/// Validates a step count coming from an untyped source (CLI, bindings).
pub fn checked_steps(steps: i64) -> Result<usize> {
    usize::try_from(steps).map_err(|_| Error::Config(format!("squaring steps must be >= 0, got {steps}")))
}

/// `exp(v)`: halve `steps` times, then compose the small flow with itself
/// `steps` times via `u <- u + u∘(x + u)`.
pub fn scaling_and_squaring(v: &VectorField, steps: usize) -> Result<(VectorField, ExpTrace)> {
    let scale = 0.5f64.powi(steps as i32);
    let mut phi = if steps == 0 { v.clone() } else { v.scaled(scale) };
    let mut intermediates = Vec::with_capacity(steps);
    for _ in 0..steps {
        let composed = warp_field(&phi, &phi)?;
        intermediates.push(phi.clone());
        phi.add_assign(&composed);
    }
    Ok((phi, ExpTrace { steps, intermediates }))
}

/// Gradient of `<g, scaling_and_squaring(v).0>` with respect to `v`.
pub fn exp_backward(g: &VectorField, trace: &ExpTrace, v: &VectorField) -> Result<VectorField> {
    if trace.intermediates.len() != trace.steps {
        return Err(Error::State(format!(
            "trace holds {} intermediates for {} steps",
            trace.intermediates.len(),
            trace.steps
        )));
    }
    if g.dims() != v.dims() || trace.intermediates.iter().any(|f| f.dims() != v.dims()) {
        return Err(Error::State("trace, velocity and upstream gradient disagree on dims".into()));
    }
    let scale = 0.5f64.powi(trace.steps as i32);
    if let Some(first) = trace.intermediates.first() {
        if *first != v.scaled(scale) {
            return Err(Error::State("trace was not produced from this velocity".into()));
        }
    }
    let mut grad = g.clone();
    for phi in trace.intermediates.iter().rev() {
        // phi' = phi + phi∘(x + phi): identity path, sampled-values path, sample-position path
        let through_values = warp_field_transpose(phi, &grad);
        let through_positions = warp_field_backward_flow(phi, phi, &grad);
        grad.add_assign(&through_values);
        grad.add_assign(&through_positions);
    }
    Ok(if trace.steps == 0 { grad } else { grad.scaled(scale) })
}

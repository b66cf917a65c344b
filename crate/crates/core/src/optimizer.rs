//! Adam over pyramid parameter groups and the coarse-to-fine registration
//! driver.
//!
//! Registration runs in three stages. Stage 1 fits only the coarse sub-bands;
//! stage 2 additionally unfreezes the level-2 residuals and gates; stage 3
//! the level-3 ones. Newly unfrozen parameters start at zero (gates at
//! identity), so each stage begins exactly where the previous one ended. At
//! the end of a stage the best iterate seen in that stage is restored.

use crate::diffeo::DEFAULT_STEPS;
use crate::error::{shape_err, Error, Result};
use crate::metrics::neg_jac_fraction;
use crate::pyramid::{flow_gradient_to_coeffs, init_pyramid, reconstruct_flow, CoefficientPyramid, ParamGroup};
use crate::similarity::{total_loss, FieldMode, LossConfig, LossEval};
use crate::volume::{check_same_dims, ScalarVolume, VectorField};
use crate::wavelet::{FilterBank, WaveletKind};

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.len() {
        return shape_err(format!(
            "adam: {} params, {} grads, state for {}",
            params.len(),
            grads.len(),
            state.len()
        ));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegistrationConfig {
    pub loss: LossConfig,
    pub diffeomorphic: bool,
    pub wavelet: WaveletKind,
    /// Iterations of the 1/8, +1/4 and +1/2 stages.
    pub stage_iterations: [usize; 3],
    /// Step size in voxels of displacement per iteration; see [`group_lr`].
    pub lr: f64,
    pub sq_steps: usize,
}

pub const DEFAULT_LR: f64 = 0.1;
pub const DEFAULT_STAGES: [usize; 3] = [100, 100, 100];

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            diffeomorphic: false,
            wavelet: WaveletKind::Haar,
            stage_iterations: DEFAULT_STAGES,
            lr: DEFAULT_LR,
            sq_steps: DEFAULT_STEPS,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", self.lr)));
        }
        Ok(())
    }

    pub fn field_mode(&self) -> FieldMode {
        if self.diffeomorphic {
            FieldMode::Velocity { steps: self.sq_steps }
        } else {
            FieldMode::Displacement
        }
    }

    pub fn total_iterations(&self) -> usize {
        self.stage_iterations.iter().sum()
    }
}

/// Adam step size for a parameter group.
///
/// A unit change of a coefficient at level `l` moves the reconstructed field
/// by `(2√2)^-(4-l)` voxels, so coefficient groups are scaled by the inverse
/// gain to make `lr` a displacement step. Gates are dimensionless and use a
/// tenth of `lr`.
pub fn group_lr(lr: f64, group: ParamGroup) -> (f64, f64) {
    let gain = 2.0 * std::f64::consts::SQRT_2;
    match group {
        ParamGroup::Coarse => (lr * gain.powi(3), 0.0),
        ParamGroup::Level2 => (lr * gain.powi(2), 0.1 * lr),
        ParamGroup::Level3 => (lr * gain, 0.1 * lr),
    }
}

/// Per-group optimizer: separate Adam states for coefficients and gates.
struct GroupOptimizer {
    group: ParamGroup,
    coeffs: AdamState,
    gates: AdamState,
}

impl GroupOptimizer {
    fn new(group: ParamGroup, p: &CoefficientPyramid, lr: f64) -> Self {
        let len = p.group_len(group);
        let n_gates = if group == ParamGroup::Coarse { 0 } else { 14 };
        let (coeff_lr, gate_lr) = group_lr(lr, group);
        Self { group, coeffs: AdamState::new(len - n_gates, coeff_lr), gates: AdamState::new(n_gates, gate_lr) }
    }

    fn step(&mut self, p: &mut CoefficientPyramid, grad: &CoefficientPyramid) -> Result<()> {
        let mut values = p.group_values(self.group);
        let grads = grad.group_values(self.group);
        let split = self.coeffs.len();
        adam_step(&mut values[..split], &grads[..split], &mut self.coeffs)?;
        adam_step(&mut values[split..], &grads[split..], &mut self.gates)?;
        p.set_group_values(self.group, &values)
    }
}

/// Final-state summary of a registration.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics {
    pub loss: f64,
    pub similarity: f64,
    pub smoothness: f64,
    /// Percentage of interior voxels with negative Jacobian determinant.
    pub neg_jac_percent: f64,
}

#[derive(Clone, Debug)]
pub struct RegistrationResult {
    pub pyramid: CoefficientPyramid,
    /// Deformation (after exponentiation in diffeomorphic mode).
    pub flow: VectorField,
    /// Objective value at every iteration, before that iteration's update.
    pub loss_history: Vec<f64>,
    /// Index into `loss_history` where each stage starts.
    pub stage_starts: [usize; 3],
    /// Best objective value of each stage (the value restored at its end).
    pub stage_best: [Option<f64>; 3],
    pub diagnostics: Diagnostics,
}

/// Observer view of one iteration, before the update is applied.
pub struct IterationRecord<'a> {
    pub iteration: usize,
    pub stage: usize,
    pub pyramid: &'a CoefficientPyramid,
    /// Field reconstructed from the pyramid (the velocity in diffeomorphic mode).
    pub field: &'a VectorField,
    pub eval: &'a LossEval,
}

pub fn register(moving: &ScalarVolume, fixed: &ScalarVolume, config: &RegistrationConfig) -> Result<RegistrationResult> {
    register_with_observer(moving, fixed, config, |_| {})
}

pub fn register_with_observer(
    moving: &ScalarVolume,
    fixed: &ScalarVolume,
    config: &RegistrationConfig,
    mut observer: impl FnMut(&IterationRecord<'_>),
) -> Result<RegistrationResult> {
    config.validate()?;
    check_same_dims(moving.dims(), fixed.dims(), "register")?;
    let fb = FilterBank::new(config.wavelet);
    let mode = config.field_mode();
    let mut pyramid = init_pyramid(fixed.dims())?;

    let evaluate = |p: &CoefficientPyramid| -> Result<(VectorField, LossEval)> {
        let field = reconstruct_flow(p, &fb)?;
        let eval = total_loss(moving, fixed, &field, &config.loss, mode)?;
        Ok((field, eval))
    };

    let mut history = Vec::with_capacity(config.total_iterations());
    let mut stage_starts = [0; 3];
    let mut stage_best = [None; 3];
    let mut optimizers: Vec<GroupOptimizer> = Vec::with_capacity(3);
    for (stage, &iterations) in config.stage_iterations.iter().enumerate() {
        stage_starts[stage] = history.len();
        optimizers.push(GroupOptimizer::new(ParamGroup::ALL[stage], &pyramid, config.lr));
        let mut best: Option<(f64, CoefficientPyramid)> = None;
        for _ in 0..iterations {
            let iteration = history.len();
            let (field, eval) = evaluate(&pyramid)?;
            if !eval.value.is_finite() {
                return Err(Error::Divergence { iteration, value: eval.value });
            }
            observer(&IterationRecord { iteration, stage, pyramid: &pyramid, field: &field, eval: &eval });
            history.push(eval.value);
            if best.as_ref().is_none_or(|(b, _)| eval.value < *b) {
                best = Some((eval.value, pyramid.clone()));
            }
            let grad = flow_gradient_to_coeffs(&eval.grad, &pyramid, &fb)?;
            for opt in optimizers.iter_mut() {
                opt.step(&mut pyramid, &grad)?;
            }
        }
        if iterations > 0 {
            // the iterate after the last update has not been scored yet
            let (_, eval) = evaluate(&pyramid)?;
            if eval.value.is_finite() && best.as_ref().is_none_or(|(b, _)| eval.value < *b) {
                best = Some((eval.value, pyramid.clone()));
            }
        }
        if let Some((value, p)) = best {
            stage_best[stage] = Some(value);
            pyramid = p;
        }
    }

    let (_, eval) = evaluate(&pyramid)?;
    if !eval.value.is_finite() {
        return Err(Error::Divergence { iteration: history.len(), value: eval.value });
    }
    let diagnostics = Diagnostics {
        loss: eval.value,
        similarity: eval.similarity,
        smoothness: eval.smoothness,
        neg_jac_percent: neg_jac_fraction(&eval.flow)?,
    };
    Ok(RegistrationResult { pyramid, flow: eval.flow, loss_history: history, stage_starts, stage_best, diagnostics })
}

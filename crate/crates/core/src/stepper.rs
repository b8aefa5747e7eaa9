//! Discrete foot-placement control on the step-to-step map.
//!
//! With error `eₖ = xₖ − x*ₖ` and command `uₖ = u*ₖ + K eₖ + φ`, the error obeys
//! `eₖ₊₁ = (A + BK) eₖ + ξ`. The gain is chosen so that `A + BK` is nilpotent, which
//! removes any initial error in two steps when the model is exact.

use nalgebra::{Matrix2, RowVector2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::template::{LipParams, LipState, StepMatrices, TargetStep};

/// Default kinematic reach for a commanded placement (m).
pub const DEFAULT_PLACEMENT_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error("step-to-step system is not controllable (nilpotency conditions are singular, det = {det:e})")]
    Uncontrollable { det: f64 },
}

/// Row gain `K` that makes `A + BK` nilpotent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadbeatGain {
    pub k: RowVector2<f64>,
}

impl DeadbeatGain {
    /// Solves `trace(A + BK) = 0` and `det(A + BK) = 0` for `K`.
    ///
    /// Both conditions are affine in `K` for a rank-one update:
    /// `trace(A + BK) = trace(A) + K·B` and, by the matrix determinant lemma,
    /// `det(A + BK) = det(A) + K·adj(A)·B`.
    pub fn synthesize(sm: &StepMatrices) -> Result<Self, SynthesisError> {
        let a = sm.a;
        let b = sm.b;
        let adj = Matrix2::new(a[(1, 1)], -a[(0, 1)], -a[(1, 0)], a[(0, 0)]);
        let adj_b = adj * b;
        let lhs = Matrix2::new(b[0], b[1], adj_b[0], adj_b[1]);
        let rhs = Vector2::new(-a.trace(), -a.determinant());
        let det = lhs.determinant();
        let scale = b.norm() * adj_b.norm();
        if !(det.abs() > 1e-12 * scale.max(f64::MIN_POSITIVE)) {
            return Err(SynthesisError::Uncontrollable { det });
        }
        let k = lhs.lu().solve(&rhs).ok_or(SynthesisError::Uncontrollable { det })?;
        Ok(Self {
            k: RowVector2::new(k[0], k[1]),
        })
    }

    pub fn closed_loop(&self, sm: &StepMatrices) -> Matrix2<f64> {
        sm.a + sm.b * self.k
    }

    pub fn feedback(&self, error: LipState) -> f64 {
        self.k[0] * error.p + self.k[1] * error.v
    }
}

/// Pre-impact prediction, flagged when the elapsed time had to be clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub state: LipState,
    pub clamped: bool,
}

/// Flows the current state to the end of the step.
pub fn predict_preimpact(params: &LipParams, x_now: LipState, t_elapsed: f64) -> Prediction {
    let t = params.step_duration();
    let clamped = !(0.0..=t).contains(&t_elapsed);
    let elapsed = t_elapsed.clamp(0.0, t);
    Prediction {
        state: params.flow(x_now, t - elapsed),
        clamped,
    }
}

/// Commanded placement split into its nominal, feedback and adaptive parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepCommand {
    pub u: f64,
    pub u_star: f64,
    pub feedback: f64,
    pub adaptive: f64,
}

impl StepCommand {
    /// Placement limited to `[-limit, limit]`; the flag is set when clamping occurred.
    pub fn saturated(&self, limit: f64) -> (f64, bool) {
        let applied = self.u.clamp(-limit, limit);
        (applied, applied != self.u)
    }
}

/// `u = u* + K (x_pred − x*) + φ`.
pub fn foot_placement(x_pred: LipState, target: &TargetStep, gain: &DeadbeatGain, phi: f64) -> StepCommand {
    let feedback = gain.feedback(x_pred - target.x_star);
    StepCommand {
        u: target.u_star + feedback + phi,
        u_star: target.u_star,
        feedback,
        adaptive: phi,
    }
}

/// Fixed point of `e ← (A + BK) e + ξ`. Because `(A + BK)² = 0` this is `(A + BK + I) ξ`.
pub fn predict_steady_error(sm: &StepMatrices, gain: &DeadbeatGain, xi: &Vector2<f64>) -> Vector2<f64> {
    (gain.closed_loop(sm) + Matrix2::identity()) * xi
}

/// Placement controller shared by both planes of motion.
#[derive(Debug, Clone, Copy)]
pub struct StepController {
    params: LipParams,
    matrices: StepMatrices,
    gain: DeadbeatGain,
    placement_limit: f64,
}

impl StepController {
    pub fn new(params: LipParams, placement_limit: f64) -> Result<Self, SynthesisError> {
        let matrices = params.step_matrices();
        let gain = DeadbeatGain::synthesize(&matrices)?;
        Ok(Self {
            params,
            matrices,
            gain,
            placement_limit,
        })
    }

    pub fn params(&self) -> &LipParams {
        &self.params
    }

    pub fn matrices(&self) -> &StepMatrices {
        &self.matrices
    }

    pub fn gain(&self) -> &DeadbeatGain {
        &self.gain
    }

    pub fn placement_limit(&self) -> f64 {
        self.placement_limit
    }

    pub fn command(&self, x_pred: LipState, target: &TargetStep, phi: f64) -> StepCommand {
        foot_placement(x_pred, target, &self.gain, phi)
    }
}

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::template::{LipParams, LipState, StepMatrices};

/// Discrepancy between the template step-to-step map and the simulated plant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum MismatchModel {
    #[default]
    None,
    /// Adds `xi` (m, m/s) to every pre-impact state.
    Constant { xi: [f64; 2] },
    /// Adds `gain · x_k + offset`.
    StateAffine { gain: [[f64; 2]; 2], offset: [f64; 2] },
    /// Scales the post-impact velocity by `1 − kappa`.
    ImpactLoss { kappa: f64 },
    /// Flows the plant with CoM height `z0 + delta_z` while the controller keeps `z0`.
    HeightOffset { delta_z: f64 },
}

impl MismatchModel {
    pub fn validate(&self, params: &LipParams) -> Result<(), String> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match *self {
            MismatchModel::None => Ok(()),
            MismatchModel::Constant { xi } if finite(&xi) => Ok(()),
            MismatchModel::StateAffine { gain, offset } if finite(&gain[0]) && finite(&gain[1]) && finite(&offset) => {
                Ok(())
            }
            MismatchModel::ImpactLoss { kappa } if kappa.is_finite() && (0.0..=1.0).contains(&kappa) => Ok(()),
            MismatchModel::ImpactLoss { kappa } => Err(format!("kappa must lie in [0, 1], got {kappa}")),
            MismatchModel::HeightOffset { delta_z } if delta_z.is_finite() && params.z0() + delta_z > 0.0 => Ok(()),
            MismatchModel::HeightOffset { delta_z } => {
                Err(format!("z0 + delta_z must be positive, got {}", params.z0() + delta_z))
            }
            _ => Err("mismatch parameters must be finite".into()),
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, MismatchModel::None)
    }
}

/// One step of the perturbed plant: `x_{k+1} = A x_k + B u_k` plus the active mismatch.
pub fn s2s_step(params: &LipParams, sm: &StepMatrices, mismatch: &MismatchModel, x_k: LipState, u_k: f64) -> LipState {
    let x = x_k.to_vector();
    let nominal = sm.a * x + sm.b * u_k;
    let next = match *mismatch {
        MismatchModel::None => nominal,
        MismatchModel::Constant { xi } => nominal + Vector2::from(xi),
        MismatchModel::StateAffine { gain, offset } => {
            let g = Matrix2::new(gain[0][0], gain[0][1], gain[1][0], gain[1][1]);
            nominal + g * x + Vector2::from(offset)
        }
        MismatchModel::ImpactLoss { kappa } => {
            let post = sm.reset * x + sm.reset_input * u_k;
            sm.flow * Vector2::new(post[0], post[1] * (1.0 - kappa))
        }
        MismatchModel::HeightOffset { delta_z } => {
            let plant = params
                .with_height(params.z0() + delta_z)
                .expect("height offset validated before use");
            let post = sm.reset * x + sm.reset_input * u_k;
            plant.flow_matrix(params.step_duration()) * post
        }
    };
    LipState::from_vector(&next)
}

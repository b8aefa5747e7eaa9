//! Experiment plants and episode runners.
//!
//! Two plants are provided: a step-to-step LIP map with an injectable model
//! mismatch ([`run_s2s_episode`]), and a kinematic walking loop on a floating-base
//! model where joints track the IK reference exactly ([`run_kinematic_walk`]).

mod log;
mod mismatch;
mod s2s;
mod walk;

pub use log::{
    write_events_csv, write_steps_csv, write_ticks_csv, EpisodeLog, Event, EventKind, PlaneRecord, StepRecord,
    TickRecord, STEP_COLUMNS,
};
pub use mismatch::{s2s_step, MismatchModel};
pub use s2s::{
    run_s2s_episode, summarize_s2s, InitialOffset, NoiseSettings, S2sConfig, S2sSummary, SegmentSummary,
    VelocitySegment,
};
pub use walk::{run_kinematic_walk, FootFrames, WalkConfig, WalkOutcome, WalkSummary};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ik_qp::IkError;
use crate::kinematics::ModelError;
use crate::neuroreg::{NeuralRegulator, RegulatorError, DEFAULT_GAMMA, DEFAULT_HIDDEN_WIDTH};
use crate::stepper::SynthesisError;
use crate::template::{LipParams, ParamError};
use crate::trajgen::CurveError;

pub const DEFAULT_TICK: f64 = 1e-3;
pub const DEFAULT_REGULATOR_SEED: u64 = 42;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Regulator(#[from] RegulatorError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("step {step}, t = {t:.3} s: {source}")]
    Ik {
        step: usize,
        t: f64,
        #[source]
        source: IkError,
    },
    #[error("step {step}, t = {t:.3} s: {message}")]
    Plant { step: usize, t: f64, message: String },
}

/// Pendulum constants as they appear in scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LipSettings {
    pub g: f64,
    pub z0: f64,
    pub step_duration: f64,
}

impl Default for LipSettings {
    fn default() -> Self {
        Self {
            g: 9.81,
            z0: 1.0,
            step_duration: 0.4,
        }
    }
}

impl LipSettings {
    pub fn params(&self) -> Result<LipParams, ParamError> {
        LipParams::new(self.g, self.z0, self.step_duration)
    }
}

/// Neural regulator settings for the frontal plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptationSettings {
    pub enabled: bool,
    pub hidden_width: usize,
    pub gamma: f64,
    /// `(w_p, w_v)`; defaults to `(1, 1/σ2)`.
    pub error_weights: Option<[f64; 2]>,
    /// Delta-rule updates applied per step; defaults to one per control tick (`T/δt`).
    pub updates_per_step: Option<usize>,
    pub seed: u64,
}

impl Default for AdaptationSettings {
    fn default() -> Self {
        Self {
            enabled: false,
            hidden_width: DEFAULT_HIDDEN_WIDTH,
            gamma: DEFAULT_GAMMA,
            error_weights: None,
            updates_per_step: None,
            seed: DEFAULT_REGULATOR_SEED,
        }
    }
}

impl AdaptationSettings {
    pub(crate) fn build(&self, params: &LipParams) -> Result<Option<NeuralRegulator>, RegulatorError> {
        if !self.enabled {
            return Ok(None);
        }
        let weights = self
            .error_weights
            .unwrap_or([1.0, 1.0 / params.orbital_lines(0.0).sigma2]);
        Ok(Some(
            NeuralRegulator::new(self.hidden_width, self.seed)?
                .with_gamma(self.gamma)?
                .with_error_weights(weights)?,
        ))
    }

    pub(crate) fn updates(&self, params: &LipParams, tick: f64) -> usize {
        self.updates_per_step
            .unwrap_or_else(|| (params.step_duration() / tick).round().max(1.0) as usize)
    }
}

pub(crate) fn ticks_per_step(params: &LipParams, tick: f64) -> Result<usize, SimError> {
    if !(tick.is_finite() && tick > 0.0) {
        return Err(SimError::Config(format!(
            "tick must be finite and positive, got {tick}"
        )));
    }
    let n = params.step_duration() / tick;
    let rounded = n.round();
    if rounded < 1.0 || (n - rounded).abs() > 1e-9 * n.max(1.0) {
        return Err(SimError::Config(format!(
            "step duration {} is not a whole number of {tick} s ticks",
            params.step_duration()
        )));
    }
    Ok(rounded as usize)
}

//! Two-layer neural feed-forward regulator for the frontal-plane placement.
//!
//! `φ = tanh(Wᵀ tanh(Vᵀ [p, v, v_x_d, v_y_d]))`. The input layer `V` is drawn from
//! a seeded standard normal and never trained; the output layer `W` starts at zero
//! and is updated online with the delta rule `Δwᵢ = −γ E σᵢ`.
//!
//! The error signal is the signed projection `E = w_p (p* − p) + w_v (v* − v)`:
//! target minus actual, as in the classical delta rule. A squared error would carry
//! no sign and could not steer the correction in both directions.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::template::LipState;

pub const DEFAULT_GAMMA: f64 = 1e-4;
pub const DEFAULT_HIDDEN_WIDTH: usize = 16;
pub const INPUT_WIDTH: usize = 4;
const SNAPSHOT_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum RegulatorError {
    #[error("hidden width must be at least 1")]
    ZeroWidth,
    #[error("learning rate must be finite and positive, got {0}")]
    BadGamma(f64),
    #[error("error weights must be finite, got {0:?}")]
    BadErrorWeights([f64; 2]),
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error("snapshot json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralRegulator {
    v: DMatrix<f64>,
    w: DVector<f64>,
    gamma: f64,
    seed: u64,
    error_weights: [f64; 2],
}

/// Output of one forward pass, kept so the next update can reuse its activations.
#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    pub output: f64,
    pub hidden: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateReport {
    pub error_signal: f64,
    pub max_abs_delta: f64,
    pub skipped: bool,
}

impl NeuralRegulator {
    /// Seeded input layer, zero output layer, default γ and unit error weights.
    pub fn new(hidden_width: usize, seed: u64) -> Result<Self, RegulatorError> {
        if hidden_width == 0 {
            return Err(RegulatorError::ZeroWidth);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = DMatrix::from_fn(INPUT_WIDTH, hidden_width, |_, _| StandardNormal.sample(&mut rng));
        Ok(Self {
            v,
            w: DVector::zeros(hidden_width),
            gamma: DEFAULT_GAMMA,
            seed,
            error_weights: [1.0, 1.0],
        })
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self, RegulatorError> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(RegulatorError::BadGamma(gamma));
        }
        self.gamma = gamma;
        Ok(self)
    }

    /// Weights `(w_p, w_v)` of the scalar error signal; `(1, 1/σ2)` makes both terms metres.
    pub fn with_error_weights(mut self, weights: [f64; 2]) -> Result<Self, RegulatorError> {
        if !weights.iter().all(|w| w.is_finite()) {
            return Err(RegulatorError::BadErrorWeights(weights));
        }
        self.error_weights = weights;
        Ok(self)
    }

    pub fn hidden_width(&self) -> usize {
        self.w.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn error_weights(&self) -> [f64; 2] {
        self.error_weights
    }

    pub fn input_weights(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn output_weights(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn weight_norm(&self) -> f64 {
        self.w.norm()
    }

    pub fn forward(&self, x: LipState, v_x_d: f64, v_y_d: f64) -> Activation {
        let input = DVector::from_column_slice(&[x.p, x.v, v_x_d, v_y_d]);
        let hidden = (self.v.transpose() * input).map(f64::tanh);
        let output = self.w.dot(&hidden).tanh();
        Activation { output, hidden }
    }

    pub fn error_signal(&self, x: LipState, x_star: LipState) -> f64 {
        self.error_weights[0] * (x_star.p - x.p) + self.error_weights[1] * (x_star.v - x.v)
    }

    /// One delta-rule step using the activations of the forward pass whose output
    /// produced the measured state `x`.
    pub fn delta_update(&mut self, x: LipState, x_star: LipState, hidden: &DVector<f64>) -> UpdateReport {
        let error = self.error_signal(x, x_star);
        if !error.is_finite() || hidden.len() != self.w.len() || !hidden.iter().all(|h| h.is_finite()) {
            return UpdateReport {
                error_signal: error,
                max_abs_delta: 0.0,
                skipped: true,
            };
        }
        let mut max_abs_delta = 0.0f64;
        for (w, h) in self.w.iter_mut().zip(hidden.iter()) {
            let delta = -self.gamma * error * h;
            *w += delta;
            max_abs_delta = max_abs_delta.max(delta.abs());
        }
        UpdateReport {
            error_signal: error,
            max_abs_delta,
            skipped: false,
        }
    }

    pub fn snapshot(&self) -> RegulatorSnapshot {
        RegulatorSnapshot {
            schema: SNAPSHOT_SCHEMA,
            seed: self.seed,
            hidden_width: self.hidden_width(),
            gamma: self.gamma,
            error_weights: self.error_weights,
            v: (0..INPUT_WIDTH)
                .map(|r| self.v.row(r).iter().copied().collect())
                .collect(),
            w: self.w.iter().copied().collect(),
        }
    }

    pub fn from_snapshot(s: &RegulatorSnapshot) -> Result<Self, RegulatorError> {
        let bad = |m: String| Err(RegulatorError::Snapshot(m));
        if s.schema != SNAPSHOT_SCHEMA {
            return bad(format!("unsupported schema {}", s.schema));
        }
        if s.hidden_width == 0 {
            return Err(RegulatorError::ZeroWidth);
        }
        if s.v.len() != INPUT_WIDTH {
            return bad(format!("v has {} rows, expected {INPUT_WIDTH}", s.v.len()));
        }
        if let Some(r) = s.v.iter().position(|row| row.len() != s.hidden_width) {
            return bad(format!("v[{r}] length differs from hidden_width {}", s.hidden_width));
        }
        if s.w.len() != s.hidden_width {
            return bad(format!("w has {} entries, expected {}", s.w.len(), s.hidden_width));
        }
        if !s.v.iter().flatten().chain(s.w.iter()).all(|x| x.is_finite()) {
            return bad("non-finite weight".into());
        }
        let v = DMatrix::from_fn(INPUT_WIDTH, s.hidden_width, |r, c| s.v[r][c]);
        Self {
            v,
            w: DVector::from_vec(s.w.clone()),
            gamma: DEFAULT_GAMMA,
            seed: s.seed,
            error_weights: [1.0, 1.0],
        }
        .with_gamma(s.gamma)?
        .with_error_weights(s.error_weights)
    }
}

/// JSON-serialisable weight snapshot for resumable experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegulatorSnapshot {
    pub schema: u32,
    pub seed: u64,
    pub hidden_width: usize,
    pub gamma: f64,
    pub error_weights: [f64; 2],
    /// Input layer, `4 × hidden_width`, row-major.
    pub v: Vec<Vec<f64>>,
    pub w: Vec<f64>,
}

impl RegulatorSnapshot {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshot serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, RegulatorError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Parses and validates a snapshot document into a regulator.
pub fn load_snapshot(text: &str) -> Result<NeuralRegulator, RegulatorError> {
    NeuralRegulator::from_snapshot(&RegulatorSnapshot::from_json(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn seeded_construction_is_deterministic() {
        let a = NeuralRegulator::new(16, 42).unwrap();
        let b = NeuralRegulator::new(16, 42).unwrap();
        assert_eq!(a.input_weights(), b.input_weights());
        let c = NeuralRegulator::new(16, 43).unwrap();
        assert_ne!(a.input_weights(), c.input_weights());
        assert!(matches!(NeuralRegulator::new(0, 1), Err(RegulatorError::ZeroWidth)));
    }

    #[test]
    fn input_weights_look_standard_normal() {
        let reg = NeuralRegulator::new(16, 42).unwrap();
        let n = reg.input_weights().len() as f64;
        let mean = reg.input_weights().sum() / n;
        assert!(mean.abs() < 3.0 / n.sqrt(), "mean {mean}");
    }

    #[test]
    fn zero_output_layer_gives_zero() {
        let reg = NeuralRegulator::new(8, 7).unwrap();
        for &(p, v) in &[(0.0, 0.0), (0.3, -1.0), (-5.0, 9.0)] {
            assert_eq!(reg.forward(LipState::new(p, v), 0.2, -0.1).output, 0.0);
        }
    }

    #[test]
    fn hand_evaluated_composition() {
        let snap = RegulatorSnapshot {
            schema: 1,
            seed: 0,
            hidden_width: 1,
            gamma: 1e-4,
            error_weights: [1.0, 1.0],
            v: vec![vec![1.0], vec![0.0], vec![0.0], vec![0.0]],
            w: vec![1.0],
        };
        let reg = NeuralRegulator::from_snapshot(&snap).unwrap();
        let out = reg.forward(LipState::new(0.1, 0.7), 0.3, 0.1).output;
        assert_relative_eq!(out, 0.099_339_276_429_435_4, epsilon = 1e-15);
    }

    #[test]
    fn delta_rule_step() {
        let mut reg = NeuralRegulator::new(2, 3).unwrap();
        // E = (p* - p) = 0.1 with unit weights
        let report = reg.delta_update(
            LipState::new(0.0, 0.0),
            LipState::new(0.1, 0.0),
            &DVector::from_column_slice(&[0.5, -0.5]),
        );
        assert_relative_eq!(report.error_signal, 0.1, epsilon = 1e-15);
        assert_relative_eq!(reg.output_weights()[0], -5e-6, epsilon = 1e-18);
        assert_relative_eq!(reg.output_weights()[1], 5e-6, epsilon = 1e-18);
        assert_relative_eq!(report.max_abs_delta, 5e-6, epsilon = 1e-18);
    }

    #[test]
    fn zero_error_leaves_weights() {
        let mut reg = NeuralRegulator::new(4, 1).unwrap();
        let x = LipState::new(0.15, 0.26);
        let h = reg.forward(x, 0.1, 0.0).hidden;
        let before = reg.clone();
        let report = reg.delta_update(x, x, &h);
        assert_eq!(report.max_abs_delta, 0.0);
        assert_eq!(reg, before);
    }

    #[test]
    fn non_finite_error_is_skipped() {
        let mut reg = NeuralRegulator::new(4, 1).unwrap();
        let before = reg.clone();
        let h = DVector::from_element(4, 0.5);
        let report = reg.delta_update(LipState::new(f64::NAN, 0.0), LipState::ZERO, &h);
        assert!(report.skipped);
        assert_eq!(reg, before);
    }

    #[test]
    fn snapshot_round_trip() {
        let mut reg = NeuralRegulator::new(5, 11)
            .unwrap()
            .with_error_weights([1.0, 0.57])
            .unwrap();
        let x = LipState::new(0.1, 0.2);
        let h = reg.forward(x, 0.1, 0.0).hidden;
        reg.delta_update(x, LipState::new(0.13, 0.1), &h);
        let restored = load_snapshot(&reg.snapshot().to_json()).unwrap();
        assert_eq!(restored, reg);
    }

    #[test]
    fn malformed_snapshots_are_rejected() {
        let mut snap = NeuralRegulator::new(3, 1).unwrap().snapshot();
        snap.w.pop();
        assert!(NeuralRegulator::from_snapshot(&snap).is_err());
        let mut snap = NeuralRegulator::new(3, 1).unwrap().snapshot();
        snap.gamma = -1.0;
        assert!(NeuralRegulator::from_snapshot(&snap).is_err());
        assert!(load_snapshot("{\"schema\": 1}").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn output_is_bounded(seed in 0u64..1000, p in -10.0..10.0f64, v in -10.0..10.0f64,
                                 w in prop::collection::vec(-50.0..50.0f64, 6)) {
                let mut snap = NeuralRegulator::new(6, seed).unwrap().snapshot();
                snap.w = w;
                let reg = NeuralRegulator::from_snapshot(&snap).unwrap();
                let out = reg.forward(LipState::new(p, v), 0.3, -0.2).output;
                prop_assert!(out.abs() <= 1.0);
            }

            #[test]
            fn updates_are_deterministic(seed in 0u64..1000,
                                         xs in prop::collection::vec((-0.2..0.2f64, -0.5..0.5f64), 1..20)) {
                let run = || {
                    let mut reg = NeuralRegulator::new(8, seed).unwrap();
                    for &(p, v) in &xs {
                        let a = reg.forward(LipState::new(p, v), 0.1, 0.0);
                        reg.delta_update(LipState::new(p, v), LipState::new(0.15, 0.26), &a.hidden);
                    }
                    reg
                };
                let (a, b) = (run(), run());
                prop_assert_eq!(a.output_weights().as_slice(), b.output_weights().as_slice());
            }
        }
    }
}

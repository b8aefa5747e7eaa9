use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::log::{EpisodeLog, EventKind, PlaneRecord, StepRecord};
use super::mismatch::{s2s_step, MismatchModel};
use super::{AdaptationSettings, LipSettings, SimError, DEFAULT_TICK};
use crate::stepper::{StepController, DEFAULT_PLACEMENT_LIMIT};
use crate::template::{LipState, Side, DEFAULT_U_LEFT_STAR};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocitySegment {
    pub v_x: f64,
    #[serde(default)]
    pub v_y: f64,
    pub steps: usize,
}

/// Additive Gaussian noise on the measured pre-impact states.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSettings {
    pub position_std: f64,
    pub velocity_std: f64,
}

/// Offset of the first pre-impact state from its target, per plane `(p, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialOffset {
    pub sagittal: [f64; 2],
    pub frontal: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct S2sConfig {
    pub lip: LipSettings,
    pub schedule: Vec<VelocitySegment>,
    pub u_left_star: f64,
    pub placement_limit: f64,
    pub sagittal_mismatch: MismatchModel,
    pub frontal_mismatch: MismatchModel,
    pub adaptation: AdaptationSettings,
    pub noise: NoiseSettings,
    pub initial_offset: InitialOffset,
    /// Control tick; sets the default number of regulator updates per step.
    pub tick: f64,
    /// Seeds the measurement noise.
    pub seed: u64,
}

impl Default for S2sConfig {
    fn default() -> Self {
        Self {
            lip: LipSettings::default(),
            schedule: vec![VelocitySegment {
                v_x: 0.1,
                v_y: 0.0,
                steps: 200,
            }],
            u_left_star: DEFAULT_U_LEFT_STAR,
            placement_limit: DEFAULT_PLACEMENT_LIMIT,
            sagittal_mismatch: MismatchModel::None,
            frontal_mismatch: MismatchModel::None,
            adaptation: AdaptationSettings::default(),
            noise: NoiseSettings::default(),
            initial_offset: InitialOffset::default(),
            tick: DEFAULT_TICK,
            seed: 0,
        }
    }
}

impl S2sConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let params = self.lip.params()?;
        if self.schedule.is_empty() || self.schedule.iter().all(|s| s.steps == 0) {
            return Err(SimError::Config("schedule needs at least one step".into()));
        }
        let finite = |x: f64| x.is_finite();
        if !self.schedule.iter().all(|s| finite(s.v_x) && finite(s.v_y)) {
            return Err(SimError::Config("schedule velocities must be finite".into()));
        }
        if !(self.placement_limit.is_finite() && self.placement_limit > 0.0) {
            return Err(SimError::Config("placement_limit must be finite and positive".into()));
        }
        if !finite(self.u_left_star) {
            return Err(SimError::Config("u_left_star must be finite".into()));
        }
        if !(self.noise.position_std >= 0.0 && self.noise.velocity_std >= 0.0)
            || !finite(self.noise.position_std + self.noise.velocity_std)
        {
            return Err(SimError::Config(
                "noise standard deviations must be finite and non-negative".into(),
            ));
        }
        self.sagittal_mismatch
            .validate(&params)
            .map_err(|e| SimError::Config(format!("sagittal_mismatch: {e}")))?;
        self.frontal_mismatch
            .validate(&params)
            .map_err(|e| SimError::Config(format!("frontal_mismatch: {e}")))?;
        super::ticks_per_step(&params, self.tick)?;
        self.adaptation.build(&params)?;
        Ok(())
    }
}

/// Runs both planes through the schedule. The episode starts on the target orbit
/// of the first segment (plus `initial_offset`) in right stance.
pub fn run_s2s_episode(config: &S2sConfig) -> Result<EpisodeLog, SimError> {
    config.validate()?;
    let params = config.lip.params()?;
    let controller = StepController::new(params, config.placement_limit)?;
    let sm = *controller.matrices();
    let t_step = params.step_duration();
    let mut regulator = config.adaptation.build(&params)?;
    let updates = config.adaptation.updates(&params, config.tick);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise_p = Normal::new(0.0, config.noise.position_std).map_err(|e| SimError::Config(e.to_string()))?;
    let noise_v = Normal::new(0.0, config.noise.velocity_std).map_err(|e| SimError::Config(e.to_string()))?;
    let noisy = config.noise.position_std > 0.0 || config.noise.velocity_std > 0.0;

    let first = config
        .schedule
        .iter()
        .find(|s| s.steps > 0)
        .expect("validated schedule");
    let mut stance = Side::Right;
    let off = config.initial_offset;
    let mut x_s = params.p1_target(first.v_x).x_star;
    x_s = LipState::new(x_s.p + off.sagittal[0], x_s.v + off.sagittal[1]);
    let mut x_f = *params.p2_targets(first.v_y, config.u_left_star).for_stance(stance);
    let mut x_f_state = LipState::new(x_f.x_star.p + off.frontal[0], x_f.x_star.v + off.frontal[1]);

    let mut log = EpisodeLog::default();
    let mut prev_hidden = None;
    let mut k = 0;
    for seg in &config.schedule {
        let p1 = params.p1_target(seg.v_x);
        let p2 = params.p2_targets(seg.v_y, config.u_left_star);
        for _ in 0..seg.steps {
            let t = k as f64 * t_step;
            x_f = *p2.for_stance(stance);
            let (mut meas_s, mut meas_f) = (x_s, x_f_state);
            if noisy {
                meas_s.p += noise_p.sample(&mut rng);
                meas_s.v += noise_v.sample(&mut rng);
                meas_f.p += noise_p.sample(&mut rng);
                meas_f.v += noise_v.sample(&mut rng);
            }

            let mut phi = 0.0;
            let mut weight_norm = 0.0;
            if let Some(reg) = regulator.as_mut() {
                if let Some(hidden) = prev_hidden.as_ref() {
                    for _ in 0..updates {
                        let report = reg.delta_update(meas_f, x_f.x_star, hidden);
                        if report.skipped {
                            log.event(k, t, EventKind::RegulatorUpdateSkipped, "non-finite error signal");
                            break;
                        }
                    }
                }
                let act = reg.forward(meas_f, seg.v_x, seg.v_y);
                phi = act.output;
                prev_hidden = Some(act.hidden);
                weight_norm = reg.weight_norm();
            }

            let cmd_s = controller.command(meas_s, &p1, 0.0);
            let cmd_f = controller.command(meas_f, &x_f, phi);
            let (u_s, sat_s) = cmd_s.saturated(config.placement_limit);
            let (u_f, sat_f) = cmd_f.saturated(config.placement_limit);
            if sat_s {
                log.event(
                    k,
                    t,
                    EventKind::PlacementSaturated,
                    format!("sagittal u {} -> {u_s}", cmd_s.u),
                );
            }
            if sat_f {
                log.event(
                    k,
                    t,
                    EventKind::PlacementSaturated,
                    format!("frontal u {} -> {u_f}", cmd_f.u),
                );
            }

            let next_s = s2s_step(&params, &sm, &config.sagittal_mismatch, x_s, u_s);
            let next_f = s2s_step(&params, &sm, &config.frontal_mismatch, x_f_state, u_f);
            let mean_velocity = [
                (next_s.p - x_s.p + u_s) / t_step,
                (next_f.p - x_f_state.p + u_f) / t_step,
            ];
            log.steps.push(StepRecord {
                k,
                stance,
                t,
                v_x_d: seg.v_x,
                v_y_d: seg.v_y,
                sagittal: PlaneRecord {
                    state: meas_s,
                    target: p1.x_star,
                    command: cmd_s,
                    applied_u: u_s,
                    saturated: sat_s,
                },
                frontal: PlaneRecord {
                    state: meas_f,
                    target: x_f.x_star,
                    command: cmd_f,
                    applied_u: u_f,
                    saturated: sat_f,
                },
                mean_velocity,
                weight_norm,
            });
            x_s = next_s;
            x_f_state = next_f;
            stance = stance.opposite();
            k += 1;
        }
    }
    Ok(log)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentSummary {
    pub v_x_d: f64,
    pub v_y_d: f64,
    pub first_step: usize,
    pub steps: usize,
    /// Steps averaged after dropping the transient.
    pub counted: usize,
    /// Mean over counted steps of the per-step mean forward velocity.
    pub mean_v_x: f64,
    /// `|mean_v_x − v_x_d|`.
    pub abs_error: f64,
    /// `abs_error / |v_x_d|`, or `abs_error` itself for a zero command.
    pub relative_error: f64,
}

impl SegmentSummary {
    /// `|mean − v| ≤ tol·|v| + 1e-12`.
    pub fn within(&self, tol: f64) -> bool {
        self.abs_error <= tol * self.v_x_d.abs() + 1e-12
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct S2sSummary {
    pub segments: Vec<SegmentSummary>,
    pub steps: usize,
    /// Mean frontal error norm over the first `window` steps after the transient.
    pub initial_err_norm_frontal: f64,
    /// Mean frontal error norm over the last `window` steps.
    pub final_err_norm_frontal: f64,
    pub window: usize,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

pub fn summarize_s2s(log: &EpisodeLog, transient: usize, window: usize) -> S2sSummary {
    let mut segments: Vec<SegmentSummary> = Vec::new();
    let mut start = 0;
    while start < log.steps.len() {
        let head = &log.steps[start];
        let end = log.steps[start..]
            .iter()
            .position(|s| s.v_x_d != head.v_x_d || s.v_y_d != head.v_y_d)
            .map_or(log.steps.len(), |n| start + n);
        let counted = &log.steps[(start + transient).min(end)..end];
        let mean_v_x = mean(counted.iter().map(|s| s.mean_velocity[0]));
        let abs_error = (mean_v_x - head.v_x_d).abs();
        let relative_error = if head.v_x_d != 0.0 {
            abs_error / head.v_x_d.abs()
        } else {
            abs_error
        };
        segments.push(SegmentSummary {
            v_x_d: head.v_x_d,
            v_y_d: head.v_y_d,
            first_step: head.k,
            steps: end - start,
            counted: counted.len(),
            mean_v_x,
            abs_error,
            relative_error,
        });
        start = end;
    }
    let n = log.steps.len();
    let w = window.min(n);
    let early = &log.steps[transient.min(n)..(transient + w).min(n)];
    S2sSummary {
        segments,
        steps: n,
        initial_err_norm_frontal: mean(early.iter().map(|s| s.frontal.error_norm())),
        final_err_norm_frontal: mean(log.steps[n - w..].iter().map(|s| s.frontal.error_norm())),
        window: w,
    }
}

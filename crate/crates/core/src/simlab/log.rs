use std::io::Write;

use serde::Serialize;

use crate::stepper::StepCommand;
use crate::template::{LipState, Side};

/// Per-plane data recorded at a pre-impact instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlaneRecord {
    /// Measured pre-impact state.
    pub state: LipState,
    pub target: LipState,
    pub command: StepCommand,
    /// Placement actually taken after saturation.
    pub applied_u: f64,
    pub saturated: bool,
}

impl PlaneRecord {
    pub fn error(&self) -> LipState {
        self.state - self.target
    }

    pub fn error_norm(&self) -> f64 {
        self.error().to_vector().norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub k: usize,
    /// Stance foot during the step that ends at this pre-impact instant.
    pub stance: Side,
    /// Time of the pre-impact instant (s).
    pub t: f64,
    pub v_x_d: f64,
    pub v_y_d: f64,
    pub sagittal: PlaneRecord,
    pub frontal: PlaneRecord,
    /// Mean CoM velocity over the step, world displacement divided by `T`.
    pub mean_velocity: [f64; 2],
    pub weight_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TickRecord {
    pub t: f64,
    pub step: usize,
    pub stance: Side,
    pub q: Vec<f64>,
    pub q_d: Vec<f64>,
    pub qdot_d: Vec<f64>,
    pub com: [f64; 3],
    pub swing: [f64; 3],
    pub swing_ref: [f64; 3],
    /// `|z_ref − z|` of the CoM (m).
    pub com_residual: f64,
    /// Swing-foot position error norm (m).
    pub swing_residual: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    PlacementSaturated,
    PredictionClamped,
    CurveClamped,
    JointLimitClamped,
    IkNotConverged,
    RegulatorUpdateSkipped,
    Impact,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::PlacementSaturated => "placement_saturated",
            EventKind::PredictionClamped => "prediction_clamped",
            EventKind::CurveClamped => "curve_clamped",
            EventKind::JointLimitClamped => "joint_limit_clamped",
            EventKind::IkNotConverged => "ik_not_converged",
            EventKind::RegulatorUpdateSkipped => "regulator_update_skipped",
            EventKind::Impact => "impact",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub step: usize,
    pub t: f64,
    pub kind: EventKind,
    pub detail: String,
}

/// Everything an episode produced, in order. Contains no wall-clock data, so two
/// runs with the same configuration compare equal.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct EpisodeLog {
    pub steps: Vec<StepRecord>,
    pub ticks: Vec<TickRecord>,
    pub events: Vec<Event>,
}

impl EpisodeLog {
    pub fn event(&mut self, step: usize, t: f64, kind: EventKind, detail: impl Into<String>) {
        let detail = detail.into();
        log::debug!("step {step} t={t:.3}: {} {detail}", kind.as_str());
        self.events.push(Event { step, t, kind, detail });
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }
}

/// Columns of the per-step CSV. Errors are `measured − target`; `err_norm_*_pv` is
/// the Euclidean norm of the (position, velocity) error of that plane.
pub const STEP_COLUMNS: &[&str] = &[
    "k",
    "stance",
    "t",
    "v_x_d",
    "v_y_d",
    "px",
    "vx",
    "px_star",
    "vx_star",
    "ux",
    "ux_star",
    "ux_feedback",
    "ux_applied",
    "ux_saturated",
    "py",
    "vy",
    "py_star",
    "vy_star",
    "uy",
    "uy_star",
    "uy_feedback",
    "uy_adaptive",
    "uy_applied",
    "uy_saturated",
    "err_norm_sagittal_pv",
    "err_norm_frontal_pv",
    "vx_step_mean",
    "vy_step_mean",
    "nn_weight_norm",
];

fn num(x: f64) -> String {
    format!("{x}")
}

fn flag(b: bool) -> String {
    (b as u8).to_string()
}

pub fn write_steps_csv<W: Write>(log: &EpisodeLog, out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(STEP_COLUMNS)?;
    for s in &log.steps {
        let (sg, fr) = (&s.sagittal, &s.frontal);
        w.write_record([
            s.k.to_string(),
            s.stance.as_str().to_string(),
            num(s.t),
            num(s.v_x_d),
            num(s.v_y_d),
            num(sg.state.p),
            num(sg.state.v),
            num(sg.target.p),
            num(sg.target.v),
            num(sg.command.u),
            num(sg.command.u_star),
            num(sg.command.feedback),
            num(sg.applied_u),
            flag(sg.saturated),
            num(fr.state.p),
            num(fr.state.v),
            num(fr.target.p),
            num(fr.target.v),
            num(fr.command.u),
            num(fr.command.u_star),
            num(fr.command.feedback),
            num(fr.command.adaptive),
            num(fr.applied_u),
            flag(fr.saturated),
            num(sg.error_norm()),
            num(fr.error_norm()),
            num(s.mean_velocity[0]),
            num(s.mean_velocity[1]),
            num(s.weight_norm),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-tick CSV: time, step, stance, then `q_*`, `qd_*` and `qdotd_*` per coordinate
/// label, then CoM, swing foot, swing reference and solver columns.
pub fn write_ticks_csv<W: Write>(
    log: &EpisodeLog,
    q_labels: &[String],
    v_labels: &[String],
    out: W,
) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let mut header: Vec<String> = vec!["t".into(), "step".into(), "stance".into()];
    header.extend(q_labels.iter().map(|l| format!("q_{l}")));
    header.extend(q_labels.iter().map(|l| format!("qd_{l}")));
    header.extend(v_labels.iter().map(|l| format!("qdotd_{l}")));
    for s in [
        "com_x",
        "com_y",
        "com_z",
        "swing_x",
        "swing_y",
        "swing_z",
        "swing_ref_x",
        "swing_ref_y",
        "swing_ref_z",
        "com_height_residual",
        "swing_residual",
        "kkt_residual",
        "qp_iterations",
        "qp_converged",
    ] {
        header.push(s.into());
    }
    w.write_record(&header)?;
    for r in &log.ticks {
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        row.push(num(r.t));
        row.push(r.step.to_string());
        row.push(r.stance.as_str().into());
        row.extend(r.q.iter().chain(&r.q_d).chain(&r.qdot_d).map(|x| num(*x)));
        row.extend(r.com.iter().chain(&r.swing).chain(&r.swing_ref).map(|x| num(*x)));
        row.push(num(r.com_residual));
        row.push(num(r.swing_residual));
        row.push(num(r.kkt_residual));
        row.push(r.iterations.to_string());
        row.push(flag(r.converged));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_events_csv<W: Write>(log: &EpisodeLog, out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["step", "t", "kind", "detail"])?;
    for e in &log.events {
        w.write_record([e.step.to_string(), num(e.t), e.kind.as_str().into(), e.detail.clone()])?;
    }
    w.flush()?;
    Ok(())
}

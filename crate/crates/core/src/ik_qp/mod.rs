//! Differential inverse kinematics as a box-constrained QP.
//!
//! Each tick minimises `Σ ‖W^½ (J q̇ − T)‖² + ρ‖q̇‖²` over the joint velocities,
//! subject to per-coordinate bounds and fixed values for passive joints.

pub mod kkt;
mod solver;

pub use solver::BoxQpSolver;

use nalgebra::{DMatrix, DVector, Quaternion, UnitQuaternion, Vector3, Vector6};
use thiserror::Error;

use crate::kinematics::{integrate_configuration, quat_error, FramePose, JointKind, RobotModel};

pub const DEFAULT_REGULARIZATION: f64 = 1e-8;
pub const DEFAULT_POSITION_GAIN: f64 = 20.0;
pub const DEFAULT_ORIENTATION_GAIN: f64 = 10.0;
pub const DEFAULT_MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IkError {
    #[error("joint `{joint}`: velocity bounds [{lower}, {upper}] do not intersect")]
    Infeasible { joint: String, lower: f64, upper: f64 },
    #[error("passive joint `{joint}`: prescribed velocity {value} outside [{lower}, {upper}]")]
    PassiveOutOfBounds {
        joint: String,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("task `{task}` has a {rows}x{cols} Jacobian, expected {expected} columns")]
    Dimension {
        task: String,
        rows: usize,
        cols: usize,
        expected: usize,
    },
    #[error("tick must be finite and positive, got {0}")]
    BadTick(f64),
    #[error("non-finite data in {0}")]
    NonFinite(&'static str),
}

/// One weighted least-squares objective term `‖W^½ (J q̇ − T)‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub name: String,
    pub jacobian: DMatrix<f64>,
    pub target: DVector<f64>,
    /// Non-negative per-row weights.
    pub weights: DVector<f64>,
}

impl Task {
    pub fn new(name: impl Into<String>, jacobian: DMatrix<f64>, target: DVector<f64>) -> Self {
        let rows = jacobian.nrows();
        Self {
            name: name.into(),
            jacobian,
            target,
            weights: DVector::from_element(rows, 1.0),
        }
    }

    pub fn with_weights(mut self, weights: DVector<f64>) -> Self {
        self.weights = weights;
        self
    }

    pub fn residual(&self, qdot: &DVector<f64>) -> DVector<f64> {
        &self.jacobian * qdot - &self.target
    }

    pub fn cost(&self, qdot: &DVector<f64>) -> f64 {
        let r = self.residual(qdot);
        r.iter().zip(self.weights.iter()).map(|(r, w)| w * r * r).sum()
    }
}

/// Per-coordinate `(lower, upper)` pairs.
pub type Intervals = Vec<(f64, f64)>;

/// One control tick's QP.
#[derive(Debug, Clone, PartialEq)]
pub struct IkProblem {
    pub tasks: Vec<Task>,
    /// Velocity limits per coordinate.
    pub velocity_bounds: Vec<(f64, f64)>,
    /// Bounds implied by keeping `q + δt q̇` inside the position limits.
    pub position_bounds: Vec<(f64, f64)>,
    /// Prescribed values (passive joints); `None` for free coordinates.
    pub fixed: Vec<Option<f64>>,
    pub tick: f64,
    pub regularization: f64,
    pub labels: Vec<String>,
}

/// Feasible box after intersecting velocity and position-implied bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl IkProblem {
    /// Unbounded problem over `n` coordinates.
    pub fn new(n: usize, tick: f64) -> Self {
        Self {
            tasks: Vec::new(),
            velocity_bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); n],
            position_bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); n],
            fixed: vec![None; n],
            tick,
            regularization: DEFAULT_REGULARIZATION,
            labels: (0..n).map(|i| format!("q{i}")).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.fixed.len()
    }

    pub fn with_task(mut self, task: Task) -> Self {
        self.tasks.push(task);
        self
    }

    fn label(&self, i: usize) -> String {
        self.labels.get(i).cloned().unwrap_or_else(|| format!("q{i}"))
    }

    /// Structural checks plus bound intersection. Bounds that cross by less than
    /// 1e-12 are collapsed to their midpoint.
    pub fn bounds(&self) -> Result<Bounds, IkError> {
        let n = self.dim();
        if !(self.tick.is_finite() && self.tick > 0.0) {
            return Err(IkError::BadTick(self.tick));
        }
        for t in &self.tasks {
            if t.jacobian.ncols() != n || t.target.len() != t.jacobian.nrows() || t.weights.len() != t.jacobian.nrows()
            {
                return Err(IkError::Dimension {
                    task: t.name.clone(),
                    rows: t.jacobian.nrows(),
                    cols: t.jacobian.ncols(),
                    expected: n,
                });
            }
            if !(t.jacobian.iter().chain(t.target.iter()).all(|x| x.is_finite())
                && t.weights.iter().all(|w| w.is_finite() && *w >= 0.0))
            {
                return Err(IkError::NonFinite("task data"));
            }
        }
        if self.velocity_bounds.len() != n || self.position_bounds.len() != n {
            return Err(IkError::Dimension {
                task: "bounds".into(),
                rows: self.velocity_bounds.len(),
                cols: self.position_bounds.len(),
                expected: n,
            });
        }
        if !(self.regularization.is_finite() && self.regularization >= 0.0) {
            return Err(IkError::NonFinite("regularization"));
        }
        let mut lower = DVector::zeros(n);
        let mut upper = DVector::zeros(n);
        for i in 0..n {
            let (vl, vu) = self.velocity_bounds[i];
            let (pl, pu) = self.position_bounds[i];
            if vl.is_nan() || vu.is_nan() || pl.is_nan() || pu.is_nan() {
                return Err(IkError::NonFinite("bounds"));
            }
            let (mut lo, mut hi) = (vl.max(pl), vu.min(pu));
            if lo > hi {
                if lo - hi > 1e-12 {
                    return Err(IkError::Infeasible {
                        joint: self.label(i),
                        lower: lo,
                        upper: hi,
                    });
                }
                let mid = 0.5 * (lo + hi);
                lo = mid;
                hi = mid;
            }
            if let Some(v) = self.fixed[i] {
                if !v.is_finite() {
                    return Err(IkError::NonFinite("passive value"));
                }
                if v < lo - 1e-12 || v > hi + 1e-12 {
                    return Err(IkError::PassiveOutOfBounds {
                        joint: self.label(i),
                        value: v,
                        lower: lo,
                        upper: hi,
                    });
                }
                lo = v;
                hi = v;
            }
            lower[i] = lo;
            upper[i] = hi;
        }
        Ok(Bounds { lower, upper })
    }

    /// Dense Hessian and linear term of `½ q̇ᵀ H q̇ + cᵀ q̇` (objective scaled by ½).
    pub fn quadratic_form(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.dim();
        let mut h = DMatrix::from_diagonal_element(n, n, self.regularization);
        let mut c = DVector::zeros(n);
        for t in &self.tasks {
            let mut wj = t.jacobian.clone();
            for (r, w) in t.weights.iter().enumerate() {
                wj.row_mut(r).scale_mut(*w);
            }
            h += t.jacobian.transpose() * &wj;
            c -= wj.transpose() * &t.target;
        }
        (h, c)
    }

    /// Full objective `Σ ‖W^½ (J q̇ − T)‖² + ρ‖q̇‖²`.
    pub fn objective(&self, qdot: &DVector<f64>) -> f64 {
        self.tasks.iter().map(|t| t.cost(qdot)).sum::<f64>() + self.regularization * qdot.norm_squared()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub qdot_d: DVector<f64>,
    pub kkt_residual: f64,
    pub objective_value: f64,
    pub iterations: usize,
    /// Wall-clock seconds spent in the solve.
    pub solve_time: f64,
    /// False when the iteration cap was hit; `qdot_d` is then the best feasible iterate.
    pub converged: bool,
    /// Coordinates resting on a bound that was not a fixed value.
    pub active_bounds: Vec<usize>,
}

/// Reference for one task frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskSetpoint {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub orientation: Quaternion<f64>,
    pub angular_velocity: Vector3<f64>,
}

impl TaskSetpoint {
    pub fn at_rest(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            orientation: *orientation.quaternion(),
            angular_velocity: Vector3::zeros(),
        }
    }
}

/// Diagonal task-space gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskGains {
    pub position: Vector3<f64>,
    pub orientation: Vector3<f64>,
}

impl TaskGains {
    pub fn uniform(kp: f64, kw: f64) -> Self {
        Self {
            position: Vector3::from_element(kp),
            orientation: Vector3::from_element(kw),
        }
    }
}

impl Default for TaskGains {
    fn default() -> Self {
        Self::uniform(DEFAULT_POSITION_GAIN, DEFAULT_ORIENTATION_GAIN)
    }
}

/// `[v_d + K_p (p_d − p); ω_d − K_ω e]` with `e` the quaternion orientation error.
pub fn build_task_vector(reference: &TaskSetpoint, current: &FramePose, gains: &TaskGains) -> Vector6<f64> {
    let lin = reference.velocity + gains.position.component_mul(&(reference.position - current.position));
    let e = quat_error(&reference.orientation, current.orientation.quaternion()).error;
    let ang = reference.angular_velocity - gains.orientation.component_mul(&e);
    Vector6::new(lin.x, lin.y, lin.z, ang.x, ang.y, ang.z)
}

/// Velocity limits and position-implied bounds for every velocity coordinate.
pub fn model_bounds(model: &RobotModel, q: &DVector<f64>, tick: f64) -> (Intervals, Intervals) {
    let mut vel = vec![(0.0, 0.0); model.nv()];
    let mut pos = vec![(f64::NEG_INFINITY, f64::INFINITY); model.nv()];
    for j in model.joints() {
        for k in 0..j.nv() {
            vel[j.v_index + k] = (-j.velocity_limit, j.velocity_limit);
        }
        if j.kind == JointKind::Revolute {
            let (lo, hi) = j.position_limits;
            let x = q[j.q_index];
            pos[j.v_index] = ((lo - x) / tick, (hi - x) / tick);
        }
    }
    (vel, pos)
}

/// Result of integrating a velocity command into a configuration reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Integrated {
    pub q: DVector<f64>,
    /// Joints whose integrated value was clamped into its position limits.
    pub clamped: Vec<usize>,
}

/// `q_d = q + δt q̇_d`, clamped into position limits, base quaternion renormalised.
pub fn integrate_reference(model: &RobotModel, q: &DVector<f64>, qdot_d: &DVector<f64>, tick: f64) -> Integrated {
    let mut out = integrate_configuration(model, q, qdot_d, tick);
    let mut clamped = Vec::new();
    for (i, j) in model.joints().iter().enumerate() {
        if j.kind == JointKind::Revolute {
            let (lo, hi) = j.position_limits;
            let x = out[j.q_index];
            let c = x.clamp(lo, hi);
            if c != x {
                clamped.push(i);
                out[j.q_index] = c;
            }
        }
    }
    Integrated { q: out, clamped }
}

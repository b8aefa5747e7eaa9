//! Task-space references for one step.
//!
//! Swing-foot positions are expressed in a frame whose horizontal origin is the
//! stance foot and whose vertical origin is the nominal CoM height, with axes
//! aligned to the ground. Touchdown on flat ground is therefore `z = −z0`.

use nalgebra::{UnitQuaternion, Vector3};
use thiserror::Error;

pub const DEFAULT_APEX: f64 = 0.08;
const SWING_DEGREE: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurveError {
    #[error("curve duration must be finite and positive, got {0}")]
    BadDuration(f64),
    #[error("a Bezier curve needs at least one control point")]
    NoControlPoints,
    #[error("swing apex must be finite and positive, got {0}")]
    BadApex(f64),
    #[error("non-finite control point")]
    NonFinite,
}

/// Bezier curve over `t ∈ [0, T]`, evaluated in the normalised parameter `s = t/T`.
#[derive(Debug, Clone, PartialEq)]
pub struct BezierCurve {
    points: Vec<Vector3<f64>>,
    duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveSample {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Set when the requested time was outside `[0, T]`.
    pub clamped: bool,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn bernstein_sum(points: &[Vector3<f64>], s: f64) -> Vector3<f64> {
    let n = points.len() - 1;
    points.iter().enumerate().fold(Vector3::zeros(), |acc, (i, p)| {
        acc + p * (binomial(n, i) * (1.0 - s).powi((n - i) as i32) * s.powi(i as i32))
    })
}

impl BezierCurve {
    pub fn new(points: Vec<Vector3<f64>>, duration: f64) -> Result<Self, CurveError> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(CurveError::BadDuration(duration));
        }
        if points.is_empty() {
            return Err(CurveError::NoControlPoints);
        }
        if !points.iter().all(|p| p.iter().all(|x| x.is_finite())) {
            return Err(CurveError::NonFinite);
        }
        Ok(Self { points, duration })
    }

    pub fn degree(&self) -> usize {
        self.points.len() - 1
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn control_points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn start(&self) -> Vector3<f64> {
        self.points[0]
    }

    pub fn end(&self) -> Vector3<f64> {
        self.points[self.points.len() - 1]
    }

    /// Position and time derivative at `t`. The endpoints are returned exactly.
    pub fn eval(&self, t: f64) -> CurveSample {
        let clamped = !(0.0..=self.duration).contains(&t);
        let s = (t / self.duration).clamp(0.0, 1.0);
        let n = self.degree();
        let position = if s == 0.0 {
            self.start()
        } else if s == 1.0 {
            self.end()
        } else {
            bernstein_sum(&self.points, s)
        };
        let velocity = if n == 0 {
            Vector3::zeros()
        } else {
            let hodograph: Vec<_> = self.points.windows(2).map(|w| (w[1] - w[0]) * n as f64).collect();
            bernstein_sum(&hodograph, s) / self.duration
        };
        CurveSample {
            position,
            velocity,
            clamped,
        }
    }

    /// Replaces the last two control points, keeping a zero terminal velocity.
    pub fn retarget_end(&mut self, end: Vector3<f64>) {
        let n = self.points.len();
        if n >= 2 {
            self.points[n - 2] = end;
        }
        self.points[n - 1] = end;
    }
}

/// Degree-5 swing curve from `p0` to `(u_x, u_y, −z0)` with zero velocity at both
/// ends and a mid-step height of `max(p0.z, −z0) + apex`.
pub fn make_swing_curve(
    p0: Vector3<f64>,
    u_x: f64,
    u_y: f64,
    z0: f64,
    apex: f64,
    duration: f64,
) -> Result<BezierCurve, CurveError> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(CurveError::BadDuration(duration));
    }
    if !(apex.is_finite() && apex > 0.0) {
        return Err(CurveError::BadApex(apex));
    }
    let end = Vector3::new(u_x, u_y, -z0);
    let mut mid = (p0 + end) * 0.5;
    mid.z = interior_height(p0.z, end.z, apex);
    let points = vec![p0, p0, mid, mid, end, end];
    debug_assert_eq!(points.len(), SWING_DEGREE + 1);
    BezierCurve::new(points, duration)
}

// With P0 = P1 = a, P2 = P3 = m, P4 = P5 = b the height at s = 1/2 is
// (6a + 20m + 6b) / 32.
fn interior_height(start: f64, end: f64, apex: f64) -> f64 {
    let peak = start.max(end) + apex;
    (32.0 * peak - 6.0 * (start + end)) / 20.0
}

/// Constant-height CoM reference with identity orientation; x and y are left free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComReference {
    pub height: f64,
    pub rotation: UnitQuaternion<f64>,
}

impl ComReference {
    /// Height and vertical velocity at any time of the step.
    pub fn at(&self, _t: f64) -> (f64, f64) {
        (self.height, 0.0)
    }
}

pub fn com_reference(z0: f64) -> ComReference {
    ComReference {
        height: z0,
        rotation: UnitQuaternion::identity(),
    }
}

/// Complete task reference for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskReference {
    pub com: ComReference,
    pub swing_curve: BezierCurve,
    pub swing_rotation: UnitQuaternion<f64>,
}

impl TaskReference {
    pub fn new(z0: f64, swing_curve: BezierCurve) -> Self {
        Self {
            com: com_reference(z0),
            swing_curve,
            swing_rotation: UnitQuaternion::identity(),
        }
    }
}

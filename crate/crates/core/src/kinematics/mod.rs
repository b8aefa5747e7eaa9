//! Floating-base kinematic chains.
//!
//! A [`RobotModel`] is loaded from a versioned JSON document, and
//! [`forward_kinematics`] produces link and frame poses plus the whole-body CoM.
//! Jacobians are geometric: rows 0..3 are linear velocity and rows 3..6 angular
//! velocity, both expressed in the world frame.

mod chain;
mod model;

pub use chain::{forward_kinematics, integrate_configuration, jacobian, KinematicsState, Target};
pub use model::{
    FrameDocument, Joint, JointDocument, JointKind, ModelDocument, ModelError, OriginDocument, RobotModel,
};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

/// Position plus unit-quaternion orientation of a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FramePose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

/// Orientation error between two quaternions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationError {
    pub error: Vector3<f64>,
    /// Set when an input had to be renormalised (norm off by more than 1e-6).
    pub renormalized: bool,
}

/// `e = η_d ε − η ε_d + ε_d × ε`, with `(η_d, ε_d)` the desired and `(η, ε)` the
/// current quaternion. Commanding `ω = ω_d − K e` rotates the current frame
/// toward the desired one.
pub fn quat_error(desired: &Quaternion<f64>, current: &Quaternion<f64>) -> OrientationError {
    let mut renormalized = false;
    let mut unit = |q: &Quaternion<f64>| {
        let n = q.norm();
        if (n - 1.0).abs() > 1e-6 {
            renormalized = true;
        }
        q / n
    };
    let d = unit(desired);
    let c = unit(current);
    let (eta_d, eps_d) = (d.w, d.imag());
    let (eta, eps) = (c.w, c.imag());
    OrientationError {
        error: eps * eta_d - eps_d * eta + eps_d.cross(&eps),
        renormalized,
    }
}

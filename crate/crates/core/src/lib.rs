//! Step-to-step walking control built on the linear inverted pendulum (LIP).
//!
//! The crate is organised bottom-up:
//!
//! * [`template`]: closed-form LIP flow, orbital lines and target pre-impact states.
//! * [`stepper`]: deadbeat step-to-step foot placement.
//! * [`neuroreg`]: two-layer neural feed-forward regulator trained by the delta rule.
//! * [`trajgen`]: Bezier swing-foot and constant-height CoM references.
//! * [`kinematics`]: floating-base kinematic chains, Jacobians and quaternion errors.
//! * [`ik_qp`]: box-constrained velocity QP for differential inverse kinematics.
//! * [`simlab`]: experiment plants and episode runners with CSV logging.
//! * [`config`]: JSON scenario documents and `key=value` overrides.

pub mod config;
pub mod ik_qp;
pub mod kinematics;
pub mod neuroreg;
pub mod simlab;
pub mod stepper;
pub mod template;
pub mod trajgen;

pub use template::{LipParams, LipState, Side};

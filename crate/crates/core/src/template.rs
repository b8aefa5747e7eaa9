//! Closed-form linear inverted pendulum model.
//!
//! The CoM state `(p, v)` is measured relative to the support foot. During single
//! support it evolves as `p'' = (g / z0) p`, whose flow over a time `t` is the
//! hyperbolic matrix returned by [`LipParams::flow_matrix`]. Sagittal walking uses
//! one-step-periodic (P1) orbits and frontal walking uses two-step-periodic (P2)
//! orbits; both are characterised by straight "orbital lines" in the phase plane.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{name} must be finite and strictly positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
}

/// Pendulum constants shared by both planes of motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipParams {
    g: f64,
    z0: f64,
    step_duration: f64,
    lambda: f64,
}

/// CoM position relative to the support foot and CoM velocity, for one plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LipState {
    pub p: f64,
    pub v: f64,
}

impl LipState {
    pub const ZERO: LipState = LipState { p: 0.0, v: 0.0 };

    pub fn new(p: f64, v: f64) -> Self {
        Self { p, v }
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.p, self.v)
    }

    pub fn from_vector(x: &Vector2<f64>) -> Self {
        Self { p: x[0], v: x[1] }
    }

    pub fn is_finite(&self) -> bool {
        self.p.is_finite() && self.v.is_finite()
    }
}

impl std::ops::Sub for LipState {
    type Output = LipState;

    fn sub(self, rhs: LipState) -> LipState {
        LipState::new(self.p - rhs.p, self.v - rhs.v)
    }
}

/// Discrete step-to-step system `x⁻ₖ₊₁ = A x⁻ₖ + B uₖ`.
///
/// `A = M·a` and `B = M·b`, where `M` is the flow over one step and `(a, b)` is the
/// impact reset `p⁺ = p⁻ − u`, `v⁺ = v⁻`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMatrices {
    pub flow: Matrix2<f64>,
    pub reset: Matrix2<f64>,
    pub reset_input: Vector2<f64>,
    pub a: Matrix2<f64>,
    pub b: Vector2<f64>,
}

/// Slopes and offset of the P1 and P2 orbital lines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitalLines {
    /// P1 slope `λ·coth(λT/2)`.
    pub sigma1: f64,
    /// P2 slope `λ·tanh(λT/2)`.
    pub sigma2: f64,
    /// P2 offset for the requested lateral velocity.
    pub d2: f64,
}

/// Ideal pre-impact state and the foot placement that keeps the orbit periodic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetStep {
    pub x_star: LipState,
    pub u_star: f64,
}

/// Which foot is on the ground.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "L",
            Side::Right => "R",
        }
    }
}

/// Frontal-plane targets for both stance sides of a P2 orbit.
///
/// `left` is the step that lands the left foot (taken during right stance) and
/// `right` the step that lands the right foot. `left.u_star + right.u_star` equals
/// `v_y_d · T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct P2Targets {
    pub left: TargetStep,
    pub right: TargetStep,
}

impl P2Targets {
    /// Target of the step taken while standing on `stance`.
    pub fn for_stance(&self, stance: Side) -> &TargetStep {
        match stance {
            Side::Right => &self.left,
            Side::Left => &self.right,
        }
    }
}

fn positive(name: &'static str, value: f64) -> Result<f64, ParamError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(ParamError::NonPositive { name, value })
    }
}

impl LipParams {
    pub fn new(g: f64, z0: f64, step_duration: f64) -> Result<Self, ParamError> {
        let g = positive("g", g)?;
        let z0 = positive("z0", z0)?;
        let step_duration = positive("step_duration", step_duration)?;
        Ok(Self {
            g,
            z0,
            step_duration,
            lambda: (g / z0).sqrt(),
        })
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn z0(&self) -> f64 {
        self.z0
    }

    /// Step duration `T` in seconds.
    pub fn step_duration(&self) -> f64 {
        self.step_duration
    }

    /// `λ = √(g / z0)`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Same pendulum with a different CoM height.
    pub fn with_height(&self, z0: f64) -> Result<Self, ParamError> {
        Self::new(self.g, z0, self.step_duration)
    }

    pub fn flow_matrix(&self, t: f64) -> Matrix2<f64> {
        let l = self.lambda;
        let (s, c) = ((l * t).sinh(), (l * t).cosh());
        Matrix2::new(c, s / l, l * s, c)
    }

    /// Exact state after `t` seconds of single support.
    pub fn flow(&self, x0: LipState, t: f64) -> LipState {
        LipState::from_vector(&(self.flow_matrix(t) * x0.to_vector()))
    }

    pub fn step_matrices(&self) -> StepMatrices {
        let flow = self.flow_matrix(self.step_duration);
        let reset = Matrix2::identity();
        let reset_input = Vector2::new(-1.0, 0.0);
        StepMatrices {
            flow,
            reset,
            reset_input,
            a: flow * reset,
            b: flow * reset_input,
        }
    }

    pub fn orbital_lines(&self, v_y_d: f64) -> OrbitalLines {
        let l = self.lambda;
        let half = 0.5 * l * self.step_duration;
        let sigma1 = l / half.tanh();
        let sigma2 = l * half.tanh();
        let sech = 1.0 / half.cosh();
        let d2 = l * l * sech * sech * self.step_duration * v_y_d / (2.0 * sigma2);
        OrbitalLines { sigma1, sigma2, d2 }
    }

    /// P1 target for a forward velocity: `x* = (1, σ1)·v T/2`, `u* = v T`.
    pub fn p1_target(&self, v_x_d: f64) -> TargetStep {
        let sigma1 = self.orbital_lines(0.0).sigma1;
        let half_step = 0.5 * v_x_d * self.step_duration;
        TargetStep {
            x_star: LipState::new(half_step, sigma1 * half_step),
            u_star: v_x_d * self.step_duration,
        }
    }

    /// P2 targets for a lateral velocity, with the left-landing placement fixed by
    /// the caller (the single periodicity constraint leaves one placement free).
    ///
    /// Each pre-impact target is `(u*/2, (σ2·u* + d2)/2)`, which is the state that
    /// returns to itself after the two-step cycle.
    pub fn p2_targets(&self, v_y_d: f64, u_left_star: f64) -> P2Targets {
        let lines = self.orbital_lines(v_y_d);
        let u_right_star = v_y_d * self.step_duration - u_left_star;
        let target = |u: f64| TargetStep {
            x_star: LipState::new(0.5 * u, 0.5 * (lines.sigma2 * u + lines.d2)),
            u_star: u,
        };
        P2Targets {
            left: target(u_left_star),
            right: target(u_right_star),
        }
    }
}

/// Default left-landing lateral placement for P2 orbits (m).
pub const DEFAULT_U_LEFT_STAR: f64 = 0.3;

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> LipParams {
        LipParams::new(9.81, 1.0, 0.4).unwrap()
    }

    /// Classical RK4 on p'' = λ² p.
    fn rk4(lambda: f64, x0: LipState, t: f64, h: f64) -> LipState {
        let f = |x: [f64; 2]| [x[1], lambda * lambda * x[0]];
        let n = (t / h).round() as usize;
        let mut x = [x0.p, x0.v];
        for _ in 0..n {
            let k1 = f(x);
            let k2 = f([x[0] + 0.5 * h * k1[0], x[1] + 0.5 * h * k1[1]]);
            let k3 = f([x[0] + 0.5 * h * k2[0], x[1] + 0.5 * h * k2[1]]);
            let k4 = f([x[0] + h * k3[0], x[1] + h * k3[1]]);
            for i in 0..2 {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        LipState::new(x[0], x[1])
    }

    #[test]
    fn lambda_values() {
        assert_relative_eq!(params().lambda(), 3.132_091_952_673_165, epsilon = 1e-12);
        let unit = LipParams::new(9.81, 9.81, 1.0).unwrap();
        assert_eq!(unit.lambda(), 1.0);
    }

    #[test]
    fn rejects_non_positive_parameters() {
        assert!(LipParams::new(9.81, 0.0, 0.4).is_err());
        assert!(LipParams::new(-1.0, 1.0, 0.4).is_err());
        assert!(LipParams::new(9.81, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn flow_trivial_cases() {
        let p = params();
        assert_eq!(p.flow(LipState::ZERO, 0.37), LipState::ZERO);
        let x0 = LipState::new(0.05, 0.28);
        assert_eq!(p.flow(x0, 0.0), x0);
    }

    #[test]
    fn flow_matches_rk4() {
        let p = params();
        let x0 = LipState::new(-0.06, 0.338);
        let exact = p.flow(x0, 0.4);
        let oracle = rk4(p.lambda(), x0, 0.4, 1e-5);
        assert!((exact.p - oracle.p).abs() < 1e-8);
        assert!((exact.v - oracle.v).abs() < 1e-8);
    }

    #[test]
    fn step_matrices_values() {
        let sm = params().step_matrices();
        // cosh(λT), sinh(λT)/λ, λ sinh(λT) evaluated in extended precision
        assert_relative_eq!(sm.flow[(0, 0)], 1.892_975_775_364_6, epsilon = 1e-9);
        assert_relative_eq!(sm.flow[(0, 1)], 0.513_165_833_719_2, epsilon = 1e-9);
        assert_relative_eq!(sm.flow[(1, 0)], 5.034_156_828_785_6, epsilon = 1e-9);
        assert_eq!(sm.flow[(1, 1)], sm.flow[(0, 0)]);
        assert!((sm.flow.determinant() - 1.0).abs() < 1e-12);
        assert_eq!(sm.a, sm.flow);
        assert_eq!(sm.b, -sm.flow.column(0).into_owned());
    }

    #[test]
    fn orbital_line_values() {
        let p = params();
        let lines = p.orbital_lines(0.0);
        assert_relative_eq!(lines.sigma1, 5.637_506_601_710_8, epsilon = 1e-9);
        assert_relative_eq!(lines.sigma2, 1.740_130_999_939_4, epsilon = 1e-9);
        assert_eq!(lines.d2, 0.0);
        assert_relative_eq!(p.orbital_lines(0.2).d2, 0.155_895_024_070_9, epsilon = 1e-9);
        assert_relative_eq!(lines.sigma1 * lines.sigma2, p.lambda().powi(2), epsilon = 1e-10);
    }

    #[test]
    fn p1_targets() {
        let p = params();
        let standing = p.p1_target(0.0);
        assert_eq!(standing.x_star, LipState::ZERO);
        assert_eq!(standing.u_star, 0.0);

        let t = p.p1_target(0.3);
        assert_relative_eq!(t.x_star.p, 0.06, epsilon = 1e-15);
        assert_relative_eq!(t.x_star.v, 0.338_250_396_102_6, epsilon = 1e-9);
        assert_relative_eq!(t.u_star, 0.12, epsilon = 1e-15);

        let post_impact = LipState::new(t.x_star.p - t.u_star, t.x_star.v);
        let back = p.flow(post_impact, p.step_duration());
        assert!((back.p - t.x_star.p).abs() < 1e-10);
        assert!((back.v - t.x_star.v).abs() < 1e-10);
    }

    fn two_step(p: &LipParams, targets: &P2Targets) -> LipState {
        let t = p.step_duration();
        let l = targets.left;
        let r = targets.right;
        let mid = p.flow(LipState::new(l.x_star.p - l.u_star, l.x_star.v), t);
        p.flow(LipState::new(mid.p - r.u_star, mid.v), t)
    }

    #[test]
    fn p2_targets_close_the_cycle() {
        let p = params();
        let s2 = p.orbital_lines(0.0).sigma2;

        let still = p.p2_targets(0.0, 0.3);
        assert_eq!(still.right.u_star, -0.3);
        assert_relative_eq!(still.left.x_star.p, 0.15);
        assert_relative_eq!(still.left.x_star.v, s2 * 0.15, epsilon = 1e-15);
        assert_relative_eq!(still.right.x_star.p, -0.15);
        assert_relative_eq!(still.right.x_star.v, -s2 * 0.15, epsilon = 1e-15);

        let zero = p.p2_targets(0.0, 0.0);
        assert_eq!(zero.left.x_star, LipState::ZERO);
        assert_eq!(zero.right.u_star, 0.0);

        let moving = p.p2_targets(0.2, 0.3);
        assert_relative_eq!(moving.right.u_star, -0.22, epsilon = 1e-15);
        assert!((moving.left.u_star + moving.right.u_star - 0.2 * 0.4).abs() < 1e-12);
        // right-landing step starts from the left-landing target's successor
        let end = two_step(&p, &moving);
        assert!((end.p - moving.left.x_star.p).abs() < 1e-10);
        assert!((end.v - moving.left.x_star.v).abs() < 1e-10);
        let mid = p.flow(
            LipState::new(moving.left.x_star.p - moving.left.u_star, moving.left.x_star.v),
            0.4,
        );
        assert!((mid.p - moving.right.x_star.p).abs() < 1e-10);
        assert!((mid.v - moving.right.x_star.v).abs() < 1e-10);
    }

    #[test]
    fn stance_selects_landing_target() {
        let t = params().p2_targets(0.0, 0.3);
        assert_eq!(t.for_stance(Side::Right).u_star, 0.3);
        assert_eq!(t.for_stance(Side::Left).u_star, -0.3);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn any_params() -> impl Strategy<Value = LipParams> {
            (5.0..15.0f64, 0.3..1.5f64, 0.1..1.0f64).prop_map(|(g, z, t)| LipParams::new(g, z, t).unwrap())
        }

        proptest! {
            #[test]
            fn flow_is_a_group(p in any_params(), x in -0.3..0.3f64, v in -1.0..1.0f64,
                               a in 0.0..1.0f64, b in 0.0..1.0f64) {
                let t = p.step_duration();
                let (t1, t2) = (2.0 * t * a, 2.0 * t * b);
                let x0 = LipState::new(x, v);
                let two = p.flow(p.flow(x0, t1), t2);
                let one = p.flow(x0, t1 + t2);
                let scale = 1.0 + one.p.abs().max(one.v.abs());
                prop_assert!((two.p - one.p).abs() < 1e-12 * scale);
                prop_assert!((two.v - one.v).abs() < 1e-12 * scale);
            }

            #[test]
            fn orbital_energy_is_conserved(p in any_params(), x in -0.3..0.3f64,
                                           v in -1.0..1.0f64, a in 0.0..2.0f64) {
                let x0 = LipState::new(x, v);
                let xt = p.flow(x0, a * p.step_duration());
                let l2 = p.lambda().powi(2);
                let e0 = x0.v * x0.v - l2 * x0.p * x0.p;
                let et = xt.v * xt.v - l2 * xt.p * xt.p;
                // cancellation between two terms of size ~v²
                let scale = 1.0 + xt.v * xt.v;
                prop_assert!((e0 - et).abs() < 1e-12 * scale);
            }

            #[test]
            fn p1_orbit_is_symmetric(p in any_params(), vel in -0.6..0.6f64) {
                let t = p.p1_target(vel);
                let end = p.flow(LipState::new(-t.x_star.p, t.x_star.v), p.step_duration());
                prop_assert!((end.p - t.x_star.p).abs() < 1e-10);
                prop_assert!((end.v - t.x_star.v).abs() < 1e-10);
            }

            #[test]
            fn p1_line_is_invariant(p in any_params(), x in -0.3..0.3f64) {
                // a state on v = σ1 p reflected through the impact lands on v = σ1 p again
                let s1 = p.orbital_lines(0.0).sigma1;
                let end = p.flow(LipState::new(-x, s1 * x), p.step_duration());
                prop_assert!((end.v - s1 * end.p).abs() < 1e-10);
            }

            #[test]
            fn slope_ordering(p in any_params()) {
                let lines = p.orbital_lines(0.0);
                prop_assert!(lines.sigma1 > p.lambda());
                prop_assert!(p.lambda() > lines.sigma2);
                prop_assert!(lines.sigma2 > 0.0);
                prop_assert!((lines.sigma1 * lines.sigma2 - p.lambda().powi(2)).abs() < 1e-10);
            }
        }
    }
}

use nalgebra::{DMatrix, DVector, Isometry3, Matrix2, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::log::{EpisodeLog, EventKind, PlaneRecord, StepRecord, TickRecord};
use super::{ticks_per_step, AdaptationSettings, LipSettings, SimError, DEFAULT_TICK};
use crate::ik_qp::{
    build_task_vector, integrate_reference, model_bounds, BoxQpSolver, IkProblem, Task, TaskGains, TaskSetpoint,
    DEFAULT_MAX_ITERATIONS, DEFAULT_ORIENTATION_GAIN, DEFAULT_POSITION_GAIN, DEFAULT_REGULARIZATION,
};
use crate::kinematics::{forward_kinematics, jacobian, FramePose, KinematicsState, RobotModel, Target};
use crate::stepper::{predict_preimpact, StepController, DEFAULT_PLACEMENT_LIMIT};
use crate::template::{LipState, Side, DEFAULT_U_LEFT_STAR};
use crate::trajgen::{make_swing_curve, TaskReference, DEFAULT_APEX};

const BASE_DOF: usize = 6;
const NEWTON_TOLERANCE: f64 = 1e-13;
const NEWTON_ITERATIONS: usize = 30;
const SETTLE_TOLERANCE: f64 = 1e-11;
const SETTLE_ITERATIONS: usize = 300;
const SETTLE_STEP_LIMIT: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FootFrames {
    pub left: String,
    pub right: String,
}

impl Default for FootFrames {
    fn default() -> Self {
        Self {
            left: "left_foot".into(),
            right: "right_foot".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WalkConfig {
    pub lip: LipSettings,
    pub steps: usize,
    pub v_x_d: f64,
    pub v_y_d: f64,
    pub u_left_star: f64,
    pub apex: f64,
    pub tick: f64,
    pub position_gain: f64,
    pub orientation_gain: f64,
    /// Row weights of the CoM task `(x, y, z, roll, pitch, yaw)`. Horizontal CoM
    /// motion is left to the passive ankles, so x and y default to zero.
    pub com_weights: [f64; 6],
    pub swing_weights: [f64; 6],
    /// Relative weight of the CoM task against the swing task.
    pub com_task_weight: f64,
    pub swing_task_weight: f64,
    pub regularization: f64,
    pub max_iterations: usize,
    pub placement_limit: f64,
    pub adaptation: AdaptationSettings,
    pub feet: FootFrames,
    /// Initial knee flexion used to seed the settling solve (rad).
    pub initial_knee: f64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            lip: LipSettings::default(),
            steps: 10,
            v_x_d: 0.1,
            v_y_d: 0.0,
            u_left_star: DEFAULT_U_LEFT_STAR,
            apex: DEFAULT_APEX,
            tick: DEFAULT_TICK,
            position_gain: DEFAULT_POSITION_GAIN,
            orientation_gain: DEFAULT_ORIENTATION_GAIN,
            com_weights: [0.0, 0.0, 1.0, 1.0, 1.0, 1.0],
            swing_weights: [1.0; 6],
            com_task_weight: 1.0,
            swing_task_weight: 1.0,
            regularization: DEFAULT_REGULARIZATION,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            placement_limit: DEFAULT_PLACEMENT_LIMIT,
            adaptation: AdaptationSettings::default(),
            feet: FootFrames::default(),
            initial_knee: 1.0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let params = self.lip.params()?;
        ticks_per_step(&params, self.tick)?;
        let bad = |m: &str| Err(SimError::Config(m.into()));
        if self.steps == 0 {
            return bad("steps must be at least 1");
        }
        if ![self.v_x_d, self.v_y_d, self.u_left_star, self.initial_knee]
            .iter()
            .all(|x| x.is_finite())
        {
            return bad("gait settings must be finite");
        }
        if !(self.apex.is_finite() && self.apex > 0.0) {
            return bad("apex must be finite and positive");
        }
        if !(self.position_gain >= 0.0 && self.orientation_gain >= 0.0)
            || !(self.position_gain + self.orientation_gain).is_finite()
        {
            return bad("task gains must be finite and non-negative");
        }
        let weights_ok = self
            .com_weights
            .iter()
            .chain(&self.swing_weights)
            .chain([&self.com_task_weight, &self.swing_task_weight])
            .all(|w| w.is_finite() && *w >= 0.0);
        if !weights_ok {
            return bad("task weights must be finite and non-negative");
        }
        if !(self.regularization.is_finite() && self.regularization >= 0.0) {
            return bad("regularization must be finite and non-negative");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        if !(self.placement_limit.is_finite() && self.placement_limit > 0.0) {
            return bad("placement_limit must be finite and positive");
        }
        self.adaptation.build(&params)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WalkSummary {
    pub steps: usize,
    /// Largest `max |q_k − q_{k+2}|` over revolute joints at pre-impact, for `k ≥ 6`.
    pub period2_metric: Option<f64>,
    pub period2_from_step: usize,
    pub com_height_max_deviation: f64,
    pub touchdown_max_error: f64,
    /// Largest swing-foot position residual over the second half of the episode.
    pub swing_residual_late: f64,
    pub max_kkt_residual: f64,
    pub unconverged_solves: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkOutcome {
    pub log: EpisodeLog,
    pub summary: WalkSummary,
    /// Pre-impact revolute joint configuration of every step.
    pub preimpact_joints: Vec<Vec<f64>>,
    /// Horizontal touchdown error per step (m).
    pub touchdown_errors: Vec<f64>,
    /// Wall-clock time of every QP solve (s); kept out of the log.
    pub solve_latencies: Vec<f64>,
}

struct Leg {
    frame: usize,
    ankles: [usize; 2],
}

struct Walker<'a> {
    model: &'a RobotModel,
    config: &'a WalkConfig,
    legs: [Leg; 2],
    joint_labels: Vec<String>,
    com_weights: DVector<f64>,
    swing_weights: DVector<f64>,
    gains: TaskGains,
}

fn leg_index(side: Side) -> usize {
    match side {
        Side::Left => 0,
        Side::Right => 1,
    }
}

struct Linearization {
    state: KinematicsState,
    /// Maps joint velocities to base twist so the stance foot stays still.
    contact: DMatrix<f64>,
    com: DMatrix<f64>,
    swing: DMatrix<f64>,
}

impl<'a> Walker<'a> {
    fn new(model: &'a RobotModel, config: &'a WalkConfig) -> Result<Self, SimError> {
        let base = model
            .floating_base()
            .ok_or_else(|| SimError::Config("walking needs a floating-base model".into()))?;
        if model.joints()[base].v_index != 0 || model.joints().iter().any(|j| j.v_index < BASE_DOF && j.nv() == 1) {
            return Err(SimError::Config(
                "the floating base must own the first six velocity coordinates".into(),
            ));
        }
        let mut legs = Vec::new();
        for name in [&config.feet.left, &config.feet.right] {
            let frame = model.frame_id(name)?;
            let chain = model.support(model.frame_joint(frame));
            let passive: Vec<usize> = chain.iter().copied().filter(|&j| model.joints()[j].passive).collect();
            if passive.len() != 2 {
                return Err(SimError::Config(format!(
                    "foot `{name}` needs exactly two passive joints in its chain, found {}",
                    passive.len()
                )));
            }
            legs.push(Leg {
                frame,
                ankles: [passive[0], passive[1]],
            });
        }
        let right = legs.pop().expect("two legs");
        let left = legs.pop().expect("two legs");
        let scaled = |w: &[f64; 6], s: f64| DVector::from_iterator(6, w.iter().map(|x| x * s));
        Ok(Self {
            model,
            config,
            legs: [left, right],
            joint_labels: model.v_labels()[BASE_DOF..].to_vec(),
            com_weights: scaled(&config.com_weights, config.com_task_weight),
            swing_weights: scaled(&config.swing_weights, config.swing_task_weight),
            gains: TaskGains::uniform(config.position_gain, config.orientation_gain),
        })
    }

    fn leg(&self, side: Side) -> &Leg {
        &self.legs[leg_index(side)]
    }

    fn n_joints(&self) -> usize {
        self.model.nv() - BASE_DOF
    }

    fn joint_column(&self, joint: usize) -> usize {
        self.model.joints()[joint].v_index - BASE_DOF
    }

    /// Moves the base so the stance foot sits exactly at `stance_pose`.
    fn place_base(&self, q: &mut DVector<f64>, stance: Side, stance_pose: &Isometry3<f64>) -> Result<(), SimError> {
        let state = forward_kinematics(self.model, q)?;
        let base = self.model.base_pose(q).expect("floating base checked");
        let foot_in_base = base.inverse() * state.frames[self.leg(stance).frame];
        self.model.set_base_pose(q, &(stance_pose * foot_in_base.inverse()));
        Ok(())
    }

    fn linearize(&self, q: &DVector<f64>, stance: Side) -> Result<Linearization, SimError> {
        let state = forward_kinematics(self.model, q)?;
        let nj = self.n_joints();
        let split = |j: DMatrix<f64>| {
            (
                j.columns(0, BASE_DOF).into_owned(),
                j.columns(BASE_DOF, nj).into_owned(),
            )
        };
        let (st_base, st_joints) = split(jacobian(self.model, &state, Target::Frame(self.leg(stance).frame)));
        let contact = -st_base
            .lu()
            .solve(&st_joints)
            .expect("stance Jacobian base block is always invertible");
        let reduce = |j: DMatrix<f64>| {
            let (b, r) = split(j);
            r + b * &contact
        };
        let com = reduce(jacobian(self.model, &state, Target::Com));
        let swing = reduce(jacobian(
            self.model,
            &state,
            Target::Frame(self.leg(stance.opposite()).frame),
        ));
        Ok(Linearization {
            state,
            contact,
            com,
            swing,
        })
    }

    fn full_velocity(&self, contact: &DMatrix<f64>, qdot_joints: &DVector<f64>) -> DVector<f64> {
        let base = contact * qdot_joints;
        DVector::from_iterator(self.model.nv(), base.iter().chain(qdot_joints.iter()).copied())
    }

    fn problem(&self, q: &DVector<f64>, tick: f64) -> IkProblem {
        let (vel, pos) = model_bounds(self.model, q, tick);
        let mut p = IkProblem::new(self.n_joints(), tick);
        p.velocity_bounds = vel[BASE_DOF..].to_vec();
        p.position_bounds = pos[BASE_DOF..].to_vec();
        p.labels = self.joint_labels.clone();
        p.regularization = self.config.regularization;
        p
    }

    /// Sets the stance ankles so the CoM sits horizontally at `target`, keeping the
    /// stance foot fixed and every other joint where it is.
    fn solve_ankles(
        &self,
        q: &mut DVector<f64>,
        stance: Side,
        stance_pose: &Isometry3<f64>,
        target: Vector2<f64>,
    ) -> Result<(), String> {
        let ankles = self.leg(stance).ankles;
        for _ in 0..NEWTON_ITERATIONS {
            self.place_base(q, stance, stance_pose).map_err(|e| e.to_string())?;
            let lin = self.linearize(q, stance).map_err(|e| e.to_string())?;
            let r = lin.state.com.xy() - target;
            if r.amax() <= NEWTON_TOLERANCE {
                return Ok(());
            }
            let (c0, c1) = (self.joint_column(ankles[0]), self.joint_column(ankles[1]));
            let j = Matrix2::new(lin.com[(0, c0)], lin.com[(0, c1)], lin.com[(1, c0)], lin.com[(1, c1)]);
            let delta = j
                .lu()
                .solve(&r)
                .ok_or_else(|| "stance ankles cannot move the CoM horizontally".to_string())?;
            q[self.model.joints()[ankles[0]].q_index] -= delta[0];
            q[self.model.joints()[ankles[1]].q_index] -= delta[1];
        }
        self.place_base(q, stance, stance_pose).map_err(|e| e.to_string())?;
        let com = forward_kinematics(self.model, q).map_err(|e| e.to_string())?.com;
        let r = (com.xy() - target).amax();
        if r <= 1e-9 {
            Ok(())
        } else {
            Err(format!("stance ankle solve did not converge (residual {r:e})"))
        }
    }

    /// Gauss-Newton on the same task stack with every CoM row active; finds a pose
    /// with the stance foot at the origin, the swing foot at `swing_target` and the
    /// CoM at `com_target`.
    fn settle(
        &self,
        stance: Side,
        com_target: Vector3<f64>,
        swing_target: Vector3<f64>,
    ) -> Result<DVector<f64>, SimError> {
        let m = self.model;
        let mut q = m.neutral_configuration();
        for j in m.joints() {
            let name = j.name.as_str();
            let guess = if name.ends_with("knee") {
                self.config.initial_knee
            } else if name.ends_with("hip_pitch") || name.ends_with("ankle_pitch") {
                -0.5 * self.config.initial_knee
            } else {
                continue;
            };
            q[j.q_index] = guess.clamp(j.position_limits.0, j.position_limits.1);
        }
        let stance_pose = Isometry3::identity();
        let pelvis_ref = TaskSetpoint::at_rest(com_target, UnitQuaternion::identity());
        let swing_ref = TaskSetpoint::at_rest(swing_target, UnitQuaternion::identity());
        let unit = TaskGains::uniform(1.0, 1.0);
        let mut solver = BoxQpSolver::new(self.config.max_iterations);
        for _ in 0..SETTLE_ITERATIONS {
            self.place_base(&mut q, stance, &stance_pose)?;
            let lin = self.linearize(&q, stance)?;
            let link = lin.state.link_pose(m.orientation_link());
            let com_pose = FramePose {
                position: lin.state.com,
                orientation: link.orientation,
            };
            let t_com = build_task_vector(&pelvis_ref, &com_pose, &unit);
            let t_sw = build_task_vector(
                &swing_ref,
                &lin.state.frame_pose(self.leg(stance.opposite()).frame),
                &unit,
            );
            if t_com.amax().max(t_sw.amax()) <= SETTLE_TOLERANCE {
                return Ok(q);
            }
            let mut p = self.problem(&q, 1.0);
            for b in p.velocity_bounds.iter_mut() {
                *b = (-SETTLE_STEP_LIMIT, SETTLE_STEP_LIMIT);
            }
            let p = p
                .with_task(Task::new(
                    "com",
                    lin.com.clone(),
                    DVector::from_column_slice(t_com.as_slice()),
                ))
                .with_task(Task::new(
                    "swing",
                    lin.swing.clone(),
                    DVector::from_column_slice(t_sw.as_slice()),
                ));
            let sol = solver.solve_tick(&p).map_err(|source| SimError::Ik {
                step: 0,
                t: 0.0,
                source,
            })?;
            let v = self.full_velocity(&lin.contact, &sol.qdot_d);
            q = integrate_reference(m, &q, &v, 1.0).q;
        }
        Err(SimError::Plant {
            step: 0,
            t: 0.0,
            message: "could not find an initial pose for the requested gait".into(),
        })
    }
}

fn revolute_values(model: &RobotModel, q: &DVector<f64>) -> Vec<f64> {
    model
        .joints()
        .iter()
        .filter(|j| j.nq() == 1)
        .map(|j| q[j.q_index])
        .collect()
}

fn arr(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// Kinematic walking loop.
///
/// Each 1 ms tick predicts the pre-impact LIP state, computes the placement,
/// retargets the swing curve, solves the IK QP over joint velocities (the floating
/// base is eliminated through the stance-foot contact), and advances the plant:
/// actuated joints follow the reference exactly, the CoM moves horizontally along
/// the exact LIP flow, and the passive stance ankles take whatever values realise
/// that CoM position. At `t = T` the stance swaps and the world frame is translated
/// onto the new stance foot.
pub fn run_kinematic_walk(model: &RobotModel, config: &WalkConfig) -> Result<WalkOutcome, SimError> {
    config.validate()?;
    let params = config.lip.params()?;
    let walker = Walker::new(model, config)?;
    let controller = StepController::new(params, config.placement_limit)?;
    let n_ticks = ticks_per_step(&params, config.tick)?;
    let dt = config.tick;
    let t_step = params.step_duration();
    let z0 = params.z0();
    let mut regulator = config.adaptation.build(&params)?;
    let updates = config.adaptation.updates(&params, dt);

    let p1 = params.p1_target(config.v_x_d);
    let p2 = params.p2_targets(config.v_y_d, config.u_left_star);

    // start of a right-stance step on the periodic orbit
    let mut stance = Side::Right;
    let prev_landing = p2.for_stance(Side::Left);
    let mut x_s = LipState::new(p1.x_star.p - p1.u_star, p1.x_star.v);
    let mut x_f = LipState::new(prev_landing.x_star.p - prev_landing.u_star, prev_landing.x_star.v);
    let swing_start = Vector3::new(-p1.u_star, -prev_landing.u_star, 0.0);
    let mut q = walker.settle(stance, Vector3::new(x_s.p, x_f.p, z0), swing_start)?;
    let mut stance_pose = Isometry3::identity();
    walker
        .solve_ankles(&mut q, stance, &stance_pose, Vector2::new(x_s.p, x_f.p))
        .map_err(|message| SimError::Plant {
            step: 0,
            t: 0.0,
            message,
        })?;

    let mut solver = BoxQpSolver::new(config.max_iterations);
    let mut log = EpisodeLog::default();
    let mut latencies = Vec::with_capacity(config.steps * n_ticks);
    let mut preimpact_joints = Vec::with_capacity(config.steps);
    let mut touchdown_errors = Vec::with_capacity(config.steps);
    let mut passive_rates = vec![0.0; model.nv()];
    let mut prev_hidden = None;
    let mut swing_p0 = swing_start - Vector3::new(0.0, 0.0, z0);
    let mut com_dev = 0.0f64;

    for k in 0..config.steps {
        let t0 = k as f64 * t_step;
        let com_start = forward_kinematics(model, &q)?.com;
        let target_f = *p2.for_stance(stance);
        let swing_side = stance.opposite();
        let swing_frame = walker.leg(swing_side).frame;
        let mut phi = 0.0;
        let mut curve = None;
        let mut cmd = (p1.u_star, target_f.u_star);
        let mut last_commands = None;

        for i in 0..n_ticks {
            let t_in = i as f64 * dt;
            let t = t0 + t_in;

            // placement from the predicted pre-impact state
            let pred_s = predict_preimpact(&params, x_s, t_in);
            let pred_f = predict_preimpact(&params, x_f, t_in);
            if pred_s.clamped || pred_f.clamped {
                log.event(k, t, EventKind::PredictionClamped, format!("elapsed {t_in}"));
            }
            if i == 0 {
                if let Some(reg) = regulator.as_ref() {
                    let act = reg.forward(pred_f.state, config.v_x_d, config.v_y_d);
                    phi = act.output;
                    prev_hidden = Some(act.hidden);
                }
            }
            let cmd_s = controller.command(pred_s.state, &p1, 0.0);
            let cmd_f = controller.command(pred_f.state, &target_f, phi);
            let (u_x, sat_x) = cmd_s.saturated(config.placement_limit);
            let (u_y, sat_y) = cmd_f.saturated(config.placement_limit);
            if sat_x || sat_y {
                log.event(
                    k,
                    t,
                    EventKind::PlacementSaturated,
                    format!("u ({}, {}) -> ({u_x}, {u_y})", cmd_s.u, cmd_f.u),
                );
            }
            cmd = (u_x, u_y);
            last_commands = Some((cmd_s, cmd_f, sat_x, sat_y));
            let curve = match curve.as_mut() {
                None => curve.insert(make_swing_curve(swing_p0, u_x, u_y, z0, config.apex, t_step)?),
                Some(c) => {
                    c.retarget_end(Vector3::new(u_x, u_y, -z0));
                    c
                }
            };
            let reference = TaskReference::new(z0, curve.clone());

            // task targets at the current tick
            let lin = walker.linearize(&q, stance)?;
            let sample = reference.swing_curve.eval(t_in);
            if sample.clamped {
                log.event(k, t, EventKind::CurveClamped, format!("t {t_in}"));
            }
            let lift = Vector3::new(0.0, 0.0, z0);
            let swing_ref = TaskSetpoint {
                position: sample.position + lift,
                velocity: sample.velocity,
                orientation: *reference.swing_rotation.quaternion(),
                angular_velocity: Vector3::zeros(),
            };
            let (height, height_rate) = reference.com.at(t_in);
            let com_ref = TaskSetpoint {
                position: Vector3::new(x_s.p, x_f.p, height),
                velocity: Vector3::new(x_s.v, x_f.v, height_rate),
                orientation: *reference.com.rotation.quaternion(),
                angular_velocity: Vector3::zeros(),
            };
            let com_pose = FramePose {
                position: lin.state.com,
                orientation: lin.state.link_pose(model.orientation_link()).orientation,
            };
            let t_com = build_task_vector(&com_ref, &com_pose, &walker.gains);
            let t_sw = build_task_vector(&swing_ref, &lin.state.frame_pose(swing_frame), &walker.gains);

            let mut problem = walker
                .problem(&q, dt)
                .with_task(
                    Task::new("com", lin.com.clone(), DVector::from_column_slice(t_com.as_slice()))
                        .with_weights(walker.com_weights.clone()),
                )
                .with_task(
                    Task::new("swing", lin.swing.clone(), DVector::from_column_slice(t_sw.as_slice()))
                        .with_weights(walker.swing_weights.clone()),
                );
            for &a in &walker.leg(stance).ankles {
                let j = &model.joints()[a];
                problem.fixed[j.v_index - BASE_DOF] = Some(passive_rates[j.v_index]);
            }
            let sol = solver
                .solve_tick(&problem)
                .map_err(|source| SimError::Ik { step: k, t, source })?;
            latencies.push(sol.solve_time);
            if !sol.converged {
                log.event(
                    k,
                    t,
                    EventKind::IkNotConverged,
                    format!("{} iterations", sol.iterations),
                );
            }
            let v_full = walker.full_velocity(&lin.contact, &sol.qdot_d);
            let integrated = integrate_reference(model, &q, &v_full, dt);
            for &j in &integrated.clamped {
                log.event(k, t, EventKind::JointLimitClamped, model.joints()[j].name.clone());
            }

            // plant: perfect joint tracking, CoM on the LIP flow, ankles follow
            let q_prev = q.clone();
            q = integrated.q.clone();
            x_s = params.flow(x_s, dt);
            x_f = params.flow(x_f, dt);
            walker
                .solve_ankles(&mut q, stance, &stance_pose, Vector2::new(x_s.p, x_f.p))
                .map_err(|message| SimError::Plant { step: k, t, message })?;
            for leg in &walker.legs {
                for &a in &leg.ankles {
                    let j = &model.joints()[a];
                    passive_rates[j.v_index] = (q[j.q_index] - q_prev[j.q_index]) / dt;
                }
            }

            let state = forward_kinematics(model, &q)?;
            let t_next = if i + 1 == n_ticks { t_step } else { (i + 1) as f64 * dt };
            let next_ref = reference.swing_curve.eval(t_next).position + lift;
            let swing_pos = state.frames[swing_frame].translation.vector;
            let com_residual = (state.com.z - height).abs();
            com_dev = com_dev.max(com_residual);
            log.ticks.push(TickRecord {
                t: t0 + t_next,
                step: k,
                stance,
                q: q.iter().copied().collect(),
                q_d: integrated.q.iter().copied().collect(),
                qdot_d: v_full.iter().copied().collect(),
                com: arr(&state.com),
                swing: arr(&swing_pos),
                swing_ref: arr(&next_ref),
                com_residual,
                swing_residual: (swing_pos - next_ref).norm(),
                kkt_residual: sol.kkt_residual,
                iterations: sol.iterations,
                converged: sol.converged,
            });
        }

        // impact
        let t_impact = t0 + t_step;
        let state = forward_kinematics(model, &q)?;
        let touchdown = state.frames[swing_frame].translation.vector;
        touchdown_errors.push((touchdown.xy() - Vector2::new(cmd.0, cmd.1)).norm());
        preimpact_joints.push(revolute_values(model, &q));
        let (cmd_s, cmd_f, sat_s, sat_f) = last_commands.expect("at least one tick per step");
        let mut weight_norm = 0.0;
        if let Some(reg) = regulator.as_mut() {
            if let Some(hidden) = prev_hidden.as_ref() {
                for _ in 0..updates {
                    if reg.delta_update(x_f, target_f.x_star, hidden).skipped {
                        log.event(
                            k,
                            t_impact,
                            EventKind::RegulatorUpdateSkipped,
                            "non-finite error signal",
                        );
                        break;
                    }
                }
            }
            weight_norm = reg.weight_norm();
        }
        log.steps.push(StepRecord {
            k,
            stance,
            t: t_impact,
            v_x_d: config.v_x_d,
            v_y_d: config.v_y_d,
            sagittal: PlaneRecord {
                state: x_s,
                target: p1.x_star,
                command: cmd_s,
                applied_u: cmd.0,
                saturated: sat_s,
            },
            frontal: PlaneRecord {
                state: x_f,
                target: target_f.x_star,
                command: cmd_f,
                applied_u: cmd.1,
                saturated: sat_f,
            },
            mean_velocity: [
                (state.com.x - com_start.x) / t_step,
                (state.com.y - com_start.y) / t_step,
            ],
            weight_norm,
        });
        log.event(
            k,
            t_impact,
            EventKind::Impact,
            format!(
                "{} touchdown at ({}, {})",
                swing_side.as_str(),
                touchdown.x,
                touchdown.y
            ),
        );

        // swap stance and translate the world onto the new stance foot
        let old_stance = state.frames[walker.leg(stance).frame].translation.vector - touchdown;
        let mut base = model.base_pose(&q).expect("floating base");
        base.translation.vector -= touchdown;
        model.set_base_pose(&mut q, &base);
        let moved = forward_kinematics(model, &q)?;
        stance = swing_side;
        stance_pose = moved.frames[walker.leg(stance).frame];
        x_s = LipState::new(moved.com.x, x_s.v);
        x_f = LipState::new(moved.com.y, x_f.v);
        swing_p0 = old_stance - Vector3::new(0.0, 0.0, z0);
    }

    let summary = summarize(&log, &preimpact_joints, &touchdown_errors, com_dev, config.steps);
    Ok(WalkOutcome {
        log,
        summary,
        preimpact_joints,
        touchdown_errors,
        solve_latencies: latencies,
    })
}

fn summarize(
    log: &EpisodeLog,
    preimpact: &[Vec<f64>],
    touchdown_errors: &[f64],
    com_height_max_deviation: f64,
    steps: usize,
) -> WalkSummary {
    const PERIOD2_FROM: usize = 6;
    let period2_metric = (PERIOD2_FROM..preimpact.len().saturating_sub(2))
        .map(|k| {
            preimpact[k]
                .iter()
                .zip(&preimpact[k + 2])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .reduce(f64::max);
    let late = log.ticks.len() / 2;
    WalkSummary {
        steps,
        period2_metric,
        period2_from_step: PERIOD2_FROM,
        com_height_max_deviation,
        touchdown_max_error: touchdown_errors.iter().copied().fold(0.0, f64::max),
        swing_residual_late: log.ticks[late..].iter().map(|t| t.swing_residual).fold(0.0, f64::max),
        max_kkt_residual: log.ticks.iter().map(|t| t.kkt_residual).fold(0.0, f64::max),
        unconverged_solves: log.ticks.iter().filter(|t| !t.converged).count(),
    }
}

use nalgebra::{DMatrix, DVector, Isometry3, Matrix3, Quaternion, Translation3, UnitQuaternion, Vector3};

use super::model::{JointKind, ModelError, RobotModel};
use super::FramePose;

/// Jacobian target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// Whole-body centre of mass; angular rows follow the pelvis link.
    Com,
    Frame(usize),
}

/// Forward-kinematics result for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicsState {
    /// World pose of each joint's link frame (after the joint motion).
    pub links: Vec<Isometry3<f64>>,
    /// World joint axis per joint; zero for the floating base.
    pub axes: Vec<Vector3<f64>>,
    pub frames: Vec<Isometry3<f64>>,
    /// World CoM of each link.
    pub link_coms: Vec<Vector3<f64>>,
    pub com: Vector3<f64>,
    /// Revolute joints found outside their position limits.
    pub limit_violations: Vec<usize>,
}

impl KinematicsState {
    pub fn frame_pose(&self, frame: usize) -> FramePose {
        let iso = &self.frames[frame];
        FramePose {
            position: iso.translation.vector,
            orientation: iso.rotation,
        }
    }

    pub fn link_pose(&self, joint: usize) -> FramePose {
        let iso = &self.links[joint];
        FramePose {
            position: iso.translation.vector,
            orientation: iso.rotation,
        }
    }
}

pub fn forward_kinematics(model: &RobotModel, q: &DVector<f64>) -> Result<KinematicsState, ModelError> {
    model.check_configuration(q)?;
    let joints = model.joints();
    let n = joints.len();
    let mut links = vec![Isometry3::identity(); n];
    let mut axes = vec![Vector3::zeros(); n];
    let mut limit_violations = Vec::new();

    for &i in &model.order {
        let j = &joints[i];
        let parent = j.parent.map(|p| links[p]).unwrap_or_else(Isometry3::identity);
        links[i] = match j.kind {
            JointKind::Floating => {
                let k = j.q_index;
                let rot = UnitQuaternion::new_normalize(Quaternion::new(q[k + 3], q[k + 4], q[k + 5], q[k + 6]));
                let base = Isometry3::from_parts(Translation3::new(q[k], q[k + 1], q[k + 2]), rot);
                base * j.origin
            }
            JointKind::Revolute => {
                let angle = q[j.q_index];
                let (lo, hi) = j.position_limits;
                if angle < lo || angle > hi {
                    limit_violations.push(i);
                }
                let placed = parent * j.origin;
                axes[i] = placed.rotation * j.axis.into_inner();
                placed * UnitQuaternion::from_axis_angle(&j.axis, angle)
            }
        };
    }

    let frames = model.frames.iter().map(|f| links[f.joint] * f.offset).collect();
    let link_coms: Vec<Vector3<f64>> = joints
        .iter()
        .zip(&links)
        .map(|(j, l)| l.transform_point(&j.com.into()).coords)
        .collect();
    let com = joints
        .iter()
        .zip(&link_coms)
        .fold(Vector3::zeros(), |acc, (j, c)| acc + c * j.mass)
        / model.total_mass();

    Ok(KinematicsState {
        links,
        axes,
        frames,
        link_coms,
        com,
        limit_violations,
    })
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Adds `scale` times the point Jacobian of `point` (rigidly attached to `joint`)
/// into the linear rows, and optionally the angular rows.
fn accumulate(
    model: &RobotModel,
    state: &KinematicsState,
    joint: usize,
    point: &Vector3<f64>,
    scale: f64,
    angular: bool,
    out: &mut DMatrix<f64>,
) {
    let joints = model.joints();
    for &k in model.support(joint) {
        let jk = &joints[k];
        let c = jk.v_index;
        match jk.kind {
            JointKind::Revolute => {
                let a = state.axes[k];
                let r = point - state.links[k].translation.vector;
                let lin = a.cross(&r) * scale;
                for row in 0..3 {
                    out[(row, c)] += lin[row];
                    if angular {
                        out[(row + 3, c)] += a[row];
                    }
                }
            }
            JointKind::Floating => {
                let base = (state.links[k] * jk.origin.inverse()).translation.vector;
                let r = point - base;
                let lin_w = -skew(&r) * scale;
                for row in 0..3 {
                    out[(row, c + row)] += scale;
                    for col in 0..3 {
                        out[(row, c + 3 + col)] += lin_w[(row, col)];
                    }
                    if angular {
                        out[(row + 3, c + 3 + row)] += 1.0;
                    }
                }
            }
        }
    }
}

/// Geometric 6×nv Jacobian of `target` at the configuration that produced `state`.
pub fn jacobian(model: &RobotModel, state: &KinematicsState, target: Target) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(6, model.nv());
    match target {
        Target::Frame(f) => {
            let joint = model.frame_joint(f);
            let p = state.frames[f].translation.vector;
            accumulate(model, state, joint, &p, 1.0, true, &mut out);
        }
        Target::Com => {
            let total = model.total_mass();
            for (i, j) in model.joints().iter().enumerate() {
                if j.mass > 0.0 {
                    accumulate(model, state, i, &state.link_coms[i], j.mass / total, false, &mut out);
                }
            }
            let link = model.orientation_link();
            let mut ang = DMatrix::zeros(6, model.nv());
            accumulate(model, state, link, &Vector3::zeros(), 0.0, true, &mut ang);
            out.rows_mut(3, 3).copy_from(&ang.rows(3, 3));
        }
    }
    out
}

/// Unclamped configuration update `q ⊕ v·dt`; the base rotation is advanced by the
/// world-frame exponential map and renormalised.
pub fn integrate_configuration(model: &RobotModel, q: &DVector<f64>, v: &DVector<f64>, dt: f64) -> DVector<f64> {
    let mut out = q.clone();
    for j in model.joints() {
        match j.kind {
            JointKind::Revolute => out[j.q_index] += v[j.v_index] * dt,
            JointKind::Floating => {
                let (k, c) = (j.q_index, j.v_index);
                for a in 0..3 {
                    out[k + a] += v[c + a] * dt;
                }
                let rot = UnitQuaternion::new_normalize(Quaternion::new(q[k + 3], q[k + 4], q[k + 5], q[k + 6]));
                let w = Vector3::new(v[c + 3], v[c + 4], v[c + 5]) * dt;
                let next = UnitQuaternion::new_normalize((UnitQuaternion::from_scaled_axis(w) * rot).into_inner());
                let nq = next.quaternion();
                out[k + 3] = nq.w;
                out[k + 4] = nq.i;
                out[k + 5] = nq.j;
                out[k + 6] = nq.k;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_configuration(model: &RobotModel, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let mut q = model.neutral_configuration();
        for j in model.joints() {
            match j.kind {
                JointKind::Revolute => {
                    let (lo, hi) = j.position_limits;
                    q[j.q_index] = rng.random_range(lo..=hi);
                }
                JointKind::Floating => {
                    let k = j.q_index;
                    for a in 0..3 {
                        q[k + a] = rng.random_range(-1.0..1.0);
                    }
                    let r = UnitQuaternion::from_euler_angles(
                        rng.random_range(-3.0..3.0),
                        rng.random_range(-1.5..1.5),
                        rng.random_range(-3.0..3.0),
                    );
                    let rq = r.quaternion();
                    q[k + 3] = rq.w;
                    q[k + 4] = rq.i;
                    q[k + 5] = rq.j;
                    q[k + 6] = rq.k;
                }
            }
        }
        q
    }

    fn twist(before: &Isometry3<f64>, after_plus: &Isometry3<f64>, after_minus: &Isometry3<f64>, h: f64) -> [f64; 6] {
        let lin = (after_plus.translation.vector - after_minus.translation.vector) / (2.0 * h);
        let wp = (after_plus.rotation * before.rotation.inverse()).scaled_axis();
        let wm = (after_minus.rotation * before.rotation.inverse()).scaled_axis();
        let ang = (wp - wm) / (2.0 * h);
        [lin.x, lin.y, lin.z, ang.x, ang.y, ang.z]
    }

    fn finite_difference(model: &RobotModel, q: &DVector<f64>, target: Target) -> DMatrix<f64> {
        let h = 1e-6;
        let base = forward_kinematics(model, q).unwrap();
        let pose_of = |s: &KinematicsState| match target {
            Target::Frame(f) => s.frames[f],
            Target::Com => Isometry3::from_parts(Translation3::from(s.com), s.links[model.orientation_link()].rotation),
        };
        let mut out = DMatrix::zeros(6, model.nv());
        for c in 0..model.nv() {
            let mut e = DVector::zeros(model.nv());
            e[c] = 1.0;
            let plus = forward_kinematics(model, &integrate_configuration(model, q, &e, h)).unwrap();
            let minus = forward_kinematics(model, &integrate_configuration(model, q, &e, -h)).unwrap();
            let col = twist(&pose_of(&base), &pose_of(&plus), &pose_of(&minus), h);
            for r in 0..6 {
                out[(r, c)] = col[r];
            }
        }
        out
    }

    #[test]
    fn pendulum_home_pose() {
        let m = RobotModel::pendulum();
        let s = forward_kinematics(&m, &DVector::zeros(1)).unwrap();
        let f = m.frame_id("swing_foot").unwrap();
        assert_relative_eq!(s.frames[f].translation.vector, Vector3::new(0.0, 0.0, -1.0));
        assert_relative_eq!(s.com, Vector3::new(0.0, 0.0, -1.0));
    }

    #[test]
    fn pendulum_jacobian_matches_single_revolute_form() {
        let m = RobotModel::pendulum();
        let s = forward_kinematics(&m, &DVector::zeros(1)).unwrap();
        let f = m.frame_id("swing_foot").unwrap();
        let jac = jacobian(&m, &s, Target::Frame(f));
        let axis = Vector3::y();
        // r runs from the joint to the frame
        let r = Vector3::new(0.0, 0.0, -1.0);
        let lin = axis.cross(&r);
        for i in 0..3 {
            assert_relative_eq!(jac[(i, 0)], lin[i], epsilon = 1e-15);
            assert_relative_eq!(jac[(i + 3, 0)], axis[i], epsilon = 1e-15);
        }
        assert_relative_eq!(jac[(0, 0)], -1.0, epsilon = 1e-15);
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for model in [RobotModel::reduced_biped(), RobotModel::pendulum()] {
            let mut targets = vec![Target::Com];
            targets.extend((0..model.frame_names().count()).map(Target::Frame));
            for _ in 0..100 {
                let q = random_configuration(&model, &mut rng);
                let s = forward_kinematics(&model, &q).unwrap();
                for &t in &targets {
                    let analytic = jacobian(&model, &s, t);
                    let numeric = finite_difference(&model, &q, t);
                    let worst = (analytic - numeric).abs().max();
                    assert!(worst <= 1e-6, "{t:?}: {worst:e}");
                }
            }
        }
    }

    #[test]
    fn passive_columns_are_kept() {
        let m = RobotModel::reduced_biped();
        let s = forward_kinematics(&m, &m.neutral_configuration()).unwrap();
        let f = m.frame_id("left_foot").unwrap();
        let jac = jacobian(&m, &s, Target::Frame(f));
        assert_eq!(jac.shape(), (6, 18));
        for p in m.passive_joints() {
            let c = m.joints()[p].v_index;
            if m.support(m.frame_joint(f)).contains(&p) {
                assert!(jac.column(c).norm() > 0.0);
            }
        }
    }

    #[test]
    fn com_matches_brute_force_sum() {
        let m = RobotModel::reduced_biped();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let q = random_configuration(&m, &mut rng);
            let s = forward_kinematics(&m, &q).unwrap();
            // independent walk: rebuild each link pose from its own ancestor chain
            let mut weighted = Vector3::zeros();
            let mut mass = 0.0;
            for (i, j) in m.joints().iter().enumerate() {
                let mut pose = Isometry3::identity();
                for &k in m.support(i) {
                    let jk = &m.joints()[k];
                    pose = match jk.kind {
                        JointKind::Floating => m.base_pose(&q).unwrap() * jk.origin,
                        JointKind::Revolute => {
                            pose * jk.origin * UnitQuaternion::from_axis_angle(&jk.axis, q[jk.q_index])
                        }
                    };
                }
                weighted += pose.transform_point(&j.com.into()).coords * j.mass;
                mass += j.mass;
            }
            assert!((s.com - weighted / mass).norm() <= 1e-12);
        }
    }

    #[test]
    fn base_translation_moves_everything_equally() {
        let m = RobotModel::reduced_biped();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = random_configuration(&m, &mut rng);
        let shift = Vector3::new(0.3, -0.7, 0.05);
        let mut moved = q.clone();
        for a in 0..3 {
            moved[a] += shift[a];
        }
        let s0 = forward_kinematics(&m, &q).unwrap();
        let s1 = forward_kinematics(&m, &moved).unwrap();
        for (a, b) in s0.frames.iter().zip(&s1.frames) {
            assert!((b.translation.vector - a.translation.vector - shift).norm() < 1e-14);
            assert!(a.rotation.angle_to(&b.rotation) < 1e-14);
        }
        assert!((s1.com - s0.com - shift).norm() < 1e-14);
    }

    #[test]
    fn non_finite_configuration_is_rejected() {
        let m = RobotModel::pendulum();
        let q = DVector::from_element(1, f64::NAN);
        assert!(matches!(forward_kinematics(&m, &q), Err(ModelError::NonFinite(0))));
    }

    #[test]
    fn limit_violations_are_flagged() {
        let m = RobotModel::reduced_biped();
        let mut q = m.neutral_configuration();
        let knee = m.joint_id("left_knee").unwrap();
        q[m.joints()[knee].q_index] = -0.5;
        let s = forward_kinematics(&m, &q).unwrap();
        assert_eq!(s.limit_violations, vec![knee]);
    }

    #[test]
    fn integration_keeps_unit_quaternion() {
        let m = RobotModel::reduced_biped();
        let mut q = m.neutral_configuration();
        let mut v = DVector::zeros(m.nv());
        v[3] = 3.0;
        v[4] = -2.0;
        v[5] = 1.0;
        for _ in 0..10_000 {
            q = integrate_configuration(&m, &q, &v, 1e-3);
        }
        let norm = q.rows(3, 4).norm();
        assert!((norm - 1.0).abs() <= 1e-10);
    }
}

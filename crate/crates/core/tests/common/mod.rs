//! Shared oracles: random box-constrained QPs with an independent projected-gradient
//! solver, and finite-difference Jacobians.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Isometry3, Translation3, UnitQuaternion};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use steplab::ik_qp::{IkProblem, Task};
use steplab::kinematics::{
    forward_kinematics, integrate_configuration, jacobian, JointKind, KinematicsState, RobotModel, Target,
};

pub fn random_problem(rng: &mut ChaCha8Rng, n: usize) -> IkProblem {
    let mut problem = IkProblem::new(n, 1e-3);
    let tasks = rng.random_range(1..=2);
    for t in 0..tasks {
        // Enough rows overall that the Hessian stays well conditioned.
        let rows = if t == 0 {
            n + rng.random_range(3..=6)
        } else {
            rng.random_range(1..=4)
        };
        let jacobian = DMatrix::from_fn(rows, n, |_, _| rng.random_range(-1.0..1.0));
        let target = DVector::from_fn(rows, |_, _| rng.random_range(-2.0..2.0));
        let weights = DVector::from_fn(rows, |_, _| rng.random_range(0.5..2.0));
        problem = problem.with_task(Task::new(format!("task{t}"), jacobian, target).with_weights(weights));
    }
    for i in 0..n {
        let lo = rng.random_range(-1.5..-0.05);
        let hi = rng.random_range(0.05..1.5);
        problem.velocity_bounds[i] = (lo, hi);
        if rng.random_bool(0.3) {
            let plo = rng.random_range(-2.0..-0.01);
            let phi = rng.random_range(0.01..2.0);
            problem.position_bounds[i] = (plo, phi);
        }
        if rng.random_bool(0.15) {
            let (l, h) = box_of(&problem, i);
            problem.fixed[i] = Some(rng.random_range(l..h));
        }
    }
    problem
}

fn box_of(problem: &IkProblem, i: usize) -> (f64, f64) {
    let (vl, vh) = problem.velocity_bounds[i];
    let (pl, ph) = problem.position_bounds[i];
    (vl.max(pl), vh.min(ph))
}

/// Accelerated projected gradient with restarts, run to machine precision.
pub fn projected_gradient(problem: &IkProblem) -> DVector<f64> {
    let n = problem.dim();
    let mut h = DMatrix::identity(n, n) * problem.regularization;
    let mut c = DVector::zeros(n);
    for task in &problem.tasks {
        let w = DMatrix::from_diagonal(&task.weights);
        h += task.jacobian.transpose() * &w * &task.jacobian;
        c -= task.jacobian.transpose() * (&w * &task.target);
    }
    let (lo, hi): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|i| match problem.fixed[i] {
            Some(v) => (v, v),
            None => box_of(problem, i),
        })
        .unzip();
    let project = |x: &DVector<f64>| DVector::from_fn(n, |i, _| x[i].clamp(lo[i], hi[i]));
    let lipschitz = h.clone().symmetric_eigenvalues().max();
    let step = 1.0 / lipschitz;

    let mut x = project(&DVector::zeros(n));
    let mut y = x.clone();
    let mut momentum = 1.0f64;
    for _ in 0..500_000 {
        // Gradient-mapping norm; zero exactly at the constrained minimiser.
        if (&x - project(&(&x - (&h * &x + &c) * step))).amax() < 1e-14 {
            break;
        }
        let next = project(&(&y - (&h * &y + &c) * step));
        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let objective = |v: &DVector<f64>| 0.5 * v.dot(&(&h * v)) + c.dot(v);
        if objective(&next) > objective(&x) {
            if momentum == 1.0 {
                // A plain step no longer decreases the objective: rounding floor.
                break;
            }
            // Restart the momentum when it overshoots.
            y = x.clone();
            momentum = 1.0;
            continue;
        }
        y = &next + (&next - &x) * ((momentum - 1.0) / next_momentum);
        momentum = next_momentum;
        x = next;
    }
    x
}

pub fn random_configuration(model: &RobotModel, rng: &mut ChaCha8Rng) -> DVector<f64> {
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

/// Central differences of the target pose along each velocity coordinate, with the
/// angular part taken as the world-frame rotation vector.
pub fn finite_difference_jacobian(model: &RobotModel, q: &DVector<f64>, target: Target) -> DMatrix<f64> {
    let h = 1e-6;
    let pose_of = |s: &KinematicsState| match target {
        Target::Frame(f) => s.frames[f],
        Target::Com => Isometry3::from_parts(Translation3::from(s.com), s.links[model.orientation_link()].rotation),
    };
    let base = pose_of(&forward_kinematics(model, q).unwrap());
    let mut out = DMatrix::zeros(6, model.nv());
    for c in 0..model.nv() {
        let mut e = DVector::zeros(model.nv());
        e[c] = 1.0;
        let plus = pose_of(&forward_kinematics(model, &integrate_configuration(model, q, &e, h)).unwrap());
        let minus = pose_of(&forward_kinematics(model, &integrate_configuration(model, q, &e, -h)).unwrap());
        let lin = (plus.translation.vector - minus.translation.vector) / (2.0 * h);
        let wp = (plus.rotation * base.rotation.inverse()).scaled_axis();
        let wm = (minus.rotation * base.rotation.inverse()).scaled_axis();
        let ang = (wp - wm) / (2.0 * h);
        out.view_mut((0, c), (3, 1)).copy_from(&lin);
        out.view_mut((3, c), (3, 1)).copy_from(&ang);
    }
    out
}

/// Largest entrywise gap between analytic and finite-difference Jacobians over
/// `samples` random configurations and every frame plus the CoM.
pub fn worst_jacobian_gap(model: &RobotModel, samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut targets = vec![Target::Com];
    targets.extend(model.frame_names().map(|n| Target::Frame(model.frame_id(n).unwrap())));
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let q = random_configuration(model, rng);
        let state = forward_kinematics(model, &q).unwrap();
        for &t in &targets {
            let analytic = jacobian(model, &state, t);
            let numeric = finite_difference_jacobian(model, &q, t);
            worst = worst.max((analytic - numeric).amax());
        }
    }
    worst
}

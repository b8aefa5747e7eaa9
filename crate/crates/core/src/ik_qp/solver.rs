use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::{kkt, IkError, IkProblem, IkSolution, DEFAULT_MAX_ITERATIONS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Free,
    Lower,
    Upper,
    Fixed,
}

/// Primal active-set solver for the tick QP.
///
/// Keeps the previous solution as a warm start; instances are independent.
#[derive(Debug, Clone)]
pub struct BoxQpSolver {
    max_iterations: usize,
    warm: Option<DVector<f64>>,
}

impl Default for BoxQpSolver {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_ITERATIONS)
    }
}

impl BoxQpSolver {
    pub fn new(max_iterations: usize) -> Self {
        Self {
            max_iterations: max_iterations.max(1),
            warm: None,
        }
    }

    pub fn reset(&mut self) {
        self.warm = None;
    }

    pub fn solve_tick(&mut self, problem: &IkProblem) -> Result<IkSolution, IkError> {
        let started = Instant::now();
        let bounds = problem.bounds()?;
        let (h, c) = problem.quadratic_form();
        let n = problem.dim();
        let (lo, hi) = (&bounds.lower, &bounds.upper);

        let mut x = match &self.warm {
            Some(w) if w.len() == n => w.clone(),
            _ => DVector::zeros(n),
        };
        let mut status = vec![Status::Free; n];
        for i in 0..n {
            if lo[i] == hi[i] {
                x[i] = lo[i];
                status[i] = Status::Fixed;
            } else if x[i] <= lo[i] {
                x[i] = lo[i];
                status[i] = Status::Lower;
            } else if x[i] >= hi[i] {
                x[i] = hi[i];
                status[i] = Status::Upper;
            }
        }

        let tol = 1e-12 * (1.0 + c.amax());
        let mut converged = false;
        let mut iterations = 0;
        while iterations < self.max_iterations {
            iterations += 1;
            let free: Vec<usize> = (0..n).filter(|&i| status[i] == Status::Free).collect();
            if !free.is_empty() {
                let m = free.len();
                let mut hff = DMatrix::zeros(m, m);
                let mut rhs = DVector::zeros(m);
                for (a, &i) in free.iter().enumerate() {
                    let mut r = -c[i];
                    for j in 0..n {
                        if status[j] != Status::Free {
                            r -= h[(i, j)] * x[j];
                        }
                    }
                    rhs[a] = r;
                    for (b, &j) in free.iter().enumerate() {
                        hff[(a, b)] = h[(i, j)];
                    }
                }
                let y = match hff.clone().cholesky() {
                    Some(ch) => ch.solve(&rhs),
                    None => hff.lu().solve(&rhs).ok_or(IkError::NonFinite("singular Hessian"))?,
                };
                // longest feasible step toward the subspace minimiser
                let mut alpha = 1.0;
                let mut blocking = None;
                for (a, &i) in free.iter().enumerate() {
                    let d = y[a] - x[i];
                    if y[a] < lo[i] && d < 0.0 {
                        let t = (lo[i] - x[i]) / d;
                        if t < alpha {
                            alpha = t;
                            blocking = Some((i, Status::Lower));
                        }
                    } else if y[a] > hi[i] && d > 0.0 {
                        let t = (hi[i] - x[i]) / d;
                        if t < alpha {
                            alpha = t;
                            blocking = Some((i, Status::Upper));
                        }
                    }
                }
                for (a, &i) in free.iter().enumerate() {
                    x[i] = (x[i] + alpha * (y[a] - x[i])).clamp(lo[i], hi[i]);
                }
                if let Some((i, s)) = blocking {
                    status[i] = s;
                    x[i] = if s == Status::Lower { lo[i] } else { hi[i] };
                    continue;
                }
            }
            let g = &h * &x + &c;
            let mut release = None;
            let mut worst = -tol;
            for i in 0..n {
                let multiplier = match status[i] {
                    Status::Lower => g[i],
                    Status::Upper => -g[i],
                    _ => continue,
                };
                if multiplier < worst {
                    worst = multiplier;
                    release = Some(i);
                }
            }
            match release {
                Some(i) => status[i] = Status::Free,
                None => {
                    converged = true;
                    break;
                }
            }
        }

        let report = kkt::verify(problem, &x)?;
        let active_bounds = (0..n)
            .filter(|&i| matches!(status[i], Status::Lower | Status::Upper))
            .collect();
        self.warm = Some(x.clone());
        Ok(IkSolution {
            objective_value: problem.objective(&x),
            qdot_d: x,
            kkt_residual: report.residual,
            iterations,
            solve_time: started.elapsed().as_secs_f64(),
            converged,
            active_bounds,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::Task;
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
    }

    #[test]
    fn unconstrained_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let n = 6;
            let j1 = random_matrix(&mut rng, 6, n);
            let j2 = random_matrix(&mut rng, 6, n);
            let t1 = random_vector(&mut rng, 6, 1.0);
            let t2 = random_vector(&mut rng, 6, 1.0);
            let mut p = IkProblem::new(n, 1e-3)
                .with_task(Task::new("com", j1.clone(), t1.clone()))
                .with_task(Task::new("swing", j2.clone(), t2.clone()));
            p.regularization = 0.0;
            let sol = BoxQpSolver::default().solve_tick(&p).unwrap();
            // oracle: stacked least squares through the normal equations
            let a = DMatrix::from_fn(12, n, |r, c| if r < 6 { j1[(r, c)] } else { j2[(r - 6, c)] });
            let b = DVector::from_fn(12, |r, _| if r < 6 { t1[r] } else { t2[r - 6] });
            let oracle = (a.transpose() * &a).lu().solve(&(a.transpose() * b)).unwrap();
            assert!((sol.qdot_d - oracle).amax() <= 1e-8);
            assert!(sol.converged);
            assert!(sol.kkt_residual <= 1e-8);
        }
    }

    #[test]
    fn fully_clamped_problem() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 5;
        let t1 = random_vector(&mut rng, 6, 1.0);
        let t2 = random_vector(&mut rng, 6, 1.0);
        let mut p = IkProblem::new(n, 1e-3)
            .with_task(Task::new("com", random_matrix(&mut rng, 6, n), t1.clone()))
            .with_task(Task::new("swing", random_matrix(&mut rng, 6, n), t2.clone()));
        p.velocity_bounds = vec![(0.0, 0.0); n];
        let sol = BoxQpSolver::default().solve_tick(&p).unwrap();
        assert!(sol.qdot_d.iter().all(|&v| v == 0.0));
        assert_relative_eq!(
            sol.objective_value,
            t1.norm_squared() + t2.norm_squared(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn scalar_clamp() {
        let mut p = IkProblem::new(1, 1e-3).with_task(Task::new(
            "t",
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 2.0),
        ));
        p.velocity_bounds[0] = (-1.0, 1.0);
        let sol = BoxQpSolver::default().solve_tick(&p).unwrap();
        assert_eq!(sol.qdot_d[0], 1.0);
        assert_eq!(sol.active_bounds, vec![0]);
    }

    #[test]
    fn passive_entries_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 7;
        let mut p = IkProblem::new(n, 1e-3).with_task(Task::new(
            "com",
            random_matrix(&mut rng, 6, n),
            random_vector(&mut rng, 6, 1.0),
        ));
        p.fixed[2] = Some(0.123_456_789);
        p.fixed[5] = Some(-0.5);
        let sol = BoxQpSolver::default().solve_tick(&p).unwrap();
        assert_eq!(sol.qdot_d[2], 0.123_456_789);
        assert_eq!(sol.qdot_d[5], -0.5);
    }

    #[test]
    fn warm_start_gives_same_answer() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 8;
        let mut p = IkProblem::new(n, 1e-3).with_task(Task::new(
            "a",
            random_matrix(&mut rng, 6, n),
            random_vector(&mut rng, 6, 3.0),
        ));
        p.velocity_bounds = vec![(-0.5, 0.5); n];
        let mut solver = BoxQpSolver::default();
        let cold = solver.solve_tick(&p).unwrap();
        let warm = solver.solve_tick(&p).unwrap();
        assert!((cold.qdot_d - &warm.qdot_d).amax() < 1e-12);
        assert!(warm.iterations <= 2);
    }

    #[test]
    fn iteration_cap_returns_feasible_iterate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 8;
        let mut p = IkProblem::new(n, 1e-3).with_task(Task::new(
            "a",
            random_matrix(&mut rng, 6, n),
            random_vector(&mut rng, 6, 10.0),
        ));
        p.velocity_bounds = vec![(-0.1, 0.1); n];
        let sol = BoxQpSolver::new(1).solve_tick(&p).unwrap();
        assert!(sol.qdot_d.iter().all(|v| v.abs() <= 0.1));
        if !sol.converged {
            assert_eq!(sol.iterations, 1);
        }
    }
}

//! Optimality certificate computed from the problem data alone.

use nalgebra::DVector;

use super::{IkError, IkProblem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// Largest stationarity/complementarity violation, `|x − P(x − ∇f)|`, over
    /// coordinates that are not fixed.
    pub stationarity: f64,
    /// Largest bound violation.
    pub primal: f64,
    /// Largest deviation of a fixed coordinate from its prescribed value.
    pub fixed: f64,
    pub residual: f64,
}

/// Checks a candidate against the first-order conditions of `problem`.
///
/// The gradient is rebuilt task by task (`Σ Jᵀ W (J q̇ − T) + ρ q̇`), independently
/// of the solver's dense Hessian.
pub fn verify(problem: &IkProblem, qdot: &DVector<f64>) -> Result<KktReport, IkError> {
    let bounds = problem.bounds()?;
    let mut grad = qdot * problem.regularization;
    for t in &problem.tasks {
        let weighted = t.residual(qdot).component_mul(&t.weights);
        grad += t.jacobian.tr_mul(&weighted);
    }
    let (mut stationarity, mut primal, mut fixed) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..problem.dim() {
        let (lo, hi, x) = (bounds.lower[i], bounds.upper[i], qdot[i]);
        primal = primal.max(lo - x).max(x - hi);
        if let Some(v) = problem.fixed[i] {
            fixed = fixed.max((x - v).abs());
            continue;
        }
        if lo == hi {
            continue;
        }
        let projected = (x - grad[i]).clamp(lo, hi);
        stationarity = stationarity.max((x - projected).abs());
    }
    Ok(KktReport {
        stationarity,
        primal,
        fixed,
        residual: stationarity.max(primal).max(fixed),
    })
}

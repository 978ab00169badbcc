//! Small dense Gauss-Newton driver with step-halving backtracking.

use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use serde::{Deserialize, Serialize};

/// Stopping rules shared by triangulation and pose refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub step_tolerance: f64,
    pub max_halvings: usize,
    /// Eigenvalue ratio of JᵀJ below which the system counts as rank deficient.
    pub singular_ratio: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 50,
            step_tolerance: 1e-8,
            max_halvings: 8,
            singular_ratio: 1e-12,
        }
    }
}

/// Cost `Σ‖r‖²` together with the normal equations `JᵀJ δ = -Jᵀr`.
pub(crate) struct Linearization<const N: usize> {
    pub cost: f64,
    pub hessian: SMatrix<f64, N, N>,
    pub gradient: SVector<f64, N>,
}

pub(crate) struct GnOutcome<S> {
    pub state: S,
    pub cost: f64,
    pub converged: bool,
    /// Cost after every accepted step, starting with the initial cost.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum GnFailure {
    Singular,
    NotEvaluable,
}

pub(crate) fn gauss_newton<S: Clone, const N: usize>(
    initial: S,
    config: &SolverConfig,
    linearize: impl Fn(&S) -> Option<Linearization<N>>,
    cost: impl Fn(&S) -> Option<f64>,
    retract: impl Fn(&S, &SVector<f64, N>) -> S,
) -> Result<GnOutcome<S>, GnFailure> {
    let mut state = initial;
    let mut lin = linearize(&state).ok_or(GnFailure::NotEvaluable)?;
    let mut history = vec![lin.cost];
    let mut converged = false;

    for _ in 0..config.max_iterations {
        if lin.cost == 0.0 {
            converged = true;
            break;
        }
        let h = DMatrix::from_column_slice(N, N, lin.hessian.as_slice());
        let eig = h.clone().symmetric_eigenvalues();
        let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e.abs())));
        if !(hi > 0.0) || lo <= config.singular_ratio * hi {
            return Err(GnFailure::Singular);
        }
        let step = match h.cholesky() {
            Some(ch) => {
                let x = ch.solve(&(-DVector::from_column_slice(lin.gradient.as_slice())));
                SVector::<f64, N>::from_column_slice(x.as_slice())
            }
            None => return Err(GnFailure::Singular),
        };

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=config.max_halvings {
            let delta = step * scale;
            let trial = retract(&state, &delta);
            if let Some(c) = cost(&trial) {
                if c <= lin.cost {
                    accepted = Some((trial, delta));
                    break;
                }
            }
            scale *= 0.5;
        }
        let Some((next, delta)) = accepted else {
            // No descent along the GN direction: already at the minimum to
            // within floating-point resolution.
            converged = step.norm() < config.step_tolerance.sqrt();
            break;
        };
        state = next;
        lin = linearize(&state).ok_or(GnFailure::NotEvaluable)?;
        history.push(lin.cost);
        if delta.norm() < config.step_tolerance {
            converged = true;
            break;
        }
    }

    Ok(GnOutcome { state, cost: lin.cost, converged, history })
}

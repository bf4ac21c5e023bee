//! Damped Newton ascent for smooth concave objectives.

use nalgebra::{DMatrix, DVector};

use crate::linalg;

pub(crate) struct Evaluation {
    pub value: f64,
    pub gradient: DVector<f64>,
    /// Negative Hessian (positive semi-definite for concave objectives).
    pub curvature: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Status {
    Converged,
    /// Curvature became singular before the gradient vanished.
    Singular,
    /// Iterate left the `bound` box.
    Diverged,
    MaxIterations,
}

pub(crate) struct Outcome {
    pub theta: DVector<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub curvature: DMatrix<f64>,
    pub iterations: usize,
    pub status: Status,
}

pub(crate) struct Settings {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Largest allowed `|theta_j|`.
    pub bound: f64,
}

/// Maximizes `f` from `start` with step-halving line search.
pub(crate) fn maximize(
    start: DVector<f64>,
    settings: &Settings,
    mut f: impl FnMut(&DVector<f64>) -> Evaluation,
) -> Outcome {
    let mut theta = start;
    let mut current = f(&theta);
    let mut iterations = 0;
    let status = loop {
        let gradient_norm = current.gradient.norm();
        if gradient_norm <= settings.tolerance {
            break Status::Converged;
        }
        if iterations >= settings.max_iterations {
            break Status::MaxIterations;
        }
        let Some(step) = linalg::spd_solve(&current.curvature, &current.gradient) else {
            break Status::Singular;
        };
        iterations += 1;
        let mut scale = 1.0;
        let mut next;
        let mut candidate;
        loop {
            candidate = &theta + &step * scale;
            next = f(&candidate);
            let slack = 1e-12 * current.value.abs().max(1.0);
            if next.value.is_finite() && next.value >= current.value - slack {
                break;
            }
            scale *= 0.5;
            if scale < 1e-12 {
                break;
            }
        }
        if scale < 1e-12 {
            // no ascent possible along the Newton direction: roundoff floor
            break if current.gradient.norm() <= settings.tolerance * 1e3 {
                Status::Converged
            } else {
                Status::Singular
            };
        }
        theta = candidate;
        current = next;
        if theta.iter().any(|t| t.abs() > settings.bound) {
            break Status::Diverged;
        }
    };
    Outcome {
        gradient_norm: current.gradient.norm(),
        value: current.value,
        curvature: current.curvature,
        theta,
        iterations,
        status,
    }
}

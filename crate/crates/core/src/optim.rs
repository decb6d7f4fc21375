//! Deterministic full-batch L-BFGS with Armijo backtracking.
//!
//! Every model in the crate minimizes a smooth convex objective, so a single
//! quasi-Newton routine serves the binary logistic, coarse and flat trainers.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{dot, norm};

/// A differentiable objective over a flat parameter vector.
pub trait Objective {
    fn dim(&self) -> usize;

    /// Writes the gradient at `x` into `grad` and returns the objective value.
    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    /// Stop once the gradient's Euclidean norm is at or below this.
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
    /// Number of curvature pairs kept by L-BFGS.
    pub history: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            gradient_tolerance: 1e-6,
            max_iterations: 500,
            history: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    /// Whether the gradient tolerance was reached (as opposed to the iteration
    /// cap or a line search that could no longer make progress).
    pub converged: bool,
}

const ARMIJO_C1: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;

pub fn minimize<O: Objective + ?Sized>(objective: &O, x0: Vec<f64>, config: &OptimizerConfig) -> Result<Minimum> {
    let n = objective.dim();
    if x0.len() != n {
        return Err(Error::InvalidParameter(alloc::format!(
            "initial point has {} entries, objective expects {n}",
            x0.len()
        )));
    }
    let mut x = x0;
    let mut grad = vec![0.0; n];
    let mut value = objective.evaluate(&x, &mut grad);
    if !value.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(config.history);
    let mut direction = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial_grad = vec![0.0; n];
    let mut alphas = vec![0.0; config.history.max(1)];

    let mut iterations = 0;
    loop {
        let gnorm = norm(&grad);
        if !gnorm.is_finite() {
            return Err(Error::NonFiniteObjective);
        }
        if gnorm <= config.gradient_tolerance {
            return Ok(Minimum {
                x,
                value,
                gradient_norm: gnorm,
                iterations,
                converged: true,
            });
        }
        if iterations >= config.max_iterations {
            return Ok(Minimum {
                x,
                value,
                gradient_norm: gnorm,
                iterations,
                converged: false,
            });
        }

        // Two-loop recursion: direction = -H * grad.
        direction.copy_from_slice(&grad);
        for (k, (s, y, rho)) in history.iter().enumerate().rev() {
            let a = rho * dot(s, &direction);
            alphas[k] = a;
            for (d, yi) in direction.iter_mut().zip(y) {
                *d -= a * yi;
            }
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            for d in direction.iter_mut() {
                *d *= gamma;
            }
        } else {
            // First step: unit-length steepest descent.
            let scale = 1.0 / gnorm;
            for d in direction.iter_mut() {
                *d *= scale;
            }
        }
        for (k, (s, y, rho)) in history.iter().enumerate() {
            let b = rho * dot(y, &direction);
            let a = alphas[k];
            for (d, si) in direction.iter_mut().zip(s) {
                *d += (a - b) * si;
            }
        }
        for d in direction.iter_mut() {
            *d = -*d;
        }
        let mut slope = dot(&grad, &direction);
        if slope >= 0.0 || slope.is_nan() {
            history.clear();
            for (d, g) in direction.iter_mut().zip(&grad) {
                *d = -g / gnorm;
            }
            slope = -gnorm;
        }

        let mut step = 1.0;
        let mut accepted = false;
        let mut trial_value = value;
        for _ in 0..MAX_BACKTRACKS {
            for ((t, xi), d) in trial.iter_mut().zip(&x).zip(&direction) {
                *t = xi + step * d;
            }
            trial_value = objective.evaluate(&trial, &mut trial_grad);
            if trial_value.is_finite() && trial_value <= value + ARMIJO_C1 * step * slope {
                accepted = true;
                break;
            }
            step *= BACKTRACK;
        }
        iterations += 1;
        if !accepted || trial_value >= value {
            // No further decrease representable in floating point.
            return Ok(Minimum {
                x,
                value,
                gradient_norm: gnorm,
                iterations,
                converged: false,
            });
        }

        let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = trial_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        core::mem::swap(&mut x, &mut trial);
        core::mem::swap(&mut grad, &mut trial_grad);
        value = trial_value;
        if sy > 1e-12 * norm(&s) * norm(&y) && config.history > 0 {
            if history.len() == config.history {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
    }
}

/// Central finite-difference gradient, for checking analytic gradients.
pub fn finite_difference_gradient<O: Objective + ?Sized>(objective: &O, x: &[f64], h: f64) -> Vec<f64> {
    let mut scratch = vec![0.0; objective.dim()];
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = objective.evaluate(&probe, &mut scratch);
            probe[i] = x[i] - h;
            let down = objective.evaluate(&probe, &mut scratch);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

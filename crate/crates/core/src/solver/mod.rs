//! Damped least-squares (Levenberg-Marquardt) minimization.
//!
//! Problems expose residuals over an arbitrary parameter type plus a
//! retraction that applies a tangent-space step, so the same solver drives
//! both plain vector problems and pose sets updated by composition.

mod jacobian;
pub mod linalg;
mod lm;

pub use jacobian::{numeric_jacobian, ColumnRange, Jacobian, JacobianBlock};
pub use lm::{lm_minimize, MinimizationReport, Termination};

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error("normal equations unsolvable at every damping level up to {max_damping:e}")]
    NumericalFailure { max_damping: f64 },
    #[error("residual evaluation failed: {0}")]
    Evaluation(String),
    #[error("invalid solver options: {0}")]
    InvalidOptions(&'static str),
}

/// Nonlinear least-squares problem `min ½‖r(x)‖²`.
pub trait LeastSquaresProblem<T: Real> {
    type Params: Clone;

    /// Tangent dimension `n`.
    fn num_params(&self) -> usize;

    /// Residual dimension `m`.
    fn num_residuals(&self) -> usize;

    fn residuals(&self, x: &Self::Params) -> Result<Vec<T>, SolverError>;

    /// Analytic Jacobian with respect to the tangent step at `x`; `None` falls back
    /// to central differences.
    fn jacobian(&self, _x: &Self::Params) -> Option<Result<Jacobian<T>, SolverError>> {
        None
    }

    /// Applies the tangent step `delta` to `x`.
    fn retract(&self, x: &Self::Params, delta: &[T]) -> Self::Params;

    /// Finite-difference step scale for tangent coordinate `k`.
    fn step_scale(&self, _x: &Self::Params, _k: usize) -> T {
        T::one()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct SolverOptions<T> {
    pub max_iterations: usize,
    pub initial_damping: T,
    pub damping_up: T,
    pub damping_down: T,
    pub max_damping: T,
    /// Stop when `‖Jᵀr‖∞` falls below this.
    pub gradient_tolerance: T,
    /// Stop when `‖δ‖∞` falls below this.
    pub step_tolerance: T,
    /// Stop when an accepted step reduces the cost by less than this fraction.
    pub cost_tolerance: T,
    /// Try the undamped step first each iteration when the system is well conditioned.
    pub gauss_newton_first: bool,
    /// Parameter counts up to this use the dense backend.
    pub dense_limit: usize,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            initial_damping: T::lit(1e-3),
            damping_up: T::lit(10.0),
            damping_down: T::lit(0.3),
            max_damping: T::lit(1e12),
            gradient_tolerance: T::lit(1e-12),
            step_tolerance: T::lit(1e-12),
            cost_tolerance: T::lit(1e-12),
            gauss_newton_first: true,
            dense_limit: 64,
        }
    }
}

impl<T: Real> SolverOptions<T> {
    pub fn validate(&self) -> Result<(), SolverError> {
        let pos = |v: T| v > T::zero();
        if self.max_iterations == 0 {
            return Err(SolverError::InvalidOptions("max_iterations must be positive"));
        }
        if !pos(self.initial_damping) || !pos(self.max_damping) {
            return Err(SolverError::InvalidOptions("damping must be positive"));
        }
        if !(self.damping_up > T::one()) {
            return Err(SolverError::InvalidOptions("damping_up must exceed 1"));
        }
        if !(self.damping_down > T::zero() && self.damping_down < T::one()) {
            return Err(SolverError::InvalidOptions("damping_down must lie in (0, 1)"));
        }
        if !pos(self.gradient_tolerance) || !pos(self.step_tolerance) || !pos(self.cost_tolerance)
        {
            return Err(SolverError::InvalidOptions("tolerances must be positive"));
        }
        Ok(())
    }
}

/// Plain vector problem defined by closures.
pub struct FnProblem<T, R, J = fn(&[T]) -> Vec<Vec<T>>> {
    n: usize,
    m: usize,
    residual: R,
    jacobian: Option<J>,
    _t: std::marker::PhantomData<T>,
}

impl<T, R> FnProblem<T, R>
where
    T: Real,
    R: Fn(&[T]) -> Vec<T>,
{
    pub fn new(n: usize, m: usize, residual: R) -> Self {
        Self {
            n,
            m,
            residual,
            jacobian: None,
            _t: std::marker::PhantomData,
        }
    }
}

impl<T, R, J> FnProblem<T, R, J>
where
    T: Real,
    R: Fn(&[T]) -> Vec<T>,
    J: Fn(&[T]) -> Vec<Vec<T>>,
{
    /// Adds an analytic Jacobian returning `m` rows of length `n`.
    pub fn with_jacobian<J2>(self, jacobian: J2) -> FnProblem<T, R, J2>
    where
        J2: Fn(&[T]) -> Vec<Vec<T>>,
    {
        FnProblem {
            n: self.n,
            m: self.m,
            residual: self.residual,
            jacobian: Some(jacobian),
            _t: std::marker::PhantomData,
        }
    }
}

impl<T, R, J> LeastSquaresProblem<T> for FnProblem<T, R, J>
where
    T: Real,
    R: Fn(&[T]) -> Vec<T>,
    J: Fn(&[T]) -> Vec<Vec<T>>,
{
    type Params = Vec<T>;

    fn num_params(&self) -> usize {
        self.n
    }

    fn num_residuals(&self) -> usize {
        self.m
    }

    fn residuals(&self, x: &Vec<T>) -> Result<Vec<T>, SolverError> {
        let r = (self.residual)(x);
        if r.len() != self.m {
            return Err(SolverError::Evaluation(format!(
                "expected {} residuals, got {}",
                self.m,
                r.len()
            )));
        }
        Ok(r)
    }

    fn jacobian(&self, x: &Vec<T>) -> Option<Result<Jacobian<T>, SolverError>> {
        self.jacobian.as_ref().map(|jf| {
            let rows = jf(x);
            let values: Vec<T> = rows.into_iter().flatten().collect();
            Ok(Jacobian::dense(self.m, self.n, values))
        })
    }

    fn retract(&self, x: &Vec<T>, delta: &[T]) -> Vec<T> {
        x.iter().zip(delta).map(|(&a, &d)| a + d).collect()
    }

    fn step_scale(&self, x: &Vec<T>, k: usize) -> T {
        x[k].abs().max(T::one())
    }
}

use log::trace;

use crate::scalar::Real;
use crate::solver::linalg::{dense_cholesky_solve, LdlSymbolic, SpdSolution, UpperCsc};
use crate::solver::{numeric_jacobian, Jacobian, LeastSquaresProblem, SolverError, SolverOptions};

// Undamped steps are only tried when the smallest pivot is at least this
// fraction of the largest.
const GN_PIVOT_RATIO: f64 = 1e-10;
// Floor for the Marquardt diagonal scaling.
const MIN_DIAGONAL: f64 = 1e-9;
const NUMERIC_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Residual exactly zero.
    ZeroResidual,
    Gradient,
    Step,
    Cost,
    MaxIterations,
    /// No damping level up to the cap produced a decrease.
    NoImprovement,
}

#[derive(Debug, Clone)]
pub struct MinimizationReport<P, T> {
    pub params: P,
    pub initial_cost: T,
    /// `½‖r‖²` at `params`.
    pub cost: T,
    pub iterations: usize,
    pub accepted_steps: usize,
    pub termination: Termination,
    /// Cost after each accepted step, starting with the initial cost.
    pub cost_history: Vec<T>,
}

fn half_squared_norm<T: Real>(r: &[T]) -> T {
    r.iter().fold(T::zero(), |acc, &v| acc + v * v) / T::two()
}

struct NormalEquations<T> {
    dense: Option<Vec<Vec<T>>>,
    sparse: Option<UpperCsc<T>>,
    diagonal: Vec<T>,
}

impl<T: Real> NormalEquations<T> {
    /// Builds `JᵀJ`; the sparse form always stores the diagonal so its
    /// pattern, and hence `symbolic`, carries over between iterations.
    fn assemble(j: &Jacobian<T>, dense_limit: usize, symbolic: &mut Option<LdlSymbolic>) -> Self {
        let n = j.ncols();
        let mut trip = j.normal_triplets();
        if n <= dense_limit {
            let mut h = vec![vec![T::zero(); n]; n];
            for &(a, b, v) in &trip {
                h[a][b] += v;
                if a != b {
                    h[b][a] += v;
                }
            }
            let diagonal = (0..n).map(|k| h[k][k]).collect();
            Self {
                dense: Some(h),
                sparse: None,
                diagonal,
            }
        } else {
            trip.extend((0..n).map(|k| (k, k, T::zero())));
            let csc = UpperCsc::from_triplets(n, &trip);
            if !symbolic.as_ref().is_some_and(|s| s.matches(&csc)) {
                *symbolic = Some(LdlSymbolic::analyze(&csc));
            }
            let diagonal = csc.diagonal();
            Self {
                dense: None,
                sparse: Some(csc),
                diagonal,
            }
        }
    }

    /// Solves `(H + λ D) δ = rhs` with `D = max(diag H, floor)`.
    fn solve(&self, lambda: T, rhs: &[T], symbolic: Option<&LdlSymbolic>) -> Option<SpdSolution<T>> {
        let shift: Vec<T> = self
            .diagonal
            .iter()
            .map(|&d| lambda * d.max(T::lit(MIN_DIAGONAL)))
            .collect();
        if let Some(h) = &self.dense {
            let mut a = h.clone();
            for (k, s) in shift.iter().enumerate() {
                a[k][k] += *s;
            }
            dense_cholesky_solve(&a, rhs).ok()
        } else {
            let csc = self.sparse.as_ref().expect("sparse system");
            let sym = symbolic.expect("analyzed pattern");
            let shift = (lambda > T::zero()).then_some(shift.as_slice());
            sym.solve(csc, shift, rhs).ok()
        }
    }
}

/// Minimizes `½‖r(x)‖²` from `x0`.
///
/// Each iteration first tries the undamped Gauss-Newton step (when enabled and
/// well conditioned) and otherwise walks the multiplicative damping schedule.
/// Only cost-decreasing steps are accepted.
pub fn lm_minimize<T, P>(
    problem: &P,
    x0: P::Params,
    opts: &SolverOptions<T>,
) -> Result<MinimizationReport<P::Params, T>, SolverError>
where
    T: Real,
    P: LeastSquaresProblem<T> + ?Sized,
{
    opts.validate()?;
    let mut x = x0;
    let mut r = problem.residuals(&x)?;
    let mut cost = half_squared_norm(&r);
    if !cost.is_finite() {
        return Err(SolverError::Evaluation("non-finite initial cost".into()));
    }
    let initial_cost = cost;
    let mut history = vec![cost];
    let mut lambda = opts.initial_damping;
    let mut accepted = 0usize;
    let mut iterations = 0usize;
    let mut symbolic: Option<LdlSymbolic> = None;

    let report = |x, cost, iterations, accepted, termination, history| MinimizationReport {
        params: x,
        initial_cost,
        cost,
        iterations,
        accepted_steps: accepted,
        termination,
        cost_history: history,
    };

    if cost == T::zero() {
        return Ok(report(x, cost, 0, 0, Termination::ZeroResidual, history));
    }

    let termination = loop {
        if iterations >= opts.max_iterations {
            break Termination::MaxIterations;
        }
        iterations += 1;
        let jac = match problem.jacobian(&x) {
            Some(j) => j?,
            None => numeric_jacobian(problem, &x, T::lit(NUMERIC_STEP))?,
        };
        let g = jac.transpose_mul(&r);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NumericalFailure {
                max_damping: opts.max_damping.to_f64().unwrap_or(f64::MAX),
            });
        }
        let gmax = g.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if gmax < opts.gradient_tolerance {
            break Termination::Gradient;
        }
        let rhs: Vec<T> = g.iter().map(|&v| -v).collect();
        let normal = NormalEquations::assemble(&jac, opts.dense_limit, &mut symbolic);

        let mut gn_tried = !opts.gauss_newton_first;
        let mut step_found = None;
        let mut tiny_step = false;
        loop {
            let (trial_lambda, solution) = if !gn_tried {
                gn_tried = true;
                match normal.solve(T::zero(), &rhs, symbolic.as_ref()) {
                    Some(s) if s.pivot_ratio >= T::lit(GN_PIVOT_RATIO) => (T::zero(), s),
                    _ => continue,
                }
            } else {
                match normal.solve(lambda, &rhs, symbolic.as_ref()) {
                    Some(s) => (lambda, s),
                    None => {
                        lambda *= opts.damping_up;
                        if lambda > opts.max_damping {
                            return Err(SolverError::NumericalFailure {
                                max_damping: opts.max_damping.to_f64().unwrap_or(f64::MAX),
                            });
                        }
                        continue;
                    }
                }
            };
            let delta = solution.x;
            let dmax = delta.iter().fold(T::zero(), |m, v| m.max(v.abs()));
            if !dmax.is_finite() {
                if trial_lambda == T::zero() {
                    continue;
                }
                lambda *= opts.damping_up;
                if lambda > opts.max_damping {
                    break;
                }
                continue;
            }
            if dmax < opts.step_tolerance {
                tiny_step = true;
                break;
            }
            let candidate = problem.retract(&x, &delta);
            let new_cost = match problem.residuals(&candidate) {
                Ok(rn) => {
                    let c = half_squared_norm(&rn);
                    if c.is_finite() {
                        Some((rn, c))
                    } else {
                        None
                    }
                }
                Err(_) => None,
            };
            match new_cost {
                Some((rn, c)) if c < cost => {
                    step_found = Some((candidate, rn, c));
                    break;
                }
                _ => {
                    if trial_lambda == T::zero() {
                        continue;
                    }
                    lambda *= opts.damping_up;
                    if lambda > opts.max_damping {
                        break;
                    }
                }
            }
        }
        if tiny_step {
            break Termination::Step;
        }
        let Some((xn, rn, cn)) = step_found else {
            break Termination::NoImprovement;
        };
        let decrease = (cost - cn) / cost;
        trace!("lm iter {iterations}: cost {:?} -> {:?} (lambda {:?})", cost, cn, lambda);
        x = xn;
        r = rn;
        cost = cn;
        accepted += 1;
        history.push(cost);
        lambda = (lambda * opts.damping_down).max(T::lit(1e-15));
        if cost == T::zero() {
            break Termination::ZeroResidual;
        }
        if decrease < opts.cost_tolerance {
            break Termination::Cost;
        }
    };
    Ok(report(x, cost, iterations, accepted, termination, history))
}

//! Augmented-Lagrangian feasibility solver with L-BFGS inner iterations.
//!
//! The geometry stage needs a medium-scale constrained solver (a few hundred
//! variables, on the order of a hundred constraints) with exact first
//! derivatives and no Hessians.  This module implements the classic
//! safeguarded augmented Lagrangian: equalities enter through explicit
//! multipliers, inequalities through a squared-hinge term, and each smooth
//! subproblem is minimized by limited-memory BFGS with Armijo backtracking.
//!
//! The solver is deterministic — no randomness, no parallelism, and a strict
//! cumulative iteration budget — so identical inputs reproduce identical
//! outputs bit for bit.

use nalgebra::{DMatrix, DVector};
use std::collections::VecDeque;

/// Dense first-order data at a point: objective, constraints and Jacobians.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Objective value (zero for pure feasibility problems).
    pub objective: f64,
    /// Objective gradient, length `dim`.
    pub objective_grad: DVector<f64>,
    /// Inequality constraint values `g(x)`; feasible when `g <= 0`.
    pub ineq: DVector<f64>,
    /// Inequality Jacobian, `ineq_count x dim`.
    pub ineq_jac: DMatrix<f64>,
    /// Equality constraint values `h(x)`; feasible when `h = 0`.
    pub eq: DVector<f64>,
    /// Equality Jacobian, `eq_count x dim`.
    pub eq_jac: DMatrix<f64>,
}

impl Evaluation {
    /// Zero-filled evaluation of the given shape.
    pub fn zeros(dim: usize, ineq: usize, eq: usize) -> Self {
        Evaluation {
            objective: 0.0,
            objective_grad: DVector::zeros(dim),
            ineq: DVector::zeros(ineq),
            ineq_jac: DMatrix::zeros(ineq, dim),
            eq: DVector::zeros(eq),
            eq_jac: DMatrix::zeros(eq, dim),
        }
    }

    /// Worst constraint violation: `max(|h|, max(0, g))`, zero if unconstrained.
    pub fn violation(&self) -> f64 {
        let eq = self.eq.iter().fold(0.0_f64, |m, &h| m.max(h.abs()));
        let ineq = self.ineq.iter().fold(0.0_f64, |m, &g| m.max(g));
        eq.max(ineq).max(0.0)
    }
}

/// A smooth constrained problem with exact first derivatives.
///
/// `evaluate` is called once per trial point; implementations should compute
/// the objective and every constraint in a single pass so shared
/// subexpressions are not repeated.
pub trait NlpProblem {
    /// Number of free variables.
    fn dim(&self) -> usize;
    /// Number of inequality constraints (`g <= 0`).
    fn ineq_count(&self) -> usize;
    /// Number of equality constraints (`h = 0`).
    fn eq_count(&self) -> usize;
    /// Objective, constraints and exact Jacobians at `x`.
    fn evaluate(&self, x: &[f64]) -> Evaluation;
}

/// Tuning knobs for [`solve`].
#[derive(Debug, Clone)]
pub struct NlpOptions {
    /// Cap on cumulative accepted L-BFGS steps across all outer rounds.
    pub max_total_iters: usize,
    /// Cap on accepted steps within a single outer round.
    pub inner_iters: usize,
    /// Stationarity target for the augmented-Lagrangian gradient (inf norm).
    pub grad_tol: f64,
    /// Feasibility target for the worst constraint violation.
    pub constraint_tol: f64,
    /// Initial penalty coefficient.
    pub rho0: f64,
    /// Penalty growth factor applied when feasibility progress stalls.
    pub rho_growth: f64,
    /// Penalty ceiling.
    pub rho_max: f64,
    /// Number of curvature pairs kept by L-BFGS.
    pub memory: usize,
}

impl Default for NlpOptions {
    fn default() -> Self {
        NlpOptions {
            max_total_iters: 1500,
            inner_iters: 200,
            grad_tol: 1e-8,
            constraint_tol: 1e-8,
            rho0: 10.0,
            rho_growth: 10.0,
            rho_max: 1e12,
            memory: 10,
        }
    }
}

/// Outcome of a [`solve`] run.
#[derive(Debug, Clone)]
pub struct NlpResult {
    /// Final iterate.
    pub x: Vec<f64>,
    /// Objective value at the final iterate.
    pub objective: f64,
    /// Worst constraint violation at the final iterate.
    pub max_violation: f64,
    /// Inf-norm of the augmented-Lagrangian gradient at the final iterate.
    pub grad_inf: f64,
    /// Cumulative accepted L-BFGS steps.
    pub iterations: usize,
    /// Outer multiplier/penalty rounds performed.
    pub outer_rounds: usize,
    /// True when both the feasibility and stationarity targets were met.
    pub converged: bool,
}

/// Augmented-Lagrangian value and gradient assembled from an [`Evaluation`].
fn al_value_grad(
    eval: &Evaluation,
    lambda: &DVector<f64>,
    mu: &DVector<f64>,
    rho: f64,
) -> (f64, DVector<f64>) {
    let mut value = eval.objective;
    let mut grad = eval.objective_grad.clone();
    for j in 0..eval.eq.len() {
        let h = eval.eq[j];
        value += h * (lambda[j] + 0.5 * rho * h);
        let r = lambda[j] + rho * h;
        grad.axpy(r, &eval.eq_jac.row(j).transpose(), 1.0);
    }
    for i in 0..eval.ineq.len() {
        let t = mu[i] + rho * eval.ineq[i];
        if t > 0.0 {
            value += (t * t - mu[i] * mu[i]) / (2.0 * rho);
            grad.axpy(t, &eval.ineq_jac.row(i).transpose(), 1.0);
        } else {
            value -= mu[i] * mu[i] / (2.0 * rho);
        }
    }
    (value, grad)
}

/// State carried across one inner L-BFGS minimization.
struct Inner {
    eval: Evaluation,
    value: f64,
    grad: DVector<f64>,
    iters: usize,
}

/// Minimize the augmented Lagrangian at fixed multipliers until the gradient
/// inf-norm falls below `tol` or `budget` accepted steps were taken.
#[allow(clippy::too_many_arguments)]
fn minimize_al(
    problem: &dyn NlpProblem,
    x: &mut DVector<f64>,
    start: Evaluation,
    lambda: &DVector<f64>,
    mu: &DVector<f64>,
    rho: f64,
    tol: f64,
    budget: usize,
    memory: usize,
) -> Inner {
    const ARMIJO_C1: f64 = 1e-4;
    const MAX_BACKTRACKS: usize = 50;

    let (value, grad) = al_value_grad(&start, lambda, mu, rho);
    let mut cur = Inner {
        eval: start,
        value,
        grad,
        iters: 0,
    };
    // Curvature pairs (s, y, 1 / s'y), newest last.
    let mut pairs: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::new();

    while cur.iters < budget {
        let grad_inf = cur.grad.amax();
        if !grad_inf.is_finite() || grad_inf <= tol {
            break;
        }

        // Two-loop recursion for the quasi-Newton direction.
        let mut dir = -cur.grad.clone();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, inv_sy) in pairs.iter().rev() {
            let a = inv_sy * s.dot(&dir);
            dir.axpy(-a, y, 1.0);
            alphas.push(a);
        }
        if let Some((s, y, _)) = pairs.back() {
            dir *= s.dot(y) / y.dot(y);
        }
        for ((s, y, inv_sy), a) in pairs.iter().zip(alphas.into_iter().rev()) {
            let b = inv_sy * y.dot(&dir);
            dir.axpy(a - b, s, 1.0);
        }

        let mut slope = cur.grad.dot(&dir);
        if slope >= 0.0 {
            // Not a descent direction; fall back to steepest descent.
            pairs.clear();
            dir = -cur.grad.clone();
            slope = cur.grad.dot(&dir);
        }

        let mut alpha = if pairs.is_empty() {
            1.0 / grad_inf.max(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = &*x + alpha * &dir;
            let eval = problem.evaluate(trial.as_slice());
            let (value, grad) = al_value_grad(&eval, lambda, mu, rho);
            if value.is_finite() && value <= cur.value + ARMIJO_C1 * alpha * slope {
                accepted = Some((trial, eval, value, grad));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, eval, value, grad)) = accepted else {
            break; // Line search failed; the outer loop will re-scale.
        };

        let s = alpha * &dir;
        let y = &grad - &cur.grad;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            pairs.push_back((s, y, 1.0 / sy));
            if pairs.len() > memory {
                pairs.pop_front();
            }
        }

        *x = trial;
        cur.eval = eval;
        cur.value = value;
        cur.grad = grad;
        cur.iters += 1;
    }
    cur
}

/// Solve a constrained problem from `x0` with the safeguarded augmented
/// Lagrangian.  Pure feasibility problems simply report a zero objective.
pub fn solve(problem: &dyn NlpProblem, x0: &[f64], opts: &NlpOptions) -> NlpResult {
    const MAX_OUTER: usize = 500;

    let mut x = DVector::from_column_slice(x0);
    let mut lambda = DVector::zeros(problem.eq_count());
    let mut mu = DVector::zeros(problem.ineq_count());
    let mut rho = opts.rho0;
    // Classic forcing sequences: loose targets early, tightened as the
    // penalty grows, floored at the user tolerances.
    let mut omega = (1.0 / rho).max(opts.grad_tol);
    let mut eta = (1.0 / rho.powf(0.1)).max(opts.constraint_tol);

    let mut eval = problem.evaluate(x.as_slice());
    let mut total = 0;
    let mut outer = 0;
    let mut converged = false;
    let (mut value, mut grad) = al_value_grad(&eval, &lambda, &mu, rho);

    while outer < MAX_OUTER {
        outer += 1;
        let budget = opts.inner_iters.min(opts.max_total_iters - total);
        let inner = minimize_al(
            problem, &mut x, eval, &lambda, &mu, rho, omega, budget, opts.memory,
        );
        total += inner.iters;
        eval = inner.eval;
        value = inner.value;
        grad = inner.grad;

        let v = eval.violation();
        if v <= opts.constraint_tol && grad.amax() <= opts.grad_tol {
            converged = true;
            break;
        }
        if total >= opts.max_total_iters {
            break;
        }

        if v <= eta {
            // Feasibility is improving on schedule: first-order multiplier
            // update, then tighten both targets.
            lambda.axpy(rho, &eval.eq, 1.0);
            for i in 0..mu.len() {
                mu[i] = (mu[i] + rho * eval.ineq[i]).max(0.0);
            }
            eta = (eta / rho.powf(0.9)).max(opts.constraint_tol);
            omega = (omega / rho).max(opts.grad_tol);
        } else {
            // Stalled: raise the penalty and reset the targets.
            if rho >= opts.rho_max {
                break;
            }
            rho = (rho * opts.rho_growth).min(opts.rho_max);
            eta = (1.0 / rho.powf(0.1)).max(opts.constraint_tol);
            omega = (1.0 / rho).max(opts.grad_tol);
        }
        let refreshed = al_value_grad(&eval, &lambda, &mu, rho);
        value = refreshed.0;
        grad = refreshed.1;
    }
    let _ = value;

    NlpResult {
        x: x.as_slice().to_vec(),
        objective: eval.objective,
        max_violation: eval.violation(),
        grad_inf: grad.amax(),
        iterations: total,
        outer_rounds: outer,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Unconstrained Rosenbrock in two variables.
    struct Rosenbrock;

    impl NlpProblem for Rosenbrock {
        fn dim(&self) -> usize {
            2
        }
        fn ineq_count(&self) -> usize {
            0
        }
        fn eq_count(&self) -> usize {
            0
        }
        fn evaluate(&self, x: &[f64]) -> Evaluation {
            let (a, b) = (x[0], x[1]);
            let mut e = Evaluation::zeros(2, 0, 0);
            e.objective = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            e.objective_grad[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            e.objective_grad[1] = 200.0 * (b - a * a);
            e
        }
    }

    /// min |x - p|^2 subject to a'x = b.
    struct PlaneProjection {
        p: [f64; 3],
        a: [f64; 3],
        b: f64,
    }

    impl NlpProblem for PlaneProjection {
        fn dim(&self) -> usize {
            3
        }
        fn ineq_count(&self) -> usize {
            0
        }
        fn eq_count(&self) -> usize {
            1
        }
        fn evaluate(&self, x: &[f64]) -> Evaluation {
            let mut e = Evaluation::zeros(3, 0, 1);
            for i in 0..3 {
                let d = x[i] - self.p[i];
                e.objective += d * d;
                e.objective_grad[i] = 2.0 * d;
                e.eq[0] += self.a[i] * x[i];
                e.eq_jac[(0, i)] = self.a[i];
            }
            e.eq[0] -= self.b;
            e
        }
    }

    /// Feasibility on the unit circle: h = x^2 + y^2 - 1 = 0.
    struct UnitCircle;

    impl NlpProblem for UnitCircle {
        fn dim(&self) -> usize {
            2
        }
        fn ineq_count(&self) -> usize {
            0
        }
        fn eq_count(&self) -> usize {
            1
        }
        fn evaluate(&self, x: &[f64]) -> Evaluation {
            let mut e = Evaluation::zeros(2, 0, 1);
            e.eq[0] = x[0] * x[0] + x[1] * x[1] - 1.0;
            e.eq_jac[(0, 0)] = 2.0 * x[0];
            e.eq_jac[(0, 1)] = 2.0 * x[1];
            e
        }
    }

    /// Feasibility in the quadrant x >= 1, y >= 1.
    struct Quadrant;

    impl NlpProblem for Quadrant {
        fn dim(&self) -> usize {
            2
        }
        fn ineq_count(&self) -> usize {
            2
        }
        fn eq_count(&self) -> usize {
            0
        }
        fn evaluate(&self, x: &[f64]) -> Evaluation {
            let mut e = Evaluation::zeros(2, 2, 0);
            e.ineq[0] = 1.0 - x[0];
            e.ineq[1] = 1.0 - x[1];
            e.ineq_jac[(0, 0)] = -1.0;
            e.ineq_jac[(1, 1)] = -1.0;
            e
        }
    }

    /// min x + y subject to x^2 + y^2 = 1; optimum at (-√2/2, -√2/2).
    struct LinearOnCircle;

    impl NlpProblem for LinearOnCircle {
        fn dim(&self) -> usize {
            2
        }
        fn ineq_count(&self) -> usize {
            0
        }
        fn eq_count(&self) -> usize {
            1
        }
        fn evaluate(&self, x: &[f64]) -> Evaluation {
            let mut e = Evaluation::zeros(2, 0, 1);
            e.objective = x[0] + x[1];
            e.objective_grad[0] = 1.0;
            e.objective_grad[1] = 1.0;
            e.eq[0] = x[0] * x[0] + x[1] * x[1] - 1.0;
            e.eq_jac[(0, 0)] = 2.0 * x[0];
            e.eq_jac[(0, 1)] = 2.0 * x[1];
            e
        }
    }

    #[test]
    fn unconstrained_rosenbrock_reaches_the_minimum() {
        let res = solve(&Rosenbrock, &[-1.2, 1.0], &NlpOptions::default());
        assert!(res.converged, "rosenbrock did not converge: {res:?}");
        assert!(res.objective < 1e-12);
        assert!((res.x[0] - 1.0).abs() < 1e-6 && (res.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn equality_projection_onto_a_plane_matches_the_closed_form() {
        let p = PlaneProjection {
            p: [1.0, 2.0, 3.0],
            a: [1.0, -2.0, 2.0],
            b: 4.0,
        };
        let res = solve(&p, &[0.0, 0.0, 0.0], &NlpOptions::default());
        assert!(res.converged, "projection did not converge: {res:?}");
        // x* = p + (b - a'p) / |a|^2 * a with a'p = 3, |a|^2 = 9.
        let expect = [1.0 + 1.0 / 9.0, 2.0 - 2.0 / 9.0, 3.0 + 2.0 / 9.0];
        for (xi, ei) in res.x.iter().zip(expect) {
            assert!((xi - ei).abs() < 1e-6, "{:?} vs {expect:?}", res.x);
        }
    }

    #[test]
    fn feasibility_lands_on_the_unit_circle() {
        let res = solve(&UnitCircle, &[3.0, 4.0], &NlpOptions::default());
        assert!(res.converged, "circle feasibility failed: {res:?}");
        let r = (res.x[0] * res.x[0] + res.x[1] * res.x[1]).sqrt();
        assert!((r - 1.0).abs() < 1e-8, "radius {r}");
    }

    #[test]
    fn inequality_feasibility_enters_the_quadrant() {
        let res = solve(&Quadrant, &[-2.0, -3.0], &NlpOptions::default());
        assert!(res.converged, "quadrant feasibility failed: {res:?}");
        assert!(res.x[0] >= 1.0 - 1e-8 && res.x[1] >= 1.0 - 1e-8, "{:?}", res.x);
    }

    #[test]
    fn constrained_minimum_satisfies_the_kkt_point() {
        let res = solve(&LinearOnCircle, &[0.3, -0.8], &NlpOptions::default());
        assert!(res.converged, "KKT test did not converge: {res:?}");
        let s = -(2.0_f64).sqrt() / 2.0;
        assert!((res.x[0] - s).abs() < 1e-6 && (res.x[1] - s).abs() < 1e-6, "{:?}", res.x);
    }

    #[test]
    fn iteration_cap_reports_an_honest_failure() {
        let opts = NlpOptions {
            max_total_iters: 3,
            ..NlpOptions::default()
        };
        let res = solve(&UnitCircle, &[30.0, 40.0], &opts);
        assert!(!res.converged);
        assert!(res.iterations <= 3);
        assert!(res.max_violation > 0.0);
    }

    #[test]
    fn already_feasible_start_converges_without_steps() {
        let res = solve(&Quadrant, &[2.0, 2.0], &NlpOptions::default());
        assert!(res.converged);
        assert_eq!(res.iterations, 0);
    }
}

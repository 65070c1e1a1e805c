//! Weighted l1-regularized least squares: `argmin ||y - Phi x||^2 + lambda ||x||_1`.
//!
//! Two interchangeable solvers (cyclic coordinate descent and GIRLS, an
//! iteratively reweighted least-squares scheme) plus the reduction of the ADMM
//! point-estimation subproblem to a small d-dimensional Lasso with design
//! `Phi_hat` satisfying `Phi_hat^T Phi_hat = Phi^T Phi + (rho/2) I`.

use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::transport_admm::LassoObjectiveG;

/// `sign(v) * max(|v| - t, 0)`.
#[inline]
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// A Lasso instance `argmin_x ||y - Phi x||_2^2 + lambda ||x||_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoProblem {
    design: DMatrix<f64>,
    response: DVector<f64>,
    l1_weight: f64,
}

impl LassoProblem {
    pub fn new(design: DMatrix<f64>, response: DVector<f64>, l1_weight: f64) -> Result<Self> {
        if design.nrows() != response.len() {
            return Err(Error::DimensionMismatch {
                expected: design.nrows(),
                got: response.len(),
            });
        }
        if !(l1_weight >= 0.0) || !l1_weight.is_finite() {
            return Err(Error::InvalidArgument("l1 weight must be finite and >= 0"));
        }
        if design.iter().any(|v| !v.is_finite()) || response.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("Lasso problem data must be finite"));
        }
        Ok(Self { design, response, l1_weight })
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    pub fn l1_weight(&self) -> f64 {
        self.l1_weight
    }

    pub fn dim(&self) -> usize {
        self.design.ncols()
    }

    /// `||y - Phi x||^2 + lambda ||x||_1`.
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        let r = &self.response - &self.design * x;
        r.norm_squared() + self.l1_weight * x.iter().map(|v| v.abs()).sum::<f64>()
    }
}

/// Solver output: the iterate plus whether the stopping tolerance was met.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub x: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Cyclic coordinate descent with a cached residual. Stops when the largest
/// coordinate change in a sweep drops below `tol`; exhausting `max_sweeps`
/// returns the best iterate with `converged = false`.
pub fn coordinate_descent_lasso(
    problem: &LassoProblem,
    tol: f64,
    max_sweeps: usize,
    warm_start: Option<&DVector<f64>>,
) -> Result<LassoFit> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive"));
    }
    let d = problem.dim();
    let phi = &problem.design;
    let half_lambda = problem.l1_weight / 2.0;

    let mut x = match warm_start {
        Some(x0) => {
            if x0.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: x0.len() });
            }
            x0.clone()
        }
        None => DVector::zeros(d),
    };

    let col_norms2: Vec<f64> = (0..d).map(|j| phi.column(j).norm_squared()).collect();
    let mut residual = &problem.response - phi * &x;

    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut max_delta = 0.0f64;
        for j in 0..d {
            let cj = col_norms2[j];
            if cj == 0.0 {
                // zero column: the quadratic term vanishes, l1 pushes to zero
                max_delta = max_delta.max(x[j].abs());
                x[j] = 0.0;
                continue;
            }
            let rho_j = phi.column(j).dot(&residual) + cj * x[j];
            let x_new = soft_threshold(rho_j, half_lambda) / cj;
            let delta = x_new - x[j];
            if delta != 0.0 {
                residual.axpy(-delta, &phi.column(j).clone_owned(), 1.0);
                x[j] = x_new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < tol {
            converged = true;
            break;
        }
    }
    Ok(LassoFit { x, converged, iterations: sweeps })
}

/// Generalized iteratively reweighted least squares: repeatedly solves
/// `argmin ||y - Phi x||^2 + (lambda/2) sum_j x_j^2 / max(|x_j_prev|, eps)`.
///
/// A monotonicity safeguard on the true objective stops the iteration once the
/// smoothing floor starts to dominate.
pub fn girls_lasso(
    problem: &LassoProblem,
    epsilon: f64,
    tol: f64,
    max_iter: usize,
) -> Result<LassoFit> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("smoothing epsilon must be positive"));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive"));
    }
    let d = problem.dim();
    let phi = &problem.design;
    let gram = phi.transpose() * phi;
    let phi_t_y = phi.transpose() * &problem.response;
    let diag_scale = (0..d).map(|j| gram[(j, j)]).fold(0.0f64, f64::max).max(1.0);

    // start from a lightly ridged least-squares fit; starting at zero would be
    // a fixed point of the reweighting
    let mut x = solve_spd(&gram, &phi_t_y, 1e-10 * diag_scale)?;
    let mut objective = problem.objective(&x);

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let mut system = gram.clone();
        for j in 0..d {
            system[(j, j)] += problem.l1_weight / (2.0 * x[j].abs().max(epsilon));
        }
        let x_new = solve_spd(&system, &phi_t_y, 1e-12 * diag_scale)?;
        let objective_new = problem.objective(&x_new);
        if objective_new > objective + 1e-10 * (1.0 + objective.abs()) {
            // smoothing floor reached; keep the better iterate
            converged = true;
            break;
        }
        let change = (&x_new - &x).amax();
        x = x_new;
        objective = objective_new;
        if change < tol {
            converged = true;
            break;
        }
    }
    Ok(LassoFit { x, converged, iterations })
}

/// Cholesky solve of a (possibly barely singular) SPD system, retrying once
/// with a ridge before reporting failure.
fn solve_spd(system: &DMatrix<f64>, rhs: &DVector<f64>, ridge: f64) -> Result<DVector<f64>> {
    if let Some(chol) = Cholesky::new(system.clone()) {
        return Ok(chol.solve(rhs));
    }
    let d = system.nrows();
    let mut stabilized = system.clone();
    for j in 0..d {
        stabilized[(j, j)] += ridge.max(1e-12);
    }
    Cholesky::new(stabilized)
        .map(|chol| chol.solve(rhs))
        .ok_or(Error::Numerical("weighted least-squares system is singular"))
}

/// Which inner solver handles l1 subproblems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PSolver {
    #[default]
    CoordinateDescent,
    Girls,
}

/// The ADMM point-update recast as a small Lasso: upper-triangular `Phi_hat`
/// with `Phi_hat^T Phi_hat = Phi^T Phi + (rho/2) I` and matching response.
#[derive(Debug, Clone, PartialEq)]
pub struct PSubproblem {
    phi_hat: DMatrix<f64>,
    y_hat: DVector<f64>,
    l1_weight: f64,
}

impl PSubproblem {
    pub fn phi_hat(&self) -> &DMatrix<f64> {
        &self.phi_hat
    }

    pub fn y_hat(&self) -> &DVector<f64> {
        &self.y_hat
    }

    pub fn l1_weight(&self) -> f64 {
        self.l1_weight
    }
}

/// Cached pieces of the point-update that are constant over a whole ADMM run:
/// the Cholesky factor of `Phi^T Phi + (rho_eff/2) I` and `Phi^T y`.
///
/// For a general noise variance the subproblem is first rescaled by
/// `2 sigma^2`, which maps it onto this factorization; with the
/// `sigma^2 = 1/2` convention the scaling is the identity.
#[derive(Debug, Clone)]
pub struct PFactor {
    lower: DMatrix<f64>,
    upper: DMatrix<f64>,
    phi_t_y: DVector<f64>,
    lambda: f64,
    sig2_rho: f64,
    sig2: f64,
}

impl PFactor {
    pub fn new(g: &LassoObjectiveG, rho: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::InvalidArgument("penalty rho must be positive"));
        }
        let d = g.dim();
        let sig2 = g.sigma2();
        let mut system = g.phi().transpose() * g.phi();
        for j in 0..d {
            system[(j, j)] += sig2 * rho;
        }
        let chol: Cholesky<f64, Dyn> = Cholesky::new(system)
            .ok_or(Error::Numerical("p-update factorization failed"))?;
        let lower = chol.l();
        let upper = lower.transpose();
        Ok(Self {
            lower,
            upper,
            phi_t_y: g.phi().transpose() * g.y(),
            lambda: g.lambda(),
            sig2_rho: sig2 * rho,
            sig2,
        })
    }

    /// Upper-triangular factor `Phi_hat`.
    pub fn phi_hat(&self) -> &DMatrix<f64> {
        &self.upper
    }

    /// `y_hat = Phi_hat^{-T} (Phi^T y + (rho_eff/2) B A_i - gamma_eff / 2)`,
    /// one forward triangular solve.
    pub fn y_hat(&self, ba_i: &DVector<f64>, gamma_i: &DVector<f64>) -> DVector<f64> {
        let mut rhs = self.phi_t_y.clone();
        rhs.axpy(self.sig2_rho, ba_i, 1.0);
        rhs.axpy(-self.sig2, gamma_i, 1.0);
        self.lower
            .solve_lower_triangular(&rhs)
            .expect("factor has strictly positive diagonal")
    }

    pub fn subproblem(&self, ba_i: &DVector<f64>, gamma_i: &DVector<f64>) -> PSubproblem {
        PSubproblem {
            phi_hat: self.upper.clone(),
            y_hat: self.y_hat(ba_i, gamma_i),
            l1_weight: self.lambda,
        }
    }

    /// Solves the point update in place, skipping the `PSubproblem` allocation.
    pub fn solve(
        &self,
        ba_i: &DVector<f64>,
        gamma_i: &DVector<f64>,
        solver: PSolver,
        warm_start: Option<&DVector<f64>>,
    ) -> Result<DVector<f64>> {
        let y_hat = self.y_hat(ba_i, gamma_i);
        solve_hat_lasso(&self.upper, y_hat, self.lambda, solver, warm_start)
    }
}

/// Builds the point-update subproblem for one sample from scratch. Inside an
/// ADMM run prefer [`PFactor`], which caches the factorization.
pub fn build_p_subproblem(
    g: &LassoObjectiveG,
    b_new: &DMatrix<f64>,
    a_i: &DVector<f64>,
    gamma_i: &DVector<f64>,
    rho: f64,
) -> Result<PSubproblem> {
    let factor = PFactor::new(g, rho)?;
    let ba = b_new * a_i;
    Ok(factor.subproblem(&ba, gamma_i))
}

/// Solves `argmin_p ||y_hat - Phi_hat p||^2 + lambda ||p||_1`.
pub fn solve_p_update(
    sub: &PSubproblem,
    solver: PSolver,
    warm_start: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    solve_hat_lasso(&sub.phi_hat, sub.y_hat.clone(), sub.l1_weight, solver, warm_start)
}

fn solve_hat_lasso(
    phi_hat: &DMatrix<f64>,
    y_hat: DVector<f64>,
    lambda: f64,
    solver: PSolver,
    warm_start: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    let problem = LassoProblem::new(phi_hat.clone(), y_hat, lambda)?;
    let fit = match solver {
        PSolver::CoordinateDescent => {
            coordinate_descent_lasso(&problem, 1e-11, 2000, warm_start)?
        }
        PSolver::Girls => girls_lasso(&problem, 1e-8, 1e-10, 500)?,
    };
    Ok(fit.x)
}

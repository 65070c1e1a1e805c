//! EM iteration for the maximum-likelihood regularization parameter.
//!
//! Each E-step fits a transport map at the current value and pushes fresh
//! prior draws through it; the M-step has the closed form
//! `lambda <- d / ((1/N) sum_i ||Z_i||_1)`. The `sigma^2 = 1/2` convention
//! makes the Laplacian rate equal the regularization value; other variances
//! enter through `tau = lambda / (2 sigma^2)`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::posterior_analysis::{coefficients_feasible, push_batch};
use crate::prior_pce::{sample_laplacian, PceBasis};
use crate::transport_admm::{run_admm, AdmmConfig, InitMode, LassoObjectiveG};

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    pub lambda_init: f64,
    /// Posterior draws per E-step (also the number of training samples).
    pub n_samples: usize,
    pub rel_tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Start each E-step's ADMM from the previous map's coefficients when
    /// they stay feasible on the fresh sample batch.
    pub warm_start: bool,
    /// Average each new value with the previous one to damp Monte Carlo
    /// noise in the M-step.
    pub damping: bool,
}

impl EmConfig {
    pub fn new(lambda_init: f64) -> Self {
        Self {
            lambda_init,
            n_samples: 500,
            rel_tol: 1e-3,
            max_iter: 25,
            seed: 0,
            warm_start: true,
            damping: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda_init > 0.0) || !self.lambda_init.is_finite() {
            return Err(Error::InvalidArgument("lambda_init must be positive and finite"));
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidArgument("n_samples must be >= 1"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidArgument("rel_tol must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be >= 1"));
        }
        Ok(())
    }
}

/// The iteration record: `lambdas[k]` is the value entering E-step k,
/// `mean_l1[k]` the E-step's empirical mean l1 norm, and `admm_converged[k]`
/// whether that E-step's fit met its tolerances.
#[derive(Debug, Clone, PartialEq)]
pub struct EmTrace {
    pub lambdas: Vec<f64>,
    pub mean_l1: Vec<f64>,
    pub converged: bool,
    pub admm_converged: Vec<bool>,
}

impl EmTrace {
    pub fn final_lambda(&self) -> f64 {
        *self.lambdas.last().expect("trace always holds the initial value")
    }
}

/// Closed-form M-step: `d / ((1/N) sum_i ||Z_i||_1)`.
pub fn m_step(d: usize, posterior_samples: &DMatrix<f64>) -> Result<f64> {
    if posterior_samples.nrows() == 0 {
        return Err(Error::InvalidArgument("m_step needs at least one sample"));
    }
    if posterior_samples.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, got: posterior_samples.ncols() });
    }
    let n = posterior_samples.nrows() as f64;
    let mean_l1 = posterior_samples.iter().map(|v| v.abs()).sum::<f64>() / n;
    if !(mean_l1 > 0.0) {
        return Err(Error::DegenerateInput("all posterior samples are zero"));
    }
    Ok(d as f64 / mean_l1)
}

/// Runs the EM loop for the problem `(phi, y, sigma2)`, re-drawing `n_samples`
/// prior samples at the current rate each iteration. `basis` only supplies the
/// dimension and chaos order; its rate is rebuilt per iteration.
pub fn run_em(
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    sigma2: f64,
    basis: &PceBasis,
    admm_cfg: &AdmmConfig,
    em_cfg: &EmConfig,
) -> Result<EmTrace> {
    em_cfg.validate()?;
    if phi.ncols() != basis.dim() {
        return Err(Error::DimensionMismatch { expected: basis.dim(), got: phi.ncols() });
    }
    let d = basis.dim();
    let mut lambdas = Vec::with_capacity(em_cfg.max_iter + 1);
    let mut mean_l1 = Vec::with_capacity(em_cfg.max_iter);
    let mut admm_flags = Vec::with_capacity(em_cfg.max_iter);
    let mut lambda = em_cfg.lambda_init;
    lambdas.push(lambda);
    let mut warm: Option<DMatrix<f64>> = None;
    let mut converged = false;

    for k in 0..em_cfg.max_iter {
        let tau = lambda / (2.0 * sigma2);
        let basis_k = basis.with_rate(tau)?;
        let sub_seed = em_cfg.seed.wrapping_add((k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let train = sample_laplacian(basis_k.prior(), em_cfg.n_samples, sub_seed)?;
        let g = LassoObjectiveG::new(phi.clone(), y.clone(), lambda, sigma2)?;

        let mut cfg_k = admm_cfg.clone();
        if em_cfg.warm_start {
            if let Some(prev) = warm.take() {
                if coefficients_feasible(&prev, &basis_k, &train) {
                    cfg_k.init = InitMode::Coefficients(prev);
                }
            }
        }
        let fit = run_admm(&g, &train, &basis_k, &cfg_k)?;
        admm_flags.push(fit.converged);
        warm = Some(fit.map.coefficients().clone());

        let pushed = push_batch(&fit.map, &train)?;
        let mut next = m_step(d, &pushed)?;
        mean_l1.push(d as f64 / next);
        if em_cfg.damping {
            next = 0.5 * (next + lambda);
        }
        let rel_change = (next - lambda).abs() / lambda;
        lambdas.push(next);
        lambda = next;
        if rel_change < em_cfg.rel_tol {
            converged = true;
            break;
        }
    }
    Ok(EmTrace { lambdas, mean_l1, converged, admm_converged: admm_flags })
}

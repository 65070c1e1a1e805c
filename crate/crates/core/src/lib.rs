//! Draw i.i.d. samples from the Bayesian Lasso posterior by transport:
//! a polynomial-chaos map is fit with consensus ADMM so that it pushes the
//! Laplacian prior forward to the posterior, after which posterior sampling
//! is just prior sampling plus a matrix-vector product.
//!
//! The crate is organised around that pipeline:
//!
//! - [`prior_pce`] — Laplacian prior sampling and the sign-augmented
//!   Laguerre chaos basis (evaluation vector `A(x)` and Jacobian table `J(x)`).
//! - [`lasso_solvers`] — weighted l1 least-squares solvers (coordinate
//!   descent, GIRLS) and the reduction of the ADMM point-estimation
//!   subproblem to a small Lasso.
//! - [`transport_admm`] — the consensus ADMM loop producing a
//!   [`TransportMap`](transport_admm::TransportMap).
//! - [`em_lambda`] — EM iteration for the maximum-likelihood regularization
//!   parameter, using transported samples in the E-step.
//! - [`gibbs_baseline`] — three-step Gibbs sampler for the scale-mixture
//!   hierarchy with a prior on the noise variance, used as a reference.
//! - [`posterior_analysis`] — medians, credible intervals, kernel density
//!   estimates and regularization-path sweeps over the samplers.
//!
//! The crate is `no_std`-compatible (with `alloc`); the default `std`
//! feature additionally enables a threaded block executor for the ADMM
//! per-sample updates.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is used on purpose throughout: unlike `x <= 0.0` it also
// rejects NaN arguments.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod error;

pub mod em_lambda;
pub mod gibbs_baseline;
pub mod lasso_solvers;
pub mod posterior_analysis;
pub mod prior_pce;
pub mod transport_admm;

pub use error::{Error, Result};
pub use prior_pce::{LaplacianPrior, PceBasis, SampleBatch};
pub use transport_admm::{AdmmConfig, FitResult, LassoObjectiveG, TransportMap};

//! Consensus ADMM for the transport-map coefficients.
//!
//! The finite-dimensional problem is to minimize, over coefficient matrices B
//! with `det(B J_i) > 0` at every training sample,
//!
//! ```text
//! (1/N) sum_i  g(B A_i) - log det(B J_i)
//! ```
//!
//! where `A_i = A(x_i)` and `J_i = J(x_i)` are the basis tables at prior draws
//! `x_i`. Each sample gets consensus copies `(F_i, Z_i, p_i)` with multipliers
//! `(alpha_i, beta_i, gamma_i)`; one iteration is a closed-form consensus
//! update of B followed by N mutually independent block updates (the only
//! non-linear-algebra step being a d-dimensional Lasso), which is where the
//! parallelism lives.

#[cfg(not(feature = "std"))]
use num_traits::Float;

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::lasso_solvers::{PFactor, PSolver};
use crate::prior_pce::{PceBasis, SampleBatch};

/// Negative log posterior (up to a constant):
/// `g(x) = (1/(2 sigma^2)) ||y - Phi x||^2 + tau ||x||_1` with `tau = lambda / (2 sigma^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoObjectiveG {
    phi: DMatrix<f64>,
    y: DVector<f64>,
    lambda: f64,
    sigma2: f64,
}

impl LassoObjectiveG {
    pub fn new(phi: DMatrix<f64>, y: DVector<f64>, lambda: f64, sigma2: f64) -> Result<Self> {
        if phi.nrows() != y.len() {
            return Err(Error::DimensionMismatch { expected: phi.nrows(), got: y.len() });
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument("lambda must be finite and >= 0"));
        }
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::InvalidArgument("sigma^2 must be positive and finite"));
        }
        if phi.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("objective data must be finite"));
        }
        Ok(Self { phi, y, lambda, sigma2 })
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Laplacian prior rate implied by `(lambda, sigma^2)`: `tau = lambda / (2 sigma^2)`.
    pub fn tau(&self) -> f64 {
        self.lambda / (2.0 * self.sigma2)
    }

    pub fn dim(&self) -> usize {
        self.phi.ncols()
    }

    /// `g(x)`.
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let r = &self.y - &self.phi * x;
        r.norm_squared() / (2.0 * self.sigma2) + self.tau() * x.iter().map(|v| v.abs()).sum::<f64>()
    }
}

/// How the consensus variable (and per-sample copies) start out.
#[derive(Debug, Clone, PartialEq)]
pub enum InitMode {
    /// Exact identity-map coefficients (needs basis order >= 2). Feasible at
    /// every sample and empirically the stabler choice.
    Identity,
    /// I.i.d. normal coefficients, scale 0.1, from the given seed.
    Random { seed: u64 },
    /// Explicit starting coefficients (d x K), e.g. a previously fitted map.
    Coefficients(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmConfig {
    /// Penalty parameter rho > 0.
    pub rho: f64,
    pub max_iter: usize,
    /// Relative Frobenius change of B below which (together with `tol_res`)
    /// the iteration stops.
    pub tol_b: f64,
    /// Primal-residual tolerance.
    pub tol_res: f64,
    pub init: InitMode,
    /// Number of concurrent workers for the per-sample blocks. Results are
    /// bitwise independent of this value.
    pub workers: usize,
    /// Inner solver for the per-sample point update.
    pub solver: PSolver,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            max_iter: 500,
            tol_b: 1e-4,
            tol_res: 1e-3,
            init: InitMode::Identity,
            workers: 1,
            solver: PSolver::CoordinateDescent,
        }
    }
}

impl AdmmConfig {
    fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::InvalidArgument("rho must be positive and finite"));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be >= 1"));
        }
        if !(self.tol_b > 0.0) || !(self.tol_res > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive"));
        }
        Ok(())
    }
}

/// Runs per-sample block updates, possibly concurrently. Implementations must
/// call `task(i, &mut blocks[i])` exactly once per block; blocks are mutually
/// independent, so any schedule yields bitwise identical results.
pub trait BlockExecutor {
    fn for_each_block<T, F>(&self, blocks: &mut [T], task: F)
    where
        T: Send,
        F: Fn(usize, &mut T) + Sync;
}

/// Runs blocks in index order on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct SequentialExecutor;

impl BlockExecutor for SequentialExecutor {
    fn for_each_block<T, F>(&self, blocks: &mut [T], task: F)
    where
        T: Send,
        F: Fn(usize, &mut T) + Sync,
    {
        for (i, block) in blocks.iter_mut().enumerate() {
            task(i, block);
        }
    }
}

/// Splits the blocks into contiguous chunks across scoped threads.
#[cfg(feature = "std")]
#[derive(Debug, Clone, Copy)]
pub struct ThreadedExecutor {
    workers: usize,
}

#[cfg(feature = "std")]
impl ThreadedExecutor {
    pub fn new(workers: usize) -> Self {
        Self { workers: workers.max(1) }
    }
}

#[cfg(feature = "std")]
impl BlockExecutor for ThreadedExecutor {
    fn for_each_block<T, F>(&self, blocks: &mut [T], task: F)
    where
        T: Send,
        F: Fn(usize, &mut T) + Sync,
    {
        if self.workers == 1 || blocks.len() < 2 {
            SequentialExecutor.for_each_block(blocks, task);
            return;
        }
        let chunk = blocks.len().div_ceil(self.workers);
        std::thread::scope(|scope| {
            for (c, slice) in blocks.chunks_mut(chunk).enumerate() {
                let task = &task;
                scope.spawn(move || {
                    for (k, block) in slice.iter_mut().enumerate() {
                        task(c * chunk + k, block);
                    }
                });
            }
        });
    }
}

/// Per-sample consensus block: local copies, multipliers, and the (fixed)
/// basis tables for this sample.
#[derive(Debug, Clone)]
pub struct SampleBlock {
    /// Local copy of the coefficient matrix (d x K).
    pub f: DMatrix<f64>,
    /// Local SPD stand-in for `B J_i` (d x d).
    pub z: DMatrix<f64>,
    /// Local point estimate standing in for `B A_i` (d).
    pub p: DVector<f64>,
    /// Multiplier for `B A_i = p_i`.
    pub gamma: DVector<f64>,
    /// Multiplier for `B J_i = Z_i`.
    pub beta: DMatrix<f64>,
    /// Multiplier for `F_i = B`.
    pub alpha: DMatrix<f64>,
    /// Basis evaluation vector `A_i` (K).
    pub a: DVector<f64>,
    /// Basis Jacobian table `J_i` (K x d).
    pub j: DMatrix<f64>,
    jt: DMatrix<f64>,
    contrib: DMatrix<f64>,
    ba: DVector<f64>,
    bj: DMatrix<f64>,
    residual: f64,
    g_term: f64,
    det: f64,
}

impl SampleBlock {
    /// Builds a block for one sample's basis tables, with local copies taken
    /// from `b0` and zeroed multipliers.
    pub fn for_tables(b0: &DMatrix<f64>, a: DVector<f64>, j: DMatrix<f64>) -> Result<Self> {
        Self::new(b0, a, j)
    }

    fn new(b0: &DMatrix<f64>, a: DVector<f64>, j: DMatrix<f64>) -> Result<Self> {
        let d = b0.nrows();
        let k = b0.ncols();
        let jt = j.transpose();
        let p = b0 * &a;
        let bj = b0 * &j;
        let z = spd_projection(&bj)?;
        Ok(Self {
            f: b0.clone(),
            z,
            p,
            gamma: DVector::zeros(d),
            beta: DMatrix::zeros(d, d),
            alpha: DMatrix::zeros(d, k),
            a,
            j,
            jt,
            contrib: DMatrix::zeros(d, k),
            ba: DVector::zeros(d),
            bj: DMatrix::zeros(d, d),
            residual: f64::INFINITY,
            g_term: f64::INFINITY,
            det: f64::NAN,
        })
    }

    /// `det(B J_i)` at the most recent consensus iterate.
    pub fn jacobian_det(&self) -> f64 {
        self.det
    }

    fn compute_contribution(&mut self, rho: f64) {
        let mut contrib = core::mem::replace(&mut self.contrib, DMatrix::zeros(0, 0));
        block_contribution(self, rho, &mut contrib);
        self.contrib = contrib;
    }

    /// Re-seeds the local copies from a (possibly projected) starting point.
    fn reset_locals(&mut self, b0: &DMatrix<f64>) -> Result<()> {
        self.f.copy_from(b0);
        self.p = b0 * &self.a;
        let bj = b0 * &self.j;
        self.z = spd_projection(&bj)?;
        Ok(())
    }
}

/// `M` for the fit loop, with the gram accumulation split over column chunks
/// so it can run on the block executor. Per-column sums run in fixed sample
/// order, so the result does not depend on the worker count.
fn consensus_inverse<E: BlockExecutor>(
    blocks: &[SampleBlock],
    rho: f64,
    executor: &E,
) -> Result<DMatrix<f64>> {
    let k = blocks[0].a.len();
    let n = blocks.len() as f64;
    struct ColumnChunk {
        start: usize,
        out: DMatrix<f64>,
    }
    let chunk_width = k.div_ceil(64).max(8).min(k);
    let mut tasks: Vec<ColumnChunk> = (0..k)
        .step_by(chunk_width)
        .map(|start| ColumnChunk {
            start,
            out: DMatrix::zeros(k, chunk_width.min(k - start)),
        })
        .collect();
    executor.for_each_block(&mut tasks, |_, task| {
        let width = task.out.ncols();
        for block in blocks {
            let a_seg = block.a.rows(task.start, width);
            task.out.ger(1.0, &block.a, &a_seg, 1.0);
            let jt_cols = block.jt.columns(task.start, width);
            task.out.gemm(1.0, &block.j, &jt_cols, 1.0);
        }
    });
    let mut acc = DMatrix::zeros(k, k);
    for task in &tasks {
        acc.columns_mut(task.start, task.out.ncols()).copy_from(&task.out);
    }
    acc /= n;
    for i in 0..k {
        acc[(i, i)] += 1.0;
    }
    acc *= rho;
    let chol = nalgebra::Cholesky::new(acc)
        .ok_or(Error::Numerical("consensus matrix factorization failed"))?;
    Ok(chol.inverse())
}

/// Full ADMM state: consensus variable, per-sample blocks, the cached K x K
/// matrix `M = [rho (I + (1/N) sum_i A_i A_i^T + J_i J_i^T)]^{-1}`, and the
/// per-iteration history.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub b: DMatrix<f64>,
    pub blocks: Vec<SampleBlock>,
    pub m: DMatrix<f64>,
    pub rho: f64,
    pub iter: usize,
    pub history: Vec<IterationStats>,
}

/// One row of the residual history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStats {
    pub iter: usize,
    /// Empirical objective `(1/N) sum_i g(B A_i) - log det(B J_i)` at this
    /// iterate; `+inf` when some `det(B J_i) <= 0`.
    pub objective: f64,
    pub objective_finite: bool,
    /// `max_i max(||B A_i - p_i||, ||B J_i - Z_i||_F, ||F_i - B||_F)`.
    pub max_primal_residual: f64,
    /// Relative Frobenius change of B from the previous iterate.
    pub b_rel_change: f64,
}

/// A fitted transport map `S(x) = B A(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportMap {
    coeffs: DMatrix<f64>,
    basis: PceBasis,
    lambda: f64,
    sigma2: f64,
}

impl TransportMap {
    /// Wraps explicit coefficients; `coeffs` must be d x K for the basis.
    pub fn from_coefficients(
        coeffs: DMatrix<f64>,
        basis: PceBasis,
        lambda: f64,
        sigma2: f64,
    ) -> Result<Self> {
        if coeffs.nrows() != basis.dim() {
            return Err(Error::DimensionMismatch { expected: basis.dim(), got: coeffs.nrows() });
        }
        if coeffs.ncols() != basis.len() {
            return Err(Error::DimensionMismatch { expected: basis.len(), got: coeffs.ncols() });
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("map coefficients must be finite"));
        }
        Ok(Self { coeffs, basis, lambda, sigma2 })
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn basis(&self) -> &PceBasis {
        &self.basis
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// `S(x) = B A(x)`.
    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let a = self.basis.evaluate(x)?;
        Ok(&self.coeffs * a)
    }

    /// Map Jacobian `J_S(x) = B J(x)` (d x d).
    pub fn jacobian_at(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let j = self.basis.jacobian_table(x)?;
        Ok(&self.coeffs * j)
    }
}

/// Applies the map to a vector; thin free-function form of [`TransportMap::apply`].
pub fn apply_map(map: &TransportMap, x: &DVector<f64>) -> Result<DVector<f64>> {
    map.apply(x)
}

/// Outcome of a fit: the map plus convergence information.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub map: TransportMap,
    pub trace: Vec<IterationStats>,
    pub converged: bool,
    pub iterations: usize,
    /// Smallest `det(B J_i)` over the training samples at the final iterate.
    pub min_train_jacobian_det: f64,
}

/// `M = [rho (I + (1/N) sum_i (A_i A_i^T + J_i J_i^T))]^{-1}` via a Cholesky
/// factorization of the (positive definite) bracket.
pub fn precompute_m(
    a_tables: &[DVector<f64>],
    j_tables: &[DMatrix<f64>],
    rho: f64,
) -> Result<DMatrix<f64>> {
    if a_tables.is_empty() || a_tables.len() != j_tables.len() {
        return Err(Error::InvalidArgument("need one A and J table per sample"));
    }
    if !(rho > 0.0) {
        return Err(Error::InvalidArgument("rho must be positive"));
    }
    let k = a_tables[0].len();
    let n = a_tables.len() as f64;
    let mut acc = DMatrix::zeros(k, k);
    for (a, j) in a_tables.iter().zip(j_tables) {
        if a.len() != k || j.nrows() != k {
            return Err(Error::DimensionMismatch { expected: k, got: a.len().min(j.nrows()) });
        }
        acc.ger(1.0, a, a, 1.0);
        acc.gemm(1.0, j, &j.transpose(), 1.0);
    }
    acc /= n;
    for i in 0..k {
        acc[(i, i)] += 1.0;
    }
    acc *= rho;
    let chol = nalgebra::Cholesky::new(acc)
        .ok_or(Error::Numerical("consensus matrix factorization failed"))?;
    Ok(chol.inverse())
}

/// Contribution of one block to the consensus numerator:
/// `rho (F_i + p_i A_i^T + Z_i J_i^T) + gamma_i A_i^T + beta_i J_i^T + alpha_i`.
fn block_contribution(block: &SampleBlock, rho: f64, out: &mut DMatrix<f64>) {
    out.copy_from(&block.f);
    *out *= rho;
    out.ger(rho, &block.p, &block.a, 1.0);
    out.gemm(rho, &block.z, &block.jt, 1.0);
    out.ger(1.0, &block.gamma, &block.a, 1.0);
    out.gemm(1.0, &block.beta, &block.jt, 1.0);
    *out += &block.alpha;
}

/// Consensus update: the bracketed per-sample terms are averaged in index
/// order and multiplied by the cached `M`.
pub fn update_b(state: &AdmmState) -> DMatrix<f64> {
    let (d, k) = state.b.shape();
    let mut num = DMatrix::zeros(d, k);
    let mut scratch = DMatrix::zeros(d, k);
    for block in &state.blocks {
        block_contribution(block, state.rho, &mut scratch);
        num += &scratch;
    }
    num /= state.blocks.len() as f64;
    let mut b_new = DMatrix::zeros(d, k);
    b_new.gemm(1.0, &num, &state.m, 0.0);
    b_new
}

/// In-place `y += a * x` for dynamically sized matrices.
#[inline]
fn mat_axpy(y: &mut DMatrix<f64>, a: f64, x: &DMatrix<f64>) {
    y.zip_apply(x, |yv, xv| *yv += a * xv);
}

/// Local-copy update `F_i = -(1/rho) alpha_i + B`.
pub fn update_f(alpha_i: &DMatrix<f64>, b_new: &DMatrix<f64>, rho: f64) -> DMatrix<f64> {
    let mut f = b_new.clone();
    mat_axpy(&mut f, -1.0 / rho, alpha_i);
    f
}

/// Log-det proximal step: minimizes `-log det Z + (rho/2) ||Z - W||_F^2` over
/// SPD matrices with `W = sym(B J_i - beta_i / rho)`: eigendecompose W and map
/// each eigenvalue through `(w + sqrt(w^2 + 4/rho)) / 2`.
pub fn update_z(
    b_new: &DMatrix<f64>,
    j_i: &DMatrix<f64>,
    beta_i: &DMatrix<f64>,
    rho: f64,
) -> Result<DMatrix<f64>> {
    let mut w = b_new * j_i;
    mat_axpy(&mut w, -1.0 / rho, beta_i);
    logdet_prox(&w, rho)
}

fn logdet_prox(w: &DMatrix<f64>, rho: f64) -> Result<DMatrix<f64>> {
    let d = w.nrows();
    let mut sym = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            sym[(i, j)] = 0.5 * (w[(i, j)] + w[(j, i)]);
        }
    }
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or(Error::Numerical("eigendecomposition failed in Z update"))?;
    let mut scaled = eig.eigenvectors.clone();
    for (c, &w_c) in eig.eigenvalues.iter().enumerate() {
        let z_c = 0.5 * (w_c + (w_c * w_c + 4.0 / rho).sqrt());
        scaled.column_mut(c).scale_mut(z_c);
    }
    let mut out = DMatrix::zeros(d, d);
    out.gemm(1.0, &scaled, &eig.eigenvectors.transpose(), 0.0);
    Ok(out)
}

/// Restriction of the consensus update to coefficient matrices whose maps are
/// continuous across the coordinate sign kinks.
///
/// The raw span contains jumps (`sign(x_j) L_n` is discontinuous at zero), and
/// the sample objective rewards them: a map may shrink `||S(x)||_1` by
/// overlapping the two half-spaces instead of transporting mass, which no
/// longer pushes the prior to the posterior. Holding the per-kink coefficient
/// sums at zero removes exactly those directions. The projection is taken in
/// the metric of the consensus quadratic (whose inverse is `M`), so the
/// projected B-update is still the exact constrained minimizer.
#[derive(Debug, Clone)]
struct ContinuityProjector {
    /// Orthonormalized constraint directions (K x r).
    q: DMatrix<f64>,
    /// `M Q (Q^T M Q)^{-1}` (K x r).
    w: DMatrix<f64>,
}

impl ContinuityProjector {
    fn new(basis: &PceBasis, m: &DMatrix<f64>) -> Result<Option<Self>> {
        let k = basis.len();
        let mut accepted: Vec<DVector<f64>> = Vec::new();
        for group in basis.continuity_groups() {
            let mut v = DVector::zeros(k);
            for &idx in &group {
                v[idx] = 1.0;
            }
            // modified Gram-Schmidt with a drop tolerance: overlapping groups
            // can repeat directions
            for q in &accepted {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
            let norm = v.norm();
            if norm > 1e-10 {
                v /= norm;
                accepted.push(v);
            }
        }
        if accepted.is_empty() {
            return Ok(None);
        }
        let r = accepted.len();
        let mut q = DMatrix::zeros(k, r);
        for (c, v) in accepted.iter().enumerate() {
            q.column_mut(c).copy_from(v);
        }
        let mq = m * &q;
        let qtmq = q.transpose() * &mq;
        let inv = nalgebra::Cholesky::new(qtmq)
            .ok_or(Error::Numerical("continuity constraint system not SPD"))?
            .inverse();
        let w = &mq * inv;
        Ok(Some(Self { q, w }))
    }

    /// Removes the constrained directions from `b` in place.
    fn apply(&self, b: &mut DMatrix<f64>) {
        let bq = &*b * &self.q;
        b.gemm(-1.0, &bq, &self.w.transpose(), 1.0);
    }
}

/// SPD projection used for initialization: symmetrize, eigendecompose, floor
/// the eigenvalues at a small positive value.
fn spd_projection(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = w.nrows();
    let mut sym = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            sym[(i, j)] = 0.5 * (w[(i, j)] + w[(j, i)]);
        }
    }
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or(Error::Numerical("eigendecomposition failed in SPD projection"))?;
    let mut scaled = eig.eigenvectors.clone();
    for (c, &w_c) in eig.eigenvalues.iter().enumerate() {
        scaled.column_mut(c).scale_mut(w_c.max(1e-6));
    }
    let mut out = DMatrix::zeros(d, d);
    out.gemm(1.0, &scaled, &eig.eigenvectors.transpose(), 0.0);
    Ok(out)
}

/// Dual ascent `gamma += rho (p - B A)`, `beta += rho (Z - B J)`,
/// `alpha += rho (F - B)`, evaluated at the block's current primal values.
pub fn update_duals(
    block: &SampleBlock,
    b_new: &DMatrix<f64>,
    rho: f64,
) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
    let ba = b_new * &block.a;
    let bj = b_new * &block.j;
    let mut gamma = block.gamma.clone();
    gamma.axpy(rho, &(&block.p - &ba), 1.0);
    let mut beta = block.beta.clone();
    mat_axpy(&mut beta, rho, &(&block.z - &bj));
    let mut alpha = block.alpha.clone();
    mat_axpy(&mut alpha, rho, &(&block.f - b_new));
    (gamma, beta, alpha)
}

/// Empirical objective `(1/N) sum_i [g(B A_i) - log det(B J_i)]`; reports
/// `(+inf, false)` as soon as some Jacobian determinant is non-positive.
pub fn empirical_objective(
    b: &DMatrix<f64>,
    g: &LassoObjectiveG,
    a_tables: &[DVector<f64>],
    j_tables: &[DMatrix<f64>],
) -> (f64, bool) {
    let n = a_tables.len();
    let mut acc = 0.0;
    for (a, j) in a_tables.iter().zip(j_tables) {
        let ba = b * a;
        let bj = b * j;
        let det = bj.lu().determinant();
        if !(det > 0.0) || !det.is_finite() {
            return (f64::INFINITY, false);
        }
        acc += g.value(&ba) - det.ln();
    }
    (acc / n as f64, true)
}

/// Dispersion diagnostic from the Jacobian equation: for each sample,
/// `r(x) = log p(x) - [-g(S(x)) + log det(B J(x))]`. For an exact map `r` is
/// constant in x (the unknown log normalizer); entries with a non-positive
/// Jacobian determinant come back as `None`.
pub fn jacobian_equation_residual(
    map: &TransportMap,
    g: &LassoObjectiveG,
    xs: &SampleBatch,
) -> Result<Vec<Option<f64>>> {
    if xs.dim() != map.dim() {
        return Err(Error::DimensionMismatch { expected: map.dim(), got: xs.dim() });
    }
    let prior = map.basis().prior();
    let mut out = Vec::with_capacity(xs.len());
    for i in 0..xs.len() {
        let x = xs.row(i);
        let log_p = prior.log_density(&x)?;
        let s = map.apply(&x)?;
        let det = map.jacobian_at(&x)?.lu().determinant();
        if !(det > 0.0) || !det.is_finite() {
            out.push(None);
        } else {
            out.push(Some(log_p - (-g.value(&s) + det.ln())));
        }
    }
    Ok(out)
}

/// Fits a transport map with the worker count from `cfg` (threaded under the
/// `std` feature, sequential otherwise).
pub fn run_admm(
    g: &LassoObjectiveG,
    train: &SampleBatch,
    basis: &PceBasis,
    cfg: &AdmmConfig,
) -> Result<FitResult> {
    #[cfg(feature = "std")]
    {
        run_admm_with(g, train, basis, cfg, &ThreadedExecutor::new(cfg.workers))
    }
    #[cfg(not(feature = "std"))]
    {
        run_admm_with(g, train, basis, cfg, &SequentialExecutor)
    }
}

/// Fits a transport map using an explicit block executor.
///
/// The consensus iterate is kept in the subspace of maps continuous across
/// the coordinate sign kinks (see [`PceBasis::continuity_groups`]); the raw
/// span's jump directions would otherwise let the sample objective shrink
/// `||S(x)||_1` without transporting mass.
pub fn run_admm_with<E: BlockExecutor>(
    g: &LassoObjectiveG,
    train: &SampleBatch,
    basis: &PceBasis,
    cfg: &AdmmConfig,
    executor: &E,
) -> Result<FitResult> {
    cfg.validate()?;
    let d = basis.dim();
    let k = basis.len();
    let n = train.len();
    if g.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: g.dim() });
    }
    if train.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: train.dim() });
    }
    let tau = g.tau();
    if relative_gap(train.rate(), tau) > 1e-9 {
        return Err(Error::InvalidArgument(
            "training samples were not drawn at the rate implied by (lambda, sigma^2)",
        ));
    }
    if relative_gap(basis.prior().rate(), tau) > 1e-9 {
        return Err(Error::InvalidArgument("basis prior rate does not match the objective"));
    }

    let mut b0 = initial_coefficients(basis, &cfg.init, d, k)?;

    let mut blocks = Vec::with_capacity(n);
    for i in 0..n {
        let x = train.row(i);
        let a = basis.evaluate(&x)?;
        let j = basis.jacobian_table(&x)?;
        blocks.push(SampleBlock::new(&b0, a, j)?);
    }
    let m = consensus_inverse(&blocks, cfg.rho, executor)?;
    let projector = ContinuityProjector::new(basis, &m)?;
    if let Some(p) = &projector {
        p.apply(&mut b0);
        for block in &mut blocks {
            block.reset_locals(&b0)?;
        }
    }

    let p_factor = PFactor::new(g, cfg.rho)?;
    let rho = cfg.rho;
    let solver = cfg.solver;

    let mut state = AdmmState { b: b0, blocks, m, iter: 0, history: Vec::new(), rho };
    let mut converged = false;

    while state.iter < cfg.max_iter {
        state.iter += 1;

        // per-block consensus contributions (parallel), fixed-order reduction
        executor.for_each_block(&mut state.blocks, |_, block| {
            block.compute_contribution(rho);
        });
        let (dd, kk) = state.b.shape();
        let mut num = DMatrix::zeros(dd, kk);
        for block in &state.blocks {
            num += &block.contrib;
        }
        num /= n as f64;
        let mut b_new = DMatrix::zeros(dd, kk);
        b_new.gemm(1.0, &num, &state.m, 0.0);
        if let Some(p) = &projector {
            p.apply(&mut b_new);
        }
        if b_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("consensus iterate is not finite"));
        }
        let b_rel_change = {
            let denom = state.b.norm().max(f64::MIN_POSITIVE);
            (&b_new - &state.b).norm() / denom
        };

        // independent per-sample updates (parallel)
        let g_ref = g;
        let p_factor_ref = &p_factor;
        let b_ref = &b_new;
        let mut block_error = false;
        executor.for_each_block(&mut state.blocks, |_, block| {
            if update_block(block, b_ref, rho, g_ref, p_factor_ref, solver).is_err() {
                block.det = f64::NAN;
                block.residual = f64::NAN;
            }
        });
        for block in &state.blocks {
            if !block.residual.is_finite() {
                block_error = true;
            }
        }
        if block_error {
            return Err(Error::Numerical("per-sample block update failed"));
        }

        // fixed-order reductions for the iteration record
        let mut max_residual = 0.0f64;
        let mut g_sum = 0.0;
        let mut logdet_sum = 0.0;
        let mut all_pd = true;
        for block in &state.blocks {
            max_residual = max_residual.max(block.residual);
            g_sum += block.g_term;
            if block.det > 0.0 && block.det.is_finite() {
                logdet_sum += block.det.ln();
            } else {
                all_pd = false;
            }
        }
        let objective = if all_pd {
            (g_sum - logdet_sum) / n as f64
        } else {
            f64::INFINITY
        };
        state.history.push(IterationStats {
            iter: state.iter,
            objective,
            objective_finite: all_pd,
            max_primal_residual: max_residual,
            b_rel_change,
        });
        state.b = b_new;

        if b_rel_change < cfg.tol_b && max_residual < cfg.tol_res {
            converged = true;
            break;
        }
    }

    let min_det = state
        .blocks
        .iter()
        .map(|blk| blk.det)
        .fold(f64::INFINITY, f64::min);
    let map = TransportMap::from_coefficients(
        state.b,
        basis.clone(),
        g.lambda(),
        g.sigma2(),
    )?;
    Ok(FitResult {
        map,
        trace: state.history,
        converged,
        iterations: state.iter,
        min_train_jacobian_det: min_det,
    })
}

/// One block's primal updates, dual ascent, and stats, all against `b_new`.
fn update_block(
    block: &mut SampleBlock,
    b_new: &DMatrix<f64>,
    rho: f64,
    g: &LassoObjectiveG,
    p_factor: &PFactor,
    solver: PSolver,
) -> Result<()> {
    // cached products B A_i and B J_i
    block.ba.gemv(1.0, b_new, &block.a, 0.0);
    block.bj.gemm(1.0, b_new, &block.j, 0.0);

    // F update
    block.f.copy_from(b_new);
    let alpha_scale = -1.0 / rho;
    {
        let SampleBlock { f, alpha, .. } = block;
        f.zip_apply(&*alpha, |fv, av| *fv += alpha_scale * av);
    }

    // Z update from W = sym(B J - beta / rho)
    let mut w = block.bj.clone();
    mat_axpy(&mut w, -1.0 / rho, &block.beta);
    block.z = logdet_prox(&w, rho)?;

    // p update: d-dimensional Lasso, warm-started from the previous iterate
    block.p = p_factor.solve(&block.ba, &block.gamma, solver, Some(&block.p))?;

    // dual ascent
    block.gamma.axpy(rho, &(&block.p - &block.ba), 1.0);
    let z_minus_bj = &block.z - &block.bj;
    mat_axpy(&mut block.beta, rho, &z_minus_bj);
    let mut f_minus_b = block.f.clone();
    f_minus_b -= b_new;
    mat_axpy(&mut block.alpha, rho, &f_minus_b);

    // stats at the new iterate
    let r_p = (&block.ba - &block.p).norm();
    let r_z = (&block.bj - &block.z).norm();
    let r_f = f_minus_b.norm();
    block.residual = r_p.max(r_z).max(r_f);
    block.g_term = g.value(&block.ba);
    block.det = block.bj.clone().lu().determinant();
    Ok(())
}

fn initial_coefficients(
    basis: &PceBasis,
    init: &InitMode,
    d: usize,
    k: usize,
) -> Result<DMatrix<f64>> {
    match init {
        InitMode::Identity => basis.identity_coefficients(),
        InitMode::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Ok(DMatrix::from_fn(d, k, |_, _| {
                0.1 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
            }))
        }
        InitMode::Coefficients(b0) => {
            if b0.shape() != (d, k) {
                return Err(Error::DimensionMismatch { expected: d * k, got: b0.len() });
            }
            Ok(b0.clone())
        }
    }
}

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

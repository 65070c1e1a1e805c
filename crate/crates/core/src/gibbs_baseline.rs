//! Three-step Gibbs sampler for the Lasso hierarchy with a scale-invariant
//! prior on the noise variance (Park-Casella style).
//!
//! The hierarchy: `y | x, sigma^2 ~ N(Phi x, sigma^2 I)`,
//! `x | t^2, sigma^2 ~ N(0, sigma^2 diag(t^2))`, and each
//! `t_j^2 ~ Exp(lambda_pc^2 / 2)`, with `pi(sigma^2) = 1/sigma^2`. Under this
//! model the conditional prior on `x` is Laplacian with rate
//! `lambda_pc / sigma`, i.e. the penalty is scaled by the noise scale.
//! Setting `fix_sigma2` freezes the variance, which realizes the
//! fixed-parameter Gauss-scale-mixture sampler instead.

#[cfg(not(feature = "std"))]
use num_traits::Float;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, InverseGaussian, StandardNormal};

use crate::error::{Error, Result};

/// Sampler settings; the defaults are 10000 recorded draws after 1000
/// iterations of burn-in, no thinning.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsConfig {
    pub iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// When set, sigma^2 is held at this value instead of being resampled.
    pub fix_sigma2: Option<f64>,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self { iters: 10_000, burn_in: 1000, thin: 1, seed: 0, fix_sigma2: None }
    }
}

/// Stored draws (post burn-in). Rows of `draws` are iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsChain {
    pub draws: DMatrix<f64>,
    pub sigma2_draws: DVector<f64>,
    pub burn_in: usize,
    pub thin: usize,
    pub lambda_pc: f64,
}

impl GibbsChain {
    pub fn len(&self) -> usize {
        self.draws.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.draws.ncols()
    }
}

/// Draw from `x | rest ~ N(A^{-1} Phi^T y, sigma^2 A^{-1})` with
/// `A = Phi^T Phi + diag(inv_t2)`, via a Cholesky factorization of A.
pub fn sample_x_conditional(
    y: &DVector<f64>,
    phi: &DMatrix<f64>,
    inv_t2: &DVector<f64>,
    sigma2: f64,
    rng: &mut impl Rng,
) -> Result<DVector<f64>> {
    let d = phi.ncols();
    if inv_t2.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: inv_t2.len() });
    }
    let mut a = phi.transpose() * phi;
    for j in 0..d {
        a[(j, j)] += inv_t2[j];
    }
    let chol = Cholesky::new(a).ok_or(Error::Numerical("x-conditional system not SPD"))?;
    let mean = chol.solve(&(phi.transpose() * y));
    let z = DVector::from_fn(d, |_, _| standard_normal(rng));
    // cov = sigma^2 A^{-1} = sigma^2 L^{-T} L^{-1}
    let spread = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or(Error::Numerical("triangular solve failed"))?;
    Ok(mean + spread * sigma2.sqrt())
}

/// Draw from `sigma^2 | rest`: inverse gamma with shape `(n-1)/2 + d/2` and
/// scale `||y - Phi x||^2 / 2 + sum_j x_j^2 inv_t2_j / 2`.
pub fn sample_sigma2_conditional(
    y: &DVector<f64>,
    phi: &DMatrix<f64>,
    x: &DVector<f64>,
    inv_t2: &DVector<f64>,
    rng: &mut impl Rng,
) -> Result<f64> {
    let n = y.len() as f64;
    let d = x.len();
    let residual = y - phi * x;
    let mut scale = 0.5 * residual.norm_squared();
    for j in 0..d {
        scale += 0.5 * x[j] * x[j] * inv_t2[j];
    }
    if !(scale > 0.0) {
        return Err(Error::DegenerateInput("sigma^2 conditional scale is not positive"));
    }
    let shape = (n - 1.0) / 2.0 + d as f64 / 2.0;
    if !(shape > 0.0) {
        return Err(Error::DegenerateInput("sigma^2 conditional shape is not positive"));
    }
    // 1/Gamma(shape, rate = scale) is InvGamma(shape, scale)
    let gamma = Gamma::new(shape, 1.0 / scale)
        .map_err(|_| Error::Numerical("invalid gamma parameters"))?;
    let g: f64 = gamma.sample(rng);
    if g <= 0.0 {
        return Err(Error::Numerical("gamma draw underflowed"));
    }
    Ok(1.0 / g)
}

/// Draw `1/t_j^2` for every coordinate: inverse Gaussian with mean
/// `sqrt(lambda_pc^2 sigma^2 / x_j^2)` and shape `lambda_pc^2`; coordinates
/// with `x_j = 0` fall back to the exponential prior on `t_j^2`.
pub fn sample_invt2_conditional(
    x: &DVector<f64>,
    sigma2: f64,
    lambda_pc: f64,
    rng: &mut impl Rng,
) -> DVector<f64> {
    let lam2 = lambda_pc * lambda_pc;
    DVector::from_fn(x.len(), |j, _| {
        if x[j] == 0.0 {
            let t2: f64 = Exp::new(lam2 / 2.0).expect("positive rate").sample(rng);
            1.0 / t2.max(f64::MIN_POSITIVE)
        } else {
            let mean = (lam2 * sigma2 / (x[j] * x[j])).sqrt();
            InverseGaussian::new(mean, lam2)
                .expect("positive parameters")
                .sample(rng)
        }
    })
}

/// Runs the chain with explicit iteration counts (see [`GibbsConfig`] for the
/// remaining knobs at their defaults).
pub fn run_gibbs(
    y: &DVector<f64>,
    phi: &DMatrix<f64>,
    lambda_pc: f64,
    iters: usize,
    burn_in: usize,
    seed: u64,
) -> Result<GibbsChain> {
    run_gibbs_with(y, phi, lambda_pc, &GibbsConfig { iters, burn_in, seed, ..GibbsConfig::default() })
}

pub fn run_gibbs_with(
    y: &DVector<f64>,
    phi: &DMatrix<f64>,
    lambda_pc: f64,
    cfg: &GibbsConfig,
) -> Result<GibbsChain> {
    if phi.nrows() != y.len() {
        return Err(Error::DimensionMismatch { expected: phi.nrows(), got: y.len() });
    }
    if !(lambda_pc > 0.0) || !lambda_pc.is_finite() {
        return Err(Error::InvalidArgument("lambda_pc must be positive and finite"));
    }
    if cfg.iters == 0 {
        return Err(Error::InvalidArgument("chain length must be >= 1"));
    }
    if cfg.thin == 0 {
        return Err(Error::InvalidArgument("thinning stride must be >= 1"));
    }
    if let Some(s2) = cfg.fix_sigma2 {
        if !(s2 > 0.0) {
            return Err(Error::InvalidArgument("fixed sigma^2 must be positive"));
        }
    }
    let n = y.len();
    let d = phi.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // ridge start for x, residual variance for sigma^2
    let mut gram = phi.transpose() * phi;
    for j in 0..d {
        gram[(j, j)] += 1.0;
    }
    let mut x = Cholesky::new(gram)
        .ok_or(Error::Numerical("initialization solve failed"))?
        .solve(&(phi.transpose() * y));
    let mut sigma2 = match cfg.fix_sigma2 {
        Some(s2) => s2,
        None => ((y - phi * &x).norm_squared() / n as f64).max(1e-6),
    };
    let mut inv_t2 = DVector::from_element(d, 1.0);

    let total = cfg.burn_in + cfg.iters * cfg.thin;
    let mut draws = DMatrix::zeros(cfg.iters, d);
    let mut sigma2_draws = DVector::zeros(cfg.iters);
    let mut recorded = 0;
    for sweep in 0..total {
        x = sample_x_conditional(y, phi, &inv_t2, sigma2, &mut rng)?;
        if cfg.fix_sigma2.is_none() {
            sigma2 = sample_sigma2_conditional(y, phi, &x, &inv_t2, &mut rng)?;
        }
        inv_t2 = sample_invt2_conditional(&x, sigma2, lambda_pc, &mut rng);
        if sweep >= cfg.burn_in && (sweep - cfg.burn_in).is_multiple_of(cfg.thin) && recorded < cfg.iters {
            for j in 0..d {
                draws[(recorded, j)] = x[j];
            }
            sigma2_draws[recorded] = sigma2;
            recorded += 1;
        }
    }
    debug_assert_eq!(recorded, cfg.iters);
    Ok(GibbsChain {
        draws,
        sigma2_draws,
        burn_in: cfg.burn_in,
        thin: cfg.thin,
        lambda_pc,
    })
}

#[inline]
fn standard_normal(rng: &mut impl Rng) -> f64 {
    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
}

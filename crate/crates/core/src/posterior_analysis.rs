//! Posterior summaries over sampler output: componentwise medians, equal-tailed
//! credible intervals, Gaussian kernel density estimates, regularization-path
//! sweeps, and Kolmogorov-Smirnov distances for validation.

#[cfg(not(feature = "std"))]
use num_traits::Float;

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gibbs_baseline::{run_gibbs_with, GibbsConfig};
use crate::lasso_solvers::{coordinate_descent_lasso, LassoProblem};
use crate::prior_pce::{sample_laplacian, PceBasis, SampleBatch};
use crate::transport_admm::{run_admm, AdmmConfig, InitMode, LassoObjectiveG, TransportMap};

/// Componentwise medians with equal-tailed credible bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub medians: DVector<f64>,
    pub ci_low: DVector<f64>,
    pub ci_high: DVector<f64>,
    pub n_samples: usize,
    pub lambda: f64,
}

/// Summarizes a sample matrix (rows are draws) at the given credible level.
pub fn summarize(samples: &DMatrix<f64>, level: f64, lambda: f64) -> Result<PosteriorSummary> {
    let medians = componentwise_median(samples)?;
    let (ci_low, ci_high) = credible_intervals(samples, level)?;
    Ok(PosteriorSummary { medians, ci_low, ci_high, n_samples: samples.nrows(), lambda })
}

/// Draws `n` fresh prior samples at the map's trained rate and pushes them
/// through the map. The output rows are i.i.d. posterior draws.
pub fn push_samples(map: &TransportMap, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let batch = sample_laplacian(map.basis().prior(), n, seed)?;
    push_batch(map, &batch)
}

/// Pushes an existing prior batch through the map.
pub fn push_batch(map: &TransportMap, batch: &SampleBatch) -> Result<DMatrix<f64>> {
    if batch.dim() != map.dim() {
        return Err(Error::DimensionMismatch { expected: map.dim(), got: batch.dim() });
    }
    let mut out = DMatrix::zeros(batch.len(), map.dim());
    for i in 0..batch.len() {
        let z = map.apply(&batch.row(i))?;
        for j in 0..map.dim() {
            out[(i, j)] = z[j];
        }
    }
    Ok(out)
}

/// Per-coordinate median; for an even count, the average of the two middle
/// order statistics. This is the componentwise minimizer of the expected
/// l1 loss over the empirical distribution.
pub fn componentwise_median(samples: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = samples.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument("median of an empty sample"));
    }
    let d = samples.ncols();
    let mut column = Vec::with_capacity(n);
    let mut out = DVector::zeros(d);
    for j in 0..d {
        column.clear();
        column.extend(samples.column(j).iter().copied());
        column.sort_unstable_by(f64::total_cmp);
        out[j] = if n % 2 == 1 {
            column[n / 2]
        } else {
            0.5 * (column[n / 2 - 1] + column[n / 2])
        };
    }
    Ok(out)
}

/// Equal-tailed empirical quantiles at `(1-level)/2` and `1-(1-level)/2`
/// per coordinate (linear interpolation between order statistics).
pub fn credible_intervals(
    samples: &DMatrix<f64>,
    level: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument("credible level must lie in (0, 1)"));
    }
    let n = samples.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument("credible interval of an empty sample"));
    }
    let d = samples.ncols();
    let tail = (1.0 - level) / 2.0;
    let mut column = Vec::with_capacity(n);
    let mut low = DVector::zeros(d);
    let mut high = DVector::zeros(d);
    for j in 0..d {
        column.clear();
        column.extend(samples.column(j).iter().copied());
        column.sort_unstable_by(f64::total_cmp);
        low[j] = quantile_sorted(&column, tail);
        high[j] = quantile_sorted(&column, 1.0 - tail);
    }
    Ok((low, high))
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Gaussian kernel density estimate on `grid`, with the Silverman bandwidth
/// `1.06 * sd * n^{-1/5}`.
pub fn kde(samples: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InvalidArgument("kde needs at least two samples"));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    if !(var > 0.0) {
        return Err(Error::DegenerateInput("kde sample has zero variance"));
    }
    let bw = 1.06 * var.sqrt() * (n as f64).powf(-0.2);
    let norm = 1.0 / (n as f64 * bw * (2.0 * core::f64::consts::PI).sqrt());
    Ok(grid
        .iter()
        .map(|&g| {
            let mut acc = 0.0;
            for &s in samples {
                let u = (g - s) / bw;
                acc += (-0.5 * u * u).exp();
            }
            acc * norm
        })
        .collect())
}

/// Silverman bandwidth used by [`kde`], exposed so plots can annotate it.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InvalidArgument("bandwidth needs at least two samples"));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    if !(var > 0.0) {
        return Err(Error::DegenerateInput("zero-variance sample"));
    }
    Ok(1.06 * var.sqrt() * (n as f64).powf(-0.2))
}

/// Kolmogorov-Smirnov statistic of a sample against a reference CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted: Vec<f64> = samples.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut sup = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        sup = sup.max((f - i as f64 / n).abs());
        sup = sup.max((f - (i as f64 + 1.0) / n).abs());
    }
    sup
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut sa: Vec<f64> = a.to_vec();
    let mut sb: Vec<f64> = b.to_vec();
    sa.sort_unstable_by(f64::total_cmp);
    sb.sort_unstable_by(f64::total_cmp);
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut sup = 0.0f64;
    while ia < sa.len() && ib < sb.len() {
        if sa[ia] <= sb[ib] {
            ia += 1;
        } else {
            ib += 1;
        }
        sup = sup.max((ia as f64 / na - ib as f64 / nb).abs());
    }
    sup
}

/// Which machinery produces estimates along the regularization path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathSampler {
    /// Fit a transport map per grid point and summarize pushed samples.
    Transport,
    /// Run the Gibbs baseline per grid point.
    Gibbs,
    /// Plain Lasso point estimate (zero-width intervals).
    LassoPoint,
}

/// How the annotated optimal regularization value was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimalMethod {
    CrossValidation,
    Em,
    GibbsEm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalLambda {
    pub value: f64,
    pub method: OptimalMethod,
}

/// Medians and credible bounds per grid point (rows follow `lambda_grid`).
#[derive(Debug, Clone)]
pub struct PathResult {
    pub lambda_grid: Vec<f64>,
    pub medians_by_lambda: DMatrix<f64>,
    pub ci_low_by_lambda: DMatrix<f64>,
    pub ci_high_by_lambda: DMatrix<f64>,
    /// Grid indices whose fit/sampling failed, with the failure message;
    /// their rows are NaN.
    pub failures: Vec<(usize, String)>,
    pub optimal_lambda: Option<OptimalLambda>,
}

/// Settings shared by every grid point of a sweep.
#[derive(Debug, Clone)]
pub struct PathConfig {
    pub sampler: PathSampler,
    pub admm: AdmmConfig,
    pub gibbs: GibbsConfig,
    pub sigma2: f64,
    /// Posterior draws per grid point used for the summaries.
    pub n_summary: usize,
    /// Training samples per transport fit.
    pub n_train: usize,
    pub seed: u64,
    pub level: f64,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            sampler: PathSampler::Transport,
            admm: AdmmConfig::default(),
            gibbs: GibbsConfig::default(),
            sigma2: 0.5,
            n_summary: 10_000,
            n_train: 500,
            seed: 0,
            level: 0.95,
        }
    }
}

/// Sweeps the grid, recording componentwise medians and credible bounds per
/// regularization value. Transport fits are warm-started from the previous
/// grid point's coefficients; per-point failures are recorded and skipped.
///
/// `basis` supplies the chaos order for transport sweeps (its rate is rebuilt
/// per grid point) and is ignored by the other samplers.
pub fn lambda_sweep_path(
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda_grid: &[f64],
    basis: Option<&PceBasis>,
    cfg: &PathConfig,
) -> Result<PathResult> {
    if lambda_grid.is_empty() {
        return Err(Error::InvalidArgument("lambda grid must be non-empty"));
    }
    if lambda_grid.windows(2).any(|w| !(w[1] > w[0])) || !(lambda_grid[0] > 0.0) {
        return Err(Error::InvalidArgument("lambda grid must be positive and strictly increasing"));
    }
    let d = phi.ncols();
    let g_len = lambda_grid.len();
    let mut medians = DMatrix::from_element(g_len, d, f64::NAN);
    let mut ci_low = DMatrix::from_element(g_len, d, f64::NAN);
    let mut ci_high = DMatrix::from_element(g_len, d, f64::NAN);
    let mut failures = Vec::new();
    let mut warm: Option<DMatrix<f64>> = None;

    for (gi, &lambda) in lambda_grid.iter().enumerate() {
        let outcome = sweep_point(phi, y, lambda, basis, cfg, gi, &mut warm);
        match outcome {
            Ok((med, lo, hi)) => {
                for j in 0..d {
                    medians[(gi, j)] = med[j];
                    ci_low[(gi, j)] = lo[j];
                    ci_high[(gi, j)] = hi[j];
                }
            }
            Err(e) => failures.push((gi, alloc::format!("{e}"))),
        }
    }
    Ok(PathResult {
        lambda_grid: lambda_grid.to_vec(),
        medians_by_lambda: medians,
        ci_low_by_lambda: ci_low,
        ci_high_by_lambda: ci_high,
        failures,
        optimal_lambda: None,
    })
}

fn sweep_point(
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    basis: Option<&PceBasis>,
    cfg: &PathConfig,
    grid_index: usize,
    warm: &mut Option<DMatrix<f64>>,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    match cfg.sampler {
        PathSampler::LassoPoint => {
            let problem = LassoProblem::new(phi.clone(), y.clone(), lambda)?;
            let fit = coordinate_descent_lasso(&problem, 1e-10, 10_000, None)?;
            Ok((fit.x.clone(), fit.x.clone(), fit.x))
        }
        PathSampler::Gibbs => {
            let mut gc = cfg.gibbs.clone();
            gc.seed = cfg.gibbs.seed.wrapping_add(grid_index as u64);
            let chain = run_gibbs_with(y, phi, lambda, &gc)?;
            let med = componentwise_median(&chain.draws)?;
            let (lo, hi) = credible_intervals(&chain.draws, cfg.level)?;
            Ok((med, lo, hi))
        }
        PathSampler::Transport => {
            let basis = basis.ok_or(Error::InvalidArgument(
                "transport sweep needs a basis template",
            ))?;
            let tau = lambda / (2.0 * cfg.sigma2);
            let basis = basis.with_rate(tau)?;
            let g = LassoObjectiveG::new(phi.clone(), y.clone(), lambda, cfg.sigma2)?;
            let train = sample_laplacian(
                basis.prior(),
                cfg.n_train,
                cfg.seed.wrapping_add(grid_index as u64),
            )?;
            let mut admm = cfg.admm.clone();
            if let Some(prev) = warm.take() {
                if coefficients_feasible(&prev, &basis, &train) {
                    admm.init = InitMode::Coefficients(prev);
                }
            }
            let fit = run_admm(&g, &train, &basis, &admm)?;
            *warm = Some(fit.map.coefficients().clone());
            let pushed = push_samples(
                &fit.map,
                cfg.n_summary,
                cfg.seed.wrapping_add(0x5eed).wrapping_add(grid_index as u64),
            )?;
            let med = componentwise_median(&pushed)?;
            let (lo, hi) = credible_intervals(&pushed, cfg.level)?;
            Ok((med, lo, hi))
        }
    }
}

/// Warm starts must keep the Jacobian determinant positive at the new
/// training samples; otherwise the identity init is used instead.
pub fn coefficients_feasible(
    coeffs: &DMatrix<f64>,
    basis: &PceBasis,
    train: &SampleBatch,
) -> bool {
    if coeffs.nrows() != basis.dim() || coeffs.ncols() != basis.len() {
        return false;
    }
    for i in 0..train.len() {
        let Ok(j) = basis.jacobian_table(&train.row(i)) else {
            return false;
        };
        let det = (coeffs * j).lu().determinant();
        if !(det > 0.0) || !det.is_finite() {
            return false;
        }
    }
    true
}

//! Subcommand implementations. Every artifact is reproducible from the
//! configuration plus seed: outputs go through the deterministic writers in
//! [`crate::output`].

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use nalgebra::DMatrix;
use serde::Serialize;

use transport_lasso::em_lambda::{run_em, EmConfig};
use transport_lasso::gibbs_baseline::{run_gibbs_with, GibbsConfig};
use transport_lasso::lasso_solvers::{coordinate_descent_lasso, LassoProblem, PSolver};
use transport_lasso::posterior_analysis::{
    componentwise_median, credible_intervals, kde, lambda_sweep_path, push_samples,
    OptimalLambda, OptimalMethod, PathConfig, PathSampler,
};
use transport_lasso::prior_pce::{sample_laplacian, LaplacianPrior, PceBasis};
use transport_lasso::transport_admm::{run_admm, AdmmConfig, InitMode, LassoObjectiveG};

use crate::dataset::{load_dataset, Dataset};
use crate::mapfile::MapFile;
use crate::output::{csv_bytes, fmt_f64, json_bytes, Sink};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverChoice {
    Cd,
    Girls,
}

impl From<SolverChoice> for PSolver {
    fn from(value: SolverChoice) -> Self {
        match value {
            SolverChoice::Cd => PSolver::CoordinateDescent,
            SolverChoice::Girls => PSolver::Girls,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplerChoice {
    Transport,
    Gibbs,
    LassoPoint,
}

/// Dataset selection shared by the data-driven subcommands.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV dataset with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Response column name (default: the last column).
    #[arg(long)]
    pub response: Option<String>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        load_dataset(&self.data, self.response.as_deref())
    }
}

/// Output destination and format.
#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output path (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format for tabular artifacts.
    #[arg(long, value_enum, default_value = "csv")]
    pub format: OutputFormat,
}

/// ADMM knobs shared by fit-like subcommands.
#[derive(Debug, Clone, Args)]
pub struct AdmmArgs {
    /// ADMM penalty parameter.
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    /// Relative B-change tolerance.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Primal-residual tolerance.
    #[arg(long, default_value_t = 1e-3)]
    pub tol_res: f64,
    /// ADMM iteration cap.
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    /// Worker threads for the per-sample blocks (env
    /// TRANSPORT_LASSO_THREADS is the fallback; results do not depend on it).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Inner Lasso solver for the point updates.
    #[arg(long, value_enum, default_value = "cd")]
    pub solver: SolverChoice,
    /// Initialize coefficients randomly (from this seed) instead of at the
    /// identity map.
    #[arg(long)]
    pub random_init: Option<u64>,
}

impl AdmmArgs {
    pub fn resolve_workers(&self) -> usize {
        self.workers
            .or_else(|| {
                std::env::var("TRANSPORT_LASSO_THREADS").ok().and_then(|v| v.parse().ok())
            })
            .unwrap_or(1)
            .max(1)
    }

    pub fn to_config(&self) -> AdmmConfig {
        AdmmConfig {
            rho: self.rho,
            max_iter: self.max_iter,
            tol_b: self.tol,
            tol_res: self.tol_res,
            init: match self.random_init {
                Some(seed) => InitMode::Random { seed },
                None => InitMode::Identity,
            },
            workers: self.resolve_workers(),
            solver: self.solver.into(),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Regularization parameter lambda (= 2 tau sigma^2).
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Fixed noise variance; 1/2 makes lambda equal the prior rate.
    #[arg(long, default_value_t = 0.5)]
    pub sigma2: f64,
    /// Polynomial chaos order.
    #[arg(long, default_value_t = 3)]
    pub order: u32,
    /// Training samples drawn from the prior.
    #[arg(long, default_value_t = 500)]
    pub n_train: usize,
    /// RNG seed for the training batch.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub admm: AdmmArgs,
    /// Where to write the fitted map (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-iteration trace CSV (iteration, objective, residuals).
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

pub fn run_fit(args: &FitArgs) -> Result<()> {
    if !args.lambda.is_finite() || args.lambda <= 0.0 {
        bail!("--lambda must be positive for a transport fit");
    }
    let ds = args.data.load()?;
    let g = LassoObjectiveG::new(ds.design.clone(), ds.response.clone(), args.lambda, args.sigma2)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let tau = g.tau();
    let prior = LaplacianPrior::new(ds.dim(), tau).map_err(|e| anyhow::anyhow!("{e}"))?;
    let basis = PceBasis::total_degree(prior, args.order).map_err(|e| anyhow::anyhow!("{e}"))?;
    let train = sample_laplacian(basis.prior(), args.n_train, args.seed)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let cfg = args.admm.to_config();
    let fit = run_admm(&g, &train, &basis, &cfg).map_err(|e| anyhow::anyhow!("{e}"))?;

    if let Some(trace_path) = &args.trace {
        let rows: Vec<Vec<String>> = fit
            .trace
            .iter()
            .map(|s| {
                vec![
                    s.iter.to_string(),
                    fmt_f64(s.objective),
                    fmt_f64(s.max_primal_residual),
                    fmt_f64(s.b_rel_change),
                ]
            })
            .collect();
        let body = csv_bytes(
            &["iteration", "objective", "max_primal_residual", "b_rel_change"],
            &rows,
        )?;
        std::fs::write(trace_path, body)
            .with_context(|| format!("cannot write trace {}", trace_path.display()))?;
    }

    MapFile::from_fit(&fit, args.n_train, args.seed, args.admm.rho).write(&args.out)?;
    eprintln!(
        "fit: {} iterations, converged={}, final residual {:.3e}, map -> {}",
        fit.iterations,
        fit.converged,
        fit.trace.last().map(|s| s.max_primal_residual).unwrap_or(f64::NAN),
        args.out.display()
    );
    if !fit.converged {
        eprintln!("warning: iteration cap reached before the tolerances were met");
    }
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    /// Fitted map JSON written by `fit`.
    #[arg(long)]
    pub map: PathBuf,
    /// Number of posterior draws.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn run_sample(args: &SampleArgs) -> Result<()> {
    if args.n == 0 {
        bail!("--n must be at least 1");
    }
    let map = MapFile::read(&args.map)?.to_map()?;
    let draws = push_samples(&map, args.n, args.seed).map_err(|e| anyhow::anyhow!("{e}"))?;
    let names: Vec<String> = (1..=map.dim()).map(|j| format!("x{j}")).collect();
    let sink = Sink::from_option(args.out.out.as_deref());
    match args.out.format {
        OutputFormat::Csv => {
            let header: Vec<&str> = names.iter().map(String::as_str).collect();
            let rows: Vec<Vec<String>> = (0..draws.nrows())
                .map(|i| (0..draws.ncols()).map(|j| fmt_f64(draws[(i, j)])).collect())
                .collect();
            sink.write_bytes(&csv_bytes(&header, &rows)?)
        }
        OutputFormat::Json => {
            #[derive(Serialize)]
            struct SampleOut {
                columns: Vec<String>,
                draws: Vec<Vec<f64>>,
            }
            let body = SampleOut {
                columns: names,
                draws: (0..draws.nrows())
                    .map(|i| (0..draws.ncols()).map(|j| draws[(i, j)]).collect())
                    .collect(),
            };
            sink.write_bytes(&json_bytes(&body)?)
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EmArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Initial lambda.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.5)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 3)]
    pub order: u32,
    /// Posterior draws per E-step (also the training-batch size).
    #[arg(long, default_value_t = 500)]
    pub n_train: usize,
    /// Relative-change stopping threshold on lambda.
    #[arg(long, default_value_t = 1e-3)]
    pub rel_tol: f64,
    /// EM iteration cap.
    #[arg(long, default_value_t = 25)]
    pub em_max_iter: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Average consecutive lambda iterates to damp Monte Carlo noise.
    #[arg(long)]
    pub damping: bool,
    /// Start each E-step's ADMM from the identity map instead of the
    /// previous map's coefficients.
    #[arg(long)]
    pub cold_start: bool,
    #[command(flatten)]
    pub admm: AdmmArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn run_em_command(args: &EmArgs) -> Result<()> {
    let ds = args.data.load()?;
    let prior = LaplacianPrior::new(ds.dim(), 1.0).map_err(|e| anyhow::anyhow!("{e}"))?;
    let basis = PceBasis::total_degree(prior, args.order).map_err(|e| anyhow::anyhow!("{e}"))?;
    let mut em_cfg = EmConfig::new(args.lambda);
    em_cfg.n_samples = args.n_train;
    em_cfg.rel_tol = args.rel_tol;
    em_cfg.max_iter = args.em_max_iter;
    em_cfg.seed = args.seed;
    em_cfg.warm_start = !args.cold_start;
    em_cfg.damping = args.damping;
    let admm_cfg = args.admm.to_config();
    let trace = run_em(&ds.design, &ds.response, args.sigma2, &basis, &admm_cfg, &em_cfg)
        .map_err(|e| anyhow::anyhow!("{e}"))?;

    let sink = Sink::from_option(args.out.out.as_deref());
    match args.out.format {
        OutputFormat::Csv => {
            let mut rows = Vec::new();
            for k in 0..trace.mean_l1.len() {
                rows.push(vec![
                    (k + 1).to_string(),
                    fmt_f64(trace.lambdas[k]),
                    fmt_f64(trace.mean_l1[k]),
                    fmt_f64(trace.lambdas[k + 1]),
                    trace.admm_converged[k].to_string(),
                ]);
            }
            let body = csv_bytes(
                &["iteration", "lambda", "mean_l1", "lambda_next", "admm_converged"],
                &rows,
            )?;
            sink.write_bytes(&body)
        }
        OutputFormat::Json => {
            #[derive(Serialize)]
            struct EmOut {
                lambdas: Vec<f64>,
                mean_l1: Vec<f64>,
                converged: bool,
                admm_converged: Vec<bool>,
                final_lambda: f64,
            }
            let body = EmOut {
                final_lambda: trace.final_lambda(),
                lambdas: trace.lambdas.clone(),
                mean_l1: trace.mean_l1.clone(),
                converged: trace.converged,
                admm_converged: trace.admm_converged.clone(),
            };
            sink.write_bytes(&json_bytes(&body)?)
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GibbsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Park-Casella penalty (the prior rate scaled by the noise sd).
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Recorded draws.
    #[arg(long, default_value_t = 10_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 1000)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Hold sigma^2 fixed at this value (the fixed-parameter scale-mixture
    /// sampler) instead of placing the scale-invariant prior on it.
    #[arg(long)]
    pub fix_sigma2: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn run_gibbs_command(args: &GibbsArgs) -> Result<()> {
    let ds = args.data.load()?;
    let cfg = GibbsConfig {
        iters: args.iters,
        burn_in: args.burn_in,
        thin: args.thin,
        seed: args.seed,
        fix_sigma2: args.fix_sigma2,
    };
    let chain = run_gibbs_with(&ds.response, &ds.design, args.lambda, &cfg)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let sink = Sink::from_option(args.out.out.as_deref());
    match args.out.format {
        OutputFormat::Csv => {
            let mut header: Vec<String> = vec!["iteration".into()];
            header.extend(ds.column_names.iter().cloned());
            header.push("sigma2".into());
            let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
            let rows: Vec<Vec<String>> = (0..chain.len())
                .map(|i| {
                    let mut row = Vec::with_capacity(ds.dim() + 2);
                    row.push((i + 1).to_string());
                    for j in 0..ds.dim() {
                        row.push(fmt_f64(chain.draws[(i, j)]));
                    }
                    row.push(fmt_f64(chain.sigma2_draws[i]));
                    row
                })
                .collect();
            sink.write_bytes(&csv_bytes(&header_refs, &rows)?)
        }
        OutputFormat::Json => {
            #[derive(Serialize)]
            struct GibbsOut {
                columns: Vec<String>,
                lambda_pc: f64,
                burn_in: usize,
                thin: usize,
                draws: Vec<Vec<f64>>,
                sigma2: Vec<f64>,
            }
            let body = GibbsOut {
                columns: ds.column_names.clone(),
                lambda_pc: chain.lambda_pc,
                burn_in: chain.burn_in,
                thin: chain.thin,
                draws: (0..chain.len())
                    .map(|i| (0..ds.dim()).map(|j| chain.draws[(i, j)]).collect())
                    .collect(),
                sigma2: chain.sigma2_draws.iter().copied().collect(),
            };
            sink.write_bytes(&json_bytes(&body)?)
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct PathArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated, strictly increasing positive lambda grid.
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Vec<f64>,
    #[arg(long, value_enum, default_value = "transport")]
    pub sampler: SamplerChoice,
    #[arg(long, default_value_t = 0.5)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 3)]
    pub order: u32,
    #[arg(long, default_value_t = 500)]
    pub n_train: usize,
    /// Posterior draws per grid point for the summaries.
    #[arg(long, default_value_t = 10_000)]
    pub n_summary: usize,
    /// Gibbs draws per grid point (gibbs sampler only).
    #[arg(long, default_value_t = 10_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 1000)]
    pub burn_in: usize,
    /// Credible level for the interval columns.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Annotate the result with the EM estimate of lambda.
    #[arg(long)]
    pub em_optimal: bool,
    #[arg(long, default_value_t = 25)]
    pub em_max_iter: usize,
    #[command(flatten)]
    pub admm: AdmmArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn run_path(args: &PathArgs) -> Result<()> {
    let ds = args.data.load()?;
    let prior = LaplacianPrior::new(ds.dim(), 1.0).map_err(|e| anyhow::anyhow!("{e}"))?;
    let basis = PceBasis::total_degree(prior, args.order).map_err(|e| anyhow::anyhow!("{e}"))?;
    let cfg = PathConfig {
        sampler: match args.sampler {
            SamplerChoice::Transport => PathSampler::Transport,
            SamplerChoice::Gibbs => PathSampler::Gibbs,
            SamplerChoice::LassoPoint => PathSampler::LassoPoint,
        },
        admm: args.admm.to_config(),
        gibbs: GibbsConfig {
            iters: args.iters,
            burn_in: args.burn_in,
            seed: args.seed,
            ..GibbsConfig::default()
        },
        sigma2: args.sigma2,
        n_summary: args.n_summary,
        n_train: args.n_train,
        seed: args.seed,
        level: args.level,
    };
    let mut result = lambda_sweep_path(
        &ds.design,
        &ds.response,
        &args.lambda_grid,
        Some(&basis),
        &cfg,
    )
    .map_err(|e| anyhow::anyhow!("{e}"))?;

    if args.em_optimal {
        let mut em_cfg = EmConfig::new(*args
            .lambda_grid
            .get(args.lambda_grid.len() / 2)
            .unwrap_or(&1.0));
        em_cfg.n_samples = args.n_train;
        em_cfg.max_iter = args.em_max_iter;
        em_cfg.seed = args.seed.wrapping_add(0xE0);
        let trace = run_em(
            &ds.design,
            &ds.response,
            args.sigma2,
            &basis,
            &args.admm.to_config(),
            &em_cfg,
        )
        .map_err(|e| anyhow::anyhow!("{e}"))?;
        result.optimal_lambda =
            Some(OptimalLambda { value: trace.final_lambda(), method: OptimalMethod::Em });
    }

    let sink = Sink::from_option(args.out.out.as_deref());
    match args.out.format {
        OutputFormat::Csv => {
            let mut rows = Vec::new();
            for (gi, &lambda) in result.lambda_grid.iter().enumerate() {
                for j in 0..ds.dim() {
                    rows.push(vec![
                        fmt_f64(lambda),
                        ds.column_names[j].clone(),
                        fmt_f64(result.medians_by_lambda[(gi, j)]),
                        fmt_f64(result.ci_low_by_lambda[(gi, j)]),
                        fmt_f64(result.ci_high_by_lambda[(gi, j)]),
                    ]);
                }
            }
            let body =
                csv_bytes(&["lambda", "coordinate", "median", "ci_low", "ci_high"], &rows)?;
            sink.write_bytes(&body)
        }
        OutputFormat::Json => {
            #[derive(Serialize)]
            struct OptimalOut {
                value: f64,
                method: &'static str,
            }
            #[derive(Serialize)]
            struct PathOut {
                lambda_grid: Vec<f64>,
                columns: Vec<String>,
                medians: Vec<Vec<f64>>,
                ci_low: Vec<Vec<f64>>,
                ci_high: Vec<Vec<f64>>,
                failures: Vec<(usize, String)>,
                optimal_lambda: Option<OptimalOut>,
            }
            let to_rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
                (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
            };
            let body = PathOut {
                lambda_grid: result.lambda_grid.clone(),
                columns: ds.column_names.clone(),
                medians: to_rows(&result.medians_by_lambda),
                ci_low: to_rows(&result.ci_low_by_lambda),
                ci_high: to_rows(&result.ci_high_by_lambda),
                failures: result.failures.clone(),
                optimal_lambda: result.optimal_lambda.map(|o| OptimalOut {
                    value: o.value,
                    method: match o.method {
                        OptimalMethod::CrossValidation => "cv",
                        OptimalMethod::Em => "em",
                        OptimalMethod::GibbsEm => "gibbs-em",
                    },
                }),
            };
            sink.write_bytes(&json_bytes(&body)?)
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Transport-side regularization (lambda = 2 tau sigma^2).
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Gibbs-side penalty; defaults to the same numeric value as --lambda.
    /// The two conventions differ (the Gibbs prior scales with the noise sd)
    /// and are reported side by side, never converted.
    #[arg(long)]
    pub lambda_pc: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 3)]
    pub order: u32,
    #[arg(long, default_value_t = 500)]
    pub n_train: usize,
    /// Posterior draws per method for the summaries.
    #[arg(long, default_value_t = 10_000)]
    pub n_samples: usize,
    #[arg(long, default_value_t = 10_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 1000)]
    pub burn_in: usize,
    /// Credible level.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Kernel-density grid points per coordinate.
    #[arg(long, default_value_t = 201)]
    pub kde_points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub admm: AdmmArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub medians: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub n_samples: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoordinateKde {
    pub column: String,
    pub grid: Vec<f64>,
    pub transport_density: Vec<f64>,
    pub gibbs_density: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Agreement {
    /// max_j |median_T - median_G| / sd_G(coordinate j).
    pub max_median_gap_in_gibbs_sd: f64,
    /// Number of coordinates where the transport interval is no wider.
    pub transport_ci_no_wider_count: usize,
    pub dimensions: usize,
}

/// Joint summary of both samplers plus the plain Lasso point estimate.
#[derive(Debug, Clone, Serialize)]
pub struct CompareSummary {
    pub lambda: f64,
    pub lambda_pc: f64,
    pub sigma2: f64,
    pub level: f64,
    pub columns: Vec<String>,
    pub transport: MethodSummary,
    pub gibbs: MethodSummary,
    pub lasso_point: Vec<f64>,
    pub agreement: Agreement,
    pub kde: Vec<CoordinateKde>,
}

pub fn compare_summary(args: &CompareArgs) -> Result<CompareSummary> {
    let ds = args.data.load()?;
    let lambda_pc = args.lambda_pc.unwrap_or(args.lambda);

    // transport side
    let g = LassoObjectiveG::new(ds.design.clone(), ds.response.clone(), args.lambda, args.sigma2)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let prior = LaplacianPrior::new(ds.dim(), g.tau()).map_err(|e| anyhow::anyhow!("{e}"))?;
    let basis = PceBasis::total_degree(prior, args.order).map_err(|e| anyhow::anyhow!("{e}"))?;
    let train = sample_laplacian(basis.prior(), args.n_train, args.seed)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let fit = run_admm(&g, &train, &basis, &args.admm.to_config())
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let pushed = push_samples(&fit.map, args.n_samples, args.seed.wrapping_add(0x5eed))
        .map_err(|e| anyhow::anyhow!("{e}"))?;

    // Gibbs side
    let gibbs_cfg = GibbsConfig {
        iters: args.iters,
        burn_in: args.burn_in,
        seed: args.seed.wrapping_add(0x91bb5),
        ..GibbsConfig::default()
    };
    let chain = run_gibbs_with(&ds.response, &ds.design, lambda_pc, &gibbs_cfg)
        .map_err(|e| anyhow::anyhow!("{e}"))?;

    // Lasso point estimate at the transport-side lambda
    let lasso = coordinate_descent_lasso(
        &LassoProblem::new(ds.design.clone(), ds.response.clone(), args.lambda)
            .map_err(|e| anyhow::anyhow!("{e}"))?,
        1e-10,
        10_000,
        None,
    )
    .map_err(|e| anyhow::anyhow!("{e}"))?;

    let summarize = |samples: &DMatrix<f64>| -> Result<MethodSummary> {
        let med = componentwise_median(samples).map_err(|e| anyhow::anyhow!("{e}"))?;
        let (lo, hi) =
            credible_intervals(samples, args.level).map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok(MethodSummary {
            medians: med.iter().copied().collect(),
            ci_low: lo.iter().copied().collect(),
            ci_high: hi.iter().copied().collect(),
            n_samples: samples.nrows(),
        })
    };
    let transport = summarize(&pushed)?;
    let gibbs = summarize(&chain.draws)?;

    // agreement diagnostics
    let d = ds.dim();
    let mut max_gap_sd = 0.0f64;
    let mut no_wider = 0usize;
    for j in 0..d {
        let col: Vec<f64> = chain.draws.column(j).iter().copied().collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (col.len() as f64 - 1.0))
            .sqrt();
        let gap = (transport.medians[j] - gibbs.medians[j]).abs() / sd.max(1e-300);
        max_gap_sd = max_gap_sd.max(gap);
        let w_t = transport.ci_high[j] - transport.ci_low[j];
        let w_g = gibbs.ci_high[j] - gibbs.ci_low[j];
        if w_t <= w_g {
            no_wider += 1;
        }
    }

    // per-coordinate kernel density estimates on a shared grid
    let mut kdes = Vec::with_capacity(d);
    for j in 0..d {
        let t_col: Vec<f64> = pushed.column(j).iter().copied().collect();
        let g_col: Vec<f64> = chain.draws.column(j).iter().copied().collect();
        let lo = t_col
            .iter()
            .chain(&g_col)
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let hi = t_col
            .iter()
            .chain(&g_col)
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let pad = 0.05 * (hi - lo).max(1e-6);
        let (lo, hi) = (lo - pad, hi + pad);
        let step = (hi - lo) / (args.kde_points - 1) as f64;
        let grid: Vec<f64> = (0..args.kde_points).map(|i| lo + i as f64 * step).collect();
        let transport_density = kde(&t_col, &grid).map_err(|e| anyhow::anyhow!("{e}"))?;
        let gibbs_density = kde(&g_col, &grid).map_err(|e| anyhow::anyhow!("{e}"))?;
        kdes.push(CoordinateKde {
            column: ds.column_names[j].clone(),
            grid,
            transport_density,
            gibbs_density,
        });
    }

    Ok(CompareSummary {
        lambda: args.lambda,
        lambda_pc,
        sigma2: args.sigma2,
        level: args.level,
        columns: ds.column_names.clone(),
        transport,
        gibbs,
        lasso_point: lasso.x.iter().copied().collect(),
        agreement: Agreement {
            max_median_gap_in_gibbs_sd: max_gap_sd,
            transport_ci_no_wider_count: no_wider,
            dimensions: d,
        },
        kde: kdes,
    })
}

pub fn run_compare(args: &CompareArgs) -> Result<()> {
    let summary = compare_summary(args)?;
    let sink = Sink::from_option(args.out.out.as_deref());
    match args.out.format {
        OutputFormat::Json => sink.write_bytes(&json_bytes(&summary)?),
        OutputFormat::Csv => {
            let mut rows = Vec::new();
            for j in 0..summary.columns.len() {
                rows.push(vec![
                    summary.columns[j].clone(),
                    fmt_f64(summary.transport.medians[j]),
                    fmt_f64(summary.transport.ci_low[j]),
                    fmt_f64(summary.transport.ci_high[j]),
                    fmt_f64(summary.gibbs.medians[j]),
                    fmt_f64(summary.gibbs.ci_low[j]),
                    fmt_f64(summary.gibbs.ci_high[j]),
                    fmt_f64(summary.lasso_point[j]),
                ]);
            }
            let body = csv_bytes(
                &[
                    "coordinate",
                    "transport_median",
                    "transport_ci_low",
                    "transport_ci_high",
                    "gibbs_median",
                    "gibbs_ci_low",
                    "gibbs_ci_high",
                    "lasso_point",
                ],
                &rows,
            )?;
            sink.write_bytes(&body)
        }
    }
}

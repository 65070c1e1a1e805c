use clap::{Parser, Subcommand};
use transport_lasso_cli::commands::{
    run_compare, run_em_command, run_fit, run_gibbs_command, run_path, run_sample, CompareArgs,
    EmArgs, FitArgs, GibbsArgs, PathArgs, SampleArgs,
};

/// Bayesian Lasso posterior sampling through a fitted transport map, with an
/// EM estimator for the regularization parameter and a Gibbs baseline.
#[derive(Parser)]
#[command(name = "transport-lasso", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a transport map and write its coefficients to a JSON map file.
    Fit(FitArgs),
    /// Draw i.i.d. posterior samples from a stored map.
    Sample(SampleArgs),
    /// Maximum-likelihood lambda by EM over transport samples.
    Em(EmArgs),
    /// Run the Gibbs-sampler baseline chain.
    Gibbs(GibbsArgs),
    /// Sweep a lambda grid, recording medians and credible bounds.
    Path(PathArgs),
    /// Joint transport-vs-Gibbs summary (medians, intervals, densities).
    Compare(CompareArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fit(args) => run_fit(args),
        Command::Sample(args) => run_sample(args),
        Command::Em(args) => run_em_command(args),
        Command::Gibbs(args) => run_gibbs_command(args),
        Command::Path(args) => run_path(args),
        Command::Compare(args) => run_compare(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

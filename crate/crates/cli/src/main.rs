use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qgad_cli::artifact::write_text;
use qgad_cli::commands::{all_passed, cmd_detect, cmd_fit, cmd_scaling, cmd_verify};
use qgad_cli::error::EXIT_DATA;
use qgad_cli::ingest::read_queries;
use qgad_cli::{CliError, FitArtifact, Result, RunConfig, ThresholdPolicy};
use qgad_core::verify::Suite;
use qgad_core::{Backend, ComparatorMode, DEFAULT_QUBIT_CAP};

#[derive(Parser)]
#[command(name = "qgad", version, about = "Simulated quantum Gaussian anomaly detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate mean and covariance and write a fit artifact.
    Fit(FitArgs),
    /// Score query rows against a fit artifact.
    Detect(DetectArgs),
    /// Run self-verification suites.
    Verify(VerifyArgs),
    /// Mean-magnitude RMSE against shot count, as CSV.
    #[command(alias = "experiment-scaling")]
    Scaling(ScalingArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Exact,
    Shots,
}

#[derive(Clone, Copy, ValueEnum)]
enum ComparatorArg {
    Functional,
    GateLevel,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Comparator,
    Transduction,
    Signtest,
    Equivalence,
    All,
}

#[derive(Args)]
struct EstimationArgs {
    /// Training data: comma-separated reals in (-1, 1), one row per line.
    #[arg(long)]
    input: PathBuf,
    /// Skip one header line.
    #[arg(long)]
    skip_header: bool,
    /// Fixed-point magnitude bits.
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u32).range(1..=16))]
    bits: u32,
    #[arg(long, value_enum, default_value_t = BackendArg::Exact)]
    backend: BackendArg,
    /// Measurements per magnitude estimate (shot backend).
    #[arg(long, default_value_t = 100_000)]
    shots: u64,
    /// Sign-test failure probability.
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Target density error; epsilon-mu is allocated from it.
    #[arg(long, conflicts_with = "epsilon_mu")]
    epsilon: Option<f64>,
    /// Per-element magnitude tolerance.
    #[arg(long)]
    epsilon_mu: Option<f64>,
    /// Effective condition number used with --epsilon (default: from the classical fit).
    #[arg(long, requires = "epsilon")]
    kappa: Option<f64>,
    #[arg(long, env = "QGAD_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_QUBIT_CAP)]
    qubit_cap: usize,
    #[arg(long, value_enum, default_value_t = ComparatorArg::Functional)]
    comparator: ComparatorArg,
    /// Size sign tests from a pilot run.
    #[arg(long)]
    adaptive_sign: bool,
}

#[derive(Args)]
struct ThresholdArgs {
    /// Fixed density threshold.
    #[arg(long, conflicts_with = "quantile")]
    threshold: Option<f64>,
    /// Threshold at this quantile of the training densities.
    #[arg(long)]
    quantile: Option<f64>,
}

impl ThresholdArgs {
    fn policy(&self) -> Option<ThresholdPolicy> {
        self.threshold
            .map(ThresholdPolicy::Value)
            .or(self.quantile.map(ThresholdPolicy::Quantile))
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    estimation: EstimationArgs,
    #[command(flatten)]
    threshold: ThresholdArgs,
    /// Add this multiple of the identity to the estimated covariance.
    #[arg(long)]
    ridge: Option<f64>,
    /// Artifact path (default: standard output).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    /// Fit artifact.
    #[arg(long)]
    model: PathBuf,
    /// Query rows.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    skip_header: bool,
    #[command(flatten)]
    threshold: ThresholdArgs,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = SuiteArg::All)]
    suite: SuiteArg,
    #[arg(long, env = "QGAD_SEED", default_value_t = 0)]
    seed: u64,
    /// Also write the full JSON report here.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ScalingArgs {
    #[command(flatten)]
    estimation: EstimationArgs,
    /// Comma-separated shot counts.
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000,100000,1000000")]
    shots_grid: Vec<u64>,
    #[arg(long, default_value_t = 50)]
    repeats: u64,
    /// CSV path (default: standard output).
    #[arg(long)]
    output: Option<PathBuf>,
}

fn run_config(e: &EstimationArgs, threshold: Option<ThresholdPolicy>, ridge: Option<f64>) -> RunConfig {
    RunConfig {
        input: e.input.clone(),
        bits: e.bits,
        skip_header: e.skip_header,
        backend: match e.backend {
            BackendArg::Exact => Backend::Exact,
            BackendArg::Shots => Backend::Shots,
        },
        shots: e.shots,
        delta: e.delta,
        epsilon: e.epsilon,
        epsilon_mu: e.epsilon_mu,
        kappa: e.kappa,
        threshold: threshold.unwrap_or_default(),
        seed: e.seed,
        qubit_cap: e.qubit_cap,
        comparator: match e.comparator {
            ComparatorArg::Functional => ComparatorMode::Functional,
            ComparatorArg::GateLevel => ComparatorMode::GateLevel,
        },
        adaptive_sign: e.adaptive_sign,
        ridge,
    }
}

fn emit(output: Option<&PathBuf>, text: &str) -> Result<()> {
    match output {
        Some(path) => write_text(path, text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| CliError::Io {
                    path: PathBuf::from("<stdout>"),
                    source,
                })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(args) => {
            let config = run_config(&args.estimation, args.threshold.policy(), args.ridge);
            let artifact = cmd_fit(&config)?;
            for (row, col) in &artifact.ingest.clamped {
                eprintln!("note: row {} column {} clamped to the largest magnitude", row + 1, col + 1);
            }
            eprintln!(
                "fit: M={} D={} n={} max|mu_hat-mu|={:e} max|C_hat-C|={:e} sigma={:e}",
                artifact.ingest.rows,
                artifact.ingest.cols,
                artifact.ingest.bits,
                artifact.deltas.max_abs_mu,
                artifact.deltas.max_abs_cov,
                artifact.threshold.sigma
            );
            emit(args.output.as_ref(), &(artifact.to_json() + "\n"))
        }
        Command::Detect(args) => {
            let artifact = FitArtifact::load(&args.model)?;
            let queries = read_queries(&args.input, args.skip_header)?;
            let report = cmd_detect(&artifact, &queries, args.threshold.policy())?;
            eprintln!(
                "detect: {} rows, {} anomalies, sigma={:e}",
                report.summary.rows, report.summary.anomalies, report.threshold.sigma
            );
            let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
            emit(args.output.as_ref(), &text)
        }
        Command::Verify(args) => {
            let suites: Vec<Suite> = match args.suite {
                SuiteArg::Comparator => vec![Suite::Comparator],
                SuiteArg::Transduction => vec![Suite::Transduction],
                SuiteArg::Signtest => vec![Suite::Signtest],
                SuiteArg::Equivalence => vec![Suite::Equivalence],
                SuiteArg::All => Suite::ALL.to_vec(),
            };
            let reports = cmd_verify(&suites, args.seed)?;
            for r in &reports {
                for c in &r.checks {
                    let tag = if c.passed { "PASS" } else { "FAIL" };
                    println!("{tag} {:?} {}: {}", r.suite, c.name, c.detail);
                }
            }
            if let Some(path) = &args.output {
                write_text(path, &(serde_json::to_string_pretty(&reports).expect("report serializes") + "\n"))?;
            }
            if all_passed(&reports) {
                Ok(())
            } else {
                let failed = reports.iter().flat_map(|r| &r.checks).filter(|c| !c.passed).count();
                Err(CliError::Verification(format!("{failed} checks failed")))
            }
        }
        Command::Scaling(args) => {
            let config = run_config(&args.estimation, None, None);
            let table = cmd_scaling(&config, &args.shots_grid, args.repeats)?;
            for (j, s) in table.slopes.iter().enumerate() {
                match s {
                    Some(s) => eprintln!("feature {j}: log-log slope {s:.4}"),
                    None => eprintln!("feature {j}: slope undefined"),
                }
            }
            if let Some(s) = table.pooled_slope {
                eprintln!("pooled slope {s:.4}");
            }
            emit(args.output.as_ref(), &table.to_csv())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            eprintln!("error: {e}");
            if code == EXIT_DATA {
                eprintln!("{}", e.diagnostic());
            }
            ExitCode::from(code)
        }
    }
}

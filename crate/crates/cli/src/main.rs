use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use specsim::config::{
    DEFAULT_ORDER, DEFAULT_PDF_SAMPLES, DEFAULT_SAMPLES, DEFAULT_STEPS_PER_PERIOD,
};
use specsim::error::EXIT_COMPARE_FAILED;
use specsim::{
    compare, configure_threads, run, AnalysisKind, CliError, LinearKind, MethodKind, OutputFormat,
    QuadKind, RunConfig,
};
use specsim_core::spectral::DEFAULT_BETA;

#[derive(Parser)]
#[command(
    name = "specsim",
    version,
    about = "Stochastic circuit simulation with polynomial chaos"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the analyses of a netlist with one uncertainty-quantification method.
    Run(RunArgs),
    /// Compare the gPC coefficients of two result directories.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
}

#[derive(Args)]
struct RunArgs {
    netlist: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodKind::St)]
    method: MethodKind,
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    order: usize,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    beta: f64,
    /// Candidate / quadrature rule (tensor for d <= 3, else smolyak).
    #[arg(long, value_enum)]
    quad: Option<QuadKind>,
    /// Points per axis (tensor) or sparse-grid level (smolyak).
    #[arg(long)]
    level: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Analyses to run (repeatable); defaults to the netlist cards.
    #[arg(long, value_enum)]
    analysis: Vec<AnalysisKind>,
    #[arg(long, default_value = "specsim-out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
    #[arg(long)]
    lte_tol: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_STEPS_PER_PERIOD)]
    steps_per_period: usize,
    #[arg(long, value_enum, default_value_t = LinearKind::Decoupled)]
    linear: LinearKind,
    /// Unknown whose THD is reported by `.pss`, e.g. `v(out)`.
    #[arg(long)]
    probe: Option<String>,
    /// Device whose average power is reported by `.pss`.
    #[arg(long)]
    power: Option<String>,
    #[arg(long, default_value_t = DEFAULT_PDF_SAMPLES)]
    pdf_samples: usize,
}

impl From<RunArgs> for RunConfig {
    fn from(a: RunArgs) -> Self {
        RunConfig {
            netlist: a.netlist,
            method: a.method,
            order: a.order,
            beta: a.beta,
            quad: a.quad,
            level: a.level,
            samples: a.samples,
            seed: a.seed,
            analyses: a.analysis,
            out: a.out,
            format: a.format,
            lte_tol: a.lte_tol,
            steps_per_period: a.steps_per_period,
            linear: a.linear,
            probe: a.probe,
            power: a.power,
            pdf_samples: a.pdf_samples,
        }
    }
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("{}", e.record());
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        return fail(e);
    }
    match cli.command {
        Command::Run(args) => match run(&args.into()) {
            Ok(s) => {
                println!(
                    "{} run complete: {} analyses written to {}",
                    s.method,
                    s.analyses.len(),
                    s.config.out.display()
                );
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Compare { a, b, tol } => match compare(&a, &b, tol) {
            Ok(r) => {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&r).expect("report serializes")
                );
                if r.pass {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(EXIT_COMPARE_FAILED as u8)
                }
            }
            Err(e) => fail(e),
        },
    }
}

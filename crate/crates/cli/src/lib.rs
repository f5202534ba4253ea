//! Command-line front end: run an analysis on a netlist and compare runs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compare;
pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use compare::{compare, CompareReport};
pub use config::{AnalysisKind, LinearKind, MethodKind, OutputFormat, QuadKind, RunConfig};
pub use error::{CliError, CliResult};
pub use run::{run, Summary};

/// Cap the worker pool at `SPECSIM_THREADS` when set.
pub fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("SPECSIM_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Config(format!(
            "SPECSIM_THREADS must be a positive integer, got `{v}`"
        ))
    })?;
    // A pool built earlier in the process keeps its size.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

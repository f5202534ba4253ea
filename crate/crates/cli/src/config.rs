use std::path::PathBuf;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use specsim_core::spectral::{LinearMode, Method, DEFAULT_BETA};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    St,
    Sg,
    Sc,
    Mc,
}

impl MethodKind {
    pub fn method(self) -> Method {
        match self {
            MethodKind::St => Method::St,
            MethodKind::Sg => Method::Sg,
            MethodKind::Sc => Method::Sc,
            MethodKind::Mc => Method::Mc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum QuadKind {
    Tensor,
    Smolyak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AnalysisKind {
    Dc,
    Tran,
    Pss,
}

impl AnalysisKind {
    pub fn name(self) -> &'static str {
        match self {
            AnalysisKind::Dc => "dc",
            AnalysisKind::Tran => "tran",
            AnalysisKind::Pss => "pss",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LinearKind {
    Decoupled,
    Coupled,
}

impl LinearKind {
    pub fn mode(self) -> LinearMode {
        match self {
            LinearKind::Decoupled => LinearMode::Decoupled,
            LinearKind::Coupled => LinearMode::Coupled,
        }
    }
}

pub const DEFAULT_ORDER: usize = 2;
pub const DEFAULT_SAMPLES: usize = 10_000;
pub const DEFAULT_LTE_TOL: f64 = 1e-6;
pub const DEFAULT_STEPS_PER_PERIOD: usize = 200;
pub const DEFAULT_PDF_SAMPLES: usize = 10_000;

/// Everything one `specsim run` needs. Optional fields are resolved by
/// [`RunConfig::materialize`] and recorded in `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub netlist: PathBuf,
    pub method: MethodKind,
    pub order: usize,
    pub beta: f64,
    /// Quadrature / candidate rule; tensor for `d <= 3`, Smolyak above.
    pub quad: Option<QuadKind>,
    /// Points per axis (tensor) or Smolyak level.
    pub level: Option<usize>,
    pub samples: usize,
    pub seed: u64,
    /// Analyses to run; every card in the netlist (or DC) when empty.
    pub analyses: Vec<AnalysisKind>,
    pub out: PathBuf,
    pub format: OutputFormat,
    /// Transient LTE tolerance; the `.tran` card value, else the default.
    pub lte_tol: Option<f64>,
    pub steps_per_period: usize,
    pub linear: LinearKind,
    /// Unknown whose THD is reported for periodic analyses (last node by default).
    pub probe: Option<String>,
    /// Device whose average power is reported for periodic analyses.
    pub power: Option<String>,
    pub pdf_samples: usize,
}

impl RunConfig {
    pub fn new(netlist: impl Into<PathBuf>, method: MethodKind, out: impl Into<PathBuf>) -> Self {
        Self {
            netlist: netlist.into(),
            method,
            order: DEFAULT_ORDER,
            beta: DEFAULT_BETA,
            quad: None,
            level: None,
            samples: DEFAULT_SAMPLES,
            seed: 0,
            analyses: Vec::new(),
            out: out.into(),
            format: OutputFormat::Csv,
            lte_tol: None,
            steps_per_period: DEFAULT_STEPS_PER_PERIOD,
            linear: LinearKind::Decoupled,
            probe: None,
            power: None,
            pdf_samples: DEFAULT_PDF_SAMPLES,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("--beta must lie in (0, 1), got {}", self.beta));
        }
        if self.method == MethodKind::Mc && self.samples < 2 {
            return bad("--samples must be at least 2".into());
        }
        if self.level == Some(0) {
            return bad("--level must be at least 1".into());
        }
        if let Some(t) = self.lte_tol {
            if !(t > 0.0) {
                return bad(format!("--lte-tol must be positive, got {t}"));
            }
        }
        if self.steps_per_period < 32 {
            return bad("--steps-per-period must be at least 32".into());
        }
        if self.pdf_samples < 2 {
            return bad("--pdf-samples must be at least 2".into());
        }
        Ok(())
    }

    /// Default rule for this method and dimension.
    pub fn quad_for(&self, dim: usize) -> QuadKind {
        self.quad.unwrap_or(if dim <= 3 {
            QuadKind::Tensor
        } else {
            QuadKind::Smolyak
        })
    }

    /// Default rule size: enough points for degree `2p` products (plus the
    /// parameter-expression degree for Galerkin inner products).
    pub fn level_for(&self, kind: QuadKind, dep_degree: usize) -> usize {
        self.level.unwrap_or(match (self.method, kind) {
            (MethodKind::Sg, QuadKind::Tensor) => {
                specsim_core::spectral::sg_points_per_axis(self.order, dep_degree)
            }
            (MethodKind::Sg, QuadKind::Smolyak) => self.order + 2,
            _ => self.order + 1,
        })
    }
}

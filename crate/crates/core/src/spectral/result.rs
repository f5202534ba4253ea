//! gPC states and engine results.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::polychaos::GpcBasis;

/// Stacked coefficients `x̂ = [x̂¹; …; x̂ᴷ]`, block `k` holding the
/// coefficient of `H_k` for all `n` unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct GpcState {
    pub coeffs: DVector<f64>,
    pub n: usize,
    pub t: f64,
}

impl GpcState {
    pub fn new(coeffs: DVector<f64>, n: usize, t: f64) -> Self {
        assert!(
            n > 0 && coeffs.len().is_multiple_of(n),
            "coefficient length not a multiple of n"
        );
        Self { coeffs, n, t }
    }

    /// Number of basis functions.
    pub fn k(&self) -> usize {
        self.coeffs.len() / self.n
    }

    /// Coefficient block of `H_{j+1}` (0-based `j`).
    pub fn block(&self, j: usize) -> DVector<f64> {
        self.coeffs.rows(j * self.n, self.n).into_owned()
    }

    /// The `K` coefficients of unknown `i`.
    pub fn unknown_coeffs(&self, i: usize) -> Vec<f64> {
        (0..self.k()).map(|j| self.coeffs[j * self.n + i]).collect()
    }

    pub fn mean(&self) -> DVector<f64> {
        self.block(0)
    }

    pub fn variance(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.n);
        for j in 1..self.k() {
            let b = self.coeffs.rows(j * self.n, self.n);
            v += b.component_mul(&b);
        }
        v
    }
}

/// Mean and variance vectors of a gPC state.
pub fn moments(state: &GpcState) -> (DVector<f64>, DVector<f64>) {
    (state.mean(), state.variance())
}

/// `x̃(ξ) = Σ_k x̂ᵏ H_k(ξ)`.
pub fn surrogate_eval(state: &GpcState, basis: &GpcBasis, xi: &[f64]) -> Result<DVector<f64>> {
    if basis.len() != state.k() {
        return Err(Error::DimensionMismatch {
            expected: basis.len(),
            got: state.k(),
        });
    }
    let h = basis.eval_vector(xi)?;
    let mut x = DVector::zeros(state.n);
    for (j, hj) in h.iter().enumerate() {
        x.axpy(*hj, &state.coeffs.rows(j * state.n, state.n), 1.0);
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    St,
    Sg,
    Sc,
    Mc,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::St => "st",
            Method::Sg => "sg",
            Method::Sc => "sc",
            Method::Mc => "mc",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "st" => Ok(Method::St),
            "sg" => Ok(Method::Sg),
            "sc" => Ok(Method::Sc),
            "mc" => Ok(Method::Mc),
            _ => Err(Error::InvalidOption(format!("unknown method `{s}`"))),
        }
    }
}

/// Solver effort counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveStats {
    pub newton_iters: usize,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Deterministic solves (SC nodes, MC samples) or testing points.
    pub solves: usize,
    pub failures: usize,
}

impl SolveStats {
    pub fn merge(&mut self, o: &SolveStats) {
        self.newton_iters += o.newton_iters;
        self.accepted_steps += o.accepted_steps;
        self.rejected_steps += o.rejected_steps;
        self.solves += o.solves;
        self.failures += o.failures;
    }
}

/// Statistics of every unknown at every output time.
#[derive(Debug, Clone, PartialEq)]
pub struct UqResult {
    pub method: Method,
    pub names: Vec<String>,
    /// Output times; a single `0.0` for DC.
    pub times: Vec<f64>,
    pub mean: Vec<DVector<f64>>,
    pub std: Vec<DVector<f64>>,
    /// Stacked gPC coefficients per time (empty for Monte Carlo).
    pub coeffs: Vec<DVector<f64>>,
    /// Basis size `K` (0 for Monte Carlo).
    pub basis_len: usize,
    /// Standard errors of the mean and std (Monte Carlo only).
    pub mean_se: Vec<DVector<f64>>,
    pub std_se: Vec<DVector<f64>>,
    pub seed: Option<u64>,
    pub stats: SolveStats,
}

impl UqResult {
    pub fn from_states(
        method: Method,
        names: Vec<String>,
        states: &[GpcState],
        stats: SolveStats,
    ) -> Self {
        let basis_len = states.first().map_or(0, GpcState::k);
        Self {
            method,
            names,
            times: states.iter().map(|s| s.t).collect(),
            mean: states.iter().map(GpcState::mean).collect(),
            std: states.iter().map(|s| s.variance().map(f64::sqrt)).collect(),
            coeffs: states.iter().map(|s| s.coeffs.clone()).collect(),
            basis_len,
            mean_se: Vec::new(),
            std_se: Vec::new(),
            seed: None,
            stats,
        }
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn state(&self, i: usize) -> Option<GpcState> {
        self.coeffs
            .get(i)
            .map(|c| GpcState::new(c.clone(), self.n(), self.times[i]))
    }

    pub fn unknown_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n.eq_ignore_ascii_case(name))
    }
}

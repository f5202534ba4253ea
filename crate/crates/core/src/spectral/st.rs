//! Stochastic testing: collocation of the gPC residual at `K` testing points.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::result::{GpcState, SolveStats};
use super::testing::TestingSet;
use crate::circuit::Circuit;
use crate::detsolve::{
    dc_solve_system, transient_solve, CircuitDae, DaeEval, DaeSystem, Jacobians, NewtonOptions,
    TestingMap, TransientOptions,
};
use crate::error::{Error, Result};
use crate::polychaos::GpcBasis;

/// How the Newton linear systems of the coupled ST equations are solved.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum LinearMode {
    /// `J_k y_k = r_k` per testing point, then `δ = (V⁻¹ ⊗ I) y`.
    #[default]
    Decoupled,
    /// One LU of the assembled `K·n` Jacobian.
    Coupled,
}

/// The `K·n` coupled system in the coefficients `x̂`; block `k` of the
/// residual is the circuit at `ξ_k` evaluated at `Σ_j x̂ʲ H_j(ξ_k)`.
pub struct StSystem {
    points: Vec<CircuitDae>,
    xi: Vec<Vec<f64>>,
    map: Arc<TestingMap>,
    mode: LinearMode,
    scales: Vec<f64>,
    rscales: Vec<f64>,
    names: Vec<String>,
    breakpoints: Vec<f64>,
}

pub(crate) fn bind_points(
    circuit: &Circuit,
    points: &[Vec<f64>],
    engine: &'static str,
) -> Result<Vec<CircuitDae>> {
    points
        .iter()
        .enumerate()
        .map(|(k, xi)| {
            CircuitDae::new(circuit, xi).map_err(|e| Error::PointFailure {
                engine,
                point: k + 1,
                xi: xi.clone(),
                source: Box::new(e),
            })
        })
        .collect()
}

impl StSystem {
    pub fn new(circuit: &Circuit, tset: &TestingSet, mode: LinearMode) -> Result<Self> {
        let n = circuit.size();
        let k = tset.len();
        Ok(Self {
            points: bind_points(circuit, &tset.points, "st")?,
            xi: tset.points.clone(),
            map: Arc::new(TestingMap {
                v: tset.v.clone(),
                v_inv: tset.v_inv.clone(),
                n,
            }),
            mode,
            scales: circuit.scales().repeat(k),
            rscales: circuit.residual_scales().repeat(k),
            names: circuit.unknowns.iter().map(|u| u.name.clone()).collect(),
            breakpoints: circuit.breakpoints(),
        })
    }

    pub fn map(&self) -> &Arc<TestingMap> {
        &self.map
    }

    pub fn mode(&self) -> LinearMode {
        self.mode
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.xi
    }

    pub fn point_system(&self, k: usize) -> &CircuitDae {
        &self.points[k]
    }

    /// Coupled Jacobian assembled entry by entry: block `(k, j)` is
    /// `V[k, j]·J_k` by the chain rule through `x(ξ_k) = Σ_j V[k, j] x̂ʲ`.
    pub fn assemble_coupled(&self, blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
        let n = self.map.n;
        let k = blocks.len();
        let mut out = DMatrix::zeros(k * n, k * n);
        for (kk, jk) in blocks.iter().enumerate() {
            for j in 0..k {
                let v = self.map.v[(kk, j)];
                for r in 0..n {
                    for c in 0..n {
                        out[(kk * n + r, j * n + c)] = v * jk[(r, c)];
                    }
                }
            }
        }
        out
    }
}

impl DaeSystem for StSystem {
    fn dim(&self) -> usize {
        self.scales.len()
    }

    fn state_scales(&self) -> &[f64] {
        &self.scales
    }

    fn residual_scales(&self) -> &[f64] {
        &self.rscales
    }

    fn eval(&self, x: &DVector<f64>, t: f64) -> Result<DaeEval> {
        let n = self.map.n;
        let xp = self.map.to_points(x);
        let evals: Vec<_> = self
            .points
            .par_iter()
            .enumerate()
            .map(|(k, p)| p.bound.eval(&xp.rows(k * n, n).into_owned(), t))
            .collect();
        let dim = x.len();
        let mut q = DVector::zeros(dim);
        let mut f = DVector::zeros(dim);
        let mut b = DVector::zeros(dim);
        let mut dq = Vec::with_capacity(evals.len());
        let mut df = Vec::with_capacity(evals.len());
        for (k, e) in evals.into_iter().enumerate() {
            q.rows_mut(k * n, n).copy_from(&e.q);
            f.rows_mut(k * n, n).copy_from(&e.f);
            b.rows_mut(k * n, n).copy_from(&e.b);
            dq.push(e.dq);
            df.push(e.df);
        }
        let jac = match self.mode {
            LinearMode::Decoupled => Jacobians::Testing {
                dq,
                df,
                map: self.map.clone(),
            },
            LinearMode::Coupled => Jacobians::Dense {
                dq: self.assemble_coupled(&dq),
                df: self.assemble_coupled(&df),
            },
        };
        Ok(DaeEval { q, f, b, jac })
    }

    fn limit_update(&self, x: &DVector<f64>, dx: DVector<f64>) -> DVector<f64> {
        // Limit each testing point's own update; the map is linear so this
        // keeps the blocks independent.
        let n = self.map.n;
        let xp = self.map.to_points(x);
        let mut dp = self.map.to_points(&dx);
        let mut touched = false;
        for (k, p) in self.points.iter().enumerate() {
            let xk = xp.rows(k * n, n).into_owned();
            let dk = dp.rows(k * n, n).into_owned();
            let s = p.limit_scale(&xk, &dk);
            if s < 1.0 {
                dp.rows_mut(k * n, n).scale_mut(s);
                touched = true;
            }
        }
        if touched {
            self.map.to_coeffs(&dp)
        } else {
            dx
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.breakpoints.clone()
    }

    fn unknown_name(&self, i: usize) -> String {
        let n = self.map.n;
        format!(
            "{} at testing point {} {:?}",
            self.names[i % n],
            i / n + 1,
            self.xi[i / n]
        )
    }
}

/// Coefficients with `x` in the `H_1` block and zeros elsewhere.
pub fn deterministic_state(x: &DVector<f64>, k: usize) -> DVector<f64> {
    let n = x.len();
    let mut out = DVector::zeros(n * k);
    out.rows_mut(0, n).copy_from(x);
    out
}

/// Initial guess: the deterministic operating point at the mean parameter.
pub(crate) fn mean_point_guess(
    circuit: &Circuit,
    basis: &GpcBasis,
    opts: &NewtonOptions,
) -> DVector<f64> {
    let x = CircuitDae::new(circuit, &basis.mean_point())
        .and_then(|s| dc_solve_system(&s, None, opts))
        .map(|s| s.x)
        .unwrap_or_else(|_| DVector::zeros(circuit.size()));
    deterministic_state(&x, basis.len())
}

/// Stochastic DC operating point.
pub fn st_solve_dc(
    circuit: &Circuit,
    basis: &GpcBasis,
    tset: &TestingSet,
    opts: &NewtonOptions,
    mode: LinearMode,
) -> Result<(GpcState, SolveStats)> {
    check_sizes(basis, tset)?;
    let sys = StSystem::new(circuit, tset, mode)?;
    let guess = mean_point_guess(circuit, basis, opts);
    let sol = dc_solve_system(&sys, Some(guess), opts)?;
    Ok((
        GpcState::new(sol.x, circuit.size(), 0.0),
        SolveStats {
            newton_iters: sol.iterations,
            solves: tset.len(),
            ..Default::default()
        },
    ))
}

/// Stochastic transient from `x0` (stochastic DC point or `.ic` when `None`).
pub fn st_solve_transient(
    circuit: &Circuit,
    basis: &GpcBasis,
    tset: &TestingSet,
    x0: Option<DVector<f64>>,
    t_stop: f64,
    opts: &TransientOptions,
    mode: LinearMode,
) -> Result<(Vec<GpcState>, SolveStats)> {
    check_sizes(basis, tset)?;
    let n = circuit.size();
    let mut stats = SolveStats {
        solves: tset.len(),
        ..Default::default()
    };
    let x0 = match (x0, circuit.initial_state()) {
        (Some(x), _) => x,
        (None, Some(ic)) => deterministic_state(&ic, basis.len()),
        (None, None) => {
            let (s, st) = st_solve_dc(circuit, basis, tset, &opts.newton, mode)?;
            stats.merge(&st);
            s.coeffs
        }
    };
    let sys = StSystem::new(circuit, tset, mode)?;
    let traj = transient_solve(&sys, &x0, 0.0, t_stop, opts)?;
    stats.newton_iters += traj.newton_iters;
    stats.accepted_steps += traj.accepted;
    stats.rejected_steps += traj.rejected;
    let states = traj
        .times
        .iter()
        .zip(traj.states)
        .map(|(&t, x)| GpcState::new(x, n, t))
        .collect();
    Ok((states, stats))
}

fn check_sizes(basis: &GpcBasis, tset: &TestingSet) -> Result<()> {
    if basis.len() != tset.len() {
        return Err(Error::DimensionMismatch {
            expected: basis.len(),
            got: tset.len(),
        });
    }
    Ok(())
}

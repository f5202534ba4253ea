//! Stochastic Galerkin: projection of the gPC residual onto every `H_j`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::result::{GpcState, SolveStats};
use super::st::{bind_points, deterministic_state, mean_point_guess};
use crate::circuit::Circuit;
use crate::detsolve::{
    dc_solve_system, transient_solve, CircuitDae, DaeEval, DaeSystem, Jacobians, NewtonOptions,
    TransientOptions,
};
use crate::error::{Error, Result};
use crate::polychaos::{Distribution, GpcBasis};
use crate::quadrature::{gauss_tensor, smolyak_grid, RuleND};

/// Gauss points per axis for the Galerkin inner products: exact to degree
/// `2p + dep_degree + 2`, the last term a margin for device nonlinearity.
pub fn sg_points_per_axis(order: usize, dep_degree: usize) -> usize {
    (2 * order + dep_degree + 3).div_ceil(2)
}

/// Default Galerkin rule: tensor Gauss of [`sg_points_per_axis`] points.
pub fn sg_quadrature(dists: &[Distribution], order: usize, dep_degree: usize) -> Result<RuleND> {
    gauss_tensor(dists, sg_points_per_axis(order, dep_degree))
}

/// Sparse alternative to [`sg_quadrature`] for larger `d`.
pub fn sg_quadrature_sparse(dists: &[Distribution], level: usize) -> Result<RuleND> {
    smolyak_grid(dists, level)
}

/// The `K·n` Galerkin system: block `j` is `Σ_q w_q H_j(ξ_q)·r(x̃(ξ_q), ξ_q)`.
pub struct SgSystem {
    nodes: Vec<CircuitDae>,
    weights: Vec<f64>,
    phi: Vec<DVector<f64>>,
    k: usize,
    n: usize,
    scales: Vec<f64>,
    rscales: Vec<f64>,
    names: Vec<String>,
    breakpoints: Vec<f64>,
}

impl SgSystem {
    pub fn new(circuit: &Circuit, basis: &GpcBasis, quad: &RuleND) -> Result<Self> {
        if quad.dim() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                got: quad.dim(),
            });
        }
        let k = basis.len();
        Ok(Self {
            nodes: bind_points(circuit, &quad.nodes, "sg")?,
            weights: quad.weights.clone(),
            phi: quad
                .nodes
                .iter()
                .map(|x| basis.eval_vector(x))
                .collect::<Result<_>>()?,
            k,
            n: circuit.size(),
            scales: circuit.scales().repeat(k),
            rscales: circuit.residual_scales().repeat(k),
            names: circuit.unknowns.iter().map(|u| u.name.clone()).collect(),
            breakpoints: circuit.breakpoints(),
        })
    }

    fn node_state(&self, q: usize, x: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut out = DVector::zeros(n);
        for (j, h) in self.phi[q].iter().enumerate() {
            out.axpy(*h, &x.rows(j * n, n), 1.0);
        }
        out
    }
}

impl DaeSystem for SgSystem {
    fn dim(&self) -> usize {
        self.k * self.n
    }

    fn state_scales(&self) -> &[f64] {
        &self.scales
    }

    fn residual_scales(&self) -> &[f64] {
        &self.rscales
    }

    fn eval(&self, x: &DVector<f64>, t: f64) -> Result<DaeEval> {
        let (n, k) = (self.n, self.k);
        let evals: Vec<_> = self
            .nodes
            .par_iter()
            .enumerate()
            .map(|(q, sys)| sys.bound.eval(&self.node_state(q, x), t))
            .collect();
        let dim = n * k;
        let mut qv = DVector::zeros(dim);
        let mut f = DVector::zeros(dim);
        let mut b = DVector::zeros(dim);
        let mut dq = DMatrix::zeros(dim, dim);
        let mut df = DMatrix::zeros(dim, dim);
        for (qi, e) in evals.iter().enumerate() {
            let w = self.weights[qi];
            let phi = &self.phi[qi];
            for j in 0..k {
                let wj = w * phi[j];
                if wj == 0.0 {
                    continue;
                }
                qv.rows_mut(j * n, n).axpy(wj, &e.q, 1.0);
                f.rows_mut(j * n, n).axpy(wj, &e.f, 1.0);
                b.rows_mut(j * n, n).axpy(wj, &e.b, 1.0);
                for l in 0..k {
                    let c = wj * phi[l];
                    if c == 0.0 {
                        continue;
                    }
                    let mut blk = dq.view_mut((j * n, l * n), (n, n));
                    blk += &e.dq * c;
                    let mut blk = df.view_mut((j * n, l * n), (n, n));
                    blk += &e.df * c;
                }
            }
        }
        Ok(DaeEval {
            q: qv,
            f,
            b,
            jac: Jacobians::Dense { dq, df },
        })
    }

    fn limit_scale(&self, x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
        (0..self.nodes.len())
            .map(|q| {
                self.nodes[q]
                    .bound
                    .limit_scale(&self.node_state(q, x), &self.node_state(q, dx))
            })
            .fold(1.0, f64::min)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.breakpoints.clone()
    }

    fn unknown_name(&self, i: usize) -> String {
        format!(
            "{} (coefficient {})",
            self.names[i % self.n],
            i / self.n + 1
        )
    }
}

pub fn sg_solve_dc(
    circuit: &Circuit,
    basis: &GpcBasis,
    quad: &RuleND,
    opts: &NewtonOptions,
) -> Result<(GpcState, SolveStats)> {
    let sys = SgSystem::new(circuit, basis, quad)?;
    let guess = mean_point_guess(circuit, basis, opts);
    let sol = dc_solve_system(&sys, Some(guess), opts)?;
    Ok((
        GpcState::new(sol.x, circuit.size(), 0.0),
        SolveStats {
            newton_iters: sol.iterations,
            solves: quad.len(),
            ..Default::default()
        },
    ))
}

pub fn sg_solve_transient(
    circuit: &Circuit,
    basis: &GpcBasis,
    quad: &RuleND,
    x0: Option<DVector<f64>>,
    t_stop: f64,
    opts: &TransientOptions,
) -> Result<(Vec<GpcState>, SolveStats)> {
    let n = circuit.size();
    let mut stats = SolveStats {
        solves: quad.len(),
        ..Default::default()
    };
    let x0 = match (x0, circuit.initial_state()) {
        (Some(x), _) => x,
        (None, Some(ic)) => deterministic_state(&ic, basis.len()),
        (None, None) => {
            let (s, st) = sg_solve_dc(circuit, basis, quad, &opts.newton)?;
            stats.newton_iters += st.newton_iters;
            s.coeffs
        }
    };
    let sys = SgSystem::new(circuit, basis, quad)?;
    let traj = transient_solve(&sys, &x0, 0.0, t_stop, opts)?;
    stats.newton_iters += traj.newton_iters;
    stats.accepted_steps += traj.accepted;
    stats.rejected_steps += traj.rejected;
    Ok((
        traj.times
            .iter()
            .zip(traj.states)
            .map(|(&t, x)| GpcState::new(x, n, t))
            .collect(),
        stats,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::st::{st_solve_dc, LinearMode};
    use crate::spectral::testing::{default_candidates, select_testing_points, DEFAULT_BETA};

    #[test]
    fn points_per_axis() {
        assert_eq!(sg_points_per_axis(3, 1), 5);
        assert_eq!(sg_points_per_axis(0, 0), 2);
    }

    #[test]
    fn affine_circuit_matches_st() {
        let c = Circuit::parse("param xi uniform\nparam g gaussian\nI1 0 1 1m*(1+0.2*xi)\nR1 1 0 1k\nI2 0 2 1m*(1+0.1*g+0.05*xi)\nR2 2 0 2k\n").unwrap();
        let b = GpcBasis::total_degree(c.distributions(), 3).unwrap();
        let quad = sg_quadrature(&c.distributions(), 3, c.max_param_degree()).unwrap();
        let opts = NewtonOptions::default();
        let (sg, _) = sg_solve_dc(&c, &b, &quad, &opts).unwrap();
        let ts = select_testing_points(
            &default_candidates(&c.distributions(), 3).unwrap(),
            &b,
            DEFAULT_BETA,
        )
        .unwrap();
        let (st, _) = st_solve_dc(&c, &b, &ts, &opts, LinearMode::Decoupled).unwrap();
        assert!((sg.coeffs - st.coeffs).amax() < 1e-8);
    }

    #[test]
    fn galerkin_residual_is_orthogonal() {
        let c =
            Circuit::parse("param xi uniform\nV1 1 0 1\nR1 1 2 1k*(1+0.2*xi)\nD1 2 0\n").unwrap();
        let b = GpcBasis::total_degree(c.distributions(), 3).unwrap();
        let quad = sg_quadrature(&c.distributions(), 3, 1).unwrap();
        let opts = NewtonOptions::default();
        let (s, _) = sg_solve_dc(&c, &b, &quad, &opts).unwrap();
        let sys = SgSystem::new(&c, &b, &quad).unwrap();
        let e = sys.eval(&s.coeffs, 0.0).unwrap();
        let r = &e.f - &e.b;
        let scaled: f64 = r
            .iter()
            .zip(sys.residual_scales())
            .map(|(v, s)| (v / s).abs())
            .fold(0.0, f64::max);
        assert!(scaled < opts.abs_tol, "{scaled}");
    }

    #[test]
    fn deterministic_limit() {
        let c = Circuit::parse("param xi gaussian\nV1 1 0 1\nR1 1 2 1k\nD1 2 0\n").unwrap();
        let b = GpcBasis::total_degree(c.distributions(), 2).unwrap();
        let quad = sg_quadrature(&c.distributions(), 2, 0).unwrap();
        let (s, _) = sg_solve_dc(&c, &b, &quad, &NewtonOptions::default()).unwrap();
        assert!(s.block(1).amax() < 1e-10 && s.block(2).amax() < 1e-10);
    }
}

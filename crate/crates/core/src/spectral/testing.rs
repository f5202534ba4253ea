//! Testing-point selection for stochastic testing.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{condition_number, DenseLu};
use crate::polychaos::{Distribution, GpcBasis};
use crate::quadrature::{gauss_tensor, smolyak_grid, RuleND};

pub const DEFAULT_BETA: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct TestingSet {
    pub points: Vec<Vec<f64>>,
    /// Candidate-rule weights of the selected points.
    pub weights: Vec<f64>,
    /// `V[i, j] = H_j(ξ_i)`.
    pub v: DMatrix<f64>,
    pub v_inv: DMatrix<f64>,
    pub beta: f64,
    /// Number of candidates `N̂` offered to the selection.
    pub candidates: usize,
    pub cond: f64,
}

impl TestingSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Candidate rule: tensor Gauss with `p + 1` points per axis for `d <= 3`,
/// otherwise a Smolyak grid of level `p + 1`.
pub fn default_candidates(dists: &[Distribution], order: usize) -> Result<RuleND> {
    if dists.len() <= 3 {
        gauss_tensor(dists, order + 1)
    } else {
        smolyak_grid(dists, order + 1)
    }
}

/// Greedy selection: visit candidates by decreasing `|w|` and keep a node
/// when the part of its normalized basis vector orthogonal to the rows
/// already kept has norm above `beta`.
pub fn select_testing_points(
    candidates: &RuleND,
    basis: &GpcBasis,
    beta: f64,
) -> Result<TestingSet> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidOption(format!(
            "beta must lie in (0, 1), got {beta}"
        )));
    }
    if candidates.dim() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            got: candidates.dim(),
        });
    }
    let k = basis.len();
    if candidates.len() < k {
        return Err(Error::TestingSelection {
            accepted: 0,
            required: k,
        });
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        candidates.weights[b]
            .abs()
            .total_cmp(&candidates.weights[a].abs())
    });

    let mut q: Vec<DVector<f64>> = Vec::with_capacity(k);
    let mut picked: Vec<usize> = Vec::with_capacity(k);
    for &j in &order {
        let h = basis.eval_vector(&candidates.nodes[j])?;
        let norm = h.norm();
        if norm == 0.0 {
            continue;
        }
        let mut r = h / norm;
        // Two Gram-Schmidt passes keep the basis orthogonal to rounding.
        for _ in 0..2 {
            for qi in &q {
                let c = qi.dot(&r);
                r.axpy(-c, qi, 1.0);
            }
        }
        let rn = r.norm();
        if rn > beta {
            q.push(r / rn);
            picked.push(j);
            if picked.len() == k {
                break;
            }
        }
    }
    if picked.len() < k {
        return Err(Error::TestingSelection {
            accepted: picked.len(),
            required: k,
        });
    }
    let points: Vec<Vec<f64>> = picked
        .iter()
        .map(|&j| candidates.nodes[j].clone())
        .collect();
    let weights = picked.iter().map(|&j| candidates.weights[j]).collect();
    let mut v = DMatrix::zeros(k, k);
    for (i, p) in points.iter().enumerate() {
        v.row_mut(i).copy_from(&basis.eval_vector(p)?.transpose());
    }
    let lu = DenseLu::factor(v.clone())
        .map_err(|_| Error::Quadrature("testing matrix is singular".into()))?;
    let v_inv = lu.solve_mat(&DMatrix::identity(k, k));
    Ok(TestingSet {
        cond: condition_number(&v),
        points,
        weights,
        v,
        v_inv,
        beta,
        candidates: candidates.len(),
    })
}

/// `κ_samp = N̂ / K`.
pub fn sampling_speedup_ratio(quad: &RuleND, basis: &GpcBasis) -> f64 {
    quad.len() as f64 / basis.len() as f64
}

//! One-dimensional Gauss and Clenshaw-Curtis rules and their tensor-product
//! and Smolyak combinations. All weights are for probability measures, so
//! they sum to one.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::polychaos::{binomial, recurrence_table, Distribution};

/// Coordinates closer than this are the same node.
pub const MERGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule1DKind {
    Gauss,
    ClenshawCurtis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub kind: Rule1DKind,
    pub exact_degree: usize,
}

impl Rule1D {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleNDKind {
    Tensor,
    Smolyak,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleND {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub kind: RuleNDKind,
}

impl RuleND {
    /// Number of nodes `N̂`.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.nodes.first().map_or(0, Vec::len)
    }
}

/// Gauss rule with `n_points` nodes for the measure of `dist` (Golub-Welsch).
pub fn gauss_rule(dist: Distribution, n_points: usize) -> Result<Rule1D> {
    if n_points == 0 {
        return Err(Error::Quadrature(
            "a Gauss rule needs at least one point".into(),
        ));
    }
    let table = recurrence_table(dist, n_points - 1)?;
    let mut diag = table.alpha.clone();
    let mut off: Vec<f64> = table.beta[1..].iter().map(|b| b.sqrt()).collect();
    off.push(0.0);
    let mut first = vec![0.0; n_points];
    first[0] = 1.0;
    tridiagonal_ql(&mut diag, &mut off, &mut first)?;

    let mut pairs: Vec<(f64, f64)> = diag
        .iter()
        .zip(&first)
        .map(|(&x, &z)| (table.center + table.half_width * x, z * z * table.beta[0]))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Symmetric measures get exactly symmetric rules (and an exact center node).
    if table.alpha.iter().all(|&a| a == 0.0) {
        let n = pairs.len();
        for i in 0..n / 2 {
            let j = n - 1 - i;
            let x = 0.5 * (pairs[j].0 - pairs[i].0);
            let w = 0.5 * (pairs[i].1 + pairs[j].1);
            pairs[i] = (table.center - x, w);
            pairs[j] = (table.center + x, w);
        }
        if n % 2 == 1 {
            pairs[n / 2].0 = table.center;
        }
    }
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    Ok(Rule1D {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1 / total).collect(),
        kind: Rule1DKind::Gauss,
        exact_degree: 2 * n_points - 1,
    })
}

/// Implicit-shift QL on a symmetric tridiagonal matrix. On return `diag` holds
/// the eigenvalues and `z` the first row of the eigenvector matrix (when `z`
/// starts as `e_1`). `off[i]` couples rows `i` and `i + 1`.
fn tridiagonal_ql(diag: &mut [f64], off: &mut [f64], z: &mut [f64]) -> Result<()> {
    let n = diag.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Quadrature(
                    "tridiagonal eigenvalue iteration did not converge".into(),
                ));
            }
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + off[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    off[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
                let f = z[i + 1];
                z[i + 1] = s * z[i] + c * f;
                z[i] = c * z[i] - s * f;
            }
            if deflated {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
    Ok(())
}

/// Number of Clenshaw-Curtis points at `level`: 1, 3, 5, 9, 17, …
pub fn clenshaw_curtis_size(level: usize) -> usize {
    if level == 0 {
        1
    } else {
        (1usize << level) + 1
    }
}

/// Nested Clenshaw-Curtis rule on `[-1, 1]` with density 1/2.
pub fn clenshaw_curtis_rule(level: usize) -> Rule1D {
    let n = clenshaw_curtis_size(level);
    if n == 1 {
        return Rule1D {
            nodes: vec![0.0],
            weights: vec![1.0],
            kind: Rule1DKind::ClenshawCurtis,
            exact_degree: 0,
        };
    }
    let big_n = n - 1;
    let nf = big_n as f64;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for j in 0..n {
        let theta = std::f64::consts::PI * j as f64 / nf;
        nodes[j] = -theta.cos();
        let mut s = 0.0;
        for k in 1..=big_n / 2 {
            let b = if 2 * k == big_n { 1.0 } else { 2.0 };
            let kf = k as f64;
            s += b / (4.0 * kf * kf - 1.0) * (2.0 * kf * theta).cos();
        }
        let c = if j == 0 || j == big_n { 1.0 } else { 2.0 };
        // ∫ dx weights, halved for the density 1/2.
        weights[j] = 0.5 * c / nf * (1.0 - s);
    }
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        nodes[i] = -x;
        nodes[j] = x;
        let w = 0.5 * (weights[i] + weights[j]);
        weights[i] = w;
        weights[j] = w;
    }
    nodes[n / 2] = 0.0;
    Rule1D {
        nodes,
        weights,
        kind: Rule1DKind::ClenshawCurtis,
        exact_degree: n - 1,
    }
}

/// Clenshaw-Curtis rule for a parameter; only uniform parameters qualify.
pub fn clenshaw_curtis_for(dist: Distribution, level: usize) -> Result<Rule1D> {
    if dist != Distribution::Uniform {
        return Err(Error::Quadrature(format!(
            "Clenshaw-Curtis rules need a uniform parameter on [-1, 1], got {dist}"
        )));
    }
    Ok(clenshaw_curtis_rule(level))
}

/// Tensor-product rule; the first dimension varies slowest.
pub fn tensor_grid(rules: &[Rule1D]) -> RuleND {
    let mut nodes = vec![Vec::with_capacity(rules.len())];
    let mut weights = vec![1.0];
    for rule in rules {
        let mut next_nodes = Vec::with_capacity(nodes.len() * rule.len());
        let mut next_weights = Vec::with_capacity(nodes.len() * rule.len());
        for (node, &w) in nodes.iter().zip(&weights) {
            for (&x, &wx) in rule.nodes.iter().zip(&rule.weights) {
                let mut n = node.clone();
                n.push(x);
                next_nodes.push(n);
                next_weights.push(w * wx);
            }
        }
        nodes = next_nodes;
        weights = next_weights;
    }
    RuleND {
        nodes,
        weights,
        kind: RuleNDKind::Tensor,
    }
}

/// Tensor Gauss rule with `n_points` per dimension.
pub fn gauss_tensor(dists: &[Distribution], n_points: usize) -> Result<RuleND> {
    let rules = dists
        .iter()
        .map(|&d| gauss_rule(d, n_points))
        .collect::<Result<Vec<_>>>()?;
    Ok(tensor_grid(&rules))
}

/// Gauss points needed for exactness up to `degree`.
pub fn gauss_points_for_degree(degree: usize) -> usize {
    degree / 2 + 1
}

/// The 1-D rule of Smolyak index `i >= 1` for one parameter.
fn smolyak_1d(dist: Distribution, i: usize) -> Result<Rule1D> {
    match dist {
        Distribution::Uniform => Ok(clenshaw_curtis_rule(i - 1)),
        _ => gauss_rule(dist, i),
    }
}

/// Smolyak sparse grid of `level >= 1` (level 1 is the single mean-like node).
pub fn smolyak_grid(dists: &[Distribution], level: usize) -> Result<RuleND> {
    if level < 1 {
        return Err(Error::Quadrature("Smolyak level must be at least 1".into()));
    }
    if dists.is_empty() {
        return Err(Error::Quadrature(
            "Smolyak grid needs at least one dimension".into(),
        ));
    }
    let d = dists.len();
    let q = level + d - 1;
    let mut cache: Vec<Vec<Rule1D>> = Vec::with_capacity(d);
    for &dist in dists {
        cache.push(
            (1..=level)
                .map(|i| smolyak_1d(dist, i))
                .collect::<Result<_>>()?,
        );
    }
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let mut idx = vec![1usize; d];
    let lo = q.saturating_sub(d - 1).max(d);
    loop {
        let total: usize = idx.iter().sum();
        if total >= lo && total <= q {
            let gap = q - total;
            let coeff =
                binomial(d - 1, gap) as f64 * if gap.is_multiple_of(2) { 1.0 } else { -1.0 };
            let rules: Vec<Rule1D> = idx
                .iter()
                .enumerate()
                .map(|(k, &i)| cache[k][i - 1].clone())
                .collect();
            let grid = tensor_grid(&rules);
            nodes.extend(grid.nodes);
            weights.extend(grid.weights.into_iter().map(|w| coeff * w));
        }
        // Next multi-index with entries in 1..=level and sum <= q.
        let mut k = d;
        loop {
            if k == 0 {
                let (nodes, weights) = merge_duplicates(nodes, weights, MERGE_TOL);
                return Ok(RuleND {
                    nodes,
                    weights,
                    kind: RuleNDKind::Smolyak,
                });
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] <= level && idx.iter().sum::<usize>() <= q {
                break;
            }
            idx[k] = 1;
        }
    }
}

/// Merge nodes whose coordinates agree within `tol`, summing their weights.
/// The result is sorted lexicographically.
pub fn merge_duplicates(
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
    tol: f64,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut pairs: Vec<(Vec<f64>, f64)> = nodes.into_iter().zip(weights).collect();
    pairs.sort_by(|a, b| {
        a.0.iter()
            .zip(&b.0)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out_nodes: Vec<Vec<f64>> = Vec::with_capacity(pairs.len());
    let mut out_weights: Vec<f64> = Vec::with_capacity(pairs.len());
    for (node, w) in pairs {
        let mut hit = None;
        for j in (0..out_nodes.len()).rev() {
            if out_nodes[j][0] < node[0] - tol {
                break;
            }
            if out_nodes[j]
                .iter()
                .zip(&node)
                .all(|(a, b)| (a - b).abs() <= tol)
            {
                hit = Some(j);
                break;
            }
        }
        match hit {
            Some(j) => out_weights[j] += w,
            None => {
                out_nodes.push(node);
                out_weights.push(w);
            }
        }
    }
    (out_nodes, out_weights)
}

/// `Σ_j w^j f(ξ^j)`. Node evaluations may run concurrently; the sum is
/// accumulated in node order.
pub fn integrate<F>(rule: &RuleND, f: F) -> Result<DVector<f64>>
where
    F: Fn(&[f64]) -> Result<DVector<f64>> + Sync,
{
    let values = rule
        .nodes
        .par_iter()
        .map(|x| f(x))
        .collect::<Result<Vec<_>>>()?;
    let mut acc: Option<DVector<f64>> = None;
    for (v, &w) in values.iter().zip(&rule.weights) {
        match acc.as_mut() {
            None => acc = Some(v * w),
            Some(a) => a.axpy(w, v, 1.0),
        }
    }
    acc.ok_or_else(|| Error::Quadrature("empty rule".into()))
}

/// Scalar convenience form of [`integrate`], evaluated sequentially.
pub fn integrate_scalar(rule: &RuleND, f: impl Fn(&[f64]) -> f64) -> f64 {
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(x, &w)| w * f(x))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_beta_rule_is_centered() {
        for n in 1..=5 {
            let r = gauss_rule(
                Distribution::Beta {
                    alpha: 2.0,
                    beta: 2.0,
                },
                n,
            )
            .unwrap();
            assert!((r.integrate(|x| x) - 0.5).abs() < 1e-14);
            assert!(r.nodes.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }

    #[test]
    fn two_point_hermite_rule() {
        let r = gauss_rule(Distribution::Gaussian, 2).unwrap();
        assert!((r.nodes[0] + 1.0).abs() < 1e-15 && (r.nodes[1] - 1.0).abs() < 1e-15);
        assert!((r.weights[0] - 0.5).abs() < 1e-15 && (r.weights[1] - 0.5).abs() < 1e-15);
        assert!((r.integrate(|x| x * x) - 1.0).abs() < 1e-14);
        assert_eq!(r.exact_degree, 3);
    }

    #[test]
    fn two_point_legendre_rule() {
        let r = gauss_rule(Distribution::Uniform, 2).unwrap();
        let s = 1.0 / 3f64.sqrt();
        assert!((r.nodes[0] + s).abs() < 1e-15 && (r.nodes[1] - s).abs() < 1e-15);
        assert!((r.integrate(|x| x * x) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn one_point_rule_is_the_mean() {
        let r = gauss_rule(Distribution::Gaussian, 1).unwrap();
        assert_eq!(r.nodes, vec![0.0]);
        assert_eq!(r.weights, vec![1.0]);
        let g = gauss_rule(Distribution::Gamma { shape: 3.0 }, 1).unwrap();
        assert!((g.nodes[0] - 3.0).abs() < 1e-14);
        assert!(gauss_rule(Distribution::Uniform, 0).is_err());
    }

    #[test]
    fn clenshaw_curtis_levels() {
        let r0 = clenshaw_curtis_rule(0);
        assert_eq!(
            (r0.nodes.clone(), r0.weights.clone()),
            (vec![0.0], vec![1.0])
        );
        let r1 = clenshaw_curtis_rule(1);
        assert_eq!(r1.nodes, vec![-1.0, 0.0, 1.0]);
        assert!((r1.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((r1.integrate(|x| x * x) - 1.0 / 3.0).abs() < 1e-15);
        let r2 = clenshaw_curtis_rule(2);
        for x in &r1.nodes {
            assert!(r2.nodes.iter().any(|y| (x - y).abs() < 1e-15));
        }
        assert!(clenshaw_curtis_for(Distribution::Gaussian, 1).is_err());
        assert!(clenshaw_curtis_for(Distribution::Uniform, 1).is_ok());
    }

    #[test]
    fn clenshaw_curtis_exactness() {
        for level in 1..6 {
            let r = clenshaw_curtis_rule(level);
            for k in 0..r.len() as i32 {
                let exact = if k % 2 == 1 {
                    0.0
                } else {
                    1.0 / f64::from(k + 1)
                };
                assert!(
                    (r.integrate(|x| x.powi(k)) - exact).abs() < 1e-13,
                    "level {level} k {k}"
                );
            }
        }
    }

    #[test]
    fn tensor_examples() {
        let h = gauss_rule(Distribution::Gaussian, 2).unwrap();
        let g = tensor_grid(&[h.clone(), h.clone()]);
        assert_eq!(g.len(), 4);
        for (n, w) in g.nodes.iter().zip(&g.weights) {
            assert!(n.iter().all(|x| (x.abs() - 1.0).abs() < 1e-15));
            assert!((w - 0.25).abs() < 1e-15);
        }
        let one = tensor_grid(std::slice::from_ref(&h));
        assert_eq!(one.nodes, vec![vec![h.nodes[0]], vec![h.nodes[1]]]);
        assert_eq!(one.weights, h.weights);

        let u = gauss_rule(Distribution::Uniform, 2).unwrap();
        let m = tensor_grid(&[h, u]);
        let s = 1.0 / 3f64.sqrt();
        for n in &m.nodes {
            assert!((n[0].abs() - 1.0).abs() < 1e-15 && (n[1].abs() - s).abs() < 1e-15);
        }
    }

    #[test]
    fn smolyak_low_levels() {
        let d = [Distribution::Uniform, Distribution::Uniform];
        let l1 = smolyak_grid(&d, 1).unwrap();
        assert_eq!(l1.nodes, vec![vec![0.0, 0.0]]);
        assert_eq!(l1.weights, vec![1.0]);
        let l2 = smolyak_grid(&d, 2).unwrap();
        assert_eq!(l2.len(), 5);
        assert!((l2.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for n in &l2.nodes {
            assert!(n[0] == 0.0 || n[1] == 0.0);
        }
        assert!(smolyak_grid(&d, 0).is_err());
    }

    #[test]
    fn merge_is_idempotent() {
        let g = smolyak_grid(
            &[
                Distribution::Gaussian,
                Distribution::Uniform,
                Distribution::Gaussian,
            ],
            3,
        )
        .unwrap();
        let (n2, w2) = merge_duplicates(g.nodes.clone(), g.weights.clone(), MERGE_TOL);
        assert_eq!(n2, g.nodes);
        assert_eq!(w2, g.weights);
    }

    #[test]
    fn integrate_vector_examples() {
        let g = gauss_tensor(&[Distribution::Gaussian, Distribution::Uniform], 3).unwrap();
        let one = integrate(&g, |_| Ok(DVector::from_element(1, 1.0))).unwrap();
        assert!((one[0] - 1.0).abs() < 1e-14);
        let m2 = integrate(&g, |x| {
            Ok(DVector::from_vec(vec![x[0] * x[0], x[1] * x[1]]))
        })
        .unwrap();
        assert!((m2[0] - 1.0).abs() < 1e-13);
        assert!((m2[1] - 1.0 / 3.0).abs() < 1e-14);
    }
}

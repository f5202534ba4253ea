//! Orthonormal polynomial chaos bases for independent random parameters.
//!
//! Each univariate family is stored as its monic three-term recurrence
//!
//! ```text
//! p_{n+1}(x) = (x - a_n) p_n(x) - b_n p_{n-1}(x),   p_0 = 1, p_{-1} = 0
//! ```
//!
//! under the probability measure of the parameter, together with the norms
//! `‖p_n‖ = sqrt(b_1 ⋯ b_n)`. Orthonormal values are `p_n / ‖p_n‖`.
//! Beta parameters live on `[0, 1]` for the user but the recurrence is kept in
//! Jacobi form on `[-1, 1]`; the affine map is part of the table.

use std::fmt;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Beta as BetaDist, Distribution as _, Gamma as GammaDist, StandardNormal};

use crate::error::{Error, Result};

/// Highest supported polynomial degree for a basis.
pub const MAX_DEGREE: usize = 8;

/// Slack used when checking that a point lies in a bounded support.
const SUPPORT_SLACK: f64 = 1e-12;

/// Probability law of a single random parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    /// Standard normal on the real line.
    Gaussian,
    /// `ξ^{γ-1} e^{-ξ} / Γ(γ)` on `[0, ∞)`.
    Gamma { shape: f64 },
    /// `ξ^{α-1} (1-ξ)^{β-1} / B(α, β)` on `[0, 1]`.
    Beta { alpha: f64, beta: f64 },
    /// Density 1/2 on `[-1, 1]`.
    Uniform,
}

impl Distribution {
    pub fn gamma(shape: f64) -> Result<Self> {
        let d = Distribution::Gamma { shape };
        d.validate()?;
        Ok(d)
    }

    pub fn beta(alpha: f64, beta: f64) -> Result<Self> {
        let d = Distribution::Beta { alpha, beta };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Distribution::Gaussian | Distribution::Uniform => true,
            Distribution::Gamma { shape } => shape.is_finite() && shape > 0.0,
            Distribution::Beta { alpha, beta } => {
                alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidDistribution(format!(
                "{self}: shape parameters must be finite and positive"
            )))
        }
    }

    /// Closed support `(lo, hi)`; infinite ends are ±∞.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Distribution::Gaussian => (f64::NEG_INFINITY, f64::INFINITY),
            Distribution::Gamma { .. } => (0.0, f64::INFINITY),
            Distribution::Beta { .. } => (0.0, 1.0),
            Distribution::Uniform => (-1.0, 1.0),
        }
    }

    pub fn is_bounded(&self) -> bool {
        let (lo, hi) = self.support();
        lo.is_finite() && hi.is_finite()
    }

    pub fn contains(&self, x: f64) -> bool {
        let (lo, hi) = self.support();
        x.is_finite() && x >= lo - SUPPORT_SLACK && x <= hi + SUPPORT_SLACK
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Distribution::Gaussian | Distribution::Uniform => 0.0,
            Distribution::Gamma { shape } => shape,
            Distribution::Beta { alpha, beta } => alpha / (alpha + beta),
        }
    }

    /// Probability density at `x` (zero outside the support).
    pub fn pdf(&self, x: f64) -> f64 {
        if !self.contains(x) {
            return 0.0;
        }
        match *self {
            Distribution::Gaussian => (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            Distribution::Uniform => 0.5,
            Distribution::Gamma { shape } => {
                let x = x.max(0.0);
                ((shape - 1.0) * x.ln() - x - ln_gamma(shape)).exp()
            }
            Distribution::Beta { alpha, beta } => {
                let x = x.clamp(0.0, 1.0);
                let ln_b = ln_gamma(alpha) + ln_gamma(beta) - ln_gamma(alpha + beta);
                ((alpha - 1.0) * x.ln() + (beta - 1.0) * (1.0 - x).ln() - ln_b).exp()
            }
        }
    }

    /// Raw moment `E[ξ^k]` in closed form.
    pub fn moment(&self, k: u32) -> f64 {
        match *self {
            Distribution::Gaussian => {
                if k % 2 == 1 {
                    0.0
                } else {
                    (1..k).step_by(2).map(f64::from).product()
                }
            }
            Distribution::Uniform => {
                if k % 2 == 1 {
                    0.0
                } else {
                    1.0 / f64::from(k + 1)
                }
            }
            Distribution::Gamma { shape } => (0..k).map(|i| shape + f64::from(i)).product(),
            Distribution::Beta { alpha, beta } => (0..k)
                .map(|i| (alpha + f64::from(i)) / (alpha + beta + f64::from(i)))
                .product(),
        }
    }

    /// Draw one sample.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Distribution::Gaussian => rng.sample(StandardNormal),
            Distribution::Uniform => rng.random_range(-1.0..=1.0),
            Distribution::Gamma { shape } => GammaDist::new(shape, 1.0)
                .expect("validated shape")
                .sample(rng),
            Distribution::Beta { alpha, beta } => BetaDist::new(alpha, beta)
                .expect("validated shape")
                .sample(rng),
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Gaussian => write!(f, "gaussian"),
            Distribution::Uniform => write!(f, "uniform"),
            Distribution::Gamma { shape } => write!(f, "gamma({shape})"),
            Distribution::Beta { alpha, beta } => write!(f, "beta({alpha},{beta})"),
        }
    }
}

/// Lanczos approximation of `ln Γ(x)` for `x > 0`.
pub(crate) fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Monic three-term recurrence of one family, plus the norms of its members.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceTable {
    pub distribution: Distribution,
    pub degree_max: usize,
    /// `a_0 ..= a_{degree_max}`.
    pub alpha: Vec<f64>,
    /// `b_0 ..= b_{degree_max}`; `b_0` is the total mass (1).
    pub beta: Vec<f64>,
    /// `‖p_0‖ ..= ‖p_{degree_max}‖`.
    pub norms: Vec<f64>,
    /// Recurrence variable is `(ξ - center) / half_width`.
    pub center: f64,
    pub half_width: f64,
}

/// Recurrence coefficients for a basis of degree `degree_max` (capped at [`MAX_DEGREE`]).
pub fn recurrence_coeffs(dist: Distribution, degree_max: usize) -> Result<RecurrenceTable> {
    if degree_max > MAX_DEGREE {
        return Err(Error::DegreeTooHigh {
            degree: degree_max,
            max: MAX_DEGREE,
        });
    }
    recurrence_table(dist, degree_max)
}

/// Uncapped construction; quadrature rules need more terms than a basis does.
pub(crate) fn recurrence_table(dist: Distribution, degree_max: usize) -> Result<RecurrenceTable> {
    dist.validate()?;
    let m = degree_max + 1;
    let mut alpha = Vec::with_capacity(m);
    let mut beta = Vec::with_capacity(m);
    let (center, half_width) = match dist {
        Distribution::Beta { .. } => (0.5, 0.5),
        _ => (0.0, 1.0),
    };
    for n in 0..m {
        let nf = n as f64;
        let (a, b) = match dist {
            Distribution::Gaussian => (0.0, nf),
            Distribution::Uniform => (0.0, nf * nf / (4.0 * nf * nf - 1.0)),
            Distribution::Gamma { shape } => (2.0 * nf + shape, nf * (nf + shape - 1.0)),
            Distribution::Beta {
                alpha: pa,
                beta: pb,
            } => jacobi_coeffs(n, pb - 1.0, pa - 1.0),
        };
        alpha.push(a);
        beta.push(if n == 0 { 1.0 } else { b });
    }
    let mut norms = Vec::with_capacity(m);
    let mut sq = 1.0;
    for (n, &b) in beta.iter().enumerate() {
        if n > 0 {
            if !(b > 0.0) {
                return Err(Error::InvalidDistribution(format!(
                    "{dist}: non-positive recurrence coefficient b_{n} = {b}"
                )));
            }
            sq *= b;
        }
        norms.push(sq.sqrt());
    }
    Ok(RecurrenceTable {
        distribution: dist,
        degree_max,
        alpha,
        beta,
        norms,
        center,
        half_width,
    })
}

/// Monic Jacobi coefficients for the normalized weight `(1-x)^a (1+x)^b` on `[-1, 1]`.
fn jacobi_coeffs(n: usize, a: f64, b: f64) -> (f64, f64) {
    let nf = n as f64;
    let s = a + b;
    let an = if n == 0 {
        (b - a) / (s + 2.0)
    } else {
        (b * b - a * a) / ((2.0 * nf + s) * (2.0 * nf + s + 2.0))
    };
    let bn = match n {
        0 => 1.0,
        1 => 4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + s).powi(2) * (3.0 + s)),
        _ => {
            let t = 2.0 * nf + s;
            4.0 * nf * (nf + a) * (nf + b) * (nf + s) / (t * t * (t + 1.0) * (t - 1.0))
        }
    };
    (an, bn)
}

impl RecurrenceTable {
    fn to_reference(&self, point: f64) -> f64 {
        (point - self.center) / self.half_width
    }

    /// Orthonormal polynomials of degree `0..=degree_max` at `point`.
    pub fn eval_all(&self, point: f64) -> Vec<f64> {
        let x = self.to_reference(point);
        let mut out = Vec::with_capacity(self.degree_max + 1);
        let (mut prev, mut cur) = (0.0, 1.0);
        for n in 0..=self.degree_max {
            out.push(cur / self.norms[n]);
            let next = (x - self.alpha[n]) * cur - if n > 0 { self.beta[n] * prev } else { 0.0 };
            prev = cur;
            cur = next;
        }
        out
    }

    /// Orthonormal polynomial of degree `degree` at `point`.
    pub fn eval(&self, degree: usize, point: f64) -> Result<f64> {
        if degree > self.degree_max {
            return Err(Error::DegreeOutOfRange {
                degree,
                max: self.degree_max,
            });
        }
        let x = self.to_reference(point);
        let (mut prev, mut cur) = (0.0, 1.0);
        for n in 0..degree {
            let next = (x - self.alpha[n]) * cur - if n > 0 { self.beta[n] * prev } else { 0.0 };
            prev = cur;
            cur = next;
        }
        Ok(cur / self.norms[degree])
    }
}

/// See [`RecurrenceTable::eval`].
pub fn eval_univariate(table: &RecurrenceTable, degree: usize, point: f64) -> Result<f64> {
    table.eval(degree, point)
}

/// Exponents of a multivariate basis function.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn total_degree(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

/// Truncation rule for the multi-index set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexScheme {
    TotalDegree,
    TensorProduct,
}

/// Closed-form basis size.
pub fn basis_size(d: usize, p: usize, scheme: IndexScheme) -> usize {
    match scheme {
        IndexScheme::TotalDegree => binomial(p + d, p),
        IndexScheme::TensorProduct => (p + 1).pow(d as u32),
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Multi-indices in graded lexicographic order: ascending total degree,
/// ascending lexicographic within a degree.
pub fn build_index_set(d: usize, p: usize, scheme: IndexScheme) -> Vec<MultiIndex> {
    assert!(d >= 1, "at least one random parameter is required");
    let max_total = match scheme {
        IndexScheme::TotalDegree => p,
        IndexScheme::TensorProduct => p * d,
    };
    let mut out = Vec::with_capacity(basis_size(d, p, scheme));
    let mut cur = vec![0usize; d];
    for total in 0..=max_total {
        compositions(total, 0, p, &mut cur, &mut out);
    }
    out
}

// Every alpha with sum(alpha[pos..]) == remaining and each entry <= cap, in
// ascending lexicographic order.
fn compositions(
    remaining: usize,
    pos: usize,
    cap: usize,
    cur: &mut Vec<usize>,
    out: &mut Vec<MultiIndex>,
) {
    let d = cur.len();
    if pos == d - 1 {
        if remaining <= cap {
            cur[pos] = remaining;
            out.push(MultiIndex(cur.clone()));
        }
        return;
    }
    for a in 0..=remaining.min(cap) {
        cur[pos] = a;
        compositions(remaining - a, pos + 1, cap, cur, out);
    }
    cur[pos] = 0;
}

/// Multivariate orthonormal basis `{H_1, …, H_K}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GpcBasis {
    pub distributions: Vec<Distribution>,
    pub tables: Vec<RecurrenceTable>,
    pub index_set: Vec<MultiIndex>,
    pub order: usize,
    pub scheme: IndexScheme,
}

impl GpcBasis {
    pub fn new(
        distributions: Vec<Distribution>,
        order: usize,
        scheme: IndexScheme,
    ) -> Result<Self> {
        if distributions.is_empty() {
            return Err(Error::InvalidDistribution(
                "a basis needs at least one random parameter".into(),
            ));
        }
        let tables = distributions
            .iter()
            .map(|&d| recurrence_coeffs(d, order))
            .collect::<Result<Vec<_>>>()?;
        let index_set = build_index_set(distributions.len(), order, scheme);
        Ok(Self {
            distributions,
            tables,
            index_set,
            order,
            scheme,
        })
    }

    pub fn total_degree(distributions: Vec<Distribution>, order: usize) -> Result<Self> {
        Self::new(distributions, order, IndexScheme::TotalDegree)
    }

    /// Number of basis functions `K`.
    pub fn len(&self) -> usize {
        self.index_set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_set.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.distributions.len()
    }

    pub fn check_point(&self, xi: &[f64]) -> Result<()> {
        if xi.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: xi.len(),
            });
        }
        for (dim, (dist, &x)) in self.distributions.iter().zip(xi).enumerate() {
            if !dist.contains(x) {
                return Err(Error::OutsideSupport { dim, value: x });
            }
        }
        Ok(())
    }

    /// `H_k(ξ)` with 1-based `k`.
    pub fn eval(&self, k: usize, xi: &[f64]) -> Result<f64> {
        if k == 0 || k > self.len() {
            return Err(Error::BasisIndexOutOfRange {
                index: k,
                count: self.len(),
            });
        }
        self.check_point(xi)?;
        let alpha = &self.index_set[k - 1];
        let mut v = 1.0;
        for (j, &a) in alpha.0.iter().enumerate() {
            v *= self.tables[j].eval(a, xi[j])?;
        }
        Ok(v)
    }

    /// `[H_1(ξ); …; H_K(ξ)]`.
    pub fn eval_vector(&self, xi: &[f64]) -> Result<DVector<f64>> {
        self.check_point(xi)?;
        Ok(self.eval_vector_unchecked(xi))
    }

    pub(crate) fn eval_vector_unchecked(&self, xi: &[f64]) -> DVector<f64> {
        let uni: Vec<Vec<f64>> = self
            .tables
            .iter()
            .zip(xi)
            .map(|(t, &x)| t.eval_all(x))
            .collect();
        DVector::from_iterator(
            self.len(),
            self.index_set.iter().map(|alpha| {
                alpha
                    .0
                    .iter()
                    .enumerate()
                    .map(|(j, &a)| uni[j][a])
                    .product::<f64>()
            }),
        )
    }

    /// Mean of each parameter, a convenient nominal point.
    pub fn mean_point(&self) -> Vec<f64> {
        self.distributions.iter().map(Distribution::mean).collect()
    }
}

/// See [`GpcBasis::eval`].
pub fn eval_multivariate(basis: &GpcBasis, k: usize, xi: &[f64]) -> Result<f64> {
    basis.eval(k, xi)
}

/// See [`GpcBasis::eval_vector`].
pub fn eval_basis_vector(basis: &GpcBasis, xi: &[f64]) -> Result<DVector<f64>> {
    basis.eval_vector(xi)
}

/// Mean and variance of a scalar surrogate from its coefficients.
pub fn coefficient_moments(coeffs: &[f64]) -> (f64, f64) {
    let mean = coeffs.first().copied().unwrap_or(0.0);
    let var = coeffs.iter().skip(1).map(|c| c * c).sum();
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    #[test]
    fn hermite_values_match_closed_forms() {
        let t = recurrence_coeffs(Distribution::Gaussian, 3).unwrap();
        for &x in &[-1.7, 0.0, 0.4, 2.0] {
            assert!((t.eval(0, x).unwrap() - 1.0).abs() < 1e-15);
            assert!((t.eval(1, x).unwrap() - x).abs() < 1e-15);
            assert!((t.eval(2, x).unwrap() - (x * x - 1.0) / SQRT2).abs() < 1e-14);
            let h3 = (x * x * x - 3.0 * x) / 6f64.sqrt();
            assert!((t.eval(3, x).unwrap() - h3).abs() < 1e-14);
        }
        assert_eq!(t.eval(1, 2.0).unwrap(), 2.0);
    }

    #[test]
    fn legendre_values_match_closed_forms() {
        let t = recurrence_coeffs(Distribution::Uniform, 2).unwrap();
        assert!((t.eval(1, 0.3).unwrap() - 3f64.sqrt() * 0.3).abs() < 1e-15);
        assert!((t.eval(2, 1.0).unwrap() - 5f64.sqrt()).abs() < 1e-14);
        let x: f64 = -0.6;
        let p2 = 5f64.sqrt() * (3.0 * x * x - 1.0) / 2.0;
        assert!((t.eval(2, x).unwrap() - p2).abs() < 1e-14);
    }

    #[test]
    fn degree_zero_table_is_constant() {
        let t = recurrence_coeffs(Distribution::Gaussian, 0).unwrap();
        assert_eq!(t.degree_max, 0);
        assert_eq!(t.eval(0, 123.0).unwrap(), 1.0);
        assert!(matches!(
            t.eval(1, 0.0),
            Err(Error::DegreeOutOfRange { degree: 1, max: 0 })
        ));
    }

    #[test]
    fn invalid_shapes_and_degree_cap_are_rejected() {
        assert!(Distribution::gamma(0.0).is_err());
        assert!(Distribution::beta(1.0, -2.0).is_err());
        assert!(recurrence_coeffs(Distribution::Gamma { shape: -1.0 }, 2).is_err());
        assert!(matches!(
            recurrence_coeffs(Distribution::Uniform, 9),
            Err(Error::DegreeTooHigh { degree: 9, max: 8 })
        ));
    }

    #[test]
    fn recurrence_b_coefficients_are_positive() {
        for dist in [
            Distribution::Gaussian,
            Distribution::Uniform,
            Distribution::Gamma { shape: 0.5 },
            Distribution::Beta {
                alpha: 0.5,
                beta: 0.5,
            },
            Distribution::Beta {
                alpha: 2.0,
                beta: 5.0,
            },
        ] {
            let t = recurrence_coeffs(dist, 8).unwrap();
            assert!(t.beta.iter().skip(1).all(|&b| b > 0.0), "{dist}");
        }
    }

    #[test]
    fn index_set_examples() {
        assert_eq!(build_index_set(3, 3, IndexScheme::TotalDegree).len(), 20);
        let set = build_index_set(2, 1, IndexScheme::TotalDegree);
        assert_eq!(
            set,
            vec![
                MultiIndex(vec![0, 0]),
                MultiIndex(vec![0, 1]),
                MultiIndex(vec![1, 0])
            ]
        );
        assert_eq!(build_index_set(2, 1, IndexScheme::TensorProduct).len(), 4);
    }

    #[test]
    fn multivariate_examples() {
        let b =
            GpcBasis::total_degree(vec![Distribution::Gaussian, Distribution::Uniform], 2).unwrap();
        assert_eq!(b.eval(1, &[0.7, -0.2]).unwrap(), 1.0);
        let k = b.index_set.iter().position(|a| a.0 == vec![1, 1]).unwrap() + 1;
        assert!((b.eval(k, &[1.0, 0.5]).unwrap() - 3f64.sqrt() / 2.0).abs() < 1e-14);
        assert!(matches!(
            b.eval(1, &[0.0, 1.5]),
            Err(Error::OutsideSupport { dim: 1, .. })
        ));
        assert!(b.eval(0, &[0.0, 0.0]).is_err());

        let g = GpcBasis::total_degree(vec![Distribution::Gaussian], 2).unwrap();
        assert!((g.eval(3, &[0.0]).unwrap() + 1.0 / SQRT2).abs() < 1e-15);
    }

    #[test]
    fn basis_vector_examples() {
        let g = GpcBasis::total_degree(vec![Distribution::Gaussian], 2).unwrap();
        let v = g.eval_vector(&[0.0]).unwrap();
        assert_eq!(v[0], 1.0);
        assert_eq!(v[1], 0.0);
        assert!((v[2] + 1.0 / SQRT2).abs() < 1e-15);

        let c = GpcBasis::total_degree(
            vec![Distribution::Gamma { shape: 2.0 }, Distribution::Uniform],
            0,
        )
        .unwrap();
        assert_eq!(c.eval_vector(&[3.0, 0.1]).unwrap().as_slice(), &[1.0]);

        let u = GpcBasis::total_degree(vec![Distribution::Uniform], 1).unwrap();
        let v = u.eval_vector(&[1.0]).unwrap();
        assert_eq!(v[0], 1.0);
        assert!((v[1] - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn beta_evaluation_accepts_unit_interval() {
        let b = GpcBasis::total_degree(
            vec![Distribution::Beta {
                alpha: 2.0,
                beta: 3.0,
            }],
            2,
        )
        .unwrap();
        assert!(b.eval_vector(&[0.0]).is_ok());
        assert!(b.eval_vector(&[1.0]).is_ok());
        assert!(b.eval_vector(&[-0.1]).is_err());
        // Degree-1 orthonormal polynomial is (ξ - mean) / sd.
        let (a, bb) = (2.0, 3.0);
        let mean = a / (a + bb);
        let var = a * bb / ((a + bb) * (a + bb) * (a + bb + 1.0));
        let v = b.eval_vector(&[0.25]).unwrap();
        assert!((v[1] - (0.25 - mean) / f64::sqrt(var)).abs() < 1e-13);
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        for n in 1..15u32 {
            let fact: f64 = (1..n).map(f64::from).product();
            assert!((ln_gamma(f64::from(n)) - fact.ln()).abs() < 1e-12);
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }
}

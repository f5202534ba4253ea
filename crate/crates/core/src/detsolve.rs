//! Newton DC and trapezoidal transient integration of `d/dt q(x) + f(x) = b(t)`.
//!
//! The solvers work on any [`DaeSystem`]; the plain circuit at fixed `ξ` is
//! [`CircuitDae`], and the stochastic engines supply their own augmented systems.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::circuit::{BoundCircuit, Circuit};
use crate::error::{Error, Result};
use crate::linalg::{factor_named, kron_apply, kron_apply_mat, DenseLu};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Damping {
    None,
    LineSearch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iters: usize,
    pub damping: Damping,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            rel_tol: 1e-9,
            max_iters: 50,
            damping: Damping::None,
        }
    }
}

impl NewtonOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) || self.max_iters == 0 {
            return Err(Error::InvalidOption(
                "Newton tolerances must be positive and max_iters at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepMode {
    Adaptive,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepController {
    pub lte_tol: f64,
    pub h_min: f64,
    pub h_max: f64,
    /// Initial step; defaults to a small fraction of the time span.
    pub h_init: Option<f64>,
    pub grow_clamp: f64,
    pub shrink_clamp: f64,
    pub mode: StepMode,
}

impl Default for StepController {
    fn default() -> Self {
        Self {
            lte_tol: 1e-6,
            h_min: 1e-18,
            h_max: f64::INFINITY,
            h_init: None,
            grow_clamp: 2.0,
            shrink_clamp: 0.2,
            mode: StepMode::Adaptive,
        }
    }
}

impl StepController {
    pub fn fixed(h: f64) -> Self {
        Self {
            mode: StepMode::Fixed(h),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lte_tol > 0.0
            && self.h_min > 0.0
            && self.h_min <= self.h_max
            && self.grow_clamp >= 1.0
            && self.shrink_clamp > 0.0
            && self.shrink_clamp < 1.0
            && match self.mode {
                StepMode::Fixed(h) => h > 0.0,
                StepMode::Adaptive => true,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidOption(format!(
                "invalid step controller {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub accepted: usize,
    pub rejected: usize,
    pub newton_iters: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory has an initial state")
    }

    /// Smallest step taken.
    pub fn min_step(&self) -> Option<f64> {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .min_by(f64::total_cmp)
    }

    /// Linear interpolation of the state at `t` (clamped to the time span).
    pub fn interpolate(&self, t: f64) -> DVector<f64> {
        let i = self.times.partition_point(|&s| s <= t);
        if i == 0 {
            return self.states[0].clone();
        }
        if i == self.times.len() {
            return self.last().clone();
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let w = (t - t0) / (t1 - t0);
        &self.states[i - 1] * (1.0 - w) + &self.states[i] * w
    }
}

/// Coefficient-to-testing-point map `x(ξ_k) = Σ_j V[k,j] x̂_j` with block size `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestingMap {
    pub v: DMatrix<f64>,
    pub v_inv: DMatrix<f64>,
    pub n: usize,
}

impl TestingMap {
    pub fn blocks(&self) -> usize {
        self.v.nrows()
    }

    /// Point values from coefficients.
    pub fn to_points(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        kron_apply(&self.v, self.n, coeffs)
    }

    /// Coefficients from point values.
    pub fn to_coeffs(&self, points: &DVector<f64>) -> DVector<f64> {
        kron_apply(&self.v_inv, self.n, points)
    }
}

/// State Jacobians `∂q/∂x`, `∂f/∂x`, mapping state space to residual space.
#[derive(Debug, Clone)]
pub enum Jacobians {
    Dense {
        dq: DMatrix<f64>,
        df: DMatrix<f64>,
    },
    /// `blockdiag(J_k)·(V ⊗ I)`: one deterministic Jacobian per testing point.
    Testing {
        dq: Vec<DMatrix<f64>>,
        df: Vec<DMatrix<f64>>,
        map: Arc<TestingMap>,
    },
}

/// Factorization of `cq·∂q/∂x + cf·∂f/∂x`.
#[derive(Debug, Clone)]
pub enum Factored {
    Dense(DenseLu),
    Testing {
        blocks: Vec<DenseLu>,
        map: Arc<TestingMap>,
    },
}

impl Factored {
    /// Solve `J δ = r` with `r` in residual space and `δ` in state space.
    pub fn solve(&self, r: &DVector<f64>) -> DVector<f64> {
        match self {
            Factored::Dense(lu) => lu.solve(r),
            Factored::Testing { blocks, map } => {
                let n = map.n;
                let mut y = DVector::zeros(r.len());
                for (k, lu) in blocks.iter().enumerate() {
                    let rk = r.rows(k * n, n).into_owned();
                    y.rows_mut(k * n, n).copy_from(&lu.solve(&rk));
                }
                map.to_coeffs(&y)
            }
        }
    }

    pub fn solve_mat(&self, r: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Factored::Dense(lu) => lu.solve_mat(r),
            Factored::Testing { blocks, map } => {
                let n = map.n;
                let mut y = DMatrix::zeros(r.nrows(), r.ncols());
                for (k, lu) in blocks.iter().enumerate() {
                    let rk = r.rows(k * n, n).into_owned();
                    y.rows_mut(k * n, n).copy_from(&lu.solve_mat(&rk));
                }
                kron_apply_mat(&map.v_inv, n, &y)
            }
        }
    }
}

impl Jacobians {
    pub fn factor(
        &self,
        cq: f64,
        cf: f64,
        name: &(dyn Fn(usize) -> String + Sync),
    ) -> Result<Factored> {
        match self {
            Jacobians::Dense { dq, df } => {
                Ok(Factored::Dense(factor_named(dq * cq + df * cf, name)?))
            }
            Jacobians::Testing { dq, df, map } => {
                let n = map.n;
                let blocks = dq
                    .par_iter()
                    .zip(df.par_iter())
                    .enumerate()
                    .map(|(k, (a, b))| factor_named(a * cq + b * cf, |i| name(k * n + i)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Factored::Testing {
                    blocks,
                    map: map.clone(),
                })
            }
        }
    }

    /// `(cq·∂q/∂x + cf·∂f/∂x)·s` for a state-space matrix `s`.
    pub fn apply(&self, cq: f64, cf: f64, s: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Jacobians::Dense { dq, df } => (dq * cq + df * cf) * s,
            Jacobians::Testing { dq, df, map } => {
                let n = map.n;
                let xs = kron_apply_mat(&map.v, n, s);
                let mut out = DMatrix::zeros(s.nrows(), s.ncols());
                for k in 0..dq.len() {
                    let jk = &dq[k] * cq + &df[k] * cf;
                    let blk = jk * xs.rows(k * n, n);
                    out.rows_mut(k * n, n).copy_from(&blk);
                }
                out
            }
        }
    }

    /// Explicit `(∂q/∂x, ∂f/∂x)`.
    pub fn to_dense(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        match self {
            Jacobians::Dense { dq, df } => (dq.clone(), df.clone()),
            Jacobians::Testing { dq, df, map } => {
                let n = map.n;
                let dim = n * dq.len();
                let eye = DMatrix::identity(dim, dim);
                let xs = kron_apply_mat(&map.v, n, &eye);
                let mut q = DMatrix::zeros(dim, dim);
                let mut f = DMatrix::zeros(dim, dim);
                for k in 0..dq.len() {
                    q.rows_mut(k * n, n)
                        .copy_from(&(&dq[k] * xs.rows(k * n, n)));
                    f.rows_mut(k * n, n)
                        .copy_from(&(&df[k] * xs.rows(k * n, n)));
                }
                (q, f)
            }
        }
    }
}

/// `q`, `f`, `b` in residual space plus the state Jacobians.
#[derive(Debug, Clone)]
pub struct DaeEval {
    pub q: DVector<f64>,
    pub f: DVector<f64>,
    pub b: DVector<f64>,
    pub jac: Jacobians,
}

pub trait DaeSystem: Sync {
    fn dim(&self) -> usize;
    fn state_scales(&self) -> &[f64];
    fn residual_scales(&self) -> &[f64];
    fn eval(&self, x: &DVector<f64>, t: f64) -> Result<DaeEval>;

    /// Fraction of a Newton update to apply (junction limiting).
    fn limit_scale(&self, _x: &DVector<f64>, _dx: &DVector<f64>) -> f64 {
        1.0
    }

    /// The Newton update actually applied.
    fn limit_update(&self, x: &DVector<f64>, dx: DVector<f64>) -> DVector<f64> {
        let lim = self.limit_scale(x, &dx);
        if lim < 1.0 {
            dx * lim
        } else {
            dx
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    fn unknown_name(&self, i: usize) -> String {
        format!("x[{i}]")
    }
}

/// A circuit at one parameter point.
#[derive(Debug, Clone)]
pub struct CircuitDae {
    pub bound: BoundCircuit,
    scales: Vec<f64>,
    rscales: Vec<f64>,
    names: Vec<String>,
    breakpoints: Vec<f64>,
}

impl CircuitDae {
    pub fn new(circuit: &Circuit, xi: &[f64]) -> Result<Self> {
        Ok(Self {
            bound: circuit.bind(xi)?,
            scales: circuit.scales(),
            rscales: circuit.residual_scales(),
            names: circuit.unknowns.iter().map(|u| u.name.clone()).collect(),
            breakpoints: circuit.breakpoints(),
        })
    }
}

impl DaeSystem for CircuitDae {
    fn dim(&self) -> usize {
        self.bound.n
    }

    fn state_scales(&self) -> &[f64] {
        &self.scales
    }

    fn residual_scales(&self) -> &[f64] {
        &self.rscales
    }

    fn eval(&self, x: &DVector<f64>, t: f64) -> Result<DaeEval> {
        let e = self.bound.eval(x, t);
        Ok(DaeEval {
            q: e.q,
            f: e.f,
            b: e.b,
            jac: Jacobians::Dense { dq: e.dq, df: e.df },
        })
    }

    fn limit_scale(&self, x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
        self.bound.limit_scale(x, dx)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.breakpoints.clone()
    }

    fn unknown_name(&self, i: usize) -> String {
        self.names
            .get(i)
            .cloned()
            .unwrap_or_else(|| format!("x[{i}]"))
    }
}

/// Weighted RMS norm `sqrt(mean((v_i / s_i)^2))`.
pub fn wrms(v: &DVector<f64>, scales: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let s: f64 = v.iter().zip(scales).map(|(x, s)| (x / s) * (x / s)).sum();
    (s / v.len() as f64).sqrt()
}

/// The algebraic equation solved at one time point:
/// `alpha·(q(x) - q_prev) + f(x) - src·b + extra = 0`.
#[derive(Debug, Clone, Copy)]
pub struct StepEquation<'a> {
    pub alpha: f64,
    pub q_prev: Option<&'a DVector<f64>>,
    pub extra: Option<&'a DVector<f64>>,
    pub src: f64,
}

impl StepEquation<'_> {
    pub const DC: StepEquation<'static> = StepEquation {
        alpha: 0.0,
        q_prev: None,
        extra: None,
        src: 1.0,
    };

    pub fn residual(&self, e: &DaeEval) -> DVector<f64> {
        let mut r = &e.f - &e.b * self.src;
        if self.alpha != 0.0 {
            match self.q_prev {
                Some(q0) => r += (&e.q - q0) * self.alpha,
                None => r += &e.q * self.alpha,
            }
        }
        if let Some(x) = self.extra {
            r += x;
        }
        r
    }
}

#[derive(Debug, Clone)]
pub struct NewtonSolution {
    pub x: DVector<f64>,
    pub eval: DaeEval,
    pub iterations: usize,
}

/// Newton iteration for one [`StepEquation`] from the initial guess `x0`.
pub fn newton<S: DaeSystem + ?Sized>(
    sys: &S,
    x0: DVector<f64>,
    t: f64,
    eq: &StepEquation,
    opts: &NewtonOptions,
) -> Result<NewtonSolution> {
    newton_observed(sys, x0, t, eq, opts, &mut |_, _| {})
}

/// [`newton`], calling `observe` with every iterate and its evaluation
/// before the linear solve.
pub fn newton_observed<S: DaeSystem + ?Sized>(
    sys: &S,
    x0: DVector<f64>,
    t: f64,
    eq: &StepEquation,
    opts: &NewtonOptions,
    observe: &mut dyn FnMut(&DVector<f64>, &DaeEval),
) -> Result<NewtonSolution> {
    let xs = sys.state_scales();
    let rs = sys.residual_scales();
    let name = |i: usize| sys.unknown_name(i);
    let mut x = x0;
    let mut ev = sys.eval(&x, t)?;
    let mut r = eq.residual(&ev);
    let mut rn = wrms(&r, rs);
    let mut best = rn;
    if !rn.is_finite() {
        return Err(Error::NoConvergence {
            iterations: 0,
            best_residual: rn,
        });
    }
    if rn <= 1e-3 * opts.abs_tol {
        return Ok(NewtonSolution {
            x,
            eval: ev,
            iterations: 0,
        });
    }
    for it in 1..=opts.max_iters {
        observe(&x, &ev);
        let lu = ev.jac.factor(eq.alpha, 1.0, &name)?;
        let mut dx = sys.limit_update(&x, -lu.solve(&r));
        let mut x_new = &x + &dx;
        let mut ev_new = sys.eval(&x_new, t)?;
        let mut r_new = eq.residual(&ev_new);
        let mut rn_new = wrms(&r_new, rs);
        if opts.damping == Damping::LineSearch {
            let mut lambda = 1.0;
            while !(rn_new.is_finite() && rn_new < rn) && lambda > 1.0 / 256.0 {
                lambda *= 0.5;
                dx *= 0.5;
                x_new = &x + &dx;
                ev_new = sys.eval(&x_new, t)?;
                r_new = eq.residual(&ev_new);
                rn_new = wrms(&r_new, rs);
            }
        }
        x = x_new;
        ev = ev_new;
        r = r_new;
        rn = rn_new;
        if rn.is_finite() {
            best = best.min(rn);
        }
        let un = wrms(&dx, xs);
        if rn <= opts.abs_tol && un <= opts.rel_tol * (1.0 + wrms(&x, xs)) {
            return Ok(NewtonSolution {
                x,
                eval: ev,
                iterations: it,
            });
        }
        if !x.iter().all(|v| v.is_finite()) {
            break;
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iters,
        best_residual: best,
    })
}

/// DC operating point; falls back to source stepping when plain Newton fails.
pub fn dc_solve_system<S: DaeSystem + ?Sized>(
    sys: &S,
    x0: Option<DVector<f64>>,
    opts: &NewtonOptions,
) -> Result<NewtonSolution> {
    opts.validate()?;
    let x0 = x0.unwrap_or_else(|| DVector::zeros(sys.dim()));
    let first = match newton(sys, x0.clone(), 0.0, &StepEquation::DC, opts) {
        Ok(s) => return Ok(s),
        Err(e @ Error::SingularMatrix { .. }) => return Err(e),
        Err(e) => e,
    };
    let mut x = DVector::zeros(sys.dim());
    let mut s: f64 = 0.0;
    let mut ds: f64 = 0.1;
    let mut total = 0;
    while s < 1.0 {
        let target = (s + ds).min(1.0);
        let eq = StepEquation {
            src: target,
            ..StepEquation::DC
        };
        match newton(sys, x.clone(), 0.0, &eq, opts) {
            Ok(sol) => {
                total += sol.iterations;
                s = target;
                if s >= 1.0 {
                    return Ok(NewtonSolution {
                        iterations: total,
                        ..sol
                    });
                }
                x = sol.x;
                ds = (ds * 1.5).min(0.25);
            }
            Err(_) => {
                ds *= 0.5;
                if ds < 1e-4 {
                    return Err(first);
                }
            }
        }
    }
    unreachable!("source stepping loop always returns")
}

/// DC operating point of `circuit` at `xi`.
pub fn dc_solve(
    circuit: &Circuit,
    xi: &[f64],
    opts: &NewtonOptions,
    x0: Option<DVector<f64>>,
) -> Result<DVector<f64>> {
    let sys = CircuitDae::new(circuit, xi)?;
    Ok(dc_solve_system(&sys, x0, opts)?.x)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TransientOptions {
    pub newton: NewtonOptions,
    pub step: StepController,
}

/// Extrapolate the polynomial through `hist` (oldest first) to `t`.
fn extrapolate(hist: &[(f64, DVector<f64>)], t: f64) -> DVector<f64> {
    // Newton divided differences.
    let m = hist.len();
    let mut coef: Vec<DVector<f64>> = hist.iter().map(|(_, x)| x.clone()).collect();
    for j in 1..m {
        for i in (j..m).rev() {
            let dt = hist[i].0 - hist[i - j].0;
            coef[i] = (&coef[i] - &coef[i - 1]) / dt;
        }
    }
    let mut out = coef[m - 1].clone();
    for i in (0..m - 1).rev() {
        out = out * (t - hist[i].0) + &coef[i];
    }
    out
}

fn lte_ratio(lte: &DVector<f64>, x: &DVector<f64>, scales: &[f64], tol: f64) -> f64 {
    let n = lte.len().max(1) as f64;
    let s: f64 = lte
        .iter()
        .zip(x.iter())
        .zip(scales)
        .map(|((e, xv), s)| {
            let w = e / (tol * (s + xv.abs()));
            w * w
        })
        .sum();
    (s / n).sqrt()
}

/// Trapezoidal transient from `x0` at `t0` to `t1`.
///
/// The first step and the first step after every source breakpoint use
/// backward Euler.
pub fn transient_solve<S: DaeSystem + ?Sized>(
    sys: &S,
    x0: &DVector<f64>,
    t0: f64,
    t1: f64,
    opts: &TransientOptions,
) -> Result<Trajectory> {
    opts.newton.validate()?;
    opts.step.validate()?;
    if t1 <= t0 {
        return Err(Error::InvalidOption(format!(
            "empty time span [{t0}, {t1}]"
        )));
    }
    let ctl = &opts.step;
    let span = t1 - t0;
    let fixed = matches!(ctl.mode, StepMode::Fixed(_));
    let mut h = match ctl.mode {
        StepMode::Fixed(h) => h,
        StepMode::Adaptive => ctl.h_init.unwrap_or(span * 1e-4),
    }
    .clamp(ctl.h_min, ctl.h_max);
    let eps_t = span * 1e-12;
    let mut bps: Vec<f64> = sys
        .breakpoints()
        .into_iter()
        .filter(|&b| b > t0 + eps_t && b < t1 - eps_t)
        .collect();
    bps.push(t1);
    let xs = sys.state_scales();

    let mut traj = Trajectory {
        times: vec![t0],
        states: vec![x0.clone()],
        accepted: 0,
        rejected: 0,
        newton_iters: 0,
    };
    let mut t = t0;
    let mut ev_prev = sys.eval(x0, t0)?;
    let mut hist: Vec<(f64, DVector<f64>)> = vec![(t0, x0.clone())];
    let mut step_index = 0usize;
    let mut bp_i = 0;
    while t < t1 - eps_t {
        while bps[bp_i] <= t + eps_t {
            bp_i += 1;
        }
        let next_bp = bps[bp_i];
        let (hh, lands) = if fixed {
            // Fixed grids are t0 + k·h so every sample point sees the same grid.
            let t_next = (t0 + (step_index + 1) as f64 * h).min(t1);
            let t_next = if t1 - t_next < 1e-9 * h { t1 } else { t_next };
            (t_next - t, false)
        } else if t + h >= next_bp - ctl.h_min.max(1e-9 * h) {
            (next_bp - t, true)
        } else {
            (h, false)
        };
        let use_be = hist.len() < 2;
        let guess = if hist.len() >= 2 {
            extrapolate(&hist[hist.len().saturating_sub(3)..], t + hh)
        } else {
            hist[0].1.clone()
        };
        let f0: DVector<f64>;
        let eq = if use_be {
            StepEquation {
                alpha: 1.0 / hh,
                q_prev: Some(&ev_prev.q),
                extra: None,
                src: 1.0,
            }
        } else {
            f0 = &ev_prev.f - &ev_prev.b;
            StepEquation {
                alpha: 2.0 / hh,
                q_prev: Some(&ev_prev.q),
                extra: Some(&f0),
                src: 1.0,
            }
        };
        let sol = match newton(sys, guess, t + hh, &eq, &opts.newton) {
            Ok(s) => s,
            Err(e @ (Error::NoConvergence { .. } | Error::SingularMatrix { .. })) => {
                if fixed {
                    return Err(e);
                }
                traj.rejected += 1;
                h = hh * 0.25;
                if h < ctl.h_min {
                    return Err(Error::StepUnderflow {
                        time: t,
                        step: h,
                        h_min: ctl.h_min,
                    });
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        traj.newton_iters += sol.iterations;

        let mut factor = ctl.grow_clamp;
        if !fixed && hist.len() >= 2 {
            let m = hist.len().min(3);
            let recent = &hist[hist.len() - m..];
            let pred = extrapolate(recent, t + hh);
            let diff = &sol.x - pred;
            let h1 = t - recent[m - 2].0;
            let (lte, order) = if m == 3 && !use_be {
                let h2 = recent[1].0 - recent[0].0;
                (diff * (0.5 * hh * hh / ((hh + h1) * (hh + h1 + h2))), 3.0)
            } else {
                (diff * (hh / (hh + h1)), 2.0)
            };
            let ratio = lte_ratio(&lte, &sol.x, xs, ctl.lte_tol);
            if ratio > 1.0 {
                traj.rejected += 1;
                h = hh * (0.9 * ratio.powf(-1.0 / order)).clamp(ctl.shrink_clamp, 0.9);
                if h < ctl.h_min {
                    return Err(Error::StepUnderflow {
                        time: t,
                        step: h,
                        h_min: ctl.h_min,
                    });
                }
                continue;
            }
            factor = if ratio > 0.0 {
                (0.9 * ratio.powf(-1.0 / order)).clamp(ctl.shrink_clamp, ctl.grow_clamp)
            } else {
                ctl.grow_clamp
            };
        }

        t += hh;
        if lands {
            t = next_bp;
        }
        step_index += 1;
        traj.accepted += 1;
        traj.times.push(t);
        traj.states.push(sol.x.clone());
        ev_prev = sol.eval;
        if lands {
            hist.clear();
        } else if hist.len() == 3 {
            hist.remove(0);
        }
        hist.push((t, sol.x));
        if !fixed {
            // A step cut short by a breakpoint says nothing about the next one.
            let base = if lands { h.max(hh) } else { hh };
            h = (base * factor).clamp(ctl.h_min, ctl.h_max);
        }
    }
    Ok(traj)
}

/// `∂x(t_end)/∂x(t_0)` from a sensitivity integration.
#[derive(Debug, Clone)]
pub enum Monodromy {
    Dense(DMatrix<f64>),
    /// `(V⁻¹ ⊗ I)·blockdiag(M_k)·(V ⊗ I)`.
    Blocks {
        blocks: Vec<DMatrix<f64>>,
        map: Arc<TestingMap>,
    },
}

impl Monodromy {
    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Monodromy::Dense(m) => m.clone(),
            Monodromy::Blocks { blocks, map } => {
                let n = map.n;
                let dim = n * blocks.len();
                let vx = kron_apply_mat(&map.v, n, &DMatrix::identity(dim, dim));
                let mut mid = DMatrix::zeros(dim, dim);
                for (k, b) in blocks.iter().enumerate() {
                    mid.rows_mut(k * n, n).copy_from(&(b * vx.rows(k * n, n)));
                }
                kron_apply_mat(&map.v_inv, n, &mid)
            }
        }
    }
}

/// Residual-space parameter derivative `∂(f - b)/∂p` at a converged point.
pub type ParamSensitivity<'a> = &'a (dyn Fn(&DaeEval, &DVector<f64>, f64) -> DMatrix<f64> + Sync);

#[derive(Debug, Clone)]
pub struct GridSolution {
    pub trajectory: Trajectory,
    pub monodromy: Option<Monodromy>,
    /// `∂x(t_end)/∂p` in state space.
    pub param_sens: Option<DMatrix<f64>>,
}

/// Integrate over a prescribed time grid, carrying `∂x/∂x0` (when
/// `monodromy` is set) and `∂x/∂p` for the parameter derivative `param`.
///
/// The first `be_steps` steps use backward Euler and the rest the
/// trapezoidal rule.
pub fn transient_with_sensitivity<S: DaeSystem + ?Sized>(
    sys: &S,
    x0: &DVector<f64>,
    grid: &[f64],
    be_steps: usize,
    opts: &NewtonOptions,
    monodromy: bool,
    param: Option<ParamSensitivity>,
) -> Result<GridSolution> {
    opts.validate()?;
    if grid.len() < 2 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidOption("time grid must be increasing".into()));
    }
    let name = |i: usize| sys.unknown_name(i);
    let dim = sys.dim();
    let mut ev_prev = sys.eval(x0, grid[0])?;
    let mut p_prev = param.map(|p| p(&ev_prev, x0, grid[0]));
    let mut s_p = p_prev.as_ref().map(|p| DMatrix::zeros(dim, p.ncols()));
    let mut mono = if monodromy {
        Some(match &ev_prev.jac {
            Jacobians::Dense { .. } => Monodromy::Dense(DMatrix::identity(dim, dim)),
            Jacobians::Testing { map, .. } => Monodromy::Blocks {
                blocks: vec![DMatrix::identity(map.n, map.n); map.blocks()],
                map: map.clone(),
            },
        })
    } else {
        None
    };
    let mut traj = Trajectory {
        times: vec![grid[0]],
        states: vec![x0.clone()],
        accepted: 0,
        rejected: 0,
        newton_iters: 0,
    };
    let mut x = x0.clone();
    let mut x_older: Option<(f64, DVector<f64>)> = None;
    for (i, w) in grid.windows(2).enumerate() {
        let (t, t_next) = (w[0], w[1]);
        let h = t_next - t;
        let be = i < be_steps;
        let f0 = &ev_prev.f - &ev_prev.b;
        let eq = if be {
            StepEquation {
                alpha: 1.0 / h,
                q_prev: Some(&ev_prev.q),
                extra: None,
                src: 1.0,
            }
        } else {
            StepEquation {
                alpha: 2.0 / h,
                q_prev: Some(&ev_prev.q),
                extra: Some(&f0),
                src: 1.0,
            }
        };
        let guess = match &x_older {
            Some((to, xo)) => &x + (&x - xo) * (h / (t - to)),
            None => x.clone(),
        };
        let sol = newton(sys, guess, t_next, &eq, opts)?;
        traj.newton_iters += sol.iterations;
        let alpha = eq.alpha;
        // Coefficient of the previous-step Jacobians on the right-hand side.
        let cf_prev = if be { 0.0 } else { -1.0 };

        if let Some(m) = &mut mono {
            match (m, &sol.eval.jac, &ev_prev.jac) {
                (Monodromy::Dense(s), jac1, jac0) => {
                    let lu = jac1.factor(alpha, 1.0, &name)?;
                    let rhs = jac0.apply(alpha, cf_prev, s);
                    *s = lu.solve_mat(&rhs);
                }
                (
                    Monodromy::Blocks { blocks, map },
                    Jacobians::Testing {
                        dq: dq1, df: df1, ..
                    },
                    Jacobians::Testing {
                        dq: dq0, df: df0, ..
                    },
                ) => {
                    let n = map.n;
                    let updated = blocks
                        .par_iter()
                        .enumerate()
                        .map(|(k, sk)| {
                            let lu = factor_named(&dq1[k] * alpha + &df1[k], |c| name(k * n + c))?;
                            let rhs = (&dq0[k] * alpha + &df0[k] * cf_prev) * sk;
                            Ok(lu.solve_mat(&rhs))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    *blocks = updated;
                }
                _ => {
                    return Err(Error::Shooting(
                        "Jacobian representation changed during integration".into(),
                    ))
                }
            }
        }
        if let (Some(p), Some(sp), Some(pp)) = (param, s_p.as_mut(), p_prev.as_ref()) {
            let p1 = p(&sol.eval, &sol.x, t_next);
            let lu = sol.eval.jac.factor(alpha, 1.0, &name)?;
            let mut rhs = ev_prev.jac.apply(alpha, cf_prev, sp) - &p1;
            if !be {
                rhs -= pp;
            }
            *sp = lu.solve_mat(&rhs);
            p_prev = Some(p1);
        }

        x_older = Some((t, std::mem::replace(&mut x, sol.x.clone())));
        ev_prev = sol.eval;
        traj.times.push(t_next);
        traj.states.push(sol.x);
        traj.accepted += 1;
    }
    Ok(GridSolution {
        trajectory: traj,
        monodromy: mono,
        param_sens: s_p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rc() -> Circuit {
        Circuit::parse("R1 1 0 1k\nC1 1 0 1u\n.ic v(1)=1\n").unwrap()
    }

    #[test]
    fn divider_dc() {
        let c = Circuit::parse("V1 in 0 1\nR1 in out 1k\nR2 out 0 1k\n").unwrap();
        let x = dc_solve(&c, &[], &NewtonOptions::default(), None).unwrap();
        assert!((x[1] - 0.5).abs() < 1e-12);
        assert!((x[2] + 0.5e-3).abs() < 1e-15);
    }

    #[test]
    fn diode_dc_matches_bisection() {
        let c = Circuit::parse("V1 1 0 5\nR1 1 2 1k\nD1 2 0\n").unwrap();
        let x = dc_solve(&c, &[], &NewtonOptions::default(), None).unwrap();
        // Independent oracle: bisection on (5 - v)/1k = Is(exp(v/Vt) - 1).
        let g = |v: f64| (5.0 - v) / 1e3 - 1e-14 * ((v / 0.025852).exp() - 1.0);
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!((x[1] - lo).abs() < 1e-10, "{} vs {lo}", x[1]);
    }

    #[test]
    fn floating_node_is_singular() {
        let c = Circuit::parse("V1 1 0 1\nR1 1 0 1k\nC1 2 3 1u\n").unwrap();
        match dc_solve(&c, &[], &NewtonOptions::default(), None) {
            Err(Error::SingularMatrix { unknown }) => assert!(unknown.starts_with("v(")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rc_discharge_matches_exponential() {
        let c = rc();
        let sys = CircuitDae::new(&c, &[]).unwrap();
        let x0 = c.initial_state().unwrap();
        let opts = TransientOptions {
            step: StepController {
                lte_tol: 1e-7,
                ..Default::default()
            },
            ..Default::default()
        };
        let tr = transient_solve(&sys, &x0, 0.0, 5e-3, &opts).unwrap();
        let err = tr
            .times
            .iter()
            .zip(&tr.states)
            .map(|(t, x)| (x[0] - (-t / 1e-3).exp()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-4, "max error {err}");
        assert_eq!(*tr.times.last().unwrap(), 5e-3);
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn trapezoid_converges_at_second_order() {
        let c = rc();
        let sys = CircuitDae::new(&c, &[]).unwrap();
        let x0 = c.initial_state().unwrap();
        let err = |h: f64| {
            let opts = TransientOptions {
                step: StepController::fixed(h),
                ..Default::default()
            };
            let tr = transient_solve(&sys, &x0, 0.0, 1e-3, &opts).unwrap();
            (tr.last()[0] - (-1.0f64).exp()).abs()
        };
        // The leading backward Euler step adds an O(h^2) term, so the global
        // error still halves twice per halving of h.
        let ratio = err(2e-5) / err(1e-5);
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
    }

    #[test]
    fn fixed_mode_grid_is_uniform() {
        let c = rc();
        let sys = CircuitDae::new(&c, &[]).unwrap();
        let opts = TransientOptions {
            step: StepController::fixed(1e-4),
            ..Default::default()
        };
        let tr = transient_solve(&sys, &c.initial_state().unwrap(), 0.0, 1e-3, &opts).unwrap();
        assert_eq!(tr.len(), 11);
        for (i, t) in tr.times.iter().enumerate() {
            assert!((t - i as f64 * 1e-4).abs() < 1e-18);
        }
    }

    #[test]
    fn pwl_breakpoints_are_hit() {
        let c = Circuit::parse("V1 1 0 PWL(0 0 1m 1 3m 1)\nR1 1 2 1k\nC1 2 0 1u\n").unwrap();
        let sys = CircuitDae::new(&c, &[]).unwrap();
        let tr = transient_solve(
            &sys,
            &DVector::zeros(3),
            0.0,
            4e-3,
            &TransientOptions::default(),
        )
        .unwrap();
        assert!(tr.times.contains(&1e-3));
        assert!(tr.times.contains(&3e-3));
    }

    #[test]
    fn monodromy_of_rc_is_exponential() {
        let c = rc();
        let sys = CircuitDae::new(&c, &[]).unwrap();
        let n = 2000;
        let grid: Vec<f64> = (0..=n).map(|i| i as f64 * 1e-3 / n as f64).collect();
        let sol = transient_with_sensitivity(
            &sys,
            &c.initial_state().unwrap(),
            &grid,
            0,
            &NewtonOptions::default(),
            true,
            None,
        )
        .unwrap();
        let m = sol.monodromy.unwrap().to_dense();
        assert!((m[(0, 0)] - (-1.0f64).exp()).abs() < 1e-6);
        // Linear circuit: x(T) = M x(0).
        assert!((sol.trajectory.last()[0] - m[(0, 0)]).abs() < 1e-12);
    }

    #[test]
    fn parameter_sensitivity_matches_finite_difference() {
        // dq/dt + a·(f - b) = 0 with the sensitivity to `a`.
        struct Scaled<'a> {
            inner: &'a CircuitDae,
            a: f64,
        }
        impl DaeSystem for Scaled<'_> {
            fn dim(&self) -> usize {
                self.inner.dim()
            }
            fn state_scales(&self) -> &[f64] {
                self.inner.state_scales()
            }
            fn residual_scales(&self) -> &[f64] {
                self.inner.residual_scales()
            }
            fn eval(&self, x: &DVector<f64>, t: f64) -> Result<DaeEval> {
                let mut e = self.inner.eval(x, t)?;
                e.f *= self.a;
                e.b *= self.a;
                if let Jacobians::Dense { df, .. } = &mut e.jac {
                    *df *= self.a;
                }
                Ok(e)
            }
        }
        let c = Circuit::parse("R1 1 0 1k\nC1 1 0 1u\nD1 1 0\n.ic v(1)=0.8\n").unwrap();
        let inner = CircuitDae::new(&c, &[]).unwrap();
        let grid: Vec<f64> = (0..=400).map(|i| i as f64 * 1e-3 / 400.0).collect();
        let x0 = c.initial_state().unwrap();
        let run = |a: f64, with: bool| {
            let sys = Scaled { inner: &inner, a };
            let p = |e: &DaeEval, _: &DVector<f64>, _: f64| {
                DMatrix::from_column_slice(e.f.len(), 1, ((&e.f - &e.b) / a).as_slice())
            };
            transient_with_sensitivity(
                &sys,
                &x0,
                &grid,
                1,
                &NewtonOptions::default(),
                false,
                if with { Some(&p) } else { None },
            )
            .unwrap()
        };
        let s = run(1.0, true).param_sens.unwrap()[(0, 0)];
        let d = 1e-6;
        let fd = (run(1.0 + d, false).trajectory.last()[0]
            - run(1.0 - d, false).trajectory.last()[0])
            / (2.0 * d);
        assert!((s - fd).abs() < 1e-6 * fd.abs().max(1e-3), "{s} vs {fd}");
    }

    #[test]
    fn extrapolation_is_exact_for_quadratics() {
        let f = |t: f64| DVector::from_vec(vec![1.0 + 2.0 * t - 3.0 * t * t]);
        let hist: Vec<(f64, DVector<f64>)> = [0.0, 0.3, 0.5].iter().map(|&t| (t, f(t))).collect();
        assert!((extrapolate(&hist, 0.9)[0] - f(0.9)[0]).abs() < 1e-14);
    }
}

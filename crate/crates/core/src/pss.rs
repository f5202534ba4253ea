//! Periodic steady state of the stochastic-testing system by shooting Newton.
//!
//! Forced circuits solve `Φ(x̂, 0, T) - x̂ = 0`. Autonomous circuits integrate
//! the time-scaled system `dq/dτ + a(ξ)·(f - b) = 0` over a reference period
//! `T₀`, with `a(ξ) = Σ_j â_j H_j(ξ)` unknown and the period `T(ξ) = T₀·a(ξ)`;
//! a phase condition pins node `j` of every coefficient block.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::circuit::Circuit;
use crate::detsolve::{
    dc_solve_system, transient_solve, transient_with_sensitivity, wrms, CircuitDae, DaeEval,
    DaeSystem, Jacobians, Monodromy, NewtonOptions, StepController, TransientOptions,
};
use crate::error::{Error, Result};
use crate::linalg::DenseLu;
use crate::polychaos::GpcBasis;
use crate::spectral::{
    deterministic_state, mc_sample, st_solve_dc, surrogate_eval, GpcState, LinearMode, SolveStats,
    StSystem, TestingSet,
};
use crate::stats::{gaussian_kde, mean_std, thd};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootingOptions {
    pub steps_per_period: usize,
    /// Convergence threshold on the weighted RMS of `Φ(x̂) - x̂`.
    pub tol: f64,
    pub max_iters: usize,
    pub newton: NewtonOptions,
    /// Periods integrated from the DC point to form the forced initial guess.
    pub warmup_periods: usize,
    /// Length of the backward-Euler start-up sub-step as a fraction of a step.
    pub startup_fraction: f64,
    pub mode: LinearMode,
    /// Reference periods simulated by the autonomous pilot run.
    pub pilot_periods: usize,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self {
            steps_per_period: 200,
            tol: 1e-9,
            max_iters: 30,
            newton: NewtonOptions::default(),
            warmup_periods: 5,
            startup_fraction: 1e-2,
            mode: LinearMode::Decoupled,
            pilot_periods: 150,
        }
    }
}

impl ShootingOptions {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_period < 32 {
            return Err(Error::InvalidOption(
                "steps_per_period must be at least 32".into(),
            ));
        }
        if !(self.tol > 0.0) || self.max_iters == 0 {
            return Err(Error::InvalidOption(
                "shooting tolerance and max_iters must be positive".into(),
            ));
        }
        if !(self.startup_fraction > 0.0 && self.startup_fraction < 1.0) {
            return Err(Error::InvalidOption(
                "startup_fraction must lie in (0, 1)".into(),
            ));
        }
        self.newton.validate()
    }
}

/// `[0, εh, h, 2h, …, T]`: the first sub-step uses backward Euler so the
/// algebraic unknowns of the start state do not enter the trapezoidal rule.
pub fn shooting_grid(period: f64, steps: usize, startup_fraction: f64) -> Vec<f64> {
    let h = period / steps as f64;
    let mut g = Vec::with_capacity(steps + 2);
    g.push(0.0);
    g.push(startup_fraction * h);
    for i in 1..steps {
        g.push(period * i as f64 / steps as f64);
    }
    g.push(period);
    g
}

#[derive(Debug, Clone, PartialEq)]
pub struct PssSolution {
    /// Periodic point `x̂(0)` (for autonomous circuits `ẑ(0)`).
    pub state: GpcState,
    /// One period on the shooting grid; times are `t` (forced) or `τ` (autonomous).
    pub trajectory: Vec<GpcState>,
    /// `T` (forced) or `T₀` (autonomous).
    pub period: f64,
    pub steps_per_period: usize,
    /// Period-scaling coefficients `â` (autonomous only).
    pub scaling: Option<DVector<f64>>,
    /// Pinned node and level (autonomous only).
    pub phase: Option<(usize, f64)>,
    pub iterations: usize,
    pub residual: f64,
    /// Shooting iterates `ŷ` (state, then `â` for autonomous circuits).
    pub iterates: Vec<DVector<f64>>,
    pub stats: SolveStats,
}

impl PssSolution {
    /// States at `t = i·T/N`, `i = 0..N` (start-up point and endpoint dropped).
    pub fn uniform_period(&self) -> Vec<&GpcState> {
        let mut out = vec![&self.trajectory[0]];
        out.extend(self.trajectory[2..self.trajectory.len() - 1].iter());
        out
    }

    /// `ã(ξ)`; 1 for forced solutions.
    pub fn scaling_at(&self, basis: &GpcBasis, xi: &[f64]) -> Result<f64> {
        match &self.scaling {
            None => Ok(1.0),
            Some(a) => Ok(basis.eval_vector(xi)?.dot(a)),
        }
    }

    /// Period `T(ξ)`.
    pub fn period_at(&self, basis: &GpcBasis, xi: &[f64]) -> Result<f64> {
        Ok(self.period * self.scaling_at(basis, xi)?)
    }

    /// One period of unknown `i` at `ξ`, uniformly sampled.
    pub fn waveform(&self, basis: &GpcBasis, xi: &[f64], i: usize) -> Result<Vec<f64>> {
        let h = basis.eval_vector(xi)?;
        Ok(self
            .uniform_period()
            .iter()
            .map(|s| (0..s.k()).map(|j| h[j] * s.coeffs[j * s.n + i]).sum())
            .collect())
    }

    /// Surrogate state at real time `t` and parameter `ξ`, with the
    /// autonomous time axis mapped by `t = τ·ã(ξ)` and periodic wrap.
    pub fn realization(&self, basis: &GpcBasis, xi: &[f64], t: f64) -> Result<DVector<f64>> {
        let a = self.scaling_at(basis, xi)?;
        let tau = (t / a).rem_euclid(self.period);
        let times: Vec<f64> = self.trajectory.iter().map(|s| s.t).collect();
        let i = times
            .partition_point(|&s| s <= tau)
            .clamp(1, times.len() - 1);
        let (t0, t1) = (times[i - 1], times[i]);
        let w = (tau - t0) / (t1 - t0);
        let x0 = surrogate_eval(&self.trajectory[i - 1], basis, xi)?;
        let x1 = surrogate_eval(&self.trajectory[i], basis, xi)?;
        Ok(x0 * (1.0 - w) + x1 * w)
    }
}

fn states_of(traj: crate::detsolve::Trajectory, n: usize) -> Vec<GpcState> {
    traj.times
        .iter()
        .zip(traj.states)
        .map(|(&t, x)| GpcState::new(x, n, t))
        .collect()
}

/// Solve `(M - I) δ = -g`, blockwise when the monodromy is block diagonal
/// in testing-point coordinates.
fn shooting_update(m: &Monodromy, g: &DVector<f64>) -> Result<DVector<f64>> {
    let singular = || {
        Error::Shooting(
            "Monodromy - I is singular; the circuit may be autonomous (use `.pss auto`)".into(),
        )
    };
    match m {
        Monodromy::Dense(m) => {
            let a = m - DMatrix::identity(m.nrows(), m.ncols());
            let lu = DenseLu::factor(a).map_err(|_| singular())?;
            Ok(-lu.solve(g))
        }
        Monodromy::Blocks { blocks, map } => {
            let n = map.n;
            let gz = map.to_points(g);
            let mut dz = DVector::zeros(g.len());
            for (k, mk) in blocks.iter().enumerate() {
                let a = mk - DMatrix::identity(n, n);
                let lu = DenseLu::factor(a).map_err(|_| singular())?;
                let rhs = -gz.rows(k * n, n).into_owned();
                dz.rows_mut(k * n, n).copy_from(&lu.solve(&rhs));
            }
            Ok(map.to_coeffs(&dz))
        }
    }
}

/// Forced periodic steady state with period `period`.
pub fn shoot_forced(
    circuit: &Circuit,
    basis: &GpcBasis,
    tset: &TestingSet,
    period: f64,
    opts: &ShootingOptions,
) -> Result<PssSolution> {
    opts.validate()?;
    if !(period > 0.0) {
        return Err(Error::InvalidOption("period must be positive".into()));
    }
    let n = circuit.size();
    let sys = StSystem::new(circuit, tset, opts.mode)?;
    let grid = shooting_grid(period, opts.steps_per_period, opts.startup_fraction);
    let mut stats = SolveStats {
        solves: tset.len(),
        ..Default::default()
    };
    let mut x = match circuit.initial_state() {
        Some(ic) => deterministic_state(&ic, basis.len()),
        None => {
            let (s, st) = st_solve_dc(circuit, basis, tset, &opts.newton, opts.mode)?;
            stats.merge(&st);
            s.coeffs
        }
    };
    for _ in 0..opts.warmup_periods {
        let sol = transient_with_sensitivity(&sys, &x, &grid, 1, &opts.newton, false, None)?;
        stats.newton_iters += sol.trajectory.newton_iters;
        stats.accepted_steps += sol.trajectory.accepted;
        x = sol.trajectory.last().clone();
    }
    let scales = sys.state_scales().to_vec();
    let mut iterates = Vec::new();
    let mut best = f64::INFINITY;
    for it in 1..=opts.max_iters {
        iterates.push(x.clone());
        let sol = transient_with_sensitivity(&sys, &x, &grid, 1, &opts.newton, true, None)?;
        stats.newton_iters += sol.trajectory.newton_iters;
        stats.accepted_steps += sol.trajectory.accepted;
        let g = sol.trajectory.last() - &x;
        let gn = wrms(&g, &scales);
        best = best.min(gn);
        if gn <= opts.tol {
            return Ok(PssSolution {
                state: GpcState::new(x, n, 0.0),
                trajectory: states_of(sol.trajectory, n),
                period,
                steps_per_period: opts.steps_per_period,
                scaling: None,
                phase: None,
                iterations: it,
                residual: gn,
                iterates,
                stats,
            });
        }
        let m = sol.monodromy.expect("monodromy requested");
        x += shooting_update(&m, &g)?;
    }
    Err(Error::Shooting(format!(
        "no convergence in {} iterations (best residual {best:.3e}); try more warm-up periods",
        opts.max_iters
    )))
}

/// The ST system with block `k` of `f`, `b` scaled by `a(ξ_k)`.
struct ScaledSt<'a> {
    st: &'a StSystem,
    a: Vec<f64>,
}

impl DaeSystem for ScaledSt<'_> {
    fn dim(&self) -> usize {
        self.st.dim()
    }

    fn state_scales(&self) -> &[f64] {
        self.st.state_scales()
    }

    fn residual_scales(&self) -> &[f64] {
        self.st.residual_scales()
    }

    fn eval(&self, x: &DVector<f64>, t: f64) -> Result<DaeEval> {
        let mut e = self.st.eval(x, t)?;
        let n = self.st.map().n;
        for (k, &a) in self.a.iter().enumerate() {
            e.f.rows_mut(k * n, n).scale_mut(a);
            e.b.rows_mut(k * n, n).scale_mut(a);
        }
        match &mut e.jac {
            Jacobians::Testing { df, .. } => {
                for (k, d) in df.iter_mut().enumerate() {
                    *d *= self.a[k];
                }
            }
            Jacobians::Dense { df, .. } => {
                for (k, &a) in self.a.iter().enumerate() {
                    df.rows_mut(k * n, n).scale_mut(a);
                }
            }
        }
        Ok(e)
    }

    fn limit_update(&self, x: &DVector<f64>, dx: DVector<f64>) -> DVector<f64> {
        self.st.limit_update(x, dx)
    }

    fn unknown_name(&self, i: usize) -> String {
        self.st.unknown_name(i)
    }
}

/// Pilot oscillation at one parameter point: measured period and the state
/// at an upward crossing of `level` (the mean of the node when `None`).
pub fn pilot_oscillation(
    circuit: &Circuit,
    xi: &[f64],
    t_ref: f64,
    node: usize,
    level: Option<f64>,
    periods: usize,
    newton: &NewtonOptions,
) -> Result<(f64, DVector<f64>, f64)> {
    let sys = CircuitDae::new(circuit, xi)?;
    let x0 = match circuit.initial_state() {
        Some(x) => x,
        None => {
            // Kick the equilibrium so the oscillation can start.
            let mut x = dc_solve_system(&sys, None, newton)?.x;
            x[node] += 1e-3;
            x
        }
    };
    let t_end = t_ref * periods as f64;
    let opts = TransientOptions {
        newton: *newton,
        step: StepController {
            lte_tol: 1e-7,
            h_max: t_ref / 100.0,
            h_init: Some(t_ref / 1000.0),
            ..Default::default()
        },
    };
    let tr = transient_solve(&sys, &x0, 0.0, t_end, &opts)?;
    let tail = t_end - 5.0 * t_ref;
    let start = tr.times.partition_point(|&t| t < tail);
    let level = level.unwrap_or_else(|| {
        // Time-weighted mean over the tail.
        let mut area = 0.0;
        for i in start.max(1)..tr.times.len() {
            let dt = tr.times[i] - tr.times[i - 1];
            area += 0.5 * dt * (tr.states[i][node] + tr.states[i - 1][node]);
        }
        area / (t_end - tr.times[start.max(1) - 1])
    });
    let mut crossings: Vec<(f64, DVector<f64>)> = Vec::new();
    for i in start.max(1)..tr.times.len() {
        let (a, b) = (tr.states[i - 1][node] - level, tr.states[i][node] - level);
        if a < 0.0 && b >= 0.0 {
            let w = -a / (b - a);
            let t = tr.times[i - 1] + w * (tr.times[i] - tr.times[i - 1]);
            let x = &tr.states[i - 1] * (1.0 - w) + &tr.states[i] * w;
            crossings.push((t, x));
        }
    }
    if crossings.len() < 3 {
        return Err(Error::Shooting(format!(
            "pilot run shows no sustained oscillation of node {} around {level:.4e}",
            circuit.unknowns[node].name
        )));
    }
    let m = crossings.len();
    let period = (crossings[m - 1].0 - crossings[m - 3].0) / 2.0;
    let mut x = crossings.pop().expect("three crossings").1;
    x[node] = level;
    Ok((period, x, level))
}

/// Autonomous periodic steady state with reference period `t_ref`, phase
/// node `node` and level `lambda` (pilot mean level when `None`).
pub fn shoot_autonomous(
    circuit: &Circuit,
    basis: &GpcBasis,
    tset: &TestingSet,
    t_ref: f64,
    node: usize,
    lambda: Option<f64>,
    opts: &ShootingOptions,
) -> Result<PssSolution> {
    opts.validate()?;
    if !(t_ref > 0.0) {
        return Err(Error::InvalidOption(
            "reference period must be positive".into(),
        ));
    }
    if node >= circuit.node_names.len() {
        return Err(Error::InvalidOption(
            "phase node must be a node voltage".into(),
        ));
    }
    let n = circuit.size();
    let k = basis.len();
    let dim = n * k;
    let st = StSystem::new(circuit, tset, LinearMode::Decoupled)?;
    let map = st.map().clone();
    let (t_meas, x_cross, level) = pilot_oscillation(
        circuit,
        &basis.mean_point(),
        t_ref,
        node,
        lambda,
        opts.pilot_periods,
        &opts.newton,
    )?;
    let mut z = deterministic_state(&x_cross, k);
    let mut a_hat = DVector::zeros(k);
    a_hat[0] = t_meas / t_ref;
    let pin = |z: &mut DVector<f64>| {
        for l in 0..k {
            z[l * n + node] = if l == 0 { level } else { 0.0 };
        }
    };
    pin(&mut z);

    let grid = shooting_grid(t_ref, opts.steps_per_period, opts.startup_fraction);
    let mut scales = st.state_scales().to_vec();
    // Scaling coefficients are dimensionless.
    scales.extend(std::iter::repeat_n(1.0, k));
    let mut stats = SolveStats {
        solves: tset.len(),
        ..Default::default()
    };
    let mut iterates = Vec::new();
    let mut best = f64::INFINITY;
    for it in 1..=opts.max_iters {
        let a_pts = &map.v * &a_hat;
        if let Some(kk) = a_pts.iter().position(|&a| !(a > 0.0)) {
            return Err(Error::Shooting(format!(
                "period scaling a(xi) = {:.4e} <= 0 at testing point {} {:?}",
                a_pts[kk],
                kk + 1,
                tset.points[kk]
            )));
        }
        let mut y = z.clone();
        y.extend(a_hat.iter().cloned());
        iterates.push(y);
        let sys = ScaledSt {
            st: &st,
            a: a_pts.iter().cloned().collect(),
        };
        let a_vec = sys.a.clone();
        let param = |e: &DaeEval, _: &DVector<f64>, _: f64| -> DMatrix<f64> {
            let mut p = DMatrix::zeros(dim, k);
            for (kk, &a) in a_vec.iter().enumerate() {
                let r = (e.f.rows(kk * n, n) - e.b.rows(kk * n, n)) / a;
                for j in 0..k {
                    p.view_mut((kk * n, j), (n, 1))
                        .copy_from(&(&r * map.v[(kk, j)]));
                }
            }
            p
        };
        let sol = transient_with_sensitivity(&sys, &z, &grid, 1, &opts.newton, true, Some(&param))?;
        stats.newton_iters += sol.trajectory.newton_iters;
        stats.accepted_steps += sol.trajectory.accepted;
        let g = sol.trajectory.last() - &z;
        let gn = wrms(&g, st.state_scales());
        best = best.min(gn);
        if gn <= opts.tol {
            return Ok(PssSolution {
                state: GpcState::new(z, n, 0.0),
                trajectory: states_of(sol.trajectory, n),
                period: t_ref,
                steps_per_period: opts.steps_per_period,
                scaling: Some(a_hat),
                phase: Some((node, level)),
                iterations: it,
                residual: gn,
                iterates,
                stats,
            });
        }
        let m = sol.monodromy.expect("monodromy requested").to_dense();
        let s_a = sol.param_sens.expect("parameter sensitivity requested");
        let mut jac = DMatrix::zeros(dim + k, dim + k);
        jac.view_mut((0, 0), (dim, dim))
            .copy_from(&(m - DMatrix::identity(dim, dim)));
        jac.view_mut((0, dim), (dim, k)).copy_from(&s_a);
        for l in 0..k {
            jac[(dim + l, l * n + node)] = 1.0;
        }
        let mut rhs = DVector::zeros(dim + k);
        rhs.rows_mut(0, dim).copy_from(&(-&g));
        let lu = DenseLu::factor(jac).map_err(|_| {
            Error::Shooting(format!(
                "singular bordered Jacobian; is node level {level:.4e} inside the oscillation range?"
            ))
        })?;
        let delta = lu.solve(&rhs);
        z += delta.rows(0, dim);
        a_hat += delta.rows(dim, k);
        pin(&mut z);
    }
    Err(Error::Shooting(format!(
        "autonomous shooting did not converge in {} iterations (best residual {best:.3e}); \
         check the phase level and reference period",
        opts.max_iters
    )))
}

/// Quantity extracted from a periodic solution over surrogate samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PssQuantity {
    /// THD of unknown `i`.
    Thd(usize),
    /// Period-averaged power of device `i`.
    Power(usize),
    /// Oscillation frequency `1/T(ξ)`.
    Frequency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PssStatistics {
    pub quantity: PssQuantity,
    /// One value per defined sample.
    pub values: Vec<f64>,
    /// Samples where the quantity is undefined (THD with no fundamental).
    pub undefined: usize,
    pub mean: f64,
    pub std: f64,
    /// Kernel density estimate `(value, density)`.
    pub density: Vec<(f64, f64)>,
}

pub const DEFAULT_PSS_SAMPLES: usize = 10_000;

/// Draw `samples` parameter points, evaluate `quantity` through the
/// surrogate and summarize.
pub fn postprocess_pss(
    solution: &PssSolution,
    circuit: &Circuit,
    basis: &GpcBasis,
    quantity: PssQuantity,
    samples: usize,
    seed: u64,
) -> Result<PssStatistics> {
    let dists = circuit.distributions();
    let per_sample = |i: usize| -> Result<Option<f64>> {
        let xi = mc_sample(&dists, seed, i as u64);
        match quantity {
            PssQuantity::Thd(u) => Ok(thd(&solution.waveform(basis, &xi, u)?)),
            PssQuantity::Frequency => Ok(Some(1.0 / solution.period_at(basis, &xi)?)),
            PssQuantity::Power(d) => {
                let bound = circuit.bind(&xi)?;
                let states = solution.uniform_period();
                let a = solution.scaling_at(basis, &xi)?;
                let h = basis.eval_vector(&xi)?;
                let mut acc = 0.0;
                for s in &states {
                    let mut x = DVector::zeros(s.n);
                    for j in 0..s.k() {
                        x.axpy(h[j], &s.coeffs.rows(j * s.n, s.n), 1.0);
                    }
                    acc += bound.device_power(d, &x, s.t * a);
                }
                Ok(Some(acc / states.len() as f64))
            }
        }
    };
    let raw = (0..samples)
        .into_par_iter()
        .map(per_sample)
        .collect::<Result<Vec<_>>>()?;
    let undefined = raw.iter().filter(|v| v.is_none()).count();
    let values: Vec<f64> = raw.into_iter().flatten().collect();
    let (mean, std) = mean_std(&values);
    Ok(PssStatistics {
        quantity,
        density: gaussian_kde(&values, 200),
        values,
        undefined,
        mean,
        std,
    })
}

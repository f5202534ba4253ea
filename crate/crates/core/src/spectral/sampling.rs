//! Non-intrusive engines: stochastic collocation and Monte Carlo.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::result::{GpcState, Method, SolveStats, UqResult};
use crate::circuit::Circuit;
use crate::detsolve::{
    dc_solve_system, transient_solve, CircuitDae, StepController, StepMode, TransientOptions,
};
use crate::error::{Error, Result};
use crate::polychaos::{Distribution, GpcBasis};
use crate::quadrature::RuleND;

/// Analysis run at every sample point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointAnalysis {
    Dc,
    /// Transient over `[0, t_stop]` on a uniform grid of step `h`.
    Transient {
        t_stop: f64,
        h: f64,
    },
}

/// Uniform step for sampling engines: the smallest step an adaptive run at
/// `xi` accepts after its start-up steps.
pub fn pilot_step(
    circuit: &Circuit,
    xi: &[f64],
    t_stop: f64,
    opts: &TransientOptions,
) -> Result<f64> {
    let sys = CircuitDae::new(circuit, xi)?;
    let x0 = match circuit.initial_state() {
        Some(x) => x,
        None => dc_solve_system(&sys, None, &opts.newton)?.x,
    };
    let adaptive = TransientOptions {
        step: StepController {
            mode: StepMode::Adaptive,
            ..opts.step
        },
        ..*opts
    };
    let tr = transient_solve(&sys, &x0, 0.0, t_stop, &adaptive)?;
    let skip = 2.min(tr.times.len().saturating_sub(2));
    tr.times[skip..]
        .windows(2)
        .map(|w| w[1] - w[0])
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::InvalidOption("pilot run produced no steps".into()))
}

/// Solution of one deterministic point: states at every output time.
fn solve_point(
    circuit: &Circuit,
    xi: &[f64],
    analysis: PointAnalysis,
    opts: &TransientOptions,
) -> Result<(Vec<DVector<f64>>, SolveStats)> {
    let sys = CircuitDae::new(circuit, xi)?;
    match analysis {
        PointAnalysis::Dc => {
            let s = dc_solve_system(&sys, None, &opts.newton)?;
            Ok((
                vec![s.x],
                SolveStats {
                    newton_iters: s.iterations,
                    solves: 1,
                    ..Default::default()
                },
            ))
        }
        PointAnalysis::Transient { t_stop, h } => {
            let mut stats = SolveStats {
                solves: 1,
                ..Default::default()
            };
            let x0 = match circuit.initial_state() {
                Some(x) => x,
                None => {
                    let s = dc_solve_system(&sys, None, &opts.newton)?;
                    stats.newton_iters += s.iterations;
                    s.x
                }
            };
            let fixed = TransientOptions {
                step: StepController {
                    mode: StepMode::Fixed(h),
                    ..opts.step
                },
                ..*opts
            };
            let tr = transient_solve(&sys, &x0, 0.0, t_stop, &fixed)?;
            stats.newton_iters += tr.newton_iters;
            stats.accepted_steps += tr.accepted;
            Ok((tr.states, stats))
        }
    }
}

/// Output times of a [`PointAnalysis`] (matching the fixed-step grid).
pub fn analysis_times(analysis: PointAnalysis) -> Vec<f64> {
    match analysis {
        PointAnalysis::Dc => vec![0.0],
        PointAnalysis::Transient { t_stop, h } => {
            let mut out = vec![0.0];
            let mut k = 1usize;
            loop {
                let t = (k as f64 * h).min(t_stop);
                let t = if t_stop - t < 1e-9 * h { t_stop } else { t };
                out.push(t);
                if t >= t_stop {
                    return out;
                }
                k += 1;
            }
        }
    }
}

/// Stochastic collocation: `x̂ʲ(t) = Σ_k w^k H_j(ξ^k) x(t, ξ^k)`.
pub fn sc_solve(
    circuit: &Circuit,
    basis: &GpcBasis,
    quad: &RuleND,
    analysis: PointAnalysis,
    opts: &TransientOptions,
) -> Result<UqResult> {
    let n = circuit.size();
    let k = basis.len();
    let runs = quad
        .nodes
        .par_iter()
        .enumerate()
        .map(|(i, xi)| {
            solve_point(circuit, xi, analysis, opts).map_err(|e| Error::PointFailure {
                engine: "sc",
                point: i + 1,
                xi: xi.clone(),
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let times = analysis_times(analysis);
    let phi = quad
        .nodes
        .iter()
        .map(|x| basis.eval_vector(x))
        .collect::<Result<Vec<_>>>()?;
    let mut stats = SolveStats::default();
    let mut states = Vec::with_capacity(times.len());
    for (ti, &t) in times.iter().enumerate() {
        let mut c = DVector::zeros(n * k);
        for (node, (traj, _)) in runs.iter().enumerate() {
            let x = &traj[ti];
            let w = quad.weights[node];
            for (j, pj) in phi[node].iter().enumerate() {
                c.rows_mut(j * n, n).axpy(w * pj, x, 1.0);
            }
        }
        states.push(GpcState::new(c, n, t));
    }
    for (_, s) in &runs {
        stats.merge(s);
    }
    Ok(UqResult::from_states(
        Method::Sc,
        circuit.unknowns.iter().map(|u| u.name.clone()).collect(),
        &states,
        stats,
    ))
}

/// Parameter draw for Monte Carlo sample `index`: an independent ChaCha
/// stream per sample, so results do not depend on scheduling.
pub fn mc_sample(dists: &[Distribution], seed: u64, index: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    dists.iter().map(|d| d.sample(&mut rng)).collect()
}

/// Shifted power sums for numerically stable moments.
struct MomentSums {
    shift: Vec<DVector<f64>>,
    s: [Vec<DVector<f64>>; 4],
    count: usize,
}

impl MomentSums {
    fn new(first: &[DVector<f64>]) -> Self {
        let zeros: Vec<DVector<f64>> = first.iter().map(|x| DVector::zeros(x.len())).collect();
        Self {
            shift: first.to_vec(),
            s: [zeros.clone(), zeros.clone(), zeros.clone(), zeros],
            count: 0,
        }
    }

    fn add(&mut self, sample: &[DVector<f64>]) {
        for (ti, x) in sample.iter().enumerate() {
            let d = x - &self.shift[ti];
            let d2 = d.component_mul(&d);
            self.s[0][ti] += &d;
            self.s[1][ti] += &d2;
            self.s[2][ti] += d2.component_mul(&d);
            self.s[3][ti] += d2.component_mul(&d2);
        }
        self.count += 1;
    }

    /// (mean, std, se(mean), se(std)) per time.
    #[allow(clippy::type_complexity)]
    fn finish(
        &self,
    ) -> (
        Vec<DVector<f64>>,
        Vec<DVector<f64>>,
        Vec<DVector<f64>>,
        Vec<DVector<f64>>,
    ) {
        let nf = self.count as f64;
        let mut out = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for ti in 0..self.shift.len() {
            let len = self.shift[ti].len();
            let mut mean = DVector::zeros(len);
            let mut std = DVector::zeros(len);
            let mut se_m = DVector::zeros(len);
            let mut se_s = DVector::zeros(len);
            for i in 0..len {
                let a1 = self.s[0][ti][i] / nf;
                let a2 = self.s[1][ti][i] / nf;
                let a3 = self.s[2][ti][i] / nf;
                let a4 = self.s[3][ti][i] / nf;
                let m2 = (a2 - a1 * a1).max(0.0);
                let m4 = (a4 - 4.0 * a1 * a3 + 6.0 * a1 * a1 * a2 - 3.0 * a1.powi(4)).max(0.0);
                let var = m2 * nf / (nf - 1.0);
                let s = var.sqrt();
                mean[i] = self.shift[ti][i] + a1;
                std[i] = s;
                se_m[i] = s / nf.sqrt();
                se_s[i] = if s > 0.0 {
                    ((m4 - m2 * m2).max(0.0) / nf).sqrt() / (2.0 * s)
                } else {
                    0.0
                };
            }
            out.0.push(mean);
            out.1.push(std);
            out.2.push(se_m);
            out.3.push(se_s);
        }
        out
    }
}

const MC_CHUNK: usize = 512;

/// Monte Carlo over `n_samples` seeded parameter draws.
pub fn mc_solve(
    circuit: &Circuit,
    n_samples: usize,
    seed: u64,
    analysis: PointAnalysis,
    opts: &TransientOptions,
) -> Result<UqResult> {
    if n_samples < 2 {
        return Err(Error::InvalidOption(
            "Monte Carlo needs at least 2 samples".into(),
        ));
    }
    let dists = circuit.distributions();
    let mut sums: Option<MomentSums> = None;
    let mut stats = SolveStats::default();
    let mut failed = 0usize;
    let mut first_error: Option<Error> = None;
    let mut start = 0;
    while start < n_samples {
        let end = (start + MC_CHUNK).min(n_samples);
        let chunk: Vec<_> = (start..end)
            .into_par_iter()
            .map(|i| {
                let xi = mc_sample(&dists, seed, i as u64);
                solve_point(circuit, &xi, analysis, opts).map_err(|e| (i, xi, e))
            })
            .collect();
        for r in chunk {
            match r {
                Ok((traj, st)) => {
                    stats.merge(&st);
                    sums.get_or_insert_with(|| MomentSums::new(&traj))
                        .add(&traj);
                }
                Err((i, xi, e)) => {
                    failed += 1;
                    first_error.get_or_insert(Error::PointFailure {
                        engine: "mc",
                        point: i + 1,
                        xi,
                        source: Box::new(e),
                    });
                }
            }
        }
        if failed * 100 > n_samples {
            return Err(Error::TooManyFailures {
                failed,
                total: n_samples,
            });
        }
        start = end;
    }
    stats.failures = failed;
    let sums = match sums {
        Some(s) if s.count >= 2 => s,
        _ => {
            return Err(first_error.unwrap_or(Error::TooManyFailures {
                failed,
                total: n_samples,
            }))
        }
    };
    let (mean, std, mean_se, std_se) = sums.finish();
    Ok(UqResult {
        method: Method::Mc,
        names: circuit.unknowns.iter().map(|u| u.name.clone()).collect(),
        times: analysis_times(analysis),
        mean,
        std,
        coeffs: Vec::new(),
        basis_len: 0,
        mean_se,
        std_se,
        seed: Some(seed),
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{gauss_tensor, RuleNDKind};

    const DIVIDER: &str = "param xi uniform\nV1 1 0 1\nR1 1 2 1k\nR2 2 0 1k*(1+0.1*xi)\n";

    #[test]
    fn order_zero_is_quadrature_mean() {
        let c = Circuit::parse(DIVIDER).unwrap();
        let b = GpcBasis::total_degree(c.distributions(), 0).unwrap();
        let q = gauss_tensor(&c.distributions(), 6).unwrap();
        let r = sc_solve(&c, &b, &q, PointAnalysis::Dc, &TransientOptions::default()).unwrap();
        let direct: f64 = q
            .nodes
            .iter()
            .zip(&q.weights)
            .map(|(x, w)| w * (1.0 + 0.1 * x[0]) / (2.0 + 0.1 * x[0]))
            .sum();
        assert!((r.mean[0][1] - direct).abs() < 1e-12);
    }

    #[test]
    fn reconstruction_recovers_synthetic_surrogate() {
        // Current source whose value is a known cubic polynomial of ξ:
        // v = 1k·I(ξ) has coefficients in the Legendre basis computed by
        // projecting with a rule exact to degree 6.
        let c = Circuit::parse(
            "param xi uniform\nI1 0 1 1m*(1+0.2*xi+0.1*xi*xi-0.05*xi*xi*xi)\nR1 1 0 1k\n",
        )
        .unwrap();
        let b = GpcBasis::total_degree(c.distributions(), 3).unwrap();
        let q = gauss_tensor(&c.distributions(), 4).unwrap();
        let r = sc_solve(&c, &b, &q, PointAnalysis::Dc, &TransientOptions::default()).unwrap();
        let s = r.state(0).unwrap();
        for x in [-0.9, -0.1, 0.4, 1.0] {
            let v = crate::spectral::result::surrogate_eval(&s, &b, &[x]).unwrap()[0];
            let exact = 1.0 + 0.2 * x + 0.1 * x * x - 0.05 * x * x * x;
            assert!((v - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn deterministic_circuit_has_zero_std() {
        let c = Circuit::parse("param xi uniform\nV1 1 0 1\nR1 1 2 1k\nD1 2 0\n").unwrap();
        let r = mc_solve(&c, 50, 7, PointAnalysis::Dc, &TransientOptions::default()).unwrap();
        assert!(r.std[0].iter().all(|&s| s == 0.0));
    }

    #[test]
    fn mc_mean_matches_closed_form() {
        // E[(1.1+... )] for v = R2/(R1+R2) = 1 - 1/(2+0.1ξ), ξ ~ U(-1,1):
        // mean = 1 - 5·ln(2.1/1.9).
        let c = Circuit::parse(DIVIDER).unwrap();
        let r = mc_solve(
            &c,
            20_000,
            11,
            PointAnalysis::Dc,
            &TransientOptions::default(),
        )
        .unwrap();
        let exact = 1.0 - 5.0 * (2.1f64 / 1.9).ln();
        assert!((r.mean[0][1] - exact).abs() < 4.0 * r.mean_se[0][1]);
        assert!(r.mean_se[0][1] > 0.0);
    }

    #[test]
    fn mc_is_deterministic_for_a_seed() {
        let c = Circuit::parse(DIVIDER).unwrap();
        let a = mc_solve(&c, 1500, 3, PointAnalysis::Dc, &TransientOptions::default()).unwrap();
        let b = mc_solve(&c, 1500, 3, PointAnalysis::Dc, &TransientOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            mc_sample(&[Distribution::Gaussian], 3, 10),
            mc_sample(&[Distribution::Gaussian], 3, 10)
        );
        assert_ne!(
            mc_sample(&[Distribution::Gaussian], 3, 10),
            mc_sample(&[Distribution::Gaussian], 3, 11)
        );
    }

    #[test]
    fn too_many_failures_abort() {
        // Gaussian ξ makes R negative for ξ < -1 in about 16% of samples.
        let c =
            Circuit::parse("param xi gaussian\nV1 1 0 1\nR1 1 2 1k*(1+xi)\nR2 2 0 1k\n").unwrap();
        assert!(matches!(
            mc_solve(&c, 1000, 1, PointAnalysis::Dc, &TransientOptions::default()),
            Err(Error::TooManyFailures { .. })
        ));
    }

    #[test]
    fn sc_transient_uses_shared_grid() {
        let c = Circuit::parse("param xi uniform\nR1 1 0 1k*(1+0.1*xi)\nC1 1 0 1u\n.ic v(1)=1\n")
            .unwrap();
        let b = GpcBasis::total_degree(c.distributions(), 2).unwrap();
        let q = RuleND {
            nodes: vec![vec![-0.5], vec![0.0], vec![0.5]],
            weights: vec![1.0 / 3.0; 3],
            kind: RuleNDKind::Tensor,
        };
        let an = PointAnalysis::Transient {
            t_stop: 1e-3,
            h: 1e-5,
        };
        let r = sc_solve(&c, &b, &q, an, &TransientOptions::default()).unwrap();
        assert_eq!(r.times.len(), 101);
        assert_eq!(r.times, analysis_times(an));
    }
}

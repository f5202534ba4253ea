use std::f64::consts::PI;

use specsim_core::circuit::Circuit;
use specsim_core::detsolve::{transient_solve, StepController, TransientOptions};
use specsim_core::detsolve::{transient_with_sensitivity, wrms, CircuitDae, NewtonOptions};
use specsim_core::polychaos::GpcBasis;
use specsim_core::pss::{
    postprocess_pss, shoot_autonomous, shoot_forced, shooting_grid, PssQuantity, ShootingOptions,
};
use specsim_core::quadrature::{gauss_tensor, integrate_scalar};
use specsim_core::spectral::{
    default_candidates, select_testing_points, LinearMode, StSystem, TestingSet, DEFAULT_BETA,
};
use specsim_core::stats::mean_std;

fn setup(text: &str, p: usize) -> (Circuit, GpcBasis, TestingSet) {
    let c = Circuit::parse(text).unwrap();
    let b = GpcBasis::total_degree(c.distributions(), p).unwrap();
    let ts = select_testing_points(
        &default_candidates(&c.distributions(), p).unwrap(),
        &b,
        DEFAULT_BETA,
    )
    .unwrap();
    (c, b, ts)
}

const OSC: &str =
    "param xi uniform\nC1 1 0 1n\nL1 1 0 1u*(1+0.1*xi)\nN1 1 0 g1=1m g3=0.333333m\n.ic v(1)=1\n";

fn oracle_period(xi: f64) -> f64 {
    let c = Circuit::parse(OSC).unwrap();
    let sys = CircuitDae::new(&c, &[xi]).unwrap();
    let t_ref = 2.0 * PI * (1e-15f64 * (1.0 + 0.1 * xi)).sqrt();
    let opts = TransientOptions {
        newton: NewtonOptions::default(),
        step: StepController {
            lte_tol: 1e-9,
            h_max: t_ref / 400.0,
            ..Default::default()
        },
    };
    let tr = transient_solve(&sys, &c.initial_state().unwrap(), 0.0, 60.0 * t_ref, &opts).unwrap();
    let mut ups = Vec::new();
    for i in 1..tr.len() {
        let (a, b) = (tr.states[i - 1][0], tr.states[i][0]);
        if tr.times[i] > 40.0 * t_ref && a < 0.0 && b >= 0.0 {
            ups.push(tr.times[i - 1] + (tr.times[i] - tr.times[i - 1]) * (-a / (b - a)));
        }
    }
    (ups[ups.len() - 1] - ups[0]) / (ups.len() - 1) as f64
}

#[test]
fn stochastic_oscillator_period_matches_oracle() {
    let (c, b, ts) = setup(OSC, 3);
    let sol = shoot_autonomous(
        &c,
        &b,
        &ts,
        200e-9,
        0,
        Some(0.0),
        &ShootingOptions::default(),
    )
    .unwrap();
    for xi in [-1.0, 0.0, 1.0] {
        let t = sol.period_at(&b, &[xi]).unwrap();
        let o = oracle_period(xi);
        assert!((t / o - 1.0).abs() < 0.01, "xi={xi}: {t} vs {o}");
    }
    // Phase pin is exact.
    let n = sol.state.n;
    assert_eq!(sol.state.coeffs[0], 0.0);
    for j in 1..b.len() {
        assert_eq!(sol.state.coeffs[j * n], 0.0);
    }
}

#[test]
fn autonomous_fixed_point_property() {
    let (c, b, ts) = setup(OSC, 2);
    let opts = ShootingOptions::default();
    let sol = shoot_autonomous(&c, &b, &ts, 200e-9, 0, Some(0.0), &opts).unwrap();
    let last = sol.trajectory.last().unwrap();
    let g = &last.coeffs - &sol.state.coeffs;
    let scales = c.scales().repeat(b.len());
    assert!(wrms(&g, &scales) <= 10.0 * opts.tol);
}

#[test]
fn frequency_statistics_match_quadrature() {
    let (c, b, ts) = setup(OSC, 3);
    let sol = shoot_autonomous(
        &c,
        &b,
        &ts,
        200e-9,
        0,
        Some(0.0),
        &ShootingOptions::default(),
    )
    .unwrap();
    let stats = postprocess_pss(&sol, &c, &b, PssQuantity::Frequency, 10_000, 7).unwrap();
    let q = gauss_tensor(&c.distributions(), 16).unwrap();
    let f = |x: &[f64]| 1.0 / sol.period_at(&b, x).unwrap();
    let m = integrate_scalar(&q, f);
    let v = integrate_scalar(&q, |x| (f(x) - m).powi(2));
    let se = stats.std / (stats.values.len() as f64).sqrt();
    assert!((stats.mean - m).abs() < 3.0 * se, "{} vs {m}", stats.mean);
    let se_std = stats.std / (2.0 * stats.values.len() as f64).sqrt();
    assert!((stats.std - v.sqrt()).abs() < 3.0 * se_std + 1e-3 * v.sqrt());
    assert!(!stats.density.is_empty());
}

#[test]
fn scaled_time_realization_matches_transient() {
    let (c, b, ts) = setup(OSC, 3);
    let sol = shoot_autonomous(
        &c,
        &b,
        &ts,
        200e-9,
        0,
        Some(0.0),
        &ShootingOptions::default(),
    )
    .unwrap();
    for xi in [-0.7, 0.4] {
        // Deterministic transient started from the surrogate periodic point.
        let x0 = sol.realization(&b, &[xi], 0.0).unwrap();
        let sys = CircuitDae::new(&c, &[xi]).unwrap();
        let t = sol.period_at(&b, &[xi]).unwrap();
        let grid: Vec<f64> = (0..=400).map(|i| t * i as f64 / 400.0).collect();
        let tr =
            transient_with_sensitivity(&sys, &x0, &grid, 0, &NewtonOptions::default(), false, None)
                .unwrap();
        let (mut err, mut norm) = (0.0, 0.0);
        for (ti, x) in grid.iter().zip(&tr.trajectory.states) {
            let s = sol.realization(&b, &[xi], *ti).unwrap();
            err += (s[0] - x[0]).powi(2);
            norm += x[0] * x[0];
        }
        assert!(
            (err / norm).sqrt() < 0.02,
            "xi={xi}: {}",
            (err / norm).sqrt()
        );
    }
}

#[test]
fn forced_rc_mean_amplitude_matches_quadrature() {
    let f = 1.0 / (2.0 * PI * 1e-3);
    let text = format!("param xi uniform\nV1 1 0 SIN(0 1 {f})\nR1 1 2 1k*(1+0.1*xi)\nC1 2 0 1u\n");
    let (c, b, ts) = setup(&text, 3);
    let opts = ShootingOptions {
        steps_per_period: 2000,
        ..Default::default()
    };
    let sol = shoot_forced(&c, &b, &ts, 1.0 / f, &opts).unwrap();
    assert!(sol.iterations <= 6);
    // Exact periodic response v2(t, xi) for v1 = sin(wt), wRC0 = 1.
    let exact = |t: f64, xi: f64| {
        let wrc = 1.0 + 0.1 * xi;
        let w = 2.0 * PI * f;
        ((w * t).sin() - wrc * (w * t).cos()) / (1.0 + wrc * wrc)
    };
    let q = gauss_tensor(&c.distributions(), 64).unwrap();
    for s in sol.uniform_period().iter().step_by(97) {
        let m = integrate_scalar(&q, |x| exact(s.t, x[0]));
        let var = integrate_scalar(&q, |x| (exact(s.t, x[0]) - m).powi(2));
        let mean = s.mean()[1];
        let std = s.variance()[1].sqrt();
        assert!((mean - m).abs() < 1e-5, "t={} {mean} vs {m}", s.t);
        assert!((std - var.sqrt()).abs() < 1e-5);
    }
}

#[test]
fn rectifier_matches_long_transient() {
    let text = "param xi uniform\nV1 1 0 SIN(0 2 1k)\nD1 1 2\nC1 2 0 1u\nR1 2 0 10k\n";
    let (c, b, ts) = setup(text, 0);
    let opts = ShootingOptions::default();
    let sol = shoot_forced(&c, &b, &ts, 1e-3, &opts).unwrap();
    // The same integrator over 50 periods from DC.
    let sys = StSystem::new(&c, &ts, LinearMode::Decoupled).unwrap();
    let grid = shooting_grid(1e-3, opts.steps_per_period, opts.startup_fraction);
    let dc = specsim_core::detsolve::dc_solve(&c, &[0.0], &NewtonOptions::default(), None).unwrap();
    let mut x = dc;
    for _ in 0..50 {
        x = transient_with_sensitivity(&sys, &x, &grid, 1, &NewtonOptions::default(), false, None)
            .unwrap()
            .trajectory
            .last()
            .clone();
    }
    let lte_tol = StepController::default().lte_tol;
    assert!((x - &sol.state.coeffs).amax() < 5.0 * lte_tol);
}

#[test]
fn forced_thd_of_linear_circuit_vanishes() {
    let text = "param xi gaussian\nV1 1 0 SIN(0 1 1k)\nR1 1 2 1k*(1+0.05*xi)\nC1 2 0 100n\n";
    let (c, b, ts) = setup(text, 2);
    let sol = shoot_forced(&c, &b, &ts, 1e-3, &ShootingOptions::default()).unwrap();
    let st = postprocess_pss(&sol, &c, &b, PssQuantity::Thd(1), 500, 3).unwrap();
    assert_eq!(st.undefined, 0);
    assert!(st.values.iter().all(|v| *v < 1e-3));
    let (m, _) = mean_std(&st.values);
    assert_eq!(m, st.mean);
}

//! `specsim run`: parse, dispatch to an engine, write results.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use specsim_core::circuit::{Analysis, Circuit, PssCard};
use specsim_core::detsolve::{StepController, TransientOptions};
use specsim_core::polychaos::GpcBasis;
use specsim_core::pss::{
    postprocess_pss, shoot_autonomous, shoot_forced, PssQuantity, ShootingOptions,
};
use specsim_core::quadrature::{gauss_tensor, smolyak_grid, RuleND};
use specsim_core::spectral::{
    mc_solve, pilot_step, sc_solve, select_testing_points, sg_solve_dc, sg_solve_transient,
    st_solve_dc, st_solve_transient, GpcState, Method, PointAnalysis, SolveStats, TestingSet,
    UqResult,
};
use specsim_core::stats::gaussian_kde;

use crate::config::{AnalysisKind, MethodKind, QuadKind, RunConfig, DEFAULT_LTE_TOL};
use crate::error::{io_err, CliError, CliResult};
use crate::output::{file_name, write_density, ResultTable};

pub const SUMMARY_FILE: &str = "summary.json";
const DENSITY_POINTS: usize = 200;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NewtonStats {
    pub iterations: usize,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub solves: usize,
    pub failures: usize,
}

impl From<SolveStats> for NewtonStats {
    fn from(s: SolveStats) -> Self {
        Self {
            iterations: s.newton_iters,
            accepted_steps: s.accepted_steps,
            rejected_steps: s.rejected_steps,
            solves: s.solves,
            failures: s.failures,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisInfo {
    pub dim: usize,
    pub order: usize,
    pub distributions: Vec<String>,
    /// Multi-indices in basis order.
    pub indices: Vec<Vec<usize>>,
}

impl BasisInfo {
    fn new(b: &GpcBasis) -> Self {
        Self {
            dim: b.dim(),
            order: b.order,
            distributions: b.distributions.iter().map(|d| d.to_string()).collect(),
            indices: b.index_set.iter().map(|m| m.0.clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub name: String,
    pub file: String,
    /// Analysis-specific figures (steps, periods, statistics, extra files).
    pub details: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: String,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    #[serde(rename = "N_hat")]
    pub n_hat: Option<usize>,
    pub kappa_samp: Option<f64>,
    #[serde(rename = "cond_V")]
    pub cond_v: Option<f64>,
    pub wall_time_s: f64,
    pub newton: NewtonStats,
    pub seed: u64,
    pub basis: Option<BasisInfo>,
    pub names: Vec<String>,
    pub analyses: Vec<AnalysisRecord>,
    /// Effective configuration with every default filled in.
    pub config: RunConfig,
}

impl Summary {
    pub fn read(dir: &Path) -> CliResult<Self> {
        let path = dir.join(SUMMARY_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| CliError::Result {
            path,
            message: e.to_string(),
        })
    }

    pub fn analysis(&self, name: &str) -> Option<&AnalysisRecord> {
        self.analyses.iter().find(|a| a.name == name)
    }
}

/// Basis plus whichever point set the method needs.
struct Engine {
    basis: Option<GpcBasis>,
    tset: Option<TestingSet>,
    quad: Option<RuleND>,
}

fn rule(circuit: &Circuit, kind: QuadKind, level: usize) -> specsim_core::Result<RuleND> {
    let d = circuit.distributions();
    match kind {
        QuadKind::Tensor => gauss_tensor(&d, level),
        QuadKind::Smolyak => smolyak_grid(&d, level),
    }
}

fn build_engine(circuit: &Circuit, cfg: &mut RunConfig) -> CliResult<Engine> {
    if cfg.method == MethodKind::Mc {
        cfg.quad = None;
        cfg.level = None;
        return Ok(Engine {
            basis: None,
            tset: None,
            quad: None,
        });
    }
    if circuit.dim() == 0 {
        return Err(CliError::Config(
            "netlist declares no random parameters; spectral methods need at least one".into(),
        ));
    }
    let basis = GpcBasis::total_degree(circuit.distributions(), cfg.order)?;
    let kind = cfg.quad_for(circuit.dim());
    let level = cfg.level_for(kind, circuit.max_param_degree());
    cfg.quad = Some(kind);
    cfg.level = Some(level);
    let rule = rule(circuit, kind, level)?;
    Ok(match cfg.method {
        MethodKind::St => Engine {
            tset: Some(select_testing_points(&rule, &basis, cfg.beta)?),
            basis: Some(basis),
            quad: None,
        },
        _ => Engine {
            basis: Some(basis),
            tset: None,
            quad: Some(rule),
        },
    })
}

fn names(circuit: &Circuit) -> Vec<String> {
    circuit.unknowns.iter().map(|u| u.name.clone()).collect()
}

/// Analyses to run: the requested ones (which must have cards, except DC),
/// else every card in the netlist, else DC.
fn select_analyses(circuit: &Circuit, cfg: &RunConfig) -> CliResult<Vec<AnalysisKind>> {
    let has = |k: AnalysisKind| {
        circuit.analyses.iter().any(|a| {
            matches!(
                (k, a),
                (AnalysisKind::Dc, Analysis::Dc)
                    | (AnalysisKind::Tran, Analysis::Tran { .. })
                    | (AnalysisKind::Pss, Analysis::Pss(_))
            )
        })
    };
    if !cfg.analyses.is_empty() {
        for &k in &cfg.analyses {
            if k != AnalysisKind::Dc && !has(k) {
                return Err(CliError::Config(format!(
                    "analysis `{}` requested but the netlist has no `.{}` card",
                    k.name(),
                    k.name()
                )));
            }
        }
        return Ok(cfg.analyses.clone());
    }
    let mut out: Vec<AnalysisKind> = Vec::new();
    for a in &circuit.analyses {
        let k = match a {
            Analysis::Dc => AnalysisKind::Dc,
            Analysis::Tran { .. } => AnalysisKind::Tran,
            Analysis::Pss(_) => AnalysisKind::Pss,
        };
        if !out.contains(&k) {
            out.push(k);
        }
    }
    if out.is_empty() {
        out.push(AnalysisKind::Dc);
    }
    Ok(out)
}

fn tran_card(circuit: &Circuit) -> (f64, Option<f64>) {
    circuit
        .analyses
        .iter()
        .find_map(|a| match a {
            Analysis::Tran { tstop, tol } => Some((*tstop, *tol)),
            _ => None,
        })
        .expect("checked by select_analyses")
}

fn pss_card(circuit: &Circuit) -> PssCard {
    circuit
        .analyses
        .iter()
        .find_map(|a| match a {
            Analysis::Pss(c) => Some(c.clone()),
            _ => None,
        })
        .expect("checked by select_analyses")
}

fn mean_point(circuit: &Circuit) -> Vec<f64> {
    circuit.distributions().iter().map(|d| d.mean()).collect()
}

fn run_dc(circuit: &Circuit, cfg: &RunConfig, eng: &Engine) -> CliResult<UqResult> {
    let opts = TransientOptions::default();
    let r = match cfg.method {
        MethodKind::St => {
            let (s, st) = st_solve_dc(
                circuit,
                eng.basis.as_ref().expect("st basis"),
                eng.tset.as_ref().expect("st testing set"),
                &opts.newton,
                cfg.linear.mode(),
            )?;
            UqResult::from_states(Method::St, names(circuit), &[s], st)
        }
        MethodKind::Sg => {
            let (s, st) = sg_solve_dc(
                circuit,
                eng.basis.as_ref().expect("sg basis"),
                eng.quad.as_ref().expect("sg rule"),
                &opts.newton,
            )?;
            UqResult::from_states(Method::Sg, names(circuit), &[s], st)
        }
        MethodKind::Sc => sc_solve(
            circuit,
            eng.basis.as_ref().expect("sc basis"),
            eng.quad.as_ref().expect("sc rule"),
            PointAnalysis::Dc,
            &opts,
        )?,
        MethodKind::Mc => mc_solve(circuit, cfg.samples, cfg.seed, PointAnalysis::Dc, &opts)?,
    };
    Ok(r)
}

fn run_tran(circuit: &Circuit, cfg: &RunConfig, eng: &Engine) -> CliResult<(UqResult, Value)> {
    let (t_stop, _) = tran_card(circuit);
    let opts = TransientOptions {
        step: StepController {
            lte_tol: cfg.lte_tol.unwrap_or(DEFAULT_LTE_TOL),
            ..Default::default()
        },
        ..Default::default()
    };
    let mut details = json!({ "t_stop": t_stop, "lte_tol": opts.step.lte_tol });
    let r = match cfg.method {
        MethodKind::St | MethodKind::Sg => {
            let basis = eng.basis.as_ref().expect("basis");
            let (states, st) = if cfg.method == MethodKind::St {
                let tset = eng.tset.as_ref().expect("testing set");
                st_solve_transient(circuit, basis, tset, None, t_stop, &opts, cfg.linear.mode())?
            } else {
                let quad = eng.quad.as_ref().expect("rule");
                sg_solve_transient(circuit, basis, quad, None, t_stop, &opts)?
            };
            details["step_mode"] = json!("adaptive");
            UqResult::from_states(cfg.method.method(), names(circuit), &states, st)
        }
        MethodKind::Sc | MethodKind::Mc => {
            let h = pilot_step(circuit, &mean_point(circuit), t_stop, &opts)?;
            details["step_mode"] = json!("fixed");
            details["step"] = json!(h);
            let analysis = PointAnalysis::Transient { t_stop, h };
            if cfg.method == MethodKind::Sc {
                sc_solve(
                    circuit,
                    eng.basis.as_ref().expect("basis"),
                    eng.quad.as_ref().expect("rule"),
                    analysis,
                    &opts,
                )?
            } else {
                mc_solve(circuit, cfg.samples, cfg.seed, analysis, &opts)?
            }
        }
    };
    // Steps per deterministic solve.
    let per = if r.stats.solves > 0 && matches!(cfg.method, MethodKind::Sc | MethodKind::Mc) {
        r.stats.accepted_steps / r.stats.solves
    } else {
        r.stats.accepted_steps
    };
    details["time_points"] = json!(r.times.len());
    details["steps"] = json!(per);
    Ok((r, details))
}

fn density_record(
    cfg: &RunConfig,
    stem: &str,
    values: &[f64],
    undefined: usize,
    mean: f64,
    std: f64,
) -> CliResult<Value> {
    let file = file_name(stem, cfg.format);
    write_density(
        &cfg.out.join(&file),
        cfg.format,
        &gaussian_kde(values, DENSITY_POINTS),
    )?;
    Ok(json!({
        "mean": mean,
        "std": std,
        "samples": values.len(),
        "undefined": undefined,
        "density_file": file.display().to_string(),
    }))
}

fn run_pss(circuit: &Circuit, cfg: &RunConfig, eng: &Engine) -> CliResult<(UqResult, Value)> {
    if cfg.method != MethodKind::St {
        return Err(CliError::Config(
            "periodic steady state is only available with --method st".into(),
        ));
    }
    let basis = eng.basis.as_ref().expect("basis");
    let tset = eng.tset.as_ref().expect("testing set");
    let opts = ShootingOptions {
        steps_per_period: cfg.steps_per_period,
        mode: cfg.linear.mode(),
        ..Default::default()
    };
    let card = pss_card(circuit);
    let sol = match card {
        PssCard::Forced { period } => shoot_forced(circuit, basis, tset, period, &opts)?,
        PssCard::Autonomous { t0, node, lambda } => {
            shoot_autonomous(circuit, basis, tset, t0, node, lambda, &opts)?
        }
    };
    let states: Vec<GpcState> = sol.uniform_period().into_iter().cloned().collect();
    let result = UqResult::from_states(Method::St, names(circuit), &states, sol.stats);
    let mut details = json!({
        "period": sol.period,
        "steps_per_period": sol.steps_per_period,
        "shooting_iterations": sol.iterations,
        "shooting_residual": sol.residual,
    });

    let probe = match &cfg.probe {
        Some(p) => circuit
            .unknown_index(p)
            .ok_or_else(|| CliError::Config(format!("--probe: unknown `{p}`")))?,
        None => circuit.node_names.len().saturating_sub(1),
    };
    let seed = cfg.seed;
    let thd = postprocess_pss(
        &sol,
        circuit,
        basis,
        PssQuantity::Thd(probe),
        cfg.pdf_samples,
        seed,
    )?;
    details["thd"] = density_record(
        cfg,
        "pss_thd_pdf",
        &thd.values,
        thd.undefined,
        thd.mean,
        thd.std,
    )?;
    details["thd"]["unknown"] = json!(circuit.unknowns[probe].name);

    if let Some(dev) = &cfg.power {
        let idx = circuit
            .devices
            .iter()
            .position(|d| d.name.eq_ignore_ascii_case(dev))
            .ok_or_else(|| CliError::Config(format!("--power: unknown device `{dev}`")))?;
        let p = postprocess_pss(
            &sol,
            circuit,
            basis,
            PssQuantity::Power(idx),
            cfg.pdf_samples,
            seed,
        )?;
        details["power"] =
            density_record(cfg, "pss_power_pdf", &p.values, p.undefined, p.mean, p.std)?;
        details["power"]["device"] = json!(circuit.devices[idx].name);
    }

    if let (Some(a), Some((node, level))) = (&sol.scaling, sol.phase) {
        details["time_axis"] = json!("tau");
        details["scaling_coefficients"] = json!(a.iter().collect::<Vec<_>>());
        details["phase_node"] = json!(circuit.node_names[node]);
        details["phase_level"] = json!(level);
        let f = postprocess_pss(
            &sol,
            circuit,
            basis,
            PssQuantity::Frequency,
            cfg.pdf_samples,
            seed,
        )?;
        details["frequency"] = density_record(
            cfg,
            "pss_frequency_pdf",
            &f.values,
            f.undefined,
            f.mean,
            f.std,
        )?;
    } else {
        details["time_axis"] = json!("t");
    }
    Ok((result, details))
}

fn read_netlist(path: &Path) -> CliResult<Circuit> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Circuit::parse(&text).map_err(|source| CliError::Netlist {
        path: path.to_path_buf(),
        source,
    })
}

/// Execute one run and write `summary.json` plus one result file per analysis.
pub fn run(config: &RunConfig) -> CliResult<Summary> {
    let start = Instant::now();
    config.validate()?;
    let mut cfg = config.clone();
    let circuit = read_netlist(&cfg.netlist)?;
    let analyses = select_analyses(&circuit, &cfg)?;
    cfg.analyses = analyses.clone();
    if analyses.contains(&AnalysisKind::Tran) {
        let (_, card_tol) = tran_card(&circuit);
        cfg.lte_tol = Some(cfg.lte_tol.or(card_tol).unwrap_or(DEFAULT_LTE_TOL));
    }
    if cfg.method != MethodKind::Mc && cfg.order > specsim_core::polychaos::MAX_DEGREE {
        return Err(specsim_core::Error::DegreeTooHigh {
            degree: cfg.order,
            max: specsim_core::polychaos::MAX_DEGREE,
        }
        .into());
    }
    let engine = build_engine(&circuit, &mut cfg)?;
    fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;

    let mut stats = SolveStats::default();
    let mut records = Vec::new();
    for kind in analyses {
        let (result, details) = match kind {
            AnalysisKind::Dc => (run_dc(&circuit, &cfg, &engine)?, json!({})),
            AnalysisKind::Tran => run_tran(&circuit, &cfg, &engine)?,
            AnalysisKind::Pss => run_pss(&circuit, &cfg, &engine)?,
        };
        stats.merge(&result.stats);
        let file = file_name(kind.name(), cfg.format);
        ResultTable::from_result(kind.name(), &result).write(&cfg.out.join(&file), cfg.format)?;
        records.push(AnalysisRecord {
            name: kind.name().to_string(),
            file: file.display().to_string(),
            details,
        });
    }

    let k = engine.basis.as_ref().map(GpcBasis::len);
    let n_hat = match cfg.method {
        MethodKind::St => engine.tset.as_ref().map(|t| t.candidates),
        MethodKind::Sg | MethodKind::Sc => engine.quad.as_ref().map(RuleND::len),
        MethodKind::Mc => Some(cfg.samples),
    };
    let kappa_samp = match (n_hat, k) {
        (Some(n), Some(k)) => Some(n as f64 / k as f64),
        _ => None,
    };
    let mut summary = Summary {
        method: cfg.method.method().name().to_string(),
        k,
        n_hat,
        kappa_samp,
        cond_v: engine.tset.as_ref().map(|t| t.cond),
        wall_time_s: 0.0,
        newton: stats.into(),
        seed: cfg.seed,
        basis: engine.basis.as_ref().map(BasisInfo::new),
        names: names(&circuit),
        analyses: records,
        config: cfg,
    };
    summary.wall_time_s = start.elapsed().as_secs_f64();
    let path = summary.config.out.join(SUMMARY_FILE);
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(summary)
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use specsim::output::ResultTable;
use specsim::{run, MethodKind, OutputFormat, RunConfig};

const DIVIDER: &str = "param xi uniform\nV1 1 0 1\nR1 1 2 1k*(1+0.1*xi)\nR2 2 0 1k\n";
const AFFINE: &str = "param xi uniform\nV1 1 0 1*(1+0.1*xi)\nR1 1 2 1k\nR2 2 0 1k\n";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_specsim"))
}

fn netlist(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn specsim(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn divider_st_writes_summary_and_coefficients() {
    let tmp = tempfile::tempdir().unwrap();
    let net = netlist(tmp.path(), "div.sp", DIVIDER);
    let out = tmp.path().join("st");
    let o = specsim(&[
        "run",
        s(&net),
        "--method",
        "st",
        "--order",
        "3",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sm = summary(&out);
    assert_eq!(sm["K"], 4);
    assert_eq!(sm["basis"]["dim"], 1);
    assert!(sm["cond_V"].as_f64().unwrap() >= 1.0);
    assert!(sm["wall_time_s"].as_f64().is_some());
    assert_eq!(sm["config"]["level"], 4);
    let csv = fs::read_to_string(out.join("dc.csv")).unwrap();
    assert!(csv.starts_with("time,v(1):mean,v(1):std,v(1):c1,v(1):c2,v(1):c3,v(1):c4,"));
}

#[test]
fn seeded_monte_carlo_is_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let net = netlist(tmp.path(), "div.sp", DIVIDER);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = specsim(&[
            "run",
            s(&net),
            "--method",
            "mc",
            "--samples",
            "3000",
            "--seed",
            "42",
            "--out",
            s(d),
        ]);
        assert!(o.status.success());
    }
    assert_eq!(
        fs::read(a.join("dc.csv")).unwrap(),
        fs::read(b.join("dc.csv")).unwrap()
    );
    let (mut sa, mut sb) = (summary(&a), summary(&b));
    for v in [&mut sa, &mut sb] {
        v.as_object_mut().unwrap().remove("wall_time_s");
        v["config"].as_object_mut().unwrap().remove("out");
    }
    assert_eq!(sa, sb);
}

#[test]
fn thread_cap_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let net = netlist(tmp.path(), "div.sp", DIVIDER);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let args = |d: &Path| {
        vec![
            "run".to_string(),
            s(&net).into(),
            "--method".into(),
            "mc".into(),
            "--samples".into(),
            "2000".into(),
            "--out".into(),
            s(d).into(),
        ]
    };
    assert!(bin()
        .args(args(&a))
        .env("SPECSIM_THREADS", "1")
        .status()
        .unwrap()
        .success());
    assert!(bin()
        .args(args(&b))
        .env("SPECSIM_THREADS", "4")
        .status()
        .unwrap()
        .success());
    assert_eq!(
        fs::read(a.join("dc.csv")).unwrap(),
        fs::read(b.join("dc.csv")).unwrap()
    );
    let o = bin()
        .args(args(&a))
        .env("SPECSIM_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_netlist_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.sp");
    let o = specsim(&["run", s(&missing), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    let rec: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(rec["error"]["path"], s(&missing));
}

#[test]
fn syntax_error_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let net = netlist(tmp.path(), "bad.sp", "param xi uniform\nR1 1 0 -1k\n");
    let o = specsim(&["run", s(&net), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    let rec: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(rec["error"]["kind"], "netlist");
}

#[test]
fn solver_failure_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    // Node 2 floats.
    let net = netlist(
        tmp.path(),
        "float.sp",
        "param xi uniform\nV1 1 0 1\nR1 1 0 1k*(1+0.1*xi)\nC1 2 0 1n\n",
    );
    let o = specsim(&["run", s(&net), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let rec: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(rec["error"]["kind"], "solver");
}

#[test]
fn compare_st_sg_on_affine_divider() {
    let tmp = tempfile::tempdir().unwrap();
    let net = netlist(tmp.path(), "aff.sp", AFFINE);
    let (a, b, c) = (
        tmp.path().join("st"),
        tmp.path().join("sg"),
        tmp.path().join("p2"),
    );
    assert!(specsim(&[
        "run",
        s(&net),
        "--method",
        "st",
        "--order",
        "3",
        "--out",
        s(&a)
    ])
    .status
    .success());
    assert!(specsim(&[
        "run",
        s(&net),
        "--method",
        "sg",
        "--order",
        "3",
        "--out",
        s(&b)
    ])
    .status
    .success());
    assert!(specsim(&[
        "run",
        s(&net),
        "--method",
        "sg",
        "--order",
        "2",
        "--out",
        s(&c)
    ])
    .status
    .success());

    let o = specsim(&["compare", s(&a), s(&b), "--tol", "1e-8"]);
    assert!(o.status.success());
    let rep: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(rep["max_l2"].as_f64().unwrap() < 1e-8);

    let o = specsim(&["compare", s(&a), s(&a), "--tol", "0"]);
    assert!(o.status.success());
    let rep: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rep["max_l2"].as_f64().unwrap(), 0.0);

    let o = specsim(&["compare", s(&a), s(&c)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn csv_and_json_results_read_back_equal() {
    let tmp = tempfile::tempdir().unwrap();
    let net = netlist(
        tmp.path(),
        "rc.sp",
        "param xi uniform\nV1 1 0 1\nR1 1 2 1k*(1+0.1*xi)\nC1 2 0 1u\n.ic v(2)=0 v(1)=1\n.tran 2m\n",
    );
    let mut cfg = RunConfig::new(&net, MethodKind::St, tmp.path().join("csv"));
    cfg.order = 2;
    let sc = run(&cfg).unwrap();
    cfg.format = OutputFormat::Json;
    cfg.out = tmp.path().join("json");
    let sj = run(&cfg).unwrap();
    let tc = ResultTable::read(&tmp.path().join("csv/tran.csv"), "tran", &sc.method).unwrap();
    let tj = ResultTable::read(&tmp.path().join("json/tran.json"), "tran", &sj.method).unwrap();
    assert_eq!(tc, tj);
    assert_eq!(sc.config.lte_tol, Some(1e-6));
    assert!(tc.times.len() > 10);
}

#[test]
fn collocation_transient_uses_fixed_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let net = netlist(
        tmp.path(),
        "rc.sp",
        "param xi uniform\nR1 1 0 1k*(1+0.1*xi)\nC1 1 0 1u\n.ic v(1)=1\n.tran 3m 1e-5\n",
    );
    let out = tmp.path().join("sc");
    let o = specsim(&[
        "run",
        s(&net),
        "--method",
        "sc",
        "--order",
        "2",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sm = summary(&out);
    let tran = &sm["analyses"][0]["details"];
    assert_eq!(tran["step_mode"], "fixed");
    assert_eq!(sm["config"]["lte_tol"].as_f64(), Some(1e-5));
    let h = tran["step"].as_f64().unwrap();
    let t = ResultTable::read(&out.join("tran.csv"), "tran", "sc").unwrap();
    assert!((t.times[1] - h).abs() < 1e-18);
}

#[test]
fn forced_pss_writes_waveform_and_densities() {
    let tmp = tempfile::tempdir().unwrap();
    let net = netlist(
        tmp.path(),
        "rect.sp",
        "param xi gaussian\nV1 in 0 SIN(0 2 1k)\nD1 in out\nC1 out 0 1u\nR1 out 0 10k*(1+0.05*xi)\n.pss 1m\n",
    );
    let out = tmp.path().join("pss");
    let o = specsim(&[
        "run",
        s(&net),
        "--order",
        "2",
        "--out",
        s(&out),
        "--power",
        "R1",
        "--pdf-samples",
        "500",
        "--steps-per-period",
        "64",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sm = summary(&out);
    let d = &sm["analyses"][0]["details"];
    assert_eq!(d["thd"]["unknown"], "v(out)");
    assert!(d["power"]["mean"].as_f64().unwrap() > 0.0);
    assert!(out.join("pss_thd_pdf.csv").exists() && out.join("pss_power_pdf.csv").exists());
    let t = ResultTable::read(&out.join("pss.csv"), "pss", "st").unwrap();
    assert_eq!(t.times.len(), 64);
}

#[test]
fn pss_requires_stochastic_testing() {
    let tmp = tempfile::tempdir().unwrap();
    let net = netlist(
        tmp.path(),
        "p.sp",
        "param xi uniform\nV1 1 0 SIN(0 1 1k)\nR1 1 0 1k*(1+0.1*xi)\n.pss 1m\n",
    );
    let o = specsim(&[
        "run",
        s(&net),
        "--method",
        "sc",
        "--out",
        s(&tmp.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

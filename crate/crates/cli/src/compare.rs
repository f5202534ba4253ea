//! `specsim compare`: L2 distance between the gPC coefficients of two runs.

use std::path::Path;

use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::output::ResultTable;
use crate::run::Summary;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisDiff {
    pub analysis: String,
    pub time_points: usize,
    pub max_l2: f64,
    pub mean_l2: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub tol: f64,
    pub analyses: Vec<AnalysisDiff>,
    pub max_l2: f64,
    pub mean_l2: f64,
    pub pass: bool,
}

/// Coefficients of `t` at time `x`, linear in time between stored points.
fn coeffs_at(t: &ResultTable, x: f64) -> Vec<f64> {
    let i = t.times.partition_point(|&s| s < x);
    if i < t.times.len() && t.times[i] == x {
        return t.coeffs[i].clone();
    }
    let i = i.clamp(1, t.times.len() - 1);
    let (t0, t1) = (t.times[i - 1], t.times[i]);
    let w = (x - t0) / (t1 - t0);
    t.coeffs[i - 1]
        .iter()
        .zip(&t.coeffs[i])
        .map(|(a, b)| a + w * (b - a))
        .collect()
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn diff_tables(name: &str, a: &ResultTable, b: &ResultTable, tol: f64) -> AnalysisDiff {
    let (lo, hi) = (b.times[0], b.times[b.times.len() - 1]);
    let mut d = Vec::new();
    for (i, &t) in a.times.iter().enumerate() {
        if t < lo || t > hi {
            continue;
        }
        let cb = if b.times.len() == 1 {
            b.coeffs[0].clone()
        } else {
            coeffs_at(b, t)
        };
        d.push(l2(&a.coeffs[i], &cb));
    }
    let max_l2 = d.iter().cloned().fold(0.0, f64::max);
    let mean_l2 = if d.is_empty() {
        0.0
    } else {
        d.iter().sum::<f64>() / d.len() as f64
    };
    AnalysisDiff {
        analysis: name.to_string(),
        time_points: d.len(),
        max_l2,
        mean_l2,
        pass: max_l2 <= tol,
    }
}

/// Compare every analysis present in both result directories.
pub fn compare(dir_a: &Path, dir_b: &Path, tol: f64) -> CliResult<CompareReport> {
    if !(tol >= 0.0) {
        return Err(CliError::Config(format!(
            "--tol must be non-negative, got {tol}"
        )));
    }
    let (sa, sb) = (Summary::read(dir_a)?, Summary::read(dir_b)?);
    let (ba, bb) = match (&sa.basis, &sb.basis) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(CliError::Config(
                "compare needs gPC coefficients; Monte Carlo runs have none".into(),
            ))
        }
    };
    if ba != bb {
        return Err(CliError::Config(format!(
            "mismatched basis: order {} over {:?} vs order {} over {:?}",
            ba.order, ba.distributions, bb.order, bb.distributions
        )));
    }
    if sa.names != sb.names {
        return Err(CliError::Config("mismatched unknown ordering".into()));
    }
    let mut analyses = Vec::new();
    for ra in &sa.analyses {
        let Some(rb) = sb.analysis(&ra.name) else {
            continue;
        };
        let ta = ResultTable::read(&dir_a.join(&ra.file), &ra.name, &sa.method)?;
        let tb = ResultTable::read(&dir_b.join(&rb.file), &rb.name, &sb.method)?;
        if ta.basis_len != tb.basis_len || ta.names != tb.names {
            return Err(CliError::Config(format!(
                "mismatched layout in analysis `{}`",
                ra.name
            )));
        }
        analyses.push(diff_tables(&ra.name, &ta, &tb, tol));
    }
    if analyses.is_empty() {
        return Err(CliError::Config("the runs share no analysis".into()));
    }
    let max_l2 = analyses.iter().map(|a| a.max_l2).fold(0.0, f64::max);
    let points: usize = analyses.iter().map(|a| a.time_points).sum();
    let mean_l2 = analyses
        .iter()
        .map(|a| a.mean_l2 * a.time_points as f64)
        .sum::<f64>()
        / points.max(1) as f64;
    Ok(CompareReport {
        tol,
        pass: analyses.iter().all(|a| a.pass),
        analyses,
        max_l2,
        mean_l2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(times: Vec<f64>, coeffs: Vec<Vec<f64>>) -> ResultTable {
        ResultTable {
            analysis: "tran".into(),
            method: "st".into(),
            names: vec!["v(1)".into()],
            basis_len: 2,
            mean: vec![vec![0.0]; times.len()],
            std: vec![vec![0.0]; times.len()],
            times,
            coeffs,
            mean_se: Vec::new(),
            std_se: Vec::new(),
        }
    }

    #[test]
    fn interpolates_onto_the_first_grid() {
        let a = table(
            vec![0.0, 0.5, 1.0],
            vec![vec![0.0, 0.0], vec![0.5, 1.0], vec![1.0, 2.0]],
        );
        let b = table(vec![0.0, 1.0], vec![vec![0.0, 0.0], vec![1.0, 2.0]]);
        let d = diff_tables("tran", &a, &b, 1e-12);
        assert_eq!(d.time_points, 3);
        assert!(d.max_l2 < 1e-15 && d.pass);
    }

    #[test]
    fn reports_l2_norm() {
        let a = table(vec![0.0], vec![vec![3.0, 4.0]]);
        let b = table(vec![0.0], vec![vec![0.0, 0.0]]);
        let d = diff_tables("dc", &a, &b, 1.0);
        assert_eq!(d.max_l2, 5.0);
        assert!(!d.pass);
    }
}

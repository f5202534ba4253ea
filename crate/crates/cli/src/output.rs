//! Result files: waveform tables in CSV or JSON and density samples.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use specsim_core::spectral::UqResult;

use crate::config::OutputFormat;
use crate::error::{io_err, CliError, CliResult};

/// Shortest text that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else if x.is_finite() {
        format!("{x:e}")
    } else {
        "NaN".to_string()
    }
}

/// Column-oriented copy of a result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub analysis: String,
    pub method: String,
    pub names: Vec<String>,
    /// Basis size `K`; 0 when no coefficients are stored.
    pub basis_len: usize,
    pub times: Vec<f64>,
    /// `mean[t][i]`.
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
    /// Stacked coefficient blocks `[c1 (n values), c2, ...]` per time.
    pub coeffs: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mean_se: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub std_se: Vec<Vec<f64>>,
}

fn rows(v: &[DVector<f64>]) -> Vec<Vec<f64>> {
    v.iter().map(|x| x.iter().cloned().collect()).collect()
}

impl ResultTable {
    pub fn from_result(analysis: &str, r: &UqResult) -> Self {
        Self {
            analysis: analysis.to_string(),
            method: r.method.name().to_string(),
            names: r.names.clone(),
            basis_len: r.basis_len,
            times: r.times.clone(),
            mean: rows(&r.mean),
            std: rows(&r.std),
            coeffs: rows(&r.coeffs),
            mean_se: rows(&r.mean_se),
            std_se: rows(&r.std_se),
        }
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec!["time".to_string()];
        for name in &self.names {
            h.push(format!("{name}:mean"));
            h.push(format!("{name}:std"));
            for j in 1..=self.basis_len {
                h.push(format!("{name}:c{j}"));
            }
            if !self.mean_se.is_empty() {
                h.push(format!("{name}:mean_se"));
                h.push(format!("{name}:std_se"));
            }
        }
        h
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header().join(",");
        s.push('\n');
        let n = self.n();
        for (ti, t) in self.times.iter().enumerate() {
            let mut row = vec![fmt_f64(*t)];
            for i in 0..n {
                row.push(fmt_f64(self.mean[ti][i]));
                row.push(fmt_f64(self.std[ti][i]));
                for j in 0..self.basis_len {
                    row.push(fmt_f64(self.coeffs[ti][j * n + i]));
                }
                if !self.mean_se.is_empty() {
                    row.push(fmt_f64(self.mean_se[ti][i]));
                    row.push(fmt_f64(self.std_se[ti][i]));
                }
            }
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }

    /// Parse a CSV written by [`ResultTable::to_csv`]; `analysis` and
    /// `method` are not stored in the CSV and must be supplied.
    pub fn from_csv(text: &str, analysis: &str, method: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().ok_or("empty file")?.split(',').collect();
        if header.first() != Some(&"time") {
            return Err("first column must be `time`".into());
        }
        let mut names = Vec::new();
        let mut basis_len = 0;
        let mut with_se = false;
        for col in &header[1..] {
            let (name, field) = col
                .rsplit_once(':')
                .ok_or_else(|| format!("bad column `{col}`"))?;
            match field {
                "mean" => names.push(name.to_string()),
                "mean_se" => with_se = true,
                f if f.starts_with('c') && names.len() == 1 => {
                    basis_len = basis_len.max(f[1..].parse().unwrap_or(0))
                }
                _ => {}
            }
        }
        let per = 2 + basis_len + if with_se { 2 } else { 0 };
        let n = names.len();
        if header.len() != 1 + n * per {
            return Err("inconsistent column count".into());
        }
        let mut t = ResultTable {
            analysis: analysis.to_string(),
            method: method.to_string(),
            names,
            basis_len,
            times: Vec::new(),
            mean: Vec::new(),
            std: Vec::new(),
            coeffs: Vec::new(),
            mean_se: Vec::new(),
            std_se: Vec::new(),
        };
        for (ln, line) in lines.enumerate() {
            let v: Vec<f64> = line
                .split(',')
                .map(|s| s.parse::<f64>().map_err(|e| format!("row {}: {e}", ln + 2)))
                .collect::<Result<_, _>>()?;
            if v.len() != header.len() {
                return Err(format!("row {} has {} fields", ln + 2, v.len()));
            }
            t.times.push(v[0]);
            let mut m = vec![0.0; n];
            let mut s = vec![0.0; n];
            let mut c = vec![0.0; n * basis_len];
            let mut me = vec![0.0; n];
            let mut se = vec![0.0; n];
            for i in 0..n {
                let b = 1 + i * per;
                m[i] = v[b];
                s[i] = v[b + 1];
                for j in 0..basis_len {
                    c[j * n + i] = v[b + 2 + j];
                }
                if with_se {
                    me[i] = v[b + 2 + basis_len];
                    se[i] = v[b + 3 + basis_len];
                }
            }
            t.mean.push(m);
            t.std.push(s);
            if basis_len > 0 {
                t.coeffs.push(c);
            }
            if with_se {
                t.mean_se.push(me);
                t.std_se.push(se);
            }
        }
        Ok(t)
    }

    pub fn write(&self, path: &Path, format: OutputFormat) -> CliResult<()> {
        let text = match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => serde_json::to_string(self).expect("tables serialize") + "\n",
        };
        fs::write(path, text).map_err(io_err(path))
    }

    pub fn read(path: &Path, analysis: &str, method: &str) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let bad = |message: String| CliError::Result {
            path: path.to_path_buf(),
            message,
        };
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| bad(e.to_string()))
        } else {
            Self::from_csv(&text, analysis, method).map_err(bad)
        }
    }
}

/// `(value, density)` pairs of a kernel density estimate.
pub fn write_density(path: &Path, format: OutputFormat, density: &[(f64, f64)]) -> CliResult<()> {
    let text = match format {
        OutputFormat::Csv => {
            let mut s = String::from("value,density\n");
            for (x, d) in density {
                let _ = writeln!(s, "{},{}", fmt_f64(*x), fmt_f64(*d));
            }
            s
        }
        OutputFormat::Json => {
            let (v, d): (Vec<f64>, Vec<f64>) = density.iter().cloned().unzip();
            serde_json::json!({ "value": v, "density": d }).to_string() + "\n"
        }
    };
    fs::write(path, text).map_err(io_err(path))
}

pub fn file_name(stem: &str, format: OutputFormat) -> PathBuf {
    PathBuf::from(format!("{stem}.{}", format.extension()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ResultTable {
        ResultTable {
            analysis: "tran".into(),
            method: "st".into(),
            names: vec!["v(1)".into(), "i(V1)".into()],
            basis_len: 2,
            times: vec![0.0, 1e-9, 0.1],
            mean: vec![
                vec![1.0, -1e-3],
                vec![0.1 + 0.2, 1.0 / 3.0],
                vec![1e-300, 5e20],
            ],
            std: vec![vec![0.0; 2]; 3],
            coeffs: vec![vec![1.0, -1e-3, 0.5, 2e-7]; 3],
            mean_se: Vec::new(),
            std_se: Vec::new(),
        }
    }

    #[test]
    fn float_text_round_trips() {
        for x in [0.1 + 0.2, 1.0 / 3.0, 1e-300, 5e20, -2.5e-7, 123456.789, 0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn csv_round_trip() {
        let t = sample();
        let back = ResultTable::from_csv(&t.to_csv(), "tran", "st").unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn csv_header_layout() {
        let csv = sample().to_csv();
        assert_eq!(
            csv.lines().next().unwrap(),
            "time,v(1):mean,v(1):std,v(1):c1,v(1):c2,i(V1):mean,i(V1):std,i(V1):c1,i(V1):c2"
        );
    }

    #[test]
    fn json_round_trip() {
        let t = sample();
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(serde_json::from_str::<ResultTable>(&s).unwrap(), t);
    }

    #[test]
    fn monte_carlo_columns() {
        let mut t = sample();
        t.basis_len = 0;
        t.coeffs.clear();
        t.mean_se = vec![vec![1e-4, 2e-4]; 3];
        t.std_se = vec![vec![3e-4, 4e-4]; 3];
        let csv = t.to_csv();
        assert!(csv.starts_with("time,v(1):mean,v(1):std,v(1):mean_se,v(1):std_se,"));
        assert_eq!(ResultTable::from_csv(&csv, "tran", "st").unwrap(), t);
    }
}

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use gpe_core::reconstruction::ReportRow;
use gpe_core::Bundle;

/// 17 significant digits, the format used for every number in data files.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn z_names(n: usize) -> Vec<String> {
    (0..n)
        .map(|j| format!("p{j}"))
        .chain((0..n).map(|j| format!("x{j}")))
        .collect()
}

/// `t, Z[0..2n), Delta2 row-major, S`.
pub fn write_trajectory(path: &Path, b: &Bundle) -> Result<()> {
    let n = b.n();
    let d = 2 * n;
    let mut header = vec!["t".to_string()];
    header.extend(z_names(n).into_iter().map(|s| format!("Z_{s}")));
    for i in 0..d {
        for j in 0..d {
            header.push(format!("Delta2_{i}{j}"));
        }
    }
    header.push("S".into());
    let rows: Vec<Vec<String>> = (0..b.len())
        .map(|k| {
            let mut r = vec![num(b.times[k])];
            r.extend(b.z[k].as_slice().iter().map(|&v| num(v)));
            for i in 0..d {
                for j in 0..d {
                    r.push(num(b.delta2[k][(i, j)]));
                }
            }
            r.push(num(b.action[k]));
            r
        })
        .collect();
    write_csv(path, &header, &rows)
}

/// Norm and moment diagnostics with the nonlocal trace phase.
pub fn write_moments(path: &Path, rows: &[ReportRow<f64>], b: &Bundle) -> Result<()> {
    let n = b.n();
    let mut header = vec!["t".to_string(), "norm".into()];
    header.extend(z_names(n).into_iter().map(|s| format!("psi_{s}")));
    header.extend(
        ["moment_deviation", "covariance_deviation", "centering", "trace_phase"]
            .iter()
            .map(|s| s.to_string()),
    );
    let out: Vec<Vec<String>> = rows
        .iter()
        .zip(&b.trace_phase)
        .map(|(r, tp)| {
            let mut v = vec![num(r.t), num(r.norm)];
            v.extend(r.z_psi.as_slice().iter().map(|&x| num(x)));
            v.extend([r.moment_deviation, r.covariance_deviation, r.centering, *tp].map(num));
            v
        })
        .collect();
    write_csv(path, &header, &out)
}

/// `key = value` lines; values already formatted.
#[derive(Default)]
pub struct Report {
    text: String,
}

impl Report {
    pub fn line(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.text, "{key} = {value}");
    }

    pub fn number(&mut self, key: &str, value: f64) {
        self.line(key, num(value));
    }

    pub fn raw(&mut self, s: &str) {
        self.text.push_str(s);
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, &self.text).with_context(|| format!("writing {}", path.display()))
    }
}

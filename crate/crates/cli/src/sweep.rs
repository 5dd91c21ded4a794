use std::fs;
use std::path::Path;

use anyhow::Result;
use gpe_core::flow::evolve_bundle;
use gpe_core::moments::gaussian_moments;
use gpe_core::reconstruction::base_assembly;
use gpe_core::solver::{compare_l2, split_step_evolve_with, SplitStepOptions};
use gpe_core::Bundle;
use rayon::prelude::*;
use serde_json::Value;

use crate::output::{num, write_csv, write_trajectory};
use crate::scenario::{self, Command, Diag, Prepared};

/// Parses a comma-separated list of numbers.
pub fn parse_values(text: &str) -> Result<Vec<f64>, Vec<Diag>> {
    let parts: Vec<&str> = text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if parts.is_empty() {
        return Err(vec![Diag::new("--values", "empty axis")]);
    }
    let mut out = Vec::with_capacity(parts.len());
    let mut diags = Vec::new();
    for p in parts {
        match p.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            _ => diags.push(Diag::new("--values", format!("{p:?} is not a finite number"))),
        }
    }
    if diags.is_empty() {
        Ok(out)
    } else {
        Err(diags)
    }
}

/// The numeric leaf named by a dotted path (`model.kappa`, `model.hzz.1.1`).
fn leaf<'a>(doc: &'a mut Value, path: &str) -> Result<&'a mut Value, Diag> {
    let mut cur = doc;
    for seg in path.split('.') {
        cur = match cur {
            Value::Object(map) => map.get_mut(seg),
            Value::Array(items) => seg.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| Diag::new(path, "axis does not name an existing field"))?;
    }
    if cur.is_number() {
        Ok(cur)
    } else {
        Err(Diag::new(path, "axis does not name a numeric leaf"))
    }
}

/// Scenario documents for every axis value, validated up front.
pub fn expand(template: &Value, axis: &str, values: &[f64], oracle: bool) -> Result<Vec<(Value, Prepared)>, Vec<Diag>> {
    if values.is_empty() {
        return Err(vec![Diag::new("--values", "empty axis")]);
    }
    let mut probe = template.clone();
    leaf(&mut probe, axis).map_err(|d| vec![d])?;
    let mut rows = Vec::new();
    let mut diags = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        let mut doc = template.clone();
        let slot = leaf(&mut doc, axis).map_err(|d| vec![d])?;
        *slot = serde_json::Number::from_f64(v)
            .map(Value::Number)
            .ok_or_else(|| vec![Diag::new("--values", "value is not finite")])?;
        let prepared = scenario::from_value(doc.clone())
            .and_then(|s| scenario::prepare(&s, Command::Sweep, oracle));
        match prepared {
            Ok(p) => rows.push((doc, p)),
            Err(ds) => diags.extend(
                ds.into_iter()
                    .map(|d| Diag::new(format!("row[{i}].{}", d.path), d.message)),
            ),
        }
    }
    if diags.is_empty() {
        Ok(rows)
    } else {
        Err(diags)
    }
}

/// Angular frequency of the first position coordinate of the centre: the
/// least-squares slope of `x'' = -w^2 x + b` with `x''` by central differences.
/// NaN when the coordinate does not move or the fit is not oscillatory.
pub fn fitted_frequency(b: &Bundle) -> f64 {
    let x: Vec<f64> = b.z.iter().map(|z| z.position()[0]).collect();
    let t = &b.times;
    if x.len() < 3 {
        return f64::NAN;
    }
    let mut pts = Vec::with_capacity(x.len() - 2);
    for k in 1..x.len() - 1 {
        let (h0, h1) = (t[k] - t[k - 1], t[k + 1] - t[k]);
        let acc = 2.0 * (h0 * x[k + 1] - (h0 + h1) * x[k] + h1 * x[k - 1]) / (h0 * h1 * (h0 + h1));
        pts.push((x[k], acc));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ma = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxa: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - ma)).sum();
    if !(sxx > 1e-24 * m) {
        return f64::NAN;
    }
    let slope = sxa / sxx;
    if slope < 0.0 {
        (-slope).sqrt()
    } else {
        f64::NAN
    }
}

struct RowMetrics {
    frequency: f64,
    frequency_shift: f64,
    final_action: f64,
    l2_error: f64,
}

fn run_row(p: &Prepared, dir: &Path, oracle: bool) -> Result<RowMetrics> {
    fs::create_dir_all(dir)?;
    let mom = gaussian_moments(&p.gamma)?;
    let base = base_assembly(&p.gamma, &p.model, &p.times)?;
    write_trajectory(&dir.join("trajectory.csv"), &base.bundle)?;
    let linear = {
        let mut m = p.model.clone();
        m.kappa = 0.0;
        m.kappa_tilde = 0.0;
        evolve_bundle(&mom.z, &mom.delta2, &m, &p.times)?
    };
    let frequency = fitted_frequency(&base.bundle);
    let l2_error = match &p.grid {
        Some(grid) => {
            let last = p.times.len() - 1;
            let opts = SplitStepOptions {
                record: Some(vec![last]),
                direct_quadrature: oracle,
                ..Default::default()
            };
            match split_step_evolve_with(&p.gamma.sample(grid, p.times.start())?, &p.model, &p.times, &opts) {
                Ok(run) => compare_l2(&run.states[0], &base.sample(grid, last)?)?.raw,
                Err(_) => f64::NAN,
            }
        }
        None => f64::NAN,
    };
    Ok(RowMetrics {
        frequency,
        frequency_shift: frequency - fitted_frequency(&linear),
        final_action: *base.bundle.action.last().unwrap_or(&0.0),
        l2_error,
    })
}

/// Runs every row (concurrently) and writes `sweep.csv`.
pub fn run(rows: &[(Value, Prepared)], axis: &str, values: &[f64], out: &Path, oracle: bool) -> Result<()> {
    let metrics: Vec<Result<RowMetrics>> = rows
        .par_iter()
        .enumerate()
        .map(|(i, (doc, p))| {
            let dir = out.join(format!("row_{i:03}"));
            fs::create_dir_all(&dir)?;
            fs::write(dir.join("scenario.json"), serde_json::to_string_pretty(doc)? + "\n")?;
            run_row(p, &dir, oracle)
        })
        .collect();
    let header: Vec<String> = ["index", axis, "frequency", "frequency_shift", "final_action", "l2_error", "error_ratio"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut table = Vec::new();
    let mut prev: Option<f64> = None;
    for (i, (m, v)) in metrics.into_iter().zip(values).enumerate() {
        let m = m?;
        let ratio = prev.map(|e| e / m.l2_error).unwrap_or(f64::NAN);
        prev = Some(m.l2_error);
        table.push(vec![
            i.to_string(),
            num(*v),
            num(m.frequency),
            num(m.frequency_shift),
            num(m.final_action),
            num(m.l2_error),
            num(ratio),
        ]);
    }
    write_csv(&out.join("sweep.csv"), &header, &table)
}

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod output;
mod scenario;
mod sweep;

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use scenario::{Command, Diag, Prepared};

const EXIT_FAIL: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_ERROR: u8 = 3;

#[derive(Parser)]
#[command(name = "gpe", version, about = "Gaussian-class solutions of the nonlocal Gross-Pitaevskii equation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario document (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; overrides `outputs.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress the summary on stdout.
    #[arg(long)]
    quiet: bool,
    /// Evaluate the nonlocal potential by direct O(N^2) quadrature.
    #[arg(long)]
    oracle_mode: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Analytic solution: trajectory, moments, snapshots, report.
    Evolve(Common),
    /// Symmetry-operator branch next to the base solution.
    Symmetry(Common),
    /// Grid solver against the analytic solution, with pass/fail checks.
    Validate(Common),
    /// One row of headline metrics per value of a numeric scenario field.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Dotted path to a numeric field, e.g. `model.kappa` or `time.dt`.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
    },
}

fn print_diagnostics(diags: &[Diag]) {
    let doc = serde_json::json!({ "status": "invalid", "diagnostics": diags });
    eprintln!("{}", serde_json::to_string_pretty(&doc).unwrap_or_default());
}

fn load(path: &Path) -> Result<serde_json::Value, Vec<Diag>> {
    let text = fs::read_to_string(path)
        .map_err(|e| vec![Diag::new("--scenario", format!("cannot read {}: {e}", path.display()))])?;
    scenario::parse(&text)
}

fn out_dir(c: &Common, p: Option<&Prepared>) -> PathBuf {
    c.out
        .clone()
        .or_else(|| p.and_then(|p| p.directory.clone()))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn log(out: &Path, line: &str) {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    if let Ok(mut f) = OpenOptions::new().create(true).append(true).open(out.join("run.log")) {
        let _ = writeln!(f, "{secs} {line}");
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let (common, cmd) = match &cli.command {
        Cmd::Evolve(c) => (c, Command::Evolve),
        Cmd::Symmetry(c) => (c, Command::Symmetry),
        Cmd::Validate(c) => (c, Command::Validate),
        Cmd::Sweep { common, .. } => (common, Command::Sweep),
    };
    let doc = match load(&common.scenario) {
        Ok(d) => d,
        Err(diags) => {
            print_diagnostics(&diags);
            return Ok(EXIT_INVALID);
        }
    };

    if let Cmd::Sweep { axis, values, .. } = &cli.command {
        let rows = sweep::parse_values(values)
            .and_then(|vals| sweep::expand(&doc, axis, &vals, common.oracle_mode).map(|r| (vals, r)));
        let (vals, rows) = match rows {
            Ok(r) => r,
            Err(diags) => {
                print_diagnostics(&diags);
                return Ok(EXIT_INVALID);
            }
        };
        let out = out_dir(common, rows.first().map(|r| &r.1));
        fs::create_dir_all(&out)?;
        log(&out, &format!("start sweep axis={axis} rows={}", rows.len()));
        sweep::run(&rows, axis, &vals, &out, common.oracle_mode)?;
        log(&out, "done");
        if !common.quiet {
            println!("sweep: {} rows written to {}", rows.len(), out.join("sweep.csv").display());
        }
        return Ok(0);
    }

    let prepared = scenario::from_value(doc).and_then(|s| scenario::prepare(&s, cmd, common.oracle_mode));
    let p = match prepared {
        Ok(p) => p,
        Err(diags) => {
            print_diagnostics(&diags);
            return Ok(EXIT_INVALID);
        }
    };
    let out = out_dir(common, Some(&p));
    fs::create_dir_all(&out)?;
    log(&out, &format!("start {cmd:?} scenario={}", common.scenario.display()));
    let (report, code) = match cmd {
        Command::Evolve => (commands::evolve(&p, &out)?, 0),
        Command::Symmetry => (commands::symmetry(&p, &out)?, 0),
        Command::Validate => {
            let v = commands::validate(&p, &out, common.oracle_mode)?;
            (v.report, if v.passed { 0 } else { EXIT_FAIL })
        }
        Command::Sweep => unreachable!("handled above"),
    };
    report.save(&out.join("report.txt"))?;
    log(&out, &format!("done exit={code}"));
    if !common.quiet {
        print!("{}", report.as_str());
    }
    Ok(code)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

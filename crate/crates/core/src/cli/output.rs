//! CSV and JSON writers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sim::{CdfPoint, RunMetrics};

/// C `%.12g`.
pub fn fmt_g12(x: f64) -> String {
    const P: i32 = 12;
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..P).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (P - 1 - exp) as usize, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Writes a CSV whose first line is `# config_digest=<hex>`.
pub fn write_csv<I>(path: &Path, digest: &str, header: &str, rows: I) -> Result<()>
where
    I: IntoIterator<Item = String>,
{
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let go = || -> std::io::Result<()> {
        writeln!(w, "# config_digest={digest}")?;
        writeln!(w, "{header}")?;
        for row in rows {
            writeln!(w, "{row}")?;
        }
        w.flush()
    };
    go().map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Numerical(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn trace_path(dir: &Path, policy: &str) -> PathBuf {
    dir.join(format!("trace_{policy}.csv"))
}

pub fn cdf_path(dir: &Path, policy: &str) -> PathBuf {
    dir.join(format!("cdf_{policy}.csv"))
}

/// `slot,replication,cost` with slots counted from 1 including warmup.
pub fn write_trace(dir: &Path, digest: &str, run: &RunMetrics) -> Result<()> {
    let rows = run.traces.iter().enumerate().flat_map(|(r, trace)| {
        trace.iter().enumerate().map(move |(t, &c)| format!("{},{r},{}", run.warmup + t + 1, fmt_g12(c)))
    });
    write_csv(&trace_path(dir, &run.policy), digest, "slot,replication,cost", rows)
}

pub fn write_cdf(dir: &Path, digest: &str, policy: &str, cdf: &[CdfPoint]) -> Result<()> {
    let rows = cdf.iter().map(|p| format!("{},{}", fmt_g12(p.cost), fmt_g12(p.cum_prob)));
    write_csv(&cdf_path(dir, policy), digest, "cost,cum_prob", rows)
}

/// `git describe` of the working directory, or `unknown`.
pub fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".to_string())
}

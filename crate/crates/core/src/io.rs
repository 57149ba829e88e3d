//! CSV emission and run reports. All floats go through the shortest
//! round-trip formatter, so a deterministic computation yields a
//! byte-identical file body on every rerun.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;

use crate::approximation::KernelFunction;
use crate::complexity::{CurseRow, RateTable};
use crate::control::Trace;
use crate::error::{Error, Result};
use crate::kernel::Point;

fn write_file(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn join_floats(values: impl IntoIterator<Item = f64>) -> String {
    values
        .into_iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// Coefficients of a kernel expansion: one row per center with its
/// coordinates and coefficient block, preceded by a kernel comment.
pub fn coefficients_csv(function: &KernelFunction) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# kernel = {}", function.kernel());
    let n = function
        .centers()
        .first()
        .map(|c| c.len())
        .unwrap_or(0);
    let m = function.kernel().output_dim();
    let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    header.extend((1..=m).map(|j| format!("c{j}")));
    let _ = writeln!(out, "{}", header.join(","));
    for (center, coeff) in function.centers().iter().zip(function.coefficients()) {
        let _ = writeln!(
            out,
            "{},{}",
            join_floats(center.iter().copied()),
            join_floats(coeff.iter().copied())
        );
    }
    out
}

pub fn write_coefficients_csv(path: &Path, function: &KernelFunction) -> Result<()> {
    write_file(path, &coefficients_csv(function))
}

/// Power sweep over a cloud: coordinates, power2, power_inf per row.
pub fn power_sweep_csv(cloud: &[Point], sweep: &[(f64, f64)]) -> Result<String> {
    if cloud.len() != sweep.len() {
        return Err(Error::DimensionMismatch {
            context: "power sweep rows vs cloud",
            expected: cloud.len(),
            got: sweep.len(),
        });
    }
    let mut out = String::new();
    let n = cloud.first().map(|p| p.len()).unwrap_or(0);
    let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    header.push("p2".into());
    header.push("pinf".into());
    let _ = writeln!(out, "{}", header.join(","));
    for (point, (p2, pinf)) in cloud.iter().zip(sweep) {
        let _ = writeln!(
            out,
            "{},{p2},{pinf}",
            join_floats(point.iter().copied())
        );
    }
    Ok(out)
}

pub fn write_power_sweep_csv(path: &Path, cloud: &[Point], sweep: &[(f64, f64)]) -> Result<()> {
    write_file(path, &power_sweep_csv(cloud, sweep)?)
}

/// Rate table body: `N,h,sup_err,sup_power`.
pub fn rate_table_csv(table: &RateTable) -> String {
    let mut out = String::from("N,h,sup_err,sup_power\n");
    for row in table.rows() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            row.n_centers, row.fill, row.sup_err, row.sup_power
        );
    }
    out
}

/// Sidecar metadata describing how a rate table was produced.
pub fn rate_meta_text(table: &RateTable) -> String {
    let meta = &table.meta;
    let fmt_opt = |v: Option<f64>| match v {
        Some(x) => format!("{x}"),
        None => "none".into(),
    };
    let mut out = String::new();
    let _ = writeln!(out, "kernel = {}", meta.kernel_desc);
    let _ = writeln!(out, "manifold = {}", meta.manifold_desc);
    let _ = writeln!(out, "target = {}", meta.target_id);
    let _ = writeln!(out, "decay_order = {}", fmt_opt(meta.decay_order));
    let _ = writeln!(out, "reduced_order = {}", fmt_opt(meta.reduced_order));
    let _ = writeln!(out, "intrinsic_dim = {}", meta.intrinsic_dim);
    let _ = writeln!(out, "ambient_dim = {}", meta.ambient_dim);
    out
}

/// Two-column log-log file for plotting; rows with a zero y are skipped
/// since their logarithm is not finite.
pub fn loglog_csv(table: &RateTable, y_is_err: bool) -> String {
    let y_name = if y_is_err { "log_sup_err" } else { "log_sup_power" };
    let mut out = format!("log_fill,{y_name}\n");
    for row in table.rows() {
        let y = if y_is_err { row.sup_err } else { row.sup_power };
        if y <= 0.0 {
            continue;
        }
        let _ = writeln!(out, "{},{}", row.fill.ln(), y.ln());
    }
    out
}

/// Write rates.csv, rates_meta.txt, and both log-log companions into a
/// directory; returns the file names written.
pub fn write_rate_files(dir: &Path, table: &RateTable) -> Result<Vec<String>> {
    let files = [
        ("rates.csv", rate_table_csv(table)),
        ("rates_meta.txt", rate_meta_text(table)),
        ("loglog_err.csv", loglog_csv(table, true)),
        ("loglog_power.csv", loglog_csv(table, false)),
    ];
    let mut names = Vec::new();
    for (name, body) in files {
        write_file(&dir.join(name), &body)?;
        names.push(name.to_string());
    }
    Ok(names)
}

/// Trace body with the fixed header
/// `t,x1..xn,xref1..xrefn,norm_e,ePe,V,mu1..mum,sigma_prime`.
pub fn trace_csv(trace: &Trace) -> Result<String> {
    let rows = trace.rows();
    if rows.is_empty() {
        return Err(Error::EmptyInput("trace"));
    }
    let n = rows[0].x.len();
    let m = rows[0].mu.len();
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=n).map(|i| format!("xref{i}")));
    header.push("norm_e".into());
    header.push("ePe".into());
    header.push("V".into());
    header.extend((1..=m).map(|j| format!("mu{j}")));
    header.push("sigma_prime".into());
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            row.t,
            join_floats(row.x.iter().copied()),
            join_floats(row.x_ref.iter().copied()),
            row.norm_e,
            row.e_pe,
            row.v,
            join_floats(row.mu.iter().copied()),
            row.sigma_prime
        );
    }
    Ok(out)
}

pub fn write_trace_csv(path: &Path, trace: &Trace) -> Result<()> {
    write_file(path, &trace_csv(trace)?)
}

/// Estimate snapshots per recorded step: `t,est1..estK`.
pub fn estimates_csv(trace: &Trace) -> Result<String> {
    let rows = trace.rows();
    if rows.is_empty() {
        return Err(Error::EmptyInput("trace"));
    }
    let k = rows[0].estimates.len();
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((1..=k).map(|i| format!("est{i}")));
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let _ = writeln!(
            out,
            "{},{}",
            row.t,
            join_floats(row.estimates.iter().copied())
        );
    }
    Ok(out)
}

pub fn write_estimates_csv(path: &Path, trace: &Trace) -> Result<()> {
    write_file(path, &estimates_csv(trace)?)
}

/// Curse comparison body: `n,cube_centers,manifold_centers,ratio`.
pub fn curse_csv(rows: &[CurseRow]) -> String {
    let mut out = String::from("n,cube_centers,manifold_centers,ratio\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            row.ambient_dim, row.cube_centers, row.manifold_centers, row.ratio
        );
    }
    out
}

pub fn write_curse_csv(path: &Path, rows: &[CurseRow]) -> Result<()> {
    write_file(path, &curse_csv(rows))
}

/// Residuals of an interpolant at its own centers: one row per center
/// with the max-norm residual of the value block.
pub fn residuals_csv(centers: &[Point], residuals: &[DVector<f64>]) -> Result<String> {
    if centers.len() != residuals.len() {
        return Err(Error::DimensionMismatch {
            context: "residual rows vs centers",
            expected: centers.len(),
            got: residuals.len(),
        });
    }
    let n = centers.first().map(|p| p.len()).unwrap_or(0);
    let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    header.push("residual_max".into());
    let mut out = header.join(",");
    out.push('\n');
    for (center, r) in centers.iter().zip(residuals) {
        let max = r.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let _ = writeln!(out, "{},{max}", join_floats(center.iter().copied()));
    }
    Ok(out)
}

// ===== Run reports =====

/// 64-bit FNV-1a digest, the config fingerprint in run reports.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub command: String,
    pub config_digest: String,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
    pub metrics: Vec<(String, String)>,
}

impl RunReport {
    pub fn new(command: &str, config_bytes: &[u8]) -> Self {
        Self {
            command: command.to_string(),
            config_digest: format!("{:016x}", fnv1a64(config_bytes)),
            wall_time_s: 0.0,
            outputs: Vec::new(),
            metrics: Vec::new(),
        }
    }

    pub fn metric(&mut self, name: &str, value: impl std::fmt::Display) {
        self.metrics.push((name.to_string(), value.to_string()));
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "command = {}", self.command);
        let _ = writeln!(out, "config_digest = {}", self.config_digest);
        let _ = writeln!(out, "wall_time_s = {:.3}", self.wall_time_s);
        let _ = writeln!(out, "outputs = {}", self.outputs.join(" "));
        for (name, value) in &self.metrics {
            let _ = writeln!(out, "metric.{name} = {value}");
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join("report.txt"), &self.render())
    }
}

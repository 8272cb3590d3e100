//! File formats: sensor logs with optional ground truth (line-delimited,
//! versioned, 17-significant-digit decimals for lossless round trips),
//! flattened parameter vectors guarded by a layout hash, calibration traces
//! as columnar text, and TOML robot/run configurations.

mod config;
mod log_format;

pub use config::{
    load_robot, load_run_config, robot_hash, save_robot, write_metrics, BoundsConfig, FwSection,
    InitSection, InjectSection, MetricsReport, NoiseSection, PriorSection, RobotFile,
    RunConfigFile, ScriptSection, SolverSection,
};
pub use log_format::{export_log, import_log, read_trajectory, write_trajectory};

use std::io::Write;
use std::path::Path;

use nalgebra::DVector;

use crate::calibrator::TraceRecord;
use crate::error::{Error, Result};
use crate::theta::ThetaLayout;

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.17e}")
}

pub(crate) fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.parse::<f64>().map_err(|_| Error::MalformedRecord {
        line,
        detail: format!("expected a number, found '{s}'"),
    })
}

/// Write a flattened parameter vector with the layout schema hash.
pub fn save_theta(path: &Path, layout: &ThetaLayout, theta: &DVector<f64>) -> Result<()> {
    let mut out = String::new();
    out.push_str("legcal-theta v1\n");
    out.push_str(&format!("schema {:016x}\n", layout.schema_hash()));
    out.push_str(&format!("m {}\n", theta.len()));
    for (i, e) in layout.entries().iter().enumerate() {
        out.push_str(&format!("{} {}\n", e.name, fmt_f64(theta[i])));
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Read a parameter vector; fails on schema-hash or length mismatch.
pub fn load_theta(path: &Path, layout: &ThetaLayout) -> Result<DVector<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::MalformedRecord {
        line: 1,
        detail: "empty file".to_string(),
    })?;
    if header.trim() != "legcal-theta v1" {
        return Err(Error::SchemaVersionMismatch {
            found: header.trim().to_string(),
            expected: "legcal-theta v1".to_string(),
        });
    }
    let (ln, schema_line) = lines.next().ok_or(Error::MalformedRecord {
        line: 2,
        detail: "missing schema line".to_string(),
    })?;
    let schema = schema_line.strip_prefix("schema ").ok_or(Error::MalformedRecord {
        line: ln + 1,
        detail: "missing 'schema' keyword".to_string(),
    })?;
    let expected = format!("{:016x}", layout.schema_hash());
    if schema.trim() != expected {
        return Err(Error::SchemaVersionMismatch {
            found: format!("theta schema {}", schema.trim()),
            expected: format!("theta schema {expected}"),
        });
    }
    let (ln, m_line) = lines.next().ok_or(Error::MalformedRecord {
        line: 3,
        detail: "missing length line".to_string(),
    })?;
    let m: usize = m_line
        .strip_prefix("m ")
        .and_then(|s| s.trim().parse().ok())
        .ok_or(Error::MalformedRecord { line: ln + 1, detail: "bad length line".to_string() })?;
    if m != layout.len() {
        return Err(Error::LengthMismatch {
            left: m,
            right: layout.len(),
            context: "theta file vs layout".to_string(),
        });
    }
    let mut theta = DVector::zeros(m);
    for i in 0..m {
        let (ln, line) = lines.next().ok_or(Error::MalformedRecord {
            line: 4 + i,
            detail: "truncated theta file".to_string(),
        })?;
        let value = line.split_whitespace().last().ok_or(Error::MalformedRecord {
            line: ln + 1,
            detail: "empty row".to_string(),
        })?;
        theta[i] = parse_f64(value, ln + 1)?;
    }
    Ok(theta)
}

/// Columnar trace: one row per Frank-Wolfe iteration, loss and step
/// diagnostics first, then the full theta snapshot.
pub fn write_trace(path: &Path, layout: &ThetaLayout, trace: &[TraceRecord]) -> Result<()> {
    let mut out = String::new();
    out.push_str("# legcal-trace v1\n");
    out.push_str("# iter loss grad_norm gap gamma delta armijo");
    for e in layout.entries() {
        out.push(' ');
        out.push_str(&e.name);
    }
    out.push('\n');
    for r in trace {
        out.push_str(&format!(
            "{} {} {} {} {} {} {}",
            r.iteration,
            fmt_f64(r.loss),
            fmt_f64(r.grad_norm),
            fmt_f64(r.gap),
            fmt_f64(r.gamma),
            fmt_f64(r.delta_scale),
            u8::from(r.armijo_ok),
        ));
        for i in 0..r.theta.len() {
            out.push(' ');
            out.push_str(&fmt_f64(r.theta[i]));
        }
        out.push('\n');
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

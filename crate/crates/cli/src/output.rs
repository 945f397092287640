//! File formats.
//!
//! Floats are written with Rust's shortest round-trip formatting (`{:?}`), so
//! parsing a CSV cell gives back the exact `f64` that was computed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use neumann_walk::{ConvergenceReport, PointEstimate, StepEvent};
use serde::Serialize;

pub fn float(v: f64) -> String {
    format!("{v:?}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

/// Writes to `path`, or to stdout when `path` is `None`.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

pub struct SolveColumns {
    pub trajectories: usize,
    pub h: f64,
    pub lambda: f64,
    pub horizon: f64,
    pub seed: u64,
}

/// One row per evaluation point:
/// `x_1..x_d, mean, std_error, ci_lo, ci_hi, M, censored, boundary_hits_mean, h, lambda, T, seed`.
pub fn write_solve_csv(path: Option<&Path>, estimates: &[PointEstimate], meta: &SolveColumns) -> Result<()> {
    let d = estimates.first().map_or(0, |e| e.point.dim());
    let mut w = csv::Writer::from_writer(sink(path)?);
    let mut header: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
    header.extend(
        [
            "mean",
            "std_error",
            "ci_lo",
            "ci_hi",
            "M",
            "censored",
            "boundary_hits_mean",
            "h",
            "lambda",
            "T",
            "seed",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    for e in estimates {
        let mut row: Vec<String> = e.point.iter().map(|&c| float(c)).collect();
        row.extend([
            float(e.mean),
            float(e.std_error),
            float(e.ci95[0]),
            float(e.ci95[1]),
            meta.trajectories.to_string(),
            e.censored_count.to_string(),
            float(e.mean_boundary_hits),
            float(meta.h),
            float(meta.lambda),
            float(meta.horizon),
            meta.seed.to_string(),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per h: `h, M, T, error, error_bar, worst_point`.
pub fn write_converge_csv(path: Option<&Path>, report: &ConvergenceReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink(path)?);
    w.write_record(["h", "M", "T", "error", "error_bar", "worst_point"])?;
    for (i, h) in report.h_values.iter().enumerate() {
        let worst = report.estimates.get(i).map_or(String::new(), |est| {
            est.iter()
                .enumerate()
                .max_by(|a, b| {
                    let ea = (a.1.mean - report.exact_values[a.0]).abs();
                    let eb = (b.1.mean - report.exact_values[b.0]).abs();
                    ea.total_cmp(&eb)
                })
                .map_or(String::new(), |(k, _)| k.to_string())
        });
        w.write_record([
            float(*h),
            report.trajectories.to_string(),
            float(report.horizon),
            float(report.errors[i]),
            float(report.error_bars[i]),
            worst,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Two whitespace-separated columns `h error` plus the error bar, for log-log
/// plots.
pub fn write_loglog(path: &Path, h: &[f64], errors: &[f64], bars: &[f64]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# h error error_bar")?;
    for i in 0..h.len() {
        writeln!(w, "{} {} {}", float(h[i]), float(errors[i]), float(bars[i]))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut w = sink(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// One line of a `--trace` dump. Field order: k, position, zone, event,
/// score, then the evaluation point index.
#[derive(Serialize)]
pub struct TraceRecord<'a> {
    pub k: u64,
    pub position: &'a [f64],
    pub zone: bool,
    pub event: StepEvent,
    pub score: f64,
    pub point: usize,
}

pub struct TraceWriter {
    out: BufWriter<File>,
}

impl TraceWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(TraceWriter { out: create(path)? })
    }

    pub fn record(&mut self, r: &TraceRecord<'_>) -> Result<()> {
        serde_json::to_writer(&mut self.out, r)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

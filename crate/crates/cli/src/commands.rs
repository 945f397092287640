use std::time::Instant;

use anyhow::{anyhow, bail, Result};
use neumann_walk::estimator::normalize_exact;
use neumann_walk::walk::run_reflecting_observed;
use neumann_walk::{
    builtin, calibration_ratio, convergence_study, derive_stream, estimate, fit_order, martingale_diagnostic,
    stationarity, verify, CalibrationReport, CompatibilityReport, ConvergenceReport, DiagnosticOptions,
    DriftReport, EstimateRequest, PointEstimate, SeedSpec, StationarityReport, StepRecord, StudyOptions,
    VerifyReport, BUILTIN_NAMES,
};
use serde::Serialize;

use crate::config::{Resolved, RunConfig, DEFAULT_CHECKPOINTS};
use crate::output::{self, SolveColumns, TraceRecord, TraceWriter};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Serialize)]
struct SolveReport<'a> {
    version: &'static str,
    wall_time_seconds: f64,
    config: &'a RunConfig,
    problem: &'a str,
    normalization: neumann_walk::Normalization,
    compatibility: CompatibilityReport,
    warnings: Vec<String>,
    estimates: &'a [PointEstimate],
}

pub fn solve(run: &Resolved) -> Result<()> {
    let start = Instant::now();
    let h = run.config.h.expect("resolved");
    let params = run.params(h);
    let warnings = params.warnings();
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let req = request(run, params.clone());
    let compatibility = req.gate()?;
    if !compatibility.passed {
        eprintln!(
            "warning: datum violates compatibility (integral {}), continuing because of --override-compatibility",
            compatibility.value
        );
    }
    let estimates = estimate(&req)?;
    if let Some(path) = &run.config.trace {
        trace(&req, path)?;
    }

    let out = run.output();
    output::write_solve_csv(
        out.csv.as_deref(),
        &estimates,
        &SolveColumns {
            trajectories: run.trajectories(),
            h,
            lambda: params.lambda,
            horizon: params.horizon,
            seed: run.seed(),
        },
    )?;
    if let Some(path) = &out.json {
        let report = SolveReport {
            version: VERSION,
            wall_time_seconds: start.elapsed().as_secs_f64(),
            config: &run.config,
            problem: &run.problem.name,
            normalization: req.normalization.clone(),
            compatibility,
            warnings,
            estimates: &estimates,
        };
        output::write_json(Some(path), &report)?;
    }
    Ok(())
}

fn request(run: &Resolved, params: neumann_walk::WalkParams) -> EstimateRequest<'_> {
    EstimateRequest::new(
        &run.problem.domain,
        &run.problem.datum,
        params,
        run.trajectories(),
        run.seed(),
    )
    .with_points(run.points.clone())
    .with_normalization(run.normalization())
    .with_workers(run.workers())
    .allow_incompatible(run.override_compatibility())
}

/// Replays trajectory 0 of every evaluation point with a step observer.
fn trace(req: &EstimateRequest<'_>, path: &std::path::Path) -> Result<()> {
    let mut writer = TraceWriter::create(path)?;
    let mut failure = None;
    for (i, x) in req.points.iter().enumerate() {
        let stream_id = i as u64 * neumann_walk::estimator::POINT_STREAM_STRIDE;
        let mut stream = derive_stream(SeedSpec::new(req.master_seed, stream_id));
        let observer = |r: &StepRecord<'_>| {
            if failure.is_none() {
                let rec = TraceRecord {
                    k: r.k,
                    position: r.position,
                    zone: r.in_zone,
                    event: r.event,
                    score: r.score,
                    point: i,
                };
                if let Err(e) = writer.record(&rec) {
                    failure = Some(e);
                }
            }
        };
        run_reflecting_observed(x, &req.params, req.domain, req.datum, &mut stream, observer)?;
    }
    if let Some(e) = failure {
        return Err(e);
    }
    writer.finish()
}

#[derive(Serialize)]
struct ConvergeSummary<'a> {
    version: &'static str,
    wall_time_seconds: f64,
    config: &'a RunConfig,
    problem: &'a str,
    fitted_order: f64,
    order_std_error: f64,
    inconclusive: bool,
    strictly_decreasing: bool,
    h_values: &'a [f64],
    errors: &'a [f64],
    error_bars: &'a [f64],
    /// Every study that was run; the last one is reported above.
    attempts: &'a [ConvergenceReport],
    synthetic: bool,
}

pub fn converge(run: &Resolved, synthetic_errors: Option<&[f64]>) -> Result<()> {
    let start = Instant::now();
    let h_values = run
        .config
        .h_list
        .clone()
        .ok_or_else(|| anyhow!("converge needs --h-list with at least three values"))?;
    if h_values.len() < 3 {
        bail!("converge needs at least three h values, got {}", h_values.len());
    }
    let out = run.output();

    if let Some(errors) = synthetic_errors {
        // fitter pass-through: no walks are run
        if errors.len() != h_values.len() {
            bail!("--synthetic-errors needs one value per h");
        }
        let fit = fit_order(&h_values, errors)?;
        let bars = vec![0.0; errors.len()];
        let summary = ConvergeSummary {
            version: VERSION,
            wall_time_seconds: start.elapsed().as_secs_f64(),
            config: &run.config,
            problem: &run.problem.name,
            fitted_order: fit.order,
            order_std_error: fit.order_std_error,
            inconclusive: false,
            strictly_decreasing: errors.windows(2).all(|w| w[1] < w[0]),
            h_values: &h_values,
            errors,
            error_bars: &bars,
            attempts: &[],
            synthetic: true,
        };
        output::write_json(out.json.as_deref(), &summary)?;
        if let Some(dat) = &out.dat {
            output::write_loglog(dat, &h_values, errors, &bars)?;
        }
        return Ok(());
    }

    if run.problem.exact.is_none() {
        bail!(neumann_walk::Error::Usage(format!(
            "problem {} has no exact solution; a convergence study needs one",
            run.problem.name
        )));
    }
    let params = run.params(h_values[0]);
    let options = StudyOptions {
        horizon: Some(run.horizon()),
        lambda: Some(run.lambda()),
        workers: run.workers(),
        points: Some(run.points.clone()),
        normalization: Some(run.normalization()),
        deflection: params.deflection,
        allow_incompatible: run.override_compatibility(),
    };
    let problem = &run.problem;
    let mut attempts = vec![convergence_study(
        problem,
        &h_values,
        run.trajectories(),
        run.seed(),
        &options,
    )?];
    if attempts[0].inconclusive && run.config.rerun_inconclusive != Some(false) {
        eprintln!("error bars overlap; rerunning with 4x M");
        attempts.push(convergence_study(
            problem,
            &h_values,
            4 * run.trajectories(),
            run.seed(),
            &options,
        )?);
    }
    let last = attempts.last().expect("nonempty");
    eprintln!(
        "fitted order {:.3} ± {:.3}; strictly decreasing: {}; inconclusive: {}",
        last.fitted_order, last.order_std_error, last.strictly_decreasing, last.inconclusive
    );
    output::write_converge_csv(out.csv.as_deref(), last)?;
    if let Some(dat) = &out.dat {
        output::write_loglog(dat, &last.h_values, &last.errors, &last.error_bars)?;
    }
    if let Some(json) = &out.json {
        let summary = ConvergeSummary {
            version: VERSION,
            wall_time_seconds: start.elapsed().as_secs_f64(),
            config: &run.config,
            problem: &run.problem.name,
            fitted_order: last.fitted_order,
            order_std_error: last.order_std_error,
            inconclusive: last.inconclusive,
            strictly_decreasing: last.strictly_decreasing,
            h_values: &last.h_values,
            errors: &last.errors,
            error_bars: &last.error_bars,
            attempts: &attempts,
            synthetic: false,
        };
        output::write_json(Some(json), &summary)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct PointDiagnostics {
    estimate: PointEstimate,
    exact: Option<f64>,
    stationarity: StationarityReport,
    /// Absent when the normalized exact value is zero.
    calibration: Option<CalibrationReport>,
}

#[derive(Serialize)]
#[serde(rename_all = "snake_case", tag = "status")]
enum Section<T> {
    Ok(T),
    Skipped { reason: String },
    Failed { error: String },
}

impl<T> Section<T> {
    fn from_result(r: Result<T>) -> Self {
        match r {
            Ok(v) => Section::Ok(v),
            Err(e) => Section::Failed { error: format!("{e:#}") },
        }
    }
}

#[derive(Serialize)]
struct DiagnoseReport<'a> {
    version: &'static str,
    wall_time_seconds: f64,
    config: &'a RunConfig,
    problem: &'a str,
    verify: VerifyReport,
    martingale: Section<DriftReport>,
    points: Section<Vec<PointDiagnostics>>,
    verify_passed: bool,
    martingale_passed: bool,
    stationarity_passed: bool,
    calibration_passed: bool,
    all_passed: bool,
}

pub fn diagnose(run: &Resolved) -> Result<()> {
    let start = Instant::now();
    let h = run.config.h.expect("resolved");
    let verify_report = verify(&run.problem);

    let martingale = if run.problem.exact.is_none() {
        Section::Skipped {
            reason: "no exact solution".into(),
        }
    } else {
        let checkpoints = run.config.checkpoints.clone().unwrap_or(DEFAULT_CHECKPOINTS.to_vec());
        let options = DiagnosticOptions {
            master_seed: run.seed(),
            workers: run.workers(),
            c_drift: run.config.c_drift.unwrap_or(1.0),
            lambda: Some(run.lambda()),
            start: Some(run.points[0].clone()),
        };
        Section::from_result(
            martingale_diagnostic(&run.problem, h, run.trajectories(), &checkpoints, &options).map_err(Into::into),
        )
    };

    let points = Section::from_result(point_diagnostics(run, h));

    let martingale_passed = match &martingale {
        Section::Ok(r) => r.all_within_band,
        Section::Skipped { .. } => true,
        Section::Failed { .. } => false,
    };
    let (stationarity_passed, calibration_passed) = match &points {
        Section::Ok(p) => (
            p.iter().all(|d| d.stationarity.stable),
            p.iter().all(|d| d.calibration.as_ref().map_or(true, |c| c.passed)),
        ),
        _ => (false, false),
    };
    let verify_passed = verify_report.all_passed();
    let report = DiagnoseReport {
        version: VERSION,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        config: &run.config,
        problem: &run.problem.name,
        verify: verify_report,
        martingale,
        points,
        verify_passed,
        martingale_passed,
        stationarity_passed,
        calibration_passed,
        all_passed: verify_passed && martingale_passed && stationarity_passed && calibration_passed,
    };
    output::write_json(run.output().json.as_deref(), &report)
}

fn point_diagnostics(run: &Resolved, h: f64) -> Result<Vec<PointDiagnostics>> {
    let req = request(run, run.params(h));
    let estimates = estimate(&req)?;
    let exact = match &run.problem.exact {
        Some(w) => {
            let raw: Vec<f64> = run.points.iter().map(|p| w.eval(p)).collect();
            Some(normalize_exact(&run.points, &raw, &req.normalization)?)
        }
        None => None,
    };
    Ok(estimates
        .into_iter()
        .enumerate()
        .map(|(i, e)| {
            let exact_i = exact.as_ref().map(|v| v[i]);
            PointDiagnostics {
                stationarity: stationarity(&e),
                calibration: exact_i.and_then(|w| calibration_ratio(&e, w)),
                exact: exact_i,
                estimate: e,
            }
        })
        .collect())
}

pub fn list_problems() -> Result<()> {
    for name in BUILTIN_NAMES {
        let p = builtin(name)?;
        let exact = p.exact.as_ref().map_or("none".to_string(), |w| w.to_string());
        println!(
            "{name:<22} d={} T={} mean_zero={} exact: {exact}",
            p.domain.dimension(),
            p.default_horizon,
            p.mean_zero
        );
        println!("{:<22} {}", "", p.notes);
    }
    Ok(())
}

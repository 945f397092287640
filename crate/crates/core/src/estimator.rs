//! Monte Carlo aggregation of reflecting-walk scores.
//!
//! A point estimate of w(x) is the sample mean of M independent reflecting
//! walk scores. Trajectory `j` at evaluation point `i` draws from stream id
//! `i * 2^40 + j` of the master seed, and scores are reduced in trajectory
//! order, so the result does not depend on the number of workers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};
use crate::geometry::{BoundaryFunction, DomainGeometry, Point};
use crate::problems::BenchmarkProblem;
use crate::random::{derive_stream, SeedSpec};
use crate::walk::{
    run_reflecting, run_reflecting_observed, DeflectionRule, StepEvent, StepRecord, WalkMode, WalkParams,
};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.96;

/// Stream ids of consecutive evaluation points are this far apart.
pub const POINT_STREAM_STRIDE: u64 = 1 << 40;

/// Quadrature nodes used by the compatibility check.
pub const COMPATIBILITY_NODES: usize = 4096;

/// Absolute floor added to ∫|f| in the relative compatibility test.
pub const COMPATIBILITY_FLOOR: f64 = 1e-12;

pub const DEFAULT_COMPATIBILITY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "base", rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    Raw,
    /// Subtract the mean of all estimates (points sampled uniformly in O).
    MeanZero,
    /// Subtract the estimate at the given evaluation point.
    DifferenceTo(Point),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityReport {
    /// Quadrature value of ∫_{∂O} f dσ.
    pub value: f64,
    /// Quadrature value of ∫_{∂O} |f| dσ.
    pub abs_integral: f64,
    pub allowed: f64,
    pub passed: bool,
}

/// Checks ∫_{∂O} f dσ = 0 relative to ∫|f|. A violation is returned as
/// [`Error::CompatibilityViolation`].
pub fn check_compatibility<F: BoundaryFunction + ?Sized>(
    domain: &DomainGeometry,
    f: &F,
    tol: f64,
) -> Result<CompatibilityReport> {
    let report = measure_compatibility(domain, f, tol)?;
    if report.passed {
        Ok(report)
    } else {
        Err(Error::CompatibilityViolation {
            value: report.value,
            allowed: report.allowed,
        })
    }
}

/// Like [`check_compatibility`] but never fails on a violation.
pub fn measure_compatibility<F: BoundaryFunction + ?Sized>(
    domain: &DomainGeometry,
    f: &F,
    tol: f64,
) -> Result<CompatibilityReport> {
    if !(tol > 0.0) {
        return usage(format!("compatibility tolerance must be positive, got {tol}"));
    }
    let quad = domain.surface_quadrature(COMPATIBILITY_NODES);
    let value = quad.integrate(f);
    let abs_integral = quad.integrate(&|p: &[f64], n: &[f64]| f.eval(p, n).abs());
    let allowed = tol * (abs_integral + COMPATIBILITY_FLOOR);
    Ok(CompatibilityReport {
        value,
        abs_integral,
        allowed,
        passed: value.abs() <= allowed,
    })
}

/// Everything needed to estimate w at a set of points.
#[derive(Clone)]
pub struct EstimateRequest<'a> {
    pub domain: &'a DomainGeometry,
    pub datum: &'a dyn BoundaryFunction,
    pub points: Vec<Point>,
    pub params: WalkParams,
    pub trajectories: usize,
    pub master_seed: u64,
    pub normalization: Normalization,
    pub workers: usize,
    /// Allowed drift of the mean score over the last tenth of the horizon;
    /// half the standard error when `None`.
    pub tail_tol: Option<f64>,
    pub compatibility_tol: f64,
    pub allow_incompatible: bool,
}

impl<'a> EstimateRequest<'a> {
    pub fn new(
        domain: &'a DomainGeometry,
        datum: &'a dyn BoundaryFunction,
        params: WalkParams,
        trajectories: usize,
        master_seed: u64,
    ) -> Self {
        EstimateRequest {
            domain,
            datum,
            points: Vec::new(),
            params,
            trajectories,
            master_seed,
            normalization: Normalization::Raw,
            workers: 1,
            tail_tol: None,
            compatibility_tol: DEFAULT_COMPATIBILITY_TOL,
            allow_incompatible: false,
        }
    }

    pub fn with_points(mut self, points: Vec<Point>) -> Self {
        self.points = points;
        self
    }

    pub fn with_normalization(mut self, n: Normalization) -> Self {
        self.normalization = n;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn allow_incompatible(mut self, allow: bool) -> Self {
        self.allow_incompatible = allow;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.trajectories < 2 {
            return usage(format!("need at least 2 trajectories, got {}", self.trajectories));
        }
        if self.workers == 0 {
            return usage("workers must be at least 1");
        }
        if self.params.mode != WalkMode::Reflecting {
            return usage("estimates are built from reflecting walks");
        }
        self.params.validate(self.domain)?;
        for p in &self.points {
            if !self.domain.contains(p)? {
                return usage(format!("evaluation point {:?} is outside the domain", p.coords()));
            }
        }
        Ok(())
    }

    /// The compatibility gate. Passes when the datum is compatible or the
    /// override is set; the measured report is returned either way.
    pub fn gate(&self) -> Result<CompatibilityReport> {
        let report = measure_compatibility(self.domain, self.datum, self.compatibility_tol)?;
        if report.passed || self.allow_incompatible {
            Ok(report)
        } else {
            Err(Error::CompatibilityViolation {
                value: report.value,
                allowed: report.allowed,
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub point: Point,
    pub mean: f64,
    pub std_error: f64,
    pub ci95: [f64; 2],
    /// Trajectories that entered the mean.
    pub trajectories: usize,
    pub censored_count: usize,
    pub mean_boundary_hits: f64,
    /// |mean score − mean score at 90% of the horizon|.
    pub tail_shift: f64,
    pub tail_converged: bool,
    /// Boundary landings per step in the first and second half of the walks.
    pub hit_rate_first_half: f64,
    pub hit_rate_second_half: f64,
}

impl PointEstimate {
    fn from_parts(point: Point, mean: f64, std_error: f64) -> Self {
        PointEstimate {
            point,
            mean,
            std_error,
            ci95: [mean - Z95 * std_error, mean + Z95 * std_error],
            trajectories: 0,
            censored_count: 0,
            mean_boundary_hits: 0.0,
            tail_shift: 0.0,
            tail_converged: true,
            hit_rate_first_half: 0.0,
            hit_rate_second_half: 0.0,
        }
    }

    fn set_value(&mut self, mean: f64, std_error: f64) {
        self.mean = mean;
        self.std_error = std_error;
        self.ci95 = [mean - Z95 * std_error, mean + Z95 * std_error];
    }
}

#[derive(Clone, Copy)]
struct ScoreSummary {
    score: f64,
    tail_start_score: f64,
    hits: u64,
    hits_first_half: u64,
    censored: bool,
}

/// Runs `count` independent jobs, in parallel when `workers > 1`, and returns
/// their results in index order.
pub fn run_indexed<T, F>(count: usize, workers: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    if workers <= 1 {
        return (0..count as u64).map(job).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::EstimationFailure(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<T>> = pool.install(|| (0..count as u64).into_par_iter().map(&job).collect());
    // Sequential collect reports the lowest-index failure, so errors are
    // deterministic too.
    results.into_iter().collect()
}

/// Mean and standard error by two passes in index order.
pub fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt() / n.sqrt())
}

/// Estimate of w at `x`; `point_index` selects the stream block.
pub fn estimate_point(x: &Point, point_index: u64, request: &EstimateRequest<'_>) -> Result<PointEstimate> {
    request.validate()?;
    if !request.domain.contains(x)? {
        return usage(format!("evaluation point {:?} is outside the domain", x.coords()));
    }
    request.gate()?;
    estimate_point_unchecked(x, point_index, request)
}

fn estimate_point_unchecked(x: &Point, point_index: u64, request: &EstimateRequest<'_>) -> Result<PointEstimate> {
    let base = point_index
        .checked_mul(POINT_STREAM_STRIDE)
        .ok_or_else(|| Error::Usage("point index too large".into()))?;
    let summaries = run_indexed(request.trajectories, request.workers, |j| {
        let mut stream = derive_stream(SeedSpec::new(request.master_seed, base + j));
        let out = run_reflecting(x, &request.params, request.domain, request.datum, &mut stream)?;
        Ok(ScoreSummary {
            score: out.score,
            tail_start_score: out.tail_start_score,
            hits: out.boundary_hits,
            hits_first_half: out.hits_first_half,
            censored: out.censored,
        })
    })?;

    let kept: Vec<&ScoreSummary> = summaries.iter().filter(|s| !s.censored).collect();
    let censored_count = summaries.len() - kept.len();
    if kept.len() < 2 {
        return Err(Error::EstimationFailure(format!(
            "{censored_count} of {} trajectories were censored at max_steps = {}",
            summaries.len(),
            request.params.max_steps
        )));
    }
    let scores: Vec<f64> = kept.iter().map(|s| s.score).collect();
    let tails: Vec<f64> = kept.iter().map(|s| s.tail_start_score).collect();
    let (mean, se) = mean_and_std_error(&scores);
    let (tail_mean, _) = mean_and_std_error(&tails);
    let n = kept.len() as f64;
    let hits: u64 = kept.iter().map(|s| s.hits).sum();
    let first: u64 = kept.iter().map(|s| s.hits_first_half).sum();
    let steps = request.params.n_steps();
    let first_steps = (steps / 2).max(1) as f64;
    let second_steps = (steps - steps / 2).max(1) as f64;

    let tail_shift = (mean - tail_mean).abs();
    let tail_tol = request.tail_tol.unwrap_or(0.5 * se);
    let mut est = PointEstimate::from_parts(x.clone(), mean, se);
    est.trajectories = kept.len();
    est.censored_count = censored_count;
    est.mean_boundary_hits = hits as f64 / n;
    est.tail_shift = tail_shift;
    est.tail_converged = tail_shift <= tail_tol;
    est.hit_rate_first_half = first as f64 / n / first_steps;
    est.hit_rate_second_half = (hits - first) as f64 / n / second_steps;
    Ok(est)
}

/// Estimates at every requested point, normalized as requested.
pub fn estimate(request: &EstimateRequest<'_>) -> Result<Vec<PointEstimate>> {
    request.validate()?;
    if request.points.is_empty() {
        return usage("no evaluation points");
    }
    request.gate()?;
    let raw = request
        .points
        .iter()
        .enumerate()
        .map(|(i, x)| estimate_point_unchecked(x, i as u64, request))
        .collect::<Result<Vec<_>>>()?;
    normalize(raw, &request.normalization)
}

/// Applies a normalization. Estimates at distinct points are independent, so
/// standard errors combine in quadrature.
pub fn normalize(estimates: Vec<PointEstimate>, mode: &Normalization) -> Result<Vec<PointEstimate>> {
    if estimates.is_empty() {
        return usage("nothing to normalize");
    }
    match mode {
        Normalization::Raw => Ok(estimates),
        Normalization::MeanZero => {
            let n = estimates.len() as f64;
            let mean = estimates.iter().map(|e| e.mean).sum::<f64>() / n;
            let sum_var: f64 = estimates.iter().map(|e| e.std_error * e.std_error).sum();
            Ok(estimates
                .into_iter()
                .map(|mut e| {
                    let v = e.std_error * e.std_error;
                    let var = (v * (1.0 - 2.0 / n) + sum_var / (n * n)).max(0.0);
                    e.set_value(e.mean - mean, var.sqrt());
                    e
                })
                .collect())
        }
        Normalization::DifferenceTo(base) => {
            let idx = estimates
                .iter()
                .position(|e| same_point(&e.point, base))
                .ok_or_else(|| {
                    Error::Usage(format!(
                        "normalization base point {:?} is not among the evaluation points",
                        base.coords()
                    ))
                })?;
            let (m0, s0) = (estimates[idx].mean, estimates[idx].std_error);
            Ok(estimates
                .into_iter()
                .enumerate()
                .map(|(i, mut e)| {
                    if i == idx {
                        e.set_value(0.0, 0.0);
                    } else {
                        e.set_value(e.mean - m0, e.std_error.hypot(s0));
                    }
                    e
                })
                .collect())
        }
    }
}

fn same_point(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + x.abs()))
}

/// Exact values transformed the same way [`normalize`] transforms estimates.
pub fn normalize_exact(points: &[Point], exact: &[f64], mode: &Normalization) -> Result<Vec<f64>> {
    match mode {
        Normalization::Raw => Ok(exact.to_vec()),
        Normalization::MeanZero => {
            let m = exact.iter().sum::<f64>() / exact.len() as f64;
            Ok(exact.iter().map(|v| v - m).collect())
        }
        Normalization::DifferenceTo(base) => {
            let idx = points
                .iter()
                .position(|p| same_point(p, base))
                .ok_or_else(|| Error::Usage("normalization base point is not an evaluation point".into()))?;
            Ok(exact.iter().map(|v| v - exact[idx]).collect())
        }
    }
}

/// Least-squares fit of `log error = order * log h + c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderFit {
    pub order: f64,
    pub intercept: f64,
    /// Propagated from per-point error bars; zero when none are given.
    pub order_std_error: f64,
}

pub fn fit_order(h_values: &[f64], errors: &[f64]) -> Result<OrderFit> {
    fit_order_with_bars(h_values, errors, &vec![0.0; errors.len()])
}

pub fn fit_order_with_bars(h_values: &[f64], errors: &[f64], bars: &[f64]) -> Result<OrderFit> {
    if h_values.len() != errors.len() || errors.len() != bars.len() {
        return usage("h values, errors and error bars must have equal length");
    }
    if h_values.len() < 2 {
        return usage("need at least two points to fit an order");
    }
    if h_values.iter().chain(errors).any(|v| !(*v > 0.0 && v.is_finite())) {
        return usage("h values and errors must be positive for a log-log fit");
    }
    let xs: Vec<f64> = h_values.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    if sxx == 0.0 {
        return usage("h values must not all be equal");
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let order = sxy / sxx;
    // var(order) = Σ (x_i − x̄)² σ_i² / Sxx², σ_i = bar_i / error_i in log space
    let var: f64 = xs
        .iter()
        .zip(errors.iter().zip(bars))
        .map(|(x, (e, b))| (x - xm).powi(2) * (b / e).powi(2))
        .sum::<f64>()
        / (sxx * sxx);
    Ok(OrderFit {
        order,
        intercept: ym - order * xm,
        order_std_error: var.sqrt(),
    })
}

/// Trajectories needed for a standard error below a third of `bias`, given
/// the per-trajectory score standard deviation: `M = ceil(9 σ² / bias²)`.
pub fn trajectories_for_bias(score_sd: f64, bias: f64) -> usize {
    (9.0 * score_sd * score_sd / (bias * bias)).ceil() as usize
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyOptions {
    /// Horizon T; the problem default when `None`.
    pub horizon: Option<f64>,
    pub lambda: Option<f64>,
    pub workers: usize,
    /// Evaluation points; the problem defaults when `None`.
    pub points: Option<Vec<Point>>,
    /// Raw for mean-zero problems, else difference to the first point, when `None`.
    pub normalization: Option<Normalization>,
    pub deflection: DeflectionRule,
    pub allow_incompatible: bool,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            horizon: None,
            lambda: None,
            workers: 1,
            points: None,
            normalization: None,
            deflection: DeflectionRule::FromPoint,
            allow_incompatible: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub problem: String,
    pub points: Vec<Point>,
    /// Exact solution at `points`, normalized like the estimates.
    pub exact_values: Vec<f64>,
    pub normalization: Normalization,
    pub h_values: Vec<f64>,
    /// Sup over evaluation points of |estimate − exact|, per h.
    pub errors: Vec<f64>,
    /// Standard error of the estimate attaining the sup, per h.
    pub error_bars: Vec<f64>,
    pub fitted_order: f64,
    pub order_std_error: f64,
    /// No pair of consecutive h has separated 95% error intervals.
    pub inconclusive: bool,
    pub strictly_decreasing: bool,
    pub trajectories: usize,
    pub horizon: f64,
    pub master_seed: u64,
    pub estimates: Vec<Vec<PointEstimate>>,
}

pub fn convergence_study(
    problem: &BenchmarkProblem,
    h_values: &[f64],
    trajectories: usize,
    master_seed: u64,
    options: &StudyOptions,
) -> Result<ConvergenceReport> {
    let exact = problem
        .exact
        .as_ref()
        .ok_or_else(|| Error::Usage(format!("problem {} has no exact solution", problem.name)))?;
    if h_values.len() < 3 {
        return usage("a convergence study needs at least three h values");
    }
    if h_values.windows(2).any(|w| !(w[1] < w[0])) {
        return usage("h values must be strictly decreasing");
    }
    let d = problem.domain.dimension();
    let horizon = options.horizon.unwrap_or(problem.default_horizon);
    let points = options.points.clone().unwrap_or_else(|| problem.default_points.clone());
    if points.is_empty() {
        return usage("no evaluation points");
    }
    let normalization = options.normalization.clone().unwrap_or_else(|| {
        if problem.mean_zero {
            Normalization::Raw
        } else {
            Normalization::DifferenceTo(points[0].clone())
        }
    });
    let exact_raw: Vec<f64> = points.iter().map(|x| exact.eval(x)).collect();
    let exact_norm = normalize_exact(&points, &exact_raw, &normalization)?;

    let mut errors = Vec::new();
    let mut bars = Vec::new();
    let mut all = Vec::new();
    for &h in h_values {
        let mut params = WalkParams::reflecting(h, horizon, d).with_deflection(options.deflection);
        if let Some(l) = options.lambda {
            params = params.with_lambda(l);
        }
        let req = EstimateRequest::new(&problem.domain, &problem.datum, params, trajectories, master_seed)
            .with_points(points.clone())
            .with_normalization(normalization.clone())
            .with_workers(options.workers)
            .allow_incompatible(options.allow_incompatible);
        let est = estimate(&req)?;
        let (err, bar) = est
            .iter()
            .zip(&exact_norm)
            .map(|(e, w)| ((e.mean - w).abs(), e.std_error))
            .fold((f64::NEG_INFINITY, 0.0), |acc, v| if v.0 > acc.0 { v } else { acc });
        errors.push(err);
        bars.push(bar);
        all.push(est);
    }

    let fit = fit_order_with_bars(h_values, &errors, &bars).unwrap_or(OrderFit {
        order: f64::NAN,
        intercept: f64::NAN,
        order_std_error: f64::NAN,
    });
    let separated = |i: usize| {
        let (a, b) = (errors[i], errors[i + 1]);
        let (sa, sb) = (Z95 * bars[i], Z95 * bars[i + 1]);
        a - sa > b + sb || b - sb > a + sa
    };
    let inconclusive = !(0..errors.len() - 1).any(separated);
    let strictly_decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    Ok(ConvergenceReport {
        problem: problem.name.clone(),
        points,
        exact_values: exact_norm,
        normalization,
        h_values: h_values.to_vec(),
        errors,
        error_bars: bars,
        fitted_order: fit.order,
        order_std_error: fit.order_std_error,
        inconclusive,
        strictly_decreasing,
        trajectories,
        horizon,
        master_seed,
        estimates: all,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftCheckpoint {
    pub k: u64,
    /// Mean of u(Y_k) + Score_k − u(x0).
    pub drift: f64,
    pub std_error: f64,
    /// 3σ + C_drift·h·k.
    pub band: f64,
    pub within_band: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub problem: String,
    pub start: Point,
    pub h: f64,
    pub trajectories: usize,
    pub c_drift: f64,
    pub checkpoints: Vec<DriftCheckpoint>,
    pub all_within_band: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticOptions {
    pub master_seed: u64,
    pub workers: usize,
    pub c_drift: f64,
    pub lambda: Option<f64>,
    /// Starting point; the problem's first default point when `None`.
    pub start: Option<Point>,
}

impl Default for DiagnosticOptions {
    fn default() -> Self {
        DiagnosticOptions {
            master_seed: 0,
            workers: 1,
            c_drift: 1.0,
            lambda: None,
            start: None,
        }
    }
}

/// Tracks E[u(Y_k) + Score_k] − u(x0) along reflecting walks, with u the
/// problem's exact solution. For a compatible harmonic pair this process is a
/// martingale up to O(h) per boundary landing.
pub fn martingale_diagnostic(
    problem: &BenchmarkProblem,
    h: f64,
    trajectories: usize,
    checkpoints: &[u64],
    options: &DiagnosticOptions,
) -> Result<DriftReport> {
    let u = problem
        .exact
        .as_ref()
        .ok_or_else(|| Error::Usage(format!("problem {} has no exact solution", problem.name)))?;
    if checkpoints.is_empty() || checkpoints.contains(&0) {
        return usage("checkpoints must be positive step counts");
    }
    if trajectories < 2 {
        return usage("need at least 2 trajectories");
    }
    let mut cps = checkpoints.to_vec();
    cps.sort_unstable();
    cps.dedup();
    let last = *cps.last().expect("nonempty");
    let d = problem.domain.dimension();
    let mut params = WalkParams::reflecting(h, last as f64 * h, d).with_max_steps(last);
    if let Some(l) = options.lambda {
        params = params.with_lambda(l);
    }
    params.validate(&problem.domain)?;
    // the horizon must give exactly `last` steps
    params.horizon = last as f64 * h;
    if params.n_steps() != last {
        params.horizon = (last as f64 - 0.5) * h;
    }
    let x0 = options.start.clone().unwrap_or_else(|| problem.default_points[0].clone());
    if !problem.domain.contains(&x0)? {
        return usage("diagnostic start point is outside the domain");
    }
    let u0 = u.eval(&x0);

    let samples = run_indexed(trajectories, options.workers, |j| {
        let mut stream = derive_stream(SeedSpec::new(options.master_seed, j));
        let mut values = Vec::with_capacity(cps.len());
        let mut next = 0;
        let obs = |r: &StepRecord<'_>| {
            if r.event == StepEvent::Settled && next < cps.len() && r.k == cps[next] {
                values.push(u.eval(r.position) + r.score - u0);
                next += 1;
            }
        };
        run_reflecting_observed(&x0, &params, &problem.domain, &problem.datum, &mut stream, obs)?;
        Ok(values)
    })?;

    let mut out = Vec::with_capacity(cps.len());
    for (c, &k) in cps.iter().enumerate() {
        let vals: Vec<f64> = samples.iter().map(|v| v[c]).collect();
        let (drift, se) = mean_and_std_error(&vals);
        let band = 3.0 * se + options.c_drift * h * k as f64;
        out.push(DriftCheckpoint {
            k,
            drift,
            std_error: se,
            band,
            within_band: drift.abs() <= band,
        });
    }
    let all_within_band = out.iter().all(|c| c.within_band);
    Ok(DriftReport {
        problem: problem.name.clone(),
        start: x0,
        h,
        trajectories,
        c_drift: options.c_drift,
        checkpoints: out,
        all_within_band,
    })
}

/// Boundary landing rates of the two halves of the walks agree within 10%.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub rate_first_half: f64,
    pub rate_second_half: f64,
    pub relative_change: f64,
    pub tail_shift: f64,
    pub tail_converged: bool,
    pub stable: bool,
}

pub const STATIONARITY_TOLERANCE: f64 = 0.1;

pub fn stationarity(estimate: &PointEstimate) -> StationarityReport {
    let (a, b) = (estimate.hit_rate_first_half, estimate.hit_rate_second_half);
    let top = a.max(b);
    let relative_change = if top > 0.0 { (a - b).abs() / top } else { f64::INFINITY };
    StationarityReport {
        rate_first_half: a,
        rate_second_half: b,
        relative_change,
        tail_shift: estimate.tail_shift,
        tail_converged: estimate.tail_converged,
        stable: a > 0.0 && b > 0.0 && relative_change <= STATIONARITY_TOLERANCE && estimate.tail_converged,
    }
}

/// ŵ/w with a 95% interval; guards against a global calibration factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub exact: f64,
    pub ratio: f64,
    pub ci95: [f64; 2],
    pub contains_one: bool,
    pub excludes_half: bool,
    pub excludes_two: bool,
    pub passed: bool,
}

pub fn calibration_ratio(estimate: &PointEstimate, exact: f64) -> Option<CalibrationReport> {
    if exact == 0.0 || !exact.is_finite() {
        return None;
    }
    let ratio = estimate.mean / exact;
    let r = Z95 * estimate.std_error / exact.abs();
    let ci95 = [ratio - r, ratio + r];
    let inside = |v: f64| ci95[0] <= v && v <= ci95[1];
    let contains_one = inside(1.0);
    let excludes_half = !inside(0.5);
    let excludes_two = !inside(2.0);
    Some(CalibrationReport {
        exact,
        ratio,
        ci95,
        contains_one,
        excludes_half,
        excludes_two,
        passed: contains_one && excludes_half && excludes_two,
    })
}

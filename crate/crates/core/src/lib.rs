//! Monte Carlo solver for the Neumann problem for the Laplacian.
//!
//! A reflecting random walk with a thin boundary layer accumulates a discrete
//! local-time score `λ√h · Σ f(y^π)` over its boundary landings; averaging
//! scores over many walks estimates the harmonic function whose inward normal
//! derivative is `f`, up to an additive constant.
//!
//! ```
//! use neumann_walk::{builtin, estimate, EstimateRequest, WalkParams};
//!
//! let problem = builtin("zero-square").unwrap();
//! let params = WalkParams::reflecting(0.01, 1.0, 2);
//! let req = EstimateRequest::new(&problem.domain, &problem.datum, params, 16, 7)
//!     .with_points(problem.default_points.clone());
//! let est = estimate(&req).unwrap();
//! assert!(est.iter().all(|e| e.mean == 0.0));
//! ```

pub mod error;
pub mod estimator;
pub mod geometry;
pub mod problems;
pub mod random;
pub mod walk;

pub use error::{Error, Result};
pub use estimator::{
    calibration_ratio, check_compatibility, convergence_study, estimate, estimate_point, fit_order,
    fit_order_with_bars, martingale_diagnostic, measure_compatibility, normalize, stationarity,
    CalibrationReport, CompatibilityReport, ConvergenceReport, DiagnosticOptions, DriftReport,
    EstimateRequest, Normalization, OrderFit, PointEstimate, StationarityReport, StudyOptions,
};
pub use geometry::{BoundaryFunction, BoundaryPoint, DomainGeometry, DomainKind, Point, Quadrant};
pub use problems::{builtin, verify, BenchmarkProblem, BoundaryDatum, CheckResult, Polynomial, VerifyReport, BUILTIN_NAMES};
pub use random::{derive_stream, SeedSpec, Stream};
pub use walk::{
    default_lambda, run_absorbing, run_reflecting, DeflectionRule, StepEvent, StepRecord,
    TrajectoryOutcome, WalkMode, WalkParams,
};

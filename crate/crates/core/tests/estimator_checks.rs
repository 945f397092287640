use neumann_walk::{
    builtin, calibration_ratio, convergence_study, estimate, martingale_diagnostic, stationarity, BenchmarkProblem,
    BoundaryDatum, DiagnosticOptions, DomainGeometry, Error, EstimateRequest, Normalization, Point, Polynomial,
    StudyOptions, WalkParams,
};

fn constant_problem(c: f64) -> BenchmarkProblem {
    let zero = builtin("zero-square").unwrap();
    BenchmarkProblem {
        name: "constant".into(),
        exact: Some(Polynomial::constant(c)),
        datum: BoundaryDatum::zero(),
        ..zero
    }
}

#[test]
fn drift_of_trivial_pairs_is_exactly_zero() {
    let checkpoints = [10, 100, 1000];
    for problem in [builtin("zero-square").unwrap(), constant_problem(3.25)] {
        let r = martingale_diagnostic(&problem, 1e-3, 64, &checkpoints, &DiagnosticOptions::default()).unwrap();
        assert_eq!(r.checkpoints.len(), 3);
        for c in &r.checkpoints {
            assert_eq!(c.drift, 0.0);
            assert_eq!(c.std_error, 0.0);
            assert!(c.within_band);
        }
    }
}

#[test]
fn saddle_drift_stays_in_band_at_coarse_h() {
    let p = builtin("saddle-square").unwrap();
    let r = martingale_diagnostic(&p, 1e-2, 20_000, &[10, 100, 1000], &DiagnosticOptions::default()).unwrap();
    for c in &r.checkpoints {
        assert!(c.within_band, "{c:?}");
    }
}

#[test]
fn saddle_is_antisymmetric_under_swapping_coordinates() {
    let p = builtin("saddle-square").unwrap();
    let (a, b) = (0.8, 0.35);
    let pts = vec![Point::new(vec![a, b]).unwrap(), Point::new(vec![b, a]).unwrap()];
    let req = EstimateRequest::new(&p.domain, &p.datum, WalkParams::reflecting(4e-3, 8.0, 2), 20_000, 5)
        .with_points(pts);
    let e = estimate(&req).unwrap();
    let sum = e[0].mean + e[1].mean;
    let se = e[0].std_error.hypot(e[1].std_error);
    assert!(sum.abs() <= 3.0 * se, "sum {sum} se {se}");
}

#[test]
fn linear_disk_is_calibrated() {
    let p = builtin("linear-disk").unwrap();
    // the slowest Neumann mode of the disk decays like exp(-0.42 t): T = 8 is
    // not long enough here
    let params = WalkParams::reflecting(4e-3, p.default_horizon, 2);
    let req = EstimateRequest::new(&p.domain, &p.datum, params, 20_000, 3).with_points(p.default_points.clone());
    let e = &estimate(&req).unwrap()[0];
    let c = calibration_ratio(e, p.exact_at(&e.point).unwrap()).unwrap();
    assert!(c.passed, "{c:?}");
    assert!(stationarity(e).stable, "{:?}", stationarity(e));
}

#[test]
fn short_horizon_is_flagged_unstable() {
    let p = builtin("saddle-square").unwrap();
    let req = EstimateRequest::new(&p.domain, &p.datum, WalkParams::reflecting(1e-3, 0.01, 2), 2000, 3)
        .with_points(p.default_points.clone());
    for e in estimate(&req).unwrap() {
        assert!(!stationarity(&e).stable);
    }
}

#[test]
fn lshape_differences_match_the_saddle() {
    let p = builtin("saddle-lshape").unwrap();
    assert!(matches!(p.natural_normalization(), Normalization::DifferenceTo(_)));
    let req = EstimateRequest::new(&p.domain, &p.datum, WalkParams::reflecting(4e-3, 8.0, 2), 20_000, 8)
        .with_points(p.default_points.clone())
        .with_normalization(p.natural_normalization());
    let est = estimate(&req).unwrap();
    let base = p.exact_at(&p.default_points[0]).unwrap();
    for e in &est[1..] {
        let exact = p.exact_at(&e.point).unwrap() - base;
        assert!((e.mean - exact).abs() <= 3.0 * e.std_error + 0.05, "{} vs {exact}", e.mean);
    }
}

#[test]
fn study_needs_an_exact_solution() {
    let mut p = builtin("saddle-square").unwrap();
    p.exact = None;
    match convergence_study(&p, &[4e-3, 2e-3, 1e-3], 10, 0, &StudyOptions::default()) {
        Err(Error::Usage(msg)) => assert!(msg.contains("exact")),
        other => panic!("{other:?}"),
    }
    let p = builtin("saddle-square").unwrap();
    assert!(convergence_study(&p, &[4e-3, 1e-3], 10, 0, &StudyOptions::default()).is_err());
    assert!(convergence_study(&p, &[1e-3, 2e-3, 4e-3], 10, 0, &StudyOptions::default()).is_err());
}

#[test]
fn study_on_zero_problem_has_zero_errors() {
    let p = builtin("zero-square").unwrap();
    let opts = StudyOptions {
        horizon: Some(1.0),
        ..StudyOptions::default()
    };
    let r = convergence_study(&p, &[0.04, 0.02, 0.01], 20, 0, &opts).unwrap();
    assert_eq!(r.errors, vec![0.0; 3]);
    assert!(r.inconclusive);
    assert!(r.fitted_order.is_nan());
}

#[test]
fn request_validation() {
    let sq = DomainGeometry::unit_cube(2);
    let f = BoundaryDatum::zero();
    let pts = vec![Point::new(vec![0.5, 0.5]).unwrap()];
    let params = WalkParams::reflecting(0.01, 1.0, 2);
    let ok = EstimateRequest::new(&sq, &f, params.clone(), 2, 0).with_points(pts.clone());
    assert!(estimate(&ok).is_ok());
    assert!(estimate(&EstimateRequest::new(&sq, &f, params.clone(), 1, 0).with_points(pts.clone())).is_err());
    assert!(estimate(&ok.clone().with_workers(0)).is_err());
    let outside = vec![Point::new(vec![1.5, 0.5]).unwrap()];
    assert!(estimate(&ok.clone().with_points(outside)).is_err());
    let absorbing = EstimateRequest::new(&sq, &f, WalkParams::absorbing(0.01, 2), 2, 0).with_points(pts);
    assert!(estimate(&absorbing).is_err());
}

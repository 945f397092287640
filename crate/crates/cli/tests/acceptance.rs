//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Usage: `cargo test -p neumann-walk-cli --test acceptance [-- 2 4 ...]`.
//! Numeric arguments select criteria. `NEUMANN_WALK_ACCEPTANCE_SCALE`
//! multiplies every trajectory count of the statistical criteria (default 1);
//! the confidence bands widen accordingly.

use std::process::Command;
use std::time::Instant;

use neumann_walk::walk::jump_probability;
use neumann_walk::{
    builtin, calibration_ratio, check_compatibility, convergence_study, default_lambda, derive_stream, estimate,
    martingale_diagnostic, BoundaryDatum, ConvergenceReport, DiagnosticOptions, DomainGeometry, Error,
    EstimateRequest, Point, PointEstimate, Quadrant, SeedSpec, StudyOptions, WalkParams,
};

const BIN: &str = env!("CARGO_BIN_EXE_neumann-walk");

struct Ctx {
    scale: f64,
    workers: usize,
    dir: tempfile::TempDir,
}

impl Ctx {
    fn m(&self, base: usize) -> usize {
        ((base as f64 * self.scale).round() as usize).max(100)
    }
}

struct Verdict {
    passed: bool,
    lines: Vec<String>,
}

impl Verdict {
    fn new() -> Self {
        Verdict {
            passed: true,
            lines: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.passed &= ok;
        self.lines.push(format!("{} {line}", if ok { "ok  " } else { "FAIL" }));
    }

    fn note(&mut self, line: String) {
        self.lines.push(format!("info {line}"));
    }
}

fn pt(c: &[f64]) -> Point {
    Point::new(c.to_vec()).unwrap()
}

fn solve_at(
    problem: &neumann_walk::BenchmarkProblem,
    points: Vec<Point>,
    h: f64,
    horizon: f64,
    m: usize,
    seed: u64,
    workers: usize,
) -> Vec<PointEstimate> {
    let params = WalkParams::reflecting(h, horizon, problem.domain.dimension());
    let req = EstimateRequest::new(&problem.domain, &problem.datum, params, m, seed)
        .with_points(points)
        .with_workers(workers);
    estimate(&req).unwrap()
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).env_remove("NEUMANN_WALK_SEED").output().unwrap()
}

// 1
fn zero_problem(ctx: &Ctx) -> Verdict {
    let mut v = Verdict::new();
    let p = builtin("zero-square").unwrap();
    for h in [1e-2, 1e-3] {
        let start = Instant::now();
        let est = solve_at(&p, p.default_points.clone(), h, p.default_horizon, 100, 1, 1);
        let secs = start.elapsed().as_secs_f64();
        let exact = est.iter().all(|e| e.mean == 0.0 && e.std_error == 0.0);
        v.check(exact, format!("h={h}: every estimate is 0 with standard error 0"));
        v.check(secs < 1.0, format!("h={h}: runtime {secs:.3} s < 1 s"));
    }
    let csv = ctx.dir.path().join("zero.csv");
    let out = cli(&[
        "solve",
        "--problem",
        "zero-square",
        "--points",
        "0.5,0.5",
        "--h",
        "1e-3",
        "--M",
        "100",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&csv).unwrap_or_default();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mean_idx = rdr.headers().unwrap().iter().position(|h| h == "mean");
    let row = rdr.records().next().and_then(|r| r.ok());
    let mean = mean_idx.zip(row).map(|(i, r)| r[i].to_string());
    v.check(
        out.status.success() && mean.as_deref() == Some("0.0"),
        format!("cli solve mean column = {mean:?}"),
    );
    v
}

// 2 and 10 share the linear-disk run.
struct Benchmarks {
    saddle: PointEstimate,
    disk: PointEstimate,
    saddle_default: PointEstimate,
}

fn benchmark_runs(ctx: &Ctx) -> Benchmarks {
    let m = ctx.m(100_000);
    let saddle = builtin("saddle-square").unwrap();
    let disk = builtin("linear-disk").unwrap();
    let s = solve_at(&saddle, vec![pt(&[0.75, 0.25])], 1e-3, 20.0, m, 11, ctx.workers);
    let d = solve_at(&disk, disk.default_points.clone(), 1e-3, 20.0, m, 12, ctx.workers);
    let sd = solve_at(&saddle, saddle.default_points.clone(), 1e-3, 20.0, m, 13, ctx.workers);
    Benchmarks {
        saddle: s[0].clone(),
        disk: d[0].clone(),
        saddle_default: sd[0].clone(),
    }
}

fn benchmark_accuracy(b: &Benchmarks) -> Verdict {
    let mut v = Verdict::new();
    let h = 1e-3;
    for (name, e, exact) in [("saddle-square", &b.saddle, 0.5), ("linear-disk", &b.disk, 0.5)] {
        let err = (e.mean - exact).abs();
        let band = 1.96 * e.std_error + 10.0 * h;
        v.check(
            err <= band,
            format!(
                "{name} at {:?}: mean {:.5} exact {exact} |err| {err:.5} <= band {band:.5} (M={})",
                e.point.coords(),
                e.mean,
                e.trajectories
            ),
        );
    }
    v
}

// 3
fn study_line(r: &ConvergenceReport) -> String {
    let errs: Vec<String> = r
        .errors
        .iter()
        .zip(&r.error_bars)
        .map(|(e, s)| format!("{e:.5}±{s:.5}"))
        .collect();
    format!(
        "M={} T={} errors [{}] order {:.3}±{:.3} decreasing={} inconclusive={}",
        r.trajectories,
        r.horizon,
        errs.join(", "),
        r.fitted_order,
        r.order_std_error,
        r.strictly_decreasing,
        r.inconclusive
    )
}

fn study_with_rerun(name: &str, m: usize, ctx: &Ctx, v: &mut Verdict) -> ConvergenceReport {
    let p = builtin(name).unwrap();
    let h = [4e-3, 2e-3, 1e-3];
    let opts = StudyOptions {
        horizon: Some(CONVERGENCE_HORIZON),
        workers: ctx.workers,
        ..StudyOptions::default()
    };
    let first = convergence_study(&p, &h, m, 21, &opts).unwrap();
    if !first.inconclusive {
        return first;
    }
    v.note(format!("{name} first attempt inconclusive: {}", study_line(&first)));
    convergence_study(&p, &h, 4 * m, 21, &opts).unwrap()
}

/// Horizon for the convergence studies. The slowest Neumann mode of the unit
/// cube decays like exp(-1.23 T) in walk time, so at T = 8 the unmixed part is
/// below 1e-4, far under the layer error at h = 1e-3.
const CONVERGENCE_HORIZON: f64 = 8.0;

fn convergence_order(ctx: &Ctx) -> Verdict {
    let mut v = Verdict::new();
    let m = ctx.m(400_000);
    let sq = study_with_rerun("saddle-square", m, ctx, &mut v);
    let in_range = (0.5..=1.5).contains(&sq.fitted_order);
    v.check(
        sq.strictly_decreasing && in_range,
        format!("saddle-square: {}", study_line(&sq)),
    );
    let cube = study_with_rerun("saddle-hypercube-5d", m, ctx, &mut v);
    v.check(
        (0.5..=1.5).contains(&cube.fitted_order),
        format!("saddle-hypercube-5d: {}", study_line(&cube)),
    );
    v
}

// 4
fn martingale_drift(ctx: &Ctx) -> Verdict {
    let mut v = Verdict::new();
    let p = builtin("saddle-square").unwrap();
    let opts = DiagnosticOptions {
        master_seed: 4,
        workers: ctx.workers,
        ..DiagnosticOptions::default()
    };
    let r = martingale_diagnostic(&p, 1e-3, ctx.m(100_000), &[100, 1000, 10_000], &opts).unwrap();
    for c in &r.checkpoints {
        v.check(
            c.within_band,
            format!(
                "k={}: drift {:+.5} ± {:.5}, band {:.5} (start {:?})",
                c.k,
                c.drift,
                c.std_error,
                c.band,
                r.start.coords()
            ),
        );
    }
    v
}

fn sample_zone_points(domain: &DomainGeometry, h: f64, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let (lo, hi) = domain.bounding_box();
    let mut s = derive_stream(SeedSpec::new(seed, 0));
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let y: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| a + (b - a) * s.uniform()).collect();
        if domain.contains(&y).unwrap() && domain.in_boundary_zone(&y, h).unwrap() {
            out.push(y);
        }
    }
    out
}

// 5
fn mean_preservation() -> Verdict {
    let mut v = Verdict::new();
    for (name, domain) in [("square", DomainGeometry::unit_cube(2)), ("ball", DomainGeometry::unit_ball(2))] {
        let h: f64 = 1e-3;
        let lambda = default_lambda(2);
        let layer = lambda * h.sqrt();
        let mut worst: f64 = 0.0;
        for y in sample_zone_points(&domain, h, 10_000, 5) {
            let bp = domain.project_to_boundary(&y).unwrap();
            let p = jump_probability(&y, &bp, h, lambda).unwrap();
            for i in 0..2 {
                let mixed = p * bp.position.coords()[i] + (1.0 - p) * (y[i] + layer * bp.inward_normal[i]);
                worst = worst.max((mixed - y[i]).abs());
            }
        }
        v.check(
            worst <= 1e-12,
            format!("{name}: max |p·y^π + (1-p)(y + λ√h η) - y| = {worst:.3e} over 10^4 zone points"),
        );
    }
    v
}

// 6
fn endpoint_probabilities(domain: &DomainGeometry, on_boundary: &[f64], h: f64, lambda: f64) -> (f64, f64) {
    let layer = lambda * h.sqrt();
    let bp = domain.project_to_boundary(on_boundary).unwrap();
    let p0 = jump_probability(bp.position.coords(), &bp, h, lambda).unwrap();
    let y: Vec<f64> = bp
        .position
        .coords()
        .iter()
        .zip(&bp.inward_normal)
        .map(|(a, n)| a + layer * n)
        .collect();
    let p1 = jump_probability(&y, &domain.project_to_boundary(&y).unwrap(), h, lambda).unwrap();
    (p0, p1)
}

fn jump_endpoints() -> Verdict {
    let mut v = Verdict::new();
    // Faces of boxes with the default layer constant: r is exact for any h.
    let boxes: [(&str, DomainGeometry, Vec<f64>); 2] = [
        ("square", DomainGeometry::unit_cube(2), vec![0.0, 0.3]),
        ("cube5", DomainGeometry::unit_cube(5), vec![0.4, 0.0, 0.5, 0.5, 0.5]),
    ];
    for (name, domain, x) in &boxes {
        for h in [1e-2, 1e-3, 2.5e-4] {
            let (p0, p1) = endpoint_probabilities(domain, x, h, default_lambda(domain.dimension()));
            v.check(p0 == 1.0 && p1 == 0.5, format!("{name} h={h}: p(r=0) = {p0}, p(r=λ√h) = {p1}"));
        }
    }
    // Curved boundaries: r is exactly representable only for axis points and a
    // dyadic layer width, here λ = 0.75 and h = 2^-10, 2^-6.
    let balls: [(&str, DomainGeometry, Vec<f64>); 2] = [
        ("disk", DomainGeometry::unit_ball(2), vec![1.0, 0.0]),
        ("ball3", DomainGeometry::unit_ball(3), vec![0.0, 0.0, -1.0]),
    ];
    for (name, domain, x) in &balls {
        for h in [f64::powi(2.0, -10), f64::powi(2.0, -6)] {
            let (p0, p1) = endpoint_probabilities(domain, x, h, 0.75);
            v.check(
                p0 == 1.0 && p1 == 0.5,
                format!("{name} at {x:?} h={h} λ=0.75: p(r=0) = {p0}, p(r=λ√h) = {p1}"),
            );
        }
    }
    let disk = DomainGeometry::unit_ball(2);
    let mut dev: f64 = 0.0;
    for k in 0..64 {
        let t = k as f64 * std::f64::consts::TAU / 64.0;
        let (p0, p1) = endpoint_probabilities(&disk, &[t.cos(), t.sin()], 1e-3, default_lambda(2));
        dev = dev.max((p0 - 1.0).abs()).max((p1 - 0.5).abs());
    }
    v.note(format!("disk, 64 generic boundary points, h=1e-3: max deviation {dev:.1e} from rounding of r"));
    v
}

// 7
fn zone_soundness() -> Verdict {
    let mut v = Verdict::new();
    let sq = DomainGeometry::unit_cube(2);
    for h in [1e-2, 1e-3] {
        let mut zone = 0;
        let mut missed = 0;
        for i in 0..200 {
            for j in 0..200 {
                let y = [i as f64 / 199.0, j as f64 / 199.0];
                if sq.zone_by_enumeration(&y, h).unwrap() {
                    zone += 1;
                    if !sq.zone_conservative(&y, h).unwrap() {
                        missed += 1;
                    }
                }
            }
        }
        v.check(
            missed == 0,
            format!("square 200x200 grid h={h}: {missed} of {zone} enumerated zone points outside the conservative zone"),
        );
    }

    let h = 1e-3;
    let lshape = DomainGeometry::lshape(1.0, [0.5, 0.5], Quadrant::LowerRight).unwrap();
    for (name, domain, limit) in [
        ("square", DomainGeometry::unit_cube(2), 0.0),
        ("ball", DomainGeometry::unit_ball(2), 0.0),
        ("lshape", lshape, 1e-3),
    ] {
        let (stuck, composite_stuck, total) = deflection_exceptions(&domain, h);
        let frac = stuck as f64 / total as f64;
        let ok = if limit == 0.0 { stuck == 0 } else { frac < limit };
        v.check(
            ok,
            format!(
                "{name} h={h}: y + λ√h η still in the zone for {stuck} of {total} zone points ({:.3}%)",
                100.0 * frac
            ),
        );
        v.note(format!(
            "{name} h={h}: after repeated resolution stages {composite_stuck} of {total} points remain in the zone"
        ));
    }
    v
}

/// Counts zone points whose single deflection stays in the zone, and those
/// still in the zone after deflecting until clear (at most 2d + 2 stages).
fn deflection_exceptions(domain: &DomainGeometry, h: f64) -> (usize, usize, usize) {
    let d = domain.dimension();
    let layer = default_lambda(d) * h.sqrt();
    let points = sample_zone_points(domain, h, 20_000, 7);
    let mut stuck = 0;
    let mut composite = 0;
    for y in &points {
        let mut z = y.clone();
        for stage in 0..(2 * d + 2) {
            let bp = domain.project_to_boundary(&z).unwrap();
            for i in 0..d {
                z[i] += layer * bp.inward_normal[i];
            }
            let in_zone = domain.in_boundary_zone(&z, h).unwrap();
            if stage == 0 && in_zone {
                stuck += 1;
            }
            if !in_zone {
                break;
            }
            if stage == 2 * d + 1 {
                composite += 1;
            }
        }
    }
    (stuck, composite, points.len())
}

// 8
fn compatibility_gate(ctx: &Ctx) -> Verdict {
    let mut v = Verdict::new();
    let sq = DomainGeometry::unit_cube(2);
    match check_compatibility(&sq, &BoundaryDatum::constant(1.0), 1e-9) {
        Err(Error::CompatibilityViolation { value, .. }) => v.check(
            (value - 4.0).abs() <= 1e-12,
            format!("library: f = 1 refused, measured integral {value:?}"),
        ),
        other => v.check(false, format!("library: f = 1 not refused: {other:?}")),
    }
    let cfg = ctx.dir.path().join("ones.toml");
    std::fs::write(
        &cfg,
        "problem = \"custom\"\n[custom]\ndatum = \"1\"\ndomain = { kind = \"hyperrectangle\", lo = [0.0, 0.0], hi = [1.0, 1.0] }\n",
    )
    .unwrap();
    let out = cli(&["solve", "--config", cfg.to_str().unwrap(), "--M", "10", "--h", "0.01", "--T", "1"]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    let measured = stderr
        .lines()
        .find_map(|l| l.strip_prefix("measured boundary integral: "))
        .and_then(|rest| rest.split_whitespace().next())
        .and_then(|s| s.parse::<f64>().ok());
    v.check(
        out.status.code() == Some(2) && measured.is_some_and(|m| (m - 4.0).abs() <= 1e-12),
        format!("cli: exit code {:?}, measured integral {measured:?}", out.status.code()),
    );
    let out = cli(&["solve", "--problem", "saddle-square", "--datum-offset", "1", "--M", "10"]);
    v.check(
        out.status.code() == Some(2),
        format!("cli: saddle-square with f + 1 exits {:?}", out.status.code()),
    );
    let out = cli(&[
        "solve",
        "--problem",
        "saddle-square",
        "--datum-offset",
        "1",
        "--override-compatibility",
        "--M",
        "10",
        "--h",
        "0.01",
        "--T",
        "1",
    ]);
    v.check(
        out.status.code() == Some(0),
        format!("cli: the same run with --override-compatibility exits {:?}", out.status.code()),
    );
    v
}

// 9
fn determinism(ctx: &Ctx) -> Verdict {
    let mut v = Verdict::new();
    let run = |workers: usize| -> Vec<u8> {
        let path = ctx.dir.path().join(format!("det_{workers}.csv"));
        let out = cli(&[
            "solve",
            "--problem",
            "saddle-square",
            "--points",
            "0.75,0.25;0.5,0.05;0.1,0.9",
            "--h",
            "0.004",
            "--T",
            "4",
            "--M",
            "3000",
            "--seed",
            "20240601",
            "--workers",
            &workers.to_string(),
            "--csv",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(path).unwrap()
    };
    let one = run(1);
    for w in [4, 16] {
        v.check(run(w) == one, format!("workers={w}: CSV byte-identical to workers=1"));
    }
    v
}

// 10
fn calibration(b: &Benchmarks) -> Verdict {
    let mut v = Verdict::new();
    let saddle = builtin("saddle-square").unwrap();
    let disk = builtin("linear-disk").unwrap();
    for (name, e, problem) in [("saddle-square", &b.saddle_default, &saddle), ("linear-disk", &b.disk, &disk)] {
        let w = problem.exact_at(e.point.coords()).unwrap();
        let c = calibration_ratio(e, w).unwrap();
        v.check(
            c.passed,
            format!(
                "{name} at {:?}: ratio {:.4}, 95% CI [{:.4}, {:.4}]",
                e.point.coords(),
                c.ratio,
                c.ci95[0],
                c.ci95[1]
            ),
        );
    }
    v
}

const NAMES: [&str; 10] = [
    "zero problem exactness",
    "benchmark accuracy (d=2)",
    "convergence order",
    "martingale drift",
    "mean preservation",
    "jump-probability endpoints",
    "zone soundness",
    "compatibility gate",
    "determinism",
    "calibration ratio",
];

fn main() {
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .filter(|n| (1..=10).contains(n))
        .collect();
    let wanted = |n: usize| selected.is_empty() || selected.contains(&n);
    let scale = std::env::var("NEUMANN_WALK_ACCEPTANCE_SCALE")
        .ok()
        .and_then(|s| s.parse::<f64>().ok())
        .filter(|s| *s > 0.0)
        .unwrap_or(1.0);
    let ctx = Ctx {
        scale,
        workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        dir: tempfile::tempdir().unwrap(),
    };
    println!("acceptance: trajectory scale {scale}, {} workers", ctx.workers);

    let mut benchmarks = None;
    let mut failed = Vec::new();
    for n in 1..=10 {
        if !wanted(n) {
            continue;
        }
        let start = Instant::now();
        let verdict = match n {
            1 => zero_problem(&ctx),
            2 => benchmark_accuracy(benchmarks.get_or_insert_with(|| benchmark_runs(&ctx))),
            3 => convergence_order(&ctx),
            4 => martingale_drift(&ctx),
            5 => mean_preservation(),
            6 => jump_endpoints(),
            7 => zone_soundness(),
            8 => compatibility_gate(&ctx),
            9 => determinism(&ctx),
            10 => calibration(benchmarks.get_or_insert_with(|| benchmark_runs(&ctx))),
            _ => unreachable!(),
        };
        let tag = if verdict.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] {n:>2}. {} ({:.1} s)", NAMES[n - 1], start.elapsed().as_secs_f64());
        for line in &verdict.lines {
            println!("         {line}");
        }
        if !verdict.passed {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
    println!("acceptance: all selected criteria passed");
}

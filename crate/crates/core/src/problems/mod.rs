//! Benchmark Neumann problems with closed-form harmonic solutions.

mod polynomial;

pub use polynomial::{Monomial, Polynomial};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::Normalization;
use crate::geometry::{BoundaryFunction, DomainGeometry, Point, Quadrant};
use crate::random::{derive_stream, SeedSpec};

/// One ingredient of a boundary datum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DatumTerm {
    Constant { value: f64 },
    /// A polynomial in the boundary coordinates.
    Polynomial { poly: Polynomial },
    /// The outward normal derivative `−∇w·η` of a polynomial `w`; the
    /// gradient is stored component-wise.
    NormalDerivative { gradient: Vec<Polynomial> },
}

impl DatumTerm {
    fn eval(&self, position: &[f64], inward_normal: &[f64]) -> f64 {
        match self {
            DatumTerm::Constant { value } => *value,
            DatumTerm::Polynomial { poly } => poly.eval(position),
            DatumTerm::NormalDerivative { gradient } => -gradient
                .iter()
                .zip(inward_normal)
                .map(|(g, n)| g.eval(position) * n)
                .sum::<f64>(),
        }
    }
}

/// Neumann datum f on ∂O: a weighted sum of terms.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundaryDatum {
    pub terms: Vec<(f64, DatumTerm)>,
}

impl BoundaryDatum {
    pub fn zero() -> Self {
        BoundaryDatum::default()
    }

    pub fn constant(value: f64) -> Self {
        BoundaryDatum {
            terms: vec![(1.0, DatumTerm::Constant { value })],
        }
    }

    pub fn polynomial(poly: Polynomial) -> Self {
        BoundaryDatum {
            terms: vec![(1.0, DatumTerm::Polynomial { poly })],
        }
    }

    /// The Neumann datum ∂w/∂ν of `w` in dimension `d`.
    pub fn normal_derivative(w: &Polynomial, d: usize) -> Self {
        let gradient = (0..d).map(|i| w.derivative(i)).collect();
        BoundaryDatum {
            terms: vec![(1.0, DatumTerm::NormalDerivative { gradient })],
        }
    }

    pub fn scaled(mut self, alpha: f64) -> Self {
        for (w, _) in &mut self.terms {
            *w *= alpha;
        }
        self
    }

    /// `self + other`.
    pub fn plus(mut self, other: BoundaryDatum) -> Self {
        self.terms.extend(other.terms);
        self
    }

    /// `self + c`.
    pub fn offset(self, c: f64) -> Self {
        if c == 0.0 {
            self
        } else {
            self.plus(BoundaryDatum::constant(c))
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|(w, t)| {
            *w == 0.0
                || match t {
                    DatumTerm::Constant { value } => *value == 0.0,
                    DatumTerm::Polynomial { poly } => poly.terms.iter().all(|m| m.coeff == 0.0),
                    DatumTerm::NormalDerivative { gradient } => {
                        gradient.iter().all(|g| g.terms.iter().all(|m| m.coeff == 0.0))
                    }
                }
        })
    }
}

impl BoundaryFunction for BoundaryDatum {
    fn eval(&self, position: &[f64], inward_normal: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(w, t)| w * t.eval(position, inward_normal))
            .sum()
    }
}

/// A domain, a compatible datum and (usually) the exact solution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkProblem {
    pub name: String,
    pub domain: DomainGeometry,
    pub datum: BoundaryDatum,
    pub exact: Option<Polynomial>,
    pub default_points: Vec<Point>,
    /// Reflecting-walk horizon T used when the caller gives none.
    pub default_horizon: f64,
    /// The exact solution satisfies ∫_O w dx = 0, so raw estimates are
    /// directly comparable with it. Otherwise only differences are.
    pub mean_zero: bool,
    pub notes: String,
}

impl BenchmarkProblem {
    pub fn exact_at(&self, x: &[f64]) -> Option<f64> {
        self.exact.as_ref().map(|w| w.eval(x))
    }

    /// Normalization under which estimates are compared with `exact`.
    pub fn natural_normalization(&self) -> Normalization {
        if self.mean_zero {
            Normalization::Raw
        } else {
            Normalization::DifferenceTo(self.default_points[0].clone())
        }
    }

    /// Same problem with `c` added to the datum (breaks compatibility for c ≠ 0).
    pub fn with_datum_offset(mut self, c: f64) -> Self {
        self.datum = self.datum.offset(c);
        self
    }
}

pub const BUILTIN_NAMES: [&str; 5] = [
    "zero-square",
    "saddle-square",
    "linear-disk",
    "saddle-hypercube-5d",
    "saddle-lshape",
];

fn pts(v: &[&[f64]]) -> Vec<Point> {
    v.iter().map(|c| Point::new(c.to_vec()).expect("finite")).collect()
}

fn saddle() -> Polynomial {
    Polynomial::monomial(1.0, 0, 2).add(Polynomial::monomial(-1.0, 1, 2))
}

pub fn builtin(name: &str) -> Result<BenchmarkProblem> {
    let p = match name {
        "zero-square" => BenchmarkProblem {
            name: name.into(),
            domain: DomainGeometry::unit_cube(2),
            datum: BoundaryDatum::zero(),
            exact: Some(Polynomial::zero()),
            default_points: pts(&[&[0.5, 0.5], &[0.75, 0.25]]),
            default_horizon: 20.0,
            mean_zero: true,
            notes: "f = 0 on the unit square; w = 0".into(),
        },
        "saddle-square" => BenchmarkProblem {
            name: name.into(),
            domain: DomainGeometry::unit_cube(2),
            datum: BoundaryDatum::normal_derivative(&saddle(), 2),
            exact: Some(saddle()),
            default_points: pts(&[&[0.5, 0.05]]),
            default_horizon: 20.0,
            mean_zero: true,
            notes: "w = x1^2 - x2^2 on [0,1]^2; f = 2 on x1 = 1, -2 on x2 = 1, 0 on the other faces; \
                    default point near the x2 = 0 face"
                .into(),
        },
        "linear-disk" => BenchmarkProblem {
            name: name.into(),
            domain: DomainGeometry::unit_ball(2),
            datum: BoundaryDatum::polynomial(Polynomial::monomial(1.0, 0, 1)),
            exact: Some(Polynomial::monomial(1.0, 0, 1)),
            default_points: pts(&[&[0.5, 0.0]]),
            default_horizon: 20.0,
            mean_zero: true,
            notes: "w = x1 on the unit disk; f(y) = y1".into(),
        },
        "saddle-hypercube-5d" => BenchmarkProblem {
            name: name.into(),
            domain: DomainGeometry::unit_cube(5),
            datum: BoundaryDatum::normal_derivative(&saddle(), 5),
            exact: Some(saddle()),
            default_points: pts(&[&[0.5, 0.05, 0.5, 0.5, 0.5]]),
            default_horizon: 20.0,
            mean_zero: true,
            notes: "w = x1^2 - x2^2 on [0,1]^5; default point near the x2 = 0 face".into(),
        },
        "saddle-lshape" => BenchmarkProblem {
            name: name.into(),
            domain: DomainGeometry::lshape(1.0, [0.5, 0.5], Quadrant::LowerRight).expect("valid L-shape"),
            datum: BoundaryDatum::normal_derivative(&saddle(), 2),
            exact: Some(saddle()),
            default_points: pts(&[&[0.25, 0.75], &[0.25, 0.25], &[0.75, 0.75]]),
            default_horizon: 20.0,
            mean_zero: false,
            notes: "w = x1^2 - x2^2 on [0,1]^2 minus the lower-right quadrant; \
                    the volume mean of w is -1/6, so only differences are compared"
                .into(),
        },
        _ => {
            return Err(Error::Usage(format!(
                "unknown problem {name:?}; available: {}",
                BUILTIN_NAMES.join(", ")
            )))
        }
    };
    Ok(p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub residual: f64,
    pub tolerance: f64,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub problem: String,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

const VERIFY_QUADRATURE_NODES: usize = 4096;

/// Numerically checks the problem's data: harmonicity of w, agreement of f
/// with ∂w/∂ν, the compatibility integral and the volume mean of w.
pub fn verify(problem: &BenchmarkProblem) -> VerifyReport {
    let dom = &problem.domain;
    let d = dom.dimension();
    let mut checks = Vec::new();
    let mut push = |name: &str, residual: f64, tolerance: f64, note: &str| {
        checks.push(CheckResult {
            name: name.into(),
            passed: residual <= tolerance,
            residual,
            tolerance,
            note: note.into(),
        });
    };

    let quad = dom.surface_quadrature(VERIFY_QUADRATURE_NODES);

    match &problem.exact {
        Some(w) => {
            let pts = interior_sample(dom, 1000);
            let e = 1e-3 * dom.diameter();
            let mut scale: f64 = 1.0;
            let mut worst: f64 = 0.0;
            for x in &pts {
                let wx = w.eval(x);
                scale = scale.max(wx.abs());
                let mut lap = 0.0;
                let mut y = x.clone();
                for i in 0..d {
                    y[i] = x[i] + e;
                    let up = w.eval(&y);
                    y[i] = x[i] - e;
                    let down = w.eval(&y);
                    y[i] = x[i];
                    lap += (up - 2.0 * wx + down) / (e * e);
                }
                worst = worst.max(lap.abs());
            }
            push("harmonic", worst, 1e-6 * scale, "finite-difference Laplacian at 1000 interior points");

            let e = 1e-5 * dom.diameter();
            let mut worst: f64 = 0.0;
            for node in &quad.nodes {
                let p = &node.position;
                let inner: Vec<f64> = p.iter().zip(&node.inward_normal).map(|(a, n)| a + e * n).collect();
                let outer: Vec<f64> = p.iter().zip(&node.inward_normal).map(|(a, n)| a - e * n).collect();
                let dnu = (w.eval(&outer) - w.eval(&inner)) / (2.0 * e);
                worst = worst.max((dnu - problem.datum.eval(p, &node.inward_normal)).abs());
            }
            push("datum_is_normal_derivative", worst, 1e-9, "central difference along the normal at quadrature nodes");
        }
        None => {
            push("harmonic", 0.0, 0.0, "no exact solution; skipped");
            push("datum_is_normal_derivative", 0.0, 0.0, "no exact solution; skipped");
        }
    }

    let integral = quad.integrate(&problem.datum);
    push("compatibility", integral.abs(), 1e-9, "boundary integral of f");

    match (&problem.exact, problem.mean_zero) {
        (Some(w), true) => {
            let (mean, scale) = volume_mean(dom, w);
            push("volume_mean_zero", mean.abs(), 1e-6 * scale, "midpoint-grid volume mean of w");
        }
        (Some(w), false) => {
            let (mean, _) = volume_mean(dom, w);
            checks.push(CheckResult {
                name: "volume_mean_zero".into(),
                passed: true,
                residual: mean.abs(),
                tolerance: f64::INFINITY,
                note: "not claimed: problem is compared through differences only".into(),
            });
        }
        (None, _) => push("volume_mean_zero", 0.0, 0.0, "no exact solution; skipped"),
    }

    VerifyReport {
        problem: problem.name.clone(),
        checks,
    }
}

/// Deterministic rejection sample of interior points.
fn interior_sample(dom: &DomainGeometry, n: usize) -> Vec<Vec<f64>> {
    let (lo, hi) = dom.bounding_box();
    let mut s = derive_stream(SeedSpec::new(0x5eed, 0));
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| a + (b - a) * s.uniform()).collect();
        if dom.signed_distance(&x).unwrap_or(-1.0) > 0.0 {
            out.push(x);
        }
    }
    out
}

/// Volume mean of `w` by the midpoint rule on a grid over the bounding box,
/// and the largest |w| seen.
fn volume_mean(dom: &DomainGeometry, w: &Polynomial) -> (f64, f64) {
    let d = dom.dimension();
    let (lo, hi) = dom.bounding_box();
    let m = match d {
        1 => 100_000,
        2 => 400,
        3 => 60,
        4 => 24,
        _ => ((250_000f64).powf(1.0 / d as f64).floor() as usize).max(2),
    };
    let total = m.pow(d as u32);
    let mut x = vec![0.0; d];
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut scale: f64 = 1.0;
    for idx in 0..total {
        let mut rest = idx;
        for i in 0..d {
            let k = rest % m;
            rest /= m;
            x[i] = lo[i] + (k as f64 + 0.5) * (hi[i] - lo[i]) / m as f64;
        }
        if dom.contains(&x).unwrap_or(false) {
            let v = w.eval(&x);
            scale = scale.max(v.abs());
            sum += v;
            count += 1;
        }
    }
    (sum / count.max(1) as f64, scale)
}

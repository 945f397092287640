//! Bounded Lipschitz domains and the geometric queries the walk relies on.
//!
//! Three domain kinds are built in: axis-aligned hyperrectangles, balls and a
//! planar L-shape (a square with one corner quadrant removed). Every query is a
//! pure function of an immutable [`DomainGeometry`], so a single domain can be
//! shared freely between worker threads.
//!
//! Conventions:
//! - the domain is the closed set Ō; points on the boundary are contained;
//! - boundary comparisons use an absolute tolerance of `1e-12 * diameter`;
//! - projection ties (corners, the L-shape re-entrant corner) go to the face
//!   with the lowest axis index, then to the lower-coordinate face.

use std::f64::consts::PI;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};

/// Largest dimension for which the boundary zone is decided by exact corner
/// enumeration. Above it the conservative distance test is used.
pub const EXACT_ZONE_MAX_DIM: usize = 12;

const RELATIVE_TOLERANCE: f64 = 1e-12;

/// A point of R^d with finite coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return usage("a point needs at least one coordinate");
        }
        if let Some(c) = coords.iter().find(|c| !c.is_finite()) {
            return usage(format!("point coordinate {c} is not finite"));
        }
        Ok(Point(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Point {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = Error;

    fn try_from(coords: Vec<f64>) -> Result<Self> {
        Point::new(coords)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Vec<f64> {
        p.0
    }
}

/// A boundary point y^π together with the unit inward normal η(y^π).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub position: Point,
    pub inward_normal: Vec<f64>,
}

/// A real function on ∂O. The inward normal of the evaluation point is passed
/// along so that data defined face by face (normal derivatives) can be
/// evaluated without a second projection.
pub trait BoundaryFunction: Sync {
    fn eval(&self, position: &[f64], inward_normal: &[f64]) -> f64;
}

impl<F> BoundaryFunction for F
where
    F: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    fn eval(&self, position: &[f64], inward_normal: &[f64]) -> f64 {
        self(position, inward_normal)
    }
}

/// Which corner quadrant of the outer square an L-shape is missing, relative
/// to its notch point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrant {
    LowerLeft,
    LowerRight,
    UpperLeft,
    UpperRight,
}

impl Quadrant {
    fn flips(self) -> (bool, bool) {
        match self {
            Quadrant::UpperRight => (false, false),
            Quadrant::UpperLeft => (true, false),
            Quadrant::LowerRight => (false, true),
            Quadrant::LowerLeft => (true, true),
        }
    }
}

/// Parameters of a built-in domain. This is also the `domain` table of the
/// run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainKind {
    Hyperrectangle {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    /// `[0, side]^2` with the quadrant beyond `notch` removed; `notch` is the
    /// re-entrant corner and lies strictly inside the square.
    #[serde(rename = "lshape2d")]
    LShape2d {
        side: f64,
        notch: [f64; 2],
        quadrant: Quadrant,
    },
}

/// An immutable bounded Lipschitz domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainKind", into = "DomainKind")]
pub struct DomainGeometry {
    kind: DomainKind,
    dimension: usize,
    diameter: f64,
    tol: f64,
}

impl TryFrom<DomainKind> for DomainGeometry {
    type Error = Error;

    fn try_from(kind: DomainKind) -> Result<Self> {
        DomainGeometry::new(kind)
    }
}

impl From<DomainGeometry> for DomainKind {
    fn from(d: DomainGeometry) -> DomainKind {
        d.kind
    }
}

/// Nodes and weights approximating the surface measure σ on ∂O.
#[derive(Clone, Debug)]
pub struct SurfaceQuadrature {
    pub nodes: Vec<BoundaryPoint>,
    pub weights: Vec<f64>,
}

impl SurfaceQuadrature {
    pub fn integrate<G: BoundaryFunction + ?Sized>(&self, g: &G) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(n, w)| w * g.eval(&n.position, &n.inward_normal))
            .sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

impl DomainGeometry {
    pub fn new(kind: DomainKind) -> Result<Self> {
        let (dimension, diameter) = match &kind {
            DomainKind::Hyperrectangle { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return usage("hyperrectangle needs lo and hi of equal, nonzero length");
                }
                for (i, (a, b)) in lo.iter().zip(hi).enumerate() {
                    if !(a.is_finite() && b.is_finite() && a < b) {
                        return usage(format!("hyperrectangle axis {i}: need lo < hi, got {a} and {b}"));
                    }
                }
                let diam = lo.iter().zip(hi).map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt();
                (lo.len(), diam)
            }
            DomainKind::Ball { center, radius } => {
                if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
                    return usage("ball center must be a nonempty finite point");
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return usage(format!("ball radius must be positive, got {radius}"));
                }
                (center.len(), 2.0 * radius)
            }
            DomainKind::LShape2d { side, notch, .. } => {
                if !(side.is_finite() && *side > 0.0) {
                    return usage(format!("L-shape side must be positive, got {side}"));
                }
                if notch.iter().any(|c| !(*c > 0.0 && *c < *side)) {
                    return usage(format!(
                        "L-shape notch {notch:?} must lie strictly inside [0, {side}]^2"
                    ));
                }
                (2, side * std::f64::consts::SQRT_2)
            }
        };
        Ok(DomainGeometry {
            kind,
            dimension,
            diameter,
            tol: RELATIVE_TOLERANCE * diameter,
        })
    }

    pub fn unit_cube(d: usize) -> Self {
        Self::new(DomainKind::Hyperrectangle {
            lo: vec![0.0; d],
            hi: vec![1.0; d],
        })
        .expect("unit cube is valid")
    }

    pub fn unit_ball(d: usize) -> Self {
        Self::new(DomainKind::Ball {
            center: vec![0.0; d],
            radius: 1.0,
        })
        .expect("unit ball is valid")
    }

    pub fn hyperrectangle(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        Self::new(DomainKind::Hyperrectangle { lo, hi })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        Self::new(DomainKind::Ball { center, radius })
    }

    pub fn lshape(side: f64, notch: [f64; 2], quadrant: Quadrant) -> Result<Self> {
        Self::new(DomainKind::LShape2d { side, notch, quadrant })
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Absolute tolerance used for every boundary comparison.
    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn check_dim(&self, y: &[f64]) -> Result<()> {
        if y.len() == self.dimension {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: y.len(),
            })
        }
    }

    /// Membership in the closed domain Ō.
    pub fn contains(&self, y: &[f64]) -> Result<bool> {
        self.check_dim(y)?;
        Ok(self.contains_unchecked(y))
    }

    #[inline]
    pub(crate) fn contains_unchecked(&self, y: &[f64]) -> bool {
        self.signed_distance_unchecked(y) >= -self.tol
    }

    /// Positive inside, zero on ∂O, negative outside; the magnitude is the
    /// Euclidean distance to ∂O.
    pub fn signed_distance(&self, y: &[f64]) -> Result<f64> {
        self.check_dim(y)?;
        Ok(self.signed_distance_unchecked(y))
    }

    #[inline]
    pub(crate) fn signed_distance_unchecked(&self, y: &[f64]) -> f64 {
        match &self.kind {
            DomainKind::Hyperrectangle { lo, hi } => box_signed_distance(lo, hi, y),
            DomainKind::Ball { center, radius } => radius - dist(y, center),
            DomainKind::LShape2d { side, notch, quadrant } => {
                let l = CanonicalL::new(*side, *notch, *quadrant);
                let (x, z) = l.to_canonical(y[0], y[1]);
                l.signed_distance(x, z)
            }
        }
    }

    /// Nearest boundary point y^π and the inward unit normal there.
    pub fn project_to_boundary(&self, y: &[f64]) -> Result<BoundaryPoint> {
        self.check_dim(y)?;
        if y.iter().any(|c| !c.is_finite()) {
            return usage("cannot project a non-finite point");
        }
        let mut pos = vec![0.0; self.dimension];
        let mut normal = vec![0.0; self.dimension];
        self.project_into(y, &mut pos, &mut normal);
        Ok(BoundaryPoint {
            position: Point(pos),
            inward_normal: normal,
        })
    }

    /// Writes y^π into `pos` and η(y^π) into `normal`; returns |y − y^π|.
    pub(crate) fn project_into(&self, y: &[f64], pos: &mut [f64], normal: &mut [f64]) -> f64 {
        match &self.kind {
            DomainKind::Hyperrectangle { lo, hi } => box_project(lo, hi, y, pos, normal),
            DomainKind::Ball { center, radius } => {
                let r = dist(y, center);
                normal.iter_mut().for_each(|n| *n = 0.0);
                if r == 0.0 {
                    // Every boundary point is nearest; take the lowest axis, lower side.
                    normal[0] = 1.0;
                } else {
                    for i in 0..y.len() {
                        normal[i] = (center[i] - y[i]) / r;
                    }
                }
                for i in 0..y.len() {
                    pos[i] = center[i] - radius * normal[i];
                }
                (r - radius).abs()
            }
            DomainKind::LShape2d { side, notch, quadrant } => {
                let l = CanonicalL::new(*side, *notch, *quadrant);
                let (x, z) = l.to_canonical(y[0], y[1]);
                let (p, n) = l.project(x, z);
                let (px, pz) = l.to_real(p[0], p[1]);
                pos[0] = px;
                pos[1] = pz;
                let (nx, nz) = l.normal_from_canonical(n[0], n[1]);
                normal[0] = nx;
                normal[1] = nz;
                ((y[0] - px).powi(2) + (y[1] - pz).powi(2)).sqrt()
            }
        }
    }

    /// Boundary-zone membership S_h: true when some lattice step
    /// y + √h·c, c ∈ {±1/2}^d, leaves Ō. Exact for d ≤ [`EXACT_ZONE_MAX_DIM`],
    /// the conservative distance test above it.
    pub fn in_boundary_zone(&self, y: &[f64], h: f64) -> Result<bool> {
        self.check_zone_args(y, h)?;
        Ok(self.in_zone_fast(y, 0.5 * h.sqrt()))
    }

    /// Exact zone test by brute-force enumeration of all 2^d step corners.
    pub fn zone_by_enumeration(&self, y: &[f64], h: f64) -> Result<bool> {
        self.check_zone_args(y, h)?;
        if self.dimension > 30 {
            return usage("corner enumeration is limited to d <= 30");
        }
        let s = h.sqrt();
        let d = self.dimension;
        let mut corner = vec![0.0; d];
        for mask in 0u64..(1u64 << d) {
            for i in 0..d {
                let c = if mask >> i & 1 == 1 { 0.5 } else { -0.5 };
                corner[i] = y[i] + s * c;
            }
            if !self.contains_unchecked(&corner) {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Conservative zone test: signed distance below (√d/2)·√h. A superset of
    /// the exact zone.
    pub fn zone_conservative(&self, y: &[f64], h: f64) -> Result<bool> {
        self.check_zone_args(y, h)?;
        Ok(self.signed_distance_unchecked(y) < self.max_step_norm(h.sqrt()))
    }

    fn check_zone_args(&self, y: &[f64], h: f64) -> Result<()> {
        self.check_dim(y)?;
        if !(h > 0.0 && h.is_finite()) {
            return usage(format!("step h must be positive, got {h}"));
        }
        if !self.contains_unchecked(y) {
            return usage(format!("zone test needs a point of the closed domain, got {y:?}"));
        }
        Ok(())
    }

    fn max_step_norm(&self, sqrt_h: f64) -> f64 {
        0.5 * (self.dimension as f64).sqrt() * sqrt_h
    }

    /// Hot-path zone test. `half` is √h/2. Equivalent to corner enumeration
    /// for d ≤ [`EXACT_ZONE_MAX_DIM`].
    #[inline]
    pub(crate) fn in_zone_fast(&self, y: &[f64], half: f64) -> bool {
        if self.dimension > EXACT_ZONE_MAX_DIM {
            return self.signed_distance_unchecked(y) < (self.dimension as f64).sqrt() * half;
        }
        match &self.kind {
            DomainKind::Hyperrectangle { lo, hi } => {
                // The worst corner pushes every axis towards its nearer face.
                let mut sq = 0.0;
                for i in 0..y.len() {
                    let below = lo[i] - (y[i] - half);
                    let above = (y[i] + half) - hi[i];
                    let e = below.max(above).max(0.0);
                    sq += e * e;
                }
                if sq == 0.0 {
                    false
                } else {
                    sq.sqrt() > self.tol
                }
            }
            DomainKind::Ball { center, radius } => {
                // The farthest corner from the center.
                let mut sq = 0.0;
                for i in 0..y.len() {
                    let c = if y[i] >= center[i] { y[i] + half } else { y[i] - half };
                    sq += (c - center[i]) * (c - center[i]);
                }
                radius - sq.sqrt() < -self.tol
            }
            DomainKind::LShape2d { .. } => {
                for (dx, dy) in [(-half, -half), (half, -half), (-half, half), (half, half)] {
                    if !self.contains_unchecked(&[y[0] + dx, y[1] + dy]) {
                        return true;
                    }
                }
                false
            }
        }
    }

    /// Half the narrowest width of the domain. The layer width λ√h must stay
    /// below it for a deflected point to clear the boundary zone.
    pub fn min_feature_size(&self) -> f64 {
        match &self.kind {
            DomainKind::Hyperrectangle { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(a, b)| 0.5 * (b - a))
                .fold(f64::INFINITY, f64::min),
            DomainKind::Ball { radius, .. } => *radius,
            DomainKind::LShape2d { side, notch, .. } => {
                let m = notch[0].min(notch[1]).min(side - notch[0]).min(side - notch[1]);
                0.5 * m
            }
        }
    }

    /// Closed-form surface measure |∂O| (counting measure when d = 1).
    pub fn surface_measure(&self) -> f64 {
        match &self.kind {
            DomainKind::Hyperrectangle { lo, hi } => {
                let d = lo.len();
                if d == 1 {
                    return 2.0;
                }
                (0..d)
                    .map(|i| {
                        2.0 * (0..d)
                            .filter(|&j| j != i)
                            .map(|j| hi[j] - lo[j])
                            .product::<f64>()
                    })
                    .sum()
            }
            DomainKind::Ball { center, radius } => {
                let d = center.len();
                if d == 1 {
                    return 2.0;
                }
                sphere_area(d) * radius.powi(d as i32 - 1)
            }
            DomainKind::LShape2d { side, .. } => 4.0 * side,
        }
    }

    pub fn volume(&self) -> f64 {
        match &self.kind {
            DomainKind::Hyperrectangle { lo, hi } => lo.iter().zip(hi).map(|(a, b)| b - a).product(),
            DomainKind::Ball { center, radius } => {
                let d = center.len();
                sphere_area(d) / d as f64 * radius.powi(d as i32)
            }
            DomainKind::LShape2d { side, notch, quadrant } => {
                let l = CanonicalL::new(*side, *notch, *quadrant);
                side * side - (side - l.cx) * (side - l.cz)
            }
        }
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.kind {
            DomainKind::Hyperrectangle { lo, hi } => (lo.clone(), hi.clone()),
            DomainKind::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            DomainKind::LShape2d { side, .. } => (vec![0.0, 0.0], vec![*side, *side]),
        }
    }

    /// Quadrature for σ with roughly `n_nodes` nodes: per-face tensor midpoint
    /// rule on boxes and L-shapes, equal weights on an antipodally symmetric
    /// low-discrepancy point set on balls.
    pub fn surface_quadrature(&self, n_nodes: usize) -> SurfaceQuadrature {
        let n_nodes = n_nodes.max(1);
        match &self.kind {
            DomainKind::Hyperrectangle { lo, hi } => box_quadrature(lo, hi, n_nodes),
            DomainKind::Ball { center, radius } => {
                ball_quadrature(center, *radius, n_nodes, self.surface_measure())
            }
            DomainKind::LShape2d { side, notch, quadrant } => {
                CanonicalL::new(*side, *notch, *quadrant).quadrature(n_nodes)
            }
        }
    }

    pub fn surface_integral<G: BoundaryFunction + ?Sized>(&self, g: &G, n_nodes: usize) -> f64 {
        self.surface_quadrature(n_nodes).integrate(g)
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Surface area of the unit sphere in R^d.
fn sphere_area(d: usize) -> f64 {
    2.0 * PI.powf(d as f64 / 2.0) / gamma_half(d)
}

/// Γ(d/2) for a positive integer d.
fn gamma_half(d: usize) -> f64 {
    let (mut g, mut x) = if d % 2 == 0 { (1.0, 1.0) } else { (PI.sqrt(), 0.5) };
    while x < d as f64 / 2.0 {
        g *= x;
        x += 1.0;
    }
    g
}

fn box_signed_distance(lo: &[f64], hi: &[f64], y: &[f64]) -> f64 {
    let mut inside = f64::INFINITY;
    let mut outside_sq = 0.0;
    for i in 0..y.len() {
        let below = lo[i] - y[i];
        let above = y[i] - hi[i];
        let e = below.max(above);
        if e > 0.0 {
            outside_sq += e * e;
        } else {
            inside = inside.min(-e);
        }
    }
    if outside_sq > 0.0 {
        -outside_sq.sqrt()
    } else {
        inside
    }
}

fn box_project(lo: &[f64], hi: &[f64], y: &[f64], pos: &mut [f64], normal: &mut [f64]) -> f64 {
    pos.copy_from_slice(y);
    normal.iter_mut().for_each(|n| *n = 0.0);
    let outside = (0..y.len()).any(|i| y[i] < lo[i] || y[i] > hi[i]);
    if outside {
        let mut axis = None;
        for i in 0..y.len() {
            if y[i] < lo[i] {
                pos[i] = lo[i];
                axis.get_or_insert((i, 1.0));
            } else if y[i] > hi[i] {
                pos[i] = hi[i];
                axis.get_or_insert((i, -1.0));
            }
        }
        let (i, s) = axis.expect("outside point has a clamped axis");
        normal[i] = s;
        return dist(y, pos);
    }
    let mut best = (f64::INFINITY, 0usize, false);
    for i in 0..y.len() {
        let d_lo = y[i] - lo[i];
        if d_lo < best.0 {
            best = (d_lo, i, false);
        }
        let d_hi = hi[i] - y[i];
        if d_hi < best.0 {
            best = (d_hi, i, true);
        }
    }
    let (d, i, upper) = best;
    if upper {
        pos[i] = hi[i];
        normal[i] = -1.0;
    } else {
        pos[i] = lo[i];
        normal[i] = 1.0;
    }
    d
}

fn box_quadrature(lo: &[f64], hi: &[f64], n_nodes: usize) -> SurfaceQuadrature {
    let d = lo.len();
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    if d == 1 {
        for (p, n) in [(lo[0], 1.0), (hi[0], -1.0)] {
            nodes.push(BoundaryPoint {
                position: Point(vec![p]),
                inward_normal: vec![n],
            });
            weights.push(1.0);
        }
        return SurfaceQuadrature { nodes, weights };
    }
    let per_face = (n_nodes as f64 / (2 * d) as f64).max(1.0);
    let m = per_face.powf(1.0 / (d - 1) as f64).round().max(1.0) as usize;
    for axis in 0..d {
        let others: Vec<usize> = (0..d).filter(|&j| j != axis).collect();
        let area: f64 = others.iter().map(|&j| hi[j] - lo[j]).product();
        let count = m.pow(others.len() as u32);
        let w = area / count as f64;
        for (face, sign) in [(lo[axis], 1.0), (hi[axis], -1.0)] {
            for idx in 0..count {
                let mut p = vec![0.0; d];
                p[axis] = face;
                let mut rest = idx;
                for &j in &others {
                    let k = rest % m;
                    rest /= m;
                    p[j] = lo[j] + (k as f64 + 0.5) * (hi[j] - lo[j]) / m as f64;
                }
                let mut normal = vec![0.0; d];
                normal[axis] = sign;
                nodes.push(BoundaryPoint {
                    position: Point(p),
                    inward_normal: normal,
                });
                weights.push(w);
            }
        }
    }
    SurfaceQuadrature { nodes, weights }
}

fn ball_quadrature(center: &[f64], radius: f64, n_nodes: usize, area: f64) -> SurfaceQuadrature {
    let d = center.len();
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    match d {
        1 => {
            dirs.push(vec![-1.0]);
            dirs.push(vec![1.0]);
        }
        2 => {
            // Offset equispaced angles: a rank-1 lattice on the circle. An even
            // count makes the set antipodally symmetric.
            let n = n_nodes.max(2) + n_nodes % 2;
            for j in 0..n {
                let t = 2.0 * PI * (j as f64 + 0.5) / n as f64;
                dirs.push(vec![t.cos(), t.sin()]);
            }
        }
        _ => {
            // Radially projected Halton points of the unit ball, plus antipodes.
            let half = n_nodes.div_ceil(2).max(1);
            let primes = first_primes(d);
            let mut k = 1u64;
            while dirs.len() < 2 * half {
                let v: Vec<f64> = primes.iter().map(|&b| 2.0 * radical_inverse(k, b) - 1.0).collect();
                k += 1;
                let r = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                if r <= 1.0 && r > 0.1 {
                    let u: Vec<f64> = v.iter().map(|c| c / r).collect();
                    dirs.push(u.iter().map(|c| -c).collect());
                    dirs.push(u);
                }
            }
        }
    }
    let w = area / dirs.len() as f64;
    let weights = vec![w; dirs.len()];
    let nodes = dirs
        .into_iter()
        .map(|u| BoundaryPoint {
            position: Point(center.iter().zip(&u).map(|(c, e)| c + radius * e).collect()),
            inward_normal: u.iter().map(|e| -e).collect(),
        })
        .collect();
    SurfaceQuadrature { nodes, weights }
}

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut x = 0.0;
    while k > 0 {
        x += (k % base) as f64 * inv;
        k /= base;
        inv /= base as f64;
    }
    x
}

fn first_primes(n: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(n);
    let mut c = 2u64;
    while primes.len() < n {
        if primes.iter().all(|p| c % p != 0) {
            primes.push(c);
        }
        c += 1;
    }
    primes
}

/// An L-shape mapped by axis reflections so that the removed quadrant is
/// `{x > cx, z > cz}`. In that frame L = R1 ∪ R2 with R1 = [0,cx]×[0,side]
/// and R2 = [0,side]×[0,cz].
struct CanonicalL {
    side: f64,
    cx: f64,
    cz: f64,
    flip_x: bool,
    flip_z: bool,
}

impl CanonicalL {
    fn new(side: f64, notch: [f64; 2], quadrant: Quadrant) -> Self {
        let (flip_x, flip_z) = quadrant.flips();
        CanonicalL {
            side,
            cx: if flip_x { side - notch[0] } else { notch[0] },
            cz: if flip_z { side - notch[1] } else { notch[1] },
            flip_x,
            flip_z,
        }
    }

    fn to_canonical(&self, x: f64, z: f64) -> (f64, f64) {
        (
            if self.flip_x { self.side - x } else { x },
            if self.flip_z { self.side - z } else { z },
        )
    }

    fn to_real(&self, x: f64, z: f64) -> (f64, f64) {
        self.to_canonical(x, z)
    }

    fn normal_from_canonical(&self, nx: f64, nz: f64) -> (f64, f64) {
        (
            if self.flip_x { -nx } else { nx },
            if self.flip_z { -nz } else { nz },
        )
    }

    fn rect_dist(x: f64, z: f64, hx: f64, hz: f64) -> f64 {
        let ex = (-x).max(x - hx).max(0.0);
        let ez = (-z).max(z - hz).max(0.0);
        (ex * ex + ez * ez).sqrt()
    }

    fn inside(&self, x: f64, z: f64) -> bool {
        let s = self.side;
        (0.0..=s).contains(&x) && (0.0..=s).contains(&z) && !(x > self.cx && z > self.cz)
    }

    fn signed_distance(&self, x: f64, z: f64) -> f64 {
        let s = self.side;
        if self.inside(x, z) {
            let dq = ((self.cx - x).max(0.0).powi(2) + (self.cz - z).max(0.0).powi(2)).sqrt();
            x.min(z).min(s - x).min(s - z).min(dq)
        } else {
            let d1 = Self::rect_dist(x, z, self.cx, s);
            let d2 = Self::rect_dist(x, z, s, self.cz);
            -d1.min(d2)
        }
    }

    fn project(&self, x: f64, z: f64) -> ([f64; 2], [f64; 2]) {
        let s = self.side;
        if !self.inside(x, z) {
            let c1 = [x.clamp(0.0, self.cx), z.clamp(0.0, s)];
            let c2 = [x.clamp(0.0, s), z.clamp(0.0, self.cz)];
            let d1 = (x - c1[0]).hypot(z - c1[1]);
            let d2 = (x - c2[0]).hypot(z - c2[1]);
            let c = if d1 <= d2 { c1 } else { c2 };
            let n = if x < c[0] {
                [1.0, 0.0]
            } else if x > c[0] {
                [-1.0, 0.0]
            } else if z < c[1] {
                [0.0, 1.0]
            } else {
                [0.0, -1.0]
            };
            return (c, n);
        }
        // Candidate faces in tie-break order: axis 0 before axis 1, lower
        // coordinate first. The notch corner carries the axis-0 notch normal.
        let notch_x = if z >= self.cz || x < self.cx {
            // Nearest point of the removed quadrant is on x = cx (or its corner).
            let px = [self.cx, z.max(self.cz)];
            Some(((self.cx - x).hypot(z.max(self.cz) - z), px))
        } else {
            None
        };
        let notch_z = if x >= self.cx && z <= self.cz {
            Some((self.cz - z, [x, self.cz]))
        } else {
            None
        };
        let mut best: (f64, [f64; 2], [f64; 2]) = (x, [0.0, z], [1.0, 0.0]);
        let mut consider = |d: f64, p: [f64; 2], n: [f64; 2]| {
            if d < best.0 {
                best = (d, p, n);
            }
        };
        if let Some((d, p)) = notch_x {
            // Off the notch edge the nearest point is the corner itself, and
            // the proximal direction y - c is the normal.
            let n = if z < self.cz && d > 0.0 {
                [(x - self.cx) / d, (z - self.cz) / d]
            } else {
                [-1.0, 0.0]
            };
            consider(d, p, n);
        }
        if z <= self.cz {
            consider(s - x, [s, z], [-1.0, 0.0]);
        }
        consider(z, [x, 0.0], [0.0, 1.0]);
        if let Some((d, p)) = notch_z {
            consider(d, p, [0.0, -1.0]);
        }
        if x <= self.cx {
            consider(s - z, [x, s], [0.0, -1.0]);
        }
        (best.1, best.2)
    }

    fn quadrature(&self, n_nodes: usize) -> SurfaceQuadrature {
        let s = self.side;
        // (start, end, inward normal) in the canonical frame
        let segments = [
            ([0.0, 0.0], [s, 0.0], [0.0, 1.0]),
            ([0.0, 0.0], [0.0, s], [1.0, 0.0]),
            ([0.0, s], [self.cx, s], [0.0, -1.0]),
            ([s, 0.0], [s, self.cz], [-1.0, 0.0]),
            ([self.cx, self.cz], [self.cx, s], [-1.0, 0.0]),
            ([self.cx, self.cz], [s, self.cz], [0.0, -1.0]),
        ];
        let perimeter = 4.0 * s;
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for (a, b, n) in segments {
            let len = (b[0] - a[0]).hypot(b[1] - a[1]);
            let m = ((n_nodes as f64 * len / perimeter).round() as usize).max(1);
            for k in 0..m {
                let t = (k as f64 + 0.5) / m as f64;
                let (px, pz) = self.to_real(a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]));
                let (nx, nz) = self.normal_from_canonical(n[0], n[1]);
                nodes.push(BoundaryPoint {
                    position: Point(vec![px, pz]),
                    inward_normal: vec![nx, nz],
                });
                weights.push(len / m as f64);
            }
        }
        SurfaceQuadrature { nodes, weights }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> DomainGeometry {
        DomainGeometry::unit_cube(2)
    }

    fn disk() -> DomainGeometry {
        DomainGeometry::unit_ball(2)
    }

    fn lshape() -> DomainGeometry {
        DomainGeometry::lshape(1.0, [0.5, 0.5], Quadrant::UpperRight).unwrap()
    }

    #[test]
    fn contains_closed_set() {
        assert!(square().contains(&[0.5, 0.5]).unwrap());
        assert!(square().contains(&[1.0, 0.3]).unwrap());
        assert!(!disk().contains(&[1.1, 0.0]).unwrap());
        assert!(!lshape().contains(&[0.75, 0.75]).unwrap());
        assert!(lshape().contains(&[0.5, 0.75]).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let err = square().contains(&[0.5]).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 2, found: 1 });
        assert!(square().signed_distance(&[0.1, 0.2, 0.3]).is_err());
    }

    #[test]
    fn signed_distance_examples() {
        assert_eq!(square().signed_distance(&[0.5, 0.5]).unwrap(), 0.5);
        assert_eq!(disk().signed_distance(&[0.25, 0.0]).unwrap(), 0.75);
        assert!((square().signed_distance(&[1.2, 0.5]).unwrap() + 0.2).abs() < 1e-15);
        // inside the notch of the L, distance to the nearer notch face
        assert!((lshape().signed_distance(&[0.6, 0.9]).unwrap() + 0.1).abs() < 1e-15);
        // near the re-entrant corner
        let d = lshape().signed_distance(&[0.4, 0.4]).unwrap();
        assert!((d - 0.1 * 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn projection_examples() {
        let p = square().project_to_boundary(&[0.9, 0.5]).unwrap();
        assert_eq!(p.position.coords(), &[1.0, 0.5]);
        assert_eq!(p.inward_normal, vec![-1.0, 0.0]);

        let p = disk().project_to_boundary(&[0.5, 0.0]).unwrap();
        assert_eq!(p.position.coords(), &[1.0, 0.0]);
        assert_eq!(p.inward_normal, vec![-1.0, 0.0]);

        // equal distances 0.05 to x = 1 and y = 1: lowest axis wins
        let p = square().project_to_boundary(&[0.95, 0.95]).unwrap();
        assert_eq!(p.position.coords(), &[1.0, 0.95]);
        assert_eq!(p.inward_normal, vec![-1.0, 0.0]);

        // center of the square: x = 0 face first
        let p = square().project_to_boundary(&[0.5, 0.5]).unwrap();
        assert_eq!(p.position.coords(), &[0.0, 0.5]);
        assert_eq!(p.inward_normal, vec![1.0, 0.0]);
    }

    #[test]
    fn lshape_reentrant_corner_normals() {
        let p = lshape().project_to_boundary(&[0.5, 0.5]).unwrap();
        assert_eq!(p.position.coords(), &[0.5, 0.5]);
        assert_eq!(p.inward_normal, vec![-1.0, 0.0]);
        // points in the corner's wedge sit on the ray c + r·η
        let y = [0.45, 0.47];
        let p = lshape().project_to_boundary(&y).unwrap();
        assert_eq!(p.position.coords(), &[0.5, 0.5]);
        let r = 0.05f64.hypot(0.03);
        for i in 0..2 {
            assert!((p.position[i] + r * p.inward_normal[i] - y[i]).abs() < 1e-15);
        }
        let p = lshape().project_to_boundary(&[0.45, 0.8]).unwrap();
        assert_eq!(p.position.coords(), &[0.5, 0.8]);
        assert_eq!(p.inward_normal, vec![-1.0, 0.0]);
        let p = lshape().project_to_boundary(&[0.8, 0.47]).unwrap();
        assert_eq!(p.position.coords(), &[0.8, 0.5]);
        assert_eq!(p.inward_normal, vec![0.0, -1.0]);
    }

    #[test]
    fn lshape_quadrants_are_reflections() {
        let ll = DomainGeometry::lshape(1.0, [0.5, 0.5], Quadrant::LowerLeft).unwrap();
        assert!(!ll.contains(&[0.25, 0.25]).unwrap());
        assert!(ll.contains(&[0.75, 0.25]).unwrap());
        let p = ll.project_to_boundary(&[0.55, 0.2]).unwrap();
        assert_eq!(p.position[0], 0.5);
        assert!((p.position[1] - 0.2).abs() < 1e-15);
        assert_eq!(p.inward_normal, vec![1.0, 0.0]);
        assert!((ll.volume() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn lshape_points_on_the_notch_edges_project_to_themselves() {
        for q in [Quadrant::LowerLeft, Quadrant::LowerRight, Quadrant::UpperLeft, Quadrant::UpperRight] {
            let l = DomainGeometry::lshape(1.0, [0.5, 0.5], q).unwrap();
            for t in [0.07, 0.34, 0.66, 0.93] {
                for y in [[0.5, t], [t, 0.5]] {
                    if !l.contains(&y).unwrap() || l.signed_distance(&y).unwrap() != 0.0 {
                        continue;
                    }
                    let p = l.project_to_boundary(&y).unwrap();
                    assert!((p.position[0] - y[0]).abs() < 1e-15 && (p.position[1] - y[1]).abs() < 1e-15);
                    let off: Vec<f64> = y.iter().zip(&p.inward_normal).map(|(a, n)| a + 1e-3 * n).collect();
                    assert!(l.signed_distance(&off).unwrap() > 0.0, "{q:?} {y:?} {:?}", p.inward_normal);
                }
            }
        }
    }

    #[test]
    fn zone_examples() {
        let sq = square();
        assert!(sq.in_boundary_zone(&[0.05, 0.5], 0.04).unwrap());
        assert!(!sq.in_boundary_zone(&[0.5, 0.5], 0.04).unwrap());
        // distance exactly (√d/2)√h: corners land on the closed boundary
        let h: f64 = 0.01;
        let y = [0.5 * 2f64.sqrt() * h.sqrt(), 0.5];
        assert!(!sq.in_boundary_zone(&y, h).unwrap());
        assert!(sq.in_boundary_zone(&[1.3, 0.5], 0.04).is_err());
        assert!(sq.in_boundary_zone(&[0.5, 0.5], 0.0).is_err());
    }

    #[test]
    fn surface_integral_examples() {
        let sq = square();
        for n in [4, 16, 100, 1000] {
            assert!((sq.surface_integral(&|_: &[f64], _: &[f64]| 1.0, n) - 4.0).abs() < 1e-12);
        }
        let saddle = |p: &[f64], _: &[f64]| {
            if p[0] == 1.0 {
                2.0
            } else if p[1] == 1.0 {
                -2.0
            } else {
                0.0
            }
        };
        assert!(sq.surface_integral(&saddle, 400).abs() < 1e-12);
        let cos = |p: &[f64], _: &[f64]| p[0];
        assert!(disk().surface_integral(&cos, 256).abs() < 1e-12);
    }

    #[test]
    fn quadrature_total_weight_matches_closed_form() {
        for dom in [
            square(),
            disk(),
            DomainGeometry::unit_cube(3),
            DomainGeometry::unit_cube(5),
            DomainGeometry::hyperrectangle(vec![-1.0, 0.0, 2.0], vec![1.0, 0.5, 3.0]).unwrap(),
            DomainGeometry::unit_ball(3),
            DomainGeometry::ball(vec![0.0; 4], 2.0).unwrap(),
            lshape(),
        ] {
            let q = dom.surface_quadrature(2000);
            let rel = (q.total_weight() - dom.surface_measure()).abs() / dom.surface_measure();
            assert!(rel < 1e-9, "{:?}: {rel}", dom.kind());
            assert!(q.weights.iter().all(|w| *w > 0.0));
        }
        assert!((DomainGeometry::unit_ball(3).surface_measure() - 4.0 * PI).abs() < 1e-12);
        assert!((DomainGeometry::unit_ball(3).volume() - 4.0 / 3.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn sphere_quadrature_cancels_odd_functions() {
        let ball = DomainGeometry::unit_ball(3);
        let v = ball.surface_integral(&|p: &[f64], _: &[f64]| p[0] + 2.0 * p[2], 1000);
        assert!(v.abs() < 1e-12);
        // ∫ x² dσ over S² = 4π/3
        let v = ball.surface_integral(&|p: &[f64], _: &[f64]| p[0] * p[0], 20000);
        assert!((v - 4.0 * PI / 3.0).abs() < 2e-2);
    }

    #[test]
    fn disk_quadrature_refines() {
        let g = |p: &[f64], _: &[f64]| p[0] * p[0];
        let disk = disk();
        let mut prev = f64::INFINITY;
        let mut n = 16;
        while n <= 4096 {
            let err = (disk.surface_integral(&g, n) - PI).abs();
            assert!(err <= prev.max(1e-13), "n = {n}: {err} after {prev}");
            prev = err;
            n *= 2;
        }
    }

    #[test]
    fn quadrature_nodes_lie_on_boundary() {
        for dom in [square(), disk(), lshape(), DomainGeometry::unit_ball(4)] {
            let q = dom.surface_quadrature(500);
            for node in &q.nodes {
                let sd = dom.signed_distance(&node.position).unwrap();
                assert!(sd.abs() < 1e-12, "{:?}", node.position);
                let n2: f64 = node.inward_normal.iter().map(|c| c * c).sum();
                assert!((n2 - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn feature_sizes() {
        assert_eq!(square().min_feature_size(), 0.5);
        assert_eq!(disk().min_feature_size(), 1.0);
        assert_eq!(lshape().min_feature_size(), 0.25);
    }
}

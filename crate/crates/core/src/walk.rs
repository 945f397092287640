//! The boundary-layer Markov chain.
//!
//! Away from ∂O the chain moves by lattice steps `y + √h·ξ`, ξ ∈ {±1/2}^d.
//! A proposed point inside the boundary zone S_h is resolved before it is
//! accepted: with probability
//!
//! ```text
//! p = λ√h / |y + λ√h·η(y^π) − y^π|
//! ```
//!
//! it lands on its projection y^π, otherwise it is pushed to
//! `y + λ√h·η(y^π)`. For `y = y^π + r·η` this is the two-point law with mean
//! exactly `y`.
//!
//! In [`WalkMode::Absorbing`] a landing stops the chain (step κ). In
//! [`WalkMode::Reflecting`] a landing adds `λ√h·f(y^π)` to the score, counts
//! one unit of discrete local time and re-enters at `y^π + λ√h·η(y^π)`.
//!
//! A single resolution may leave the point inside S_h when it sits near two
//! faces at once (box corners). The chain then resolves again against the
//! next nearest face until it clears the zone; each stage is mean-preserving
//! on its own.

use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};
use crate::geometry::{BoundaryFunction, BoundaryPoint, DomainGeometry, Point};
use crate::random::Stream;

/// Margin added to √d/2 in the default layer constant, in units of √h.
pub const LAMBDA_MARGIN: f64 = 1e-9;

/// Default hard cap on absorbing walks.
pub const ABSORBING_MAX_STEPS: u64 = 10_000_000;

/// Smallest admissible λ: the largest step displacement is (√d/2)·√h.
pub fn minimal_lambda(d: usize) -> f64 {
    0.5 * (d as f64).sqrt()
}

pub fn default_lambda(d: usize) -> f64 {
    minimal_lambda(d) + LAMBDA_MARGIN
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WalkMode {
    Absorbing,
    Reflecting,
}

/// Where a zone point goes when it does not land on the boundary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeflectionRule {
    /// `y + λ√h·η(y^π)`; mean-preserving with the landing probability.
    #[default]
    FromPoint,
    /// `y^π + λ√h·η(y^π)`. Kept for comparison studies only; it is not
    /// mean-preserving.
    FromProjection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkParams {
    pub h: f64,
    pub lambda: f64,
    pub mode: WalkMode,
    pub max_steps: u64,
    /// Time horizon T of a reflecting walk; it runs `ceil(T / h)` steps.
    pub horizon: f64,
    #[serde(default)]
    pub deflection: DeflectionRule,
}

impl WalkParams {
    pub fn absorbing(h: f64, d: usize) -> Self {
        WalkParams {
            h,
            lambda: default_lambda(d),
            mode: WalkMode::Absorbing,
            max_steps: ABSORBING_MAX_STEPS,
            horizon: f64::INFINITY,
            deflection: DeflectionRule::FromPoint,
        }
    }

    pub fn reflecting(h: f64, horizon: f64, d: usize) -> Self {
        let mut p = WalkParams {
            h,
            lambda: default_lambda(d),
            mode: WalkMode::Reflecting,
            max_steps: 0,
            horizon,
            deflection: DeflectionRule::FromPoint,
        };
        p.max_steps = p.n_steps().saturating_mul(10).max(1);
        p
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_max_steps(mut self, max_steps: u64) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn with_deflection(mut self, rule: DeflectionRule) -> Self {
        self.deflection = rule;
        self
    }

    /// Number of steps of a reflecting walk, `ceil(T / h)`.
    pub fn n_steps(&self) -> u64 {
        let n = (self.horizon / self.h).ceil();
        if n.is_finite() && n >= 0.0 {
            // guard against 20.000000000000004 style rounding of T/h
            let r = (self.horizon / self.h).round();
            if (self.horizon / self.h - r).abs() < 1e-9 * r.max(1.0) {
                return r as u64;
            }
            n as u64
        } else {
            u64::MAX
        }
    }

    /// λ√h, the re-entry distance.
    pub fn layer_width(&self) -> f64 {
        self.lambda * self.h.sqrt()
    }

    pub fn validate(&self, domain: &DomainGeometry) -> Result<()> {
        let d = domain.dimension();
        if !(self.h > 0.0 && self.h.is_finite()) {
            return usage(format!("step h must be positive and finite, got {}", self.h));
        }
        if !(self.lambda.is_finite() && self.lambda >= minimal_lambda(d) * (1.0 - 1e-12)) {
            return usage(format!(
                "lambda = {} is below the minimal value sqrt(d)/2 = {} for d = {d}",
                self.lambda,
                minimal_lambda(d)
            ));
        }
        if self.layer_width() >= domain.min_feature_size() {
            return usage(format!(
                "layer width lambda*sqrt(h) = {} must be below the domain feature size {}",
                self.layer_width(),
                domain.min_feature_size()
            ));
        }
        if self.max_steps == 0 {
            return usage("max_steps must be positive");
        }
        if self.mode == WalkMode::Reflecting && !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return usage(format!("reflecting walks need a finite positive horizon, got {}", self.horizon));
        }
        Ok(())
    }

    /// Non-fatal remarks about the parameters.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        let n = 1.0 / self.h;
        if (n - n.round()).abs() > 1e-9 * n {
            w.push(format!("1/h = {n} is not an integer"));
        }
        if self.mode == WalkMode::Reflecting && self.max_steps < self.n_steps() {
            w.push(format!(
                "max_steps = {} is below ceil(T/h) = {}; every trajectory will be censored",
                self.max_steps,
                self.n_steps()
            ));
        }
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WalkStatus {
    Running,
    Absorbed,
    HorizonReached,
    Censored,
}

/// The evolving chain.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkState {
    pub position: Vec<f64>,
    pub k: u64,
    pub score: f64,
    pub boundary_hits: u64,
    pub status: WalkStatus,
}

impl WalkState {
    /// λ√h times the number of boundary landings.
    pub fn discrete_local_time(&self, params: &WalkParams) -> f64 {
        params.layer_width() * self.boundary_hits as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryOutcome {
    pub mode: WalkMode,
    /// Y_κ (absorbing walks that were not censored).
    pub exit_point: Option<BoundaryPoint>,
    pub kappa: Option<u64>,
    pub score: f64,
    pub boundary_hits: u64,
    pub steps_taken: u64,
    pub censored: bool,
    /// Score at the start of the last tenth of a reflecting walk.
    pub tail_start_score: f64,
    /// Landings during the first half of a reflecting walk.
    pub hits_first_half: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepEvent {
    /// Y'_k, the proposed point, before zone resolution.
    Proposed,
    /// Landing on y^π in a reflecting walk (score already updated).
    BoundaryHit,
    /// Re-entry at y^π + λ√h·η after a landing.
    Reentered,
    Deflected,
    Absorbed,
    /// Y_k, the accepted state at the end of step k.
    Settled,
}

/// What an observer sees at each event of a walk.
#[derive(Clone, Copy, Debug)]
pub struct StepRecord<'a> {
    pub k: u64,
    pub position: &'a [f64],
    pub in_zone: bool,
    pub event: StepEvent,
    pub score: f64,
    pub boundary_hits: u64,
}

pub trait WalkObserver {
    fn observe(&mut self, record: &StepRecord<'_>);
}

/// Observer that ignores everything.
pub struct NoObserver;

impl WalkObserver for NoObserver {
    #[inline(always)]
    fn observe(&mut self, _: &StepRecord<'_>) {}
}

impl<F: FnMut(&StepRecord<'_>)> WalkObserver for F {
    fn observe(&mut self, record: &StepRecord<'_>) {
        self(record)
    }
}

/// `y + √h·ξ`.
pub fn interior_step(y: &[f64], xi: &[f64], h: f64) -> Result<Point> {
    if y.len() != xi.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            found: xi.len(),
        });
    }
    let s = h.sqrt();
    Point::new(y.iter().zip(xi).map(|(a, b)| a + s * b).collect())
}

/// Landing probability `λ√h / |y + λ√h·η(y^π) − y^π|`.
pub fn jump_probability(y: &[f64], ypi: &BoundaryPoint, h: f64, lambda: f64) -> Result<f64> {
    if y.len() != ypi.position.dim() || y.len() != ypi.inward_normal.len() {
        return Err(Error::DimensionMismatch {
            expected: ypi.position.dim(),
            found: y.len(),
        });
    }
    let layer = lambda * h.sqrt();
    let denom = landing_denominator(y, &ypi.position, &ypi.inward_normal, layer);
    if !(denom >= 1e-300) {
        return Err(Error::GeometryInconsistency {
            point: y.to_vec(),
            reason: format!("jump probability denominator {denom} is degenerate"),
        });
    }
    Ok((layer / denom).min(1.0))
}

#[inline]
fn landing_denominator(y: &[f64], ypi: &[f64], eta: &[f64], layer: f64) -> f64 {
    let mut sq = 0.0;
    for i in 0..y.len() {
        let c = y[i] + layer * eta[i] - ypi[i];
        sq += c * c;
    }
    sq.sqrt()
}

/// Result of resolving a zone point.
#[derive(Clone, Debug, PartialEq)]
pub enum Resolution {
    ToBoundary(BoundaryPoint),
    Deflected(Point),
}

/// One resolution stage: land on y^π with the jump probability, otherwise
/// deflect to `y + λ√h·η(y^π)`.
///
/// `y` must lie in S_h (or on ∂O). The deflected point may still be in S_h
/// when `y` is close to two faces; see [`resolve_boundary_zone`].
pub fn boundary_resolution(
    y: &[f64],
    h: f64,
    lambda: f64,
    domain: &DomainGeometry,
    stream: &mut Stream,
) -> Result<Resolution> {
    if !domain.in_boundary_zone(y, h)? {
        return usage(format!("{y:?} is not in the boundary zone for h = {h}"));
    }
    let ypi = domain.project_to_boundary(y)?;
    let p = jump_probability(y, &ypi, h, lambda)?;
    if stream.bernoulli(p)? {
        return Ok(Resolution::ToBoundary(ypi));
    }
    let layer = lambda * h.sqrt();
    let z: Vec<f64> = y.iter().zip(&ypi.inward_normal).map(|(a, n)| a + layer * n).collect();
    if !domain.contains_unchecked(&z) {
        return Err(Error::GeometryInconsistency {
            point: y.to_vec(),
            reason: format!("deflected point {z:?} left the domain"),
        });
    }
    Ok(Resolution::Deflected(Point::new(z)?))
}

/// Resolve a zone point the way the walk does: repeat single stages until the
/// point clears S_h or lands on ∂O (absorbing semantics, first landing wins).
pub fn resolve_boundary_zone(
    y: &[f64],
    params: &WalkParams,
    domain: &DomainGeometry,
    stream: &mut Stream,
) -> Result<Resolution> {
    domain.check_dim(y)?;
    if !domain.contains_unchecked(y) {
        return usage(format!("{y:?} is outside the domain"));
    }
    let absorbing = WalkParams {
        mode: WalkMode::Absorbing,
        ..params.clone()
    };
    let mut walker = Walker::new(domain, &absorbing, stream, NoObserver, y);
    match walker.settle(0, &|_: &[f64], _: &[f64]| 0.0)? {
        Some(bp) => Ok(Resolution::ToBoundary(bp)),
        None => Ok(Resolution::Deflected(Point::new(walker.state.position)?)),
    }
}

/// Absorbing walk: stops at the first boundary landing.
pub fn run_absorbing(
    x0: &[f64],
    params: &WalkParams,
    domain: &DomainGeometry,
    stream: &mut Stream,
) -> Result<TrajectoryOutcome> {
    run_absorbing_observed(x0, params, domain, stream, NoObserver)
}

pub fn run_absorbing_observed<O: WalkObserver>(
    x0: &[f64],
    params: &WalkParams,
    domain: &DomainGeometry,
    stream: &mut Stream,
    observer: O,
) -> Result<TrajectoryOutcome> {
    if params.mode != WalkMode::Absorbing {
        return usage("run_absorbing needs WalkMode::Absorbing");
    }
    check_start(x0, domain)?;
    let mut w = Walker::new(domain, params, stream, observer, x0);
    let no_datum = |_: &[f64], _: &[f64]| 0.0;
    loop {
        let k = w.state.k;
        if let Some(bp) = w.settle(k, &no_datum)? {
            w.state.status = WalkStatus::Absorbed;
            return Ok(TrajectoryOutcome {
                mode: WalkMode::Absorbing,
                exit_point: Some(bp),
                kappa: Some(k),
                score: 0.0,
                boundary_hits: 1,
                steps_taken: k,
                censored: false,
                tail_start_score: 0.0,
                hits_first_half: 0,
            });
        }
        if k >= params.max_steps {
            w.state.status = WalkStatus::Censored;
            return Ok(TrajectoryOutcome {
                mode: WalkMode::Absorbing,
                exit_point: None,
                kappa: None,
                score: 0.0,
                boundary_hits: 0,
                steps_taken: k,
                censored: true,
                tail_start_score: 0.0,
                hits_first_half: 0,
            });
        }
        w.interior_step()?;
    }
}

/// Reflecting walk accumulating the discrete local-time score of `f`.
pub fn run_reflecting<F: BoundaryFunction + ?Sized>(
    x0: &[f64],
    params: &WalkParams,
    domain: &DomainGeometry,
    f: &F,
    stream: &mut Stream,
) -> Result<TrajectoryOutcome> {
    run_reflecting_observed(x0, params, domain, f, stream, NoObserver)
}

pub fn run_reflecting_observed<F: BoundaryFunction + ?Sized, O: WalkObserver>(
    x0: &[f64],
    params: &WalkParams,
    domain: &DomainGeometry,
    f: &F,
    stream: &mut Stream,
    observer: O,
) -> Result<TrajectoryOutcome> {
    if params.mode != WalkMode::Reflecting {
        return usage("run_reflecting needs WalkMode::Reflecting");
    }
    check_start(x0, domain)?;
    let n = params.n_steps();
    let limit = n.min(params.max_steps);
    let tail_start = n - n.div_ceil(10);
    let half = n / 2;

    let mut w = Walker::new(domain, params, stream, observer, x0);
    w.settle(0, f)?;
    let mut tail_start_score = w.state.score;
    let mut hits_first_half = w.state.boundary_hits;
    for k in 1..=limit {
        w.interior_step()?;
        w.settle(k, f)?;
        if k == tail_start {
            tail_start_score = w.state.score;
        }
        if k == half {
            hits_first_half = w.state.boundary_hits;
        }
    }
    let censored = limit < n;
    w.state.status = if censored {
        WalkStatus::Censored
    } else {
        WalkStatus::HorizonReached
    };
    Ok(TrajectoryOutcome {
        mode: WalkMode::Reflecting,
        exit_point: None,
        kappa: None,
        score: w.state.score,
        boundary_hits: w.state.boundary_hits,
        steps_taken: limit,
        censored,
        tail_start_score,
        hits_first_half,
    })
}

fn check_start(x0: &[f64], domain: &DomainGeometry) -> Result<()> {
    domain.check_dim(x0)?;
    if x0.iter().any(|c| !c.is_finite()) || !domain.contains_unchecked(x0) {
        return usage(format!("starting point {x0:?} is not in the closed domain"));
    }
    Ok(())
}

struct Walker<'a, O> {
    domain: &'a DomainGeometry,
    params: &'a WalkParams,
    stream: &'a mut Stream,
    observer: O,
    sqrt_h: f64,
    half_step: f64,
    layer: f64,
    max_stages: usize,
    state: WalkState,
    xi: Vec<f64>,
    proj: Vec<f64>,
    normal: Vec<f64>,
}

impl<'a, O: WalkObserver> Walker<'a, O> {
    fn new(
        domain: &'a DomainGeometry,
        params: &'a WalkParams,
        stream: &'a mut Stream,
        observer: O,
        x0: &[f64],
    ) -> Self {
        let d = domain.dimension();
        let sqrt_h = params.h.sqrt();
        Walker {
            domain,
            params,
            stream,
            observer,
            sqrt_h,
            half_step: 0.5 * sqrt_h,
            layer: params.lambda * sqrt_h,
            max_stages: 2 * d + 2,
            state: WalkState {
                position: x0.to_vec(),
                k: 0,
                score: 0.0,
                boundary_hits: 0,
                status: WalkStatus::Running,
            },
            xi: vec![0.0; d],
            proj: vec![0.0; d],
            normal: vec![0.0; d],
        }
    }

    #[inline]
    fn emit(&mut self, k: u64, at_projection: bool, in_zone: bool, event: StepEvent) {
        let position = if at_projection { &self.proj } else { &self.state.position };
        self.observer.observe(&StepRecord {
            k,
            position,
            in_zone,
            event,
            score: self.state.score,
            boundary_hits: self.state.boundary_hits,
        });
    }

    /// Y_{k} = Y_{k-1} + √h·ξ_{k-1}.
    #[inline]
    fn interior_step(&mut self) -> Result<()> {
        self.stream.fill_rademacher(&mut self.xi);
        for (p, x) in self.state.position.iter_mut().zip(&self.xi) {
            *p += self.sqrt_h * x;
        }
        self.state.k += 1;
        if !self.domain.contains_unchecked(&self.state.position) {
            return Err(Error::GeometryInconsistency {
                point: self.state.position.clone(),
                reason: "interior step left the domain".into(),
            });
        }
        Ok(())
    }

    /// Resolves the proposed point Y'_k. Returns the landing point when an
    /// absorbing walk stops; reflecting walks never return `Some`.
    fn settle<F: BoundaryFunction + ?Sized>(&mut self, k: u64, f: &F) -> Result<Option<BoundaryPoint>> {
        let mut in_zone = self.domain.in_zone_fast(&self.state.position, self.half_step);
        self.emit(k, false, in_zone, StepEvent::Proposed);
        let mut stages = 0;
        while in_zone {
            stages += 1;
            if stages > self.max_stages {
                return Err(Error::GeometryInconsistency {
                    point: self.state.position.clone(),
                    reason: format!("still in the boundary zone after {} resolutions", self.max_stages),
                });
            }
            self.domain
                .project_into(&self.state.position, &mut self.proj, &mut self.normal);
            let denom = landing_denominator(&self.state.position, &self.proj, &self.normal, self.layer);
            let p = (self.layer / denom).min(1.0);
            if self.stream.bernoulli_unchecked(p) {
                if self.params.mode == WalkMode::Absorbing {
                    self.emit(k, true, true, StepEvent::Absorbed);
                    return Ok(Some(BoundaryPoint {
                        position: Point::new(self.proj.clone())?,
                        inward_normal: self.normal.clone(),
                    }));
                }
                let value = f.eval(&self.proj, &self.normal);
                if !value.is_finite() {
                    return Err(Error::NonFiniteDatum {
                        point: self.proj.clone(),
                        value,
                    });
                }
                self.state.score += self.layer * value;
                self.state.boundary_hits += 1;
                self.emit(k, true, true, StepEvent::BoundaryHit);
                for i in 0..self.proj.len() {
                    self.state.position[i] = self.proj[i] + self.layer * self.normal[i];
                }
                in_zone = self.domain.in_zone_fast(&self.state.position, self.half_step);
                self.emit(k, false, in_zone, StepEvent::Reentered);
            } else {
                match self.params.deflection {
                    DeflectionRule::FromPoint => {
                        for i in 0..self.proj.len() {
                            self.state.position[i] += self.layer * self.normal[i];
                        }
                    }
                    DeflectionRule::FromProjection => {
                        for i in 0..self.proj.len() {
                            self.state.position[i] = self.proj[i] + self.layer * self.normal[i];
                        }
                    }
                }
                in_zone = self.domain.in_zone_fast(&self.state.position, self.half_step);
                self.emit(k, false, in_zone, StepEvent::Deflected);
            }
            if !self.domain.contains_unchecked(&self.state.position) {
                return Err(Error::GeometryInconsistency {
                    point: self.state.position.clone(),
                    reason: "boundary resolution left the domain".into(),
                });
            }
        }
        self.emit(k, false, false, StepEvent::Settled);
        Ok(None)
    }
}

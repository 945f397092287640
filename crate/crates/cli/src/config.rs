//! Run configuration: a TOML (or JSON) file merged with command-line flags.
//!
//! Every key of [`RunConfig`] is also a flag; a flag given on the command line
//! replaces the file value. The resolved configuration is echoed into the JSON
//! outputs and can be fed back with `--config` to reproduce a run.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use neumann_walk::{
    builtin, BenchmarkProblem, BoundaryDatum, DeflectionRule, DomainGeometry, DomainKind, Normalization, Point,
    Polynomial, WalkParams, BUILTIN_NAMES,
};
use serde::{Deserialize, Serialize};

/// Environment variable holding the default master seed.
pub const SEED_ENV: &str = "NEUMANN_WALK_SEED";

pub const DEFAULT_H: f64 = 1e-3;
pub const DEFAULT_TRAJECTORIES: usize = 10_000;
pub const DEFAULT_CHECKPOINTS: [u64; 3] = [100, 1000, 10_000];

/// A user-defined problem. `datum` is an expression in the boundary
/// coordinates; when it is absent the datum is the outward normal derivative
/// of `exact`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomProblem {
    pub domain: DomainKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub datum: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<String>,
    /// Whether `exact` integrates to zero over the domain.
    #[serde(default)]
    pub mean_zero: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationChoice {
    /// Raw for mean-zero problems, otherwise difference to the first point.
    Natural,
    Raw,
    MeanZero,
    /// Difference to the first evaluation point.
    Difference,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomProblem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "T", alias = "horizon")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "M", alias = "trajectories")]
    pub trajectories: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<NormalizationChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub datum_offset: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_drift: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rerun_inconclusive: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputPaths>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub override_compatibility: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deflect_from_projection: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub json: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dat: Option<PathBuf>,
}

macro_rules! take {
    ($dst:ident, $src:ident, $($field:ident),*) => {
        $( if $src.$field.is_some() { $dst.$field = $src.$field; } )*
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
        };
        Ok(cfg)
    }

    /// Values set in `flags` replace those in `self`.
    pub fn overlay(mut self, flags: RunConfig) -> RunConfig {
        take!(
            self, flags, problem, custom, points, h, h_list, lambda, horizon, trajectories, seed, workers, max_steps,
            normalization, datum_offset, checkpoints, c_drift, rerun_inconclusive, override_compatibility,
            deflect_from_projection, trace
        );
        if let Some(out) = flags.output {
            let mut merged = self.output.take().unwrap_or_default();
            take!(merged, out, csv, json, dat);
            self.output = Some(merged);
        }
        self
    }

    /// Fills every unset key that has a default. `problem` must be set.
    pub fn resolve(mut self) -> Result<Resolved> {
        let problem = self.problem_definition()?;
        let d = problem.domain.dimension();
        if self.points.is_none() {
            self.points = Some(problem.default_points.iter().map(|p| p.coords().to_vec()).collect());
        }
        if self.seed.is_none() {
            self.seed = Some(match std::env::var(SEED_ENV) {
                Ok(v) => v.trim().parse().with_context(|| format!("{SEED_ENV}={v:?} is not a u64"))?,
                Err(_) => 0,
            });
        }
        self.h.get_or_insert(DEFAULT_H);
        self.horizon.get_or_insert(problem.default_horizon);
        self.trajectories.get_or_insert(DEFAULT_TRAJECTORIES);
        self.lambda.get_or_insert(neumann_walk::default_lambda(d));
        if self.workers.is_none() {
            self.workers = Some(std::thread::available_parallelism().map_or(1, |n| n.get()));
        }
        self.normalization.get_or_insert(NormalizationChoice::Natural);
        self.override_compatibility.get_or_insert(false);
        self.deflect_from_projection.get_or_insert(false);
        self.validate(d)?;
        let points = self
            .points
            .as_ref()
            .expect("set above")
            .iter()
            .map(|c| Point::new(c.clone()).map_err(|e| anyhow!(e)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Resolved {
            problem,
            points,
            config: self,
        })
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.workers == Some(0) {
            bail!("workers must be at least 1");
        }
        if let Some(m) = self.trajectories {
            if m < 2 {
                bail!("M must be at least 2, got {m}");
            }
        }
        if let Some(l) = self.lambda {
            let min = neumann_walk::walk::minimal_lambda(d);
            if !(l >= min * (1.0 - 1e-12)) {
                bail!("lambda = {l} is below sqrt(d)/2 = {min}");
            }
        }
        if let Some(list) = &self.h_list {
            if list.windows(2).any(|w| !(w[1] < w[0])) {
                bail!("h_list must be strictly decreasing, got {list:?}");
            }
        }
        for p in self.points.iter().flatten() {
            if p.len() != d {
                bail!("evaluation point {p:?} has dimension {}, the domain has {d}", p.len());
            }
        }
        if self.points.as_ref().is_some_and(|p| p.is_empty()) {
            bail!("no evaluation points");
        }
        Ok(())
    }

    fn problem_definition(&self) -> Result<BenchmarkProblem> {
        let mut problem = match (self.problem.as_deref(), &self.custom) {
            (Some("custom"), Some(c)) | (None, Some(c)) => custom_problem(c)?,
            (Some("custom"), None) => bail!("problem = \"custom\" needs a [custom] table"),
            (Some(name), _) => builtin(name).map_err(|e| anyhow!(e))?,
            (None, None) => bail!("no problem given; use --problem with one of {}", BUILTIN_NAMES.join(", ")),
        };
        if let Some(c) = self.datum_offset {
            problem = problem.with_datum_offset(c);
        }
        Ok(problem)
    }
}

fn custom_problem(c: &CustomProblem) -> Result<BenchmarkProblem> {
    let domain = DomainGeometry::new(c.domain.clone()).map_err(|e| anyhow!(e))?;
    let d = domain.dimension();
    let exact = c.exact.as_deref().map(Polynomial::parse).transpose().map_err(|e| anyhow!(e))?;
    let datum = match (&c.datum, &exact) {
        (Some(src), _) => BoundaryDatum::polynomial(Polynomial::parse(src).map_err(|e| anyhow!(e))?),
        (None, Some(w)) => BoundaryDatum::normal_derivative(w, d),
        (None, None) => bail!("a custom problem needs `datum` or `exact`"),
    };
    for poly in exact.iter() {
        if poly.arity() > d {
            bail!("exact solution uses x{} but the domain has dimension {d}", poly.arity());
        }
    }
    let (lo, hi) = domain.bounding_box();
    let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let default_points = if domain.contains(&center).map_err(|e| anyhow!(e))? {
        vec![Point::new(center).map_err(|e| anyhow!(e))?]
    } else {
        Vec::new()
    };
    Ok(BenchmarkProblem {
        name: "custom".into(),
        domain,
        datum,
        exact,
        default_points,
        default_horizon: 20.0,
        mean_zero: c.mean_zero,
        notes: "user-defined".into(),
    })
}

/// A configuration with all defaults applied, plus the problem it names.
pub struct Resolved {
    pub problem: BenchmarkProblem,
    pub points: Vec<Point>,
    pub config: RunConfig,
}

impl Resolved {
    pub fn dimension(&self) -> usize {
        self.problem.domain.dimension()
    }

    pub fn seed(&self) -> u64 {
        self.config.seed.expect("resolved")
    }

    pub fn workers(&self) -> usize {
        self.config.workers.expect("resolved")
    }

    pub fn trajectories(&self) -> usize {
        self.config.trajectories.expect("resolved")
    }

    pub fn horizon(&self) -> f64 {
        self.config.horizon.expect("resolved")
    }

    pub fn lambda(&self) -> f64 {
        self.config.lambda.expect("resolved")
    }

    pub fn override_compatibility(&self) -> bool {
        self.config.override_compatibility == Some(true)
    }

    pub fn params(&self, h: f64) -> WalkParams {
        let mut p = WalkParams::reflecting(h, self.horizon(), self.dimension()).with_lambda(self.lambda());
        if let Some(m) = self.config.max_steps {
            p = p.with_max_steps(m);
        }
        if self.config.deflect_from_projection == Some(true) {
            p = p.with_deflection(DeflectionRule::FromProjection);
        }
        p
    }

    pub fn normalization(&self) -> Normalization {
        let first = || Normalization::DifferenceTo(self.points[0].clone());
        match self.config.normalization.expect("resolved") {
            NormalizationChoice::Raw => Normalization::Raw,
            NormalizationChoice::MeanZero => Normalization::MeanZero,
            NormalizationChoice::Difference => first(),
            NormalizationChoice::Natural if self.problem.mean_zero => Normalization::Raw,
            NormalizationChoice::Natural => first(),
        }
    }

    pub fn output(&self) -> OutputPaths {
        self.config.output.clone().unwrap_or_default()
    }
}

/// Parses `x,y;x,y` into points. Each flag occurrence may hold several.
pub fn parse_points(args: &[String]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for arg in args {
        for part in arg.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let coords = part
                .split(',')
                .map(|c| c.trim().parse::<f64>().with_context(|| format!("bad coordinate {c:?} in point {part:?}")))
                .collect::<Result<Vec<_>>>()?;
            out.push(coords);
        }
    }
    Ok(out)
}

//! Problem files: JSON run specifications and their validation.

use std::path::Path;

use multilevel_prox::oracle::GalleryProblem;
use multilevel_prox::{
    gallery, Contraction, CustomMap, GalleryEntry, LayerMap, Matrix, MultilevelProblem, ProxGrad,
    ProxableSpec, Schedule, SmoothSpec, SolverConfig, TrilevelProblem, Vector, WeightRule,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

/// Raw problem file.
///
/// Either `gallery` names a built-in entry (the other problem keys then act
/// as overrides), or `dimension` and `layers` describe the problem inline.
/// Layers are listed selector first, bottom level last.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gallery: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<LayerSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iters: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_every: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_iterates: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divergence_guard: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule_offset: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smooth: Option<SmoothJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonsmooth: Option<NonsmoothJson>,
    /// A number or `"auto"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<Value>,
    /// Operator-level layer given directly as a map.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SmoothJson {
    Zero,
    Quadratic {
        q: Vec<Vec<f64>>,
        b: Vec<f64>,
        #[serde(default)]
        c: f64,
    },
    SquaredDistance {
        center: Vec<f64>,
    },
    LeastSquares {
        a: Vec<Vec<f64>>,
        y: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonsmoothJson {
    Zero,
    L1 { weight: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    AffineEq { a: Vec<Vec<f64>>, c: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapJson {
    Identity,
    Scale { factor: f64 },
    Shift { offset: f64 },
    Clamp { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Power {
        lambda: f64,
        gamma: f64,
    },
    OscillatingPower {
        lambda: f64,
        gamma: f64,
    },
    Monomial {
        lambda: f64,
        gamma: f64,
    },
    /// `r` defaults to the selector's contraction factor.
    Rate {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r: Option<f64>,
    },
    RatioCounterexample,
    Table {
        alphas: Vec<f64>,
        betas: Vec<f64>,
    },
    ConstantBeta {
        alpha_exponent: f64,
        beta: f64,
    },
}

impl ScheduleSpec {
    pub fn build(&self, r: f64) -> multilevel_prox::Result<Schedule> {
        match self {
            ScheduleSpec::Power { lambda, gamma } => Schedule::power(*lambda, *gamma),
            ScheduleSpec::OscillatingPower { lambda, gamma } => {
                Schedule::oscillating_power(*lambda, *gamma)
            }
            ScheduleSpec::Monomial { lambda, gamma } => Schedule::monomial(*lambda, *gamma),
            ScheduleSpec::Rate { r: given } => Schedule::rate(given.unwrap_or(r)),
            ScheduleSpec::RatioCounterexample => Ok(Schedule::RatioCounterexample),
            ScheduleSpec::Table { alphas, betas } => Schedule::table(alphas.clone(), betas.clone()),
            ScheduleSpec::ConstantBeta {
                alpha_exponent,
                beta,
            } => Schedule::constant_beta(*alpha_exponent, *beta),
        }
    }

    pub fn from_schedule(s: &Schedule) -> Self {
        match s {
            Schedule::Power {
                lambda,
                gamma,
                oscillate: false,
            } => ScheduleSpec::Power {
                lambda: *lambda,
                gamma: *gamma,
            },
            Schedule::Power {
                lambda,
                gamma,
                oscillate: true,
            } => ScheduleSpec::OscillatingPower {
                lambda: *lambda,
                gamma: *gamma,
            },
            Schedule::Monomial { lambda, gamma } => ScheduleSpec::Monomial {
                lambda: *lambda,
                gamma: *gamma,
            },
            Schedule::Rate { r } => ScheduleSpec::Rate { r: Some(*r) },
            Schedule::RatioCounterexample => ScheduleSpec::RatioCounterexample,
            Schedule::Table { alphas, betas } => ScheduleSpec::Table {
                alphas: alphas.clone(),
                betas: betas.clone(),
            },
            Schedule::ConstantBeta {
                alpha_exponent,
                beta,
            } => ScheduleSpec::ConstantBeta {
                alpha_exponent: *alpha_exponent,
                beta: *beta,
            },
        }
    }
}

/// A validated run: problem, solver configuration, and the gallery entry
/// it came from, if any.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub name: String,
    pub problem: GalleryProblem,
    pub schedule_spec: ScheduleSpec,
    pub config: SolverConfig,
    pub entry: Option<GalleryEntry>,
}

pub const DEFAULT_ITERS: usize = 10_000;

fn field(path: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{path}: {e}"))
}

pub fn read_spec(path: &Path) -> Result<RunSpec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    parse_spec(&text)
}

pub fn parse_spec(text: &str) -> Result<RunSpec, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Validation(format!("schema: {e}")))
}

fn count(path: &str, v: f64) -> Result<usize, CliError> {
    if !(v >= 1.0 && v.fract() == 0.0 && v <= 1e12) {
        return Err(field(path, format!("must be a positive integer, got {v}")));
    }
    Ok(v as usize)
}

fn vector(path: &str, xs: &[f64], dim: usize) -> Result<Vector, CliError> {
    if xs.len() != dim {
        return Err(field(
            path,
            format!("expected length {dim}, found {}", xs.len()),
        ));
    }
    if let Some(i) = xs.iter().position(|v| !v.is_finite()) {
        return Err(field(&format!("{path}[{i}]"), "not finite"));
    }
    Ok(Vector::from_column_slice(xs))
}

fn matrix(path: &str, rows: &[Vec<f64>], ncols: usize) -> Result<Matrix, CliError> {
    if rows.is_empty() {
        return Err(field(path, "matrix has no rows"));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(field(
                &format!("{path}[{i}]"),
                format!("expected {ncols} columns, found {}", r.len()),
            ));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(field(&format!("{path}[{i}]"), "not finite"));
        }
    }
    Ok(Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn build_smooth(path: &str, s: &SmoothJson, dim: usize) -> Result<SmoothSpec, CliError> {
    let out = match s {
        SmoothJson::Zero => Ok(SmoothSpec::zero(dim)),
        SmoothJson::Quadratic { q, b, c } => {
            let q = matrix(&format!("{path}.q"), q, dim)?;
            if q.nrows() != dim {
                return Err(field(
                    &format!("{path}.q"),
                    format!("expected {dim} rows, found {}", q.nrows()),
                ));
            }
            let b = vector(&format!("{path}.b"), b, dim)?;
            SmoothSpec::quadratic(q, b, *c)
        }
        SmoothJson::SquaredDistance { center } => {
            SmoothSpec::squared_distance(vector(&format!("{path}.center"), center, dim)?)
        }
        SmoothJson::LeastSquares { a, y } => {
            let a = matrix(&format!("{path}.a"), a, dim)?;
            let y = vector(&format!("{path}.y"), y, a.nrows())?;
            SmoothSpec::least_squares(&a, &y)
        }
    };
    out.map_err(|e| field(path, e))
}

fn build_nonsmooth(path: &str, g: &NonsmoothJson, dim: usize) -> Result<ProxableSpec, CliError> {
    let out = match g {
        NonsmoothJson::Zero => Ok(ProxableSpec::zero(dim)),
        NonsmoothJson::L1 { weight } => ProxableSpec::l1(*weight, dim),
        NonsmoothJson::Box { lo, hi } => ProxableSpec::boxed(
            vector(&format!("{path}.lo"), lo, dim)?,
            vector(&format!("{path}.hi"), hi, dim)?,
        ),
        NonsmoothJson::AffineEq { a, c } => {
            let a = matrix(&format!("{path}.a"), a, dim)?;
            let c = vector(&format!("{path}.c"), c, a.nrows())?;
            ProxableSpec::affine_eq(a, c)
        }
        NonsmoothJson::Ball { center, radius } => {
            ProxableSpec::ball(vector(&format!("{path}.center"), center, dim)?, *radius)
        }
    };
    out.map_err(|e| field(path, e))
}

enum Step {
    Auto,
    Value(f64),
}

fn parse_step(path: &str, v: Option<&Value>) -> Result<Step, CliError> {
    match v {
        None => Ok(Step::Auto),
        Some(Value::String(s)) if s == "auto" => Ok(Step::Auto),
        Some(Value::Number(n)) => n
            .as_f64()
            .map(Step::Value)
            .ok_or_else(|| field(path, "step is not a finite number")),
        Some(other) => Err(field(
            path,
            format!("expected a number or \"auto\", found {other}"),
        )),
    }
}

fn build_layer(i: usize, l: &LayerSpec, dim: usize) -> Result<LayerMap, CliError> {
    let path = format!("layers[{i}]");
    if let Some(m) = &l.map {
        if l.smooth.is_some() || l.nonsmooth.is_some() || l.step.is_some() {
            return Err(field(
                &path,
                "a map layer takes no smooth, nonsmooth or step keys",
            ));
        }
        let cm = match *m {
            MapJson::Identity => CustomMap::Identity { dim },
            MapJson::Scale { factor } => CustomMap::Scale { factor, dim },
            MapJson::Shift { offset } => CustomMap::Shift { offset, dim },
            MapJson::Clamp { lo, hi } => {
                if !(lo <= hi) {
                    return Err(field(&format!("{path}.map"), "clamp needs lo <= hi"));
                }
                CustomMap::Clamp { lo, hi, dim }
            }
        };
        if matches!(m, MapJson::Scale { factor } if !factor.is_finite()) {
            return Err(field(&format!("{path}.map.factor"), "not finite"));
        }
        return Ok(cm.into());
    }
    let Some(smooth) = &l.smooth else {
        return Err(field(&path, "missing field `smooth` (or `map`)"));
    };
    let f = build_smooth(&format!("{path}.smooth"), smooth, dim)?;
    let step = parse_step(&format!("{path}.step"), l.step.as_ref())?;
    if i == 0 {
        if let Some(g) = &l.nonsmooth {
            if *g != NonsmoothJson::Zero {
                return Err(field(
                    &format!("{path}.nonsmooth"),
                    "the selector layer must be smooth",
                ));
            }
        }
        let c = match step {
            Step::Auto => Contraction::with_auto_step(f),
            Step::Value(u) => Contraction::new(f, u),
        };
        return c
            .map(Into::into)
            .map_err(|e| field(&format!("{path}.step"), e));
    }
    let g = match &l.nonsmooth {
        None => ProxableSpec::zero(dim),
        Some(g) => build_nonsmooth(&format!("{path}.nonsmooth"), g, dim)?,
    };
    let p = match step {
        Step::Auto => ProxGrad::with_auto_step(f, g),
        Step::Value(t) => ProxGrad::new(f, g, t),
    };
    p.map(Into::into)
        .map_err(|e| field(&format!("{path}.step"), e))
}

fn build_inline(spec: &RunSpec) -> Result<GalleryProblem, CliError> {
    let dim = spec
        .dimension
        .ok_or_else(|| field("dimension", "required for an inline problem"))?;
    if dim == 0 {
        return Err(field("dimension", "must be at least 1"));
    }
    let layers = spec
        .layers
        .as_ref()
        .ok_or_else(|| field("layers", "required for an inline problem"))?;
    if layers.len() < 2 {
        return Err(field(
            "layers",
            format!(
                "need a selector and at least one level, found {}",
                layers.len()
            ),
        ));
    }
    let maps = layers
        .iter()
        .enumerate()
        .map(|(i, l)| build_layer(i, l, dim))
        .collect::<Result<Vec<_>, _>>()?;
    let mut it = maps.into_iter();
    let selector = it.next().expect("checked length");
    let mut rest: Vec<LayerMap> = it.collect();
    if rest.len() == 2 && spec.weights.is_none() {
        let bottom = rest.pop().expect("two layers");
        let middle = rest.pop().expect("two layers");
        return TrilevelProblem::new(selector, middle, bottom)
            .map(GalleryProblem::Trilevel)
            .map_err(|e| field("layers", e));
    }
    rest.reverse();
    MultilevelProblem::new(selector, rest)
        .map(GalleryProblem::Multilevel)
        .map_err(|e| field("layers", e))
}

/// Builds the problem of a spec, ignoring run settings.
pub fn load_problem(
    spec: &RunSpec,
) -> Result<(String, GalleryProblem, Option<GalleryEntry>), CliError> {
    match (&spec.gallery, &spec.layers) {
        (Some(_), Some(_)) => Err(field(
            "gallery",
            "give either `gallery` or `layers`, not both",
        )),
        (Some(g), None) => {
            if spec.dimension.is_some() {
                return Err(field("dimension", "not allowed with `gallery`"));
            }
            let e = gallery(g).map_err(|e| field("gallery", e))?;
            Ok((g.clone(), e.problem.clone(), Some(e)))
        }
        (None, _) => Ok(("inline".to_string(), build_inline(spec)?, None)),
    }
}

/// Validates a spec completely and builds the run. Command-line overrides
/// take precedence over file values.
pub fn prepare(spec: &RunSpec, overrides: &Overrides) -> Result<Prepared, CliError> {
    let (name, problem, entry) = load_problem(spec)?;
    let dim = problem.dim();
    let r = problem.as_multilevel().contraction_factor();
    let schedule_spec = match (&spec.schedule, &entry) {
        (Some(s), _) => s.clone(),
        (None, Some(e)) => ScheduleSpec::from_schedule(&e.schedule),
        (None, None) => return Err(field("schedule", "required for an inline problem")),
    };
    let schedule = schedule_spec.build(r).map_err(|e| field("schedule", e))?;
    let x0 = match (&spec.x0, &entry) {
        (Some(x), _) => vector("x0", x, dim)?,
        (None, Some(e)) => e.x0.clone(),
        (None, None) => return Err(field("x0", "required for an inline problem")),
    };
    let iters = match (overrides.iters, spec.iters) {
        (Some(n), _) => n,
        (None, Some(v)) => count("iters", v)?,
        (None, None) => DEFAULT_ITERS,
    };
    let trace_every = match (overrides.trace_every, spec.trace_every) {
        (Some(n), _) => n,
        (None, Some(v)) => count("trace_every", v)?,
        (None, None) => 1,
    };
    let tol = overrides.tol.or(spec.tol).unwrap_or(0.0);
    if !(tol >= 0.0) {
        return Err(field("tol", format!("must be nonnegative, got {tol}")));
    }
    let guard = spec
        .divergence_guard
        .or(entry.as_ref().map(|e| e.divergence_guard))
        .unwrap_or(multilevel_prox::solver::DEFAULT_DIVERGENCE_GUARD);
    if !(guard > 0.0) {
        return Err(field(
            "divergence_guard",
            format!("must be positive, got {guard}"),
        ));
    }
    let rule = spec
        .weights
        .or(entry.as_ref().map(|e| e.weight_rule))
        .unwrap_or_default();
    let config = SolverConfig::new(schedule, iters, x0)
        .with_stop_residual(tol)
        .with_trace_every(trace_every)
        .with_record_iterates(spec.record_iterates.unwrap_or(true))
        .with_divergence_guard(guard)
        .with_weight_rule(rule)
        .with_schedule_offset(spec.schedule_offset.unwrap_or(0));
    config.validate(dim).map_err(|e| field("schedule", e))?;
    Ok(Prepared {
        name,
        problem,
        schedule_spec,
        config,
        entry,
    })
}

/// Command-line values that replace file values.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub iters: Option<usize>,
    pub tol: Option<f64>,
    pub trace_every: Option<usize>,
}

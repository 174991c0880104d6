//! The trilevel iteration and its N-level generalization.
//!
//! Both solvers are 1-based: the record for step `k` carries `x_k`, computed
//! from `x_{k-1}` with the schedule pair at `k`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::operators::{LayerMap, Vector};
use crate::schedules::{nested_weights, uniform_tail_weights, Schedule};

/// Default bound on `||x||` beyond which a run is declared diverged.
pub const DEFAULT_DIVERGENCE_GUARD: f64 = 1e12;

/// Selector `S`, middle map `T` and bottom map `W` on a shared space.
#[derive(Debug, Clone, PartialEq)]
pub struct TrilevelProblem {
    top: LayerMap,
    middle: LayerMap,
    bottom: LayerMap,
}

impl TrilevelProblem {
    /// Rejects mismatched dimensions and a top map that is not a strict
    /// contraction.
    pub fn new(top: LayerMap, middle: LayerMap, bottom: LayerMap) -> Result<Self> {
        check_dim(top.dim(), middle.dim())?;
        check_dim(top.dim(), bottom.dim())?;
        if top.contraction_constant().is_none() {
            return Err(Error::Input(
                "top level must be a strict contraction".into(),
            ));
        }
        Ok(TrilevelProblem {
            top,
            middle,
            bottom,
        })
    }

    pub fn top(&self) -> &LayerMap {
        &self.top
    }

    pub fn middle(&self) -> &LayerMap {
        &self.middle
    }

    pub fn bottom(&self) -> &LayerMap {
        &self.bottom
    }

    pub fn dim(&self) -> usize {
        self.top.dim()
    }

    /// Certified contraction factor `r` of the top map.
    pub fn contraction_factor(&self) -> f64 {
        self.top
            .contraction_constant()
            .expect("checked at construction")
    }

    pub fn is_operator_level(&self) -> bool {
        self.top.is_operator_level()
            || self.middle.is_operator_level()
            || self.bottom.is_operator_level()
    }

    /// The same problem as a two-layer multilevel problem.
    pub fn to_multilevel(&self) -> MultilevelProblem {
        MultilevelProblem {
            selector: self.top.clone(),
            layers: vec![self.bottom.clone(), self.middle.clone()],
        }
    }
}

/// Selector `T_0` and layers `T_1, ..., T_N` stored innermost first, so
/// `layers[0]` is the bottom map whose fixed points form the largest set.
#[derive(Debug, Clone, PartialEq)]
pub struct MultilevelProblem {
    selector: LayerMap,
    layers: Vec<LayerMap>,
}

impl MultilevelProblem {
    pub fn new(selector: LayerMap, layers: Vec<LayerMap>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Input(
                "multilevel problem needs at least one layer".into(),
            ));
        }
        for l in &layers {
            check_dim(selector.dim(), l.dim())?;
        }
        if selector.contraction_constant().is_none() {
            return Err(Error::Input("selector must be a strict contraction".into()));
        }
        Ok(MultilevelProblem { selector, layers })
    }

    pub fn selector(&self) -> &LayerMap {
        &self.selector
    }

    pub fn layers(&self) -> &[LayerMap] {
        &self.layers
    }

    pub fn levels(&self) -> usize {
        self.layers.len()
    }

    pub fn dim(&self) -> usize {
        self.selector.dim()
    }

    pub fn contraction_factor(&self) -> f64 {
        self.selector
            .contraction_constant()
            .expect("checked at construction")
    }

    /// Two-layer problems viewed as trilevel problems.
    pub fn to_trilevel(&self) -> Option<TrilevelProblem> {
        match self.layers.as_slice() {
            [bottom, middle] => Some(TrilevelProblem {
                top: self.selector.clone(),
                middle: middle.clone(),
                bottom: bottom.clone(),
            }),
            _ => None,
        }
    }
}

/// How a base `(alpha_k, beta_k)` pair becomes an N-level weight vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    /// `(alpha, 1 - alpha - beta, beta/(N-1), ...)`, see
    /// [`make_multilevel_weights`](crate::schedules::make_multilevel_weights).
    #[default]
    UniformTail,
    /// `(alpha, (1-alpha)(1-beta), (1-alpha)beta/(N-1), ...)`; the trilevel
    /// combination when `N = 2`.
    Nested,
}

impl WeightRule {
    pub fn weights(self, alpha: f64, beta: f64, levels: usize) -> Result<Vec<f64>> {
        match self {
            WeightRule::UniformTail => uniform_tail_weights(alpha, beta, levels),
            WeightRule::Nested => nested_weights(alpha, beta, levels),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub schedule: Schedule,
    pub max_iters: usize,
    pub x0: Vector,
    /// Stop once `||x_k - x_{k-1}|| <= stop_residual`; `0` disables.
    pub stop_residual: f64,
    pub trace_every: usize,
    pub record_iterates: bool,
    pub divergence_guard: f64,
    pub weight_rule: WeightRule,
    /// Step `k` uses the schedule pair at `k + schedule_offset`.
    pub schedule_offset: usize,
}

impl SolverConfig {
    pub fn new(schedule: Schedule, max_iters: usize, x0: Vector) -> Self {
        SolverConfig {
            schedule,
            max_iters,
            x0,
            stop_residual: 0.0,
            trace_every: 1,
            record_iterates: true,
            divergence_guard: DEFAULT_DIVERGENCE_GUARD,
            weight_rule: WeightRule::UniformTail,
            schedule_offset: 0,
        }
    }

    pub fn with_stop_residual(mut self, tol: f64) -> Self {
        self.stop_residual = tol;
        self
    }

    pub fn with_trace_every(mut self, every: usize) -> Self {
        self.trace_every = every;
        self
    }

    pub fn with_record_iterates(mut self, on: bool) -> Self {
        self.record_iterates = on;
        self
    }

    pub fn with_divergence_guard(mut self, guard: f64) -> Self {
        self.divergence_guard = guard;
        self
    }

    pub fn with_weight_rule(mut self, rule: WeightRule) -> Self {
        self.weight_rule = rule;
        self
    }

    pub fn with_schedule_offset(mut self, offset: usize) -> Self {
        self.schedule_offset = offset;
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Input("max_iters must be at least 1".into()));
        }
        if self.trace_every == 0 {
            return Err(Error::Input("trace_every must be at least 1".into()));
        }
        if !(self.stop_residual >= 0.0) {
            return Err(Error::Input(format!(
                "stop_residual must be nonnegative, got {}",
                self.stop_residual
            )));
        }
        if !(self.divergence_guard > 0.0) {
            return Err(Error::Input(format!(
                "divergence_guard must be positive, got {}",
                self.divergence_guard
            )));
        }
        check_dim(dim, self.x0.len())?;
        check_finite("x0", self.x0.as_slice())?;
        if let Some(len) = self.schedule.horizon() {
            if len < self.max_iters + self.schedule_offset {
                return Err(Error::Schedule(format!(
                    "table schedule has {len} entries but the run needs {}",
                    self.max_iters + self.schedule_offset
                )));
            }
        }
        Ok(())
    }
}

/// Monitored quantities at step `k`.
///
/// `y_k = T(x_{k-1})` and `z_k = W(x_{k-1})`; residuals are taken at `x_k`.
/// Objective fields are `None` for operator-level maps, and `+inf` when an
/// indicator is violated by more than the feasibility tolerance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterateRecord {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Full weight vector for multilevel runs.
    pub weights: Option<Vec<f64>>,
    pub res_w: f64,
    pub res_t: Option<f64>,
    pub step_norm: f64,
    pub phi1_y: Option<f64>,
    pub phi2_z: Option<f64>,
    pub omega_x: Option<f64>,
    pub x: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TerminalStatus {
    MaxIters,
    ResidualMet { k: usize },
    Diverged { k: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<IterateRecord>,
    pub status: TerminalStatus,
    /// Last finite iterate.
    pub final_x: Vector,
    pub iterations: usize,
}

impl Trace {
    pub fn last(&self) -> Option<&IterateRecord> {
        self.records.last()
    }

    pub fn diverged(&self) -> bool {
        matches!(self.status, TerminalStatus::Diverged { .. })
    }

    /// Recorded iterates as `(k, x_k)`; empty when iterates were not kept.
    pub fn iterates(&self) -> impl Iterator<Item = (usize, Vector)> + '_ {
        self.records
            .iter()
            .filter_map(|r| r.x.as_ref().map(|x| (r.k, Vector::from_column_slice(x))))
    }
}

/// Weighted sum accumulated left to right, starting from the first term.
fn combine(terms: &[(&Vector, f64)]) -> Vector {
    let (first, w0) = terms[0];
    let mut acc = first * w0;
    for (v, w) in &terms[1..] {
        for (a, b) in acc.iter_mut().zip(v.iter()) {
            *a += b * w;
        }
    }
    acc
}

fn diverged(last: &Vector) -> Error {
    Error::Diverged {
        k: 0,
        last_finite: last.as_slice().to_vec(),
    }
}

fn check_weights(alpha: f64, beta: f64) -> Result<()> {
    for (name, v) in [("alpha", alpha), ("beta", beta)] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::Parameter {
                name,
                value: v,
                interval: "(0, 1]".into(),
            });
        }
    }
    Ok(())
}

struct Evaluated {
    next: Vector,
    y: Vector,
    z: Vector,
}

fn trilevel_combine(p: &TrilevelProblem, x: &Vector, alpha: f64, beta: f64) -> Result<Evaluated> {
    let v = p.top.apply(x)?;
    let y = p.middle.apply(x)?;
    let z = p.bottom.apply(x)?;
    let next = combine(&[
        (&v, alpha),
        (&y, (1.0 - alpha) * beta),
        (&z, (1.0 - alpha) * (1.0 - beta)),
    ]);
    if next.iter().any(|c| !c.is_finite()) {
        return Err(diverged(x));
    }
    Ok(Evaluated { next, y, z })
}

struct RecordInput<'a> {
    k: usize,
    alpha: f64,
    beta: f64,
    weights: Option<Vec<f64>>,
    prev: &'a Vector,
    eval: &'a Evaluated,
    keep_x: bool,
}

fn make_record(
    selector: &LayerMap,
    middle: Option<&LayerMap>,
    bottom: &LayerMap,
    input: RecordInput<'_>,
) -> Result<IterateRecord> {
    let x = &input.eval.next;
    let res_w = (x - bottom.apply(x)?).norm();
    let res_t = match middle {
        Some(m) => Some((x - m.apply(x)?).norm()),
        None => None,
    };
    let phi1_y = match middle {
        Some(m) => m.objective(&input.eval.y)?,
        None => None,
    };
    Ok(IterateRecord {
        k: input.k,
        alpha: input.alpha,
        beta: input.beta,
        weights: input.weights,
        res_w,
        res_t,
        step_norm: (x - input.prev).norm(),
        phi1_y,
        phi2_z: bottom.objective(&input.eval.z)?,
        omega_x: selector.objective(x)?,
        x: input.keep_x.then(|| x.as_slice().to_vec()),
    })
}

/// One step `alpha S(x) + (1-alpha) beta T(x) + (1-alpha)(1-beta) W(x)`.
///
/// The returned record has `k = 0`; solvers fill in the index.
pub fn trilevel_step(
    p: &TrilevelProblem,
    x: &Vector,
    alpha: f64,
    beta: f64,
) -> Result<(Vector, IterateRecord)> {
    check_dim(p.dim(), x.len())?;
    check_weights(alpha, beta)?;
    let eval = trilevel_combine(p, x, alpha, beta)?;
    let rec = make_record(
        &p.top,
        Some(&p.middle),
        &p.bottom,
        RecordInput {
            k: 0,
            alpha,
            beta,
            weights: None,
            prev: x,
            eval: &eval,
            keep_x: true,
        },
    )?;
    Ok((eval.next, rec))
}

fn multilevel_combine(p: &MultilevelProblem, x: &Vector, weights: &[f64]) -> Result<Evaluated> {
    let n = p.levels();
    let v = p.selector.apply(x)?;
    let outputs: Vec<Vector> = p.layers.iter().map(|l| l.apply(x)).collect::<Result<_>>()?;
    // Selector first, then outermost layer down to the innermost one.
    let mut terms: Vec<(&Vector, f64)> = Vec::with_capacity(n + 1);
    terms.push((&v, weights[0]));
    for i in (0..n).rev() {
        terms.push((&outputs[i], weights[i + 1]));
    }
    let next = combine(&terms);
    if next.iter().any(|c| !c.is_finite()) {
        return Err(diverged(x));
    }
    let z = outputs[0].clone();
    let y = if n >= 2 {
        outputs[1].clone()
    } else {
        z.clone()
    };
    Ok(Evaluated { next, y, z })
}

fn check_weight_vector(weights: &[f64], levels: usize) -> Result<()> {
    if weights.len() != levels + 1 {
        return Err(Error::Dimension {
            expected: levels + 1,
            found: weights.len(),
        });
    }
    if let Some(i) = weights.iter().position(|w| !(*w >= 0.0)) {
        return Err(Error::Input(format!(
            "weight {i} = {} is negative",
            weights[i]
        )));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::Input(format!("weights sum to {sum}, not 1")));
    }
    Ok(())
}

/// One step `sum_i w_i T_i(x)` with `T_0` the selector.
pub fn multilevel_step(
    p: &MultilevelProblem,
    x: &Vector,
    weights: &[f64],
) -> Result<(Vector, IterateRecord)> {
    check_dim(p.dim(), x.len())?;
    check_weight_vector(weights, p.levels())?;
    let eval = multilevel_combine(p, x, weights)?;
    let rec = multilevel_record(p, 0, weights[0], f64::NAN, weights.to_vec(), x, &eval, true)?;
    Ok((eval.next, rec))
}

#[allow(clippy::too_many_arguments)]
fn multilevel_record(
    p: &MultilevelProblem,
    k: usize,
    alpha: f64,
    beta: f64,
    weights: Vec<f64>,
    prev: &Vector,
    eval: &Evaluated,
    keep_x: bool,
) -> Result<IterateRecord> {
    make_record(
        &p.selector,
        p.layers.get(1),
        &p.layers[0],
        RecordInput {
            k,
            alpha,
            beta,
            weights: Some(weights),
            prev,
            eval,
            keep_x,
        },
    )
}

/// Drives a step function over the schedule and assembles the trace.
fn run<F, R>(cfg: &SolverConfig, mut step: F, mut record: R) -> Result<Trace>
where
    F: FnMut(usize, &Vector) -> Result<(Evaluated, f64, f64, Option<Vec<f64>>)>,
    R: FnMut(usize, f64, f64, Option<Vec<f64>>, &Vector, &Evaluated) -> Result<IterateRecord>,
{
    let mut x = cfg.x0.clone();
    let mut records = Vec::with_capacity(cfg.max_iters / cfg.trace_every + 2);
    let mut status = TerminalStatus::MaxIters;
    let mut iterations = 0;
    for k in 1..=cfg.max_iters {
        let (eval, alpha, beta, weights) = match step(k, &x) {
            Ok(s) => s,
            Err(Error::Diverged { .. }) => {
                status = TerminalStatus::Diverged { k };
                break;
            }
            Err(e) => return Err(e),
        };
        iterations = k;
        let step_norm = (&eval.next - &x).norm();
        let blown = eval.next.norm() > cfg.divergence_guard;
        let converged = cfg.stop_residual > 0.0 && step_norm <= cfg.stop_residual;
        let last = k == cfg.max_iters || blown || converged;
        if k % cfg.trace_every == 0 || last {
            records.push(record(k, alpha, beta, weights, &x, &eval)?);
        }
        x = eval.next;
        if blown {
            status = TerminalStatus::Diverged { k };
            break;
        }
        if converged {
            status = TerminalStatus::ResidualMet { k };
            break;
        }
    }
    Ok(Trace {
        records,
        status,
        final_x: x,
        iterations,
    })
}

/// Iterates [`trilevel_step`] with `(alpha_k, beta_k)` from the schedule.
pub fn trilevel_solve(p: &TrilevelProblem, cfg: &SolverConfig) -> Result<Trace> {
    cfg.validate(p.dim())?;
    let keep_x = cfg.record_iterates;
    run(
        cfg,
        |k, x| {
            let (alpha, beta) = cfg.schedule.at(k + cfg.schedule_offset)?;
            let eval = trilevel_combine(p, x, alpha, beta)?;
            Ok((eval, alpha, beta, None))
        },
        |k, alpha, beta, weights, prev, eval| {
            make_record(
                &p.top,
                Some(&p.middle),
                &p.bottom,
                RecordInput {
                    k,
                    alpha,
                    beta,
                    weights,
                    prev,
                    eval,
                    keep_x,
                },
            )
        },
    )
}

/// Iterates [`multilevel_step`] with weights from the configured
/// [`WeightRule`] applied to the schedule pair at each `k`.
pub fn multilevel_solve(p: &MultilevelProblem, cfg: &SolverConfig) -> Result<Trace> {
    cfg.validate(p.dim())?;
    let keep_x = cfg.record_iterates;
    let n = p.levels();
    run(
        cfg,
        |k, x| {
            let (alpha, beta) = cfg.schedule.at(k + cfg.schedule_offset)?;
            let w = cfg.weight_rule.weights(alpha, beta, n)?;
            let eval = multilevel_combine(p, x, &w)?;
            Ok((eval, alpha, beta, Some(w)))
        },
        |k, alpha, beta, weights, prev, eval| {
            multilevel_record(
                p,
                k,
                alpha,
                beta,
                weights.unwrap_or_default(),
                prev,
                eval,
                keep_x,
            )
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{Contraction, CustomMap, SmoothSpec};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn clamp_problem() -> TrilevelProblem {
        let s = Contraction::new(SmoothSpec::squared_distance(v(&[0.0])).unwrap(), 0.75).unwrap();
        TrilevelProblem::new(
            s.into(),
            CustomMap::Clamp {
                lo: -1.0,
                hi: 1.0,
                dim: 1,
            }
            .into(),
            CustomMap::Clamp {
                lo: 0.0,
                hi: 2.0,
                dim: 1,
            }
            .into(),
        )
        .unwrap()
    }

    #[test]
    fn step_examples() {
        let p = clamp_problem();
        let (x, rec) = trilevel_step(&p, &v(&[1.0]), 0.5, 0.5).unwrap();
        assert!((x[0] - 0.625).abs() < 1e-15);
        assert_eq!(rec.phi1_y, None);
        let (x, _) = trilevel_step(&p, &v(&[3.0]), 1.0, 0.3).unwrap();
        assert_eq!(x[0], 0.75);
    }

    #[test]
    fn common_fixed_point_is_stationary() {
        let p = clamp_problem();
        for (a, b) in [(0.1, 0.9), (1.0, 1.0), (0.5, 0.01)] {
            let (x, rec) = trilevel_step(&p, &v(&[0.0]), a, b).unwrap();
            assert_eq!(x[0], 0.0);
            assert_eq!(rec.step_norm, 0.0);
        }
    }

    #[test]
    fn step_rejects_bad_weights() {
        let p = clamp_problem();
        assert!(trilevel_step(&p, &v(&[0.0]), 0.0, 0.5).is_err());
        assert!(trilevel_step(&p, &v(&[0.0]), 0.5, 1.5).is_err());
        assert!(trilevel_step(&p, &v(&[0.0, 1.0]), 0.5, 0.5).is_err());
    }

    #[test]
    fn identity_layers_fix_every_point() {
        let sel: LayerMap = CustomMap::Scale {
            factor: 1.0,
            dim: 2,
        }
        .into();
        assert!(MultilevelProblem::new(sel, vec![]).is_err());
        let sel: LayerMap = CustomMap::Scale {
            factor: 0.5,
            dim: 2,
        }
        .into();
        let id: LayerMap = CustomMap::Identity { dim: 2 }.into();
        let p = MultilevelProblem::new(sel, vec![id.clone(), id.clone(), id]).unwrap();
        let x = v(&[1.5, -2.0]);
        let (y, _) = multilevel_step(&p, &x, &[0.0, 0.5, 0.25, 0.25]).unwrap();
        assert_eq!(y, x);
        assert!(multilevel_step(&p, &x, &[0.1, 0.5, 0.25, 0.25]).is_err());
    }

    #[test]
    fn recording_cadence_and_termination() {
        let p = clamp_problem();
        let cfg = SolverConfig::new(Schedule::monomial(1.0, 2.0).unwrap(), 25, v(&[5.0]))
            .with_trace_every(10);
        let trace = trilevel_solve(&p, &cfg).unwrap();
        let ks: Vec<usize> = trace.records.iter().map(|r| r.k).collect();
        assert_eq!(ks, vec![10, 20, 25]);
        assert_eq!(trace.status, TerminalStatus::MaxIters);

        let cfg = cfg.with_stop_residual(1e-2);
        let trace = trilevel_solve(&p, &cfg).unwrap();
        assert!(matches!(trace.status, TerminalStatus::ResidualMet { .. }));
        assert!(trace.last().unwrap().step_norm <= 1e-2);
    }

    #[test]
    fn guard_stops_growth() {
        let p = TrilevelProblem::new(
            CustomMap::Scale {
                factor: 0.25,
                dim: 1,
            }
            .into(),
            CustomMap::Shift {
                offset: 5.0,
                dim: 1,
            }
            .into(),
            CustomMap::Identity { dim: 1 }.into(),
        )
        .unwrap();
        let cfg = SolverConfig::new(Schedule::monomial(1.0, 0.5).unwrap(), 1_000_000, v(&[1.0]))
            .with_trace_every(1000)
            .with_divergence_guard(100.0);
        let trace = trilevel_solve(&p, &cfg).unwrap();
        assert!(trace.diverged());
        assert!(trace.final_x.norm() > 100.0);
    }
}

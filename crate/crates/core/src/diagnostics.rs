//! Post-hoc checks of traces against the quantitative convergence claims:
//! boundedness constants, rate bounds under the rate schedule, empirical rate
//! fits, Fejér monotonicity, distance series, the half-space condition and
//! bounded linear regularity.
//!
//! All limit statements are checked over a finite horizon and reported as
//! such.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::operators::{LayerMap, Vector};
use crate::oracle::Projector;
use crate::schedules::{rate_constant_j, Delta, RegimeReport};
use crate::solver::{MultilevelProblem, Trace, TrilevelProblem};

/// Slack added to every bound comparison.
pub const BOUND_SLACK: f64 = 1e-8;
/// Slack used for the per-step Fejér and distance inequalities.
pub const STEP_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundConstants {
    pub c_x: f64,
    pub c_s: f64,
    pub c_t: f64,
    pub j: u64,
    pub r: f64,
    pub delta0: f64,
}

impl BoundConstants {
    /// `(C_S + 2 C_T + 5 C_x)`, the numerator shared by the step bounds.
    pub fn step_numerator(&self) -> f64 {
        self.c_s + 2.0 * self.c_t + 5.0 * self.c_x
    }
}

/// `delta0 = max(delta, 1) + 0.5`; fails for an infinite ratio.
pub fn default_delta0(report: &RegimeReport) -> Result<f64> {
    match report.delta {
        Delta::Infinite => Err(Error::Input(
            "boundedness constants need a finite step-size ratio".into(),
        )),
        d => Ok(d.value().max(1.0) + 0.5),
    }
}

fn constants_from(
    r: f64,
    x_ref: &Vector,
    x0: &Vector,
    s_ref: &Vector,
    t_ref: &Vector,
    delta0: f64,
) -> Result<BoundConstants> {
    if !(delta0 > 0.0 && delta0.is_finite()) {
        return Err(Error::Parameter {
            name: "delta0",
            value: delta0,
            interval: "(0, inf)".into(),
        });
    }
    let c_s = (s_ref - x_ref).norm();
    let c_t = (t_ref - x_ref).norm();
    let c_x = (x0 - x_ref).norm().max((c_s + delta0 * c_t) / (1.0 - r));
    Ok(BoundConstants {
        c_x,
        c_s,
        c_t,
        j: rate_constant_j(r),
        r,
        delta0,
    })
}

fn check_reference(w: &LayerMap, x_ref: &Vector) -> Result<()> {
    let res = (x_ref - w.apply(x_ref)?).norm();
    if res > 1e-8 {
        return Err(Error::Input(format!(
            "reference point is not a fixed point of W (residual {res:.3e})"
        )));
    }
    Ok(())
}

/// Boundedness constants at a reference point `x_ref` of `Fix(W)`:
/// `C_S = ||S(x_ref) - x_ref||`, `C_T = ||T(x_ref) - x_ref||` and
/// `C_x = max{||x0 - x_ref||, (C_S + delta0 C_T) / (1 - r)}`.
pub fn bound_constants(
    p: &TrilevelProblem,
    x_ref: &Vector,
    x0: &Vector,
    delta0: f64,
) -> Result<BoundConstants> {
    check_dim(p.dim(), x_ref.len())?;
    check_dim(p.dim(), x0.len())?;
    check_reference(p.bottom(), x_ref)?;
    let s = p.top().apply(x_ref)?;
    let t = p.middle().apply(x_ref)?;
    constants_from(p.contraction_factor(), x_ref, x0, &s, &t, delta0)
}

/// Multilevel analogue under nested weights: the outer layers act through
/// their average, which plays the role of `T`.
pub fn bound_constants_multilevel(
    p: &MultilevelProblem,
    x_ref: &Vector,
    x0: &Vector,
    delta0: f64,
) -> Result<BoundConstants> {
    check_dim(p.dim(), x_ref.len())?;
    check_dim(p.dim(), x0.len())?;
    let layers = p.layers();
    check_reference(&layers[0], x_ref)?;
    let s = p.selector().apply(x_ref)?;
    let t = if layers.len() == 1 {
        x_ref.clone()
    } else {
        let mut acc = Vector::zeros(p.dim());
        for l in &layers[1..] {
            acc += l.apply(x_ref)?;
        }
        acc / (layers.len() - 1) as f64
    };
    constants_from(p.contraction_factor(), x_ref, x0, &s, &t, delta0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub used: usize,
    /// Points in range dropped for a nonpositive value.
    pub excluded: usize,
}

/// Least-squares slope of `log(value)` against `log(k)` over `k` in
/// `[k_min, k_max]`.
pub fn rate_fit(series: &[(f64, f64)], k_min: f64, k_max: f64) -> Result<RateFit> {
    let in_range: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|(k, _)| *k >= k_min && *k <= k_max)
        .collect();
    let pts: Vec<(f64, f64)> = in_range
        .iter()
        .filter(|(k, v)| *k > 0.0 && *v > 0.0 && v.is_finite())
        .map(|(k, v)| (k.ln(), v.ln()))
        .collect();
    let excluded = in_range.len() - pts.len();
    if pts.is_empty() {
        return Err(Error::Fit(format!(
            "no positive values in [{k_min}, {k_max}] ({excluded} excluded)"
        )));
    }
    if pts.len() < 10 {
        return Err(Error::Fit(format!(
            "rate fit needs at least 10 points, got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all points share one k".into()));
    }
    let slope = sxy / sxx;
    Ok(RateFit {
        slope,
        intercept: my - slope * mx,
        used: pts.len(),
        excluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundRow {
    pub k: usize,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Per-k outcome of one inequality over a trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundSeries {
    pub checked: usize,
    pub skipped: usize,
    pub violations: usize,
    pub first_violation: Option<usize>,
    /// Smallest `bound - value` seen.
    pub worst_margin: f64,
    pub rows: Vec<BoundRow>,
}

impl BoundSeries {
    fn collect(rows: Vec<BoundRow>, skipped: usize) -> Self {
        let violations = rows.iter().filter(|r| !r.pass).count();
        BoundSeries {
            checked: rows.len(),
            skipped,
            violations,
            first_violation: rows.iter().find(|r| !r.pass).map(|r| r.k),
            worst_margin: rows
                .iter()
                .map(|r| r.bound - r.value)
                .fold(f64::INFINITY, f64::min),
            rows,
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0 && self.checked > 0
    }
}

/// Extra inputs for the bounds on the middle objective and the selector,
/// which additionally rest on the half-space condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalInputs {
    pub t: f64,
    pub phi1_star: f64,
    pub omega_star: f64,
    pub lipschitz_omega: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateBoundReport {
    pub phi2: BoundSeries,
    /// Only present when [`ConditionalInputs`] were given.
    pub phi1: Option<BoundSeries>,
    pub omega: Option<BoundSeries>,
    /// Pass/fail of the unconditional bound on the bottom objective.
    pub passed: bool,
}

/// Checks `phi2(z_k) - phi2* <= (C C_S + 2 C C_T + 5 C^2)(J + 2) / (s (1 - r)(k + 1))`
/// with `C = C_x` at every recorded `k`.
pub fn check_rate_bound(
    trace: &Trace,
    consts: &BoundConstants,
    s: f64,
    phi2_star: f64,
) -> Result<RateBoundReport> {
    check_rate_bound_with(trace, consts, s, phi2_star, None)
}

pub fn check_rate_bound_with(
    trace: &Trace,
    consts: &BoundConstants,
    s: f64,
    phi2_star: f64,
    conditional: Option<&ConditionalInputs>,
) -> Result<RateBoundReport> {
    if !(s > 0.0) {
        return Err(Error::Parameter {
            name: "bottom step s",
            value: s,
            interval: "(0, inf)".into(),
        });
    }
    let c = consts.c_x;
    let one_minus_r = 1.0 - consts.r;
    let j = consts.j as f64;
    let numer = (c * consts.c_s + 2.0 * c * consts.c_t + 5.0 * c * c) * (j + 2.0);
    let mut rows = Vec::with_capacity(trace.records.len());
    for rec in &trace.records {
        let Some(phi2) = rec.phi2_z else {
            return Err(Error::Input(format!(
                "record k = {} has no phi2 value",
                rec.k
            )));
        };
        let value = phi2 - phi2_star;
        let bound = numer / (s * one_minus_r * (rec.k as f64 + 1.0));
        rows.push(BoundRow {
            k: rec.k,
            value,
            bound,
            pass: value <= bound + BOUND_SLACK,
        });
    }
    let phi2 = BoundSeries::collect(rows, 0);
    let (phi1, omega) = match conditional {
        None => (None, None),
        Some(ci) => {
            let (mut r1, mut r2, mut skipped) = (Vec::new(), Vec::new(), 0);
            let r = consts.r;
            for rec in &trace.records {
                if rec.k < 2 {
                    skipped += 1;
                    continue;
                }
                let km1 = rec.k as f64 - 1.0;
                if let Some(p1) = rec.phi1_y {
                    let bound = c * j / (2.0 * ci.t * one_minus_r * km1);
                    let value = p1 - ci.phi1_star;
                    r1.push(BoundRow {
                        k: rec.k,
                        value,
                        bound,
                        pass: value <= bound + BOUND_SLACK,
                    });
                }
                if let Some(om) = rec.omega_x {
                    let lw = ci.lipschitz_omega;
                    let bound = (lw + lw * lw / (2.0 * ci.mu) * r * c)
                        * r
                        * (c * j / (one_minus_r * km1)).sqrt();
                    let value = om - ci.omega_star;
                    r2.push(BoundRow {
                        k: rec.k,
                        value,
                        bound,
                        pass: value <= bound + BOUND_SLACK,
                    });
                }
            }
            (
                Some(BoundSeries::collect(r1, skipped)),
                Some(BoundSeries::collect(r2, skipped)),
            )
        }
    };
    Ok(RateBoundReport {
        passed: phi2.passed(),
        phi2,
        phi1,
        omega,
    })
}

/// `||x_k - x_{k-1}|| <= (C_S + 2 C_T + 5 C_x) J / ((1 - r) k)` at every
/// recorded `k`.
pub fn check_step_bound(trace: &Trace, consts: &BoundConstants) -> BoundSeries {
    let numer = consts.step_numerator() * consts.j as f64;
    let rows = trace
        .records
        .iter()
        .map(|rec| {
            let bound = numer / ((1.0 - consts.r) * rec.k as f64);
            BoundRow {
                k: rec.k,
                value: rec.step_norm,
                bound,
                pass: rec.step_norm <= bound + BOUND_SLACK,
            }
        })
        .collect();
    BoundSeries::collect(rows, 0)
}

/// `||x_k - x_ref|| <= C_x` at every recorded iterate.
pub fn check_boundedness(trace: &Trace, x_ref: &Vector, c_x: f64) -> Result<BoundSeries> {
    let rows: Vec<BoundRow> = trace
        .iterates()
        .map(|(k, x)| {
            check_dim(x_ref.len(), x.len())?;
            let value = (x - x_ref).norm();
            Ok(BoundRow {
                k,
                value,
                bound: c_x,
                pass: value <= c_x + 1e-6,
            })
        })
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Err(Error::Input("trace carries no iterates".into()));
    }
    Ok(BoundSeries::collect(rows, 0))
}

fn iterates_for(trace: &Trace, dim: usize) -> Result<Vec<(usize, Vector)>> {
    let its: Vec<(usize, Vector)> = trace.iterates().collect();
    if its.is_empty() {
        return Err(Error::Input("trace carries no iterates".into()));
    }
    for (_, x) in &its {
        check_dim(dim, x.len())?;
    }
    Ok(its)
}

/// Parameters of the decay condition
/// `d^b(x_{(k+1)q}) <= d^b(x_{kq}) - lambda d^g(x_{kq})` with `g > b > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FejerRateParams {
    pub beta: f64,
    pub gamma: f64,
    pub q: usize,
    pub lambda: f64,
    /// Distance of the starting point to the reference set.
    pub d0: f64,
}

impl FejerRateParams {
    pub fn new(beta: f64, gamma: f64, q: usize, lambda: f64, d0: f64) -> Result<Self> {
        if !(gamma > beta && beta > 0.0) {
            return Err(Error::Input(format!(
                "need gamma > beta > 0, got beta = {beta}, gamma = {gamma}"
            )));
        }
        if q == 0 || !(lambda > 0.0) || !(d0 >= 0.0) {
            return Err(Error::Input("need q >= 1, lambda > 0, d0 >= 0".into()));
        }
        Ok(FejerRateParams {
            beta,
            gamma,
            q,
            lambda,
            d0,
        })
    }

    /// Envelope constant `M` of the bound `||x_k - x*|| <= M / k^{1/(g - b)}`.
    pub fn m(&self) -> f64 {
        let e = 1.0 / (self.gamma - self.beta);
        let a = 2.0
            * (2.0 * self.q as f64 * self.beta / ((self.gamma - self.beta) * self.lambda)).powf(e);
        let b = 2.0 * (2.0 * self.q as f64).powf(e) * self.d0;
        a.max(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FejerRateReport {
    pub condition_checked: usize,
    pub condition_violations: usize,
    pub envelope_checked: usize,
    pub envelope_violations: usize,
    pub m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FejerReport {
    pub passed: bool,
    pub checked: usize,
    pub violations: usize,
    pub first_violation: Option<usize>,
    /// Largest increase of a reference distance between recorded iterates.
    pub max_increase: f64,
    /// Records where `||x_k - x_bar|| <= 2 d(x_k, set)` fails, `x_bar` the
    /// projected final iterate.
    pub limit_distance_violations: usize,
    pub rate: Option<FejerRateReport>,
}

/// Fejér monotonicity of the recorded iterates against two points of the
/// set: the projection of the final iterate and the projection of the first
/// recorded iterate.
pub fn fejer_check(
    trace: &Trace,
    set: &dyn Projector,
    rate: Option<&FejerRateParams>,
) -> Result<FejerReport> {
    let its = iterates_for(trace, set.dim())?;
    let refs = [set.project(&its[its.len() - 1].1), set.project(&its[0].1)];
    let (mut violations, mut first, mut max_inc, mut checked) = (0, None, f64::NEG_INFINITY, 0);
    for w in its.windows(2) {
        for xr in &refs {
            let inc = (&w[1].1 - xr).norm() - (&w[0].1 - xr).norm();
            max_inc = max_inc.max(inc);
            checked += 1;
            if inc > STEP_SLACK {
                violations += 1;
                first.get_or_insert(w[1].0);
            }
        }
    }
    let limit_distance_violations = its
        .iter()
        .filter(|(_, x)| (x - &refs[0]).norm() > 2.0 * set.distance(x) + STEP_SLACK)
        .count();
    let rate = rate.map(|p| {
        let d: Vec<(usize, f64)> = its
            .iter()
            .filter(|(k, _)| k % p.q == 0)
            .map(|(k, x)| (*k, set.distance(x)))
            .collect();
        let mut cond = (0, 0);
        for w in d.windows(2) {
            if w[1].0 != w[0].0 + p.q {
                continue;
            }
            cond.0 += 1;
            let lhs = w[1].1.powf(p.beta);
            let rhs = w[0].1.powf(p.beta) - p.lambda * w[0].1.powf(p.gamma);
            if lhs > rhs + STEP_SLACK {
                cond.1 += 1;
            }
        }
        let m = p.m();
        let e = 1.0 / (p.gamma - p.beta);
        let mut env = (0, 0);
        for (k, x) in &its {
            env.0 += 1;
            if (x - &refs[0]).norm() > m / (*k as f64).powf(e) + STEP_SLACK {
                env.1 += 1;
            }
        }
        FejerRateReport {
            condition_checked: cond.0,
            condition_violations: cond.1,
            envelope_checked: env.0,
            envelope_violations: env.1,
            m,
        }
    });
    Ok(FejerReport {
        passed: violations == 0,
        checked,
        violations,
        first_violation: first,
        max_increase: if checked == 0 { 0.0 } else { max_inc },
        limit_distance_violations,
        rate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistanceRow {
    pub k: usize,
    pub h: f64,
    /// `2 ||x_prev - x_k|| - (h_k^2 - h_prev^2)^+ / h_k` against the previous
    /// record; `None` for the first record or when `h_k = 0`.
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceSeries {
    pub rows: Vec<DistanceRow>,
    pub inequality_checked: usize,
    pub inequality_violations: usize,
}

impl DistanceSeries {
    /// Number of increases of `h` after the first `burn_in` records.
    pub fn increases_after(&self, burn_in: usize, slack: f64) -> usize {
        self.rows
            .windows(2)
            .skip(burn_in)
            .filter(|w| w[1].h > w[0].h + slack)
            .count()
    }
}

/// Distances `h_k = d(x_k, set)` and the per-record margins of
/// `(h_{k+1}^2 - h_k^2)^+ / h_{k+1} <= 2 ||x_k - x_{k+1}||`.
pub fn distance_series(trace: &Trace, set: &dyn Projector) -> Result<DistanceSeries> {
    let its = iterates_for(trace, set.dim())?;
    let mut rows = Vec::with_capacity(its.len());
    let (mut checked, mut violations) = (0, 0);
    let mut prev: Option<(&Vector, f64)> = None;
    for (k, x) in &its {
        let h = set.distance(x);
        let margin = match prev {
            Some((xp, hp)) if h > 0.0 => {
                let lhs = (h * h - hp * hp).max(0.0) / h;
                let m = 2.0 * (xp - x).norm() - lhs;
                checked += 1;
                if m < -STEP_SLACK {
                    violations += 1;
                }
                Some(m)
            }
            _ => None,
        };
        rows.push(DistanceRow { k: *k, h, margin });
        prev = Some((x, h));
    }
    Ok(DistanceSeries {
        rows,
        inequality_checked: checked,
        inequality_violations: violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HalfspaceReport {
    pub evaluated: usize,
    pub burn_in: usize,
    /// Records where both inner products are strictly negative.
    pub both_negative: usize,
    pub fraction: f64,
    /// `T(x*) = x*`: the middle inequality can only hold with equality.
    pub t_vacuous: bool,
    pub s_vacuous: bool,
    /// Records where either inner product is zero within `1e-14`.
    pub boundary: usize,
}

/// Fraction of recorded iterates after `burn_in_fraction` of the trace at
/// which `<T(x*) - x*, x_k - x*> < 0` and `<S(x*) - x*, x_k - x*> < 0`.
pub fn halfspace_condition_check(
    trace: &Trace,
    x_star: &Vector,
    p: &TrilevelProblem,
    burn_in_fraction: f64,
) -> Result<HalfspaceReport> {
    check_dim(p.dim(), x_star.len())?;
    let its = iterates_for(trace, p.dim())?;
    let ds = p.top().apply(x_star)? - x_star;
    let dt = p.middle().apply(x_star)? - x_star;
    let burn_in = ((its.len() as f64) * burn_in_fraction.clamp(0.0, 1.0)).floor() as usize;
    let (mut both, mut boundary, mut evaluated) = (0, 0, 0);
    for (_, x) in its.iter().skip(burn_in) {
        let d = x - x_star;
        let (a, b) = (dt.dot(&d), ds.dot(&d));
        evaluated += 1;
        if a.abs() <= 1e-14 || b.abs() <= 1e-14 {
            boundary += 1;
        }
        if a < -1e-14 && b < -1e-14 {
            both += 1;
        }
    }
    Ok(HalfspaceReport {
        evaluated,
        burn_in,
        both_negative: both,
        fraction: if evaluated == 0 {
            0.0
        } else {
            both as f64 / evaluated as f64
        },
        t_vacuous: dt.norm() <= 1e-12,
        s_vacuous: ds.norm() <= 1e-12,
        boundary,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegularityReport {
    pub theta: f64,
    pub used: usize,
    pub skipped: usize,
    pub seed: u64,
}

/// Estimate of `theta` in `d(x, Fix W) <= theta ||x - W(x)||` over uniform
/// samples from the ball of radius `radius` about the origin.
pub fn regularity_check(
    w: &LayerMap,
    fix_w: &dyn Projector,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<RegularityReport> {
    check_dim(w.dim(), fix_w.dim())?;
    if !(radius > 0.0) || samples == 0 {
        return Err(Error::Input(
            "need a positive radius and sample count".into(),
        ));
    }
    let n = w.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut theta, mut used, mut skipped) = (0.0f64, 0, 0);
    for _ in 0..samples {
        let x = loop {
            let c = Vector::from_fn(n, |_, _| rng.gen_range(-radius..=radius));
            if c.norm() <= radius {
                break c;
            }
        };
        let res = (&x - w.apply(&x)?).norm();
        if res < 1e-12 {
            skipped += 1;
            continue;
        }
        used += 1;
        theta = theta.max(fix_w.distance(&x) / res);
    }
    if used == 0 {
        return Err(Error::Estimate(
            "every sample was a near-fixed point of W".into(),
        ));
    }
    Ok(RegularityReport {
        theta,
        used,
        skipped,
        seed,
    })
}

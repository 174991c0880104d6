//! Predetermined step-size sequences `(alpha_k, beta_k)`, multilevel weight
//! families, and classification of a schedule against the step-size
//! assumptions the convergence results rely on.
//!
//! Indexing starts at `k = 1`.

use serde::Serialize;

use crate::error::{Error, Result};

/// A step-size family. All kinds produce `alpha_k, beta_k` in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    /// `alpha_k = 1/(k+1)^lambda`, `beta_k = 1/(k+1)^gamma`; when
    /// `oscillate` is set the denominators carry the extra factors
    /// `2 + (-1)^k` and `3 + (-1)^k`.
    Power {
        lambda: f64,
        gamma: f64,
        oscillate: bool,
    },
    /// `alpha_k = 1/k^lambda`, `beta_k = 1/k^gamma`. Same asymptotics as the
    /// plain power family, but starting from `alpha_1 = beta_1 = 1`.
    Monomial { lambda: f64, gamma: f64 },
    /// `alpha_k = beta_k = min{2 / ((1 - r) k), 1}` for a contraction
    /// factor `r`.
    Rate { r: f64 },
    /// `alpha_k = 1/((k+1)(2+(-1)^k))`, `beta_k = 1/((k+1)(3+(-1)^k))`:
    /// the ratio `beta_k / alpha_k` has no limit but limsup 3/4.
    RatioCounterexample,
    /// Explicit finite list, entry `i` used at `k = i + 1`.
    Table { alphas: Vec<f64>, betas: Vec<f64> },
    /// `alpha_k = 1/(k+1)^alpha_exponent` with a constant `beta_k = beta`.
    ConstantBeta { alpha_exponent: f64, beta: f64 },
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter {
            name,
            value,
            interval: "(0, inf)".into(),
        })
    }
}

impl Schedule {
    pub fn power(lambda: f64, gamma: f64) -> Result<Self> {
        positive("lambda", lambda)?;
        positive("gamma", gamma)?;
        Ok(Schedule::Power {
            lambda,
            gamma,
            oscillate: false,
        })
    }

    pub fn oscillating_power(lambda: f64, gamma: f64) -> Result<Self> {
        positive("lambda", lambda)?;
        positive("gamma", gamma)?;
        Ok(Schedule::Power {
            lambda,
            gamma,
            oscillate: true,
        })
    }

    pub fn monomial(lambda: f64, gamma: f64) -> Result<Self> {
        positive("lambda", lambda)?;
        positive("gamma", gamma)?;
        Ok(Schedule::Monomial { lambda, gamma })
    }

    pub fn rate(r: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&r) {
            return Err(Error::Parameter {
                name: "rate schedule r",
                value: r,
                interval: "[0, 1)".into(),
            });
        }
        Ok(Schedule::Rate { r })
    }

    pub fn table(alphas: Vec<f64>, betas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() || alphas.len() != betas.len() {
            return Err(Error::Schedule(format!(
                "table needs equal non-empty alpha/beta lists, got {} and {}",
                alphas.len(),
                betas.len()
            )));
        }
        let bad = |v: &f64| !(*v > 0.0 && *v <= 1.0);
        if let Some(i) = alphas.iter().position(bad) {
            return Err(Error::Schedule(format!(
                "alpha[{i}] = {} not in (0, 1]",
                alphas[i]
            )));
        }
        if let Some(i) = betas.iter().position(bad) {
            return Err(Error::Schedule(format!(
                "beta[{i}] = {} not in (0, 1]",
                betas[i]
            )));
        }
        Ok(Schedule::Table { alphas, betas })
    }

    pub fn constant_beta(alpha_exponent: f64, beta: f64) -> Result<Self> {
        positive("alpha exponent", alpha_exponent)?;
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::Parameter {
                name: "constant beta",
                value: beta,
                interval: "(0, 1)".into(),
            });
        }
        Ok(Schedule::ConstantBeta {
            alpha_exponent,
            beta,
        })
    }

    /// `floor(2 / (1 - r))` for the rate kind.
    pub fn rate_constant_j(&self) -> Option<u64> {
        match self {
            Schedule::Rate { r } => Some(rate_constant_j(*r)),
            _ => None,
        }
    }

    /// Number of steps the schedule defines; `None` means unbounded.
    pub fn horizon(&self) -> Option<usize> {
        match self {
            Schedule::Table { alphas, .. } => Some(alphas.len()),
            _ => None,
        }
    }

    pub fn at(&self, k: usize) -> Result<(f64, f64)> {
        if k == 0 {
            return Err(Error::Input("schedule index starts at k = 1".into()));
        }
        let kf = k as f64;
        let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
        Ok(match self {
            Schedule::Power {
                lambda,
                gamma,
                oscillate,
            } => {
                let (fa, fb) = if *oscillate {
                    (2.0 + sign, 3.0 + sign)
                } else {
                    (1.0, 1.0)
                };
                (
                    1.0 / ((kf + 1.0).powf(*lambda) * fa),
                    1.0 / ((kf + 1.0).powf(*gamma) * fb),
                )
            }
            Schedule::Monomial { lambda, gamma } => (1.0 / kf.powf(*lambda), 1.0 / kf.powf(*gamma)),
            Schedule::Rate { r } => {
                let a = (2.0 / ((1.0 - r) * kf)).min(1.0);
                (a, a)
            }
            Schedule::RatioCounterexample => (
                1.0 / ((kf + 1.0) * (2.0 + sign)),
                1.0 / ((kf + 1.0) * (3.0 + sign)),
            ),
            Schedule::Table { alphas, betas } => match (alphas.get(k - 1), betas.get(k - 1)) {
                (Some(a), Some(b)) => (*a, *b),
                _ => {
                    return Err(Error::Schedule(format!(
                        "table schedule has {} entries, k = {k} requested",
                        alphas.len()
                    )))
                }
            },
            Schedule::ConstantBeta {
                alpha_exponent,
                beta,
            } => (1.0 / (kf + 1.0).powf(*alpha_exponent), *beta),
        })
    }

    pub fn is_analytic(&self) -> bool {
        matches!(
            self,
            Schedule::Power { .. } | Schedule::Monomial { .. } | Schedule::Rate { .. }
        )
    }
}

pub fn rate_constant_j(r: f64) -> u64 {
    (2.0 / (1.0 - r)).floor() as u64
}

/// Free-function form of [`Schedule::at`].
pub fn schedule_at(s: &Schedule, k: usize) -> Result<(f64, f64)> {
    s.at(k)
}

/// `limsup` / `lim` of `beta_k / alpha_k` in the extended reals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Delta {
    Zero,
    Finite(f64),
    Infinite,
}

impl Delta {
    pub fn is_finite(&self) -> bool {
        !matches!(self, Delta::Infinite)
    }

    /// Numeric value, with `Infinite` mapped to `f64::INFINITY`.
    pub fn value(&self) -> f64 {
        match self {
            Delta::Zero => 0.0,
            Delta::Finite(v) => *v,
            Delta::Infinite => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AssumptionFlags {
    /// `lim beta_k / alpha_k` exists in the extended reals.
    pub ratio_limit_exists: bool,
    /// `alpha_k -> 0` and `sum alpha_k = inf`.
    pub vanishing_alpha: bool,
    /// `limsup (1/alpha_k) |1/beta_k - 1/beta_{k-1}| < inf`.
    pub bounded_inverse_beta_variation: bool,
    /// `limsup (|beta_k - beta_{k-1}| + |alpha_k - alpha_{k-1}|) / (alpha_k beta_k) = 0`.
    pub slow_variation: bool,
    /// `limsup beta_k^2 / alpha_k = 0`.
    pub beta_sq_over_alpha_zero: bool,
    /// `limsup beta_k^2 / alpha_k < inf`.
    pub beta_sq_over_alpha_finite: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Table2Case {
    A,
    B,
    C,
    D,
    E,
    F,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub delta: Delta,
    /// `None` when the limit of the ratio does not exist.
    pub delta_tilde: Option<Delta>,
    pub delta_tilde_exists: bool,
    pub assumptions: AssumptionFlags,
    pub table2_case: Table2Case,
    /// Set when the report comes from a finite-horizon tail estimate.
    pub estimated: bool,
    pub rate_constant_j: Option<u64>,
}

/// Case label of the exponent pair `(lambda, gamma)` in the power family.
///
/// The cases overlap; they are tested in the order a, c, f, d, e, b so that
/// every case is reachable and (b) is reported only when nothing more
/// specific applies.
pub fn table2_case(lambda: f64, gamma: f64) -> Table2Case {
    let (l, g) = (lambda, gamma);
    if !(l > 0.0 && g > 0.0) {
        return Table2Case::None;
    }
    if l < g {
        Table2Case::A
    } else if l <= g && g < 1.0 && l + g < 1.0 {
        Table2Case::C
    } else if l == g && l < 1.0 {
        Table2Case::F
    } else if g < l && l <= 1.0 && l + g <= 1.0 && l <= 2.0 * g {
        Table2Case::D
    } else if g < l && l <= 1.0 && l + g <= 1.0 {
        Table2Case::E
    } else if (l <= g && g < 1.0) || (g < l && l < 1.0) {
        Table2Case::B
    } else {
        Table2Case::None
    }
}

/// Classify a schedule. Power and rate kinds are classified analytically;
/// other kinds get tail-window estimates over `horizon` steps.
pub fn classify_regime(s: &Schedule, horizon: usize) -> Result<RegimeReport> {
    match s {
        Schedule::Power {
            lambda,
            gamma,
            oscillate,
        } => Ok(classify_power(*lambda, *gamma, *oscillate)),
        Schedule::Monomial { lambda, gamma } => Ok(classify_power(*lambda, *gamma, false)),
        Schedule::Rate { r } => Ok(classify_rate(*r)),
        _ => estimate_regime(s, horizon),
    }
}

fn classify_power(l: f64, g: f64, oscillate: bool) -> RegimeReport {
    // For the oscillating family beta_k/alpha_k alternates between
    // (k+1)^(l-g) * 3/4 (k even) and (k+1)^(l-g) * 1/2 (k odd).
    let delta = if l < g {
        Delta::Zero
    } else if l == g {
        Delta::Finite(if oscillate { 0.75 } else { 1.0 })
    } else {
        Delta::Infinite
    };
    let delta_tilde = if oscillate && l == g {
        None
    } else {
        Some(delta)
    };
    // Consecutive oscillating terms differ at the order of the terms
    // themselves, which makes both variation conditions fail.
    let assumptions = AssumptionFlags {
        ratio_limit_exists: delta_tilde.is_some(),
        vanishing_alpha: l <= 1.0,
        bounded_inverse_beta_variation: !oscillate && l + g <= 1.0,
        slow_variation: !oscillate && l < 1.0 && g < 1.0,
        beta_sq_over_alpha_zero: l < 2.0 * g,
        beta_sq_over_alpha_finite: l <= 2.0 * g,
    };
    RegimeReport {
        delta,
        delta_tilde,
        delta_tilde_exists: delta_tilde.is_some(),
        assumptions,
        table2_case: table2_case(l, g),
        estimated: false,
        rate_constant_j: None,
    }
}

fn classify_rate(r: f64) -> RegimeReport {
    // alpha_k = beta_k = c/k eventually (c = 2/(1-r)):
    //   (1/alpha_k)|1/beta_k - 1/beta_{k-1}| = k/c^2 -> inf
    //   (|d beta| + |d alpha|)/(alpha beta)   -> 2/c = 1 - r != 0
    //   beta_k^2/alpha_k = c/k -> 0
    RegimeReport {
        delta: Delta::Finite(1.0),
        delta_tilde: Some(Delta::Finite(1.0)),
        delta_tilde_exists: true,
        assumptions: AssumptionFlags {
            ratio_limit_exists: true,
            vanishing_alpha: true,
            bounded_inverse_beta_variation: false,
            slow_variation: false,
            beta_sq_over_alpha_zero: true,
            beta_sq_over_alpha_finite: true,
        },
        table2_case: Table2Case::None,
        estimated: false,
        rate_constant_j: Some(rate_constant_j(r)),
    }
}

/// Windowed statistics of a derived sequence `q_k`.
struct Windows {
    early_max: f64,
    tail_max: f64,
    tail_min: f64,
}

/// Slack on estimated growth exponents below which a sequence counts as flat.
const EXPONENT_SLACK: f64 = 0.05;

fn windows(horizon: usize, q: impl Fn(usize) -> f64) -> Windows {
    let (a, b) = (horizon / 4, horizon / 2);
    let early = (a.max(2)..b).map(&q);
    let tail: Vec<f64> = (b..=horizon).map(&q).collect();
    Windows {
        early_max: early.fold(f64::NEG_INFINITY, f64::max),
        tail_max: tail.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        tail_min: tail.iter().copied().fold(f64::INFINITY, f64::min),
    }
}

impl Windows {
    /// Power-law exponent of the running sup between the two windows, whose
    /// index ranges differ by a factor of two.
    fn growth(&self) -> f64 {
        if self.early_max <= 0.0 {
            return if self.tail_max <= 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
        }
        (self.tail_max.max(0.0) / self.early_max).log2()
    }

    fn vanishing(&self) -> bool {
        self.tail_max < 1e-12 || self.growth() < -EXPONENT_SLACK
    }

    fn bounded(&self) -> bool {
        self.growth() <= EXPONENT_SLACK
    }
}

/// Tail-window estimate over `k` in `[horizon/2, horizon]`, compared against
/// `[horizon/4, horizon/2)` to judge growth or decay.
pub fn estimate_regime(s: &Schedule, horizon: usize) -> Result<RegimeReport> {
    if horizon < 100 {
        return Err(Error::Input(format!(
            "regime estimation needs horizon >= 100, got {horizon}"
        )));
    }
    if let Some(len) = s.horizon() {
        if len < horizon {
            return Err(Error::Schedule(format!(
                "table schedule has {len} entries, horizon {horizon} requested"
            )));
        }
    }
    let ab: Vec<(f64, f64)> = (1..=horizon).map(|k| s.at(k)).collect::<Result<_>>()?;
    let at = |k: usize| ab[k - 1];

    let ratio = windows(horizon, |k| at(k).1 / at(k).0);
    let delta = if !ratio.bounded() {
        Delta::Infinite
    } else if ratio.vanishing() {
        Delta::Zero
    } else {
        Delta::Finite(ratio.tail_max)
    };
    let spread = (ratio.tail_max - ratio.tail_min) / ratio.tail_max.max(1e-300);
    let delta_tilde = match delta {
        Delta::Infinite => (ratio.tail_min > ratio.early_max).then_some(Delta::Infinite),
        Delta::Zero => Some(Delta::Zero),
        Delta::Finite(v) => (spread < 1e-2).then_some(Delta::Finite(v)),
    };

    let alpha = windows(horizon, |k| at(k).0);
    let early_sum: f64 = (horizon / 4..horizon / 2).map(|k| at(k).0).sum();
    let tail_sum: f64 = (horizon / 2..horizon).map(|k| at(k).0).sum();
    // Partial sums over dyadic blocks shrink geometrically iff the series
    // converges.
    let vanishing_alpha = alpha.vanishing() && (tail_sum / early_sum).log2() >= -EXPONENT_SLACK;

    let inv_beta = windows(horizon, |k| {
        (1.0 / at(k).1 - 1.0 / at(k - 1).1).abs() / at(k).0
    });
    let variation = windows(horizon, |k| {
        let (a, b) = at(k);
        let (a0, b0) = at(k - 1);
        ((b - b0).abs() + (a - a0).abs()) / (a * b)
    });
    let beta_sq = windows(horizon, |k| at(k).1 * at(k).1 / at(k).0);

    Ok(RegimeReport {
        delta,
        delta_tilde,
        delta_tilde_exists: delta_tilde.is_some(),
        assumptions: AssumptionFlags {
            ratio_limit_exists: delta_tilde.is_some(),
            vanishing_alpha,
            bounded_inverse_beta_variation: inv_beta.bounded(),
            slow_variation: variation.vanishing(),
            beta_sq_over_alpha_zero: beta_sq.vanishing(),
            beta_sq_over_alpha_finite: beta_sq.bounded(),
        },
        table2_case: Table2Case::None,
        estimated: true,
        rate_constant_j: s.rate_constant_j(),
    })
}

/// Uniform-tail weights `(alpha^(0), ..., alpha^(N))` built from one step of
/// a base schedule: `alpha^(0) = alpha_k`, `alpha^(i) = beta_k / (N - 1)` for
/// `i >= 2`, and `alpha^(1)` takes the remainder.
pub fn make_multilevel_weights(k: usize, levels: usize, base: &Schedule) -> Result<Vec<f64>> {
    let (alpha, beta) = base.at(k)?;
    uniform_tail_weights(alpha, beta, levels)
}

pub fn uniform_tail_weights(alpha: f64, beta: f64, levels: usize) -> Result<Vec<f64>> {
    if levels == 0 {
        return Err(Error::Input(
            "multilevel problem needs at least one layer".into(),
        ));
    }
    if levels == 1 {
        return Ok(vec![alpha, 1.0 - alpha]);
    }
    if alpha + beta > 1.0 {
        return Err(Error::Schedule(format!(
            "alpha + beta = {} exceeds 1, so the innermost weight would be negative; \
             start the schedule at a later index or use smaller constants",
            alpha + beta
        )));
    }
    let tail = beta / (levels - 1) as f64;
    let mut w = Vec::with_capacity(levels + 1);
    w.push(alpha);
    w.push(0.0);
    w.extend(std::iter::repeat_n(tail, levels - 1));
    let rest: f64 = w.iter().sum();
    w[1] = (1.0 - rest).max(0.0);
    Ok(w)
}

/// Nested weights `alpha`, `(1-alpha)(1-beta)` on the innermost layer and
/// `(1-alpha) beta / (N-1)` on each outer layer. For two layers this is the
/// trilevel combination exactly.
pub fn nested_weights(alpha: f64, beta: f64, levels: usize) -> Result<Vec<f64>> {
    if levels == 0 {
        return Err(Error::Input(
            "multilevel problem needs at least one layer".into(),
        ));
    }
    if levels == 1 {
        return Ok(vec![alpha, 1.0 - alpha]);
    }
    let tail = (1.0 - alpha) * beta / (levels - 1) as f64;
    let mut w = Vec::with_capacity(levels + 1);
    w.push(alpha);
    w.push((1.0 - alpha) * (1.0 - beta));
    w.extend(std::iter::repeat_n(tail, levels - 1));
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        let s = Schedule::power(1.0, 2.0).unwrap();
        let (a, b) = s.at(2).unwrap();
        assert!((a - 1.0 / 3.0).abs() < 1e-16 && (b - 1.0 / 9.0).abs() < 1e-16);

        let s = Schedule::rate(0.5).unwrap();
        assert_eq!(s.at(2).unwrap(), (1.0, 1.0));
        assert_eq!(s.at(8).unwrap(), (0.5, 0.5));
        assert_eq!(s.rate_constant_j(), Some(4));

        let (a, b) = Schedule::RatioCounterexample.at(2).unwrap();
        assert!((a - 1.0 / 9.0).abs() < 1e-16);
        assert!((b - 1.0 / 12.0).abs() < 1e-16);
        assert!((b / a - 0.75).abs() < 1e-15);
    }

    #[test]
    fn monomial_starts_at_one() {
        let s = Schedule::monomial(1.0, 0.5).unwrap();
        assert_eq!(s.at(1).unwrap(), (1.0, 1.0));
        assert_eq!(s.at(4).unwrap(), (0.25, 0.5));
    }

    #[test]
    fn k_zero_rejected() {
        assert!(matches!(
            Schedule::RatioCounterexample.at(0),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn table_out_of_range() {
        let s = Schedule::table(vec![0.5, 0.25], vec![0.5, 0.25]).unwrap();
        assert_eq!(s.at(2).unwrap(), (0.25, 0.25));
        assert!(matches!(s.at(3), Err(Error::Schedule(_))));
        assert!(Schedule::table(vec![1.5], vec![0.5]).is_err());
    }

    #[test]
    fn classify_examples() {
        let r = classify_regime(&Schedule::oscillating_power(0.3, 0.5).unwrap(), 0).unwrap();
        assert_eq!(r.delta, Delta::Zero);
        assert_eq!(r.table2_case, Table2Case::A);

        let r = classify_regime(&Schedule::oscillating_power(0.6, 0.35).unwrap(), 0).unwrap();
        assert_eq!(r.delta, Delta::Infinite);
        assert_eq!(r.table2_case, Table2Case::D);

        let r = classify_regime(&Schedule::oscillating_power(0.5, 0.5).unwrap(), 0).unwrap();
        assert_eq!(r.delta, Delta::Finite(0.75));
        assert!(!r.delta_tilde_exists);
        assert_eq!(r.table2_case, Table2Case::F);

        let r = classify_regime(&Schedule::power(0.5, 0.5).unwrap(), 0).unwrap();
        assert_eq!(r.delta, Delta::Finite(1.0));
        assert!(r.delta_tilde_exists);
    }

    #[test]
    fn plain_power_flags() {
        let r = classify_regime(&Schedule::power(1.5, 2.0).unwrap(), 0).unwrap();
        assert!(!r.assumptions.vanishing_alpha);
        let r = classify_regime(&Schedule::power(0.4, 0.5).unwrap(), 0).unwrap();
        let f = r.assumptions;
        assert!(f.vanishing_alpha && f.bounded_inverse_beta_variation && f.slow_variation);
        assert!(f.beta_sq_over_alpha_zero && f.beta_sq_over_alpha_finite);
        let r = classify_regime(&Schedule::power(1.0, 0.5).unwrap(), 0).unwrap();
        assert!(!r.assumptions.beta_sq_over_alpha_zero);
        assert!(r.assumptions.beta_sq_over_alpha_finite);
    }

    #[test]
    fn estimate_agrees_with_analytic_plain_power() {
        // The tail estimator is only a surrogate, but on a clean power law it
        // must reproduce the analytic flags once exponent gaps exceed the
        // estimator slack.
        for (l, g) in [(0.3, 0.6), (0.5, 0.5), (0.6, 0.3), (0.4, 0.55)] {
            let s = Schedule::power(l, g).unwrap();
            let alphas: Vec<f64> = (1..=20_000).map(|k| s.at(k).unwrap().0).collect();
            let betas: Vec<f64> = (1..=20_000).map(|k| s.at(k).unwrap().1).collect();
            let est = estimate_regime(&Schedule::table(alphas, betas).unwrap(), 20_000).unwrap();
            let exact = classify_regime(&s, 0).unwrap();
            assert!(est.estimated);
            assert_eq!(
                std::mem::discriminant(&est.delta),
                std::mem::discriminant(&exact.delta),
                "({l}, {g})"
            );
            assert_eq!(est.assumptions, exact.assumptions, "({l}, {g})");
        }
    }

    #[test]
    fn oscillating_family_violates_variation_conditions() {
        // Numeric check of the analytic claim that oscillation breaks the
        // slow-variation conditions even for small exponents.
        let s = Schedule::oscillating_power(0.3, 0.4).unwrap();
        let slow = windows(10_000, |k| {
            let (a, b) = s.at(k).unwrap();
            let (a0, b0) = s.at(k - 1).unwrap();
            ((b - b0).abs() + (a - a0).abs()) / (a * b)
        });
        assert!(slow.tail_max > slow.early_max);
        let r = classify_regime(&s, 0).unwrap();
        assert!(!r.assumptions.slow_variation);
        assert!(!r.assumptions.bounded_inverse_beta_variation);
    }

    #[test]
    fn ratio_counterexample_estimate() {
        let r = classify_regime(&Schedule::RatioCounterexample, 100_000).unwrap();
        assert!(r.estimated);
        match r.delta {
            Delta::Finite(v) => assert!((0.7499..=0.7501).contains(&v)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(!r.delta_tilde_exists);
    }

    #[test]
    fn rate_is_classified_exactly() {
        let r = classify_regime(&Schedule::rate(0.5).unwrap(), 0).unwrap();
        assert!(!r.estimated);
        assert_eq!(r.rate_constant_j, Some(4));
        assert!(!r.assumptions.slow_variation);
    }

    #[test]
    fn weight_examples() {
        let w = uniform_tail_weights(0.2, 0.2, 3).unwrap();
        let expected = [0.2, 0.6, 0.1, 0.1];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(uniform_tail_weights(0.3, 0.9, 1).unwrap(), vec![0.3, 0.7]);
        assert!(matches!(
            uniform_tail_weights(0.7, 0.5, 2),
            Err(Error::Schedule(_))
        ));
    }

    #[test]
    fn nested_weights_reduce_to_trilevel() {
        let (a, b) = (0.3, 0.4);
        let w = nested_weights(a, b, 2).unwrap();
        assert_eq!(w, vec![a, (1.0 - a) * (1.0 - b), (1.0 - a) * b]);
    }
}

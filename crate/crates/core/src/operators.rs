//! Exact proximal operators, proximal-gradient maps and the gradient
//! contraction used by the selector level.
//!
//! Every map here is immutable after construction and evaluation is pure.
//! Construction validates the analytic constants (Lipschitz modulus, strong
//! convexity, admissible step) so that an evaluated map is always
//! nonexpansive, or a strict contraction for [`Contraction`].

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, check_finite, Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Tolerance on constraint violation below which an indicator evaluates to 0.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Relative singular-value cutoff used for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-12;

/// A smooth convex term with Lipschitz gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothSpec {
    kind: SmoothKind,
    lipschitz: f64,
    strong_convexity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SmoothKind {
    /// The zero function on `R^dim`.
    Zero { dim: usize },
    /// `0.5 x'Qx - b'x + c` with `Q` symmetric positive semidefinite.
    Quadratic { q: Matrix, b: Vector, c: f64 },
}

impl SmoothSpec {
    pub fn zero(dim: usize) -> Self {
        SmoothSpec {
            kind: SmoothKind::Zero { dim },
            lipschitz: 0.0,
            strong_convexity: 0.0,
        }
    }

    /// `0.5 x'Qx - b'x + c`. Rejects non-symmetric or indefinite `Q`.
    pub fn quadratic(q: Matrix, b: Vector, c: f64) -> Result<Self> {
        let n = q.nrows();
        if n == 0 || q.ncols() != n {
            return Err(Error::Input(format!(
                "quadratic matrix must be square and non-empty, got {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        check_dim(n, b.len())?;
        check_finite("Q", q.as_slice())?;
        check_finite("b", b.as_slice())?;
        if !c.is_finite() {
            return Err(Error::Input("constant term is not finite".into()));
        }
        let scale = q.amax().max(1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                if (q[(i, j)] - q[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::Input(format!(
                        "Q is not symmetric at ({i}, {j}): {} vs {}",
                        q[(i, j)],
                        q[(j, i)]
                    )));
                }
            }
        }
        let eig = SymmetricEigen::new(q.clone());
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if min < -1e-10 * scale {
            return Err(Error::Input(format!(
                "Q is not positive semidefinite (smallest eigenvalue {min})"
            )));
        }
        let lipschitz = max.max(0.0);
        let strong_convexity = min.max(0.0).min(lipschitz);
        Ok(SmoothSpec {
            kind: SmoothKind::Quadratic { q, b, c },
            lipschitz,
            strong_convexity,
        })
    }

    /// `0.5 ||x - center||^2`.
    pub fn squared_distance(center: Vector) -> Result<Self> {
        let n = center.len();
        let c = 0.5 * center.norm_squared();
        Self::quadratic(Matrix::identity(n, n), center, c)
    }

    /// `0.5 ||A x - y||^2`.
    pub fn least_squares(a: &Matrix, y: &Vector) -> Result<Self> {
        check_dim(a.nrows(), y.len())?;
        let q = a.transpose() * a;
        let q = 0.5 * (&q + q.transpose());
        Self::quadratic(q, a.transpose() * y, 0.5 * y.norm_squared())
    }

    pub fn kind(&self) -> &SmoothKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            SmoothKind::Zero { dim } => *dim,
            SmoothKind::Quadratic { b, .. } => b.len(),
        }
    }

    /// Largest eigenvalue of the Hessian.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Smallest eigenvalue of the Hessian.
    pub fn strong_convexity(&self) -> f64 {
        self.strong_convexity
    }

    pub fn value(&self, x: &Vector) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(match &self.kind {
            SmoothKind::Zero { .. } => 0.0,
            SmoothKind::Quadratic { q, b, c } => 0.5 * x.dot(&(q * x)) - b.dot(x) + c,
        })
    }

    pub fn gradient(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.dim(), x.len())?;
        Ok(match &self.kind {
            SmoothKind::Zero { dim } => Vector::zeros(*dim),
            SmoothKind::Quadratic { q, b, .. } => q * x - b,
        })
    }
}

/// Orthogonal projection onto `{x : A x = c}` via a rank-revealing SVD.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineConstraint {
    a: Matrix,
    c: Vector,
    // Right singular vectors of the retained rank and the minimum-norm
    // solution coordinates in that basis.
    row_basis: Matrix,
    target: Vector,
}

impl AffineConstraint {
    pub fn new(a: Matrix, c: Vector) -> Result<Self> {
        check_dim(a.nrows(), c.len())?;
        if a.ncols() == 0 {
            return Err(Error::Input("affine constraint has zero columns".into()));
        }
        check_finite("A", a.as_slice())?;
        check_finite("c", c.as_slice())?;
        let svd = a.clone().svd(true, true);
        let u = svd.u.as_ref().expect("requested U");
        let v_t = svd.v_t.as_ref().expect("requested V^T");
        let sigma_max = svd.singular_values.max();
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| sigma_max > 0.0 && svd.singular_values[i] > RANK_TOL * sigma_max)
            .collect();
        let n = a.ncols();
        let mut row_basis = Matrix::zeros(n, keep.len());
        let mut target = Vector::zeros(keep.len());
        for (j, &i) in keep.iter().enumerate() {
            row_basis.set_column(j, &v_t.row(i).transpose());
            target[j] = u.column(i).dot(&c) / svd.singular_values[i];
        }
        let x_min = &row_basis * &target;
        let residual = (&a * &x_min - &c).norm();
        if residual > RANK_TOL * (1.0 + c.norm()) * 100.0 {
            return Err(Error::Input(format!(
                "affine system A x = c is inconsistent (least-squares residual {residual:.3e})"
            )));
        }
        Ok(AffineConstraint {
            a,
            c,
            row_basis,
            target,
        })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn rhs(&self) -> &Vector {
        &self.c
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn rank(&self) -> usize {
        self.row_basis.ncols()
    }

    pub fn project(&self, x: &Vector) -> Vector {
        let coords = self.row_basis.transpose() * x - &self.target;
        x - &self.row_basis * coords
    }

    pub fn violation(&self, x: &Vector) -> f64 {
        (&self.a * x - &self.c).norm()
    }
}

/// A proper, lower semicontinuous convex term with a closed-form prox.
#[derive(Debug, Clone, PartialEq)]
pub enum ProxableSpec {
    Zero { dim: usize },
    L1 { weight: f64, dim: usize },
    Box { lo: Vector, hi: Vector },
    AffineEq(AffineConstraint),
    Ball { center: Vector, radius: f64 },
}

impl ProxableSpec {
    pub fn zero(dim: usize) -> Self {
        ProxableSpec::Zero { dim }
    }

    pub fn l1(weight: f64, dim: usize) -> Result<Self> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::Parameter {
                name: "l1 weight",
                value: weight,
                interval: "(0, inf)".into(),
            });
        }
        Ok(ProxableSpec::L1 { weight, dim })
    }

    pub fn boxed(lo: Vector, hi: Vector) -> Result<Self> {
        check_dim(lo.len(), hi.len())?;
        // Infinite bounds are allowed; NaN is not.
        if let Some(i) = (0..lo.len()).find(|&i| lo[i].is_nan() || hi[i].is_nan()) {
            return Err(Error::Input(format!("box bound {i} is NaN")));
        }
        if let Some(i) = (0..lo.len()).find(|&i| lo[i] > hi[i]) {
            return Err(Error::Input(format!(
                "box lower bound exceeds upper bound at {i}: {} > {}",
                lo[i], hi[i]
            )));
        }
        Ok(ProxableSpec::Box { lo, hi })
    }

    pub fn affine_eq(a: Matrix, c: Vector) -> Result<Self> {
        AffineConstraint::new(a, c).map(ProxableSpec::AffineEq)
    }

    pub fn ball(center: Vector, radius: f64) -> Result<Self> {
        check_finite("center", center.as_slice())?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Parameter {
                name: "ball radius",
                value: radius,
                interval: "(0, inf)".into(),
            });
        }
        Ok(ProxableSpec::Ball { center, radius })
    }

    pub fn dim(&self) -> usize {
        match self {
            ProxableSpec::Zero { dim } | ProxableSpec::L1 { dim, .. } => *dim,
            ProxableSpec::Box { lo, .. } => lo.len(),
            ProxableSpec::AffineEq(a) => a.dim(),
            ProxableSpec::Ball { center, .. } => center.len(),
        }
    }

    pub fn is_indicator(&self) -> bool {
        matches!(
            self,
            ProxableSpec::Box { .. } | ProxableSpec::AffineEq(_) | ProxableSpec::Ball { .. }
        )
    }

    /// Distance-like measure of infeasibility; zero for non-indicator kinds.
    pub fn violation(&self, x: &Vector) -> f64 {
        match self {
            ProxableSpec::Zero { .. } | ProxableSpec::L1 { .. } => 0.0,
            ProxableSpec::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi.iter()))
                .map(|(&v, (&l, &h))| (l - v).max(v - h).max(0.0))
                .fold(0.0, f64::max),
            ProxableSpec::AffineEq(a) => a.violation(x),
            ProxableSpec::Ball { center, radius } => ((x - center).norm() - radius).max(0.0),
        }
    }

    /// Value of the term; indicators return `+inf` when the violation exceeds
    /// [`FEASIBILITY_TOL`].
    pub fn value(&self, x: &Vector) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(match self {
            ProxableSpec::Zero { .. } => 0.0,
            ProxableSpec::L1 { weight, .. } => weight * x.lp_norm(1),
            _ => {
                if self.violation(x) > FEASIBILITY_TOL {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
        })
    }

    /// `argmin_u { g(u) + ||u - x||^2 / (2t) }`.
    pub fn prox(&self, t: f64, x: &Vector) -> Result<Vector> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Parameter {
                name: "prox step",
                value: t,
                interval: "(0, inf)".into(),
            });
        }
        check_dim(self.dim(), x.len())?;
        Ok(match self {
            ProxableSpec::Zero { .. } => x.clone(),
            ProxableSpec::L1 { weight, .. } => {
                let tau = t * weight;
                x.map(|v| v.signum() * (v.abs() - tau).max(0.0))
            }
            ProxableSpec::Box { lo, hi } => {
                Vector::from_iterator(x.len(), (0..x.len()).map(|i| x[i].clamp(lo[i], hi[i])))
            }
            ProxableSpec::AffineEq(a) => a.project(x),
            ProxableSpec::Ball { center, radius } => {
                let d = x - center;
                let norm = d.norm();
                if norm <= *radius {
                    x.clone()
                } else {
                    center + d * (radius / norm)
                }
            }
        })
    }
}

/// Contraction factor of `x - u grad(omega)(x)` for a `mu`-strongly convex
/// `omega` with `L`-Lipschitz gradient.
pub fn contraction_factor(u: f64, mu: f64, lipschitz: f64) -> Result<f64> {
    if !(mu > 0.0 && mu <= lipschitz && lipschitz.is_finite()) {
        return Err(Error::Parameter {
            name: "strong convexity",
            value: mu,
            interval: format!("(0, {lipschitz}]"),
        });
    }
    let upper = 2.0 / (lipschitz + mu);
    if !(u > 0.0 && u <= upper * (1.0 + 1e-12)) {
        return Err(Error::Parameter {
            name: "contraction step",
            value: u,
            interval: format!("(0, {upper}]"),
        });
    }
    let radicand = 1.0 - 2.0 * u * mu * lipschitz / (mu + lipschitz);
    Ok(radicand.max(0.0).sqrt())
}

/// `S(x) = x - u grad(omega)(x)` with its certified contraction factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Contraction {
    omega: SmoothSpec,
    step: f64,
    factor: f64,
}

impl Contraction {
    pub fn new(omega: SmoothSpec, step: f64) -> Result<Self> {
        let factor = contraction_factor(step, omega.strong_convexity(), omega.lipschitz())?;
        Ok(Contraction {
            omega,
            step,
            factor,
        })
    }

    /// Step `2 / (L + mu)`.
    pub fn with_auto_step(omega: SmoothSpec) -> Result<Self> {
        let step = 2.0 / (omega.lipschitz() + omega.strong_convexity());
        Self::new(omega, step)
    }

    pub fn omega(&self) -> &SmoothSpec {
        &self.omega
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn factor(&self) -> f64 {
        self.factor
    }

    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        let g = self.omega.gradient(x)?;
        Ok(x - g * self.step)
    }
}

/// `T_t(x) = prox_{t g}(x - t grad f(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxGrad {
    smooth: SmoothSpec,
    nonsmooth: ProxableSpec,
    step: f64,
}

impl ProxGrad {
    pub fn new(smooth: SmoothSpec, nonsmooth: ProxableSpec, step: f64) -> Result<Self> {
        check_dim(smooth.dim(), nonsmooth.dim())?;
        let lf = smooth.lipschitz();
        let upper = if lf > 0.0 { 1.0 / lf } else { f64::INFINITY };
        if !(step > 0.0 && step.is_finite() && step <= upper * (1.0 + 1e-12)) {
            return Err(Error::Parameter {
                name: "prox-grad step",
                value: step,
                interval: format!("(0, {upper}]"),
            });
        }
        Ok(ProxGrad {
            smooth,
            nonsmooth,
            step,
        })
    }

    /// Step `1 / L`, or `1` when the smooth part has zero curvature.
    pub fn with_auto_step(smooth: SmoothSpec, nonsmooth: ProxableSpec) -> Result<Self> {
        let lf = smooth.lipschitz();
        let step = if lf > 0.0 { 1.0 / lf } else { 1.0 };
        Self::new(smooth, nonsmooth, step)
    }

    pub fn smooth(&self) -> &SmoothSpec {
        &self.smooth
    }

    pub fn nonsmooth(&self) -> &ProxableSpec {
        &self.nonsmooth
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn dim(&self) -> usize {
        self.smooth.dim()
    }

    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        let g = self.smooth.gradient(x)?;
        self.nonsmooth.prox(self.step, &(x - g * self.step))
    }

    /// Composite objective `f + g`.
    pub fn objective(&self, x: &Vector) -> Result<f64> {
        Ok(self.smooth.value(x)? + self.nonsmooth.value(x)?)
    }

    /// Gradient mapping `(x - T(x)) / t` and the fixed-point residual
    /// `||x - T(x)||`.
    pub fn gradient_map_residual(&self, x: &Vector) -> Result<(Vector, f64)> {
        let diff = x - self.apply(x)?;
        let norm = diff.norm();
        Ok((diff / self.step, norm))
    }
}

/// Componentwise scalar maps used by the operator-level counterexamples.
/// They are not prox-gradient maps of declared objectives.
#[derive(Debug, Clone, PartialEq)]
pub enum CustomMap {
    Identity { dim: usize },
    Scale { factor: f64, dim: usize },
    Shift { offset: f64, dim: usize },
    Clamp { lo: f64, hi: f64, dim: usize },
}

impl CustomMap {
    pub fn dim(&self) -> usize {
        match self {
            CustomMap::Identity { dim }
            | CustomMap::Scale { dim, .. }
            | CustomMap::Shift { dim, .. }
            | CustomMap::Clamp { dim, .. } => *dim,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            CustomMap::Scale { factor, .. } => factor.abs(),
            _ => 1.0,
        }
    }

    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.dim(), x.len())?;
        Ok(match self {
            CustomMap::Identity { .. } => x.clone(),
            CustomMap::Scale { factor, .. } => x * *factor,
            CustomMap::Shift { offset, .. } => x.add_scalar(*offset),
            CustomMap::Clamp { lo, hi, .. } => x.map(|v| v.clamp(*lo, *hi)),
        })
    }
}

/// One level of a hierarchical problem, viewed as a fixed-point map.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerMap {
    Contraction(Contraction),
    ProxGrad(ProxGrad),
    Custom(CustomMap),
}

impl LayerMap {
    pub fn dim(&self) -> usize {
        match self {
            LayerMap::Contraction(c) => c.omega.dim(),
            LayerMap::ProxGrad(p) => p.dim(),
            LayerMap::Custom(m) => m.dim(),
        }
    }

    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        match self {
            LayerMap::Contraction(c) => c.apply(x),
            LayerMap::ProxGrad(p) => p.apply(x),
            LayerMap::Custom(m) => m.apply(x),
        }
    }

    /// Lipschitz modulus when it is a strict contraction.
    pub fn contraction_constant(&self) -> Option<f64> {
        let r = match self {
            LayerMap::Contraction(c) => c.factor,
            LayerMap::Custom(m) => m.lipschitz(),
            LayerMap::ProxGrad(_) => return None,
        };
        (r < 1.0).then_some(r)
    }

    /// Objective value of the level; `None` for operator-level maps.
    pub fn objective(&self, x: &Vector) -> Result<Option<f64>> {
        match self {
            LayerMap::Contraction(c) => c.omega.value(x).map(Some),
            LayerMap::ProxGrad(p) => p.objective(x).map(Some),
            LayerMap::Custom(m) => {
                check_dim(m.dim(), x.len())?;
                Ok(None)
            }
        }
    }

    pub fn step(&self) -> Option<f64> {
        match self {
            LayerMap::Contraction(c) => Some(c.step),
            LayerMap::ProxGrad(p) => Some(p.step),
            LayerMap::Custom(_) => None,
        }
    }

    pub fn is_operator_level(&self) -> bool {
        matches!(self, LayerMap::Custom(_))
    }
}

impl From<Contraction> for LayerMap {
    fn from(c: Contraction) -> Self {
        LayerMap::Contraction(c)
    }
}

impl From<ProxGrad> for LayerMap {
    fn from(p: ProxGrad) -> Self {
        LayerMap::ProxGrad(p)
    }
}

impl From<CustomMap> for LayerMap {
    fn from(m: CustomMap) -> Self {
        LayerMap::Custom(m)
    }
}

/// Free-function form of [`ProxableSpec::prox`].
pub fn prox_eval(g: &ProxableSpec, t: f64, x: &Vector) -> Result<Vector> {
    g.prox(t, x)
}

pub fn proxgrad_apply(m: &ProxGrad, x: &Vector) -> Result<Vector> {
    m.apply(x)
}

pub fn contraction_apply(m: &Contraction, x: &Vector) -> Result<Vector> {
    m.apply(x)
}

pub fn gradient_map_residual(m: &ProxGrad, x: &Vector) -> Result<(Vector, f64)> {
    m.gradient_map_residual(x)
}

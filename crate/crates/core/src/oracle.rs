//! Exact reference solutions: affine solution-set chains for nested
//! quadratic problems, brute-force grid minimization in one or two
//! dimensions, and the gallery of worked problems.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::operators::{
    Contraction, CustomMap, LayerMap, Matrix, ProxGrad, ProxableSpec, SmoothKind, SmoothSpec,
    Vector, RANK_TOL,
};
use crate::schedules::{Delta, Schedule};
use crate::solver::{MultilevelProblem, TrilevelProblem, WeightRule};

/// Tolerance used when re-verifying oracle artifacts.
pub const ORACLE_TOL: f64 = 1e-9;

// Squared singular-value cutoff, floored at the eigensolver's noise level.
const GRAM_RANK_TOL: f64 = 1e-16;

/// `{anchor + basis * y}` with orthonormal basis columns. An empty basis is
/// a single point.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSet {
    anchor: Vector,
    basis: Matrix,
}

impl AffineSet {
    pub fn whole_space(dim: usize) -> Self {
        AffineSet {
            anchor: Vector::zeros(dim),
            basis: Matrix::identity(dim, dim),
        }
    }

    pub fn point(p: Vector) -> Self {
        let n = p.len();
        AffineSet {
            anchor: p,
            basis: Matrix::zeros(n, 0),
        }
    }

    /// Orthonormalizes the columns of `directions` (dropping dependent ones)
    /// and moves the anchor to the point of the set closest to the origin.
    pub fn new(anchor: Vector, directions: Matrix) -> Result<Self> {
        check_dim(anchor.len(), directions.nrows())?;
        let basis = orthonormal_range(&directions);
        let anchor = &anchor - &basis * (basis.transpose() * &anchor);
        Ok(AffineSet { anchor, basis })
    }

    pub fn anchor(&self) -> &Vector {
        &self.anchor
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    /// Dimension of the set itself.
    pub fn affine_dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_point(&self) -> bool {
        self.basis.ncols() == 0
    }

    pub fn project(&self, x: &Vector) -> Vector {
        let d = x - &self.anchor;
        &self.anchor + &self.basis * (self.basis.transpose() * d)
    }

    pub fn distance(&self, x: &Vector) -> f64 {
        (x - self.project(x)).norm()
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        self.distance(x) <= tol
    }

    /// Intersection with `{x : A x = c}`.
    pub fn intersect(&self, a: &Matrix, c: &Vector) -> Result<AffineSet> {
        check_dim(self.dim(), a.ncols())?;
        check_dim(a.nrows(), c.len())?;
        if self.is_point() {
            let res = (a * &self.anchor - c).norm();
            if res > 1e-8 * (1.0 + c.norm()) {
                return Err(Error::Input(format!(
                    "empty intersection (constraint residual {res:.3e})"
                )));
            }
            return Ok(self.clone());
        }
        let ab = a * &self.basis;
        let rhs = c - a * &self.anchor;
        let (y, null) = min_norm_solve(&ab, &rhs)
            .ok_or_else(|| Error::Input("empty intersection with affine constraint".into()))?;
        Ok(AffineSet {
            anchor: &self.anchor + &self.basis * y,
            basis: &self.basis * null,
        })
    }

    pub fn to_json(&self) -> AffineSetJson {
        AffineSetJson {
            anchor: self.anchor.as_slice().to_vec(),
            basis: self
                .basis
                .column_iter()
                .map(|c| c.iter().copied().collect())
                .collect(),
        }
    }
}

/// Serializable description of an [`OracleSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SetJson {
    Affine(AffineSetJson),
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

/// Serializable view of an [`AffineSet`]; `basis` lists columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineSetJson {
    pub anchor: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
}

fn orthonormal_range(m: &Matrix) -> Matrix {
    let n = m.nrows();
    if m.ncols() == 0 || m.amax() == 0.0 {
        return Matrix::zeros(n, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.max();
    let cols: Vec<_> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > RANK_TOL * smax)
        .map(|i| u.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        Matrix::zeros(n, 0)
    } else {
        Matrix::from_columns(&cols)
    }
}

/// Minimum-norm solution of `M y = r` and an orthonormal nullspace basis of
/// `M`; `None` when the system is inconsistent.
fn min_norm_solve(m: &Matrix, r: &Vector) -> Option<(Vector, Matrix)> {
    let d = m.ncols();
    // Eigen-decomposition of M'M gives the right singular vectors; its
    // eigenvalues are squared singular values, so the cutoff is squared too.
    let gram = m.transpose() * m;
    let eig = SymmetricEigen::new(gram);
    let lmax = eig.eigenvalues.max().max(0.0);
    let mut y = Vector::zeros(d);
    let mut null = Vec::new();
    for i in 0..d {
        let v = eig.eigenvectors.column(i);
        let lam = eig.eigenvalues[i];
        if lmax > 0.0 && lam > GRAM_RANK_TOL * lmax {
            let mv = m * v;
            y += v * (mv.dot(r) / lam);
        } else {
            null.push(v.into_owned());
        }
    }
    let res = (m * &y - r).norm();
    if res > 1e-8 * (1.0 + r.norm()) {
        return None;
    }
    let null = if null.is_empty() {
        Matrix::zeros(d, 0)
    } else {
        Matrix::from_columns(&null)
    };
    Some((y, null))
}

/// `(Q, b, c)` of a smooth term written as `0.5 x'Qx - b'x + c`.
pub fn quadratic_parts(f: &SmoothSpec) -> (Matrix, Vector, f64) {
    match f.kind() {
        SmoothKind::Zero { dim } => (Matrix::zeros(*dim, *dim), Vector::zeros(*dim), 0.0),
        SmoothKind::Quadratic { q, b, c } => (q.clone(), b.clone(), *c),
    }
}

/// Minimizers of the quadratic `f` over `domain`, as an affine set.
pub fn affine_argmin(f: &SmoothSpec, domain: &AffineSet) -> Result<AffineSet> {
    check_dim(f.dim(), domain.dim())?;
    if domain.is_point() {
        return Ok(domain.clone());
    }
    let (q, b, _) = quadratic_parts(f);
    let basis = &domain.basis;
    let h = basis.transpose() * &q * basis;
    let h = (&h + h.transpose()) * 0.5;
    let g = basis.transpose() * (&b - &q * &domain.anchor);
    let eig = SymmetricEigen::new(h);
    let lmax = eig.eigenvalues.max().max(0.0);
    let scale = q.amax().max(1.0);
    let d = basis.ncols();
    let mut y = Vector::zeros(d);
    let mut null = Vec::new();
    for i in 0..d {
        let v = eig.eigenvectors.column(i);
        let lam = eig.eigenvalues[i];
        if lam > RANK_TOL * lmax && lam > 1e-14 * scale {
            y += v * (v.dot(&g) / lam);
        } else {
            null.push(v.into_owned());
        }
    }
    // Any component of g along the flat directions makes f linear and
    // decreasing there.
    let null_m = if null.is_empty() {
        Matrix::zeros(d, 0)
    } else {
        Matrix::from_columns(&null)
    };
    let leak = (null_m.transpose() * &g).norm();
    if leak > 1e-9 * (1.0 + g.norm()) {
        return Err(Error::Unbounded(format!(
            "linear term has component {leak:.3e} along a flat direction"
        )));
    }
    Ok(AffineSet {
        anchor: &domain.anchor + basis * y,
        basis: basis * null_m,
    })
}

/// Minimizers of `f + g` over `domain` when `g` is zero or an affine
/// indicator.
pub fn level_argmin(f: &SmoothSpec, g: &ProxableSpec, domain: &AffineSet) -> Result<AffineSet> {
    let domain = match g {
        ProxableSpec::Zero { .. } => domain.clone(),
        ProxableSpec::AffineEq(a) => domain.intersect(a.matrix(), a.rhs())?,
        other => {
            return Err(Error::Unsupported(format!(
                "exact oracle needs zero or affine nonsmooth terms, found {}",
                proxable_name(other)
            )))
        }
    };
    affine_argmin(f, &domain)
}

fn proxable_name(g: &ProxableSpec) -> &'static str {
    match g {
        ProxableSpec::Zero { .. } => "zero",
        ProxableSpec::L1 { .. } => "l1",
        ProxableSpec::Box { .. } => "box",
        ProxableSpec::AffineEq(_) => "affine_eq",
        ProxableSpec::Ball { .. } => "ball",
    }
}

fn as_proxgrad(l: &LayerMap) -> Result<&ProxGrad> {
    match l {
        LayerMap::ProxGrad(p) => Ok(p),
        _ => Err(Error::Unsupported(
            "exact oracle needs prox-gradient layers".into(),
        )),
    }
}

fn as_contraction(l: &LayerMap) -> Result<&Contraction> {
    match l {
        LayerMap::Contraction(c) => Ok(c),
        _ => Err(Error::Unsupported(
            "exact oracle needs a gradient-contraction selector".into(),
        )),
    }
}

/// Hierarchical solution and solution-set chain `X*_1, ..., X*_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub x_star: Vector,
    pub sets: Vec<AffineSet>,
}

/// Folds [`level_argmin`] over `layers` (innermost first) and minimizes the
/// selector's objective over the last set.
pub fn nested_solve_oracle(layers: &[LayerMap], selector: &LayerMap) -> Result<OracleSolution> {
    let omega = as_contraction(selector)?.omega();
    if omega.strong_convexity() <= 0.0 {
        return Err(Error::Input("selector must be strongly convex".into()));
    }
    let mut set = AffineSet::whole_space(omega.dim());
    let mut sets = Vec::with_capacity(layers.len());
    for l in layers {
        let p = as_proxgrad(l)?;
        check_dim(set.dim(), p.dim())?;
        set = level_argmin(p.smooth(), p.nonsmooth(), &set)?;
        sets.push(set.clone());
    }
    let top = affine_argmin(omega, &set)?;
    if !top.is_point() {
        return Err(Error::Input("selector minimizer is not unique".into()));
    }
    let x_star = top.anchor.clone();
    for (i, s) in sets.iter().enumerate() {
        let d = s.distance(&x_star);
        if d > ORACLE_TOL {
            return Err(Error::Input(format!(
                "oracle solution misses level {} set by {d:.3e}",
                i + 1
            )));
        }
    }
    Ok(OracleSolution { x_star, sets })
}

/// Solution of `<(I - S)x + delta (I - T)x, y - x> >= 0` for all `y` in
/// `Fix(W)`, the limit targeted when `beta_k / alpha_k -> delta`.
///
/// For quadratic `omega` and `f1` with `g1 = 0` this is the minimizer of
/// `u omega + delta t f1` over `Fix(W)`. `Delta::Zero` gives the selector
/// over `Fix(W)`; `Delta::Infinite` gives the nested solution.
pub fn mixed_vi_oracle(p: &TrilevelProblem, delta: Delta) -> Result<Vector> {
    let layers = [p.bottom().clone(), p.middle().clone()];
    if let Delta::Infinite = delta {
        return nested_solve_oracle(&layers, p.top()).map(|s| s.x_star);
    }
    let sel = as_contraction(p.top())?;
    let mid = as_proxgrad(p.middle())?;
    let bot = as_proxgrad(p.bottom())?;
    let fix_w = level_argmin(
        bot.smooth(),
        bot.nonsmooth(),
        &AffineSet::whole_space(p.dim()),
    )?;
    let (qw, bw, _) = quadratic_parts(sel.omega());
    let d = delta.value();
    let (q, b) = if d > 0.0 {
        if !matches!(mid.nonsmooth(), ProxableSpec::Zero { .. }) {
            return Err(Error::Unsupported(
                "mixed target needs a middle level without nonsmooth term".into(),
            ));
        }
        let (qf, bf, _) = quadratic_parts(mid.smooth());
        let (u, t) = (sel.step(), mid.step());
        (qw * u + qf * (d * t), bw * u + bf * (d * t))
    } else {
        (qw, bw)
    };
    let f = SmoothSpec::quadratic(q, b, 0.0)?;
    let sol = affine_argmin(&f, &fix_w)?;
    if !sol.is_point() {
        return Err(Error::Input("mixed target is not unique".into()));
    }
    Ok(sol.anchor)
}

/// Brute-force minimizer of `f` over a box in one or two dimensions.
///
/// The grid is searched exhaustively at `resolution` (for fine 2-D grids by
/// successive zooming around the best cell), then refined by nested ternary
/// search inside the neighbouring cells. The result is accurate to
/// `resolution` for convex `f`.
pub fn grid_argmin<F>(f: F, lo: &[f64], hi: &[f64], resolution: f64) -> Result<Vector>
where
    F: Fn(&[f64]) -> f64,
{
    check_grid(lo, hi, resolution)?;
    match lo.len() {
        1 => {
            let best = scan_1d(&|u| f(&[u]), lo[0], hi[0], resolution);
            let (a, b) = (
                (best - resolution).max(lo[0]),
                (best + resolution).min(hi[0]),
            );
            let x = ternary(&|u| f(&[u]), a, b);
            Ok(Vector::from_vec(vec![pick(&|u| f(&[u]), x, best)]))
        }
        2 => {
            let (mut cx, mut cy) = (0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]));
            let (mut hx, mut hy) = (0.5 * (hi[0] - lo[0]), 0.5 * (hi[1] - lo[1]));
            const MAX_SIDE: f64 = 2000.0;
            loop {
                let step = (2.0 * hx.max(hy) / MAX_SIDE).max(resolution);
                let (bx, by) = scan_2d(&f, [cx - hx, cy - hy], [cx + hx, cy + hy], step);
                cx = bx;
                cy = by;
                if step <= resolution {
                    break;
                }
                hx = (2.0 * step).min(hx);
                hy = (2.0 * step).min(hy);
            }
            let (ax, bx) = ((cx - resolution).max(lo[0]), (cx + resolution).min(hi[0]));
            let (ay, by) = ((cy - resolution).max(lo[1]), (cy + resolution).min(hi[1]));
            let inner = |x: f64| {
                let y = ternary(&|y| f(&[x, y]), ay, by);
                (y, f(&[x, y]))
            };
            let x = ternary(&|x| inner(x).1, ax, bx);
            let y = inner(x).0;
            if f(&[x, y]) <= f(&[cx, cy]) {
                Ok(Vector::from_vec(vec![x, y]))
            } else {
                Ok(Vector::from_vec(vec![cx, cy]))
            }
        }
        d => Err(Error::Unsupported(format!(
            "grid oracle handles at most 2 dimensions, got {d}"
        ))),
    }
}

fn check_grid(lo: &[f64], hi: &[f64], resolution: f64) -> Result<()> {
    check_dim(lo.len(), hi.len())?;
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::Parameter {
            name: "grid resolution",
            value: resolution,
            interval: "(0, inf)".into(),
        });
    }
    if lo.len() > 2 {
        return Err(Error::Unsupported(format!(
            "grid oracle handles at most 2 dimensions, got {}",
            lo.len()
        )));
    }
    for i in 0..lo.len() {
        if !(lo[i].is_finite() && hi[i].is_finite() && lo[i] <= hi[i]) {
            return Err(Error::Input(format!(
                "grid box side {i} is not a finite interval"
            )));
        }
    }
    Ok(())
}

fn grid_points(lo: f64, hi: f64, step: f64) -> impl Iterator<Item = f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(move |i| (lo + i as f64 * step).min(hi))
}

fn scan_1d(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> f64 {
    let mut best = (f64::INFINITY, lo);
    for u in grid_points(lo, hi, step) {
        let v = f(u);
        if v < best.0 {
            best = (v, u);
        }
    }
    best.1
}

fn scan_2d<F: Fn(&[f64]) -> f64>(f: &F, lo: [f64; 2], hi: [f64; 2], step: f64) -> (f64, f64) {
    let mut best = (f64::INFINITY, lo[0], lo[1]);
    for x in grid_points(lo[0], hi[0], step) {
        for y in grid_points(lo[1], hi[1], step) {
            let v = f(&[x, y]);
            if v < best.0 {
                best = (v, x, y);
            }
        }
    }
    (best.1, best.2)
}

fn ternary(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    for _ in 0..200 {
        if b - a <= 1e-15 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if f(m1) <= f(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    0.5 * (a + b)
}

fn pick(f: &dyn Fn(f64) -> f64, refined: f64, grid: f64) -> f64 {
    if f(refined) <= f(grid) {
        refined
    } else {
        grid
    }
}

/// Grid approximation `[first, last]` of the minimizing interval of a 1-D
/// function: all grid points with value within `tol` of the grid minimum.
pub fn grid_argmin_interval<F>(
    f: F,
    lo: f64,
    hi: f64,
    resolution: f64,
    tol: f64,
) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    check_grid(&[lo], &[hi], resolution)?;
    let vals: Vec<(f64, f64)> = grid_points(lo, hi, resolution).map(|u| (u, f(u))).collect();
    let min = vals.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::Input(
            "objective is infinite on the whole grid".into(),
        ));
    }
    let inside: Vec<f64> = vals
        .iter()
        .filter(|p| p.1 <= min + tol)
        .map(|p| p.0)
        .collect();
    Ok((inside[0], inside[inside.len() - 1]))
}

/// Objective whose prox is the given map, when the map is one: prox-gradient
/// layers report `f + g`, clamps the box indicator, the identity zero.
pub fn layer_objective(l: &LayerMap, x: &Vector) -> Result<Option<f64>> {
    match l {
        LayerMap::Custom(CustomMap::Clamp { lo, hi, .. }) => Ok(Some(
            if x.iter()
                .all(|v| (lo - ORACLE_TOL..=hi + ORACLE_TOL).contains(v))
            {
                0.0
            } else {
                f64::INFINITY
            },
        )),
        LayerMap::Custom(CustomMap::Identity { .. }) => Ok(Some(0.0)),
        other => other.objective(x),
    }
}

/// Hierarchical minimization on a grid of at most two dimensions: keep the
/// grid points within `level_tol` of each level's grid minimum, innermost
/// level first, then return the kept point with the smallest selector value.
pub fn grid_nested_oracle(
    layers: &[LayerMap],
    selector: &LayerMap,
    lo: &[f64],
    hi: &[f64],
    resolution: f64,
    level_tol: f64,
) -> Result<Vector> {
    check_grid(lo, hi, resolution)?;
    let mut pts: Vec<Vector> = match lo.len() {
        1 => grid_points(lo[0], hi[0], resolution)
            .map(|u| Vector::from_vec(vec![u]))
            .collect(),
        2 => grid_points(lo[0], hi[0], resolution)
            .flat_map(|x| {
                grid_points(lo[1], hi[1], resolution).map(move |y| Vector::from_vec(vec![x, y]))
            })
            .collect(),
        d => {
            return Err(Error::Unsupported(format!(
                "grid oracle handles at most 2 dimensions, got {d}"
            )))
        }
    };
    let eval = |l: &LayerMap, x: &Vector| -> Result<f64> {
        layer_objective(l, x)?
            .ok_or_else(|| Error::Unsupported("grid oracle needs levels with objectives".into()))
    };
    for l in layers.iter().chain(std::iter::once(selector)) {
        let vals: Vec<f64> = pts.iter().map(|x| eval(l, x)).collect::<Result<_>>()?;
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        if !min.is_finite() {
            return Err(Error::Input("level objective infinite on the grid".into()));
        }
        pts = pts
            .into_iter()
            .zip(vals)
            .filter(|(_, v)| *v <= min + level_tol)
            .map(|(x, _)| x)
            .collect();
    }
    let sel_vals: Vec<f64> = pts
        .iter()
        .map(|x| eval(selector, x))
        .collect::<Result<_>>()?;
    let i = (0..pts.len())
        .min_by(|&a, &b| sel_vals[a].total_cmp(&sel_vals[b]))
        .expect("non-empty after filtering");
    Ok(pts.swap_remove(i))
}

/// Something that can project onto a closed convex set exactly.
pub trait Projector {
    fn dim(&self) -> usize;
    fn project(&self, x: &Vector) -> Vector;

    fn distance(&self, x: &Vector) -> f64 {
        (x - self.project(x)).norm()
    }
}

impl Projector for AffineSet {
    fn dim(&self) -> usize {
        AffineSet::dim(self)
    }

    fn project(&self, x: &Vector) -> Vector {
        AffineSet::project(self, x)
    }
}

/// Oracle-known solution sets: affine sets, or boxes for the clamp examples.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleSet {
    Affine(AffineSet),
    Box { lo: Vector, hi: Vector },
}

impl Projector for OracleSet {
    fn dim(&self) -> usize {
        match self {
            OracleSet::Affine(a) => a.dim(),
            OracleSet::Box { lo, .. } => lo.len(),
        }
    }

    fn project(&self, x: &Vector) -> Vector {
        match self {
            OracleSet::Affine(a) => a.project(x),
            OracleSet::Box { lo, hi } => {
                Vector::from_iterator(x.len(), (0..x.len()).map(|i| x[i].clamp(lo[i], hi[i])))
            }
        }
    }
}

impl OracleSet {
    /// Rebuilds a set from its JSON form, checking dimensions.
    pub fn from_json(j: &SetJson) -> Result<OracleSet> {
        match j {
            SetJson::Affine(a) => {
                let n = a.anchor.len();
                for (i, col) in a.basis.iter().enumerate() {
                    if col.len() != n {
                        return Err(Error::Input(format!(
                            "basis[{i}] has length {}, anchor has {n}",
                            col.len()
                        )));
                    }
                }
                let dirs = Matrix::from_fn(n, a.basis.len(), |r, c| a.basis[c][r]);
                AffineSet::new(Vector::from_column_slice(&a.anchor), dirs).map(OracleSet::Affine)
            }
            SetJson::Box { lo, hi } => {
                check_dim(lo.len(), hi.len())?;
                if lo.iter().zip(hi).any(|(l, h)| !(l <= h)) {
                    return Err(Error::Input("box needs lo <= hi".into()));
                }
                Ok(OracleSet::Box {
                    lo: Vector::from_column_slice(lo),
                    hi: Vector::from_column_slice(hi),
                })
            }
        }
    }

    pub fn to_json(&self) -> SetJson {
        match self {
            OracleSet::Affine(a) => SetJson::Affine(a.to_json()),
            OracleSet::Box { lo, hi } => SetJson::Box {
                lo: lo.as_slice().to_vec(),
                hi: hi.as_slice().to_vec(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum GalleryProblem {
    Trilevel(TrilevelProblem),
    Multilevel(MultilevelProblem),
}

impl GalleryProblem {
    pub fn dim(&self) -> usize {
        match self {
            GalleryProblem::Trilevel(p) => p.dim(),
            GalleryProblem::Multilevel(p) => p.dim(),
        }
    }

    /// Innermost layer, the map whose fixed points form `Fix(W)`.
    pub fn bottom(&self) -> &LayerMap {
        match self {
            GalleryProblem::Trilevel(p) => p.bottom(),
            GalleryProblem::Multilevel(p) => &p.layers()[0],
        }
    }

    pub fn selector(&self) -> &LayerMap {
        match self {
            GalleryProblem::Trilevel(p) => p.top(),
            GalleryProblem::Multilevel(p) => p.selector(),
        }
    }

    /// Layers innermost first, selector excluded.
    pub fn layers(&self) -> Vec<LayerMap> {
        match self {
            GalleryProblem::Trilevel(p) => vec![p.bottom().clone(), p.middle().clone()],
            GalleryProblem::Multilevel(p) => p.layers().to_vec(),
        }
    }

    pub fn as_multilevel(&self) -> MultilevelProblem {
        match self {
            GalleryProblem::Trilevel(p) => p.to_multilevel(),
            GalleryProblem::Multilevel(p) => p.clone(),
        }
    }
}

/// A worked problem with its reference artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct GalleryEntry {
    pub name: &'static str,
    pub summary: &'static str,
    pub problem: GalleryProblem,
    /// `None` when the iteration is known to diverge.
    pub x_star: Option<Vector>,
    /// Level solution sets, innermost first (`sets[0] = Fix(W)`).
    pub sets: Vec<OracleSet>,
    /// Solutions of the middle-level variational inequality over `Fix(W)`,
    /// where known.
    pub omega_set: Option<OracleSet>,
    pub x0: Vector,
    pub schedule: Schedule,
    pub weight_rule: WeightRule,
    pub divergence_guard: f64,
    /// Grid box for the brute-force cross-check (dimension <= 2 only).
    pub grid_box: Option<(Vec<f64>, Vec<f64>)>,
    pub notes: Vec<&'static str>,
}

impl GalleryEntry {
    pub fn trilevel(&self) -> Option<&TrilevelProblem> {
        match &self.problem {
            GalleryProblem::Trilevel(p) => Some(p),
            GalleryProblem::Multilevel(_) => None,
        }
    }

    pub fn multilevel(&self) -> Option<&MultilevelProblem> {
        match &self.problem {
            GalleryProblem::Multilevel(p) => Some(p),
            GalleryProblem::Trilevel(_) => None,
        }
    }

    pub fn fix_w(&self) -> Option<&OracleSet> {
        self.sets.first()
    }

    /// Re-checks the stored oracle artifacts: the solution lies in every
    /// level set and is fixed by the innermost map, and for nested-quadratic
    /// entries the oracle recomputed from scratch agrees.
    pub fn verify(&self) -> Result<()> {
        let Some(x) = &self.x_star else {
            return Ok(());
        };
        for (i, s) in self.sets.iter().enumerate() {
            let d = s.distance(x);
            if d > ORACLE_TOL {
                return Err(Error::Input(format!(
                    "{}: solution misses level {} set by {d:.3e}",
                    self.name,
                    i + 1
                )));
            }
        }
        if let Some(o) = &self.omega_set {
            if o.distance(x) > ORACLE_TOL {
                return Err(Error::Input(format!(
                    "{}: solution outside Omega",
                    self.name
                )));
            }
        }
        let res = (x - self.problem.bottom().apply(x)?).norm();
        if res > ORACLE_TOL {
            return Err(Error::Input(format!(
                "{}: bottom fixed-point residual {res:.3e}",
                self.name
            )));
        }
        if let Ok(sol) = nested_solve_oracle(&self.problem.layers(), self.problem.selector()) {
            let gap = (&sol.x_star - x).norm();
            if gap > ORACLE_TOL {
                return Err(Error::Input(format!(
                    "{}: recomputed oracle differs by {gap:.3e}",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// Limit predicted for a schedule with ratio limit `delta`, when the
    /// exact oracle supports it.
    pub fn target(&self, delta: Delta) -> Result<Vector> {
        match &self.problem {
            GalleryProblem::Trilevel(p) => match mixed_vi_oracle(p, delta) {
                Err(Error::Unsupported(_)) if self.x_star.is_some() && self.independent_limit() => {
                    Ok(self.x_star.clone().expect("checked"))
                }
                other => other,
            },
            GalleryProblem::Multilevel(_) => self
                .x_star
                .clone()
                .ok_or_else(|| Error::Unsupported("no finite solution".into())),
        }
    }

    // Entries whose selector solution over Fix(W) already solves the
    // middle-level inequality converge to it for every ratio regime.
    fn independent_limit(&self) -> bool {
        matches!(self.name, "clamp" | "ratio_oscillating" | "common_point")
    }
}

const NAMES: [&str; 7] = [
    "clamp",
    "unbounded",
    "xu_quadratic",
    "nested3",
    "nested4",
    "ratio_oscillating",
    "common_point",
];

pub fn gallery_names() -> &'static [&'static str] {
    &NAMES
}

/// Builds a gallery entry and re-verifies its oracle.
pub fn gallery(name: &str) -> Result<GalleryEntry> {
    let entry = match name {
        "clamp" => clamp_entry("clamp", Schedule::monomial(1.0, 2.0)?)?,
        "ratio_oscillating" => clamp_entry("ratio_oscillating", Schedule::RatioCounterexample)?,
        "unbounded" => unbounded_entry()?,
        "xu_quadratic" => xu_entry()?,
        "nested3" => nested3_entry()?,
        "nested4" => nested4_entry()?,
        "common_point" => common_point_entry()?,
        _ => {
            return Err(Error::UnknownEntry {
                name: name.to_string(),
                available: NAMES.to_vec(),
            })
        }
    };
    entry.verify()?;
    Ok(entry)
}

fn v(xs: &[f64]) -> Vector {
    Vector::from_column_slice(xs)
}

fn quarter_contraction(dim: usize) -> Result<Contraction> {
    Contraction::new(SmoothSpec::squared_distance(Vector::zeros(dim))?, 0.75)
}

fn clamp_entry(name: &'static str, schedule: Schedule) -> Result<GalleryEntry> {
    let p = TrilevelProblem::new(
        quarter_contraction(1)?.into(),
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
    )?;
    let summary = if name == "clamp" {
        "S(x) = x/4, T = clamp to [-1, 1], W = clamp to [0, 2]; limit 0"
    } else {
        "clamp maps driven by steps whose ratio oscillates between 1/2 and 3/4"
    };
    Ok(GalleryEntry {
        name,
        summary,
        problem: GalleryProblem::Trilevel(p),
        x_star: Some(v(&[0.0])),
        sets: vec![OracleSet::Box {
            lo: v(&[0.0]),
            hi: v(&[2.0]),
        }],
        omega_set: Some(OracleSet::Box {
            lo: v(&[0.0]),
            hi: v(&[1.0]),
        }),
        x0: v(&[5.0]),
        schedule,
        weight_rule: WeightRule::Nested,
        divergence_guard: crate::solver::DEFAULT_DIVERGENCE_GUARD,
        grid_box: Some((vec![-3.0], vec![3.0])),
        notes: vec![
            "S is x - 0.75 x for omega = x^2/2; its certified factor is 0.5, its true Lipschitz constant 0.25",
            "T and W are operator-level clamp maps (prox of box indicators)",
            "Fix(W) = [0, 2], Omega = VI(T, Fix W) = [0, 1], solution 0",
        ],
    })
}

fn unbounded_entry() -> Result<GalleryEntry> {
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
    )?;
    Ok(GalleryEntry {
        name: "unbounded",
        summary: "S(x) = x/4, T(x) = x + 5, W = identity; iterates grow without bound",
        problem: GalleryProblem::Trilevel(p),
        x_star: None,
        sets: vec![OracleSet::Affine(AffineSet::whole_space(1))],
        omega_set: None,
        x0: v(&[1.0]),
        schedule: Schedule::monomial(1.0, 0.5)?,
        weight_rule: WeightRule::Nested,
        divergence_guard: 1e3,
        grid_box: None,
        notes: vec![
            "T has no fixed point, so no finite solution exists",
            "growth is about (20/3) sqrt(k), so the entry suggests a divergence guard of 1e3",
        ],
    })
}

fn xu_entry() -> Result<GalleryEntry> {
    // omega(x) = (mu/2)<Ax, x> + |x - u|^2/2 - <x, b> with mu = 1,
    // A = diag(1, 2), u = (1, 1), b = 0.
    let q = Matrix::from_diagonal(&v(&[2.0, 3.0]));
    let omega = SmoothSpec::quadratic(q, v(&[1.0, 1.0]), 1.0)?;
    let selector = Contraction::with_auto_step(omega)?;
    let identity = ProxGrad::new(SmoothSpec::zero(2), ProxableSpec::zero(2), 1.0)?;
    let p = MultilevelProblem::new(selector.into(), vec![identity.into()])?;
    Ok(GalleryEntry {
        name: "xu_quadratic",
        summary: "quadratic selector over K = R^2 with A = diag(1, 2), u = (1, 1), b = 0",
        problem: GalleryProblem::Multilevel(p),
        x_star: Some(v(&[0.5, 1.0 / 3.0])),
        sets: vec![OracleSet::Affine(AffineSet::whole_space(2))],
        omega_set: None,
        x0: v(&[2.0, -1.0]),
        schedule: Schedule::monomial(0.5, 0.5)?,
        weight_rule: WeightRule::UniformTail,
        divergence_guard: crate::solver::DEFAULT_DIVERGENCE_GUARD,
        grid_box: Some((vec![-2.0, -2.0], vec![2.0, 2.0])),
        notes: vec![
            "single layer T = projection onto K = R^2, the identity",
            "limit (A + I)^{-1}(u - b) = (1/2, 1/3)",
        ],
    })
}

fn quad(q: &[f64], dim: usize, b: &[f64]) -> Result<SmoothSpec> {
    SmoothSpec::quadratic(Matrix::from_row_slice(dim, dim, q), v(b), 0.0)
}

fn oracle_sets(sol: &OracleSolution) -> Vec<OracleSet> {
    sol.sets.iter().cloned().map(OracleSet::Affine).collect()
}

fn nested3_entry() -> Result<GalleryEntry> {
    let bottom = ProxGrad::new(
        quad(
            &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            3,
            &[1.0, 0.0, 0.0],
        )?,
        ProxableSpec::zero(3),
        0.5,
    )?;
    let middle = ProxGrad::new(
        quad(
            &[0.0, 0.0, 0.0, 0.0, 1.0, -1.0, 0.0, -1.0, 1.0],
            3,
            &[0.0; 3],
        )?,
        ProxableSpec::zero(3),
        0.25,
    )?;
    let top = Contraction::new(SmoothSpec::squared_distance(v(&[0.0, 4.0, 0.0]))?, 0.5)?;
    let p = TrilevelProblem::new(top.into(), middle.into(), bottom.into())?;
    let sol = nested_solve_oracle(&[p.bottom().clone(), p.middle().clone()], p.top())?;
    let r = p.contraction_factor();
    let sets = oracle_sets(&sol);
    Ok(GalleryEntry {
        name: "nested3",
        summary: "R^3: (x1 - 1)^2/2, then (x2 - x3)^2/2, then |x - (0, 4, 0)|^2/2; x* = (1, 2, 2)",
        problem: GalleryProblem::Trilevel(p),
        x_star: Some(sol.x_star),
        omega_set: sets.get(1).cloned(),
        sets,
        x0: Vector::zeros(3),
        schedule: Schedule::rate(r)?,
        weight_rule: WeightRule::Nested,
        divergence_guard: crate::solver::DEFAULT_DIVERGENCE_GUARD,
        grid_box: None,
        notes: vec![
            "steps u = 0.5, t = 0.25, s = 0.5",
            "selector over Fix(W) is (1, 4, 0); ratio limit 1 targets (1, 3, 1)",
        ],
    })
}

fn nested4_entry() -> Result<GalleryEntry> {
    let l1 = ProxGrad::new(
        quad(&diag_entry(4, 0), 4, &[1.0, 0.0, 0.0, 0.0])?,
        ProxableSpec::zero(4),
        0.5,
    )?;
    let l2 = ProxGrad::new(
        quad(&difference(4, 1, 2), 4, &[0.0; 4])?,
        ProxableSpec::zero(4),
        0.25,
    )?;
    // (x3 - x4 - 1)^2 / 2
    let l3 = ProxGrad::new(
        SmoothSpec::quadratic(
            Matrix::from_row_slice(4, 4, &difference(4, 2, 3)),
            v(&[0.0, 0.0, 1.0, -1.0]),
            0.5,
        )?,
        ProxableSpec::zero(4),
        0.25,
    )?;
    let top = Contraction::new(SmoothSpec::squared_distance(v(&[0.0, 4.0, 0.0, 2.0]))?, 0.5)?;
    let p = MultilevelProblem::new(top.into(), vec![l1.into(), l2.into(), l3.into()])?;
    let sol = nested_solve_oracle(p.layers(), p.selector())?;
    let r = p.contraction_factor();
    let sets = oracle_sets(&sol);
    Ok(GalleryEntry {
        name: "nested4",
        summary: "R^4 with three nested layers; x* = (1, 7/3, 7/3, 4/3)",
        problem: GalleryProblem::Multilevel(p),
        x_star: Some(sol.x_star),
        omega_set: sets.get(1).cloned(),
        sets,
        x0: Vector::zeros(4),
        schedule: Schedule::rate(r)?,
        weight_rule: WeightRule::Nested,
        divergence_guard: crate::solver::DEFAULT_DIVERGENCE_GUARD,
        grid_box: None,
        notes: vec![
            "layers (x1 - 1)^2/2, (x2 - x3)^2/2, (x3 - x4 - 1)^2/2 with steps 0.5, 0.25, 0.25",
            "selector |x - (0, 4, 0, 2)|^2/2 with u = 0.5",
        ],
    })
}

fn diag_entry(n: usize, i: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    m[i * n + i] = 1.0;
    m
}

/// Hessian of `(x_i - x_j)^2 / 2`.
fn difference(n: usize, i: usize, j: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    m[i * n + i] = 1.0;
    m[j * n + j] = 1.0;
    m[i * n + j] = -1.0;
    m[j * n + i] = -1.0;
    m
}

fn common_point_entry() -> Result<GalleryEntry> {
    let c = v(&[1.0, 2.0]);
    let bottom = ProxGrad::new(
        quad(&diag_entry(2, 0), 2, &[1.0, 0.0])?,
        ProxableSpec::zero(2),
        1.0,
    )?;
    let middle = ProxGrad::new(
        SmoothSpec::squared_distance(c.clone())?,
        ProxableSpec::zero(2),
        0.5,
    )?;
    let top = Contraction::new(SmoothSpec::squared_distance(c.clone())?, 0.5)?;
    let p = TrilevelProblem::new(top.into(), middle.into(), bottom.into())?;
    let sol = nested_solve_oracle(&[p.bottom().clone(), p.middle().clone()], p.top())?;
    Ok(GalleryEntry {
        name: "common_point",
        summary: "R^2: selector and middle level share the center (1, 2), which lies in Fix(W)",
        problem: GalleryProblem::Trilevel(p),
        x_star: Some(sol.x_star.clone()),
        sets: oracle_sets(&sol),
        omega_set: Some(OracleSet::Affine(AffineSet::point(sol.x_star))),
        x0: v(&[4.0, -3.0]),
        schedule: Schedule::power(0.5, 0.8)?,
        weight_rule: WeightRule::Nested,
        divergence_guard: crate::solver::DEFAULT_DIVERGENCE_GUARD,
        grid_box: Some((vec![-1.0, 0.0], vec![3.0, 4.0])),
        notes: vec!["(1, 2) is a common fixed point of S, T and W"],
    })
}

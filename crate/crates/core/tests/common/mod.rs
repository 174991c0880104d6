//! Random admissible problems and the operator inequalities checked on them.
//! Each property returns its slack `rhs - lhs`; a violation is a slack
//! below `-SLACK`.
#![allow(dead_code)]

use multilevel_prox::{Contraction, Matrix, ProxGrad, ProxableSpec, SmoothSpec, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SLACK: f64 = 1e-10;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_vec(r: &mut ChaCha8Rng, n: usize, scale: f64) -> Vector {
    Vector::from_fn(n, |_, _| r.gen_range(-scale..=scale))
}

pub fn rand_dim(r: &mut ChaCha8Rng) -> usize {
    r.gen_range(1..=4)
}

/// `B'B + shift I`, with a zeroed row of `B` half the time so that singular
/// matrices appear when `shift = 0`.
pub fn rand_psd(r: &mut ChaCha8Rng, n: usize, shift: f64) -> Matrix {
    let mut b = Matrix::from_fn(n, n, |_, _| r.gen_range(-1.0..=1.0));
    if n > 1 && r.gen_bool(0.5) {
        let i = r.gen_range(0..n);
        b.row_mut(i).fill(0.0);
    }
    b.transpose() * b + Matrix::identity(n, n) * shift
}

pub fn rand_smooth(r: &mut ChaCha8Rng, n: usize) -> SmoothSpec {
    match r.gen_range(0..4) {
        0 => SmoothSpec::zero(n),
        1 => {
            let m = r.gen_range(1..=n + 1);
            let a = Matrix::from_fn(m, n, |_, _| r.gen_range(-1.0..=1.0));
            let y = rand_vec(r, m, 2.0);
            SmoothSpec::least_squares(&a, &y).unwrap()
        }
        2 => SmoothSpec::squared_distance(rand_vec(r, n, 3.0)).unwrap(),
        _ => {
            let q = rand_psd(r, n, 0.0);
            SmoothSpec::quadratic(q, rand_vec(r, n, 2.0), r.gen_range(-1.0..=1.0)).unwrap()
        }
    }
}

pub fn rand_indicator(r: &mut ChaCha8Rng, n: usize) -> ProxableSpec {
    match r.gen_range(0..3) {
        0 => {
            let lo = rand_vec(r, n, 2.0);
            let width = Vector::from_fn(n, |_, _| r.gen_range(0.0..=2.0));
            let hi = &lo + width;
            ProxableSpec::boxed(lo, hi).unwrap()
        }
        1 => {
            let m = r.gen_range(1..=n);
            let a = Matrix::from_fn(m, n, |_, _| r.gen_range(-1.0..=1.0));
            let c = rand_vec(r, m, 1.0);
            ProxableSpec::affine_eq(a, c).unwrap()
        }
        _ => ProxableSpec::ball(rand_vec(r, n, 2.0), r.gen_range(0.1..=3.0)).unwrap(),
    }
}

pub fn rand_prox(r: &mut ChaCha8Rng, n: usize) -> ProxableSpec {
    match r.gen_range(0..3) {
        0 => ProxableSpec::zero(n),
        1 => ProxableSpec::l1(r.gen_range(0.05..=2.0), n).unwrap(),
        _ => rand_indicator(r, n),
    }
}

/// Step drawn from `(0, 1/L]`, with the endpoint itself a quarter of the time.
pub fn rand_step(r: &mut ChaCha8Rng, lipschitz: f64) -> f64 {
    let top = if lipschitz > 0.0 {
        1.0 / lipschitz
    } else {
        2.0
    };
    if r.gen_bool(0.25) {
        top
    } else {
        top * r.gen_range(0.01..=1.0)
    }
}

pub fn rand_proxgrad(r: &mut ChaCha8Rng, n: usize) -> ProxGrad {
    let f = rand_smooth(r, n);
    let g = rand_prox(r, n);
    let t = rand_step(r, f.lipschitz());
    ProxGrad::new(f, g, t).unwrap()
}

pub fn rand_contraction(r: &mut ChaCha8Rng, n: usize) -> Contraction {
    let shift = r.gen_range(0.05..=1.0);
    let q = rand_psd(r, n, shift);
    let omega = SmoothSpec::quadratic(q, rand_vec(r, n, 2.0), 0.0).unwrap();
    let top = 2.0 / (omega.lipschitz() + omega.strong_convexity());
    let u = if r.gen_bool(0.25) {
        top
    } else {
        top * r.gen_range(0.01..=1.0)
    };
    Contraction::new(omega, u).unwrap()
}

/// Point of the domain of `g`.
pub fn feasible(r: &mut ChaCha8Rng, g: &ProxableSpec, n: usize) -> Vector {
    let x = rand_vec(r, n, 4.0);
    if g.is_indicator() {
        g.prox(1.0, &x).unwrap()
    } else {
        x
    }
}

fn phi(p: &ProxGrad, x: &Vector) -> f64 {
    p.objective(x).unwrap()
}

pub fn nonexpansive(seed: u64) -> f64 {
    let r = &mut rng(seed);
    let n = rand_dim(r);
    let t = rand_proxgrad(r, n);
    let (x, y) = (rand_vec(r, n, 5.0), rand_vec(r, n, 5.0));
    (&x - &y).norm() - (t.apply(&x).unwrap() - t.apply(&y).unwrap()).norm()
}

pub fn firm_projection(seed: u64) -> f64 {
    let r = &mut rng(seed);
    let n = rand_dim(r);
    let g = rand_indicator(r, n);
    let (x, y) = (rand_vec(r, n, 5.0), rand_vec(r, n, 5.0));
    let d = g.prox(1.0, &x).unwrap() - g.prox(1.0, &y).unwrap();
    d.dot(&(&x - &y)) - d.norm_squared()
}

pub fn contraction(seed: u64) -> f64 {
    let r = &mut rng(seed);
    let n = rand_dim(r);
    let s = rand_contraction(r, n);
    let (x, y) = (rand_vec(r, n, 5.0), rand_vec(r, n, 5.0));
    s.factor() * (&x - &y).norm() - (s.apply(&x).unwrap() - s.apply(&y).unwrap()).norm()
}

pub fn monotone_residual(seed: u64) -> f64 {
    let r = &mut rng(seed);
    let n = rand_dim(r);
    let t = rand_proxgrad(r, n);
    let (x, y) = (rand_vec(r, n, 5.0), rand_vec(r, n, 5.0));
    let rx = &x - t.apply(&x).unwrap();
    let ry = &y - t.apply(&y).unwrap();
    (&x - &y).dot(&(rx - ry))
}

pub fn strongly_monotone_residual(seed: u64) -> f64 {
    let r = &mut rng(seed);
    let n = rand_dim(r);
    let s = rand_contraction(r, n);
    let (x, y) = (rand_vec(r, n, 5.0), rand_vec(r, n, 5.0));
    let rx = &x - s.apply(&x).unwrap();
    let ry = &y - s.apply(&y).unwrap();
    let d = &x - &y;
    d.dot(&(rx - ry)) - (1.0 - s.factor()) * d.norm_squared()
}

/// `t * dist(0, subdifferential of f + w|.|_1 at x) - ||x - T(x)||`, with
/// the minimal-norm subgradient worked out coordinate by coordinate.
pub fn residual_bound(seed: u64) -> f64 {
    let r = &mut rng(seed);
    let n = rand_dim(r);
    let f = SmoothSpec::quadratic(rand_psd(r, n, 0.0), rand_vec(r, n, 2.0), 0.0).unwrap();
    let w = r.gen_range(0.05..=2.0);
    let t = rand_step(r, f.lipschitz());
    let p = ProxGrad::new(f.clone(), ProxableSpec::l1(w, n).unwrap(), t).unwrap();
    let mut x = rand_vec(r, n, 3.0);
    for i in 0..n {
        if r.gen_bool(0.3) {
            x[i] = 0.0;
        }
    }
    let g = f.gradient(&x).unwrap();
    let sub = Vector::from_fn(n, |i, _| {
        if x[i] > 0.0 {
            g[i] + w
        } else if x[i] < 0.0 {
            g[i] - w
        } else {
            (g[i].abs() - w).max(0.0)
        }
    });
    t * sub.norm() - (&x - p.apply(&x).unwrap()).norm()
}

pub fn descent(seed: u64) -> f64 {
    let r = &mut rng(seed);
    let n = rand_dim(r);
    let p = rand_proxgrad(r, n);
    let x = rand_vec(r, n, 5.0);
    let y = feasible(r, p.nonsmooth(), n);
    let t = p.step();
    (&x - &y).norm_squared() / (2.0 * t) - (phi(&p, &p.apply(&x).unwrap()) - phi(&p, &y))
}

pub fn three_point(seed: u64) -> f64 {
    let r = &mut rng(seed);
    let n = rand_dim(r);
    let p = rand_proxgrad(r, n);
    let x = rand_vec(r, n, 5.0);
    let u = feasible(r, p.nonsmooth(), n);
    let t = p.step();
    let xp = p.apply(&x).unwrap();
    let d = &x - &xp;
    let rhs = d.dot(&(&x - &u)) / t - d.norm_squared() / (2.0 * t);
    rhs - (phi(&p, &xp) - phi(&p, &u))
}

pub type Property = fn(u64) -> f64;

pub const PROPERTIES: [(&str, Property); 8] = [
    ("nonexpansive prox-grad maps", nonexpansive),
    ("firmly nonexpansive projections", firm_projection),
    ("contraction of S", contraction),
    ("monotone I - T", monotone_residual),
    ("strongly monotone I - S", strongly_monotone_residual),
    ("residual bound by subgradient distance", residual_bound),
    ("descent inequality", descent),
    ("three-point inequality", three_point),
];

/// Relative error of the analytic gradient against central differences.
pub fn gradient_error(seed: u64) -> f64 {
    let r = &mut rng(seed);
    let n = rand_dim(r);
    let f = rand_smooth(r, n);
    let x = rand_vec(r, n, 3.0);
    let g = f.gradient(&x).unwrap();
    let h = 1e-5;
    let fd = Vector::from_fn(n, |i, _| {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        (f.value(&xp).unwrap() - f.value(&xm).unwrap()) / (2.0 * h)
    });
    (g - fd).norm() / (1.0 + f.gradient(&x).unwrap().norm())
}

//! Small numerical kernels shared by the solvers: bracketing root finders,
//! tanh-sinh quadrature with interval splitting, and real polynomial roots.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

const MAX_SPLIT_DEPTH: u32 = 14;

/// Bisection on a sign-changing bracket. Stops once the bracket is narrower
/// than `xtol` (absolute) or the function vanishes exactly.
pub fn bisect<F>(f: F, mut lo: f64, mut hi: f64, xtol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() || !flo.is_finite() || !fhi.is_finite() {
        return Err(Error::Numerical(format!(
            "no sign change on [{lo}, {hi}]: f = ({flo:e}, {fhi:e})"
        )));
    }
    for _ in 0..400 {
        if hi - lo <= xtol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Expands `[lo, hi]` geometrically to the right until `f` changes sign.
pub fn expand_bracket_right<F>(f: F, lo: f64, mut hi: f64, limit: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    let flo = f(lo);
    let mut left = lo;
    let mut width = (hi - lo).max(f64::EPSILON);
    loop {
        let fhi = f(hi);
        if fhi.signum() != flo.signum() || fhi == 0.0 {
            return Ok((left, hi));
        }
        if hi >= limit {
            return Err(Error::Numerical(format!(
                "no sign change found on [{lo}, {limit}]"
            )));
        }
        left = hi;
        width *= 2.0;
        hi = (hi + width).min(limit);
    }
}

/// Newton's method kept inside a bracket `[lo, hi]` with `f(lo) <= 0 <= f(hi)`
/// (or the reverse); steps leaving the bracket fall back to bisection.
pub fn safeguarded_newton<F, D>(f: F, df: D, mut lo: f64, mut hi: f64, rel_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Numerical(format!(
            "newton bracket [{lo}, {hi}] has no sign change"
        )));
    }
    let increasing = fhi > 0.0;
    let mut x = hi;
    for _ in 0..200 {
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if (fx > 0.0) == increasing {
            hi = x;
        } else {
            lo = x;
        }
        let d = df(x);
        let mut next = x - fx / d;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= rel_tol * next.abs().max(1.0) || hi - lo <= rel_tol * hi.abs().max(1.0) {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::Numerical("safeguarded newton did not converge".into()))
}

/// Integral over a finite interval. Splits the interval when the tanh-sinh
/// error estimate exceeds the target.
pub fn integrate<F>(f: F, a: f64, b: f64, abs_tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return 0.0;
    }
    if b < a {
        return -integrate(f, b, a, abs_tol);
    }
    integrate_split(&f, a, b, abs_tol, 0)
}

fn integrate_split<F>(f: &F, a: f64, b: f64, abs_tol: f64, depth: u32) -> f64
where
    F: Fn(f64) -> f64,
{
    let out = quadrature::double_exponential::integrate(f, a, b, abs_tol);
    if out.error_estimate <= abs_tol || depth >= MAX_SPLIT_DEPTH {
        return out.integral;
    }
    let mid = 0.5 * (a + b);
    integrate_split(f, a, mid, 0.5 * abs_tol, depth + 1)
        + integrate_split(f, mid, b, 0.5 * abs_tol, depth + 1)
}

/// Integral over `[a, inf)` through `x = a + scale * t / (1 - t)`.
pub fn integrate_to_infinity<F>(f: F, a: f64, scale: f64, abs_tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    let g = |t: f64| {
        let one_minus = 1.0 - t;
        if one_minus <= 0.0 {
            return 0.0;
        }
        let x = a + scale * t / one_minus;
        scale * f(x) / (one_minus * one_minus)
    };
    integrate(g, 0.0, 1.0, abs_tol)
}

/// Roots of `c[0] + c[1] x + ... + c[n] x^n` as companion-matrix eigenvalues,
/// polished by a few Newton steps on the polynomial itself.
pub fn polynomial_roots(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    let mut c: Vec<f64> = coeffs.to_vec();
    while c.len() > 1 && *c.last().unwrap() == 0.0 {
        c.pop();
    }
    let n = c.len() - 1;
    if n == 0 {
        return Ok(Vec::new());
    }
    let lead = c[n];
    let mut companion = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        companion[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        companion[(i, n - 1)] = -c[i] / lead;
    }
    let eig = companion.complex_eigenvalues();
    let mut roots: Vec<Complex64> = eig.iter().map(|z| Complex64::new(z.re, z.im)).collect();
    for r in roots.iter_mut() {
        for _ in 0..4 {
            let (p, dp) = horner(&c, *r);
            if dp.norm() == 0.0 {
                break;
            }
            let step = p / dp;
            if !step.is_finite() {
                break;
            }
            *r -= step;
        }
    }
    Ok(roots)
}

/// Evaluates a polynomial and its derivative at `z`.
pub fn horner(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &a in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + a;
    }
    (p, dp)
}

/// Natural cubic spline through `(xs[i], ys[i])`, `xs` increasing.
#[derive(Clone, Debug)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    second: Vec<f64>,
}

impl CubicSpline {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n < 3 || ys.len() != n {
            return Err(Error::Usage("a spline needs at least three knots".into()));
        }
        let mut second = vec![0.0; n];
        let mut u = vec![0.0; n];
        for i in 1..n - 1 {
            let sig = (xs[i] - xs[i - 1]) / (xs[i + 1] - xs[i - 1]);
            let p = sig * second[i - 1] + 2.0;
            second[i] = (sig - 1.0) / p;
            let d = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]) - (ys[i] - ys[i - 1]) / (xs[i] - xs[i - 1]);
            u[i] = (6.0 * d / (xs[i + 1] - xs[i - 1]) - sig * u[i - 1]) / p;
        }
        second[n - 1] = 0.0;
        for i in (0..n - 1).rev() {
            second[i] = second[i] * second[i + 1] + u[i];
        }
        Ok(CubicSpline { xs, ys, second })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let i = self.xs.partition_point(|&v| v <= x).clamp(1, n - 1);
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        a * self.ys[i - 1]
            + b * self.ys[i]
            + ((a * a * a - a) * self.second[i - 1] + (b * b * b - b) * self.second[i]) * h * h / 6.0
    }
}

//! Appell functions of the supremum at an exponential time and their
//! positive roots.
//!
//! Integer orders are polynomials in the moments of the supremum `M`. For a
//! non-integer order `s` with `k = ceil(s)`,
//!
//! ```text
//! Q_s(y) = 1/Gamma(-s) * [ sum_{j<=k} c_j Gamma(j-s) b^{s-j}
//!          + int_0^inf u^{-s-1} (e^{-uy}/L(u) - e^{-bu} T_k(u)) du ]
//! ```
//!
//! where `L(u) = E[e^{-uM}]`, `b = max(y, E[M])`, `T_k` is the degree-`k`
//! Taylor polynomial of `e^{u(b-y)}/L(u)` with coefficients
//! `c_j = (-1)^j Q_j(y-b)/j!`. This is the analytic continuation of the
//! defining integral for negative orders; it satisfies
//! `Q_s' = s Q_{s-1}` and `E[Q_s(M)] = 0`.

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::fluctuation::{ExtremaLaw, LawKind, Side};
use crate::levy_models::{check_power_moment, LevyModel};
use crate::numerics;

/// Trapezoid step of the Mellin integral in `t = ln u`.
const MELLIN_STEP: f64 = 0.05;
const MELLIN_T_MIN: f64 = -40.0;
/// Integrand cut-off: `e^{-uy}` beyond `u y = 50` is below 2e-22.
const MELLIN_U_Y_MAX: f64 = 50.0;
/// Below `u b = SERIES_SWITCH` the remainder is summed as a power series.
const SERIES_SWITCH: f64 = 0.1;
const SERIES_TERMS: usize = 8;
/// Highest fractional order supported (bounded by the moments kept).
const MAX_ORDER: f64 = 8.0;

/// `ln E[exp(-u M)]` of a supremum law.
#[derive(Clone, Debug)]
enum LaplaceSource {
    Exponential { rate: f64 },
    Samples(Vec<f64>),
}

impl LaplaceSource {
    fn log_l(&self, u: f64) -> f64 {
        match self {
            LaplaceSource::Exponential { rate } => -(u / rate).ln_1p(),
            LaplaceSource::Samples(xs) => {
                // Shift by the smallest sample so that large u cannot underflow.
                let x_min = xs[0];
                let mut acc = 0.0;
                for &x in xs {
                    let e = u * (x - x_min);
                    if e > 745.0 {
                        break;
                    }
                    acc += (-e).exp();
                }
                (acc / xs.len() as f64).ln() - u * x_min
            }
        }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn horner(coeffs: &[f64], y: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, a| acc * y + a)
}

/// Appell functions `Q_s`, `0 < s <= nu`, of the supremum at `e_q`.
#[derive(Clone, Debug)]
pub struct AppellFamily {
    pub law: ExtremaLaw,
    pub nu: f64,
    /// Raw moments `m_0 = 1, m_1, ...` of the supremum.
    pub moments: Vec<f64>,
    /// `ln L(u)` on the trapezoid grid `t_k = T_MIN + k h` (fractional orders only).
    log_l: Vec<f64>,
    source: LaplaceSource,
    /// Integer-order polynomial coefficients, ascending.
    polys: Vec<Vec<f64>>,
}

impl AppellFamily {
    /// Checks the moment condition on the upward tail, then builds the family.
    pub fn new(model: &LevyModel, law: ExtremaLaw, nu: f64) -> Result<Self> {
        let pm = check_power_moment(model, nu);
        if !pm.finite {
            return Err(Error::Precondition(format!(
                "the upward jump tail has no finite moment of order {nu}"
            )));
        }
        Self::from_law(law, nu)
    }

    pub fn from_law(law: ExtremaLaw, nu: f64) -> Result<Self> {
        if law.side != Side::Supremum {
            return Err(Error::Usage("Appell functions need the supremum law".into()));
        }
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::domain("nu", nu, "(0, inf)"));
        }
        let fractional = nu.fract() != 0.0;
        if fractional && nu > MAX_ORDER {
            return Err(Error::Precondition(format!(
                "fractional orders above {MAX_ORDER} are not supported (nu = {nu})"
            )));
        }
        // Fractional evaluations need the series tail of the Taylor remainder.
        let n_max = nu.ceil() as usize + SERIES_TERMS + 1;
        let moments: Vec<f64> = (0..=n_max as u32).map(|k| law.abs_moment(k)).collect();
        let kappa = kappas(&moments);
        let polys = (0..=n_max)
            .map(|n| (0..=n).map(|k| binom(n, k) * kappa[n - k]).collect())
            .collect();
        let source = match &law.kind {
            LawKind::ExactExponential { rate } => LaplaceSource::Exponential { rate: *rate },
            LawKind::Empirical { samples, .. } => LaplaceSource::Samples(samples.clone()),
        };
        let mut fam = AppellFamily {
            law,
            nu,
            moments,
            log_l: Vec::new(),
            source,
            polys,
        };
        if fractional || matches!(fam.source, LaplaceSource::Exponential { .. }) {
            let n = fam.grid_len(1e-3 * fam.moments[1]);
            fam.log_l = (0..n).map(|k| fam.source.log_l(grid_u(k))).collect();
        }
        Ok(fam)
    }

    fn grid_len(&self, y: f64) -> usize {
        let t_max = (MELLIN_U_Y_MAX / y).ln().max(MELLIN_T_MIN);
        ((t_max - MELLIN_T_MIN) / MELLIN_STEP).ceil() as usize + 1
    }

    /// Coefficients (ascending) of the integer-order polynomial `Q_n`.
    pub fn polynomial(&self, n: usize) -> Result<&[f64]> {
        if n as f64 > self.nu {
            return Err(Error::domain("s", n as f64, format!("integer order at most {}", self.nu)));
        }
        Ok(&self.polys[n])
    }

    /// `Q_s(y)` for `y > 0` and `0 <= s <= nu`.
    pub fn eval(&self, s: f64, y: f64) -> Result<f64> {
        if !(y > 0.0) || !y.is_finite() {
            return Err(Error::domain("y", y, "(0, inf)"));
        }
        if !(s >= 0.0 && s <= self.nu) {
            return Err(Error::domain("s", s, format!("[0, {}]", self.nu)));
        }
        if s.fract() == 0.0 {
            return Ok(horner(&self.polys[s as usize], y));
        }
        Ok(self.fractional(s, y))
    }

    fn fractional(&self, s: f64, y: f64) -> f64 {
        let k = s.ceil() as usize;
        let b = y.max(self.moments[1]);
        let c: Vec<f64> = (0..=k)
            .map(|j| (-1f64).powi(j as i32) * horner(&self.polys[j], y - b) / factorial(j))
            .collect();
        let analytic: f64 = c
            .iter()
            .enumerate()
            .map(|(j, cj)| cj * gamma(j as f64 - s) * b.powf(s - j as f64))
            .sum();
        // Series of the remainder: [u^j] e^{-uy}/L - [u^j] e^{-bu} T_k(u).
        let series: Vec<(f64, f64)> = (k + 1..=k + SERIES_TERMS)
            .map(|j| {
                let direct = (-1f64).powi(j as i32) * horner(&self.polys[j], y) / factorial(j);
                let damped: f64 = c
                    .iter()
                    .enumerate()
                    .map(|(i, ci)| ci * (-b).powi((j - i) as i32) / factorial(j - i))
                    .sum();
                (j as f64, direct - damped)
            })
            .collect();
        let u_switch = SERIES_SWITCH / b;
        let mut acc = 0.0;
        for idx in 0..self.grid_len(y) {
            let t = MELLIN_T_MIN + idx as f64 * MELLIN_STEP;
            let u = t.exp();
            let rem = if u < u_switch {
                series.iter().map(|(j, d)| d * u.powf(*j)).sum::<f64>()
            } else {
                let log_l = self.log_l.get(idx).copied().unwrap_or_else(|| self.source.log_l(u));
                (-u * y - log_l).exp() - (-b * u).exp() * horner(&c, u)
            };
            acc += (-s * t).exp() * rem;
        }
        (analytic + acc * MELLIN_STEP) / gamma(-s)
    }

    pub fn mean(&self) -> f64 {
        self.moments[1]
    }

    /// Standard deviation of the supremum, the natural length scale.
    pub fn scale(&self) -> f64 {
        let m1 = self.moments[1];
        (self.moments[2] - m1 * m1).max(0.0).sqrt()
    }

    /// Positive root `a(nu)` of `Q_nu`: geometric bracketing from `E[M]`,
    /// then bisection to `1e-12`.
    pub fn root(&self) -> Result<f64> {
        let m1 = self.moments[1];
        let x_max = m1 + 50.0 * self.scale();
        let f = |y: f64| self.eval(self.nu, y).unwrap_or(f64::NAN);
        let f_m1 = f(m1);
        if f_m1 == 0.0 {
            return Ok(m1);
        }
        let (lo, hi) = if f_m1 < 0.0 {
            let mut lo = m1;
            let mut hi = (2.0 * m1).min(x_max);
            loop {
                let v = f(hi);
                if v >= 0.0 {
                    break (lo, hi);
                }
                if hi >= x_max || v.is_nan() {
                    return Err(Error::Numerical(format!(
                        "Q_{} stays negative up to {x_max}; the supremum law looks corrupt",
                        self.nu
                    )));
                }
                lo = hi;
                hi = (2.0 * hi).min(x_max);
            }
        } else {
            let mut hi = m1;
            let mut lo = 0.5 * m1;
            loop {
                let v = f(lo);
                if v < 0.0 {
                    break (lo, hi);
                }
                if lo < 1e-12 * m1 || v.is_nan() {
                    return Err(Error::Numerical(format!("no sign change of Q_{} below {hi}", self.nu)));
                }
                hi = lo;
                lo *= 0.5;
            }
        };
        numerics::bisect(f, lo, hi, 1e-12 * hi.max(1.0))
    }
}

fn grid_u(k: usize) -> f64 {
    (MELLIN_T_MIN + k as f64 * MELLIN_STEP).exp()
}

/// Coefficients of `1 / E[e^{uM}] = sum kappa_j u^j / j!`.
fn kappas(moments: &[f64]) -> Vec<f64> {
    let mut kappa = vec![1.0];
    for k in 1..moments.len() {
        let v: f64 = (1..=k).map(|j| binom(k, j) * moments[j] * kappa[k - j]).sum();
        kappa.push(-v);
    }
    kappa
}

pub fn appell_eval(fam: &AppellFamily, s: f64, y: f64) -> Result<f64> {
    fam.eval(s, y)
}

pub fn appell_root(fam: &AppellFamily) -> Result<f64> {
    fam.root()
}

/// Closed form for an `Exp(rate)` supremum: `Q_s(y) = y^{s-1} (y - s / rate)`.
pub fn exponential_appell(rate: f64, s: f64, y: f64) -> f64 {
    y.powf(s - 1.0) * (y - s / rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_family(rate: f64, nu: f64) -> AppellFamily {
        AppellFamily::from_law(ExtremaLaw::exact(Side::Supremum, 0.5, rate).unwrap(), nu).unwrap()
    }

    #[test]
    fn integer_polynomials() {
        let f = exp_family(1.0, 2.0);
        assert_eq!(f.polynomial(1).unwrap(), &[-1.0, 1.0]);
        assert_eq!(f.polynomial(2).unwrap(), &[0.0, -2.0, 1.0]);
        assert!((f.eval(1.0, 3.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(f.polynomial(3).is_err());
    }

    #[test]
    fn roots_of_exponential_law() {
        assert!((exp_family(1.0, 1.0).root().unwrap() - 1.0).abs() < 1e-12);
        assert!((exp_family(1.0, 2.0).root().unwrap() - 2.0).abs() < 1e-12);
        assert!((exp_family(2.0, 1.0).root().unwrap() - 0.5).abs() < 1e-12);
        assert!((exp_family(1.5, 3.0).root().unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn domain_errors() {
        let f = exp_family(1.0, 2.0);
        assert!(f.eval(1.0, 0.0).is_err());
        assert!(f.eval(1.0, -1.0).is_err());
        assert!(f.eval(2.5, 1.0).is_err());
        let inf = ExtremaLaw::exact(Side::Infimum, 0.5, 1.0).unwrap();
        assert!(AppellFamily::from_law(inf, 1.0).is_err());
    }

    #[test]
    fn fractional_orders_match_closed_form() {
        for &(rate, nu) in &[(1.0, 1.5), (1.3, 0.4), (0.7, 2.75), (2.0, 3.2)] {
            let f = exp_family(rate, nu);
            let mut s = nu;
            while s > 0.0 {
                for &y in &[0.05, 0.3, 1.0, 2.5, 6.0, 20.0] {
                    let got = f.eval(s, y).unwrap();
                    let want = exponential_appell(rate, s, y);
                    assert!(
                        (got - want).abs() < 1e-9 * want.abs().max(1.0),
                        "rate {rate} s {s} y {y}: {got} vs {want}"
                    );
                }
                s -= 1.0;
            }
            assert!((f.root().unwrap() - nu / rate).abs() < 1e-9);
        }
    }

    /// `Gamma(2, rate)` supremum: `1/L = (1 + u/rate)^2`, so
    /// `Q_s(y) = y^s - 2s y^{s-1}/rate + s(s-1) y^{s-2}/rate^2`.
    fn gamma2_appell(rate: f64, s: f64, y: f64) -> f64 {
        y.powf(s) - 2.0 * s * y.powf(s - 1.0) / rate + s * (s - 1.0) * y.powf(s - 2.0) / (rate * rate)
    }

    #[test]
    fn fractional_orders_on_a_sample_cloud() {
        use statrs::distribution::{ContinuousCDF, Gamma};
        let g = Gamma::new(2.0, 1.0).unwrap();
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|i| g.inverse_cdf((i as f64 + 0.5) / n as f64)).collect();
        let law = ExtremaLaw::from_samples(Side::Supremum, 1.0, xs, 0, None).unwrap();
        let f = AppellFamily::from_law(law, 1.6).unwrap();
        for &s in &[0.6, 1.6] {
            for &y in &[1.0, 2.0, 4.0] {
                let got = f.eval(s, y).unwrap();
                let want = gamma2_appell(1.0, s, y);
                assert!((got - want).abs() < 2e-3 * want.abs().max(1.0), "s {s} y {y}: {got} vs {want}");
            }
        }
        // Q_s' = s Q_{s-1}.
        for &y in &[1.5, 3.0] {
            let h = 1e-4;
            let d = (f.eval(1.6, y + h).unwrap() - f.eval(1.6, y - h).unwrap()) / (2.0 * h);
            let r = 1.6 * f.eval(0.6, y).unwrap();
            assert!((d - r).abs() < 1e-6 * r.abs().max(1.0), "{d} vs {r}");
        }
    }
}

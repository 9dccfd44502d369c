//! q-scale functions `W`, `Z` of spectrally negative models and the right
//! inverse `Phi` of the Laplace exponent.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::levy_models::{Family, LevyModel};
use crate::numerics;

/// Talbot nodes used by the numeric inversion backend.
pub const TALBOT_NODES: usize = 64;

/// Relative root separation below which the partial-fraction form is refused.
const CONFLUENT_TOL: f64 = 1e-5;

/// Largest root of `psi(l) = q`.
pub fn phi(model: &LevyModel, q: f64) -> Result<f64> {
    require_sn(model)?;
    if !(q >= 0.0) || !q.is_finite() {
        return Err(Error::domain("q", q, "[0, inf)"));
    }
    let slope0 = model.psi_prime(0.0);
    if q == 0.0 && slope0 >= 0.0 {
        return Ok(0.0);
    }
    let f = |l: f64| model.psi_unchecked(l) - q;
    let df = |l: f64| model.psi_prime(l);
    let lo = if slope0 >= 0.0 {
        0.0
    } else {
        // Minimiser of psi on [0, inf).
        let (a, b) = numerics::expand_bracket_right(df, 0.0, 1.0, 1e12)?;
        numerics::bisect(df, a, b, 1e-15 * b.max(1.0))?
    };
    let (a, b) = numerics::expand_bracket_right(f, lo, lo + 1.0, 1e12)?;
    let root = numerics::safeguarded_newton(f, df, a, b, 1e-16)?;
    // One last Newton step tightens the residual in ulps.
    let polished = root - f(root) / df(root);
    Ok(if f(polished).abs() < f(root).abs() { polished } else { root })
}

fn require_sn(model: &LevyModel) -> Result<()> {
    if model.is_spectrally_negative() {
        Ok(())
    } else {
        Err(Error::UnsupportedModel(format!(
            "scale functions need a spectrally negative model; {} has upward jumps",
            model.family_name()
        )))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum ScaleRepr {
    /// `W(x) = A (e^{theta_+ x} - e^{theta_- x})`.
    ClosedFormBM {
        theta_plus: f64,
        theta_minus: f64,
        amplitude: f64,
    },
    /// `W(x) = sum_i w_i e^{r_i x}` over the poles of `1 / (psi - q)`.
    ClosedFormRational { poles: Vec<f64>, weights: Vec<f64> },
    /// Fixed Talbot inversion of the transform shifted by `Phi(q)`.
    NumericInversion {
        nodes: usize,
        h: f64,
        method: &'static str,
    },
}

/// Immutable scale function table for one model and discount rate.
#[derive(Clone, Debug)]
pub struct ScaleFunctionTable {
    pub model: LevyModel,
    pub q: f64,
    pub phi_q: f64,
    pub repr: ScaleRepr,
    /// `W(0)`: `1/d` for bounded variation, 0 otherwise.
    w_zero: f64,
    talbot: Vec<(f64, Complex64, Complex64)>,
}

/// Picks the closed form the model family admits, else numeric inversion.
pub fn build_scale_table(model: &LevyModel, q: f64) -> Result<ScaleFunctionTable> {
    require_sn(model)?;
    let phi_q = phi(model, q)?;
    let c = model.components();
    let repr = match model.family() {
        Family::BrownianDrift(_) => {
            let s2 = c.sigma * c.sigma;
            let disc = (c.drift * c.drift + 2.0 * s2 * q).sqrt();
            let theta_minus = (-c.drift - disc) / s2;
            let amplitude = if disc > 0.0 { 2.0 / (s2 * (phi_q - theta_minus)) } else { f64::INFINITY };
            ScaleRepr::ClosedFormBM {
                theta_plus: phi_q,
                theta_minus,
                amplitude,
            }
        }
        _ => match rational_form(model, q) {
            Some(r) => r?,
            None => return build_numeric_scale_table(model, q),
        },
    };
    Ok(ScaleFunctionTable {
        model: model.clone(),
        q,
        phi_q,
        repr,
        w_zero: w_at_zero(model),
        talbot: Vec::new(),
    })
}

/// Numeric inversion regardless of family; used to cross-check closed forms.
pub fn build_numeric_scale_table(model: &LevyModel, q: f64) -> Result<ScaleFunctionTable> {
    require_sn(model)?;
    if !(q >= 0.0) {
        return Err(Error::domain("q", q, "[0, inf)"));
    }
    let phi_q = phi(model, q)?;
    let n = TALBOT_NODES;
    let h = 2.0 * std::f64::consts::PI / n as f64;
    // Weideman's optimised cotangent contour; the nodes for unit time are
    // rescaled by N / t at evaluation.
    let talbot = (1..=n / 2)
        .map(|k| {
            let theta = (k as f64 - 0.5) * h;
            let (a, b, c) = (-0.6122, 0.5017, 0.6407);
            let alpha = 0.2645;
            let cot = 1.0 / (c * theta).tan();
            let z = Complex64::new(a + b * theta * cot, alpha * theta);
            let dz = Complex64::new(b * cot - b * c * theta / (c * theta).sin().powi(2), alpha);
            (theta, z * n as f64, dz * n as f64)
        })
        .collect();
    Ok(ScaleFunctionTable {
        model: model.clone(),
        q,
        phi_q,
        repr: ScaleRepr::NumericInversion {
            nodes: n,
            h,
            method: "talbot-weideman",
        },
        w_zero: w_at_zero(model),
        talbot,
    })
}

fn w_at_zero(model: &LevyModel) -> f64 {
    model.bv_drift().map_or(0.0, |d| 1.0 / d)
}

/// Partial fractions of `P / N = 1 / (psi - q)` with `N = (eta + l)(psi - q)`.
fn rational_form(model: &LevyModel, q: f64) -> Option<Result<ScaleRepr>> {
    let c = model.components();
    let s2h = 0.5 * c.sigma * c.sigma;
    let rate = c.lambda_j * (1.0 - c.p);
    let (num, den): (Vec<f64>, Vec<f64>) = match model.family() {
        Family::SpectrallyNegativeCL(_) | Family::BoundedVariationSN(_) if rate > 0.0 => {
            let eta = c.eta_minus;
            let mu = c.drift;
            (
                vec![eta, 1.0],
                vec![-q * eta, mu * eta - q - rate, s2h * eta + mu, s2h],
            )
        }
        Family::SpectrallyNegativeCL(_) | Family::BoundedVariationSN(_) => (vec![1.0], vec![-q, c.drift, s2h]),
        _ => return None,
    };
    Some(partial_fractions(&num, &den))
}

fn partial_fractions(num: &[f64], den: &[f64]) -> Result<ScaleRepr> {
    let roots = numerics::polynomial_roots(den)?;
    let scale = 1.0 + roots.iter().map(|r| r.norm()).fold(0.0, f64::max);
    let mut poles = Vec::with_capacity(roots.len());
    for r in &roots {
        if r.im.abs() > 1e-8 * scale {
            return Err(Error::Numerical(format!("complex pole {r} in the scale transform")));
        }
        poles.push(r.re);
    }
    poles.sort_by(|a, b| b.total_cmp(a));
    for w in poles.windows(2) {
        if (w[0] - w[1]).abs() < CONFLUENT_TOL * scale {
            return Err(Error::Numerical(format!(
                "repeated pole near {} in the scale transform; perturb the parameters slightly",
                w[0]
            )));
        }
    }
    let den_trim: Vec<f64> = {
        let mut d = den.to_vec();
        while d.len() > 1 && *d.last().unwrap() == 0.0 {
            d.pop();
        }
        d
    };
    let weights = poles
        .iter()
        .map(|&r| {
            let z = Complex64::new(r, 0.0);
            let (p, _) = numerics::horner(num, z);
            let (_, dn) = numerics::horner(&den_trim, z);
            p.re / dn.re
        })
        .collect();
    Ok(ScaleRepr::ClosedFormRational { poles, weights })
}

impl ScaleFunctionTable {
    fn exponential_terms(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match &self.repr {
            ScaleRepr::ClosedFormBM {
                theta_plus,
                theta_minus,
                amplitude,
            } if amplitude.is_finite() => Some((vec![*theta_plus, *theta_minus], vec![*amplitude, -*amplitude])),
            ScaleRepr::ClosedFormRational { poles, weights } => Some((poles.clone(), weights.clone())),
            _ => None,
        }
    }

    /// Zero-drift Brownian motion at `q = 0`: `W(x) = 2x / sigma^2`.
    fn linear_bm(&self) -> Option<f64> {
        match self.repr {
            ScaleRepr::ClosedFormBM { amplitude, .. } if amplitude.is_infinite() => {
                let s = self.model.components().sigma;
                Some(2.0 / (s * s))
            }
            _ => None,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self.repr, ScaleRepr::NumericInversion { .. })
    }

    /// `W(x)`, zero on the negative half-line.
    pub fn w(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        if x == 0.0 {
            return self.w_zero;
        }
        if let Some(k) = self.linear_bm() {
            return k * x;
        }
        match self.exponential_terms() {
            Some((poles, weights)) => poles.iter().zip(&weights).map(|(r, w)| w * (r * x).exp()).sum(),
            None => {
                let model = &self.model;
                let (phi_q, q) = (self.phi_q, self.q);
                let g = self.talbot_invert(x, |z| Complex64::new(1.0, 0.0) / (model.psi_complex(z + phi_q) - q));
                (phi_q * x).exp() * g
            }
        }
    }

    /// `Z(x) = 1 + q int_0^x W`, equal to 1 for `x <= 0`.
    pub fn z(&self, x: f64) -> f64 {
        if x <= 0.0 || self.q == 0.0 {
            return 1.0;
        }
        if let Some(k) = self.linear_bm() {
            return 1.0 + self.q * 0.5 * k * x * x;
        }
        match self.exponential_terms() {
            Some((poles, weights)) => {
                let s: f64 = poles
                    .iter()
                    .zip(&weights)
                    .map(|(&r, w)| if r == 0.0 { w * x } else { w * (r * x).exp_m1() / r })
                    .sum();
                1.0 + self.q * s
            }
            None => {
                let model = &self.model;
                let (phi_q, q) = (self.phi_q, self.q);
                let g = self.talbot_invert(x, |z| {
                    let s = z + phi_q;
                    let psi = model.psi_complex(s);
                    psi / (s * (psi - q))
                });
                (phi_q * x).exp() * g
            }
        }
    }

    /// `W'(x)` for `x > 0`.
    pub fn w_prime(&self, x: f64) -> Result<f64> {
        check_positive(x)?;
        if let Some(k) = self.linear_bm() {
            return Ok(k);
        }
        Ok(match self.exponential_terms() {
            Some((poles, weights)) => poles.iter().zip(&weights).map(|(r, w)| w * r * (r * x).exp()).sum(),
            None => {
                let h = fd_step(x);
                (self.w(x + h) - self.w(x - h)) / (2.0 * h)
            }
        })
    }

    /// `W''(x)` for `x > 0`. Accurate to about `1e-4` relative in the numeric repr.
    pub fn w_second(&self, x: f64) -> Result<f64> {
        check_positive(x)?;
        if self.linear_bm().is_some() {
            return Ok(0.0);
        }
        Ok(match self.exponential_terms() {
            Some((poles, weights)) => poles.iter().zip(&weights).map(|(r, w)| w * r * r * (r * x).exp()).sum(),
            None => {
                let h = fd_step(x).max(1e-3 * x.min(1.0));
                let h = h.min(0.5 * x);
                (self.w(x + h) - 2.0 * self.w(x) + self.w(x - h)) / (h * h)
            }
        })
    }

    fn talbot_invert<F>(&self, t: f64, transform: F) -> f64
    where
        F: Fn(Complex64) -> Complex64,
    {
        let n = self.talbot.len() * 2;
        let h = 2.0 * std::f64::consts::PI / n as f64;
        let mut acc = 0.0;
        for &(_, z1, dz1) in &self.talbot {
            let z = z1 / t;
            let dz = dz1 / t;
            acc += ((z * t).exp() * transform(z) * dz).im;
        }
        acc * h / std::f64::consts::PI
    }
}

fn fd_step(x: f64) -> f64 {
    (1e-5 * (1.0 + x.abs())).min(0.5 * x)
}

fn check_positive(x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain("x", x, "(0, inf) for scale function derivatives"))
    }
}

pub fn eval_w(table: &ScaleFunctionTable, x: f64) -> f64 {
    table.w(x)
}

pub fn eval_z(table: &ScaleFunctionTable, x: f64) -> f64 {
    table.z(x)
}

pub fn eval_w_prime(table: &ScaleFunctionTable, x: f64) -> Result<f64> {
    table.w_prime(x)
}

pub fn eval_w_second(table: &ScaleFunctionTable, x: f64) -> Result<f64> {
    table.w_second(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_examples() {
        let bm = LevyModel::brownian(0.0, 1.0).unwrap();
        assert!((phi(&bm, 0.5).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(phi(&bm, 0.0).unwrap(), 0.0);
        let drifted = LevyModel::brownian(-1.0, 1.0).unwrap();
        assert!((phi(&drifted, 0.0).unwrap() - 2.0).abs() < 1e-13);
        let up = LevyModel::brownian(1.0, 1.0).unwrap();
        assert_eq!(phi(&up, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn phi_rejects_positive_jumps() {
        let m = LevyModel::jump_diffusion(0.0, 1.0, 1.0, 0.5, 2.0, 2.0).unwrap();
        assert!(matches!(phi(&m, 1.0), Err(Error::UnsupportedModel(_))));
        assert!(matches!(build_scale_table(&m, 1.0), Err(Error::UnsupportedModel(_))));
    }

    #[test]
    fn brownian_closed_form() {
        let t = build_scale_table(&LevyModel::brownian(0.0, 1.0).unwrap(), 1.0).unwrap();
        let r2 = 2f64.sqrt();
        for &x in &[0.1, 1.0, 3.0] {
            assert!((t.w(x) - r2 * (r2 * x).sinh()).abs() < 1e-12 * t.w(x));
            assert!((t.z(x) - (r2 * x).cosh()).abs() < 1e-12 * t.z(x));
            assert!((t.w_prime(x).unwrap() - 2.0 * (r2 * x).cosh()).abs() < 1e-11 * t.z(x));
        }
        assert!((t.z(1.0) - 2.178183).abs() < 1e-6);
        assert_eq!(t.w(0.0), 0.0);
        assert_eq!(t.w(-1.0), 0.0);
        assert_eq!(t.z(0.0), 1.0);
        assert!(t.w_prime(0.0).is_err());
    }

    #[test]
    fn bounded_variation_starts_at_one_over_d() {
        let m = LevyModel::bounded_variation(2.0, 1.0, 1.0).unwrap();
        let t = build_scale_table(&m, 0.5).unwrap();
        assert!(matches!(t.repr, ScaleRepr::ClosedFormRational { .. }));
        assert_eq!(t.w(0.0), 0.5);
        assert!((t.w(1e-9) - 0.5).abs() < 1e-8);
    }

    #[test]
    fn numeric_matches_closed_forms() {
        let models = [
            LevyModel::brownian(0.3, 0.8).unwrap(),
            LevyModel::cramer_lundberg(0.5, 1.0, 1.0, 2.0).unwrap(),
            LevyModel::bounded_variation(2.0, 1.0, 1.0).unwrap(),
        ];
        for m in &models {
            let exact = build_scale_table(m, 1.0).unwrap();
            let num = build_numeric_scale_table(m, 1.0).unwrap();
            for &x in &[0.01, 0.5, 2.0, 10.0] {
                let (a, b) = (exact.w(x), num.w(x));
                assert!((a - b).abs() < 1e-6 * a, "{}: W({x}) {a} vs {b}", m.family_name());
                let (a, b) = (exact.z(x), num.z(x));
                assert!((a - b).abs() < 1e-6 * a, "{}: Z({x}) {a} vs {b}", m.family_name());
            }
        }
    }

    #[test]
    fn cramer_lundberg_laplace_residual() {
        let m = LevyModel::cramer_lundberg(0.5, 1.0, 1.0, 2.0).unwrap();
        let t = build_scale_table(&m, 1.0).unwrap();
        for d in [0.5, 1.0, 2.0] {
            let lam = t.phi_q + d;
            let x_max = 40.0 / d;
            let lhs = numerics::integrate(|x| (-lam * x).exp() * t.w(x), 0.0, x_max, 1e-14);
            let rhs = 1.0 / (m.laplace_exponent(lam).unwrap() - 1.0);
            assert!((lhs - rhs).abs() < 1e-6 * rhs, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn zero_discount_brownian_is_linear() {
        let t = build_scale_table(&LevyModel::brownian(0.0, 2.0).unwrap(), 0.0).unwrap();
        assert!((t.w(3.0) - 1.5).abs() < 1e-15);
        assert_eq!(t.z(3.0), 1.0);
    }
}

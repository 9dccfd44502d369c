//! Closed catalog of Lévy models with their Laplace exponents.
//!
//! Every family is Brownian motion with drift plus (optionally) a compound
//! Poisson process with exponential jump sizes, so the Laplace exponent is
//! available in closed form and paths can be simulated exactly at jumps.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::function::gamma::gamma_ui;

use crate::error::{Error, Result};

/// Relative distance kept from the poles of the Laplace exponent.
pub const STRIP_MARGIN: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrownianParams {
    pub mu: f64,
    pub sigma: f64,
}

/// Brownian motion plus two-sided exponential jumps (Kou-type).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpDiffusionParams {
    pub mu: f64,
    pub sigma: f64,
    pub lambda_j: f64,
    pub p: f64,
    pub eta_plus: f64,
    pub eta_minus: f64,
}

/// Brownian motion minus a compound Poisson process with Exp(eta_minus) marks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CramerLundbergParams {
    pub mu: f64,
    pub sigma: f64,
    pub lambda_j: f64,
    pub eta_minus: f64,
    #[serde(default)]
    pub p: f64,
}

/// Pure drift `d` minus a compound Poisson process with Exp(eta_minus) marks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundedVariationParams {
    pub d: f64,
    pub lambda_j: f64,
    pub eta_minus: f64,
    #[serde(default)]
    pub p: f64,
}

/// Model families in the on-disk form `{"family": ..., "params": {...}}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", deny_unknown_fields)]
pub enum Family {
    BrownianDrift(BrownianParams),
    JumpDiffusionExp(JumpDiffusionParams),
    SpectrallyNegativeCL(CramerLundbergParams),
    BoundedVariationSN(BoundedVariationParams),
}

/// Uniform view of the parameters shared by every family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Components {
    /// Drift of the continuous part (`d` for bounded-variation models).
    pub drift: f64,
    pub sigma: f64,
    pub lambda_j: f64,
    pub p: f64,
    /// Rate of the upward jump tail; infinite when there are no up-jumps.
    pub eta_plus: f64,
    pub eta_minus: f64,
}

/// A validated Lévy model. Construction rejects monotone paths and
/// out-of-range parameters, so downstream code never sees an invalid model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Family", into = "Family")]
pub struct LevyModel {
    family: Family,
    parts: Components,
}

impl TryFrom<Family> for LevyModel {
    type Error = Error;

    fn try_from(family: Family) -> Result<Self> {
        LevyModel::new(family)
    }
}

impl From<LevyModel> for Family {
    fn from(m: LevyModel) -> Family {
        m.family
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("{name} must be finite, got {v}")))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    finite(name, v)?;
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("{name} must be > 0, got {v}")))
    }
}

fn nonnegative(name: &str, v: f64) -> Result<()> {
    finite(name, v)?;
    if v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("{name} must be >= 0, got {v}")))
    }
}

impl LevyModel {
    pub fn new(family: Family) -> Result<Self> {
        let parts = match family {
            Family::BrownianDrift(BrownianParams { mu, sigma }) => {
                finite("mu", mu)?;
                positive("sigma", sigma).map_err(|_| {
                    Error::InvalidModel(format!(
                        "BrownianDrift needs sigma > 0 (paths are monotone otherwise), got {sigma}"
                    ))
                })?;
                Components {
                    drift: mu,
                    sigma,
                    lambda_j: 0.0,
                    p: 0.0,
                    eta_plus: f64::INFINITY,
                    eta_minus: f64::INFINITY,
                }
            }
            Family::JumpDiffusionExp(JumpDiffusionParams {
                mu,
                sigma,
                lambda_j,
                p,
                eta_plus,
                eta_minus,
            }) => {
                finite("mu", mu)?;
                nonnegative("sigma", sigma)?;
                nonnegative("lambda_j", lambda_j)?;
                positive("eta_plus", eta_plus)?;
                positive("eta_minus", eta_minus)?;
                finite("p", p)?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidModel(format!("p must lie in [0, 1], got {p}")));
                }
                if sigma == 0.0 {
                    let only_up = lambda_j == 0.0 || p == 1.0;
                    let only_down = lambda_j == 0.0 || p == 0.0;
                    if (only_up && mu >= 0.0) || (only_down && mu <= 0.0) {
                        return Err(Error::InvalidModel(
                            "paths are monotone: sigma = 0 and every jump has the sign of the drift"
                                .into(),
                        ));
                    }
                }
                Components {
                    drift: mu,
                    sigma,
                    lambda_j,
                    p,
                    eta_plus,
                    eta_minus,
                }
            }
            Family::SpectrallyNegativeCL(CramerLundbergParams {
                mu,
                sigma,
                lambda_j,
                eta_minus,
                p,
            }) => {
                finite("mu", mu)?;
                positive("sigma", sigma)?;
                nonnegative("lambda_j", lambda_j)?;
                positive("eta_minus", eta_minus)?;
                if p != 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "SpectrallyNegativeCL has no positive jumps; p must be 0, got {p}"
                    )));
                }
                Components {
                    drift: mu,
                    sigma,
                    lambda_j,
                    p: 0.0,
                    eta_plus: f64::INFINITY,
                    eta_minus,
                }
            }
            Family::BoundedVariationSN(BoundedVariationParams {
                d,
                lambda_j,
                eta_minus,
                p,
            }) => {
                finite("d", d)?;
                nonnegative("lambda_j", lambda_j)?;
                positive("eta_minus", eta_minus)?;
                if p != 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "BoundedVariationSN has no positive jumps; p must be 0, got {p}"
                    )));
                }
                if d <= 0.0 || lambda_j == 0.0 {
                    return Err(Error::InvalidModel(
                        "paths are monotone: BoundedVariationSN needs d > 0 and lambda_j > 0".into(),
                    ));
                }
                Components {
                    drift: d,
                    sigma: 0.0,
                    lambda_j,
                    p: 0.0,
                    eta_plus: f64::INFINITY,
                    eta_minus,
                }
            }
        };
        Ok(LevyModel { family, parts })
    }

    pub fn brownian(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(Family::BrownianDrift(BrownianParams { mu, sigma }))
    }

    pub fn jump_diffusion(
        mu: f64,
        sigma: f64,
        lambda_j: f64,
        p: f64,
        eta_plus: f64,
        eta_minus: f64,
    ) -> Result<Self> {
        Self::new(Family::JumpDiffusionExp(JumpDiffusionParams {
            mu,
            sigma,
            lambda_j,
            p,
            eta_plus,
            eta_minus,
        }))
    }

    pub fn cramer_lundberg(mu: f64, sigma: f64, lambda_j: f64, eta_minus: f64) -> Result<Self> {
        Self::new(Family::SpectrallyNegativeCL(CramerLundbergParams {
            mu,
            sigma,
            lambda_j,
            eta_minus,
            p: 0.0,
        }))
    }

    pub fn bounded_variation(d: f64, lambda_j: f64, eta_minus: f64) -> Result<Self> {
        Self::new(Family::BoundedVariationSN(BoundedVariationParams {
            d,
            lambda_j,
            eta_minus,
            p: 0.0,
        }))
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            Family::BrownianDrift(_) => "BrownianDrift",
            Family::JumpDiffusionExp(_) => "JumpDiffusionExp",
            Family::SpectrallyNegativeCL(_) => "SpectrallyNegativeCL",
            Family::BoundedVariationSN(_) => "BoundedVariationSN",
        }
    }

    pub fn components(&self) -> Components {
        self.parts
    }

    fn up_rate(&self) -> f64 {
        self.parts.lambda_j * self.parts.p
    }

    fn down_rate(&self) -> f64 {
        self.parts.lambda_j * (1.0 - self.parts.p)
    }

    pub fn has_up_jumps(&self) -> bool {
        self.up_rate() > 0.0
    }

    pub fn has_down_jumps(&self) -> bool {
        self.down_rate() > 0.0
    }

    pub fn is_spectrally_negative(&self) -> bool {
        !self.has_up_jumps()
    }

    /// Finite-activity jumps throughout the catalog, so bounded variation
    /// is equivalent to having no Gaussian part.
    pub fn is_bounded_variation(&self) -> bool {
        self.parts.sigma == 0.0
    }

    /// The drift `d` of a bounded-variation model.
    pub fn bv_drift(&self) -> Option<f64> {
        self.is_bounded_variation().then_some(self.parts.drift)
    }

    /// Open interval on which `E[exp(lam X_1)]` is finite.
    pub fn strip(&self) -> (f64, f64) {
        let lo = if self.has_down_jumps() {
            -self.parts.eta_minus
        } else {
            f64::NEG_INFINITY
        };
        let hi = if self.has_up_jumps() {
            self.parts.eta_plus
        } else {
            f64::INFINITY
        };
        (lo, hi)
    }

    pub fn in_strip(&self, lam: f64) -> bool {
        let (lo, hi) = self.strip();
        lam.is_finite() && lam > lo * (1.0 - STRIP_MARGIN) && lam < hi * (1.0 - STRIP_MARGIN)
    }

    fn check_strip(&self, lam: f64) -> Result<()> {
        if self.in_strip(lam) {
            Ok(())
        } else {
            let (lo, hi) = self.strip();
            Err(Error::domain(
                "lambda",
                lam,
                format!("convergence strip ({lo}, {hi}) with relative margin {STRIP_MARGIN:e}"),
            ))
        }
    }

    /// `psi(lam) = log E[exp(lam X_1)]`.
    pub fn laplace_exponent(&self, lam: f64) -> Result<f64> {
        self.check_strip(lam)?;
        Ok(self.psi_unchecked(lam))
    }

    pub(crate) fn psi_unchecked(&self, lam: f64) -> f64 {
        let c = &self.parts;
        let mut v = c.drift * lam + 0.5 * c.sigma * c.sigma * lam * lam;
        if self.has_up_jumps() {
            v += self.up_rate() * lam / (c.eta_plus - lam);
        }
        if self.has_down_jumps() {
            v -= self.down_rate() * lam / (c.eta_minus + lam);
        }
        v
    }

    /// `psi'(lam)`, unchecked against the strip.
    pub fn psi_prime(&self, lam: f64) -> f64 {
        let c = &self.parts;
        let mut v = c.drift + c.sigma * c.sigma * lam;
        if self.has_up_jumps() {
            let u = c.eta_plus - lam;
            v += self.up_rate() * c.eta_plus / (u * u);
        }
        if self.has_down_jumps() {
            let u = c.eta_minus + lam;
            v -= self.down_rate() * c.eta_minus / (u * u);
        }
        v
    }

    /// Laplace exponent continued to complex arguments (used by the
    /// contour inversion of scale functions).
    pub fn psi_complex(&self, z: Complex64) -> Complex64 {
        let c = &self.parts;
        let mut v = z * c.drift + z * z * (0.5 * c.sigma * c.sigma);
        if self.has_up_jumps() {
            v += z * self.up_rate() / (Complex64::new(c.eta_plus, 0.0) - z);
        }
        if self.has_down_jumps() {
            v -= z * self.down_rate() / (Complex64::new(c.eta_minus, 0.0) + z);
        }
        v
    }

    /// `E[X_1] = psi'(0)`.
    pub fn mean(&self) -> f64 {
        self.psi_prime(0.0)
    }

    pub fn up_tail(&self) -> UpTail {
        if self.has_up_jumps() {
            UpTail::Exponential {
                intensity: self.up_rate(),
                rate: self.parts.eta_plus,
            }
        } else {
            UpTail::None
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serialises")
    }

    /// Hex SHA-256 of the canonical JSON form; identifies cached samples.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

/// Free-function form of [`LevyModel::laplace_exponent`].
pub fn laplace_exponent(model: &LevyModel, lam: f64) -> Result<f64> {
    model.laplace_exponent(lam)
}

/// Discount rate of the exponential clock `e_q`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Horizon(f64);

impl Horizon {
    pub fn new(q: f64) -> Result<Self> {
        if q.is_finite() && q > 0.0 {
            Ok(Horizon(q))
        } else {
            Err(Error::domain("q", q, "(0, inf)"))
        }
    }

    pub fn q(self) -> f64 {
        self.0
    }
}

/// Upward tail of a Lévy measure restricted to `(1, inf)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UpTail {
    None,
    /// Density `intensity * rate * exp(-rate x)`.
    Exponential { intensity: f64, rate: f64 },
    /// Density `intensity * alpha * x^(-alpha - 1)` on `(1, inf)`.
    Pareto { intensity: f64, alpha: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerMoment {
    pub finite: bool,
    /// `int_(1,inf) x^nu Pi(dx)` when finite.
    pub integral: Option<f64>,
}

pub fn power_moment_of_tail(tail: UpTail, nu: f64) -> PowerMoment {
    let finite_value = |v: f64| PowerMoment {
        finite: v.is_finite(),
        integral: v.is_finite().then_some(v),
    };
    match tail {
        UpTail::None => finite_value(0.0),
        UpTail::Exponential { intensity, rate } => {
            // int_1^inf x^nu rate e^{-rate x} dx = Gamma(nu + 1, rate) / rate^nu
            finite_value(intensity * gamma_ui(nu + 1.0, rate) / rate.powf(nu))
        }
        UpTail::Pareto { intensity, alpha } => {
            if nu < alpha {
                finite_value(intensity * alpha / (alpha - nu))
            } else {
                PowerMoment {
                    finite: false,
                    integral: None,
                }
            }
        }
    }
}

/// Whether `int_(1,inf) x^nu Pi(dx) < inf`.
pub fn check_power_moment(model: &LevyModel, nu: f64) -> PowerMoment {
    power_moment_of_tail(model.up_tail(), nu)
}

/// Standing conditions of the Russian-option problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SsConditions {
    pub q: f64,
    pub psi_one: f64,
    /// `q > max(psi(1), 0)`.
    pub discount_exceeds_psi_one: bool,
    /// `Some(q < d)` for bounded-variation models.
    pub drift_condition: Option<bool>,
    /// `psi(1) < 0`: the solver falls back to `q > 0` and flags it.
    pub psi_one_negative: bool,
}

impl SsConditions {
    pub fn satisfied(&self) -> bool {
        self.discount_exceeds_psi_one && self.drift_condition.unwrap_or(true)
    }

    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.discount_exceeds_psi_one {
            out.push(format!(
                "q > max(psi(1), 0) fails: q = {}, psi(1) = {}",
                self.q, self.psi_one
            ));
        }
        if self.drift_condition == Some(false) {
            out.push(format!(
                "drift condition q < d fails (q = {}): stopping immediately is optimal",
                self.q
            ));
        }
        out
    }
}

pub fn check_ss_conditions(model: &LevyModel, q: f64) -> Result<SsConditions> {
    if !model.is_spectrally_negative() {
        return Err(Error::UnsupportedModel(format!(
            "{} has positive jumps; the Russian-option solver needs a spectrally negative model",
            model.family_name()
        )));
    }
    if !q.is_finite() {
        return Err(Error::domain("q", q, "finite reals"));
    }
    let psi_one = model.laplace_exponent(1.0)?;
    Ok(SsConditions {
        q,
        psi_one,
        discount_exceeds_psi_one: q > psi_one.max(0.0),
        drift_condition: model.bv_drift().map(|d| q < d),
        psi_one_negative: psi_one < 0.0,
    })
}

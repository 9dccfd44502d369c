//! Thresholds, value functions and suboptimal-threshold profiles for the
//! American put, the power and `1 - e^{-x}` payoffs, and the Russian option.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Serialize;

use crate::appell::AppellFamily;
use crate::error::{Error, Result};
use crate::fluctuation::{
    exp_functional_inf, exp_functional_sup, extrema_law, extrema_law_cached, ExtremaLaw, Integrand, LawKind, Region,
    SamplingConfig, Side,
};
use crate::levy_models::{check_power_moment, check_ss_conditions, Horizon, LevyModel};
use crate::numerics::{self, CubicSpline};
use crate::scale_functions::{build_scale_table, ScaleFunctionTable};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum Problem {
    #[serde(rename = "mckean")]
    McKean { strike: f64 },
    #[serde(rename = "ns")]
    NovikovShiryaev { nu: f64 },
    #[serde(rename = "ns-exp")]
    NsExponential,
    #[serde(rename = "ss")]
    SheppShiryaev,
}

impl Problem {
    pub fn name(&self) -> &'static str {
        match self {
            Problem::McKean { .. } => "mckean",
            Problem::NovikovShiryaev { .. } => "ns",
            Problem::NsExponential => "ns-exp",
            Problem::SheppShiryaev => "ss",
        }
    }

    /// Pay-off `G` in the problem's own coordinate.
    pub fn payoff(&self, x: f64) -> f64 {
        match *self {
            Problem::McKean { strike } => (strike - x.exp()).max(0.0),
            Problem::NovikovShiryaev { nu } => x.max(0.0).powf(nu),
            Problem::NsExponential => 1.0 - (-x.max(0.0)).exp(),
            Problem::SheppShiryaev => x.max(0.0).exp(),
        }
    }

    /// Whether `x` lies in the stopping region `D` for threshold `level`.
    pub fn in_stopping_region(&self, x: f64, level: f64) -> bool {
        match self {
            Problem::McKean { .. } => x <= level,
            _ => x >= level,
        }
    }
}

/// Scalars and notes that explain how a threshold was obtained.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub values: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl Diagnostics {
    fn set(&mut self, key: &str, v: f64) {
        self.values.insert(key.to_string(), v);
    }
}

#[derive(Clone, Debug)]
enum Evaluator {
    McKean {
        law: ExtremaLaw,
        mean_exp: f64,
    },
    Ns {
        fam: Box<AppellFamily>,
        /// Spline of `Q_nu` on `[a, a + max sample]` for fractional orders on
        /// sample clouds.
        table: Option<CubicSpline>,
    },
    NsExp {
        law: ExtremaLaw,
        mean_exp: f64,
    },
    Ss {
        table: Box<ScaleFunctionTable>,
    },
}

/// Solved threshold problem with its value function.
#[derive(Clone, Debug)]
pub struct ThresholdSolution {
    pub problem: Problem,
    pub model: LevyModel,
    pub q: f64,
    pub threshold: f64,
    pub diagnostics: Diagnostics,
    eval: Evaluator,
}

/// How the solvers obtain extremum laws that have no closed form.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub sampling: SamplingConfig,
    /// Directory for persisted empirical laws; `None` samples afresh.
    pub cache_dir: Option<PathBuf>,
}

impl SolverConfig {
    pub fn new(seed: u64) -> Self {
        SolverConfig {
            sampling: SamplingConfig::new(seed),
            cache_dir: None,
        }
    }

    fn law(&self, model: &LevyModel, q: f64, side: Side) -> Result<ExtremaLaw> {
        match &self.cache_dir {
            Some(dir) => extrema_law_cached(model, q, side, &self.sampling, dir),
            None => extrema_law(model, q, side, &self.sampling),
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig::new(0)
    }
}

fn law_note(law: &ExtremaLaw, d: &mut Diagnostics) {
    match &law.kind {
        LawKind::ExactExponential { rate } => {
            d.set("law_rate", *rate);
            d.notes.push("closed-form exponential extremum law".into());
        }
        LawKind::Empirical { samples, seed, .. } => {
            d.set("law_samples", samples.len() as f64);
            d.notes.push(format!("empirical extremum law, seed {seed}"));
        }
    }
}

pub fn solve_mckean(model: &LevyModel, q: f64, strike: f64, cfg: &SolverConfig) -> Result<ThresholdSolution> {
    Horizon::new(q)?;
    if !(strike > 0.0) || !strike.is_finite() {
        return Err(Error::domain("strike", strike, "(0, inf)"));
    }
    let law = cfg.law(model, q, Side::Infimum)?;
    let e = exp_functional_inf(&law, 1.0)?;
    let threshold = (strike * e.value).ln();
    let mut d = Diagnostics::default();
    d.set("exp_functional_inf", e.value);
    d.set("exp_functional_std_error", e.std_error);
    d.set("boundary_value", strike * (1.0 - e.value));
    law_note(&law, &mut d);
    Ok(ThresholdSolution {
        problem: Problem::McKean { strike },
        model: model.clone(),
        q,
        threshold,
        diagnostics: d,
        eval: Evaluator::McKean { law, mean_exp: e.value },
    })
}

pub fn solve_ns(model: &LevyModel, q: f64, nu: f64, cfg: &SolverConfig) -> Result<ThresholdSolution> {
    Horizon::new(q)?;
    if !check_power_moment(model, nu).finite {
        return Err(Error::Precondition(format!(
            "the upward jump tail has no finite moment of order {nu}"
        )));
    }
    let law = cfg.law(model, q, Side::Supremum)?;
    let fam = AppellFamily::new(model, law, nu)?;
    let a = fam.root()?;
    let mut d = Diagnostics::default();
    d.set("root", a);
    d.set("root_residual", fam.eval(nu, a)?);
    d.set("supremum_mean", fam.mean());
    law_note(&fam.law, &mut d);
    let table = match (&fam.law.kind, nu.fract() != 0.0) {
        (LawKind::Empirical { samples, .. }, true) => {
            let hi = a + samples.last().copied().unwrap_or(0.0) + 1.0;
            let xs = crate::simulation::linspace(a, hi, 4001);
            let ys = xs.iter().map(|&y| fam.eval(nu, y)).collect::<Result<Vec<_>>>()?;
            Some(CubicSpline::new(xs, ys)?)
        }
        _ => None,
    };
    Ok(ThresholdSolution {
        problem: Problem::NovikovShiryaev { nu },
        model: model.clone(),
        q,
        threshold: a,
        diagnostics: d,
        eval: Evaluator::Ns {
            fam: Box::new(fam),
            table,
        },
    })
}

pub fn solve_ns_exponential(model: &LevyModel, q: f64, cfg: &SolverConfig) -> Result<ThresholdSolution> {
    Horizon::new(q)?;
    let law = cfg.law(model, q, Side::Supremum)?;
    let e = exp_functional_sup(&law, 1.0)?;
    let threshold = -e.value.ln();
    let mut d = Diagnostics::default();
    d.set("exp_functional_sup", e.value);
    d.set("exp_functional_std_error", e.std_error);
    law_note(&law, &mut d);
    Ok(ThresholdSolution {
        problem: Problem::NsExponential,
        model: model.clone(),
        q,
        threshold,
        diagnostics: d,
        eval: Evaluator::NsExp { law, mean_exp: e.value },
    })
}

/// `g(z) = Z(z) - q W(z)`.
fn ss_g(t: &ScaleFunctionTable, z: f64) -> f64 {
    t.z(z) - t.q * t.w(z)
}

pub fn solve_ss(model: &LevyModel, q: f64) -> Result<ThresholdSolution> {
    Horizon::new(q)?;
    let cond = check_ss_conditions(model, q)?;
    if !cond.satisfied() {
        return Err(Error::Precondition(cond.failures().join("; ")));
    }
    let table = build_scale_table(model, q)?;
    let g = |z: f64| ss_g(&table, z);
    let g0 = g(0.0);
    if !(g0 > 0.0) {
        return Err(Error::Precondition(format!("g(0) = 1 - q W(0) = {g0} is not positive")));
    }
    let (lo, hi) = numerics::expand_bracket_right(g, 0.0, 1.0 / table.phi_q.max(1e-3), 1e4)?;
    let x_star = numerics::bisect(g, lo, hi, 1e-12 * hi.max(1.0))?;
    let mut d = Diagnostics::default();
    d.set("g0", g0);
    d.set("g_residual", g(x_star));
    d.set("z_at_threshold", table.z(x_star));
    d.set("psi_one", cond.psi_one);
    d.set("phi_q", table.phi_q);
    if cond.psi_one_negative {
        d.notes.push("psi(1) < 0: applied q > 0 as the discount condition".into());
    }
    if table.is_numeric() {
        d.notes.push("scale functions by numeric Laplace inversion".into());
    }
    Ok(ThresholdSolution {
        problem: Problem::SheppShiryaev,
        model: model.clone(),
        q,
        threshold: x_star,
        diagnostics: d,
        eval: Evaluator::Ss { table: Box::new(table) },
    })
}

impl ThresholdSolution {
    pub fn payoff(&self, x: f64) -> f64 {
        self.problem.payoff(x)
    }

    /// Optimal value `V(x)`.
    pub fn value(&self, x: f64) -> Result<f64> {
        if self.problem.in_stopping_region(x, self.threshold) {
            return Ok(self.payoff(x));
        }
        self.profile(x, self.threshold)
    }

    /// Expected pay-off of the threshold rule at `level` started from `x`.
    pub fn profile(&self, x: f64, level: f64) -> Result<f64> {
        match &self.eval {
            Evaluator::McKean { law, mean_exp } => {
                let Problem::McKean { strike } = self.problem else { unreachable!() };
                if level >= strike.ln() {
                    return Err(Error::domain("y", level, format!("(-inf, log K = {})", strike.ln())));
                }
                let terms = [(strike * mean_exp, 0.0), (-x.exp(), 1.0)];
                let v = law.truncated(Integrand::Exponentials(&terms), level - x, Region::Below)?;
                Ok(v.value / mean_exp)
            }
            Evaluator::Ns { fam, table } => {
                if !(level > 0.0) {
                    return Err(Error::domain("a", level, "(0, inf)"));
                }
                let nu = fam.nu;
                if x >= level {
                    return Ok(x.powf(nu));
                }
                let q = |y: f64| match table {
                    Some(t) if (level - self.threshold).abs() < 1e-15 => t.eval(y),
                    _ => fam.eval(nu, y).unwrap_or(f64::NAN),
                };
                match &fam.law.kind {
                    LawKind::ExactExponential { .. } => {
                        let f = |m: f64| q(x + m);
                        Ok(fam.law.truncated(Integrand::General(&f), level - x, Region::Above)?.value)
                    }
                    LawKind::Empirical { samples, .. } => {
                        let start = samples.partition_point(|&m| x + m < level);
                        let s: f64 = samples[start..].iter().map(|&m| q(x + m)).sum();
                        Ok(s / samples.len() as f64)
                    }
                }
            }
            Evaluator::NsExp { law, mean_exp } => {
                if x >= level {
                    return Ok(self.payoff(x));
                }
                let terms = [(1.0, 0.0), (-(-x).exp() / mean_exp, -1.0)];
                Ok(law.truncated(Integrand::Exponentials(&terms), level - x, Region::Above)?.value)
            }
            Evaluator::Ss { table } => {
                if !(level > 0.0) {
                    return Err(Error::domain("z", level, "(0, inf)"));
                }
                let x = x.max(0.0);
                if x >= level {
                    return Ok(x.exp());
                }
                let (w, wp) = (table.w(level), table.w_prime(level)?);
                let den = wp - w;
                if den.abs() <= 1e-12 * wp.abs().max(1.0) {
                    return Err(Error::SingularProfile { z: level, denominator: den });
                }
                let ratio = (table.q * w - table.z(level)) / den;
                Ok(x.exp() * (table.z(level - x) - table.w(level - x) * ratio))
            }
        }
    }

    /// `g(z) = Z(z) - q W(z)` (Russian option only).
    pub fn ss_g(&self, z: f64) -> Result<f64> {
        match &self.eval {
            Evaluator::Ss { table } => Ok(ss_g(table, z)),
            _ => Err(Error::Usage("g is defined for the Russian option only".into())),
        }
    }

    /// `f'(z) = g(z) (W'^2 - W W'') / (W' - W)^2`, the derivative of `f = V(0, .)`.
    pub fn ss_profile_derivative(&self, z: f64) -> Result<f64> {
        match &self.eval {
            Evaluator::Ss { table } => {
                let (w, wp, wpp) = (table.w(z), table.w_prime(z)?, table.w_second(z)?);
                let den = wp - w;
                Ok(ss_g(table, z) * (wp * wp - w * wpp) / (den * den))
            }
            _ => Err(Error::Usage("f' is defined for the Russian option only".into())),
        }
    }

    pub fn scale_table(&self) -> Option<&ScaleFunctionTable> {
        match &self.eval {
            Evaluator::Ss { table } => Some(table),
            _ => None,
        }
    }

    pub fn appell_family(&self) -> Option<&AppellFamily> {
        match &self.eval {
            Evaluator::Ns { fam, .. } => Some(fam),
            _ => None,
        }
    }

    /// `(x, V(x), G(x))` rows as CSV.
    pub fn value_csv(&self, xs: &[f64]) -> Result<String> {
        let mut s = String::from("x,value,payoff\n");
        for &x in xs {
            s.push_str(&format!("{x},{},{}\n", self.value(x)?, self.payoff(x)));
        }
        Ok(s)
    }

    /// JSON summary `{problem, model, q, threshold, diagnostics}`.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "problem": self.problem,
            "model": self.model,
            "q": self.q,
            "threshold": self.threshold,
            "diagnostics": self.diagnostics,
        })
    }
}

pub fn mckean_value_profile(model: &LevyModel, q: f64, strike: f64, x: f64, y: f64, cfg: &SolverConfig) -> Result<f64> {
    solve_mckean(model, q, strike, cfg)?.profile(x, y)
}

/// Threshold profile `E[Q_nu(x + M) 1{x + M >= a}]`.
pub fn ns_value_profile(model: &LevyModel, q: f64, nu: f64, x: f64, a: f64, cfg: &SolverConfig) -> Result<f64> {
    solve_ns(model, q, nu, cfg)?.profile(x, a)
}

pub fn ns_exponential_value_profile(model: &LevyModel, q: f64, x: f64, a: f64, cfg: &SolverConfig) -> Result<f64> {
    solve_ns_exponential(model, q, cfg)?.profile(x, a)
}

pub fn ss_value_profile(model: &LevyModel, q: f64, x: f64, z: f64) -> Result<f64> {
    solve_ss(model, q)?.profile(x, z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bm() -> LevyModel {
        LevyModel::brownian(0.0, 1.0).unwrap()
    }

    #[test]
    fn mckean_brownian() {
        let s = solve_mckean(&bm(), 0.5, 1.0, &SolverConfig::default()).unwrap();
        assert!((s.threshold + 2f64.ln()).abs() < 1e-14);
        // V(0, y) = e^y - e^{2y} for this model.
        for &y in &[-1.2, -0.6931, -0.3] {
            let v = s.profile(0.0, y).unwrap();
            assert!((v - (y.exp() - (2.0 * y).exp())).abs() < 1e-12, "{y}: {v}");
        }
        assert!((s.value(s.threshold).unwrap() - 0.5).abs() < 1e-12);
        assert!(s.profile(0.0, 0.1).is_err());
    }

    #[test]
    fn ns_brownian() {
        for &(nu, a) in &[(1.0, 1.0), (2.0, 2.0)] {
            let s = solve_ns(&bm(), 0.5, nu, &SolverConfig::default()).unwrap();
            assert!((s.threshold - a).abs() < 1e-10);
            // V(0) = a^nu e^{-a} for an Exp(1) supremum.
            let v0 = s.value(0.0).unwrap();
            assert!((v0 - a.powf(nu) * (-a).exp()).abs() < 1e-10, "{v0}");
            assert_eq!(s.value(a + 1.0).unwrap(), (a + 1.0).powf(nu));
        }
    }

    #[test]
    fn ns_exponential_brownian() {
        let s = solve_ns_exponential(&bm(), 0.5, &SolverConfig::default()).unwrap();
        assert!((s.threshold - 2f64.ln()).abs() < 1e-14);
        // V(0, a) = e^{-a}(1 - e^{-a}).
        for &a in &[0.3, 0.6931, 1.5] {
            let v = s.profile(0.0, a).unwrap();
            assert!((v - (-a).exp() * (1.0 - (-a).exp())).abs() < 1e-12);
        }
        assert!((s.value(0.0).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn ss_brownian() {
        let s = solve_ss(&bm(), 1.0).unwrap();
        let r2 = 2f64.sqrt();
        let x_star = (1.0 / r2).atanh() / r2;
        assert!((s.threshold - x_star).abs() < 1e-11);
        assert!((s.value(0.0).unwrap() - (r2 * x_star).cosh()).abs() < 1e-10);
        assert!((s.value(0.0).unwrap() - r2).abs() < 1e-10);
        // The profile at z = x* reproduces the value function.
        for &x in &[0.0, 0.3, 0.6] {
            assert!((s.profile(x, s.threshold).unwrap() - s.value(x).unwrap()).abs() < 1e-10);
        }
        assert_eq!(s.value(1.0).unwrap(), 1f64.exp());
        assert!(s.ss_profile_derivative(0.3).unwrap() > 0.0);
        assert!(s.ss_profile_derivative(0.9).unwrap() < 0.0);
    }

    #[test]
    fn ss_profile_derivative_matches_difference_quotient() {
        let s = solve_ss(&LevyModel::cramer_lundberg(0.5, 1.0, 1.0, 2.0).unwrap(), 1.5).unwrap();
        for &z in &[0.2, 0.5, 1.3] {
            let h = 1e-5;
            let fd = (s.profile(0.0, z + h).unwrap() - s.profile(0.0, z - h).unwrap()) / (2.0 * h);
            let an = s.ss_profile_derivative(z).unwrap();
            assert!((fd - an).abs() < 1e-6 * an.abs().max(1.0), "{z}: {fd} vs {an}");
        }
    }

    #[test]
    fn ss_preconditions() {
        let err = solve_ss(&LevyModel::brownian(0.0, 1.0).unwrap(), 0.4).unwrap_err();
        assert!(matches!(err, Error::Precondition(ref m) if m.contains("psi(1)")));
        let bv = LevyModel::bounded_variation(1.0, 1.0, 3.0).unwrap();
        let err = solve_ss(&bv, 1.5).unwrap_err();
        assert!(matches!(err, Error::Precondition(ref m) if m.contains("stopping immediately")));
        let jd = LevyModel::jump_diffusion(0.0, 1.0, 1.0, 0.5, 2.0, 2.0).unwrap();
        assert!(matches!(solve_ss(&jd, 2.0), Err(Error::UnsupportedModel(_))));
    }
}

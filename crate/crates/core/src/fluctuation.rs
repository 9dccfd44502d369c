//! Laws of the running supremum and infimum at an independent exponential
//! time and the expectation functionals built on them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy_models::{Horizon, LevyModel};
use crate::numerics;
use crate::scale_functions::phi;
use crate::simulation::{sample_extrema, Moments};

/// Default size of an empirical sample cloud.
pub const DEFAULT_SAMPLES: usize = 1_000_000;

/// Fewest samples accepted by the empirical functionals.
pub const MIN_EMPIRICAL_SAMPLES: usize = 1_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Supremum,
    Infimum,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Supremum => 1.0,
            Side::Infimum => -1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LawKind {
    /// `|M| ~ Exp(rate)`.
    ExactExponential { rate: f64 },
    /// Sorted samples of `M`. `dt` is the monitoring grid; `None` means
    /// bridge-exact piece extrema.
    Empirical {
        samples: Vec<f64>,
        seed: u64,
        dt: Option<f64>,
    },
}

/// Law of `sup_{s <= e_q} X_s` or `inf_{s <= e_q} X_s` for `X_0 = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtremaLaw {
    pub side: Side,
    pub q: f64,
    pub kind: LawKind,
}

/// Controls the empirical fallback of [`extrema_law`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingConfig {
    pub n_samples: usize,
    pub seed: u64,
    /// `None`: bridge-exact sampling. `Some(dt)`: grid monitoring with step
    /// `min(dt, horizon / 1000)`.
    pub grid_dt: Option<f64>,
}

impl SamplingConfig {
    pub fn new(seed: u64) -> Self {
        SamplingConfig {
            n_samples: DEFAULT_SAMPLES,
            seed,
            grid_dt: None,
        }
    }

    pub fn with_samples(mut self, n: usize) -> Self {
        self.n_samples = n;
        self
    }
}

/// A functional value; `std_error` is zero for closed-form laws.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Functional {
    pub value: f64,
    pub std_error: f64,
}

impl Functional {
    fn exact(value: f64) -> Self {
        Functional {
            value,
            std_error: 0.0,
        }
    }
}

/// Half-line selected by a cutoff (strict inequalities).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    /// `M < cutoff`.
    Below,
    /// `M > cutoff`.
    Above,
}

/// Integrand of a truncated functional.
#[derive(Clone, Copy)]
pub enum Integrand<'a> {
    /// `sum_k a_k exp(b_k m)` for pairs `(a_k, b_k)`; integrated in closed form
    /// against exponential laws.
    Exponentials(&'a [(f64, f64)]),
    General(&'a dyn Fn(f64) -> f64),
}

impl Integrand<'_> {
    fn eval(&self, m: f64) -> f64 {
        match self {
            Integrand::Exponentials(terms) => terms.iter().map(|(a, b)| a * (b * m).exp()).sum(),
            Integrand::General(f) => f(m),
        }
    }
}

/// Wiener–Hopf roots of `sigma^2 l^2 / 2 + mu l = q`: the rates of the
/// supremum and of minus the infimum.
pub fn brownian_wh_rates(mu: f64, sigma: f64, q: f64) -> (f64, f64) {
    let s2 = sigma * sigma;
    let disc = (mu * mu + 2.0 * s2 * q).sqrt();
    // Rationalised forms avoid cancellation when |mu| dominates.
    let up = if mu <= 0.0 {
        (disc - mu) / s2
    } else {
        2.0 * q / (disc + mu)
    };
    let down = if mu >= 0.0 {
        (disc + mu) / s2
    } else {
        2.0 * q / (disc - mu)
    };
    (up, down)
}

/// Closed-form rate of `|M|` when the model admits one.
pub fn exact_rate(model: &LevyModel, q: f64, side: Side) -> Option<f64> {
    let c = model.components();
    if c.lambda_j == 0.0 {
        let (up, down) = brownian_wh_rates(c.drift, c.sigma, q);
        return Some(match side {
            Side::Supremum => up,
            Side::Infimum => down,
        });
    }
    match side {
        Side::Supremum if model.is_spectrally_negative() => phi(model, q).ok(),
        _ => None,
    }
}

/// Law of the extremum at `e_q`: exponential when a closed form exists,
/// otherwise an empirical sample cloud.
pub fn extrema_law(model: &LevyModel, q: f64, side: Side, cfg: &SamplingConfig) -> Result<ExtremaLaw> {
    Horizon::new(q)?;
    if let Some(rate) = exact_rate(model, q, side) {
        return Ok(ExtremaLaw {
            side,
            q,
            kind: LawKind::ExactExponential { rate },
        });
    }
    empirical_law(model, q, side, cfg)
}

/// Always samples, even when a closed form exists.
pub fn empirical_law(model: &LevyModel, q: f64, side: Side, cfg: &SamplingConfig) -> Result<ExtremaLaw> {
    Horizon::new(q)?;
    let mut samples = sample_extrema(model, q, side == Side::Supremum, cfg.n_samples, cfg.seed, cfg.grid_dt)?;
    samples.sort_by(|a, b| a.total_cmp(b));
    Ok(ExtremaLaw {
        side,
        q,
        kind: LawKind::Empirical {
            samples,
            seed: cfg.seed,
            dt: cfg.grid_dt,
        },
    })
}

impl ExtremaLaw {
    pub fn exact(side: Side, q: f64, rate: f64) -> Result<Self> {
        Horizon::new(q)?;
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::domain("rate", rate, "(0, inf)"));
        }
        Ok(ExtremaLaw {
            side,
            q,
            kind: LawKind::ExactExponential { rate },
        })
    }

    /// Builds an empirical law, checking the sign constraint of its side.
    pub fn from_samples(side: Side, q: f64, mut samples: Vec<f64>, seed: u64, dt: Option<f64>) -> Result<Self> {
        Horizon::new(q)?;
        if let Some(bad) = samples.iter().find(|&&s| !s.is_finite() || s * side.sign() < 0.0) {
            return Err(Error::Parse(format!("sample {bad} violates the sign constraint of the {side:?}")));
        }
        samples.sort_by(|a, b| a.total_cmp(b));
        Ok(ExtremaLaw {
            side,
            q,
            kind: LawKind::Empirical { samples, seed, dt },
        })
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.kind, LawKind::ExactExponential { .. })
    }

    pub fn samples(&self) -> Option<&[f64]> {
        match &self.kind {
            LawKind::Empirical { samples, .. } => Some(samples),
            LawKind::ExactExponential { .. } => None,
        }
    }

    fn checked_samples(&self) -> Result<&[f64]> {
        let s = self.samples().expect("empirical law");
        if s.len() < MIN_EMPIRICAL_SAMPLES {
            return Err(Error::InsufficientSamples {
                got: s.len(),
                required: MIN_EMPIRICAL_SAMPLES,
            });
        }
        Ok(s)
    }

    /// `E[exp(-beta |M|)]`.
    pub fn laplace(&self, beta: f64) -> Result<Functional> {
        if !(beta >= 0.0) {
            return Err(Error::domain("beta", beta, "[0, inf)"));
        }
        match &self.kind {
            LawKind::ExactExponential { rate } => Ok(Functional::exact(rate / (rate + beta))),
            LawKind::Empirical { .. } => {
                let s = self.checked_samples()?;
                let m = Moments::from_slice(&s.iter().map(|x| (-beta * x.abs()).exp()).collect::<Vec<_>>());
                Ok(Functional {
                    value: m.mean,
                    std_error: m.std_error(),
                })
            }
        }
    }

    /// `E[|M|^k]` for integer `k`.
    pub fn abs_moment(&self, k: u32) -> f64 {
        match &self.kind {
            LawKind::ExactExponential { rate } => {
                (1..=k).map(|i| i as f64).product::<f64>() / rate.powi(k as i32)
            }
            LawKind::Empirical { samples, .. } => {
                samples.iter().map(|x| x.abs().powi(k as i32)).sum::<f64>() / samples.len() as f64
            }
        }
    }

    /// `E[|M|^nu]` for real `nu >= 0`.
    pub fn abs_power_moment(&self, nu: f64) -> f64 {
        match &self.kind {
            LawKind::ExactExponential { rate } => statrs::function::gamma::gamma(nu + 1.0) / rate.powf(nu),
            LawKind::Empirical { samples, .. } => {
                samples.iter().map(|x| x.abs().powf(nu)).sum::<f64>() / samples.len() as f64
            }
        }
    }

    /// `P(|M| <= t)`.
    pub fn abs_cdf(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match &self.kind {
            LawKind::ExactExponential { rate } => 1.0 - (-rate * t).exp(),
            LawKind::Empirical { samples, .. } => {
                let count = match self.side {
                    Side::Supremum => samples.partition_point(|&x| x <= t),
                    Side::Infimum => samples.len() - samples.partition_point(|&x| x < -t),
                };
                count as f64 / samples.len() as f64
            }
        }
    }

    /// `E[f(M) 1{M in region}]`.
    pub fn truncated(&self, f: Integrand<'_>, cutoff: f64, region: Region) -> Result<Functional> {
        if cutoff.is_nan() {
            return Err(Error::domain("cutoff", cutoff, "a number or an infinity"));
        }
        match &self.kind {
            LawKind::ExactExponential { rate } => {
                let sgn = self.side.sign();
                // Interval of E = |M| selected by the region.
                let (lo, hi) = match (self.side, region) {
                    (Side::Infimum, Region::Below) => ((-cutoff).max(0.0), f64::INFINITY),
                    (Side::Infimum, Region::Above) => (0.0, (-cutoff).max(0.0)),
                    (Side::Supremum, Region::Below) => (0.0, cutoff.max(0.0)),
                    (Side::Supremum, Region::Above) => (cutoff.max(0.0), f64::INFINITY),
                };
                if !(hi > lo) {
                    return Ok(Functional::exact(0.0));
                }
                let r = *rate;
                let v = match f {
                    Integrand::Exponentials(terms) => {
                        let mut total = 0.0;
                        for &(a, b) in terms {
                            let k = r - b * sgn;
                            total += if hi.is_infinite() {
                                if k <= 0.0 {
                                    return Err(Error::Precondition(format!(
                                        "exp({b} m) is not integrable against the Exp({r}) law"
                                    )));
                                }
                                a * r * (-k * lo).exp() / k
                            } else if k == 0.0 {
                                a * r * (hi - lo)
                            } else {
                                a * r * ((-k * lo).exp() - (-k * hi).exp()) / k
                            };
                        }
                        total
                    }
                    Integrand::General(g) => {
                        let dens = |e: f64| g(sgn * e) * r * (-r * e).exp();
                        if hi.is_infinite() {
                            numerics::integrate_to_infinity(dens, lo, 1.0 / r, 1e-13)
                        } else {
                            numerics::integrate(dens, lo, hi, 1e-13)
                        }
                    }
                };
                Ok(Functional::exact(v))
            }
            LawKind::Empirical { .. } => {
                let s = self.checked_samples()?;
                let mut m = Moments::default();
                for &x in s {
                    let inside = match region {
                        Region::Below => x < cutoff,
                        Region::Above => x > cutoff,
                    };
                    m.push(if inside { f.eval(x) } else { 0.0 });
                }
                Ok(Functional {
                    value: m.mean,
                    std_error: m.std_error(),
                })
            }
        }
    }
}

/// `E[exp(beta X_inf)]` for the infimum at `e_q`, `beta >= 0`.
pub fn exp_functional_inf(law: &ExtremaLaw, beta: f64) -> Result<Functional> {
    expect_side(law, Side::Infimum)?;
    law.laplace(beta)
}

/// `E[exp(-beta X_sup)]` for the supremum at `e_q`, `beta >= 0`.
pub fn exp_functional_sup(law: &ExtremaLaw, beta: f64) -> Result<Functional> {
    expect_side(law, Side::Supremum)?;
    law.laplace(beta)
}

/// `E[f(M) 1{M in region(cutoff)}]`.
pub fn truncated_functional(law: &ExtremaLaw, f: Integrand<'_>, cutoff: f64, region: Region) -> Result<Functional> {
    law.truncated(f, cutoff, region)
}

fn expect_side(law: &ExtremaLaw, side: Side) -> Result<()> {
    if law.side == side {
        Ok(())
    } else {
        Err(Error::Usage(format!("expected a {side:?} law, got {:?}", law.side)))
    }
}

/// `E_x[exp(-q tau_y^- + beta X_{tau_y^-}) 1{tau_y^- < inf}]` from the
/// infimum law:
/// `e^{beta x} E[e^{beta I} 1{-I > x - y}] / E[e^{beta I}]`.
pub fn first_passage_transform_with_law(law: &ExtremaLaw, beta: f64, x: f64, y: f64) -> Result<Functional> {
    expect_side(law, Side::Infimum)?;
    if !(beta >= 0.0) {
        return Err(Error::domain("beta", beta, "[0, inf)"));
    }
    if !(x >= y) {
        return Err(Error::Precondition(format!("first passage below y needs x >= y, got x = {x}, y = {y}")));
    }
    let scale = (beta * x).exp();
    match &law.kind {
        LawKind::ExactExponential { .. } => {
            let num = law.truncated(Integrand::Exponentials(&[(1.0, beta)]), y - x, Region::Below)?;
            let den = law.laplace(beta)?;
            Ok(Functional::exact(scale * num.value / den.value))
        }
        LawKind::Empirical { .. } => {
            let s = law.checked_samples()?;
            let cut = y - x;
            let (mut a, mut b) = (Moments::default(), Moments::default());
            for &m in s {
                let e = (beta * m).exp();
                b.push(e);
                a.push(if m < cut { e } else { 0.0 });
            }
            let ratio = a.mean / b.mean;
            // Delta method on the same samples: var(a_i - R b_i) / (n B^2).
            let mut resid = Moments::default();
            for &m in s {
                let e = (beta * m).exp();
                let ai = if m < cut { e } else { 0.0 };
                resid.push(ai - ratio * e);
            }
            Ok(Functional {
                value: scale * ratio,
                std_error: scale * resid.std_error() / b.mean,
            })
        }
    }
}

/// [`first_passage_transform_with_law`] with the infimum law built from the model.
pub fn first_passage_transform(
    model: &LevyModel,
    q: f64,
    beta: f64,
    x: f64,
    y: f64,
    cfg: &SamplingConfig,
) -> Result<Functional> {
    let law = extrema_law(model, q, Side::Infimum, cfg)?;
    first_passage_transform_with_law(&law, beta, x, y)
}

/// JSON sidecar stored next to a cached sample CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawSidecar {
    pub seed: u64,
    pub dt: Option<f64>,
    pub q: f64,
    pub side: Side,
    pub model_hash: String,
    pub n_samples: usize,
}

impl LawSidecar {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Parses a one-column CSV with header `sample`.
pub fn parse_samples_csv(text: &str) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.len() != 1 || &headers[0] != "sample" {
        return Err(Error::Parse(format!("expected header `sample`, got {headers:?}")));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let field = rec.get(0).ok_or_else(|| Error::Parse("empty record".into()))?;
        let v: f64 = field
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("not a number: {field:?}")))?;
        if !v.is_finite() {
            return Err(Error::Parse(format!("non-finite sample {v}")));
        }
        out.push(v);
    }
    Ok(out)
}

pub fn samples_to_csv(samples: &[f64]) -> String {
    let mut s = String::with_capacity(samples.len() * 24 + 8);
    s.push_str("sample\n");
    for x in samples {
        s.push_str(&format!("{x:?}\n"));
    }
    s
}

/// Rebuilds an empirical law from a sidecar and CSV text.
pub fn law_from_cache_text(sidecar: &str, csv_text: &str) -> Result<ExtremaLaw> {
    let meta = LawSidecar::from_json_str(sidecar)?;
    let samples = parse_samples_csv(csv_text)?;
    if samples.len() != meta.n_samples {
        return Err(Error::Parse(format!(
            "sidecar announces {} samples, CSV holds {}",
            meta.n_samples,
            samples.len()
        )));
    }
    ExtremaLaw::from_samples(meta.side, meta.q, samples, meta.seed, meta.dt)
}

fn cache_paths(dir: &Path, model: &LevyModel, q: f64, side: Side, cfg: &SamplingConfig) -> (PathBuf, PathBuf) {
    let side = match side {
        Side::Supremum => "sup",
        Side::Infimum => "inf",
    };
    let stem = format!(
        "{}-{side}-q{q}-seed{}-n{}",
        &model.content_hash()[..16],
        cfg.seed,
        cfg.n_samples
    );
    (dir.join(format!("{stem}.csv")), dir.join(format!("{stem}.json")))
}

/// Writes an empirical law as `<stem>.csv` plus `<stem>.json`.
pub fn save_law(law: &ExtremaLaw, model: &LevyModel, csv_path: &Path, sidecar_path: &Path) -> Result<()> {
    let LawKind::Empirical { samples, seed, dt } = &law.kind else {
        return Err(Error::Usage("only empirical laws are cached".into()));
    };
    let meta = LawSidecar {
        seed: *seed,
        dt: *dt,
        q: law.q,
        side: law.side,
        model_hash: model.content_hash(),
        n_samples: samples.len(),
    };
    fs::write(csv_path, samples_to_csv(samples))?;
    fs::write(sidecar_path, serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

/// [`extrema_law`] backed by an on-disk cache of empirical samples.
pub fn extrema_law_cached(
    model: &LevyModel,
    q: f64,
    side: Side,
    cfg: &SamplingConfig,
    dir: &Path,
) -> Result<ExtremaLaw> {
    if exact_rate(model, q, side).is_some() {
        return extrema_law(model, q, side, cfg);
    }
    let (csv_path, json_path) = cache_paths(dir, model, q, side, cfg);
    if csv_path.exists() && json_path.exists() {
        let meta = LawSidecar::from_json_str(&fs::read_to_string(&json_path)?)?;
        if meta.model_hash == model.content_hash()
            && meta.seed == cfg.seed
            && meta.q == q
            && meta.dt == cfg.grid_dt
            && meta.side == side
        {
            return law_from_cache_text(&fs::read_to_string(&json_path)?, &fs::read_to_string(&csv_path)?);
        }
    }
    let law = empirical_law(model, q, side, cfg)?;
    fs::create_dir_all(dir)?;
    save_law(&law, model, &csv_path, &json_path)?;
    Ok(law)
}

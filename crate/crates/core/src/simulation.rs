//! Monte Carlo engine: exact-at-jumps path simulation, first-passage payoff
//! estimation under threshold rules and common-random-numbers sweeps.
//!
//! Paths are built from continuous pieces (Gaussian increments) separated by
//! jump epochs drawn from a Poisson clock. Crossings inside a continuous piece
//! are detected by sampling the extremum of the Brownian bridge between the
//! piece endpoints, so barrier monitoring carries no grid bias; the grid step
//! only sets the resolution of the passage time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy_models::{Components, LevyModel};

/// Smallest number of samples behind any [`McEstimate`].
pub const MIN_PATHS: usize = 1_000;

/// Paths per parallel work unit. Fixed so results do not depend on the
/// number of worker threads.
const CHUNK: usize = 256;

/// Bridge extrema are skipped when the crossing probability is below
/// `exp(-BRIDGE_CUTOFF)`.
const BRIDGE_CUTOFF: f64 = 50.0;

/// Coarse steps are sized so that a move of the current barrier distance has
/// probability about `exp(-COARSE_RATIO / 2)`.
const COARSE_RATIO: f64 = 60.0;

/// Longest coarse step.
const COARSE_MAX: f64 = 1.0;

/// Time discretisation and randomness for a batch of paths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathGrid {
    pub dt: f64,
    pub t_max: f64,
    pub seed: u64,
    pub antithetic: bool,
    /// Detect crossings between grid points via Brownian-bridge extrema.
    /// With `false` only grid points and jump epochs are monitored.
    pub bridge: bool,
}

impl PathGrid {
    /// Default grid for discount rate `q`: `dt = 1e-3`, horizon such that
    /// `exp(-q t_max) = 1e-6`.
    pub fn for_discount(q: f64, seed: u64) -> Self {
        PathGrid {
            dt: 1e-3,
            t_max: default_t_max(q),
            seed,
            antithetic: false,
            bridge: true,
        }
    }

    /// Default grid whose horizon accounts for the growth of the payoff:
    /// see [`effective_discount`].
    pub fn for_payoff(model: &LevyModel, q: f64, payoff: &Payoff, seed: u64) -> Self {
        PathGrid::for_discount(effective_discount(model, q, payoff), seed)
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_t_max(mut self, t_max: f64) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn with_antithetic(mut self, on: bool) -> Self {
        self.antithetic = on;
        self
    }

    pub fn with_bridge(mut self, on: bool) -> Self {
        self.bridge = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::domain("dt", self.dt, "(0, inf)"));
        }
        if !(self.t_max > 0.0) || self.t_max.is_nan() {
            return Err(Error::domain("t_max", self.t_max, "(0, inf]"));
        }
        Ok(())
    }
}

/// Rate at which discounted payoffs of unstopped paths decay. The Russian
/// payoff `e^{-qt + sup X}` only decays like `e^{-(q - psi(1)) t}` (the
/// discount under the measure `e^{X_t - psi(1) t}`); other payoffs decay
/// like `e^{-qt}`.
pub fn effective_discount(model: &LevyModel, q: f64, payoff: &Payoff) -> f64 {
    match payoff {
        Payoff::Russian => match model.laplace_exponent(1.0) {
            Ok(p1) if p1 > 0.0 && p1 < q => q - p1,
            _ => q,
        },
        _ => q,
    }
}

/// `t_max` with `exp(-q t_max) = 1e-6`.
pub fn default_t_max(q: f64) -> f64 {
    1e6f64.ln() / q
}

/// A Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub truncation_bias_bound: f64,
}

impl McEstimate {
    pub fn confidence_interval(&self, z: f64) -> (f64, f64) {
        (self.mean - z * self.std_error, self.mean + z * self.std_error)
    }

    /// `|mean - target| <= k * std_error` (plus the truncation bound).
    pub fn agrees_with(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error + self.truncation_bias_bound
    }
}

/// Streaming mean/variance (Welford), mergeable in a fixed order.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }

    pub fn from_slice(xs: &[f64]) -> Moments {
        let mut m = Moments::default();
        for &x in xs {
            m.push(x);
        }
        m
    }
}

/// Per-path randomness, derived from `(master seed, path index)` only.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One step of a skeleton path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Segment {
    /// Continuous motion over `[t0, t0 + h]` from `x0` to `x1`.
    Diffusion { t0: f64, h: f64, x0: f64, x1: f64 },
    /// Jump at time `t` from `before` to `after`.
    Jump { t: f64, before: f64, after: f64 },
}

/// Generates the segments of one path. Gaussian draws are negated when
/// `mirror` is set (antithetic twin).
pub struct PathWalker {
    parts: Components,
    rng: ChaCha8Rng,
    mirror: bool,
    dt: f64,
    t_max: f64,
    t: f64,
    x: f64,
    next_jump: f64,
    pending_jump: bool,
    /// Bridge halves still to be visited, latest first.
    pending: Vec<(f64, f64, f64, f64)>,
}

impl PathWalker {
    pub fn new(model: &LevyModel, x0: f64, dt: f64, t_max: f64, mut rng: ChaCha8Rng, mirror: bool) -> Self {
        let parts = model.components();
        let next_jump = if parts.lambda_j > 0.0 {
            let e: f64 = Exp1.sample(&mut rng);
            e / parts.lambda_j
        } else {
            f64::INFINITY
        };
        PathWalker {
            parts,
            rng,
            mirror,
            dt,
            t_max,
            t: 0.0,
            x: x0,
            next_jump,
            pending_jump: false,
            pending: Vec::new(),
        }
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn position(&self) -> f64 {
        self.x
    }

    pub fn sigma(&self) -> f64 {
        self.parts.sigma
    }

    pub fn drift(&self) -> f64 {
        self.parts.drift
    }

    fn normal(&mut self) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        if self.mirror {
            -z
        } else {
            z
        }
    }

    fn open_uniform(&mut self) -> f64 {
        1.0 - self.rng.random::<f64>()
    }

    /// Next segment on the fixed grid.
    pub fn next_segment(&mut self) -> Option<Segment> {
        self.next_step(self.dt)
    }

    /// Step length that keeps a barrier at distance `d` out of reach with
    /// overwhelming probability; never below the grid step.
    pub fn coarse_step(&self, d: f64) -> f64 {
        let sigma = self.parts.sigma;
        if sigma == 0.0 {
            return COARSE_MAX.max(self.dt);
        }
        let mut h = d * d / (COARSE_RATIO * sigma * sigma);
        let drift = self.parts.drift.abs();
        if drift > 0.0 {
            h = h.min(0.25 * d / drift);
        }
        h.clamp(self.dt, COARSE_MAX.max(self.dt))
    }

    /// Next segment: a pending bridge half if any, otherwise a fresh step of
    /// length at most `h_max` (shortened at jump epochs and the horizon).
    pub fn next_step(&mut self, h_max: f64) -> Option<Segment> {
        if let Some((t0, h, x0, x1)) = self.pending.pop() {
            return Some(Segment::Diffusion { t0, h, x0, x1 });
        }
        if self.pending_jump {
            self.pending_jump = false;
            let before = self.x;
            let up = self.parts.p > 0.0 && self.rng.random::<f64>() < self.parts.p;
            let e: f64 = Exp1.sample(&mut self.rng);
            self.x += if up {
                e / self.parts.eta_plus
            } else {
                -e / self.parts.eta_minus
            };
            let t = self.t;
            let gap: f64 = Exp1.sample(&mut self.rng);
            self.next_jump = t + gap / self.parts.lambda_j;
            return Some(Segment::Jump {
                t,
                before,
                after: self.x,
            });
        }
        if self.t >= self.t_max {
            return None;
        }
        let mut end = (self.t + h_max).min(self.t_max);
        if self.next_jump <= end {
            end = self.next_jump;
            self.pending_jump = true;
        }
        let h = end - self.t;
        let x0 = self.x;
        let mut x1 = x0 + self.parts.drift * h;
        if self.parts.sigma > 0.0 && h > 0.0 {
            x1 += self.parts.sigma * h.sqrt() * self.normal();
        }
        let t0 = self.t;
        self.t = end;
        self.x = x1;
        Some(Segment::Diffusion { t0, h, x0, x1 })
    }

    /// Whether a continuous piece is longer than the grid step and can be
    /// halved by [`PathWalker::split`].
    pub fn splittable(&self, h: f64) -> bool {
        self.parts.sigma > 0.0 && h > self.dt * (1.0 + 1e-9)
    }

    /// Halves a continuous piece by drawing the bridge midpoint; both halves
    /// are returned by subsequent calls to [`PathWalker::next_step`].
    pub fn split(&mut self, t0: f64, h: f64, x0: f64, x1: f64) {
        let half = 0.5 * h;
        let mid = 0.5 * (x0 + x1) + 0.5 * self.parts.sigma * h.sqrt() * self.normal();
        self.pending.push((t0 + half, half, mid, x1));
        self.pending.push((t0, half, x0, mid));
    }

    /// Minimum of the continuous piece, exact in law given its endpoints.
    pub fn piece_min(&mut self, h: f64, x0: f64, x1: f64) -> f64 {
        if self.parts.sigma == 0.0 || h == 0.0 {
            return x0.min(x1);
        }
        let u = self.open_uniform();
        let s2h = self.parts.sigma * self.parts.sigma * h;
        let d = x1 - x0;
        0.5 * (x0 + x1 - (d * d - 2.0 * s2h * u.ln()).sqrt())
    }

    /// Maximum of the continuous piece, exact in law given its endpoints.
    pub fn piece_max(&mut self, h: f64, x0: f64, x1: f64) -> f64 {
        if self.parts.sigma == 0.0 || h == 0.0 {
            return x0.max(x1);
        }
        let u = self.open_uniform();
        let s2h = self.parts.sigma * self.parts.sigma * h;
        let d = x1 - x0;
        0.5 * (x0 + x1 + (d * d - 2.0 * s2h * u.ln()).sqrt())
    }

    /// Whether a bridge over `[x0, x1]` can reach `level` with probability
    /// above `exp(-BRIDGE_CUTOFF)` (both endpoints on the same side).
    fn bridge_may_reach(&self, h: f64, x0: f64, x1: f64, level: f64) -> bool {
        if self.parts.sigma == 0.0 || h == 0.0 {
            return false;
        }
        let s2h = self.parts.sigma * self.parts.sigma * h;
        2.0 * (x0 - level) * (x1 - level) < BRIDGE_CUTOFF * s2h
    }
}

/// A skeleton path: grid points and both sides of every jump.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl SkeletonPath {
    pub fn value_at_end(&self) -> f64 {
        *self.values.last().expect("path holds its start point")
    }
}

/// Reproducible stream of skeleton paths started at `x0`.
pub struct PathStream<'a> {
    model: &'a LevyModel,
    grid: PathGrid,
    x0: f64,
    next: u64,
    n_paths: u64,
}

impl Iterator for PathStream<'_> {
    type Item = SkeletonPath;

    fn next(&mut self) -> Option<SkeletonPath> {
        if self.next >= self.n_paths {
            return None;
        }
        let i = self.next;
        self.next += 1;
        let (stream, mirror) = if self.grid.antithetic {
            (i / 2, i % 2 == 1)
        } else {
            (i, false)
        };
        let rng = path_rng(self.grid.seed, stream);
        let mut w = PathWalker::new(self.model, self.x0, self.grid.dt, self.grid.t_max, rng, mirror);
        let mut path = SkeletonPath {
            times: vec![0.0],
            values: vec![self.x0],
        };
        while let Some(seg) = w.next_segment() {
            match seg {
                Segment::Diffusion { t0, h, x1, .. } => {
                    path.times.push(t0 + h);
                    path.values.push(x1);
                }
                Segment::Jump { t, after, .. } => {
                    path.times.push(t);
                    path.values.push(after);
                }
            }
        }
        Some(path)
    }
}

pub fn simulate_paths(model: &LevyModel, grid: PathGrid, x0: f64, n_paths: usize) -> Result<PathStream<'_>> {
    grid.validate()?;
    if !grid.t_max.is_finite() {
        return Err(Error::domain("t_max", grid.t_max, "finite horizon for path streams"));
    }
    Ok(PathStream {
        model,
        grid,
        x0,
        next: 0,
        n_paths: n_paths as u64,
    })
}

/// How a threshold rule stops a path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StoppingRule {
    /// `inf{t > 0 : X_t < level}`.
    DownCrossing,
    /// `inf{t > 0 : X_t > level}`.
    UpCrossing,
    /// `inf{t > 0 : (s0 v sup X) - X_t > level}`.
    ReflectedExceed,
}

/// State at a stopping time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PassageEvent {
    pub time: f64,
    pub position: f64,
    pub running_max: f64,
}

/// Start of a path: position, and initial running maximum for reflected rules.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StartState {
    pub x0: f64,
    pub s0: f64,
}

impl StartState {
    pub fn at(x0: f64) -> Self {
        StartState { x0, s0: x0 }
    }
}

/// Runs a path until every level is resolved or the horizon is reached.
/// `levels` must be sorted ascending. Unresolved levels stay `None`.
fn run_path(
    walker: &mut PathWalker,
    rule: StoppingRule,
    start: StartState,
    levels: &[f64],
    bridge: bool,
    out: &mut [Option<PassageEvent>],
) {
    out.iter_mut().for_each(|o| *o = None);
    match rule {
        StoppingRule::DownCrossing => run_down(walker, levels, bridge, out),
        StoppingRule::UpCrossing => run_up(walker, levels, bridge, out),
        StoppingRule::ReflectedExceed => run_reflected(walker, start.s0.max(start.x0), levels, bridge, out),
    }
}

fn run_down(w: &mut PathWalker, levels: &[f64], bridge: bool, out: &mut [Option<PassageEvent>]) {
    // Levels are ascending; the highest unresolved one is crossed first.
    let mut remaining = levels.len();
    // A start strictly below a level stops at time zero.
    let x0 = w.position();
    while remaining > 0 && x0 < levels[remaining - 1] {
        remaining -= 1;
        out[remaining] = Some(PassageEvent {
            time: 0.0,
            position: x0,
            running_max: x0,
        });
    }
    while remaining > 0 {
        let level = levels[remaining - 1];
        let h_max = if bridge { w.coarse_step(w.position() - level) } else { w.dt };
        let Some(seg) = w.next_step(h_max) else { break };
        match seg {
            Segment::Diffusion { t0, h, x0, x1 } => {
                let near = bridge && (x1 < level || w.bridge_may_reach(h, x0, x1, level));
                if near && w.splittable(h) {
                    w.split(t0, h, x0, x1);
                    continue;
                }
                let low = if near {
                    w.piece_min(h, x0, x1)
                } else {
                    x1
                };
                while remaining > 0 && low < levels[remaining - 1] {
                    let l = levels[remaining - 1];
                    let (time, position) = if !bridge {
                        (t0 + h, x1)
                    } else if w.sigma() == 0.0 {
                        // Linear drift: exact crossing time.
                        (t0 + (x0 - l) / (x0 - x1) * h, l)
                    } else {
                        (t0 + 0.5 * h, l)
                    };
                    remaining -= 1;
                    out[remaining] = Some(PassageEvent {
                        time,
                        position,
                        running_max: f64::NAN,
                    });
                }
            }
            Segment::Jump { t, after, .. } => {
                while remaining > 0 && after < levels[remaining - 1] {
                    remaining -= 1;
                    out[remaining] = Some(PassageEvent {
                        time: t,
                        position: after,
                        running_max: f64::NAN,
                    });
                }
            }
        }
    }
}

fn run_up(w: &mut PathWalker, levels: &[f64], bridge: bool, out: &mut [Option<PassageEvent>]) {
    let n = levels.len();
    let mut next = 0;
    let x0 = w.position();
    while next < n && x0 > levels[next] {
        out[next] = Some(PassageEvent {
            time: 0.0,
            position: x0,
            running_max: x0,
        });
        next += 1;
    }
    while next < n {
        let level = levels[next];
        let h_max = if bridge { w.coarse_step(level - w.position()) } else { w.dt };
        let Some(seg) = w.next_step(h_max) else { break };
        match seg {
            Segment::Diffusion { t0, h, x0, x1 } => {
                let near = bridge && (x1 > level || w.bridge_may_reach(h, x0, x1, level));
                if near && w.splittable(h) {
                    w.split(t0, h, x0, x1);
                    continue;
                }
                let high = if near {
                    w.piece_max(h, x0, x1)
                } else {
                    x1
                };
                while next < n && high > levels[next] {
                    let l = levels[next];
                    let (time, position) = if !bridge {
                        (t0 + h, x1)
                    } else if w.sigma() == 0.0 {
                        (t0 + (l - x0) / (x1 - x0) * h, l)
                    } else {
                        (t0 + 0.5 * h, l)
                    };
                    out[next] = Some(PassageEvent {
                        time,
                        position,
                        running_max: f64::NAN,
                    });
                    next += 1;
                }
            }
            Segment::Jump { t, after, .. } => {
                while next < n && after > levels[next] {
                    out[next] = Some(PassageEvent {
                        time: t,
                        position: after,
                        running_max: f64::NAN,
                    });
                    next += 1;
                }
            }
        }
    }
}

fn run_reflected(w: &mut PathWalker, s0: f64, levels: &[f64], bridge: bool, out: &mut [Option<PassageEvent>]) {
    // Levels ascending: the smallest excursion depth is reached first.
    let n = levels.len();
    let mut next = 0;
    let mut s = s0;
    let x0 = w.position();
    while next < n && s - x0 > levels[next] {
        out[next] = Some(PassageEvent {
            time: 0.0,
            position: x0,
            running_max: s,
        });
        next += 1;
    }
    while next < n {
        // A coarse step can also raise the running maximum; its length keeps
        // a drawdown of the barrier distance negligible as well.
        let h_max = if bridge {
            w.coarse_step(w.position() - (s - levels[next]))
        } else {
            w.dt
        };
        let Some(seg) = w.next_step(h_max) else { break };
        match seg {
            Segment::Diffusion { t0, h, x0, x1 } => {
                let barrier = s - levels[next];
                let near = bridge && (x1 < barrier || w.bridge_may_reach(h, x0, x1, barrier));
                if near && w.splittable(h) {
                    w.split(t0, h, x0, x1);
                    continue;
                }
                let low = if near {
                    w.piece_min(h, x0, x1)
                } else {
                    x1
                };
                while next < n && s - low > levels[next] {
                    let (time, position) = if !bridge {
                        (t0 + h, x1)
                    } else if w.sigma() == 0.0 {
                        let b = s - levels[next];
                        (t0 + (x0 - b) / (x0 - x1) * h, b)
                    } else {
                        (t0 + 0.5 * h, s - levels[next])
                    };
                    out[next] = Some(PassageEvent {
                        time,
                        position,
                        running_max: s,
                    });
                    next += 1;
                }
                if next < n {
                    let high = if bridge && (x1 > s || w.bridge_may_reach(h, x0, x1, s)) {
                        w.piece_max(h, x0, x1)
                    } else {
                        x1
                    };
                    s = s.max(high);
                }
            }
            Segment::Jump { t, after, .. } => {
                s = s.max(after);
                while next < n && s - after > levels[next] {
                    out[next] = Some(PassageEvent {
                        time: t,
                        position: after,
                        running_max: s,
                    });
                    next += 1;
                }
            }
        }
    }
}

/// A functional of the passage event at a given level index. Unstopped
/// paths contribute zero.
pub type PassageFunctional<'a> = dyn Fn(usize, &PassageEvent) -> f64 + Sync + 'a;

/// Common-random-numbers estimates of several functionals at several
/// levels: result is indexed `[functional][level]`. Each path is simulated
/// once and shared by every level and functional.
pub fn passage_functionals(
    model: &LevyModel,
    grid: PathGrid,
    rule: StoppingRule,
    start: StartState,
    levels: &[f64],
    n_paths: usize,
    functionals: &[&PassageFunctional<'_>],
    truncation_bound: f64,
) -> Result<Vec<Vec<McEstimate>>> {
    grid.validate()?;
    if n_paths < MIN_PATHS {
        return Err(Error::InsufficientSamples {
            got: n_paths,
            required: MIN_PATHS,
        });
    }
    if levels.windows(2).any(|w| w[0] > w[1]) || levels.iter().any(|l| !l.is_finite()) {
        return Err(Error::Usage("levels must be finite and sorted ascending".into()));
    }
    if grid.antithetic && n_paths % 2 == 1 {
        return Err(Error::Usage("antithetic sampling needs an even number of paths".into()));
    }
    let n_levels = levels.len();
    let n_fun = functionals.len();
    // Antithetic pairs count as one sample (their average).
    let per_sample = if grid.antithetic { 2 } else { 1 };
    let n_samples = n_paths / per_sample;
    let n_chunks = n_samples.div_ceil(CHUNK);

    let chunks: Vec<Vec<Moments>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![Moments::default(); n_fun * n_levels];
            let mut events = vec![None; n_levels];
            let mut values = vec![0.0; n_fun * n_levels];
            let lo = c * CHUNK;
            let hi = ((c + 1) * CHUNK).min(n_samples);
            for sample in lo..hi {
                values.iter_mut().for_each(|v| *v = 0.0);
                for twin in 0..per_sample {
                    let rng = path_rng(grid.seed, sample as u64);
                    let mut w = PathWalker::new(model, start.x0, grid.dt, grid.t_max, rng, twin == 1);
                    run_path(&mut w, rule, start, levels, grid.bridge, &mut events);
                    for (f, fun) in functionals.iter().enumerate() {
                        for (l, ev) in events.iter().enumerate() {
                            if let Some(ev) = ev {
                                values[f * n_levels + l] += fun(l, ev) / per_sample as f64;
                            }
                        }
                    }
                }
                for (a, v) in acc.iter_mut().zip(&values) {
                    a.push(*v);
                }
            }
            acc
        })
        .collect();

    let mut total = vec![Moments::default(); n_fun * n_levels];
    for chunk in &chunks {
        for (t, m) in total.iter_mut().zip(chunk) {
            t.merge(m);
        }
    }
    Ok((0..n_fun)
        .map(|f| {
            (0..n_levels)
                .map(|l| {
                    let m = total[f * n_levels + l];
                    McEstimate {
                        mean: m.mean,
                        std_error: m.std_error(),
                        n_paths,
                        seed: grid.seed,
                        truncation_bias_bound: truncation_bound,
                    }
                })
                .collect()
        })
        .collect())
}

/// Payoffs of the supported stopping problems.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Payoff {
    /// `(K - e^x)^+`.
    Put { strike: f64 },
    /// `(x^+)^nu`.
    Power { nu: f64 },
    /// `1 - exp(-x^+)`.
    ExpPayoff,
    /// `exp(x v sup X)` at the stopping time.
    Russian,
}

impl Payoff {
    /// The stopping rule family that matches this payoff.
    pub fn natural_rule(&self) -> StoppingRule {
        match self {
            Payoff::Put { .. } => StoppingRule::DownCrossing,
            Payoff::Power { .. } | Payoff::ExpPayoff => StoppingRule::UpCrossing,
            Payoff::Russian => StoppingRule::ReflectedExceed,
        }
    }

    /// Undiscounted payoff at a passage event.
    pub fn value(&self, ev: &PassageEvent) -> f64 {
        match *self {
            Payoff::Put { strike } => (strike - ev.position.exp()).max(0.0),
            Payoff::Power { nu } => ev.position.max(0.0).powf(nu),
            Payoff::ExpPayoff => 1.0 - (-ev.position.max(0.0)).exp(),
            Payoff::Russian => ev.running_max.exp(),
        }
    }

    fn scale(&self, levels: &[f64], start: StartState) -> f64 {
        let top = levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        match *self {
            Payoff::Put { strike } => strike,
            Payoff::Power { nu } => top.max(0.0).powf(nu),
            Payoff::ExpPayoff => 1.0,
            Payoff::Russian => (start.s0.max(start.x0) + top.max(0.0)).exp(),
        }
    }
}

/// A single threshold stopping rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRule {
    pub rule: StoppingRule,
    pub level: f64,
}

fn check_pairing(rule: StoppingRule, payoff: &Payoff) -> Result<()> {
    if rule == payoff.natural_rule() {
        Ok(())
    } else {
        Err(Error::Usage(format!(
            "rule {rule:?} does not match payoff {payoff:?} (expects {:?})",
            payoff.natural_rule()
        )))
    }
}

fn check_payoff(payoff: &Payoff) -> Result<()> {
    match *payoff {
        Payoff::Put { strike } if !(strike > 0.0) => Err(Error::domain("strike", strike, "(0, inf)")),
        Payoff::Power { nu } if !(nu > 0.0) => Err(Error::domain("nu", nu, "(0, inf)")),
        _ => Ok(()),
    }
}

/// Start state for a payoff: Russian problems start the process at zero
/// with running maximum `x0`.
pub fn start_for(payoff: &Payoff, x0: f64) -> StartState {
    match payoff {
        Payoff::Russian => StartState { x0: 0.0, s0: x0.max(0.0) },
        _ => StartState::at(x0),
    }
}

fn payoff_estimates(
    model: &LevyModel,
    q: f64,
    payoff: Payoff,
    x0: f64,
    levels: &[f64],
    grid: PathGrid,
    n_paths: usize,
) -> Result<Vec<McEstimate>> {
    crate::levy_models::Horizon::new(q)?;
    check_payoff(&payoff)?;
    let start = start_for(&payoff, x0);
    let bound = (-effective_discount(model, q, &payoff) * grid.t_max).exp() * payoff.scale(levels, start);
    let f = move |_: usize, ev: &PassageEvent| (-q * ev.time).exp() * payoff.value(ev);
    let mut out = passage_functionals(
        model,
        grid,
        payoff.natural_rule(),
        start,
        levels,
        n_paths,
        &[&f],
        bound,
    )?;
    Ok(out.remove(0))
}

/// Monte Carlo estimate of `E_x0[exp(-q tau) G(X_tau)]` for a threshold rule.
pub fn estimate_stopped_payoff(
    model: &LevyModel,
    q: f64,
    rule: ThresholdRule,
    payoff: Payoff,
    x0: f64,
    grid: PathGrid,
    n_paths: usize,
) -> Result<McEstimate> {
    check_pairing(rule.rule, &payoff)?;
    if payoff == Payoff::Russian && rule.level < 0.0 {
        return Err(Error::domain("level", rule.level, "[0, inf) for reflected rules"));
    }
    let est = payoff_estimates(model, q, payoff, x0, &[rule.level], grid, n_paths)?;
    Ok(est[0])
}

/// Estimates along a threshold grid with the flat region around the argmax.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub levels: Vec<f64>,
    pub estimates: Vec<McEstimate>,
    pub argmax: usize,
    /// `[min, max]` of the levels whose estimate is within one standard
    /// error of the maximum.
    pub flat_interval: (f64, f64),
}

impl SweepResult {
    pub fn argmax_level(&self) -> f64 {
        self.levels[self.argmax]
    }

    pub fn interval_contains(&self, y: f64) -> bool {
        self.flat_interval.0 <= y && y <= self.flat_interval.1
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("y,estimate,std_error,n_paths\n");
        for (y, e) in self.levels.iter().zip(&self.estimates) {
            s.push_str(&format!("{y},{},{},{}\n", e.mean, e.std_error, e.n_paths));
        }
        s
    }

    fn from_estimates(levels: Vec<f64>, estimates: Vec<McEstimate>) -> Self {
        let argmax = estimates
            .iter()
            .enumerate()
            .fold(0, |best, (i, e)| if e.mean > estimates[best].mean { i } else { best });
        let top = estimates[argmax];
        let cut = top.mean - top.std_error;
        let flat: Vec<f64> = levels
            .iter()
            .zip(&estimates)
            .filter(|(_, e)| e.mean >= cut)
            .map(|(y, _)| *y)
            .collect();
        let lo = flat.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = flat.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        SweepResult {
            levels,
            estimates,
            argmax,
            flat_interval: (lo, hi),
        }
    }
}

/// Common-random-numbers threshold sweep: every grid level sees the same
/// paths.
pub fn sweep_threshold(
    model: &LevyModel,
    q: f64,
    payoff: Payoff,
    x0: f64,
    y_grid: &[f64],
    grid: PathGrid,
    n_paths: usize,
) -> Result<SweepResult> {
    if y_grid.is_empty() {
        return Err(Error::Usage("threshold grid is empty".into()));
    }
    let est = payoff_estimates(model, q, payoff, x0, y_grid, grid, n_paths)?;
    Ok(SweepResult::from_estimates(y_grid.to_vec(), est))
}

/// `n` equally spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Samples of the running supremum or infimum at an independent Exp(q)
/// time, one per path. With `grid_dt = None` the extremum of every
/// continuous piece is drawn from the Brownian bridge (exact in law);
/// otherwise the path is monitored on a grid of step
/// `min(grid_dt, horizon / 1000)` plus jump epochs.
pub fn sample_extrema(
    model: &LevyModel,
    q: f64,
    supremum: bool,
    n: usize,
    seed: u64,
    grid_dt: Option<f64>,
) -> Result<Vec<f64>> {
    crate::levy_models::Horizon::new(q)?;
    let n_chunks = n.div_ceil(CHUNK);
    let parts: Vec<Vec<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = ((c + 1) * CHUNK).min(n);
            (lo..hi)
                .map(|i| {
                    let mut rng = path_rng(seed, i as u64);
                    let e: f64 = Exp1.sample(&mut rng);
                    let horizon = e / q;
                    let dt = match grid_dt {
                        None => f64::INFINITY,
                        Some(dt) => dt.min(horizon / 1000.0),
                    };
                    let mut w = PathWalker::new(model, 0.0, dt, horizon, rng, false);
                    let mut ext = 0.0f64;
                    while let Some(seg) = w.next_segment() {
                        match seg {
                            Segment::Diffusion { h, x0, x1, .. } => {
                                let v = match (grid_dt, supremum) {
                                    (None, true) => w.piece_max(h, x0, x1),
                                    (None, false) => w.piece_min(h, x0, x1),
                                    (Some(_), _) => x1,
                                };
                                ext = if supremum { ext.max(v) } else { ext.min(v) };
                            }
                            Segment::Jump { after, .. } => {
                                ext = if supremum { ext.max(after) } else { ext.min(after) };
                            }
                        }
                    }
                    ext
                })
                .collect()
        })
        .collect();
    Ok(parts.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bm() -> LevyModel {
        LevyModel::brownian(0.0, 1.0).unwrap()
    }

    #[test]
    fn brownian_increment_variance() {
        let grid = PathGrid::for_discount(1.0, 7).with_dt(0.01).with_t_max(0.01);
        let xs: Vec<f64> = simulate_paths(&bm(), grid, 0.0, 20_000)
            .unwrap()
            .map(|p| p.value_at_end())
            .collect();
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let m = Moments::from_slice(&sq);
        assert!((m.mean - 0.01).abs() < 3.0 * m.std_error(), "{} +- {}", m.mean, m.std_error());
    }

    #[test]
    fn compound_poisson_mean() {
        let model = LevyModel::jump_diffusion(0.2, 0.5, 2.0, 0.3, 3.0, 1.5).unwrap();
        let grid = PathGrid::for_discount(1.0, 11).with_dt(0.05).with_t_max(1.0);
        let xs: Vec<f64> = simulate_paths(&model, grid, 0.0, 40_000)
            .unwrap()
            .map(|p| p.value_at_end())
            .collect();
        let m = Moments::from_slice(&xs);
        let expected = 0.2 + 2.0 * (0.3 / 3.0 - 0.7 / 1.5);
        assert!((expected - model.mean()).abs() < 1e-15);
        assert!((m.mean - expected).abs() < 3.0 * m.std_error());
    }

    #[test]
    fn streams_are_deterministic() {
        let model = LevyModel::jump_diffusion(0.0, 1.0, 1.0, 0.5, 2.0, 2.0).unwrap();
        let grid = PathGrid::for_discount(1.0, 99).with_dt(0.01).with_t_max(0.5);
        let a: Vec<_> = simulate_paths(&model, grid, 0.0, 5).unwrap().collect();
        let b: Vec<_> = simulate_paths(&model, grid, 0.0, 5).unwrap().collect();
        assert_eq!(a, b);
        let other: Vec<_> = simulate_paths(&model, PathGrid { seed: 100, ..grid }, 0.0, 5)
            .unwrap()
            .collect();
        assert_ne!(a, other);
    }

    #[test]
    fn antithetic_twins_mirror_the_gaussian_part() {
        let grid = PathGrid::for_discount(1.0, 3)
            .with_dt(0.1)
            .with_t_max(1.0)
            .with_antithetic(true);
        let paths: Vec<_> = simulate_paths(&bm(), grid, 0.0, 2).unwrap().collect();
        for (a, b) in paths[0].values.iter().zip(&paths[1].values) {
            assert!((a + b).abs() < 1e-12);
        }
    }

    #[test]
    fn jump_passages_carry_the_overshoot() {
        let model = LevyModel::bounded_variation(1.0, 2.0, 1.0).unwrap();
        let grid = PathGrid::for_discount(1.0, 5).with_dt(0.01);
        let levels = [-0.5];
        let mut w = PathWalker::new(&model, 0.0, grid.dt, grid.t_max, path_rng(5, 0), false);
        let mut events = [None];
        let mut found = 0;
        for i in 0..200 {
            w = PathWalker::new(&model, 0.0, grid.dt, grid.t_max, path_rng(5, i), false);
            run_path(&mut w, StoppingRule::DownCrossing, StartState::at(0.0), &levels, true, &mut events);
            if let Some(ev) = events[0] {
                assert!(ev.position < -0.5);
                found += 1;
            }
        }
        assert!(found > 50);
        let _ = w;
    }

    #[test]
    fn reflected_distance_nonnegative() {
        let model = LevyModel::cramer_lundberg(0.1, 1.0, 2.0, 3.0).unwrap();
        for i in 0..20 {
            let mut w = PathWalker::new(&model, 0.0, 0.01, 2.0, path_rng(8, i), false);
            let mut s = 0.3f64;
            while let Some(seg) = w.next_segment() {
                let x = match seg {
                    Segment::Diffusion { x1, .. } => x1,
                    Segment::Jump { after, .. } => after,
                };
                s = s.max(x);
                assert!(s - x >= 0.0);
            }
        }
    }

    #[test]
    fn start_below_level_stops_immediately() {
        let grid = PathGrid::for_discount(0.5, 1);
        let est = estimate_stopped_payoff(
            &bm(),
            0.5,
            ThresholdRule {
                rule: StoppingRule::DownCrossing,
                level: 0.1,
            },
            Payoff::Put { strike: 2.0 },
            0.0,
            grid,
            1_000,
        )
        .unwrap();
        assert!((est.mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn start_at_level_stops_almost_immediately_for_brownian_paths() {
        let grid = PathGrid::for_discount(0.5, 2);
        let est = estimate_stopped_payoff(
            &bm(),
            0.5,
            ThresholdRule {
                rule: StoppingRule::DownCrossing,
                level: 0.0,
            },
            Payoff::Put { strike: 2.0 },
            0.0,
            grid,
            1_000,
        )
        .unwrap();
        assert!((est.mean - 1.0).abs() < 1e-3, "{est:?}");
    }

    #[test]
    fn mismatched_rule_is_a_usage_error() {
        let r = estimate_stopped_payoff(
            &bm(),
            0.5,
            ThresholdRule {
                rule: StoppingRule::UpCrossing,
                level: 1.0,
            },
            Payoff::Put { strike: 1.0 },
            0.0,
            PathGrid::for_discount(0.5, 1),
            1_000,
        );
        assert!(matches!(r, Err(Error::Usage(_))));
    }

    #[test]
    fn too_few_paths_rejected() {
        let r = sweep_threshold(
            &bm(),
            0.5,
            Payoff::ExpPayoff,
            0.0,
            &[0.5],
            PathGrid::for_discount(0.5, 1),
            10,
        );
        assert!(matches!(r, Err(Error::InsufficientSamples { .. })));
    }

    #[test]
    fn single_point_sweep() {
        let r = sweep_threshold(
            &bm(),
            1.0,
            Payoff::ExpPayoff,
            0.0,
            &[0.7],
            PathGrid::for_discount(1.0, 1).with_dt(0.01),
            1_000,
        )
        .unwrap();
        assert_eq!(r.argmax, 0);
        assert_eq!(r.flat_interval, (0.7, 0.7));
    }

    #[test]
    fn moments_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let whole = Moments::from_slice(&xs);
        let mut parts = Moments::from_slice(&xs[..313]);
        parts.merge(&Moments::from_slice(&xs[313..]));
        assert!((whole.mean - parts.mean).abs() < 1e-12);
        assert!((whole.variance() - parts.variance()).abs() < 1e-9);
    }

    #[test]
    fn bridge_extrema_respect_endpoints() {
        let mut w = PathWalker::new(&bm(), 0.0, 0.1, 1.0, path_rng(1, 1), false);
        for _ in 0..1000 {
            let m = w.piece_min(0.1, 0.2, -0.1);
            let mx = w.piece_max(0.1, 0.2, -0.1);
            assert!(m <= -0.1 && mx >= 0.2);
        }
    }
}

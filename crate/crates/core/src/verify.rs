//! Analytic-versus-simulation check of a solved threshold problem: sweep the
//! threshold with common random numbers, then estimate the payoff at the
//! tested threshold and compare with the analytic value.

use serde::Serialize;

use crate::error::Result;
use crate::simulation::{
    estimate_stopped_payoff, linspace, sweep_threshold, McEstimate, PathGrid, Payoff, SweepResult, ThresholdRule,
};
use crate::stopping_solvers::{Problem, ThresholdSolution};

/// Monte Carlo budget and sweep layout for [`verify`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifyConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub dt: f64,
    pub t_max: Option<f64>,
    pub antithetic: bool,
    /// Added to the analytic threshold before testing (negative control).
    pub offset: f64,
    /// Start point; defaults per problem when `None`.
    pub x0: Option<f64>,
    pub grid_points: usize,
    pub half_width: f64,
    /// Agreement tolerance in standard errors.
    pub k_se: f64,
}

impl VerifyConfig {
    pub fn new(seed: u64) -> Self {
        VerifyConfig {
            n_paths: 100_000,
            seed,
            dt: 1e-3,
            t_max: None,
            antithetic: false,
            offset: 0.0,
            x0: None,
            grid_points: 41,
            half_width: 0.7,
            k_se: 3.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub problem: &'static str,
    pub threshold: f64,
    pub tested_threshold: f64,
    pub x0: f64,
    pub analytic_value: f64,
    pub estimate: McEstimate,
    pub sweep: SweepResult,
    pub interval_contains_tested: bool,
    pub value_agrees: bool,
    pub pass: bool,
}

impl VerifyReport {
    pub fn summary_line(&self) -> String {
        format!(
            "{} {}: threshold {:.6} (tested {:.6}), sweep argmax {:.4} in [{:.4}, {:.4}], \
             V(x0={:.4}) analytic {:.6} vs MC {:.6} +/- {:.6}",
            if self.pass { "PASS" } else { "FAIL" },
            self.problem,
            self.threshold,
            self.tested_threshold,
            self.sweep.argmax_level(),
            self.sweep.flat_interval.0,
            self.sweep.flat_interval.1,
            self.x0,
            self.analytic_value,
            self.estimate.mean,
            self.estimate.std_error,
        )
    }
}

pub fn payoff_of(problem: &Problem) -> Payoff {
    match *problem {
        Problem::McKean { strike } => Payoff::Put { strike },
        Problem::NovikovShiryaev { nu } => Payoff::Power { nu },
        Problem::NsExponential => Payoff::ExpPayoff,
        Problem::SheppShiryaev => Payoff::Russian,
    }
}

/// Default start point: just above the sweep for the American put, the
/// origin otherwise.
pub fn default_x0(sol: &ThresholdSolution, cfg: &VerifyConfig) -> f64 {
    match sol.problem {
        Problem::McKean { .. } => (sol.threshold + cfg.half_width).max(0.0),
        _ => 0.0,
    }
}

/// Threshold grid of the sweep, centred on the tested threshold.
pub fn sweep_grid(sol: &ThresholdSolution, tested: f64, cfg: &VerifyConfig) -> Vec<f64> {
    let (mut lo, mut hi) = (tested - cfg.half_width, tested + cfg.half_width);
    match sol.problem {
        Problem::McKean { strike } => hi = hi.min(strike.ln() - 1e-6),
        _ => lo = lo.max(0.05),
    }
    linspace(lo, hi, cfg.grid_points)
}

/// PASS iff the sweep's flat interval contains the tested threshold and the
/// simulated payoff there agrees with the analytic value within `k_se`
/// standard errors.
pub fn verify(sol: &ThresholdSolution, cfg: &VerifyConfig) -> Result<VerifyReport> {
    let payoff = payoff_of(&sol.problem);
    let tested = sol.threshold + cfg.offset;
    let x0 = cfg.x0.unwrap_or_else(|| default_x0(sol, cfg));
    let mut grid = PathGrid::for_payoff(&sol.model, sol.q, &payoff, cfg.seed)
        .with_dt(cfg.dt)
        .with_antithetic(cfg.antithetic);
    if let Some(t) = cfg.t_max {
        grid = grid.with_t_max(t);
    }
    let levels = sweep_grid(sol, tested, cfg);
    let sweep = sweep_threshold(&sol.model, sol.q, payoff, x0, &levels, grid, cfg.n_paths)?;
    // Fresh paths for the point estimate, independent of the sweep.
    let point_grid = PathGrid {
        seed: cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15),
        ..grid
    };
    let rule = ThresholdRule {
        rule: payoff.natural_rule(),
        level: tested,
    };
    let estimate = estimate_stopped_payoff(&sol.model, sol.q, rule, payoff, x0, point_grid, cfg.n_paths)?;
    let analytic_value = sol.value(x0)?;
    let interval_contains_tested = sweep.interval_contains(tested);
    let value_agrees = estimate.agrees_with(analytic_value, cfg.k_se);
    Ok(VerifyReport {
        problem: sol.problem.name(),
        threshold: sol.threshold,
        tested_threshold: tested,
        x0,
        analytic_value,
        estimate,
        sweep,
        interval_contains_tested,
        value_agrees,
        pass: interval_contains_tested && value_agrees,
    })
}

//! Analytic solutions on jump models checked by simulation: empirical
//! extremum laws for two-sided jumps, scale functions for one-sided ones.

use levystop::fluctuation::SamplingConfig;
use levystop::stopping_solvers::{solve_mckean, solve_ns, solve_ns_exponential, solve_ss, SolverConfig};
use levystop::verify::{verify, VerifyConfig};
use levystop::LevyModel;

fn jd() -> LevyModel {
    LevyModel::jump_diffusion(0.0, 1.0, 1.0, 0.5, 2.0, 2.0).unwrap()
}

fn cl() -> LevyModel {
    LevyModel::cramer_lundberg(0.2, 0.5, 1.5, 2.0).unwrap()
}

fn bv() -> LevyModel {
    LevyModel::bounded_variation(2.0, 1.0, 1.0).unwrap()
}

fn cfg() -> SolverConfig {
    SolverConfig {
        sampling: SamplingConfig::new(3).with_samples(200_000),
        ..SolverConfig::default()
    }
}

fn assert_pass(sol: levystop::stopping_solvers::ThresholdSolution) {
    let report = verify(&sol, &VerifyConfig::new(3)).unwrap();
    assert!(report.pass, "{}", report.summary_line());
}

#[test]
fn american_put_on_jump_diffusion() {
    assert_pass(solve_mckean(&jd(), 0.5, 1.0, &cfg()).unwrap());
}

#[test]
fn american_put_on_cramer_lundberg() {
    assert_pass(solve_mckean(&cl(), 0.5, 1.0, &cfg()).unwrap());
}

#[test]
fn power_payoff_on_jump_diffusion() {
    assert_pass(solve_ns(&jd(), 0.5, 1.0, &cfg()).unwrap());
}

#[test]
fn fractional_power_payoff_on_cramer_lundberg() {
    assert_pass(solve_ns(&cl(), 0.5, 1.5, &cfg()).unwrap());
}

#[test]
fn exp_payoff_on_jump_diffusion() {
    assert_pass(solve_ns_exponential(&jd(), 0.5, &cfg()).unwrap());
}

#[test]
fn russian_option_on_cramer_lundberg() {
    assert_pass(solve_ss(&cl(), 0.5).unwrap());
}

#[test]
fn russian_option_on_bounded_variation() {
    // psi(1) = 1.5 < q < d = 2: the payoff grows between jumps.
    assert_pass(solve_ss(&bv(), 1.8).unwrap());
}

#[test]
fn russian_option_preconditions_on_bounded_variation() {
    let err = solve_ss(&bv(), 0.5).unwrap_err().to_string();
    assert!(err.contains("psi(1)"), "{err}");
    let err = solve_ss(&bv(), 2.5).unwrap_err().to_string();
    assert!(err.contains("stopping immediately is optimal"), "{err}");
}

//! Simulated paths against the Laplace exponent: `(1/t) log E[e^{l X_t}]`
//! should match `psi(l)` for every catalog model.

use levystop::simulation::{simulate_paths, Moments, PathGrid};
use levystop::LevyModel;

fn catalog() -> Vec<LevyModel> {
    vec![
        LevyModel::brownian(0.0, 1.0).unwrap(),
        LevyModel::brownian(-0.3, 0.7).unwrap(),
        LevyModel::jump_diffusion(0.0, 1.0, 1.0, 0.5, 2.0, 2.0).unwrap(),
        LevyModel::jump_diffusion(0.1, 0.0, 2.0, 0.4, 3.0, 1.5).unwrap(),
        LevyModel::cramer_lundberg(0.2, 0.5, 1.5, 2.0).unwrap(),
        LevyModel::bounded_variation(2.0, 1.0, 1.0).unwrap(),
    ]
}

#[test]
fn empirical_exponent_matches_psi() {
    let t = 1.0;
    for (i, model) in catalog().into_iter().enumerate() {
        // Increments are exact, so a single step per path suffices.
        let grid = PathGrid::for_discount(1.0, 100 + i as u64).with_dt(t).with_t_max(t);
        let ends: Vec<f64> = simulate_paths(&model, grid, 0.0, 100_000)
            .unwrap()
            .map(|p| p.value_at_end())
            .collect();
        for lam in [-0.5, 0.4, 0.8] {
            let m = Moments::from_slice(&ends.iter().map(|x| (lam * x).exp()).collect::<Vec<_>>());
            let est = m.mean.ln() / t;
            let se = m.std_error() / m.mean / t;
            let psi = model.laplace_exponent(lam).unwrap();
            assert!(
                (est - psi).abs() <= 3.0 * se,
                "{} lambda={lam}: {est} +/- {se} vs psi {psi}",
                model.family_name()
            );
        }
    }
}

#[test]
fn sample_mean_matches_model_mean() {
    for (i, model) in catalog().into_iter().enumerate() {
        let grid = PathGrid::for_discount(1.0, 200 + i as u64).with_dt(0.5).with_t_max(2.0);
        let ends: Vec<f64> = simulate_paths(&model, grid, 0.0, 50_000)
            .unwrap()
            .map(|p| p.value_at_end())
            .collect();
        let m = Moments::from_slice(&ends);
        let expected = 2.0 * model.mean();
        assert!(
            (m.mean - expected).abs() <= 3.0 * m.std_error(),
            "{}: {} +/- {} vs {expected}",
            model.family_name(),
            m.mean,
            m.std_error()
        );
    }
}

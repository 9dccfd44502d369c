use std::fs;

use levystop::fluctuation::{
    brownian_wh_rates, empirical_law, exp_functional_inf, exp_functional_sup, extrema_law, extrema_law_cached,
    first_passage_transform_with_law, law_from_cache_text, samples_to_csv, LawKind, SamplingConfig, Side,
};
use levystop::{Error, LevyModel};

fn bm() -> LevyModel {
    LevyModel::brownian(-0.2, 1.1).unwrap()
}

#[test]
fn empirical_infimum_matches_exponential_law() {
    let q = 0.8;
    let (_, down) = brownian_wh_rates(-0.2, 1.1, q);
    let law = empirical_law(&bm(), q, Side::Infimum, &SamplingConfig::new(31).with_samples(100_000)).unwrap();
    assert!(law.samples().unwrap().iter().all(|&s| s <= 0.0));
    for beta in [0.5, 1.0, 2.0] {
        let f = exp_functional_inf(&law, beta).unwrap();
        let exact = down / (down + beta);
        assert!((f.value - exact).abs() <= 3.0 * f.std_error, "beta={beta}: {} +/- {} vs {exact}", f.value, f.std_error);
    }
}

#[test]
fn empirical_supremum_matches_exponential_law() {
    let q = 0.8;
    let (up, _) = brownian_wh_rates(-0.2, 1.1, q);
    let law = empirical_law(&bm(), q, Side::Supremum, &SamplingConfig::new(32).with_samples(100_000)).unwrap();
    assert!(law.samples().unwrap().iter().all(|&s| s >= 0.0));
    let f = exp_functional_sup(&law, 1.0).unwrap();
    let exact = up / (up + 1.0);
    assert!((f.value - exact).abs() <= 3.0 * f.std_error);
}

#[test]
fn first_passage_transform_from_samples_matches_closed_form() {
    let q = 0.8;
    let exact = extrema_law(&bm(), q, Side::Infimum, &SamplingConfig::new(0)).unwrap();
    assert!(exact.is_exact());
    let emp = empirical_law(&bm(), q, Side::Infimum, &SamplingConfig::new(33).with_samples(100_000)).unwrap();
    for (beta, x, y) in [(0.0, 0.0, -0.5), (1.0, 0.5, 0.0), (0.5, 1.0, -1.0)] {
        let a = first_passage_transform_with_law(&exact, beta, x, y).unwrap();
        let b = first_passage_transform_with_law(&emp, beta, x, y).unwrap();
        assert_eq!(a.std_error, 0.0);
        assert!((a.value - b.value).abs() <= 3.0 * b.std_error, "{a:?} vs {b:?}");
    }
}

#[test]
fn too_few_samples_is_an_error() {
    let m = LevyModel::jump_diffusion(0.0, 1.0, 1.0, 0.5, 2.0, 2.0).unwrap();
    let law = extrema_law(&m, 1.0, Side::Infimum, &SamplingConfig::new(1).with_samples(10)).unwrap();
    let err = exp_functional_inf(&law, 1.0).unwrap_err();
    assert!(matches!(err, Error::InsufficientSamples { .. }), "{err}");
}

#[test]
fn cached_laws_are_reused_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    let m = LevyModel::jump_diffusion(0.0, 1.0, 1.0, 0.5, 2.0, 2.0).unwrap();
    let cfg = SamplingConfig::new(5).with_samples(2_000);
    let first = extrema_law_cached(&m, 0.5, Side::Supremum, &cfg, dir.path()).unwrap();
    let files: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(files.len(), 2);
    let csv = files.iter().find(|p| p.extension().unwrap() == "csv").unwrap();
    let json = files.iter().find(|p| p.extension().unwrap() == "json").unwrap();

    // A second call reads the files back instead of resampling: doubled
    // samples on disk come back doubled.
    let doubled: Vec<f64> = first.samples().unwrap().iter().map(|s| 2.0 * s).collect();
    fs::write(csv, samples_to_csv(&doubled)).unwrap();
    let second = extrema_law_cached(&m, 0.5, Side::Supremum, &cfg, dir.path()).unwrap();
    assert_eq!(second.samples().unwrap(), &doubled[..]);
    match &second.kind {
        LawKind::Empirical { seed, .. } => assert_eq!(*seed, 5),
        k => panic!("unexpected {k:?}"),
    }

    // Truncated CSV no longer matches the sidecar count.
    let text = fs::read_to_string(csv).unwrap();
    let truncated: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
    let err = law_from_cache_text(&fs::read_to_string(json).unwrap(), &truncated).unwrap_err();
    assert!(matches!(err, Error::Parse(_)));

    // Unknown sidecar fields are rejected.
    let sidecar = fs::read_to_string(json).unwrap().replacen('{', "{\"extra\": 1,", 1);
    assert!(law_from_cache_text(&sidecar, &text).is_err());
}

#[test]
fn closed_form_laws_bypass_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let law = extrema_law_cached(&bm(), 0.5, Side::Supremum, &SamplingConfig::new(5), dir.path()).unwrap();
    assert!(law.is_exact());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

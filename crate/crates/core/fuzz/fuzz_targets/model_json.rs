#![no_main]

use libfuzzer_sys::fuzz_target;
use levystop::LevyModel;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(model) = LevyModel::from_json_str(text) else { return };
    // Accepted models round-trip and satisfy psi(0) = 0.
    let back = LevyModel::from_json_str(&model.to_json()).expect("canonical form parses");
    assert_eq!(back, model);
    assert_eq!(model.laplace_exponent(0.0).unwrap(), 0.0);
});

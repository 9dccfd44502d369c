#![no_main]

use libfuzzer_sys::fuzz_target;
use levystop::fluctuation::{parse_samples_csv, samples_to_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(samples) = parse_samples_csv(text) {
        assert!(samples.iter().all(|s| s.is_finite()));
        assert_eq!(parse_samples_csv(&samples_to_csv(&samples)).unwrap(), samples);
    }
});

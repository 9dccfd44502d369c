#![no_main]

use libfuzzer_sys::fuzz_target;
use levystop::fluctuation::{law_from_cache_text, LawSidecar, Side};

// Input: sidecar JSON, a NUL byte, then the sample CSV.
fuzz_target!(|data: &[u8]| {
    let (head, tail) = match data.iter().position(|&b| b == 0) {
        Some(i) => (&data[..i], &data[i + 1..]),
        None => (data, &[][..]),
    };
    let Ok(sidecar) = std::str::from_utf8(head) else { return };
    let _ = LawSidecar::from_json_str(sidecar);
    let Ok(csv) = std::str::from_utf8(tail) else { return };
    if let Ok(law) = law_from_cache_text(sidecar, csv) {
        let samples = law.samples().expect("cached laws are empirical");
        let sign = match law.side {
            Side::Supremum => 1.0,
            Side::Infimum => -1.0,
        };
        assert!(samples.iter().all(|&s| s * sign >= 0.0));
        assert!(samples.windows(2).all(|w| w[0] <= w[1]));
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use spekit::correlator::G2Curve;

fuzz_target!(|text: &str| {
    if let Ok(c) = G2Curve::from_csv(text) {
        let _ = c.std_errors();
        let _ = c.value_at_zero();
        let _ = G2Curve::from_csv(&c.to_csv()).unwrap();
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use spekit::correlator::DecayHistogram;

fuzz_target!(|text: &str| {
    if let Ok(h) = DecayHistogram::from_csv(text) {
        let _ = h.total();
        let _ = DecayHistogram::from_csv(&h.to_csv()).unwrap();
    }
});

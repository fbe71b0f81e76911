#![no_main]

use libfuzzer_sys::fuzz_target;
use spekit::correlator::DecayHistogram;

fuzz_target!(|text: &str| {
    if let Ok(h) = DecayHistogram::from_json(text) {
        let _ = h.centers();
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use spekit::fit;

fuzz_target!(|text: &str| {
    if let Ok(points) = fit::parse_saturation_points(text) {
        assert!(points.iter().all(|(p, r)| p.is_finite() && r.is_finite()));
    }
});

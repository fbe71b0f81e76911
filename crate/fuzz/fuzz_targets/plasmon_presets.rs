#![no_main]

use libfuzzer_sys::fuzz_target;
use spekit::cavity;

fuzz_target!(|text: &str| {
    if let Ok(modes) = cavity::parse_mode_presets(text) {
        for m in modes.values() {
            m.validate().unwrap();
        }
    }
});

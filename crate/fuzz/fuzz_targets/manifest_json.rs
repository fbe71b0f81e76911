#![no_main]

use libfuzzer_sys::fuzz_target;
use spekit::pipeline::Manifest;

fuzz_target!(|text: &str| {
    let _ = Manifest::from_json(text);
});

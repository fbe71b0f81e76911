#![no_main]

use libfuzzer_sys::fuzz_target;
use spekit::odmr::OdmrSpectrum;

fuzz_target!(|text: &str| {
    if let Ok(s) = OdmrSpectrum::from_csv(text) {
        let _ = OdmrSpectrum::from_csv(&s.to_csv()).unwrap();
    }
    let _ = OdmrSpectrum::from_json(text);
});

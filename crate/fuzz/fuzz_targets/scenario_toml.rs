#![no_main]

use libfuzzer_sys::fuzz_target;
use spekit::scenario::Scenario;

fuzz_target!(|text: &str| {
    if let Ok(s) = Scenario::from_toml_str(text) {
        assert_eq!(Scenario::from_toml_str(&s.to_toml_string()).unwrap(), s);
    }
});

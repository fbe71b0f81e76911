#![no_main]

use libfuzzer_sys::fuzz_target;
use spekit::stream::PhotonStream;

fuzz_target!(|text: &str| {
    if let Ok(s) = PhotonStream::from_csv(text) {
        assert_eq!(PhotonStream::from_csv(&s.to_csv()).unwrap(), s);
    }
});

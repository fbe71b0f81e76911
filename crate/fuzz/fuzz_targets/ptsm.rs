#![no_main]

use libfuzzer_sys::fuzz_target;
use spekit::stream::PhotonStream;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = PhotonStream::from_ptsm_bytes(data) {
        let back = PhotonStream::from_ptsm_bytes(&s.to_ptsm_bytes()).unwrap();
        assert_eq!(back, s);
    }
});

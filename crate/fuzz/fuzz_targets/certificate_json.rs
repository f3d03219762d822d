#![no_main]

use curvlab::io::{certificate_from_json, certificate_to_json};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(c) = certificate_from_json(s) {
        let again = certificate_from_json(&certificate_to_json(&c)).expect("canonical output parses");
        assert_eq!(again, c);
    }
});

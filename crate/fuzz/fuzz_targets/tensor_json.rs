#![no_main]

use curvlab::io::{tensor_from_json, tensor_to_json};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(r) = tensor_from_json(s) {
        let again = tensor_from_json(&tensor_to_json(&r)).expect("canonical output parses");
        assert_eq!(again, r);
    }
});

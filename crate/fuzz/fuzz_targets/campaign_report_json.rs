#![no_main]

use curvlab::CampaignReport;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(r) = CampaignReport::from_json(s) {
        let again = CampaignReport::from_json(&r.to_json()).expect("canonical output parses");
        assert_eq!(again.attempted, r.attempted);
        assert_eq!(again.witness, r.witness);
    }
});

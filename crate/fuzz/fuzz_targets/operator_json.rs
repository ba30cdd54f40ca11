#![no_main]

use homog_uc::homogop::operator::{operator_to_json, parse_operator};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(op) = parse_operator(text, "fuzz") {
        let again = parse_operator(&operator_to_json(&op), "fuzz").unwrap();
        assert_eq!(again.max_order(), op.max_order());
    }
});

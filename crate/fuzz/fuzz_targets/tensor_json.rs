#![no_main]

use homog_uc::polyalg::json::{
    parse_tensor_rational, parse_tensor_real, tensor_rational_to_json, tensor_real_to_json,
};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(t) = parse_tensor_rational(text, "fuzz") {
        assert_eq!(
            parse_tensor_rational(&tensor_rational_to_json(&t), "fuzz").unwrap(),
            t
        );
    }
    if let Ok(t) = parse_tensor_real(text, "fuzz") {
        assert_eq!(
            parse_tensor_real(&tensor_real_to_json(&t), "fuzz").unwrap(),
            t
        );
    }
});

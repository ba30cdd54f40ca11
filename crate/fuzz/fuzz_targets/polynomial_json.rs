#![no_main]

use homog_uc::polyalg::json::{
    parse_polynomial_rational, parse_polynomial_real, polynomial_rational_to_json,
    polynomial_real_to_json,
};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(p) = parse_polynomial_rational(text, "fuzz") {
        let again = parse_polynomial_rational(&polynomial_rational_to_json(&p), "fuzz").unwrap();
        assert_eq!(again, p);
    }
    if let Ok(p) = parse_polynomial_real(text, "fuzz") {
        let again = parse_polynomial_real(&polynomial_real_to_json(&p), "fuzz").unwrap();
        assert_eq!(again, p);
    }
});

#![no_main]

use homog_uc::cell::io::{decode_payload, parse_field_header};
use libfuzzer_sys::fuzz_target;

// Input layout: JSON header, a NUL byte, then the binary payload.
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == 0).unwrap_or(data.len());
    let Ok(text) = std::str::from_utf8(&data[..split]) else {
        return;
    };
    let Ok(header) = parse_field_header(text, "fuzz.json") else {
        return;
    };
    let payload = data.get(split + 1..).unwrap_or(&[]);
    if let Ok(blocks) = decode_payload(&header, payload, "fuzz.bin") {
        assert_eq!(blocks.len(), header.components.len());
    }
});

#![no_main]

use homog_uc_cli::config::CoefficientSpec;
use homog_uc_cli::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(cfg) = RunConfig::parse(text) else {
        return;
    };
    // File-backed configs would read arbitrary paths; validate builtins only.
    if matches!(cfg.coefficients, CoefficientSpec::Builtin(_)) {
        let _ = cfg.validate();
    }
});

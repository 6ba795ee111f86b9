#![no_main]

use calibsurv::io::parse_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(cfg) = parse_config(text) {
        assert!(!cfg.method_list().expect("validated").is_empty());
    }
});

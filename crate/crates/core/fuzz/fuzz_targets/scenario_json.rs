#![no_main]

//! Scenario files; small accepted scenarios are also simulated.

use calibsurv::io::parse_scenario;
use calibsurv::simulate::{gen_dataset, replicate_rng};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    let Ok(sc) = parse_scenario(text) else {
        return;
    };
    if sc.n <= 20 && sc.m_star <= 10 {
        let _ = gen_dataset(&sc, &mut replicate_rng(sc.seed, 0));
    }
});

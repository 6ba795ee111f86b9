#![no_main]

//! Stored calibration models: accepted documents must evaluate to valid
//! probabilities and serialize back to an equal model.

use calibsurv::io::{model_to_json, parse_model};
use calibsurv::{prob_exposed, History};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    let Ok(model) = parse_model(text) else {
        return;
    };
    let q = vec![0.0; model.q_dim()];
    for (w_bar, t) in [(0.0, 0.5), (0.5, 1.0), (1.0, 4.0)] {
        let h = History {
            t,
            w_bar,
            x_at_wbar: false,
            q: &q,
        };
        if let Ok(p) = prob_exposed(&model, &h) {
            assert!((0.0..=1.0).contains(&p));
        }
    }
    let again = parse_model(&model_to_json(&model).expect("serializable")).expect("round trip");
    assert_eq!(again, model);
});

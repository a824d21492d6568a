#![no_main]

use coodkit::pipeline::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(c) = RunConfig::from_json(data) {
        assert_eq!(RunConfig::from_json(&c.to_json()).expect("round trip"), c);
    }
});

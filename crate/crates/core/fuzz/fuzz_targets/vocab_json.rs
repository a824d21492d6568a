#![no_main]

use coodkit::corpus::Vocabulary;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(v) = Vocabulary::from_json(data) {
        assert_eq!(Vocabulary::from_json(&v.to_json()).expect("round trip"), v);
    }
});

#![no_main]

use coodkit::corpus::{parse_pair_line, to_jsonl_line};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(pair) = parse_pair_line(data, 1) {
        let line = to_jsonl_line(&pair);
        assert_eq!(parse_pair_line(&line, 1).expect("serialized pair parses"), pair);
    }
});

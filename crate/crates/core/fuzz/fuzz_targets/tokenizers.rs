#![no_main]

use coodkit::corpus::{tokenize_code, tokenize_comment};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(t) = tokenize_comment(data) {
        assert!(!t.is_empty() && t.iter().all(|x| !x.is_empty() && !x.contains(char::is_whitespace)));
    }
    if let Ok(t) = tokenize_code(data) {
        assert!(!t.is_empty());
    }
});

#![no_main]

use coodkit::minicode::{lex, render};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(tokens) = lex(data) {
        // rendering is canonical: lexing it again gives the same token texts
        let again = lex(&render(&tokens)).expect("rendered tokens lex");
        let texts = |t: &[coodkit::minicode::CodeToken]| t.iter().map(|x| x.text.clone()).collect::<Vec<_>>();
        assert_eq!(texts(&tokens), texts(&again));
    }
});

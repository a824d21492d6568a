#![no_main]

use coodkit::minicode::{analyze_scope, lex, splice_identifier};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let Ok(tokens) = lex(data) else { return };
    let Ok(report) = analyze_scope(&tokens) else { return };
    for (name, idx) in &report.uses {
        for cand in report.in_scope_at(*idx) {
            if cand == name {
                continue;
            }
            let out = splice_identifier(&tokens, *idx, cand).expect("in-scope splice succeeds");
            let after = lex(&out).expect("spliced code lexes");
            assert_eq!(after.len(), tokens.len());
        }
    }
    // arbitrary indices and names must fail cleanly, never panic
    let _ = splice_identifier(&tokens, data.len() % (tokens.len() + 1), "x");
    let _ = splice_identifier(&tokens, 0, data);
});

#![no_main]

use coodkit::pipeline::{checkpoint_bytes, checkpoint_from_bytes};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = checkpoint_from_bytes(data) {
        // embedded JSON may be re-serialized differently, so compare re-encodings
        let bytes = checkpoint_bytes(&model);
        let again = checkpoint_from_bytes(&bytes).expect("re-encoded checkpoint loads");
        assert_eq!(checkpoint_bytes(&again), bytes);
    }
});

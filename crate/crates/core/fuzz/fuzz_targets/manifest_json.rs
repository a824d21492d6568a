#![no_main]

use std::path::Path;

use coodkit::scenarios::BenchmarkManifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = BenchmarkManifest::from_json(data, Path::new("/nonexistent"));
});

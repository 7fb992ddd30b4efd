#![no_main]
use libfuzzer_sys::fuzz_target;
use sdiff::geometry::{validate, ProblemSpec};

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(spec) = ProblemSpec::from_json(s) {
            if let Ok(v) = validate(&spec) {
                let _ = v.revalidate();
            }
        }
    }
});

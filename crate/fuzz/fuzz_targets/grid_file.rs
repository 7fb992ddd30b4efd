#![no_main]
use libfuzzer_sys::fuzz_target;
use sdiff::accumulation::GridData;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(g) = GridData::parse(s) {
            if g.check().is_ok() {
                let _ = g.value(&[0.0, 0.0]);
                let _ = GridData::parse(&g.to_text());
            }
        }
    }
});

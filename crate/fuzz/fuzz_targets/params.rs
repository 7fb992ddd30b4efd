#![no_main]
use libfuzzer_sys::fuzz_target;
use sdiff_cli::params::{
    AccumParams, GreensParams, KuramotoFile, OracleParams, QsParams, RipenParams, SteadyParams, Sweep,
};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let _ = s.parse::<Sweep>();
    if let Ok(p) = serde_json::from_str::<RipenParams>(s) {
        let _ = p.resolve();
    }
    if let Ok(p) = serde_json::from_str::<QsParams>(s) {
        let _ = p.check();
    }
    if let Ok(p) = serde_json::from_str::<KuramotoFile>(s) {
        let n = p.n.unwrap_or(1).min(1024);
        if p.check(n).is_ok() {
            let _ = p.phases(n);
            let _ = p.density.sample(n);
        }
    }
    if let Ok(p) = serde_json::from_str::<SteadyParams>(s) {
        let _ = p.newton();
    }
    if let Ok(p) = serde_json::from_str::<OracleParams>(s) {
        let _ = p.fd();
    }
    let _ = serde_json::from_str::<AccumParams>(s);
    let _ = serde_json::from_str::<GreensParams>(s);
});

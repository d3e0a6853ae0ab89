#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((frames, _hash)) = avibench_core::cache::decode_features(data) {
        // decoded dimensions must be internally consistent
        let dim = frames.dim();
        assert!(frames.vectors.iter().all(|r| r.len() == dim));
    }
});

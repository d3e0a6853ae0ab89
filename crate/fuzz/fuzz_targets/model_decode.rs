#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((model, _hash)) = avibench_core::detect::decode_model(data) {
        // a decoded model must stay well-behaved when scored
        use avibench_core::detect::{ClipFeatures, DetectorModel};
        let features = match &model {
            DetectorModel::Gmm(pair) => {
                let dim = pair
                    .positive
                    .components
                    .first()
                    .map(|c| c.mean.len())
                    .unwrap_or(1);
                ClipFeatures::Frames(vec![vec![0.0; dim]])
            }
            DetectorModel::Forest(rf) => ClipFeatures::Vector(vec![0.0; rf.dim]),
        };
        if let Ok(s) = model.score(&features) {
            assert!(s.is_finite() && (0.0..=1.0).contains(&s));
        }
    }
});

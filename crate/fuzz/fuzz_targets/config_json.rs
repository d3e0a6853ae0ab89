#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = serde_json::from_slice::<avibench_core::pipeline::PipelineConfig>(data) {
        let _ = cfg.features.validate();
        let _ = cfg.features.hash();
    }
    let _ = serde_json::from_slice::<avibench_core::synth::SiteProfile>(data)
        .map(|p| p.validate());
});

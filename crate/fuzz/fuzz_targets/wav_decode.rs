#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // both downmix modes; decoding must never panic on arbitrary bytes
    let _ = avibench_core::audio::read_wav_bytes(data, "fuzz", true);
    let _ = avibench_core::audio::read_wav_bytes(data, "fuzz", false);
});

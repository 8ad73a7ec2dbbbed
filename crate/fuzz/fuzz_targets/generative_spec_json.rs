#![no_main]

use libfuzzer_sys::fuzz_target;
use summ_core::synth::GenerativeSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = GenerativeSpec::from_json(text) else { return };
    // accepted specs must survive a round trip
    let again = GenerativeSpec::from_json(&spec.to_json()).expect("re-parse of emitted spec");
    assert_eq!(again, spec);
    // keep sampling cheap
    let small = spec.with_size(spec.sequences.min(4), spec.length.min(16), spec.seed);
    let _ = small.generate();
});

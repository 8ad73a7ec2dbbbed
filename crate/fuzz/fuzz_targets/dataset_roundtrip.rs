#![no_main]

use libfuzzer_sys::fuzz_target;
use summ_core::io::{format_dataset, parse_dataset, DatasetFormat};

// Any dataset that parses must be re-emitted and re-parsed unchanged in both formats.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for input in [DatasetFormat::Csv, DatasetFormat::Jsonl] {
        let Ok(ds) = parse_dataset(text, input, None) else { continue };
        for output in [DatasetFormat::Csv, DatasetFormat::Jsonl] {
            let emitted = format_dataset(&ds, output);
            let back = parse_dataset(&emitted, output, Some(ds.alphabet())).expect("re-parse of emitted dataset");
            assert_eq!(back, ds);
            assert_eq!(format_dataset(&back, output), emitted);
        }
    }
});

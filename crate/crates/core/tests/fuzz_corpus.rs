//! Replays the checked-in fuzz corpus through the same invariants as the
//! fuzz targets, and throws arbitrary text at every parser.

use std::fs;
use std::path::PathBuf;

use proptest::prelude::*;
use summ_core::io::{format_dataset, parse_csv, parse_dataset, parse_jsonl, DatasetFormat};
use summ_core::synth::GenerativeSpec;
use summ_core::SummError;

fn corpus(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds for {target}");
    files
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(&p).unwrap()))
        .collect()
}

fn roundtrip(text: &str) -> usize {
    let mut parsed = 0;
    for input in [DatasetFormat::Csv, DatasetFormat::Jsonl] {
        let Ok(ds) = parse_dataset(text, input, None) else { continue };
        parsed += 1;
        for output in [DatasetFormat::Csv, DatasetFormat::Jsonl] {
            let emitted = format_dataset(&ds, output);
            let back = parse_dataset(&emitted, output, Some(ds.alphabet())).unwrap();
            assert_eq!(back, ds);
            assert_eq!(format_dataset(&back, output), emitted);
        }
    }
    parsed
}

fn spec_roundtrip(text: &str) -> bool {
    let Ok(spec) = GenerativeSpec::from_json(text) else { return false };
    assert_eq!(GenerativeSpec::from_json(&spec.to_json()).unwrap(), spec);
    let small = spec.with_size(spec.sequences.min(4), spec.length.min(16), spec.seed);
    small.generate();
    true
}

#[test]
fn csv_seeds() {
    let results: Vec<(String, bool)> = corpus("parse_csv")
        .into_iter()
        .map(|(name, text)| (name, parse_csv(&text, None).is_ok()))
        .collect();
    let ok = |n: &str| results.iter().find(|r| r.0 == n).unwrap().1;
    assert!(ok("example1.csv") && ok("quoted.csv"));
    assert!(!ok("noncontiguous.csv") && !ok("header_only.csv"));
}

#[test]
fn csv_noncontiguous_reports_line() {
    let (_, text) = corpus("parse_csv").into_iter().find(|c| c.0 == "noncontiguous.csv").unwrap();
    assert!(matches!(parse_csv(&text, None), Err(SummError::Parse { line: 4, .. })));
}

#[test]
fn jsonl_seeds() {
    for (name, text) in corpus("parse_jsonl") {
        let ok = parse_jsonl(&text, None).is_ok();
        assert_eq!(ok, name == "example1.jsonl" || name == "blank_line.jsonl", "{name}");
    }
}

#[test]
fn dataset_roundtrip_seeds() {
    for (name, text) in corpus("dataset_roundtrip") {
        assert!(roundtrip(&text) > 0, "{name} should parse");
    }
}

#[test]
fn generative_spec_seeds() {
    for (name, text) in corpus("generative_spec_json") {
        assert_eq!(spec_roundtrip(&text), name != "bad_sum.json", "{name}");
    }
}

fn datasetish() -> impl Strategy<Value = String> {
    prop_oneof![
        any::<String>(),
        "seq_id,label\n([a-c\",]{0,3},[A-C\" ]{0,3}\n){0,6}",
        "(\\{\"id\":\"[a-c]{0,2}\",\"events\":\\[(\"[A-C]{0,2}\",?){0,4}\\]\\}\n?){0,4}",
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn parsers_never_panic_and_roundtrip(text in datasetish()) {
        let _ = parse_csv(&text, None);
        let _ = parse_jsonl(&text, None);
        roundtrip(&text);
    }

    #[test]
    fn spec_parser_never_panics(text in any::<String>(), probe in "\\{\"alphabet\":\\[(\"[a-c]\",?){0,3}\\],\"conditioning\":\\[\\],\"table\":\\[\\{\"present\":\\[\\],\"probs\":\\{(\"[a-c]\":0?\\.[0-9],?){0,3}\\}\\}\\]\\}") {
        spec_roundtrip(&text);
        spec_roundtrip(&probe);
    }
}

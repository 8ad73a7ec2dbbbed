//! Dataset files.
//!
//! Two formats are supported:
//! - CSV with header `seq_id,label`, one event per row, rows of a sequence
//!   contiguous and in position order;
//! - JSON lines, one object per sequence: `{"id":"s1","events":["A","B"]}`.
//!
//! Unless an explicit alphabet is supplied, the alphabet is the sorted set
//! of observed labels. Label strings are opaque and never normalized.

use std::collections::HashSet;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SummError};
use crate::sequence::{Alphabet, EventDataset, Sequence};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Csv,
    Jsonl,
}

impl std::str::FromStr for DatasetFormat {
    type Err = SummError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(DatasetFormat::Csv),
            "jsonl" | "ndjson" | "json" => Ok(DatasetFormat::Jsonl),
            other => Err(SummError::Input(format!("unknown dataset format {other:?}"))),
        }
    }
}

impl DatasetFormat {
    /// Guess from the file extension, falling back to the first non-blank byte.
    pub fn sniff(path: &Path, text: &str) -> DatasetFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => DatasetFormat::Csv,
            Some("jsonl") | Some("ndjson") | Some("json") => DatasetFormat::Jsonl,
            _ => {
                if text.trim_start().starts_with('{') {
                    DatasetFormat::Jsonl
                } else {
                    DatasetFormat::Csv
                }
            }
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            DatasetFormat::Csv => "csv",
            DatasetFormat::Jsonl => "jsonl",
        }
    }
}

fn finish(
    raw: Vec<(String, Vec<String>)>,
    alphabet: Option<&Alphabet>,
    lines: &[usize],
) -> Result<EventDataset> {
    if raw.is_empty() {
        return Err(SummError::Data("dataset file contains no sequences".into()));
    }
    let alphabet = match alphabet {
        Some(a) => a.clone(),
        None => Alphabet::sorted(raw.iter().flat_map(|(_, ev)| ev.iter().cloned()))
            .map_err(|e| SummError::Data(e.to_string()))?,
    };
    let mut sequences = Vec::with_capacity(raw.len());
    for ((id, labels), &line) in raw.into_iter().zip(lines) {
        let events = labels
            .iter()
            .map(|l| {
                alphabet.id(l).ok_or_else(|| {
                    SummError::Data(format!("line {line}: label {l:?} is not in the supplied alphabet"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        sequences.push(Sequence { id, events });
    }
    EventDataset::new(alphabet, sequences)
}

/// Parse the CSV format.
pub fn parse_csv(text: &str, alphabet: Option<&Alphabet>) -> Result<EventDataset> {
    if text.trim().is_empty() {
        return Err(SummError::Data("dataset file is empty".into()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.len() != 2 || &header[0] != "seq_id" || &header[1] != "label" {
        return Err(SummError::Parse {
            line: 1,
            message: "expected header `seq_id,label`".into(),
        });
    }
    let mut raw: Vec<(String, Vec<String>)> = Vec::new();
    let mut first_lines = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let (id, label) = (&rec[0], &rec[1]);
        if label.is_empty() {
            return Err(SummError::Parse {
                line,
                message: "empty label".into(),
            });
        }
        match raw.last_mut() {
            Some((cur, events)) if cur == id => events.push(label.to_string()),
            _ => {
                if !seen.insert(id.to_string()) {
                    return Err(SummError::Parse {
                        line,
                        message: format!("rows of sequence {id:?} are not contiguous"),
                    });
                }
                raw.push((id.to_string(), vec![label.to_string()]));
                first_lines.push(line);
            }
        }
    }
    finish(raw, alphabet, &first_lines)
}

fn csv_error(e: csv::Error) -> SummError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    SummError::Parse {
        line,
        message: e.to_string(),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonlRecord {
    id: String,
    events: Vec<String>,
}

/// Parse the JSON-lines format. Blank lines are skipped.
pub fn parse_jsonl(text: &str, alphabet: Option<&Alphabet>) -> Result<EventDataset> {
    if text.trim().is_empty() {
        return Err(SummError::Data("dataset file is empty".into()));
    }
    let mut raw = Vec::new();
    let mut lines = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonlRecord = serde_json::from_str(line).map_err(|e| SummError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if rec.events.iter().any(String::is_empty) {
            return Err(SummError::Parse {
                line: line_no,
                message: "empty label".into(),
            });
        }
        // CSV cannot represent a sequence without rows
        if rec.events.is_empty() {
            return Err(SummError::Parse {
                line: line_no,
                message: format!("sequence {:?} has no events", rec.id),
            });
        }
        if !seen.insert(rec.id.clone()) {
            return Err(SummError::Parse {
                line: line_no,
                message: format!("duplicate sequence id {:?}", rec.id),
            });
        }
        raw.push((rec.id, rec.events));
        lines.push(line_no);
    }
    finish(raw, alphabet, &lines)
}

pub fn parse_dataset(text: &str, format: DatasetFormat, alphabet: Option<&Alphabet>) -> Result<EventDataset> {
    match format {
        DatasetFormat::Csv => parse_csv(text, alphabet),
        DatasetFormat::Jsonl => parse_jsonl(text, alphabet),
    }
}

pub fn to_csv(dataset: &EventDataset) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["seq_id", "label"]).expect("in-memory write");
    let a = dataset.alphabet();
    for s in dataset.sequences() {
        for &e in &s.events {
            w.write_record([s.id.as_str(), a.name(e)]).expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

pub fn to_jsonl(dataset: &EventDataset) -> String {
    let a = dataset.alphabet();
    let mut out = String::new();
    for s in dataset.sequences() {
        let rec = JsonlRecord {
            id: s.id.clone(),
            events: s.events.iter().map(|&e| a.name(e).to_string()).collect(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn format_dataset(dataset: &EventDataset, format: DatasetFormat) -> String {
    match format {
        DatasetFormat::Csv => to_csv(dataset),
        DatasetFormat::Jsonl => to_jsonl(dataset),
    }
}

/// Read a dataset, sniffing the format when `format` is `None`.
pub fn load_dataset(
    path: &Path,
    format: Option<DatasetFormat>,
    alphabet: Option<&Alphabet>,
) -> Result<EventDataset> {
    let text = fs::read_to_string(path).map_err(|e| SummError::Io(format!("{}: {e}", path.display())))?;
    let format = format.unwrap_or_else(|| DatasetFormat::sniff(path, &text));
    parse_dataset(&text, format, alphabet).map_err(|e| e.context(path.display()))
}

/// Files cannot hold sequences without events, so those are rejected.
pub fn save_dataset(path: &Path, dataset: &EventDataset, format: DatasetFormat) -> Result<()> {
    if let Some(s) = dataset.sequences().iter().find(|s| s.is_empty()) {
        return Err(SummError::Data(format!("sequence {:?} has no events", s.id)));
    }
    write_atomic(path, format_dataset(dataset, format).as_bytes())
}

/// One label per non-blank line, in the order given.
pub fn load_alphabet(path: &Path) -> Result<Alphabet> {
    let text = fs::read_to_string(path).map_err(|e| SummError::Io(format!("{}: {e}", path.display())))?;
    Alphabet::new(text.lines().map(str::trim_end).filter(|l| !l.is_empty()).map(String::from))
}

/// Write to a temporary sibling file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| SummError::Io(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        SummError::from(e)
    })
}

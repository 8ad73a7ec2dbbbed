//! Serializable views of fitted models and search traces.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::search::{ModelKind, SearchPhase, SummModel};
use crate::sequence::Lookback;
use crate::summary::{KeyCoder, SummaryKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterRow {
    /// Rendered summary state, e.g. `A,B̄` or `[B,A]`.
    pub summary: String,
    pub key: u64,
    pub counts: Vec<u64>,
    pub probabilities: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub schema_version: String,
    pub kind: String,
    pub target: Vec<String>,
    pub states: Vec<String>,
    pub influencers: Vec<String>,
    pub lookbacks: Vec<Lookback>,
    pub alpha: f64,
    pub gamma: f64,
    pub log_likelihood: f64,
    pub free_parameters: u64,
    pub n_events: u64,
    pub score: f64,
    pub parameters: Vec<ParameterRow>,
    /// Estimate used for summary states never seen in training.
    pub unseen_row: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub phase: SearchPhase,
    pub sweep: usize,
    pub candidate: Option<String>,
    pub set: Vec<String>,
    pub score: f64,
    pub accepted: bool,
}

pub fn kind_name(kind: SummaryKind) -> &'static str {
    match kind {
        SummaryKind::Binary => "bsumm",
        SummaryKind::Ordinal => "osumm",
        SummaryKind::Kgram => "mc",
    }
}

pub fn model_kind_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Bsumm => "bsumm",
        ModelKind::Osumm => "osumm",
    }
}

pub fn model_report(model: &SummModel) -> Result<ModelReport> {
    let coder = KeyCoder::new(&model.spec)?;
    let parameters = model
        .stats
        .rows()
        .map(|(key, counts)| ParameterRow {
            summary: model.spec.render(&coder.decode(key), &model.alphabet),
            key: key.0,
            counts: counts.to_vec(),
            probabilities: model.params.row(key).to_vec(),
        })
        .collect();
    let names = |ids: &[crate::sequence::LabelId]| -> Vec<String> {
        ids.iter().map(|&l| model.alphabet.name(l).to_string()).collect()
    };
    Ok(ModelReport {
        schema_version: crate::SCHEMA_VERSION.into(),
        kind: kind_name(model.spec.kind()).into(),
        target: names(model.target.targets().ids()),
        states: model.target.state_names(&model.alphabet),
        influencers: names(model.influencers.ids()),
        lookbacks: model.spec.lookbacks(),
        alpha: model.params.alpha(),
        gamma: model.score.gamma,
        log_likelihood: model.score.log_likelihood,
        free_parameters: model.score.free_parameters,
        n_events: model.score.n_events,
        score: model.score.score,
        parameters,
        unseen_row: model.params.prior_row().to_vec(),
    })
}

pub fn trace_records(model: &SummModel) -> Vec<TraceRecord> {
    let a = &model.alphabet;
    model
        .trace
        .iter()
        .map(|t| TraceRecord {
            phase: t.phase,
            sweep: t.sweep,
            candidate: t.candidate.map(|l| a.name(l).to_string()),
            set: t.set.names(a).into_iter().map(String::from).collect(),
            score: t.score,
            accepted: t.accepted,
        })
        .collect()
}

/// One JSON object per line, newline-terminated.
pub fn trace_jsonl(model: &SummModel) -> String {
    let mut out = String::new();
    for r in trace_records(model) {
        out.push_str(&serde_json::to_string(&r).expect("trace record serializes"));
        out.push('\n');
    }
    out
}

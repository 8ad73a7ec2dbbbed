//! Per-label influence graphs assembled from independent searches.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SummError};
use crate::report::{model_report, ModelReport};
use crate::search::{influencer_search, SearchConfig, SummModel};
use crate::sequence::{EventDataset, LabelId, Lookback, TargetVariable};
use crate::summary::{SummaryKey, SummaryKind};
use crate::SCHEMA_VERSION;

/// Search settings used for graph learning by default: α = 0.1, κ = 10, γ = 0.3.
pub fn default_graph_config() -> SearchConfig {
    SearchConfig {
        lookback: Lookback::Bounded(10),
        alpha: 0.1,
        gamma: 0.3,
        ..SearchConfig::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub label: String,
    pub alpha: f64,
    pub kappa: Lookback,
    pub gamma: f64,
    pub parents: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub from: String,
    pub to: String,
    /// θ(x | this parent alone present) / θ(x | no parent present); only
    /// for binary models with at most two parents.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub effect_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfluenceGraph {
    pub schema_version: String,
    pub nodes: Vec<GraphNode>,
    /// Sorted by (from, to) in canonical label order.
    pub edges: Vec<GraphEdge>,
}

impl InfluenceGraph {
    pub fn edge_pairs(&self) -> Vec<(&str, &str)> {
        self.edges.iter().map(|e| (e.from.as_str(), e.to.as_str())).collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("graph serializes");
        s.push('\n');
        s
    }
}

/// Learn one model per label and link each learned influencer to its
/// label. Failing labels keep their node with an error message.
pub fn learn_graph(dataset: &EventDataset, config: &SearchConfig, allow_self_loops: bool) -> Result<InfluenceGraph> {
    config.validate()?;
    let alphabet = dataset.alphabet();
    let results: Vec<(LabelId, Result<SummModel>)> = alphabet
        .ids()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|x| {
            let fit = TargetVariable::single(alphabet, alphabet.name(x)).and_then(|target| {
                let cfg = if allow_self_loops {
                    config.clone()
                } else {
                    SearchConfig {
                        exclude_targets: true,
                        ..config.clone()
                    }
                };
                influencer_search(dataset, &target, &cfg)
            });
            (x, fit)
        })
        .collect();
    assemble(dataset, config, results)
}

fn assemble(
    dataset: &EventDataset,
    config: &SearchConfig,
    results: Vec<(LabelId, Result<SummModel>)>,
) -> Result<InfluenceGraph> {
    let alphabet = dataset.alphabet();
    let mut nodes = Vec::with_capacity(results.len());
    let mut edges: BTreeMap<(LabelId, LabelId), Option<f64>> = BTreeMap::new();
    for (x, fit) in results {
        let mut node = GraphNode {
            label: alphabet.name(x).to_string(),
            alpha: config.alpha,
            kappa: config.lookback,
            gamma: config.gamma,
            parents: Vec::new(),
            model: None,
            error: None,
        };
        match fit {
            Ok(model) => {
                for &z in model.influencers.ids() {
                    edges.insert((z, x), effect_ratio(&model, z));
                }
                node.parents = model.influencers.names(alphabet).into_iter().map(String::from).collect();
                node.model = Some(model_report(&model)?);
            }
            Err(e) => node.error = Some(e.to_string()),
        }
        nodes.push(node);
    }
    let edges = edges
        .into_iter()
        .map(|((z, x), r)| GraphEdge {
            from: alphabet.name(z).to_string(),
            to: alphabet.name(x).to_string(),
            effect_ratio: r,
        })
        .collect();
    Ok(InfluenceGraph {
        schema_version: SCHEMA_VERSION.into(),
        nodes,
        edges,
    })
}

fn effect_ratio(model: &SummModel, parent: LabelId) -> Option<f64> {
    if model.spec.kind() != SummaryKind::Binary || model.influencers.len() > 2 {
        return None;
    }
    let bit = model.influencers.rank(parent)?;
    let base = model.params.row(SummaryKey(0))[0];
    let alone = model.params.row(SummaryKey(1 << bit))[0];
    Some(alone / base)
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out.push('"');
    out
}

/// DOT text: node statements in node order, then edges sorted by (from, to).
pub fn export_dot(graph: &InfluenceGraph) -> String {
    let mut out = String::from("digraph influence {\n");
    for n in &graph.nodes {
        let _ = writeln!(out, "  {};", quote(&n.label));
    }
    for e in &graph.edges {
        let _ = writeln!(out, "  {} -> {};", quote(&e.from), quote(&e.to));
    }
    out.push_str("}\n");
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaSweepStep {
    pub gamma: f64,
    pub edges: usize,
    /// Edges present at the previous (larger) γ that are missing here.
    pub lost_edges: Vec<(String, String)>,
}

/// Learn graphs at decreasing γ and report edges that disappear as the
/// penalty weakens. Informational: the search is greedy, so this is not
/// guaranteed to be empty.
pub fn gamma_sweep(
    dataset: &EventDataset,
    config: &SearchConfig,
    gammas: &[f64],
    allow_self_loops: bool,
) -> Result<Vec<GammaSweepStep>> {
    if gammas.is_empty() {
        return Err(SummError::Config("gamma sweep needs at least one value".into()));
    }
    let mut gs = gammas.to_vec();
    gs.sort_by(|a, b| b.total_cmp(a));
    let mut prev: Option<Vec<(String, String)>> = None;
    let mut steps = Vec::new();
    for g in gs {
        let cfg = SearchConfig { gamma: g, ..config.clone() };
        let graph = learn_graph(dataset, &cfg, allow_self_loops)?;
        let now: Vec<(String, String)> = graph.edges.iter().map(|e| (e.from.clone(), e.to.clone())).collect();
        let lost = prev
            .as_ref()
            .map(|p| p.iter().filter(|e| !now.contains(e)).cloned().collect())
            .unwrap_or_default();
        steps.push(GammaSweepStep {
            gamma: g,
            edges: now.len(),
            lost_edges: lost,
        });
        prev = Some(now);
    }
    Ok(steps)
}

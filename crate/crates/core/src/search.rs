//! Greedy forward/backward influencer search and a brute-force reference.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SummError};
use crate::estimate::{compute_score, ParameterTable, ScoreReport, ScoredFit, SummaryStatistics};
use crate::sequence::{Alphabet, EventDataset, LabelId, LabelSet, Lookback, TargetVariable};
use crate::summary::SummarySpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Binary presence summaries.
    Bsumm,
    /// Ordinal (order instantiation) summaries.
    Osumm,
}

/// Incumbent score at the start of the forward sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialIncumbent {
    /// −∞: the first forward candidate is always accepted and only the
    /// backward sweep can take it out again.
    #[default]
    NegativeInfinity,
    /// Score of the empty set, so the forward sweep may reject everything.
    EmptySet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig {
    pub kind: ModelKind,
    /// Look-back shared by all influencers unless overridden.
    pub lookback: Lookback,
    /// Per-label look-backs for binary models.
    pub label_lookbacks: BTreeMap<LabelId, Lookback>,
    pub alpha: f64,
    pub gamma: f64,
    /// Candidate influencers; `None` means the whole alphabet.
    pub pool: Option<LabelSet>,
    /// Drop the target labels themselves from the pool.
    pub exclude_targets: bool,
    /// Repeat forward/backward sweeps until the set stops changing.
    pub repeat_until_stable: bool,
    pub initial: InitialIncumbent,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            kind: ModelKind::Bsumm,
            lookback: Lookback::Bounded(3),
            label_lookbacks: BTreeMap::new(),
            alpha: 0.1,
            gamma: 1.0,
            pool: None,
            exclude_targets: false,
            repeat_until_stable: false,
            initial: InitialIncumbent::default(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        self.lookback.validate()?;
        for lb in self.label_lookbacks.values() {
            lb.validate()?;
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(SummError::Input(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(SummError::Input(format!("gamma must be positive, got {}", self.gamma)));
        }
        Ok(())
    }

    pub fn lookback_for(&self, label: LabelId) -> Lookback {
        self.label_lookbacks.get(&label).copied().unwrap_or(self.lookback)
    }

    /// Summary spec for influencing set `u` under this configuration.
    pub fn spec_for(&self, u: &LabelSet) -> Result<SummarySpec> {
        match self.kind {
            ModelKind::Bsumm => {
                let lbs = u.ids().iter().map(|&l| self.lookback_for(l)).collect();
                SummarySpec::binary(u.clone(), lbs)
            }
            ModelKind::Osumm => SummarySpec::ordinal(u.clone(), self.lookback),
        }
    }

    pub fn candidate_pool(&self, dataset: &EventDataset, target: &TargetVariable) -> Result<LabelSet> {
        let full = dataset.alphabet().full_set();
        let pool = match &self.pool {
            Some(p) => {
                if !p.is_subset(&full) {
                    return Err(SummError::Input("candidate pool contains labels outside the alphabet".into()));
                }
                p.clone()
            }
            None => full,
        };
        Ok(if self.exclude_targets {
            LabelSet::from_ids(pool.ids().iter().copied().filter(|&l| !target.targets().contains(l)))
        } else {
            pool
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchPhase {
    Initial,
    Forward,
    Backward,
}

/// One scored candidate during search.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceStep {
    pub phase: SearchPhase,
    pub sweep: usize,
    pub candidate: Option<LabelId>,
    pub set: LabelSet,
    pub score: f64,
    pub accepted: bool,
}

/// A fitted summary Markov model for one target variable.
#[derive(Clone, Debug)]
pub struct SummModel {
    pub alphabet: Alphabet,
    pub target: TargetVariable,
    pub influencers: LabelSet,
    pub spec: SummarySpec,
    pub stats: SummaryStatistics,
    pub params: ParameterTable,
    pub score: ScoreReport,
    pub trace: Vec<TraceStep>,
}

impl SummModel {
    /// Fit parameters for a fixed summary spec.
    pub fn fit(
        dataset: &EventDataset,
        target: &TargetVariable,
        spec: SummarySpec,
        alpha: f64,
        gamma: f64,
    ) -> Result<SummModel> {
        let ScoredFit {
            stats,
            params,
            report,
        } = compute_score(dataset, target, &spec, alpha, gamma)?;
        Ok(SummModel {
            alphabet: dataset.alphabet().clone(),
            target: target.clone(),
            influencers: spec.influencers(),
            spec,
            stats,
            params,
            score: report,
            trace: Vec::new(),
        })
    }
}

fn require_events(dataset: &EventDataset) -> Result<()> {
    if dataset.total_events() == 0 {
        return Err(SummError::Input("dataset has no events".into()));
    }
    Ok(())
}

fn score_set(
    dataset: &EventDataset,
    target: &TargetVariable,
    config: &SearchConfig,
    u: &LabelSet,
) -> Result<f64> {
    let spec = config.spec_for(u)?;
    compute_score(dataset, target, &spec, config.alpha, config.gamma)
        .map(|f| f.report.score)
        .map_err(|e| e.context(format!("scoring candidate set {:?}", u.names(dataset.alphabet()))))
}

/// Greedy influencer search: one forward sweep adding labels, then one
/// backward sweep removing them, each accepting on strict improvement.
///
/// Each sweep iterates a snapshot of its candidate labels in canonical
/// order. See [`InitialIncumbent`] for the starting score.
pub fn influencer_search(
    dataset: &EventDataset,
    target: &TargetVariable,
    config: &SearchConfig,
) -> Result<SummModel> {
    config.validate()?;
    require_events(dataset)?;
    let pool = config.candidate_pool(dataset, target)?;

    let mut current = LabelSet::empty();
    let mut trace = Vec::new();
    let mut best = match config.initial {
        InitialIncumbent::NegativeInfinity => f64::NEG_INFINITY,
        InitialIncumbent::EmptySet => {
            let s = score_set(dataset, target, config, &current)?;
            trace.push(TraceStep {
                phase: SearchPhase::Initial,
                sweep: 0,
                candidate: None,
                set: current.clone(),
                score: s,
                accepted: true,
            });
            s
        }
    };

    let mut sweep = 0;
    loop {
        let before = current.clone();

        let forward: Vec<LabelId> = pool.ids().iter().copied().filter(|&l| !current.contains(l)).collect();
        for e in forward {
            let cand = current.with(e);
            let s = score_set(dataset, target, config, &cand)?;
            let accepted = s > best;
            trace.push(TraceStep {
                phase: SearchPhase::Forward,
                sweep,
                candidate: Some(e),
                set: cand.clone(),
                score: s,
                accepted,
            });
            if accepted {
                best = s;
                current = cand;
            }
        }

        let backward: Vec<LabelId> = current.ids().to_vec();
        for e in backward {
            let cand = current.without(e);
            let s = score_set(dataset, target, config, &cand)?;
            let accepted = s > best;
            trace.push(TraceStep {
                phase: SearchPhase::Backward,
                sweep,
                candidate: Some(e),
                set: cand.clone(),
                score: s,
                accepted,
            });
            if accepted {
                best = s;
                current = cand;
            }
        }

        sweep += 1;
        if !config.repeat_until_stable || current == before {
            break;
        }
    }

    let spec = config.spec_for(&current)?;
    let mut model = SummModel::fit(dataset, target, spec, config.alpha, config.gamma)?;
    model.trace = trace;
    Ok(model)
}

/// Default ceiling on the pool size for [`exhaustive_search`].
pub const DEFAULT_EXHAUSTIVE_POOL: usize = 6;

/// Score every subset of the pool and return the best one. Ties go to the
/// smaller set, then to the lexicographically first in canonical order.
pub fn exhaustive_search(
    dataset: &EventDataset,
    target: &TargetVariable,
    config: &SearchConfig,
    max_pool: usize,
) -> Result<SummModel> {
    config.validate()?;
    require_events(dataset)?;
    let pool = config.candidate_pool(dataset, target)?;
    if pool.len() > max_pool {
        return Err(SummError::sizing(
            "exhaustive search pool",
            format!("{} labels exceeds the limit of {max_pool}", pool.len()),
        ));
    }
    let ids = pool.ids();
    let mut subsets: Vec<LabelSet> = (0u64..1 << ids.len())
        .map(|mask| LabelSet::from_ids((0..ids.len()).filter(|r| mask >> r & 1 == 1).map(|r| ids[r])))
        .collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.ids().cmp(b.ids())));

    let mut best: Option<(f64, LabelSet)> = None;
    for u in subsets {
        let s = score_set(dataset, target, config, &u)?;
        if best.as_ref().is_none_or(|(b, _)| s > *b) {
            best = Some((s, u));
        }
    }
    let (_, u) = best.expect("at least the empty subset is scored");
    let spec = config.spec_for(&u)?;
    SummModel::fit(dataset, target, spec, config.alpha, config.gamma)
}

/// F1 between estimated and true influencer sets. Both empty scores 1.
pub fn set_f1(estimated: &LabelSet, truth: &LabelSet) -> f64 {
    if estimated.is_empty() && truth.is_empty() {
        return 1.0;
    }
    if estimated.is_empty() || truth.is_empty() {
        return 0.0;
    }
    let tp = estimated.ids().iter().filter(|&&l| truth.contains(l)).count() as f64;
    if tp == 0.0 {
        return 0.0;
    }
    let precision = tp / estimated.len() as f64;
    let recall = tp / truth.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

//! Summary statistics, Dirichlet-smoothed estimates, log likelihood and BIC.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SummError};
use crate::sequence::{EventDataset, TargetState, TargetVariable};
use crate::summary::{domain_size, SummaryKey, Summarizer, SummarySpec};

/// Counts N(x;s) keyed by summary state, with N(s) derivable per row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SummaryStatistics {
    n_states: usize,
    counts: BTreeMap<SummaryKey, Vec<u64>>,
    total: u64,
}

impl SummaryStatistics {
    pub fn new(n_states: usize) -> Self {
        SummaryStatistics {
            n_states,
            counts: BTreeMap::new(),
            total: 0,
        }
    }

    #[inline]
    pub fn record(&mut self, key: SummaryKey, state: usize) {
        let n = self.n_states;
        self.counts.entry(key).or_insert_with(|| vec![0; n])[state] += 1;
        self.total += 1;
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Number of positions counted.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, key: SummaryKey, state: TargetState) -> u64 {
        self.counts
            .get(&key)
            .map_or(0, |row| row[state.0 as usize])
    }

    /// N(s).
    pub fn marginal(&self, key: SummaryKey) -> u64 {
        self.counts.get(&key).map_or(0, |row| row.iter().sum())
    }

    /// Observed summary states with their per-state counts, in key order.
    pub fn rows(&self) -> impl Iterator<Item = (SummaryKey, &[u64])> {
        self.counts.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    /// Count-wise addition; counts form a commutative monoid.
    pub fn merge(&mut self, other: &SummaryStatistics) -> Result<()> {
        if other.n_states != self.n_states {
            return Err(SummError::Internal(format!(
                "cannot merge statistics with {} and {} target states",
                self.n_states, other.n_states
            )));
        }
        for (k, row) in &other.counts {
            let mine = self.counts.entry(*k).or_insert_with(|| vec![0; row.len()]);
            for (a, b) in mine.iter_mut().zip(row) {
                *a += b;
            }
        }
        self.total += other.total;
        Ok(())
    }
}

/// Count N(x;s) over every position of every sequence, including the
/// first position under its empty-history summary.
pub fn count_statistics(
    dataset: &EventDataset,
    target: &TargetVariable,
    spec: &SummarySpec,
) -> Result<SummaryStatistics> {
    let m = dataset.alphabet().len();
    if target.alphabet_size() != m {
        return Err(SummError::Input(format!(
            "target variable built for {} labels but the dataset has {m}",
            target.alphabet_size()
        )));
    }
    let mut summarizer = Summarizer::new(spec, m)?;
    let mut stats = SummaryStatistics::new(target.n_states());
    for seq in dataset.sequences() {
        let events = &seq.events;
        summarizer.scan(events, |i, key| {
            stats.record(key, target.state_index(events[i - 1]));
        });
    }
    Ok(stats)
}

/// Bayesian estimates θ̂_{x|s} = (α + N(x;s)) / (|states|·α + N(s)).
///
/// Rows exist for observed summary states; every other state of the
/// domain takes the prior estimate 1/|states|.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterTable {
    alpha: f64,
    n_states: usize,
    rows: BTreeMap<SummaryKey, Vec<f64>>,
    uniform: Vec<f64>,
}

impl ParameterTable {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Distribution over target states for summary `key`.
    pub fn row(&self, key: SummaryKey) -> &[f64] {
        self.rows.get(&key).unwrap_or(&self.uniform)
    }

    pub fn theta(&self, key: SummaryKey, state: TargetState) -> f64 {
        self.row(key)[state.0 as usize]
    }

    /// Rows estimated from data (i.e. excluding pure-prior states).
    pub fn fitted_rows(&self) -> impl Iterator<Item = (SummaryKey, &[f64])> {
        self.rows.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    /// Estimate shared by all states never seen in training.
    pub fn prior_row(&self) -> &[f64] {
        &self.uniform
    }
}

pub fn estimate_parameters(stats: &SummaryStatistics, alpha: f64) -> Result<ParameterTable> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(SummError::Input(format!("prior strength must be positive and finite, got {alpha}")));
    }
    let n = stats.n_states();
    let alpha_s = n as f64 * alpha;
    let rows = stats
        .rows()
        .map(|(k, counts)| {
            let total: u64 = counts.iter().sum();
            let denom = alpha_s + total as f64;
            (k, counts.iter().map(|&c| (alpha + c as f64) / denom).collect())
        })
        .collect();
    Ok(ParameterTable {
        alpha,
        n_states: n,
        rows,
        uniform: vec![1.0 / n as f64; n],
    })
}

/// LL = Σ_x Σ_s N(x;s) · ln θ_{x|s}.
pub fn log_likelihood(stats: &SummaryStatistics, params: &ParameterTable) -> Result<f64> {
    if stats.n_states() != params.n_states() {
        return Err(SummError::Internal(format!(
            "statistics have {} target states but parameters have {}",
            stats.n_states(),
            params.n_states()
        )));
    }
    let mut ll = 0.0;
    for (key, counts) in stats.rows() {
        let row = params.row(key);
        for (&c, &p) in counts.iter().zip(row) {
            if c > 0 {
                if p.is_nan() || p <= 0.0 {
                    return Err(SummError::Internal(format!(
                        "zero probability for a counted cell at summary key {}",
                        key.0
                    )));
                }
                ll += c as f64 * p.ln();
            }
        }
    }
    Ok(ll)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub log_likelihood: f64,
    pub free_parameters: u64,
    pub gamma: f64,
    pub n_events: u64,
    pub score: f64,
}

/// Score = LL* − γ·|P|·ln(N)/2 with |P| = (|states| − 1)·|Σ_U|.
pub fn bic_score(
    stats: &SummaryStatistics,
    params: &ParameterTable,
    spec: &SummarySpec,
    target: &TargetVariable,
    gamma: f64,
    n_events: u64,
) -> Result<ScoreReport> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(SummError::Input(format!("penalty weight must be positive, got {gamma}")));
    }
    if n_events == 0 {
        return Err(SummError::Input("BIC needs at least one event".into()));
    }
    let free_parameters = free_parameter_count(spec, target)?;
    let log_likelihood = log_likelihood(stats, params)?;
    let score = log_likelihood - gamma * free_parameters as f64 * (n_events as f64).ln() / 2.0;
    Ok(ScoreReport {
        log_likelihood,
        free_parameters,
        gamma,
        n_events,
        score,
    })
}

pub fn free_parameter_count(spec: &SummarySpec, target: &TargetVariable) -> Result<u64> {
    let dom = domain_size(spec)?;
    (target.n_states() as u64 - 1)
        .checked_mul(dom)
        .ok_or_else(|| SummError::sizing("free parameter count", format!("{} × {dom}", target.n_states() - 1)))
}

/// Output of one ComputeScore call.
#[derive(Clone, Debug)]
pub struct ScoredFit {
    pub stats: SummaryStatistics,
    pub params: ParameterTable,
    pub report: ScoreReport,
}

/// Count, estimate and score one candidate summary spec.
pub fn compute_score(
    dataset: &EventDataset,
    target: &TargetVariable,
    spec: &SummarySpec,
    alpha: f64,
    gamma: f64,
) -> Result<ScoredFit> {
    let stats = count_statistics(dataset, target, spec)?;
    let params = estimate_parameters(&stats, alpha)?;
    let report = bic_score(&stats, &params, spec, target, gamma, dataset.total_events() as u64)?;
    Ok(ScoredFit {
        stats,
        params,
        report,
    })
}

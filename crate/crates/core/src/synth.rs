//! Sampling event sequences from binary-summary dynamics, and the
//! influencer-recovery experiment built on it.
//!
//! Every label's next-position probability is a function of one joint
//! presence configuration over a conditioning set W (the union of all
//! labels' influencers), each member with its own look-back.
//!
//! # Random numbers
//!
//! Sampling uses ChaCha with 8 rounds (`rand_chacha::ChaCha8Rng`), seeded
//! with `seed_from_u64(seed)` and switched to stream `stream` via
//! `set_stream`. One draw per position: `u = (next_u64() >> 11) * 2^-53`,
//! and the label is the first one in alphabet order whose cumulative
//! probability exceeds `u`. Other implementations reproduce datasets
//! bit-exactly by following the same recipe.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SummError};
use crate::search::{influencer_search, set_f1, SearchConfig};
use crate::sequence::{Alphabet, EventDataset, LabelId, LabelSet, Lookback, Sequence, TargetVariable};

const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct GenerativeSpec {
    alphabet: Alphabet,
    /// Conditioning labels in canonical order with their look-backs.
    conditioning: Vec<(LabelId, Lookback)>,
    /// `table[mask][label]`; bit `r` of `mask` is conditioning label `r` present.
    table: Vec<Vec<f64>>,
    pub length: usize,
    pub sequences: usize,
    pub seed: u64,
}

impl GenerativeSpec {
    pub fn new(
        alphabet: Alphabet,
        mut conditioning: Vec<(LabelId, Lookback)>,
        table: Vec<Vec<f64>>,
        length: usize,
        sequences: usize,
        seed: u64,
    ) -> Result<Self> {
        let m = alphabet.len();
        if length == 0 {
            return Err(SummError::Input("sequence length must be at least 1".into()));
        }
        conditioning.sort_by_key(|c| c.0);
        if conditioning.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(SummError::Input("conditioning labels must be distinct".into()));
        }
        if conditioning.len() > 20 {
            return Err(SummError::sizing(
                "conditioning set",
                format!("{} labels (max 20)", conditioning.len()),
            ));
        }
        for (l, lb) in &conditioning {
            if l.index() >= m {
                return Err(SummError::Input(format!("conditioning label id {} not in alphabet", l.0)));
            }
            lb.validate()?;
        }
        if table.len() != 1 << conditioning.len() {
            return Err(SummError::Input(format!(
                "expected {} configurations, got {}",
                1usize << conditioning.len(),
                table.len()
            )));
        }
        for (mask, row) in table.iter().enumerate() {
            if row.len() != m {
                return Err(SummError::Input(format!("configuration {mask} has {} probabilities for {m} labels", row.len())));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(SummError::Input(format!("configuration {mask} has a probability outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > SUM_TOLERANCE {
                return Err(SummError::Input(format!("configuration {mask} probabilities sum to {s}")));
            }
        }
        Ok(GenerativeSpec {
            alphabet,
            conditioning,
            table,
            length,
            sequences,
            seed,
        })
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn conditioning(&self) -> &[(LabelId, Lookback)] {
        &self.conditioning
    }

    /// Distribution over the alphabet for a presence configuration.
    pub fn distribution(&self, mask: usize) -> &[f64] {
        &self.table[mask]
    }

    pub fn with_size(&self, sequences: usize, length: usize, seed: u64) -> GenerativeSpec {
        GenerativeSpec {
            sequences,
            length,
            seed,
            ..self.clone()
        }
    }

    /// Labels whose presence changes `label`'s probability for some
    /// configuration of the others. This is the unique minimal influencing
    /// set of the label under binary summaries with these look-backs.
    pub fn minimal_influencers(&self, label: LabelId) -> LabelSet {
        let x = label.index();
        LabelSet::from_ids(
            self.conditioning
                .iter()
                .enumerate()
                .filter(|(r, _)| {
                    (0..self.table.len())
                        .filter(|mask| mask >> r & 1 == 0)
                        .any(|mask| (self.table[mask][x] - self.table[mask | 1 << r][x]).abs() > 1e-12)
                })
                .map(|(_, (l, _))| *l),
        )
    }

    pub fn generate(&self) -> EventDataset {
        self.generate_stream(0)
    }

    /// Sample `sequences` sequences of `length` events on ChaCha stream `stream`.
    pub fn generate_stream(&self, stream: u64) -> EventDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        let m = self.alphabet.len();
        let mut rank_of = vec![usize::MAX; m];
        for (r, (l, _)) in self.conditioning.iter().enumerate() {
            rank_of[l.index()] = r;
        }
        let width = self.sequences.to_string().len();
        let sequences = (0..self.sequences)
            .map(|k| {
                let mut last = vec![0usize; self.conditioning.len()];
                let mut events = Vec::with_capacity(self.length);
                for i in 1..=self.length {
                    let mut mask = 0usize;
                    for (r, &p) in last.iter().enumerate() {
                        if p > 0 && p >= self.conditioning[r].1.window_start(i) {
                            mask |= 1 << r;
                        }
                    }
                    let label = draw(&mut rng, &self.table[mask]);
                    let r = rank_of[label];
                    if r != usize::MAX {
                        last[r] = i;
                    }
                    events.push(LabelId(label as u32));
                }
                Sequence {
                    id: format!("s{:0width$}", k + 1),
                    events,
                }
            })
            .collect();
        EventDataset::new(self.alphabet.clone(), sequences).expect("generated labels are in the alphabet")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SpecDocument = serde_json::from_str(text).map_err(|e| SummError::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        doc.into_spec()
    }

    pub fn to_json(&self) -> String {
        let doc = SpecDocument::from_spec(self);
        serde_json::to_string_pretty(&doc).expect("spec document serializes")
    }
}

fn draw(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    let mut cum = 0.0;
    let mut fallback = 0;
    for (l, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            cum += p;
            fallback = l;
            if u < cum {
                return l;
            }
        }
    }
    fallback
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConditioningEntry {
    label: String,
    lookback: Lookback,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableEntry {
    present: Vec<String>,
    probs: BTreeMap<String, f64>,
}

/// JSON form of a [`GenerativeSpec`].
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecDocument {
    alphabet: Vec<String>,
    conditioning: Vec<ConditioningEntry>,
    table: Vec<TableEntry>,
    #[serde(default = "default_length")]
    length: usize,
    #[serde(default = "default_sequences")]
    sequences: usize,
    #[serde(default)]
    seed: u64,
}

fn default_length() -> usize {
    10
}

fn default_sequences() -> usize {
    1000
}

impl SpecDocument {
    fn into_spec(self) -> Result<GenerativeSpec> {
        let alphabet = Alphabet::new(self.alphabet)?;
        let conditioning = self
            .conditioning
            .iter()
            .map(|c| Ok((alphabet.require(&c.label)?, c.lookback)))
            .collect::<Result<Vec<_>>>()?;
        let mut sorted = conditioning.clone();
        sorted.sort_by_key(|c| c.0);
        if sorted.len() > 20 {
            return Err(SummError::sizing("conditioning set", format!("{} labels (max 20)", sorted.len())));
        }
        let n = 1usize << sorted.len();
        let mut table: Vec<Option<Vec<f64>>> = vec![None; n];
        for entry in self.table {
            let mut mask = 0usize;
            for l in &entry.present {
                let id = alphabet.require(l)?;
                let r = sorted
                    .iter()
                    .position(|c| c.0 == id)
                    .ok_or_else(|| SummError::Input(format!("{l:?} is not a conditioning label")))?;
                if mask >> r & 1 == 1 {
                    return Err(SummError::Input(format!("{l:?} listed twice in a configuration")));
                }
                mask |= 1 << r;
            }
            let mut row = vec![0.0; alphabet.len()];
            for (l, p) in entry.probs {
                row[alphabet.require(&l)?.index()] = p;
            }
            if table[mask].replace(row).is_some() {
                return Err(SummError::Input(format!("configuration {:?} given twice", entry.present)));
            }
        }
        let table = table
            .into_iter()
            .enumerate()
            .map(|(mask, row)| row.ok_or_else(|| SummError::Input(format!("configuration {mask} is missing"))))
            .collect::<Result<Vec<_>>>()?;
        GenerativeSpec::new(alphabet, conditioning, table, self.length, self.sequences, self.seed)
    }

    fn from_spec(spec: &GenerativeSpec) -> Self {
        let a = &spec.alphabet;
        SpecDocument {
            alphabet: a.labels().to_vec(),
            conditioning: spec
                .conditioning
                .iter()
                .map(|(l, lb)| ConditioningEntry {
                    label: a.name(*l).to_string(),
                    lookback: *lb,
                })
                .collect(),
            table: spec
                .table
                .iter()
                .enumerate()
                .map(|(mask, row)| TableEntry {
                    present: spec
                        .conditioning
                        .iter()
                        .enumerate()
                        .filter(|(r, _)| mask >> r & 1 == 1)
                        .map(|(_, (l, _))| a.name(*l).to_string())
                        .collect(),
                    probs: row
                        .iter()
                        .enumerate()
                        .filter(|(_, &p)| p > 0.0)
                        .map(|(l, &p)| (a.labels()[l].clone(), p))
                        .collect(),
                })
                .collect(),
            length: spec.length,
            sequences: spec.sequences,
            seed: spec.seed,
        }
    }
}

/// Five-label dynamics: A and B depend on whether B and C occurred in the
/// previous 3 positions; C, D, E occur with fixed probabilities.
pub fn builtin_b1_spec() -> GenerativeSpec {
    let alphabet = Alphabet::new(["A", "B", "C", "D", "E"]).expect("static alphabet");
    let b = LabelId(1);
    let c = LabelId(2);
    // mask bit 0 = B present, bit 1 = C present
    let ab = [
        (0.3, 0.1),   // neither
        (0.35, 0.05), // B only
        (0.1, 0.3),   // C only
        (0.2, 0.2),   // both
    ];
    let table = ab
        .iter()
        .map(|&(pa, pb)| vec![pa, pb, 0.3, 0.2, 0.1])
        .collect();
    GenerativeSpec::new(
        alphabet,
        vec![(b, Lookback::Bounded(3)), (c, Lookback::Bounded(3))],
        table,
        10,
        1000,
        0,
    )
    .expect("built-in spec is valid")
}

/// Search settings used by the recovery experiment.
pub fn b1_search_config() -> SearchConfig {
    SearchConfig {
        lookback: Lookback::Bounded(3),
        alpha: 0.1,
        gamma: 1.0,
        ..SearchConfig::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub k: usize,
    pub mean_f1: f64,
    pub std_error: f64,
    pub f1: Vec<f64>,
    pub estimated: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub schema_version: String,
    pub target: String,
    pub truth: Vec<String>,
    pub runs: usize,
    pub seed: u64,
    pub length: usize,
    pub rows: Vec<RecoveryRow>,
}

/// For each K and run: generate K sequences, search the target's
/// influencers and score them against the spec's ground truth.
///
/// Run `r` uses seed `spec.seed + r` on ChaCha stream `K`, so each K value
/// draws from its own streams.
pub fn recovery_experiment(
    spec: &GenerativeSpec,
    target: &str,
    ks: &[usize],
    runs: usize,
    config: &SearchConfig,
) -> Result<RecoveryReport> {
    if runs == 0 {
        return Err(SummError::Input("at least one run is required".into()));
    }
    let alphabet = spec.alphabet();
    let target_id = alphabet.require(target)?;
    let truth = spec.minimal_influencers(target_id);
    let x = TargetVariable::single(alphabet, target)?;
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let per_run = (0..runs)
            .into_par_iter()
            .map(|r| {
                let data = spec
                    .with_size(k, spec.length, spec.seed.wrapping_add(r as u64))
                    .generate_stream(k as u64);
                influencer_search(&data, &x, config)
                    .map(|m| m.influencers)
                    .map_err(|e| e.context(format!("K={k}, run {r}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let f1: Vec<f64> = per_run.iter().map(|u| set_f1(u, &truth)).collect();
        let mean = f1.iter().sum::<f64>() / runs as f64;
        let std_error = if runs > 1 {
            let var = f1.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
            (var / runs as f64).sqrt()
        } else {
            0.0
        };
        rows.push(RecoveryRow {
            k,
            mean_f1: mean,
            std_error,
            f1,
            estimated: per_run
                .iter()
                .map(|u| u.names(alphabet).into_iter().map(String::from).collect())
                .collect(),
        });
    }
    Ok(RecoveryReport {
        schema_version: crate::SCHEMA_VERSION.into(),
        target: target.to_string(),
        truth: truth.names(alphabet).into_iter().map(String::from).collect(),
        runs,
        seed: spec.seed,
        length: spec.length,
        rows,
    })
}

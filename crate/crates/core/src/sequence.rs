//! Alphabets, event sequences, restricted histories and target variables.
//!
//! Positions are 1-based throughout: position `i` of a sequence is
//! `events[i - 1]`. A look-back of `k` at position `i` covers positions
//! `max(1, i - k) ..= i - 1`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SummError};

/// Dense label identifier; the index of the label in its [`Alphabet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LabelId(pub u32);

impl LabelId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Ordered set of distinct label strings. The order is canonical: it fixes
/// summary-state keying, search iteration order and bit order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alphabet {
    labels: Vec<String>,
    index: HashMap<String, LabelId>,
}

impl Alphabet {
    /// Build an alphabet keeping the given order.
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(SummError::Input("alphabet must contain at least one label".into()));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() {
                return Err(SummError::Input("labels must be non-empty strings".into()));
            }
            if index.insert(l.clone(), LabelId(i as u32)).is_some() {
                return Err(SummError::Input(format!("duplicate label {l:?} in alphabet")));
            }
        }
        Ok(Alphabet { labels, index })
    }

    /// Build an alphabet from observed labels, sorted by byte order.
    pub fn sorted<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = labels.into_iter().map(Into::into).collect();
        Alphabet::new(set)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn ids(&self) -> impl Iterator<Item = LabelId> + '_ {
        (0..self.labels.len() as u32).map(LabelId)
    }

    pub fn id(&self, label: &str) -> Option<LabelId> {
        self.index.get(label).copied()
    }

    pub fn require(&self, label: &str) -> Result<LabelId> {
        self.id(label)
            .ok_or_else(|| SummError::Input(format!("label {label:?} is not in the alphabet")))
    }

    pub fn name(&self, id: LabelId) -> &str {
        &self.labels[id.index()]
    }

    pub fn label_set<S: AsRef<str>>(&self, labels: &[S]) -> Result<LabelSet> {
        labels
            .iter()
            .map(|l| self.require(l.as_ref()))
            .collect::<Result<Vec<_>>>()
            .map(LabelSet::from_ids)
    }

    pub fn full_set(&self) -> LabelSet {
        LabelSet(self.ids().collect())
    }
}

/// Set of labels kept sorted by canonical order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelSet(Vec<LabelId>);

impl LabelSet {
    pub fn empty() -> Self {
        LabelSet(Vec::new())
    }

    pub fn from_ids<I: IntoIterator<Item = LabelId>>(ids: I) -> Self {
        let mut v: Vec<LabelId> = ids.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        LabelSet(v)
    }

    pub fn ids(&self) -> &[LabelId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: LabelId) -> bool {
        self.0.binary_search(&id).is_ok()
    }

    /// Position of `id` within the set, i.e. its bit index in binary summaries.
    pub fn rank(&self, id: LabelId) -> Option<usize> {
        self.0.binary_search(&id).ok()
    }

    pub fn with(&self, id: LabelId) -> LabelSet {
        let mut v = self.0.clone();
        if let Err(pos) = v.binary_search(&id) {
            v.insert(pos, id);
        }
        LabelSet(v)
    }

    pub fn without(&self, id: LabelId) -> LabelSet {
        LabelSet(self.0.iter().copied().filter(|&x| x != id).collect())
    }

    pub fn union(&self, other: &LabelSet) -> LabelSet {
        LabelSet::from_ids(self.0.iter().chain(other.0.iter()).copied())
    }

    pub fn is_subset(&self, other: &LabelSet) -> bool {
        self.0.iter().all(|&x| other.contains(x))
    }

    pub fn names<'a>(&self, alphabet: &'a Alphabet) -> Vec<&'a str> {
        self.0.iter().map(|&id| alphabet.name(id)).collect()
    }

    /// Membership vector of length `m`.
    pub fn mask(&self, m: usize) -> Vec<bool> {
        let mut mask = vec![false; m];
        for id in &self.0 {
            if id.index() < m {
                mask[id.index()] = true;
            }
        }
        mask
    }
}

/// Number of preceding positions a summary may inspect.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Lookback {
    Bounded(usize),
    Unbounded,
}

impl Lookback {
    /// First position (1-based) inside the window at position `i`.
    #[inline]
    pub fn window_start(self, i: usize) -> usize {
        match self {
            Lookback::Bounded(k) => i.saturating_sub(k).max(1),
            Lookback::Unbounded => 1,
        }
    }

    pub fn validate(self) -> Result<Self> {
        match self {
            Lookback::Bounded(0) => Err(SummError::Input("look-back must be at least 1".into())),
            lb => Ok(lb),
        }
    }
}

impl fmt::Display for Lookback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lookback::Bounded(k) => write!(f, "{k}"),
            Lookback::Unbounded => f.write_str("unbounded"),
        }
    }
}

impl FromStr for Lookback {
    type Err = SummError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "unbounded" | "all" => Ok(Lookback::Unbounded),
            t => t
                .parse::<usize>()
                .map_err(|_| SummError::Input(format!("invalid look-back {s:?}")))
                .and_then(|k| Lookback::Bounded(k).validate()),
        }
    }
}

impl Serialize for Lookback {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Lookback::Bounded(k) => s.serialize_u64(*k as u64),
            Lookback::Unbounded => s.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for Lookback {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v: Option<u64> = Option::deserialize(d)?;
        match v {
            None => Ok(Lookback::Unbounded),
            Some(0) => Err(serde::de::Error::custom("look-back must be at least 1")),
            Some(k) => Ok(Lookback::Bounded(k as usize)),
        }
    }
}

/// One sequence of labeled events; positions are implicit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sequence {
    pub id: String,
    pub events: Vec<LabelId>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Label at 1-based position `i`.
    pub fn at(&self, i: usize) -> LabelId {
        self.events[i - 1]
    }
}

/// A multiset of event sequences over one alphabet.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventDataset {
    alphabet: Alphabet,
    sequences: Vec<Sequence>,
}

impl EventDataset {
    pub fn new(alphabet: Alphabet, sequences: Vec<Sequence>) -> Result<Self> {
        let m = alphabet.len();
        for s in &sequences {
            if let Some(bad) = s.events.iter().find(|l| l.index() >= m) {
                return Err(SummError::Data(format!(
                    "sequence {:?} holds label id {} outside an alphabet of size {m}",
                    s.id, bad.0
                )));
            }
        }
        Ok(EventDataset { alphabet, sequences })
    }

    /// Build from label strings with the sorted alphabet of observed labels.
    /// Sequence ids are `s1`, `s2`, ...
    pub fn from_labels<S: AsRef<str>>(sequences: &[Vec<S>]) -> Result<Self> {
        let alphabet = Alphabet::sorted(
            sequences
                .iter()
                .flat_map(|s| s.iter().map(|l| l.as_ref().to_string())),
        )?;
        Self::from_labels_with(alphabet, sequences)
    }

    pub fn from_labels_with<S: AsRef<str>>(alphabet: Alphabet, sequences: &[Vec<S>]) -> Result<Self> {
        let seqs = sequences
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let events = s
                    .iter()
                    .map(|l| alphabet.require(l.as_ref()))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Sequence {
                    id: format!("s{}", k + 1),
                    events,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        EventDataset::new(alphabet, seqs)
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn sequences(&self) -> &[Sequence] {
        &self.sequences
    }

    pub fn into_parts(self) -> (Alphabet, Vec<Sequence>) {
        (self.alphabet, self.sequences)
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Total event count N.
    pub fn total_events(&self) -> usize {
        self.sequences.iter().map(Sequence::len).sum()
    }

    /// Concatenate the sequences of two datasets over the same alphabet.
    pub fn concat(&self, other: &EventDataset) -> Result<EventDataset> {
        if self.alphabet != other.alphabet {
            return Err(SummError::Data("cannot merge datasets over different alphabets".into()));
        }
        let mut seqs = self.sequences.clone();
        seqs.extend(other.sequences.iter().cloned());
        EventDataset::new(self.alphabet.clone(), seqs)
    }

    /// Re-express the dataset over another alphabet by label name.
    pub fn reindex(&self, target: &Alphabet) -> Result<EventDataset> {
        if &self.alphabet == target {
            return Ok(self.clone());
        }
        let map = self
            .alphabet
            .labels()
            .iter()
            .map(|l| target.id(l))
            .collect::<Vec<_>>();
        let mut seqs = Vec::with_capacity(self.sequences.len());
        for s in &self.sequences {
            let mut events = Vec::with_capacity(s.len());
            for &e in &s.events {
                match map[e.index()] {
                    Some(id) => events.push(id),
                    None => {
                        return Err(SummError::Data(format!(
                            "label {:?} in sequence {:?} is not in the model alphabet",
                            self.alphabet.name(e),
                            s.id
                        )))
                    }
                }
            }
            seqs.push(Sequence {
                id: s.id.clone(),
                events,
            });
        }
        EventDataset::new(target.clone(), seqs)
    }
}

/// Prior events of a sequence restricted to a label set and a window.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HistoryWindow {
    pub events: Vec<(usize, LabelId)>,
}

impl HistoryWindow {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn restrict(&self, z: &LabelSet) -> HistoryWindow {
        HistoryWindow {
            events: self.events.iter().copied().filter(|(_, l)| z.contains(*l)).collect(),
        }
    }
}

/// Events at positions `max(1, i - k) ..= i - 1` whose labels are in `z`.
pub fn restrict_history(
    events: &[LabelId],
    i: usize,
    z: &LabelSet,
    lookback: Lookback,
) -> Result<HistoryWindow> {
    if i == 0 || i > events.len() + 1 {
        return Err(SummError::Input(format!(
            "position {i} outside 1..={} for a sequence of length {}",
            events.len() + 1,
            events.len()
        )));
    }
    let lookback = lookback.validate()?;
    let start = lookback.window_start(i);
    let events = (start..i)
        .map(|j| (j, events[j - 1]))
        .filter(|(_, l)| z.contains(*l))
        .collect();
    Ok(HistoryWindow { events })
}

/// Index of a target-variable state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TargetState(pub u32);

/// Categorical variable with one state per target label, plus a single
/// OTHER state when the targets do not cover the alphabet.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TargetVariable {
    targets: LabelSet,
    state_of_label: Vec<TargetState>,
    n_states: usize,
    has_other: bool,
}

impl TargetVariable {
    pub fn new(alphabet: &Alphabet, targets: LabelSet) -> Result<Self> {
        let m = alphabet.len();
        if targets.is_empty() {
            return Err(SummError::Input("target label set must not be empty".into()));
        }
        if let Some(bad) = targets.ids().iter().find(|l| l.index() >= m) {
            return Err(SummError::Input(format!("target label id {} not in alphabet", bad.0)));
        }
        let has_other = targets.len() < m;
        let other = TargetState(targets.len() as u32);
        let state_of_label = alphabet
            .ids()
            .map(|l| targets.rank(l).map(|r| TargetState(r as u32)).unwrap_or(other))
            .collect();
        Ok(TargetVariable {
            n_states: targets.len() + usize::from(has_other),
            targets,
            state_of_label,
            has_other,
        })
    }

    pub fn single(alphabet: &Alphabet, label: &str) -> Result<Self> {
        TargetVariable::new(alphabet, alphabet.label_set(&[label])?)
    }

    pub fn targets(&self) -> &LabelSet {
        &self.targets
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn has_other(&self) -> bool {
        self.has_other
    }

    pub fn alphabet_size(&self) -> usize {
        self.state_of_label.len()
    }

    pub fn state_of(&self, label: LabelId) -> Result<TargetState> {
        self.state_of_label
            .get(label.index())
            .copied()
            .ok_or_else(|| SummError::Input(format!("label id {} is not in the alphabet", label.0)))
    }

    #[inline]
    pub(crate) fn state_index(&self, label: LabelId) -> usize {
        self.state_of_label[label.index()].0 as usize
    }

    /// State for a target label; `None` if the label is not a target.
    pub fn state_for_target(&self, label: LabelId) -> Option<TargetState> {
        self.targets.rank(label).map(|r| TargetState(r as u32))
    }

    pub fn other_state(&self) -> Option<TargetState> {
        self.has_other.then(|| TargetState(self.targets.len() as u32))
    }

    pub fn state_names(&self, alphabet: &Alphabet) -> Vec<String> {
        let mut names: Vec<String> = self
            .targets
            .ids()
            .iter()
            .map(|&l| alphabet.name(l).to_string())
            .collect();
        if self.has_other {
            names.push("OTHER".to_string());
        }
        names
    }
}

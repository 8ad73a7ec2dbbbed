//! Summary functions mapping a restricted history to a discrete state.
//!
//! Three kinds are provided:
//! - binary: presence of each influencing label inside its own look-back window,
//! - ordinal: the order of last occurrences of influencing labels inside one window,
//! - k-gram: the raw labels of the previous `k` positions, padded with a boundary symbol.
//!
//! [`summarize`] is the reference definition working from [`restrict_history`].
//! [`Summarizer`] produces the same states incrementally from last-occurrence
//! positions and is what counting uses.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SummError};
use crate::sequence::{restrict_history, Alphabet, HistoryWindow, LabelId, LabelSet, Lookback};

/// Default ceiling on the number of states [`enumerate_domain`] will materialize.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1 << 20;

/// Boundary symbol used when a k-gram slot precedes the sequence start.
pub const BOUNDARY: &str = "⊥";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SummaryKind {
    Binary,
    Ordinal,
    Kgram,
}

/// De-duplication rule applied to an ordinal window.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Masking {
    #[default]
    KeepLast,
}

impl Masking {
    pub fn apply(self, window: &HistoryWindow) -> HistoryWindow {
        match self {
            Masking::KeepLast => mask_keep_last(window),
        }
    }
}

/// Keep only the final occurrence of each label, in position order.
pub fn mask_keep_last(window: &HistoryWindow) -> HistoryWindow {
    let events = window
        .events
        .iter()
        .enumerate()
        .filter(|(idx, (_, l))| !window.events[idx + 1..].iter().any(|(_, m)| m == l))
        .map(|(_, e)| *e)
        .collect();
    HistoryWindow { events }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SummarySpec {
    /// One look-back per influencing label, aligned with `influencers`.
    Binary {
        influencers: LabelSet,
        lookbacks: Vec<Lookback>,
    },
    Ordinal {
        influencers: LabelSet,
        lookback: Lookback,
        masking: Masking,
    },
    /// Influencers are implicitly the whole alphabet.
    Kgram { order: usize, alphabet_size: usize },
}

impl SummarySpec {
    pub fn binary(influencers: LabelSet, lookbacks: Vec<Lookback>) -> Result<Self> {
        if lookbacks.len() != influencers.len() {
            return Err(SummError::Input(format!(
                "binary summary needs one look-back per influencer ({} labels, {} look-backs)",
                influencers.len(),
                lookbacks.len()
            )));
        }
        for lb in &lookbacks {
            lb.validate()?;
        }
        Ok(SummarySpec::Binary {
            influencers,
            lookbacks,
        })
    }

    pub fn binary_uniform(influencers: LabelSet, lookback: Lookback) -> Result<Self> {
        let n = influencers.len();
        SummarySpec::binary(influencers, vec![lookback; n])
    }

    pub fn ordinal(influencers: LabelSet, lookback: Lookback) -> Result<Self> {
        Ok(SummarySpec::Ordinal {
            influencers,
            lookback: lookback.validate()?,
            masking: Masking::KeepLast,
        })
    }

    /// k-th order Markov summary over an alphabet of `alphabet_size` labels.
    /// Order 0 is the empty summary.
    pub fn kgram(alphabet_size: usize, order: usize) -> Result<Self> {
        if alphabet_size == 0 {
            return Err(SummError::Input("k-gram summary needs a non-empty alphabet".into()));
        }
        Ok(SummarySpec::Kgram {
            order,
            alphabet_size,
        })
    }

    pub fn kind(&self) -> SummaryKind {
        match self {
            SummarySpec::Binary { .. } => SummaryKind::Binary,
            SummarySpec::Ordinal { .. } => SummaryKind::Ordinal,
            SummarySpec::Kgram { .. } => SummaryKind::Kgram,
        }
    }

    pub fn influencers(&self) -> LabelSet {
        match self {
            SummarySpec::Binary { influencers, .. } | SummarySpec::Ordinal { influencers, .. } => {
                influencers.clone()
            }
            SummarySpec::Kgram { alphabet_size, .. } => {
                LabelSet::from_ids((0..*alphabet_size as u32).map(LabelId))
            }
        }
    }

    /// Look-backs in influencer order (a single entry for ordinal and k-gram).
    pub fn lookbacks(&self) -> Vec<Lookback> {
        match self {
            SummarySpec::Binary { lookbacks, .. } => lookbacks.clone(),
            SummarySpec::Ordinal { lookback, .. } => vec![*lookback],
            SummarySpec::Kgram { order, .. } => vec![Lookback::Bounded(*order)],
        }
    }

    /// Reject influencers outside an alphabet of size `m`.
    pub fn check_alphabet(&self, m: usize) -> Result<()> {
        let bad = match self {
            SummarySpec::Binary { influencers, .. } | SummarySpec::Ordinal { influencers, .. } => {
                influencers.ids().iter().find(|l| l.index() >= m).map(|l| l.0 as usize)
            }
            SummarySpec::Kgram { alphabet_size, .. } => (*alphabet_size != m).then_some(*alphabet_size),
        };
        match bad {
            Some(b) => Err(SummError::Input(format!(
                "summary spec does not match an alphabet of size {m} (offending value {b})"
            ))),
            None => Ok(()),
        }
    }

    pub fn render(&self, state: &SummaryState, alphabet: &Alphabet) -> String {
        render_state(self, state, alphabet)
    }
}

/// Discrete summary state; the conditioning key of a model.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SummaryState {
    /// Presence bit per influencer, canonical order.
    Binary(Vec<bool>),
    /// Order instantiation: distinct influencers in ascending position order.
    Ordinal(Vec<LabelId>),
    /// Oldest slot first; `None` is the boundary symbol.
    Kgram(Vec<Option<LabelId>>),
}

/// Reference summary at 1-based position `i`.
pub fn summarize(spec: &SummarySpec, events: &[LabelId], i: usize) -> Result<SummaryState> {
    if i == 0 || i > events.len() + 1 {
        return Err(SummError::Input(format!(
            "position {i} outside 1..={}",
            events.len() + 1
        )));
    }
    match spec {
        SummarySpec::Binary {
            influencers,
            lookbacks,
        } => {
            let mut bits = Vec::with_capacity(influencers.len());
            for (&z, &lb) in influencers.ids().iter().zip(lookbacks) {
                let w = restrict_history(events, i, &LabelSet::from_ids([z]), lb)?;
                bits.push(!w.is_empty());
            }
            Ok(SummaryState::Binary(bits))
        }
        SummarySpec::Ordinal {
            influencers,
            lookback,
            masking,
        } => {
            let w = restrict_history(events, i, influencers, *lookback)?;
            let masked = masking.apply(&w);
            Ok(SummaryState::Ordinal(masked.events.iter().map(|&(_, l)| l).collect()))
        }
        SummarySpec::Kgram { order, .. } => {
            let slots = (0..*order)
                .map(|back| {
                    // slot 0 is position i - order
                    let offset = order - back;
                    (i > offset).then(|| events[i - offset - 1])
                })
                .collect();
            Ok(SummaryState::Kgram(slots))
        }
    }
}

/// |Σ_U| for the spec's kind.
pub fn domain_size(spec: &SummarySpec) -> Result<u64> {
    match spec {
        SummarySpec::Binary { influencers, .. } => binary_domain_size(influencers.len()),
        SummarySpec::Ordinal { influencers, .. } => ordinal_domain_size(influencers.len()),
        SummarySpec::Kgram {
            order,
            alphabet_size,
        } => kgram_domain_size(*alphabet_size, *order),
    }
}

fn binary_domain_size(u: usize) -> Result<u64> {
    if u >= 64 {
        return Err(SummError::sizing("binary summary domain", format!("2^{u}")));
    }
    Ok(1u64 << u)
}

/// Number of partial permutations of `u` items: Σ_{i=0}^{u} u!/i!.
fn ordinal_domain_size(u: usize) -> Result<u64> {
    let mut total: u64 = 1;
    let mut term: u64 = 1;
    for j in 0..u {
        term = term
            .checked_mul((u - j) as u64)
            .ok_or_else(|| SummError::sizing("ordinal summary domain", format!("sum of {u}!/i! for |U| = {u}")))?;
        total = total
            .checked_add(term)
            .ok_or_else(|| SummError::sizing("ordinal summary domain", format!("sum of {u}!/i! for |U| = {u}")))?;
    }
    Ok(total)
}

fn kgram_domain_size(m: usize, k: usize) -> Result<u64> {
    let base = m as u64 + 1;
    let mut total: u64 = 1;
    for _ in 0..k {
        total = total
            .checked_mul(base)
            .ok_or_else(|| SummError::sizing("k-gram summary domain", format!("({}+1)^{k}", m)))?;
    }
    Ok(total)
}

/// All states of the domain in a deterministic order.
pub fn enumerate_domain(spec: &SummarySpec, cap: u64) -> Result<Vec<SummaryState>> {
    let size = domain_size(spec)?;
    if size > cap {
        return Err(SummError::sizing(
            "summary domain enumeration",
            format!("{size} states exceeds the cap of {cap}"),
        ));
    }
    let coder = KeyCoder::new(spec)?;
    match spec {
        SummarySpec::Binary { .. } | SummarySpec::Kgram { .. } => {
            Ok((0..size).map(|k| coder.decode(SummaryKey(k))).collect())
        }
        SummarySpec::Ordinal { influencers, .. } => {
            let ids = influencers.ids();
            let mut out = Vec::with_capacity(size as usize);
            for len in 0..=ids.len() {
                let mut prefix = Vec::with_capacity(len);
                let mut used = vec![false; ids.len()];
                partial_permutations(ids, len, &mut prefix, &mut used, &mut out);
            }
            Ok(out)
        }
    }
}

fn partial_permutations(
    ids: &[LabelId],
    len: usize,
    prefix: &mut Vec<LabelId>,
    used: &mut [bool],
    out: &mut Vec<SummaryState>,
) {
    if prefix.len() == len {
        out.push(SummaryState::Ordinal(prefix.clone()));
        return;
    }
    for r in 0..ids.len() {
        if !used[r] {
            used[r] = true;
            prefix.push(ids[r]);
            partial_permutations(ids, len, prefix, used, out);
            prefix.pop();
            used[r] = false;
        }
    }
}

/// Compact integer encoding of a [`SummaryState`] under one spec.
///
/// Binary: bit `r` is influencer `r`. Ordinal: base-(|U|+1) digits holding
/// `rank + 1`, oldest first. K-gram: base-(M+1) digits holding `id + 1`
/// (0 for the boundary), oldest first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SummaryKey(pub u64);

/// Converts between states and keys for one spec.
#[derive(Clone, Debug)]
pub struct KeyCoder {
    spec: SummarySpec,
    base: u64,
}

impl KeyCoder {
    pub fn new(spec: &SummarySpec) -> Result<Self> {
        let base = match spec {
            SummarySpec::Binary { influencers, .. } => {
                if influencers.len() > 63 {
                    return Err(SummError::sizing(
                        "binary summary key",
                        format!("{} influencers (max 63)", influencers.len()),
                    ));
                }
                2
            }
            SummarySpec::Ordinal { influencers, .. } => {
                let u = influencers.len() as u32;
                let base = u as u64 + 1;
                if base.checked_pow(u).is_none() {
                    return Err(SummError::sizing(
                        "ordinal summary key",
                        format!("{u} influencers (max 15)"),
                    ));
                }
                base
            }
            SummarySpec::Kgram {
                order,
                alphabet_size,
            } => {
                kgram_domain_size(*alphabet_size, *order)?;
                *alphabet_size as u64 + 1
            }
        };
        Ok(KeyCoder {
            spec: spec.clone(),
            base,
        })
    }

    pub fn spec(&self) -> &SummarySpec {
        &self.spec
    }

    pub fn encode(&self, state: &SummaryState) -> Result<SummaryKey> {
        let mismatch = || SummError::Input("summary state does not belong to this spec".into());
        match (&self.spec, state) {
            (SummarySpec::Binary { influencers, .. }, SummaryState::Binary(bits)) => {
                if bits.len() != influencers.len() {
                    return Err(mismatch());
                }
                Ok(SummaryKey(
                    bits.iter()
                        .enumerate()
                        .fold(0u64, |acc, (r, &b)| acc | (u64::from(b) << r)),
                ))
            }
            (SummarySpec::Ordinal { influencers, .. }, SummaryState::Ordinal(order)) => {
                let mut key = 0u64;
                let mut seen = vec![false; influencers.len()];
                for &l in order {
                    let r = influencers.rank(l).ok_or_else(mismatch)?;
                    if std::mem::replace(&mut seen[r], true) {
                        return Err(mismatch());
                    }
                    key = key * self.base + r as u64 + 1;
                }
                Ok(SummaryKey(key))
            }
            (
                SummarySpec::Kgram {
                    order,
                    alphabet_size,
                },
                SummaryState::Kgram(slots),
            ) => {
                if slots.len() != *order {
                    return Err(mismatch());
                }
                let mut key = 0u64;
                for s in slots {
                    let d = match s {
                        None => 0,
                        Some(l) if l.index() < *alphabet_size => l.0 as u64 + 1,
                        Some(_) => return Err(mismatch()),
                    };
                    key = key * self.base + d;
                }
                Ok(SummaryKey(key))
            }
            _ => Err(mismatch()),
        }
    }

    pub fn decode(&self, key: SummaryKey) -> SummaryState {
        match &self.spec {
            SummarySpec::Binary { influencers, .. } => SummaryState::Binary(
                (0..influencers.len()).map(|r| key.0 >> r & 1 == 1).collect(),
            ),
            SummarySpec::Ordinal { influencers, .. } => {
                let mut digits = Vec::new();
                let mut k = key.0;
                while k > 0 {
                    digits.push((k % self.base) as usize - 1);
                    k /= self.base;
                }
                digits.reverse();
                SummaryState::Ordinal(digits.into_iter().map(|r| influencers.ids()[r]).collect())
            }
            SummarySpec::Kgram { order, .. } => {
                let mut slots = vec![None; *order];
                let mut k = key.0;
                for slot in slots.iter_mut().rev() {
                    let d = k % self.base;
                    k /= self.base;
                    *slot = (d > 0).then(|| LabelId(d as u32 - 1));
                }
                SummaryState::Kgram(slots)
            }
        }
    }
}

/// Incremental summarizer producing the key at every position of a sequence.
#[derive(Clone, Debug)]
pub struct Summarizer {
    coder: KeyCoder,
    /// Influencer rank by label id, `usize::MAX` for non-influencers.
    rank_of: Vec<usize>,
    lookbacks: Vec<Lookback>,
    scratch: Vec<(usize, usize)>,
}

impl Summarizer {
    pub fn new(spec: &SummarySpec, alphabet_size: usize) -> Result<Self> {
        spec.check_alphabet(alphabet_size)?;
        let coder = KeyCoder::new(spec)?;
        let mut rank_of = vec![usize::MAX; alphabet_size];
        let lookbacks = match spec {
            SummarySpec::Binary {
                influencers,
                lookbacks,
            } => {
                for (r, l) in influencers.ids().iter().enumerate() {
                    rank_of[l.index()] = r;
                }
                lookbacks.clone()
            }
            SummarySpec::Ordinal {
                influencers,
                lookback,
                ..
            } => {
                for (r, l) in influencers.ids().iter().enumerate() {
                    rank_of[l.index()] = r;
                }
                vec![*lookback]
            }
            SummarySpec::Kgram { .. } => Vec::new(),
        };
        Ok(Summarizer {
            coder,
            rank_of,
            lookbacks,
            scratch: Vec::new(),
        })
    }

    pub fn coder(&self) -> &KeyCoder {
        &self.coder
    }

    /// Call `f(i, key)` for every position `i = 1..=len` of `events`.
    pub fn scan(&mut self, events: &[LabelId], mut f: impl FnMut(usize, SummaryKey)) {
        match self.coder.spec.clone() {
            SummarySpec::Binary { influencers, .. } => {
                // last[r] = last position of influencer r so far, 0 if none
                let mut last = vec![0usize; influencers.len()];
                for i in 1..=events.len() {
                    let mut key = 0u64;
                    for (r, &p) in last.iter().enumerate() {
                        if p > 0 && p >= self.lookbacks[r].window_start(i) {
                            key |= 1 << r;
                        }
                    }
                    f(i, SummaryKey(key));
                    self.observe(&mut last, events[i - 1], i);
                }
            }
            SummarySpec::Ordinal { influencers, .. } => {
                let lb = self.lookbacks[0];
                let base = self.coder.base;
                let mut last = vec![0usize; influencers.len()];
                for i in 1..=events.len() {
                    let start = lb.window_start(i);
                    self.scratch.clear();
                    self.scratch.extend(
                        last.iter()
                            .enumerate()
                            .filter(|(_, &p)| p > 0 && p >= start)
                            .map(|(r, &p)| (p, r)),
                    );
                    self.scratch.sort_unstable();
                    let key = self
                        .scratch
                        .iter()
                        .fold(0u64, |acc, &(_, r)| acc * base + r as u64 + 1);
                    f(i, SummaryKey(key));
                    self.observe(&mut last, events[i - 1], i);
                }
            }
            SummarySpec::Kgram { order, .. } => {
                let base = self.coder.base;
                for i in 1..=events.len() {
                    let mut key = 0u64;
                    for offset in (1..=order).rev() {
                        let d = if i > offset { events[i - offset - 1].0 as u64 + 1 } else { 0 };
                        key = key * base + d;
                    }
                    f(i, SummaryKey(key));
                }
            }
        }
    }

    #[inline]
    fn observe(&self, last: &mut [usize], label: LabelId, i: usize) {
        let r = self.rank_of[label.index()];
        if r != usize::MAX {
            last[r] = i;
        }
    }
}

fn render_state(spec: &SummarySpec, state: &SummaryState, alphabet: &Alphabet) -> String {
    let mut out = String::new();
    match (spec, state) {
        (SummarySpec::Binary { influencers, .. }, SummaryState::Binary(bits)) => {
            if bits.is_empty() {
                return "∅".to_string();
            }
            for (n, (&l, &b)) in influencers.ids().iter().zip(bits).enumerate() {
                if n > 0 {
                    out.push(',');
                }
                out.push_str(alphabet.name(l));
                if !b {
                    // combining overline marks absence
                    out.push('\u{0304}');
                }
            }
        }
        (_, SummaryState::Ordinal(order)) => {
            out.push('[');
            for (n, &l) in order.iter().enumerate() {
                if n > 0 {
                    out.push(',');
                }
                out.push_str(alphabet.name(l));
            }
            out.push(']');
        }
        (_, SummaryState::Kgram(slots)) => {
            out.push('(');
            for (n, s) in slots.iter().enumerate() {
                if n > 0 {
                    out.push('|');
                }
                match s {
                    Some(l) => out.push_str(alphabet.name(*l)),
                    None => out.push_str(BOUNDARY),
                }
            }
            out.push(')');
        }
        (_, other) => {
            let _ = write!(out, "{other:?}");
        }
    }
    out
}

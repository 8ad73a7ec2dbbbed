//! Held-out evaluation: sequence-level splits, rare-label filtering,
//! hyperparameter selection on a dev split, and test log likelihood for
//! summary models and the k-th order Markov chain baseline.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SummError};
use crate::estimate::{count_statistics, log_likelihood};
use crate::search::{influencer_search, ModelKind, SearchConfig, SummModel};
use crate::sequence::{Alphabet, EventDataset, LabelId, Lookback, Sequence, TargetVariable};
use crate::summary::{domain_size, SummarySpec, DEFAULT_ENUMERATION_CAP};
use crate::SCHEMA_VERSION;

/// ChaCha stream reserved for dataset splitting.
const SPLIT_STREAM: u64 = 0x0053_504c_4954; // "SPLIT"

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.70,
            dev: 0.15,
            test: 0.15,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let f = [self.train, self.dev, self.test];
        if f.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(SummError::Config(format!("split fractions must be positive, got {f:?}")));
        }
        let sum: f64 = f.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SummError::Config(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Sequence counts: floor for train and dev, the remainder to test.
    pub fn sizes(&self, k: usize) -> (usize, usize, usize) {
        // the epsilon absorbs representation error, e.g. 10 × 0.7
        let train = (k as f64 * self.train + 1e-9).floor() as usize;
        let dev = (k as f64 * self.dev + 1e-9).floor() as usize;
        let train = train.min(k);
        let dev = dev.min(k - train);
        (train, dev, k - train - dev)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: EventDataset,
    pub dev: EventDataset,
    pub test: EventDataset,
    /// Labels present in all three splits.
    pub alphabet: Alphabet,
    pub dropped_labels: Vec<String>,
}

/// Assign whole sequences to train/dev/test by a seeded shuffle, then
/// delete events of labels missing from any split and drop emptied sequences.
pub fn split_dataset(dataset: &EventDataset, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let k = dataset.len();
    if k < 3 {
        return Err(SummError::Config(format!("need at least 3 sequences to split, got {k}")));
    }
    let (n_train, n_dev, n_test) = spec.sizes(k);
    if n_train == 0 || n_dev == 0 || n_test == 0 {
        return Err(SummError::Config(format!(
            "split of {k} sequences leaves an empty part ({n_train}/{n_dev}/{n_test})"
        )));
    }
    let mut order: Vec<usize> = (0..k).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(SPLIT_STREAM);
    order.shuffle(&mut rng);

    let seqs = dataset.sequences();
    let parts: [Vec<&Sequence>; 3] = [
        order[..n_train].iter().map(|&i| &seqs[i]).collect(),
        order[n_train..n_train + n_dev].iter().map(|&i| &seqs[i]).collect(),
        order[n_train + n_dev..].iter().map(|&i| &seqs[i]).collect(),
    ];

    let m = dataset.alphabet().len();
    let mut present = vec![[false; 3]; m];
    for (p, part) in parts.iter().enumerate() {
        for s in part {
            for e in &s.events {
                present[e.index()][p] = true;
            }
        }
    }
    let old = dataset.alphabet();
    let kept: Vec<LabelId> = old.ids().filter(|l| present[l.index()].iter().all(|&b| b)).collect();
    let dropped_labels = old
        .ids()
        .filter(|l| !present[l.index()].iter().all(|&b| b))
        .map(|l| old.name(l).to_string())
        .collect();
    if kept.is_empty() {
        return Err(SummError::Config("no label occurs in all three splits".into()));
    }
    let alphabet = Alphabet::new(kept.iter().map(|&l| old.name(l).to_string()))?;
    let mut remap = vec![None; m];
    for (new, &l) in kept.iter().enumerate() {
        remap[l.index()] = Some(LabelId(new as u32));
    }

    let build = |part: &[&Sequence], name: &str| -> Result<EventDataset> {
        let seqs: Vec<Sequence> = part
            .iter()
            .map(|s| Sequence {
                id: s.id.clone(),
                events: s.events.iter().filter_map(|e| remap[e.index()]).collect(),
            })
            .filter(|s| !s.is_empty())
            .collect();
        if seqs.is_empty() {
            return Err(SummError::Config(format!("{name} split is empty after label filtering")));
        }
        EventDataset::new(alphabet.clone(), seqs)
    };
    Ok(Splits {
        train: build(&parts[0], "train")?,
        dev: build(&parts[1], "dev")?,
        test: build(&parts[2], "test")?,
        alphabet: alphabet.clone(),
        dropped_labels,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub alphas: Vec<f64>,
    pub kappas: Vec<Lookback>,
    pub gammas: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        HyperGrid {
            alphas: vec![0.1, 1.0, 5.0, 10.0],
            kappas: vec![Lookback::Bounded(1), Lookback::Bounded(5), Lookback::Bounded(10)],
            gammas: vec![0.1, 0.5, 1.0],
        }
    }
}

impl HyperGrid {
    pub fn single(alpha: f64, kappa: Lookback, gamma: f64) -> Self {
        HyperGrid {
            alphas: vec![alpha],
            kappas: vec![kappa],
            gammas: vec![gamma],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.kappas.is_empty() || self.gammas.is_empty() {
            return Err(SummError::Config("hyperparameter grids must be non-empty".into()));
        }
        if self.alphas.iter().chain(&self.gammas).any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(SummError::Config("alpha and gamma grid values must be positive".into()));
        }
        for k in &self.kappas {
            k.validate()?;
        }
        Ok(())
    }

    /// Grid points ordered by κ, then γ, then α, ascending.
    pub fn points(&self) -> Vec<(Lookback, f64, f64)> {
        let mut pts = Vec::new();
        for &k in &self.kappas {
            for &g in &self.gammas {
                for &a in &self.alphas {
                    pts.push((k, g, a));
                }
            }
        }
        pts.sort_by(|x, y| {
            x.0.cmp(&y.0)
                .then(x.1.total_cmp(&y.1))
                .then(x.2.total_cmp(&y.2))
        });
        pts.dedup();
        pts
    }
}

#[derive(Clone, Debug)]
pub struct GridChoice {
    pub alpha: f64,
    pub kappa: Lookback,
    pub gamma: f64,
    pub dev_log_likelihood: f64,
    pub model: SummModel,
}

/// Log likelihood of a model on held-out data; summary states never seen
/// in training use the prior estimate.
pub fn test_log_loss(model: &SummModel, test: &EventDataset) -> Result<f64> {
    let test = test.reindex(&model.alphabet)?;
    let stats = count_statistics(&test, &model.target, &model.spec)?;
    log_likelihood(&stats, &model.params)
}

/// Learn on `train` at every grid point and keep the best dev likelihood.
/// Ties go to smaller κ, then smaller γ, then smaller α.
pub fn grid_search(
    train: &EventDataset,
    dev: &EventDataset,
    target: &TargetVariable,
    grid: &HyperGrid,
    base: &SearchConfig,
) -> Result<GridChoice> {
    grid.validate()?;
    let results = grid
        .points()
        .into_par_iter()
        .map(|(kappa, gamma, alpha)| {
            let cfg = SearchConfig {
                lookback: kappa,
                alpha,
                gamma,
                ..base.clone()
            };
            let tag = |e: SummError| e.context(format!("grid point alpha={alpha} kappa={kappa} gamma={gamma}"));
            let model = influencer_search(train, target, &cfg).map_err(tag)?;
            let dev_ll = test_log_loss(&model, dev).map_err(tag)?;
            Ok(GridChoice {
                alpha,
                kappa,
                gamma,
                dev_log_likelihood: dev_ll,
                model,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<GridChoice> = None;
    for r in results {
        if best.as_ref().is_none_or(|b| r.dev_log_likelihood > b.dev_log_likelihood) {
            best = Some(r);
        }
    }
    Ok(best.expect("grid is non-empty"))
}

/// Per-label evaluation result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelEval {
    pub label: String,
    pub test_log_likelihood: f64,
    pub dev_log_likelihood: f64,
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<Lookback>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    pub influencers: Vec<String>,
    pub test_events: usize,
}

/// Fit the k-th order Markov chain for one target: a k-gram summary over
/// the whole alphabet, α chosen on dev, refit on train ∪ dev.
pub fn markov_chain_baseline(
    train: &EventDataset,
    dev: &EventDataset,
    test: &EventDataset,
    target: &TargetVariable,
    order: usize,
    alphas: &[f64],
) -> Result<LabelEval> {
    if alphas.is_empty() {
        return Err(SummError::Config("alpha grid must be non-empty".into()));
    }
    let m = train.alphabet().len();
    let spec = SummarySpec::kgram(m, order)?;
    let size = domain_size(&spec).map_err(|e| e.context(format!("order {order}: use a smaller k")))?;
    if size > DEFAULT_ENUMERATION_CAP {
        return Err(SummError::sizing(
            format!("{order}-th order Markov chain summary domain (try a smaller k)"),
            format!("{size} states exceeds the cap of {DEFAULT_ENUMERATION_CAP}"),
        ));
    }
    let mut sorted = alphas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<(f64, f64)> = None;
    for &alpha in &sorted {
        let model = SummModel::fit(train, target, spec.clone(), alpha, 1.0)?;
        let ll = test_log_loss(&model, dev)?;
        if best.is_none_or(|(_, b)| ll > b) {
            best = Some((alpha, ll));
        }
    }
    let (alpha, dev_ll) = best.expect("non-empty alpha grid");
    let refit = SummModel::fit(&train.concat(dev)?, target, spec, alpha, 1.0)?;
    Ok(LabelEval {
        label: target_name(&refit),
        test_log_likelihood: test_log_loss(&refit, test)?,
        dev_log_likelihood: dev_ll,
        alpha,
        kappa: None,
        gamma: None,
        order: Some(order),
        influencers: Vec::new(),
        test_events: test.total_events(),
    })
}

fn target_name(model: &SummModel) -> String {
    model
        .target
        .targets()
        .names(&model.alphabet)
        .join(",")
}

#[derive(Clone, Debug, PartialEq)]
pub enum EvalModel {
    Summ { kind: ModelKind, grid: HyperGrid },
    Markov { order: usize, alphas: Vec<f64> },
}

impl EvalModel {
    pub fn name(&self) -> String {
        match self {
            EvalModel::Summ { kind: ModelKind::Bsumm, .. } => "bsumm".into(),
            EvalModel::Summ { kind: ModelKind::Osumm, .. } => "osumm".into(),
            EvalModel::Markov { order, .. } => format!("{order}-mc"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub model: EvalModel,
    pub split: SplitSpec,
    /// Labels of interest; `None` means every retained label.
    pub labels: Option<Vec<String>>,
    /// Settings other than α, κ, γ for summary-model search.
    pub search: SearchConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub seed: u64,
    pub fractions: [f64; 3],
    pub sequences: [usize; 3],
    pub events: [usize; 3],
    pub retained_labels: Vec<String>,
    pub dropped_labels: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: String,
    pub model: String,
    pub split: SplitSummary,
    pub entries: Vec<LabelEval>,
    /// Arithmetic mean of the per-label test log likelihoods.
    pub mean_test_log_likelihood: f64,
    pub metadata: BTreeMap<String, String>,
}

/// Split, tune on dev, refit on train ∪ dev and score the test split for
/// every label of interest.
pub fn evaluate(dataset: &EventDataset, config: &EvalConfig) -> Result<EvalReport> {
    let splits = split_dataset(dataset, &config.split)?;
    evaluate_splits(&splits, config)
}

pub fn evaluate_splits(splits: &Splits, config: &EvalConfig) -> Result<EvalReport> {
    let alphabet = &splits.alphabet;
    let labels: Vec<String> = match &config.labels {
        Some(ls) => {
            for l in ls {
                if alphabet.id(l).is_none() {
                    return Err(SummError::Data(format!(
                        "label of interest {l:?} is not in the retained alphabet"
                    )));
                }
            }
            ls.clone()
        }
        None => alphabet.labels().to_vec(),
    };
    let refit_data = splits.train.concat(&splits.dev)?;
    let entries = labels
        .par_iter()
        .map(|label| {
            let target = TargetVariable::single(alphabet, label)?;
            let entry = match &config.model {
                EvalModel::Markov { order, alphas } => {
                    markov_chain_baseline(&splits.train, &splits.dev, &splits.test, &target, *order, alphas)?
                }
                EvalModel::Summ { kind, grid } => {
                    let base = SearchConfig {
                        kind: *kind,
                        ..config.search.clone()
                    };
                    let choice = grid_search(&splits.train, &splits.dev, &target, grid, &base)?;
                    let cfg = SearchConfig {
                        lookback: choice.kappa,
                        alpha: choice.alpha,
                        gamma: choice.gamma,
                        ..base
                    };
                    let model = influencer_search(&refit_data, &target, &cfg)?;
                    LabelEval {
                        label: label.clone(),
                        test_log_likelihood: test_log_loss(&model, &splits.test)?,
                        dev_log_likelihood: choice.dev_log_likelihood,
                        alpha: choice.alpha,
                        kappa: Some(choice.kappa),
                        gamma: Some(choice.gamma),
                        order: None,
                        influencers: model.influencers.names(alphabet).into_iter().map(String::from).collect(),
                        test_events: splits.test.total_events(),
                    }
                }
            };
            Ok(entry)
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e: SummError| e.context(config.model.name()))?;
    let mean = entries.iter().map(|e| e.test_log_likelihood).sum::<f64>() / entries.len().max(1) as f64;
    let mut metadata = BTreeMap::new();
    metadata.insert("refit".into(), "train+dev".into());
    if let EvalModel::Markov { .. } = config.model {
        metadata.insert(
            "markov_target".into(),
            "binary target fitted directly through a k-gram summary over the full alphabet".into(),
        );
    }
    Ok(EvalReport {
        schema_version: SCHEMA_VERSION.into(),
        model: config.model.name(),
        split: SplitSummary {
            seed: config.split.seed,
            fractions: [config.split.train, config.split.dev, config.split.test],
            sequences: [splits.train.len(), splits.dev.len(), splits.test.len()],
            events: [
                splits.train.total_events(),
                splits.dev.total_events(),
                splits.test.total_events(),
            ],
            retained_labels: alphabet.labels().to_vec(),
            dropped_labels: splits.dropped_labels.clone(),
        },
        entries,
        mean_test_log_likelihood: mean,
        metadata,
    })
}

/// Per-label detail table for one report.
pub fn render_report_table(report: &EvalReport) -> String {
    let header = ["label", "test LL", "dev LL", "alpha", "kappa", "gamma", "influencers"];
    let mut rows: Vec<Vec<String>> = report
        .entries
        .iter()
        .map(|e| {
            vec![
                e.label.clone(),
                format!("{:.2}", e.test_log_likelihood),
                format!("{:.2}", e.dev_log_likelihood),
                format!("{}", e.alpha),
                e.kappa.map_or_else(|| e.order.map_or("-".into(), |k| format!("k={k}")), |k| k.to_string()),
                e.gamma.map_or("-".into(), |g| g.to_string()),
                if e.influencers.is_empty() { "-".into() } else { e.influencers.join(",") },
            ]
        })
        .collect();
    rows.push(vec![
        "mean".into(),
        format!("{:.2}", report.mean_test_log_likelihood),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
    ]);
    align(&header.map(String::from), &rows)
}

/// Dataset × model table of mean test log likelihood.
pub fn render_comparison_table(dataset: &str, reports: &[EvalReport]) -> String {
    let mut header = vec!["Dataset".to_string()];
    header.extend(reports.iter().map(|r| r.model.to_uppercase()));
    let mut row = vec![dataset.to_string()];
    row.extend(reports.iter().map(|r| format!("{:.2}", r.mean_test_log_likelihood)));
    align(&header, &[row])
}

fn align(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut width = vec![0usize; cols];
    for r in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)) {
        for (c, cell) in r.iter().enumerate() {
            width[c] = width[c].max(cell.chars().count());
        }
    }
    let line = |r: &[String]| {
        let mut s = r
            .iter()
            .enumerate()
            .map(|(c, cell)| format!("{cell:<w$}", w = width[c]))
            .collect::<Vec<_>>()
            .join(" | ");
        s.truncate(s.trim_end().len());
        s
    };
    let mut out = line(header);
    out.push('\n');
    out.push_str(&width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

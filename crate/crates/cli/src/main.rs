use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use summ_core::eval::{
    evaluate, render_report_table, EvalConfig, EvalModel, HyperGrid, SplitSpec,
};
use summ_core::graph::{default_graph_config, export_dot, gamma_sweep, learn_graph};
use summ_core::io::{format_dataset, load_alphabet, load_dataset, write_atomic, DatasetFormat};
use summ_core::report::{model_report, trace_jsonl};
use summ_core::search::{influencer_search, set_f1, InitialIncumbent, ModelKind, SearchConfig, SummModel};
use summ_core::sequence::{EventDataset, Lookback, TargetVariable};
use summ_core::summary::SummarySpec;
use summ_core::synth::{builtin_b1_spec, recovery_experiment, GenerativeSpec};
use summ_core::{Result, SummError};

#[derive(Parser)]
#[command(name = "summ", version, about = "Learn and evaluate summary Markov models on event sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn the influencers and parameters for one target.
    Learn(LearnArgs),
    /// Split a dataset, tune on dev and report test log likelihood per label.
    Eval(EvalArgs),
    /// Sample a synthetic dataset from a generative spec.
    Generate(GenerateArgs),
    /// Measure influencer recovery (F1) against a generative spec.
    Recover(RecoverArgs),
    /// Learn one model per label and export the influence graph.
    Graph(GraphArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Bsumm,
    Osumm,
    Mc,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

impl From<FormatArg> for DatasetFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => DatasetFormat::Csv,
            FormatArg::Jsonl => DatasetFormat::Jsonl,
        }
    }
}

#[derive(Args)]
struct DataArgs {
    /// Dataset file (CSV `seq_id,label` or JSON lines).
    #[arg(long)]
    data: PathBuf,
    /// Override format detection.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// File with one label per line fixing the alphabet order.
    #[arg(long)]
    alphabet: Option<PathBuf>,
}

impl DataArgs {
    fn load(&self) -> Result<EventDataset> {
        let alphabet = self.alphabet.as_deref().map(load_alphabet).transpose()?;
        load_dataset(&self.data, self.format.map(Into::into), alphabet.as_ref())
    }
}

#[derive(Args, Clone)]
struct SearchArgs {
    /// Look-back window (positive integer or `inf`).
    #[arg(long)]
    kappa: Option<Lookback>,
    /// Per-label look-backs for binary models, e.g. `B=3,C=inf`.
    #[arg(long, value_delimiter = ',')]
    label_kappa: Vec<String>,
    /// Dirichlet smoothing strength.
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight of the BIC penalty.
    #[arg(long)]
    gamma: Option<f64>,
    /// Start the forward sweep from the empty set's score instead of −∞.
    #[arg(long)]
    init_empty: bool,
    /// Repeat forward and backward sweeps until the set is stable.
    #[arg(long)]
    repeat: bool,
    /// Keep the target labels out of the candidate pool.
    #[arg(long, conflicts_with = "allow_self_loop")]
    no_self_loop: bool,
    /// Allow targets to influence themselves (the default).
    #[arg(long)]
    allow_self_loop: bool,
}

impl SearchArgs {
    fn config(&self, base: SearchConfig, kind: ModelKind, dataset: Option<&EventDataset>) -> Result<SearchConfig> {
        let mut cfg = SearchConfig {
            kind,
            lookback: self.kappa.unwrap_or(base.lookback),
            alpha: self.alpha.unwrap_or(base.alpha),
            gamma: self.gamma.unwrap_or(base.gamma),
            exclude_targets: self.no_self_loop,
            repeat_until_stable: self.repeat,
            initial: if self.init_empty {
                InitialIncumbent::EmptySet
            } else {
                InitialIncumbent::NegativeInfinity
            },
            ..base
        };
        for item in &self.label_kappa {
            let (label, k) = item
                .split_once('=')
                .ok_or_else(|| SummError::Config(format!("expected LABEL=KAPPA, got {item:?}")))?;
            let ds = dataset.ok_or_else(|| SummError::Config("--label-kappa needs a dataset".into()))?;
            let id = ds.alphabet().require(label)?;
            cfg.label_lookbacks.insert(id, k.parse()?);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct LearnArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Target labels, comma separated; several labels share one state each.
    #[arg(long, value_delimiter = ',', required = true)]
    target: Vec<String>,
    #[arg(long, value_enum, default_value = "bsumm")]
    model: ModelArg,
    /// Markov chain order for `--model mc`.
    #[arg(long, default_value_t = 1)]
    order: usize,
    #[command(flatten)]
    search: SearchArgs,
    /// Also write the search trace as JSON lines.
    #[arg(long)]
    trace: bool,
    /// Output directory; the model is printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "bsumm")]
    model: ModelArg,
    #[arg(long, default_value_t = 1)]
    order: usize,
    /// Labels to evaluate; defaults to every retained label.
    #[arg(long, value_delimiter = ',')]
    target: Vec<String>,
    /// Tune over the standard grid instead of the single point given by flags.
    #[arg(long)]
    grid: bool,
    #[command(flatten)]
    search: SearchArgs,
    /// Train, dev and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.7, 0.15, 0.15])]
    split: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SpecArgs {
    /// Use a built-in generative spec.
    #[arg(long, value_parser = ["b1"], conflicts_with = "spec")]
    builtin: Option<String>,
    /// Generative spec as JSON.
    #[arg(long)]
    spec: Option<PathBuf>,
}

impl SpecArgs {
    fn load(&self) -> Result<GenerativeSpec> {
        match (&self.builtin, &self.spec) {
            (Some(_), _) => Ok(builtin_b1_spec()),
            (None, Some(p)) => {
                let text = std::fs::read_to_string(p).map_err(|e| SummError::Io(format!("{}: {e}", p.display())))?;
                GenerativeSpec::from_json(&text).map_err(|e| e.context(p.display()))
            }
            (None, None) => Err(SummError::Config("one of --builtin or --spec is required".into())),
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Number of sequences.
    #[arg(long, value_parser = positive)]
    k: Option<usize>,
    /// Events per sequence.
    #[arg(long, value_parser = positive)]
    length: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RecoverArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, default_value = "A")]
    target: String,
    /// Score one existing dataset instead of running the sampling experiment.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Dataset sizes to sample.
    #[arg(long, value_delimiter = ',', default_values_t = [10, 50, 100, 500, 1000])]
    ks: Vec<usize>,
    /// Sampled datasets per size.
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, value_parser = positive)]
    length: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GraphArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "bsumm")]
    model: ModelArg,
    #[command(flatten)]
    search: SearchArgs,
    /// Also report edges lost while lowering γ through these values.
    #[arg(long, value_delimiter = ',')]
    gamma_sweep: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn positive(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(format!("expected a positive integer, got {s:?}")),
    }
}

fn summ_kind(model: ModelArg) -> Result<ModelKind> {
    match model {
        ModelArg::Bsumm => Ok(ModelKind::Bsumm),
        ModelArg::Osumm => Ok(ModelKind::Osumm),
        ModelArg::Mc => Err(SummError::Config("this subcommand needs --model bsumm or osumm".into())),
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn emit(out: Option<&Path>, name: &str, text: &str) -> Result<()> {
    match out {
        Some(dir) => write_atomic(&dir.join(name), text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn learn(args: LearnArgs) -> Result<()> {
    let ds = args.data.load()?;
    let targets = ds.alphabet().label_set(&args.target)?;
    let target = TargetVariable::new(ds.alphabet(), targets)?;
    let model: SummModel = match args.model {
        ModelArg::Mc => {
            let spec = SummarySpec::kgram(ds.alphabet().len(), args.order)?;
            let cfg = args.search.config(SearchConfig::default(), ModelKind::Bsumm, Some(&ds))?;
            SummModel::fit(&ds, &target, spec, cfg.alpha, cfg.gamma)?
        }
        m => {
            let cfg = args.search.config(SearchConfig::default(), summ_kind(m)?, Some(&ds))?;
            influencer_search(&ds, &target, &cfg)?
        }
    };
    let out = args.out.as_deref();
    emit(out, "model.json", &json(&model_report(&model)?))?;
    if args.trace {
        emit(out, "trace.jsonl", &trace_jsonl(&model))?;
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let ds = args.data.load()?;
    let base = args.search.config(SearchConfig::default(), ModelKind::Bsumm, None)?;
    let grid = if args.grid {
        HyperGrid::default()
    } else {
        HyperGrid::single(base.alpha, base.lookback, base.gamma)
    };
    let model = match args.model {
        ModelArg::Mc => EvalModel::Markov {
            order: args.order,
            alphas: grid.alphas.clone(),
        },
        m => EvalModel::Summ {
            kind: summ_kind(m)?,
            grid,
        },
    };
    let split = SplitSpec {
        train: args.split[0],
        dev: args.split[1],
        test: args.split[2],
        seed: args.seed,
    };
    let config = EvalConfig {
        model,
        split,
        labels: (!args.target.is_empty()).then(|| args.target.clone()),
        search: base,
    };
    let report = evaluate(&ds, &config)?;
    match args.out.as_deref() {
        Some(dir) => {
            write_atomic(&dir.join("eval.json"), json(&report).as_bytes())?;
            write_atomic(&dir.join("eval.txt"), render_report_table(&report).as_bytes())?;
            print!("{}", render_report_table(&report));
        }
        None => print!("{}", json(&report)),
    }
    Ok(())
}

fn generate(args: GenerateArgs) -> Result<()> {
    let spec = args.spec.load()?;
    let spec = spec.with_size(
        args.k.unwrap_or(spec.sequences),
        args.length.unwrap_or(spec.length),
        args.seed.unwrap_or(spec.seed),
    );
    let text = format_dataset(&spec.generate(), args.format.into());
    match args.out {
        Some(p) => write_atomic(&p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct SingleRecovery {
    schema_version: &'static str,
    target: String,
    truth: Vec<String>,
    sequences: usize,
    estimated: Vec<String>,
    f1: f64,
}

fn recover(args: RecoverArgs) -> Result<()> {
    let spec = args.spec.load()?;
    let spec = spec.with_size(
        spec.sequences,
        args.length.unwrap_or(spec.length),
        args.seed.unwrap_or(spec.seed),
    );
    let cfg = args
        .search
        .config(summ_core::synth::b1_search_config(), ModelKind::Bsumm, None)?;
    let out = args.out.as_deref();
    if let Some(path) = &args.data {
        let ds = load_dataset(path, None, None)?.reindex(spec.alphabet())?;
        let id = spec.alphabet().require(&args.target)?;
        let truth = spec.minimal_influencers(id);
        let target = TargetVariable::single(spec.alphabet(), &args.target)?;
        let model = influencer_search(&ds, &target, &cfg)?;
        let names = |s: &summ_core::sequence::LabelSet| -> Vec<String> {
            s.names(spec.alphabet()).into_iter().map(String::from).collect()
        };
        let report = SingleRecovery {
            schema_version: summ_core::SCHEMA_VERSION,
            target: args.target.clone(),
            truth: names(&truth),
            sequences: ds.len(),
            estimated: names(&model.influencers),
            f1: set_f1(&model.influencers, &truth),
        };
        return emit(out, "recover.json", &json(&report));
    }
    let report = recovery_experiment(&spec, &args.target, &args.ks, args.runs, &cfg)?;
    let mut table = String::from("K      mean F1  std err\n");
    for r in &report.rows {
        table.push_str(&format!("{:<6} {:>7.2}  {:>7.3}\n", r.k, r.mean_f1, r.std_error));
    }
    match out {
        Some(dir) => {
            write_atomic(&dir.join("recover.json"), json(&report).as_bytes())?;
            print!("{table}");
            Ok(())
        }
        None => {
            print!("{}", json(&report));
            Ok(())
        }
    }
}

fn graph(args: GraphArgs) -> Result<()> {
    let ds = args.data.load()?;
    let cfg = args.search.config(default_graph_config(), summ_kind(args.model)?, Some(&ds))?;
    let allow_self_loops = !args.search.no_self_loop;
    let graph = learn_graph(&ds, &cfg, allow_self_loops)?;
    let out = args.out.as_deref();
    match out {
        Some(dir) => {
            write_atomic(&dir.join("graph.dot"), export_dot(&graph).as_bytes())?;
            write_atomic(&dir.join("graph.json"), graph.to_json().as_bytes())?;
        }
        None => print!("{}", export_dot(&graph)),
    }
    if !args.gamma_sweep.is_empty() {
        let steps = gamma_sweep(&ds, &cfg, &args.gamma_sweep, allow_self_loops)?;
        let doc = serde_json::json!({ "schema_version": summ_core::SCHEMA_VERSION, "steps": steps });
        emit(out, "gamma_sweep.json", &json(&doc))?;
    }
    for n in &graph.nodes {
        if let Some(e) = &n.error {
            eprintln!("{}", error_json_raw("label", &format!("{}: {e}", n.label)));
        }
    }
    Ok(())
}

fn error_json_raw(kind: &str, message: &str) -> String {
    let mut obj = BTreeMap::new();
    obj.insert("error", kind);
    obj.insert("message", message);
    serde_json::to_string(&obj).expect("error serializes")
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("SUMM_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| SummError::Config(format!("SUMM_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| SummError::Internal(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.render().to_string();
            eprintln!("{}", error_json_raw("usage", msg.trim_end()));
            return ExitCode::from(2);
        }
    };
    let run = init_threads().and_then(|_| match cli.command {
        Command::Learn(a) => learn(a),
        Command::Eval(a) => eval(a),
        Command::Generate(a) => generate(a),
        Command::Recover(a) => recover(a),
        Command::Graph(a) => graph(a),
    });
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json_raw(e.kind(), &e.to_string()));
            // configuration mistakes are usage errors
            ExitCode::from(if matches!(e, SummError::Config(_)) { 2 } else { 1 })
        }
    }
}

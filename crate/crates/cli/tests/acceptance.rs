//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.
//!
//! All criteria run inside one test so that the timing measurements are
//! not disturbed by other tests running in parallel.

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use summ_core::estimate::{compute_score, ParameterTable};
use summ_core::eval::test_log_loss;
use summ_core::search::{exhaustive_search, influencer_search, SearchConfig, SummModel};
use summ_core::sequence::{Alphabet, EventDataset, LabelId, LabelSet, Lookback, TargetVariable};
use summ_core::summary::{domain_size, enumerate_domain, SummarySpec, DEFAULT_ENUMERATION_CAP};
use summ_core::synth::{b1_search_config, builtin_b1_spec, recovery_experiment};

type Outcome = Result<String, String>;

/// Every parameter table fitted during the run, for the normalization check.
#[derive(Default)]
struct Fitted(Vec<ParameterTable>);

impl Fitted {
    fn add(&mut self, m: &SummModel) {
        self.0.push(m.params.clone());
    }
}

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 1. Recovery of the b1 influencers as K grows.
fn recovery(fitted: &mut Fitted) -> Outcome {
    let expected = [(10, 0.23), (50, 0.59), (100, 0.69), (500, 0.93), (1000, 1.00)];
    let ks: Vec<usize> = expected.iter().map(|p| p.0).collect();
    let spec = builtin_b1_spec().with_size(0, 10, 0);
    let cfg = b1_search_config();
    assert!(cfg.pool.is_none() && !cfg.exclude_targets, "pool must be all five labels");
    let report = recovery_experiment(&spec, "A", &ks, 10, &cfg).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut detail = Vec::new();
    for (row, &(k, want)) in report.rows.iter().zip(&expected) {
        let tol = if k <= 100 { 0.10 } else { 0.05 };
        let good = (row.mean_f1 - want).abs() <= tol + 1e-12;
        ok &= good;
        detail.push(format!("K={k}: {:.3} (target {want}, ±{tol}){}", row.mean_f1, if good { "" } else { " ✗" }));
    }
    let first = report.rows.first().unwrap().mean_f1;
    let last = report.rows.last().unwrap().mean_f1;
    if last < first {
        ok = false;
        detail.push("curve decreases end to end".into());
    }
    // Diagnostic only: a 10-run mean has a standard error near 0.1 at small
    // K, so also show a large-sample mean from disjoint seeds.
    let big = recovery_experiment(&spec.with_size(0, 10, 1_000_000), "A", &ks, 200, &cfg).map_err(|e| e.to_string())?;
    detail.push(format!(
        "200-run means {}",
        big.rows.iter().map(|r| format!("{:.3}", r.mean_f1)).collect::<Vec<_>>().join("/")
    ));
    // keep one fitted model for the normalization sweep
    let ds = spec.with_size(50, 10, 0).generate();
    let x = TargetVariable::single(ds.alphabet(), "A").unwrap();
    fitted.add(&influencer_search(&ds, &x, &cfg).unwrap());
    check(ok, detail.join("; "))
}

// 2. Empirical conditionals of the generator against its table.
fn generator_fidelity() -> Outcome {
    let spec = builtin_b1_spec().with_size(1000, 10, 0);
    let ds = spec.generate();
    let a = ds.alphabet();
    let id = |s: &str| a.id(s).unwrap();
    let (la, lb, lc, ld, le) = (id("A"), id("B"), id("C"), id("D"), id("E"));
    // counts[config] = (positions, A, B, C, D, E); config bit0 = B in window, bit1 = C
    let mut counts = [[0u64; 6]; 4];
    for s in ds.sequences() {
        let ev = &s.events;
        for i in 0..ev.len() {
            let win = &ev[i.saturating_sub(3)..i];
            let cfg = win.contains(&lb) as usize | (win.contains(&lc) as usize) << 1;
            counts[cfg][0] += 1;
            for (slot, l) in [(1, la), (2, lb), (3, lc), (4, ld), (5, le)] {
                if ev[i] == l {
                    counts[cfg][slot] += 1;
                }
            }
        }
    }
    let theta = [(0.3, 0.1), (0.35, 0.05), (0.1, 0.3), (0.2, 0.2)];
    let mut worst: f64 = 0.0;
    let mut ok = true;
    let mut test = |hits: u64, n: u64, p: f64| {
        if n == 0 {
            ok = false;
            return;
        }
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let z = (hits as f64 / n as f64 - p).abs() / se;
        worst = worst.max(z);
        ok &= z <= 3.0;
    };
    for (c, &(pa, pb)) in theta.iter().enumerate() {
        test(counts[c][1], counts[c][0], pa);
        test(counts[c][2], counts[c][0], pb);
    }
    let total: u64 = counts.iter().map(|c| c[0]).sum();
    for (slot, p) in [(3, 0.3), (4, 0.2), (5, 0.1)] {
        test(counts.iter().map(|c| c[slot]).sum(), total, p);
        for c in &counts {
            test(c[slot], c[0], p);
        }
    }
    check(ok, format!("largest deviation {worst:.2} standard errors over {total} events"))
}

fn random_dataset(rng: &mut ChaCha8Rng, m: usize, max_events: usize) -> EventDataset {
    let names: Vec<String> = (0..m).map(|i| format!("L{i}")).collect();
    let alphabet = Alphabet::new(names.clone()).unwrap();
    let mut left = rng.gen_range(1..=max_events);
    let mut seqs: Vec<Vec<String>> = Vec::new();
    while left > 0 {
        let len = rng.gen_range(1..=left.min(12));
        left -= len;
        seqs.push((0..len).map(|_| names[rng.gen_range(0..m)].clone()).collect());
    }
    EventDataset::from_labels_with(alphabet, &seqs).unwrap()
}

fn random_subset(rng: &mut ChaCha8Rng, m: usize) -> Vec<LabelId> {
    (0..m as u32).filter(|_| rng.gen_bool(0.5)).map(LabelId).collect()
}

fn random_lookback(rng: &mut ChaCha8Rng) -> Lookback {
    if rng.gen_bool(0.2) {
        Lookback::Unbounded
    } else {
        Lookback::Bounded(rng.gen_range(1..6))
    }
}

/// Summary state computed directly from the definitions, as a plain vector.
#[derive(Clone, Debug)]
enum Naive {
    Binary(Vec<(LabelId, Lookback)>),
    Ordinal(Vec<LabelId>, Lookback),
    Kgram(usize),
}

fn window(ev: &[LabelId], i: usize, k: Lookback) -> &[LabelId] {
    // 0-based i; the history is ev[..i]
    match k {
        Lookback::Unbounded => &ev[..i],
        Lookback::Bounded(k) => &ev[i.saturating_sub(k)..i],
    }
}

fn naive_state(n: &Naive, ev: &[LabelId], i: usize) -> Vec<i64> {
    match n {
        Naive::Binary(u) => u.iter().map(|&(l, k)| window(ev, i, k).contains(&l) as i64).collect(),
        Naive::Ordinal(u, k) => {
            let w = window(ev, i, *k);
            let mut last: Vec<(usize, LabelId)> = u
                .iter()
                .filter_map(|&l| w.iter().rposition(|&e| e == l).map(|p| (p, l)))
                .collect();
            last.sort();
            last.into_iter().map(|(_, l)| l.0 as i64).collect()
        }
        Naive::Kgram(k) => (0..*k)
            .map(|j| {
                // j-th most distant of the k previous positions
                let back = k - j;
                if i >= back {
                    ev[i - back].0 as i64
                } else {
                    -1
                }
            })
            .collect(),
    }
}

fn naive_ll(ds: &EventDataset, target: &[LabelId], n: &Naive, alpha: f64) -> f64 {
    let m = ds.alphabet().len();
    let states = target.len() + usize::from(target.len() < m);
    let state_of = |l: LabelId| target.iter().position(|&t| t == l).unwrap_or(target.len());
    let mut counts: HashMap<Vec<i64>, Vec<f64>> = HashMap::new();
    for s in ds.sequences() {
        for i in 0..s.events.len() {
            counts.entry(naive_state(n, &s.events, i)).or_insert_with(|| vec![0.0; states])
                [state_of(s.events[i])] += 1.0;
        }
    }
    let mut ll = 0.0;
    for s in ds.sequences() {
        for i in 0..s.events.len() {
            let row = &counts[&naive_state(n, &s.events, i)];
            let tot: f64 = row.iter().sum();
            let x = state_of(s.events[i]);
            ll += ((alpha + row[x]) / (states as f64 * alpha + tot)).ln();
        }
    }
    ll
}

// 3. Likelihood from summary statistics against a per-position oracle.
fn likelihood_oracle(fitted: &mut Fitted) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for _ in 0..100 {
        let m = rng.gen_range(1..=4);
        let ds = random_dataset(&mut rng, m, 50);
        let mut targets = random_subset(&mut rng, m);
        if targets.is_empty() {
            targets.push(LabelId(rng.gen_range(0..m as u32)));
        }
        let x = TargetVariable::new(ds.alphabet(), LabelSet::from_ids(targets.clone())).unwrap();
        let alpha = rng.gen_range(0.01..5.0);
        let u = random_subset(&mut rng, m);
        let lbs: Vec<Lookback> = u.iter().map(|_| random_lookback(&mut rng)).collect();
        let ko = random_lookback(&mut rng);
        let order = rng.gen_range(0..4);
        let specs = [
            (
                SummarySpec::binary(LabelSet::from_ids(u.clone()), lbs.clone()).unwrap(),
                Naive::Binary(u.iter().copied().zip(lbs.iter().copied()).collect()),
            ),
            (
                SummarySpec::ordinal(LabelSet::from_ids(u.clone()), ko).unwrap(),
                Naive::Ordinal(u.clone(), ko),
            ),
            (SummarySpec::kgram(m, order).unwrap(), Naive::Kgram(order)),
        ];
        for (spec, naive) in specs {
            let fit = compute_score(&ds, &x, &spec, alpha, 1.0).map_err(|e| e.to_string())?;
            let lib = fit.report.log_likelihood;
            let oracle = naive_ll(&ds, &targets, &naive, alpha);
            let err = (lib - oracle).abs();
            worst = worst.max(err);
            if err > 1e-9 {
                return Err(format!("{spec:?}: {lib} vs oracle {oracle}"));
            }
            // a target covering a one-label alphabet has a single state with θ = 1
            if fit.params.n_states() > 1 {
                fitted.0.push(fit.params);
            }
            cases += 1;
        }
    }
    Ok(format!("{cases} dataset/spec pairs, max |Δ| = {worst:.2e}"))
}

// 4. Domain sizes against closed forms and enumeration.
fn domain_sizes() -> Outcome {
    let u3 = LabelSet::from_ids((0..3).map(LabelId));
    let b = domain_size(&SummarySpec::binary_uniform(u3.clone(), Lookback::Bounded(2)).unwrap()).unwrap();
    let o = domain_size(&SummarySpec::ordinal(u3, Lookback::Bounded(2)).unwrap()).unwrap();
    if (b, o) != (8, 16) {
        return Err(format!("|U|=3: binary {b}, ordinal {o}"));
    }
    let mut checked = 0;
    for n in 0..=5u32 {
        let u = LabelSet::from_ids((0..n).map(LabelId));
        let ordinal_closed: u64 = (0..=n as u64)
            .map(|i| ((i + 1)..=n as u64).product::<u64>())
            .sum();
        let specs = [
            (SummarySpec::binary_uniform(u.clone(), Lookback::Bounded(3)).unwrap(), 1u64 << n),
            (SummarySpec::ordinal(u.clone(), Lookback::Bounded(3)).unwrap(), ordinal_closed),
            (SummarySpec::kgram(n.max(1) as usize, 2).unwrap(), (n.max(1) as u64 + 1).pow(2)),
        ];
        for (spec, closed) in specs {
            let d = domain_size(&spec).unwrap();
            let e = enumerate_domain(&spec, DEFAULT_ENUMERATION_CAP).unwrap().len() as u64;
            if d != closed || e != closed {
                return Err(format!("{spec:?}: closed form {closed}, domain_size {d}, enumerated {e}"));
            }
            checked += 1;
        }
    }
    Ok(format!("binary 8, ordinal 16 at |U|=3; {checked} specs match enumeration for |U|≤5"))
}

// 5. Greedy against exhaustive search on b1 data.
fn greedy_vs_exhaustive(fitted: &mut Fitted) -> Outcome {
    let cfg = b1_search_config();
    let mut same = 0;
    let mut notes = Vec::new();
    let mut ok = true;
    for seed in 0..10 {
        let ds = builtin_b1_spec().with_size(1000, 10, seed).generate();
        let x = TargetVariable::single(ds.alphabet(), "A").unwrap();
        let g = influencer_search(&ds, &x, &cfg).map_err(|e| e.to_string())?;
        let e = exhaustive_search(&ds, &x, &cfg, 6).map_err(|e| e.to_string())?;
        if g.influencers == e.influencers {
            same += 1;
        } else {
            let gap = (e.score.score - g.score.score) / e.score.score.abs();
            ok &= gap <= 0.01;
            notes.push(format!("seed {seed}: gap {:.3}%", 100.0 * gap));
        }
        fitted.add(&g);
        fitted.add(&e);
    }
    ok &= same >= 9;
    check(ok, format!("{same}/10 identical {}", notes.join(", ")).trim_end().to_string())
}

// 6. Normalization of every fitted table and finite held-out likelihood.
fn normalization(fitted: &Fitted) -> Outcome {
    let mut rows = 0;
    for p in &fitted.0 {
        for row in p.fitted_rows().map(|(_, r)| r).chain(std::iter::once(p.prior_row())) {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 || !row.iter().all(|&t| t > 0.0 && t < 1.0) {
                return Err(format!("row {row:?} sums to {sum}"));
            }
            rows += 1;
        }
    }
    let train = EventDataset::from_labels(&[vec!["A", "B", "A", "B"]]).unwrap();
    let x = TargetVariable::single(train.alphabet(), "A").unwrap();
    let spec = SummarySpec::kgram(2, 2).unwrap();
    let model = SummModel::fit(&train, &x, spec, 0.1, 1.0).map_err(|e| e.to_string())?;
    // (B, B) never occurs in training
    let test = EventDataset::from_labels_with(train.alphabet().clone(), &[vec!["B", "B", "A"]]).unwrap();
    let ll = test_log_loss(&model, &test).map_err(|e| e.to_string())?;
    check(
        ll.is_finite(),
        format!("{} tables, {rows} rows; held-out LL with unseen state = {ll:.4}", fitted.0.len()),
    )
}

/// Bigram model for "is the next label the target", coded from scratch.
fn bigram_oracle(train: &EventDataset, test: &EventDataset, target: LabelId, alpha: f64) -> f64 {
    let m = train.alphabet().len();
    // row m is the sequence start
    let mut hit = vec![0.0; m + 1];
    let mut tot = vec![0.0; m + 1];
    for s in train.sequences() {
        let mut prev = m;
        for &e in &s.events {
            tot[prev] += 1.0;
            if e == target {
                hit[prev] += 1.0;
            }
            prev = e.index();
        }
    }
    let mut ll = 0.0;
    for s in test.sequences() {
        let mut prev = m;
        for &e in &s.events {
            let p = (alpha + hit[prev]) / (2.0 * alpha + tot[prev]);
            ll += if e == target { p.ln() } else { (1.0 - p).ln() };
            prev = e.index();
        }
    }
    ll
}

// 7. First-order k-gram summaries against the bigram oracle.
fn kgram_equivalence(fitted: &mut Fitted) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let m = rng.gen_range(2..=5);
        let train = random_dataset(&mut rng, m, 80);
        let test = EventDataset::new(train.alphabet().clone(), random_dataset(&mut rng, m, 40).into_parts().1).unwrap();
        let t = LabelId(rng.gen_range(0..m as u32));
        let x = TargetVariable::single(train.alphabet(), train.alphabet().name(t)).unwrap();
        let alpha = rng.gen_range(0.05..3.0);
        let model = SummModel::fit(&train, &x, SummarySpec::kgram(m, 1).unwrap(), alpha, 1.0).map_err(|e| e.to_string())?;
        for (data, lib) in [
            (&train, model.score.log_likelihood),
            (&test, test_log_loss(&model, &test).map_err(|e| e.to_string())?),
        ] {
            let oracle = bigram_oracle(&train, data, t, alpha);
            worst = worst.max((lib - oracle).abs());
        }
        fitted.add(&model);
    }
    check(worst <= 1e-9, format!("20 datasets, train and test LL, max |Δ| = {worst:.2e}"))
}

fn uniform_dataset(m: usize, n: usize, seed: u64) -> EventDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = (0..m).map(|i| format!("L{i:02}")).collect();
    let seqs: Vec<Vec<String>> = (0..n / 100)
        .map(|_| (0..100).map(|_| names[rng.gen_range(0..m)].clone()).collect())
        .collect();
    EventDataset::from_labels_with(Alphabet::new(names).unwrap(), &seqs).unwrap()
}

fn time_search(ds: &EventDataset) -> f64 {
    let x = TargetVariable::single(ds.alphabet(), "L00").unwrap();
    let cfg = SearchConfig::default();
    (0..5)
        .map(|_| {
            let t = Instant::now();
            std::hint::black_box(influencer_search(ds, &x, &cfg).unwrap());
            t.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

// 8. Growth of search time in alphabet size and data size.
fn scaling() -> Outcome {
    let by_m: Vec<(f64, f64)> = [5, 10, 20, 40]
        .iter()
        .map(|&m| (m as f64, time_search(&uniform_dataset(m, 20_000, m as u64))))
        .collect();
    let by_n: Vec<(f64, f64)> = [10_000, 20_000, 50_000, 100_000]
        .iter()
        .map(|&n| (n as f64, time_search(&uniform_dataset(10, n, n as u64))))
        .collect();
    let (sm, sn) = (slope(&by_m), slope(&by_n));
    check(sm <= 2.3 && sn <= 1.2, format!("exponent in M = {sm:.2} (≤ 2.3), in N = {sn:.2} (≤ 1.2)"))
}

fn run_cli(args: &[&str], dir: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_summ"))
        .args(args)
        .current_dir(dir)
        .env("SUMM_THREADS", "2")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("summ {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    std::fs::write(dir.join("stdout.txt"), &out.stdout).map_err(|e| e.to_string())
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = walk(dir)
        .into_iter()
        .map(|p| (p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

// 9. Byte-identical CLI output for repeated runs.
fn cli_determinism() -> Outcome {
    let data_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = data_dir.path().join("b1.csv");
    let data = data.to_str().unwrap();
    run_cli(&["generate", "--builtin", "b1", "--k", "150", "--seed", "7", "--out", data], data_dir.path())?;
    let commands: Vec<Vec<&str>> = vec![
        vec!["generate", "--builtin", "b1", "--k", "150", "--seed", "7", "--out", "gen.csv"],
        vec!["generate", "--builtin", "b1", "--k", "30", "--seed", "7", "--format", "jsonl"],
        vec!["learn", "--data", data, "--target", "A", "--trace", "--out", "learn"],
        vec!["learn", "--data", data, "--target", "A,B", "--model", "osumm", "--out", "learn_o"],
        vec!["learn", "--data", data, "--target", "C", "--model", "mc", "--order", "2", "--out", "learn_mc"],
        vec!["eval", "--data", data, "--seed", "3", "--out", "eval"],
        vec!["eval", "--data", data, "--model", "mc", "--order", "1", "--grid", "--seed", "3", "--out", "eval_mc"],
        vec!["recover", "--builtin", "b1", "--ks", "10,50", "--runs", "4", "--seed", "7", "--out", "recover"],
        vec!["recover", "--builtin", "b1", "--data", data],
        vec!["graph", "--data", data, "--kappa", "3", "--gamma", "1", "--gamma-sweep", "1,0.5", "--out", "graph"],
    ];
    let mut compared = 0;
    for args in &commands {
        let a = tempfile::tempdir().map_err(|e| e.to_string())?;
        let b = tempfile::tempdir().map_err(|e| e.to_string())?;
        run_cli(args, a.path())?;
        run_cli(args, b.path())?;
        let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
        if sa != sb {
            return Err(format!("summ {} differs between runs", args.join(" ")));
        }
        compared += sa.len();
    }
    Ok(format!("{} invocations, {compared} output files identical", commands.len()))
}

#[test]
fn acceptance_criteria() {
    let mut fitted = Fitted::default();
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let started = Instant::now();
    let t = Instant::now();
    let r1 = recovery(&mut fitted);
    let t1 = t.elapsed().as_secs_f64();
    results.push(("influencer recovery", r1.map(|d| format!("{d} [{t1:.1}s]"))));
    results.push(("generator fidelity", generator_fidelity()));
    results.push(("likelihood oracle", likelihood_oracle(&mut fitted)));
    results.push(("domain sizes", domain_sizes()));
    results.push(("greedy vs exhaustive", greedy_vs_exhaustive(&mut fitted)));
    results.push(("k-gram equivalence", kgram_equivalence(&mut fitted)));
    // after every other fit so the sweep covers them
    results.push(("normalization", normalization(&fitted)));
    results.push(("complexity scaling", scaling()));
    results.push(("cli determinism", cli_determinism()));
    // report in criterion order
    let order = [0, 1, 2, 3, 4, 6, 5, 7, 8];
    let mut failed = 0;
    for (n, &i) in order.iter().enumerate() {
        let (name, r) = &results[i];
        match r {
            Ok(d) => println!("PASS {} {name}: {d}", n + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {} {name}: {d}", n + 1)
            }
        }
    }
    println!("acceptance: {} of 9 passed in {:.1}s", 9 - failed, started.elapsed().as_secs_f64());
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}

//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//! Run with `cargo test --test acceptance -- --nocapture --test-threads 1` to
//! see the lines in order.

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use coodkit::autodiff::{Tape, Tensor};
use coodkit::corpus::{
    comment_length, generate_synthetic_corpus, is_punct_token, is_stopword, length_bin, save_jsonl, tokenize_comment,
    BimodalPair, Scenario, SynthDomain, SynthSpec, DEFAULT_BIN_WIDTH,
};
use coodkit::losses::{cl_loss, info_nce, margin_id_loss, margin_ood_loss};
use coodkit::metrics::{auroc, fpr_at_95_tpr, SearchEvalRow};
use coodkit::minicode::{analyze_scope, lex, TokenKind};
use coodkit::pipeline::{evaluate_run, search_eval, train_cood, train_cood_plus, EvalReport, Mode, Model, RunConfig, ScoreSource};
use coodkit::scenarios::{
    assemble_benchmark, derive_seed, gen_buggy_code, gen_misaligned, gen_out_domain, gen_shuffled_comment,
    BenchmarkDraft, BenchmarkManifest, SeededRng, DEFAULT_SHUFFLE_RATIO,
};
use coodkit::corpus::STOPWORDS;

fn verdict(n: usize, name: &str, pass: bool, detail: &str) {
    println!("criterion {n} [{name}]: {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

// 1

#[test]
fn c1_gradient_fidelity() {
    let s = common::gradcases::sweep(120);
    let pass = s.cases >= 100 && s.worst < 1e-4 && s.secs < 60.0;
    let detail = format!("{} configs, worst rel err {:.2e} (case {}), {:.1}s", s.cases, s.worst, s.worst_case, s.secs);
    verdict(1, "gradient fidelity", pass, &detail);
}

// 2

fn sim_value(rows: &[Vec<f64>], f: impl FnOnce(&mut Tape<f64>, coodkit::autodiff::Var) -> coodkit::autodiff::Var) -> f64 {
    let mut t = Tape::new();
    let s = t.constant(Tensor::from_rows(rows).unwrap());
    let out = f(&mut t, s);
    t.value(out).data()[0]
}

#[test]
fn c2_loss_oracles() {
    let mut fails = Vec::new();
    for n in 2..=64 {
        for &(s, tau) in &[(0.0, 0.07), (0.37, 0.07), (-0.8, 0.5), (1.0, 1.0)] {
            let v = sim_value(&vec![vec![s; n]; n], |t, x| info_nce(t, x, tau).unwrap());
            if (v - (n as f64).ln()).abs() >= 1e-9 {
                fails.push(format!("uniform n={n} s={s}: {v}"));
            }
        }
    }
    for s in [-1.0, 0.0, 0.3, 1.0] {
        let v = sim_value(&[vec![s]], |t, x| info_nce(t, x, 0.07).unwrap());
        if v != 0.0 {
            fails.push(format!("n=1 s={s}: {v}"));
        }
    }
    // hinge arithmetic by hand: ID row 0 has positive 0.55 and one negative 0.5;
    // OOD row 1 has code sims 0.2 (unaligned) and 0.3 (its own code)
    let rows = vec![vec![0.55, 0.0], vec![0.5, 0.0]];
    let id = sim_value(&rows, |t, x| margin_id_loss(t, x, &[0], 0.2).unwrap());
    let expect_id = (0.2f64 - 0.55 + 0.5).max(0.0) / 2.0;
    let rows_ood = vec![vec![0.7, 0.1], vec![0.2, 0.3]];
    let ood = sim_value(&rows_ood, |t, x| margin_ood_loss(t, x, &[1], 0.2).unwrap());
    let expect_ood = ((0.1f64 - 0.2).max(0.0) + (0.3f64 - 0.2).max(0.0)) / 2.0;
    let cl = {
        let mut t = Tape::new();
        let a = t.constant(Tensor::scalar(id));
        let b = t.constant(Tensor::scalar(ood));
        let c = cl_loss(&mut t, a, b, 2).unwrap();
        t.value(c).data()[0]
    };
    for (name, got, want, hand) in
        [("id", id, expect_id, 0.075), ("ood", ood, expect_ood, 0.05), ("cl", cl, (expect_id + expect_ood) / 2.0, 0.0625)]
    {
        if (got - want).abs() >= 1e-9 || (got - hand).abs() >= 1e-9 {
            fails.push(format!("{name}: got {got}, want {hand}"));
        }
    }
    let detail = if fails.is_empty() { "uniform ln N, N=1 zero, 0.075/0.05/0.0625".to_string() } else { fails.join("; ") };
    verdict(2, "loss oracles", fails.is_empty(), &detail);
}

// 3

fn pairwise_auroc(id: &[f64], ood: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &a in id {
        for &b in ood {
            wins += if a > b { 1.0 } else if a == b { 0.5 } else { 0.0 };
        }
    }
    wins / (id.len() * ood.len()) as f64
}

/// Highest threshold among the ID scores whose TPR is at least 95%, in exact
/// integer arithmetic, then the share of outliers at or above it.
fn sweep_fpr95(id: &[f64], ood: &[f64]) -> f64 {
    let n = id.len();
    let mut best: Option<f64> = None;
    for &t in id {
        let kept = id.iter().filter(|&&s| s >= t).count();
        if 100 * kept >= 95 * n && best.map_or(true, |b| t > b) {
            best = Some(t);
        }
    }
    let t = best.unwrap();
    ood.iter().filter(|&&s| s >= t).count() as f64 / ood.len() as f64
}

#[test]
fn c3_metric_oracles() {
    let mut rng = SeededRng::new(3);
    let (mut auroc_bad, mut fpr_bad, mut fpr_checked) = (0, 0, 0);
    for _ in 0..200 {
        let n_id = 1 + rng.below(500);
        let n_ood = 1 + rng.below(500);
        // coarse grid so ties are common
        let levels = 1 + rng.below(40);
        let shift = rng.below(3);
        let draw = |rng: &mut SeededRng, n: usize, shift: usize| -> Vec<f64> {
            (0..n).map(|_| (rng.below(levels) + shift) as f64 / levels as f64).collect()
        };
        let id = draw(&mut rng, n_id, shift);
        let ood = draw(&mut rng, n_ood, 0);
        if auroc(&id, &ood).unwrap() != pairwise_auroc(&id, &ood) {
            auroc_bad += 1;
        }
        match fpr_at_95_tpr(&id, &ood) {
            Ok(v) => {
                fpr_checked += 1;
                if v != sweep_fpr95(&id, &ood) {
                    fpr_bad += 1;
                }
            }
            // calibration needs at least 20 inlier scores
            Err(_) if n_id < 20 => {}
            Err(_) => fpr_bad += 1,
        }
    }
    let detail = format!("auroc mismatches {auroc_bad}/200, fpr95 mismatches {fpr_bad}/{fpr_checked}");
    verdict(3, "metric oracles", auroc_bad == 0 && fpr_bad == 0, &detail);
}

// 4

fn multiset<T: Ord + Clone>(xs: &[T]) -> BTreeMap<T, usize> {
    let mut m = BTreeMap::new();
    for x in xs {
        *m.entry(x.clone()).or_insert(0) += 1;
    }
    m
}

fn check_misaligned(corpus: &[BimodalPair], out: &[BimodalPair]) -> Vec<String> {
    let by_id: BTreeMap<&str, &BimodalPair> = corpus.iter().map(|p| (p.id.as_str(), p)).collect();
    let sources: Vec<&BimodalPair> = out.iter().map(|p| by_id[p.meta["source_id"].as_str()]).collect();
    let mut fails = Vec::new();
    let fixed = out.iter().zip(&sources).filter(|(o, s)| o.code == s.code).count();
    if fixed > 0 {
        fails.push(format!("misaligned: {fixed} fixed points"));
    }
    let got: Vec<&str> = out.iter().map(|p| p.code.as_str()).collect();
    let want: Vec<&str> = sources.iter().map(|p| p.code.as_str()).collect();
    if multiset(&got) != multiset(&want) {
        fails.push("misaligned: code multiset changed".into());
    }
    fails
}

fn check_shuffled(corpus: &[BimodalPair], out: &[BimodalPair]) -> Vec<String> {
    let by_id: BTreeMap<&str, &BimodalPair> = corpus.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut fails = Vec::new();
    for o in out {
        let src = tokenize_comment(&by_id[o.meta["source_id"].as_str()].comment).unwrap();
        let got = tokenize_comment(&o.comment).unwrap();
        if multiset(&src) != multiset(&got) {
            fails.push(format!("{}: token multiset changed", o.id));
            continue;
        }
        let pinned_moved = src.iter().zip(&got).any(|(a, b)| (is_stopword(a) || is_punct_token(a)) && a != b);
        let moved = src.iter().zip(&got).filter(|(a, b)| a != b).count();
        if pinned_moved || moved < 2 {
            fails.push(format!("{}: pinned moved {pinned_moved}, {moved} tokens moved", o.id));
        }
    }
    fails
}

fn check_buggy(corpus: &[BimodalPair], out: &[BimodalPair]) -> Vec<String> {
    let by_id: BTreeMap<&str, &BimodalPair> = corpus.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut fails = Vec::new();
    for o in out {
        let before = lex(&by_id[o.meta["source_id"].as_str()].code).unwrap();
        let Ok(after) = lex(&o.code) else {
            fails.push(format!("{}: mutated code does not lex", o.id));
            continue;
        };
        let diff: Vec<usize> = (0..before.len().min(after.len())).filter(|&i| before[i].text != after[i].text).collect();
        let ok = before.len() == after.len()
            && diff.len() == 1
            && before[diff[0]].kind == TokenKind::Ident
            && after[diff[0]].kind == TokenKind::Ident
            && analyze_scope(&after).is_ok()
            && analyze_scope(&before).unwrap().in_scope_at(diff[0]).contains(&after[diff[0]].text.as_str());
        if !ok {
            fails.push(format!("{}: {} changed tokens", o.id, diff.len()));
        }
    }
    fails
}

fn check_out_domain(reference: &[BimodalPair], out: &[BimodalPair]) -> Vec<String> {
    let hist = |rows: &[BimodalPair]| multiset(&rows.iter().map(|p| length_bin(comment_length(p), DEFAULT_BIN_WIDTH)).collect::<Vec<_>>());
    let (want, got) = (hist(reference), hist(out));
    let mut fails = Vec::new();
    for bin in want.keys().chain(got.keys()) {
        let expected = want.get(bin).copied().unwrap_or(0) as f64 * out.len() as f64 / reference.len() as f64;
        let actual = got.get(bin).copied().unwrap_or(0) as f64;
        if (actual - expected).abs() > 1.0 {
            fails.push(format!("out_domain bin {bin}: {actual} vs {expected:.2}"));
        }
    }
    fails
}

#[test]
fn c4_generator_invariants() {
    let corpus = generate_synthetic_corpus(&SynthSpec { n: 3000, domain: SynthDomain::a() }, 41);
    let foreign = generate_synthetic_corpus(&SynthSpec { n: 3000, domain: SynthDomain::b() }, 42);
    let n = 1000;
    let mut fails = Vec::new();
    fails.extend(check_misaligned(&corpus, &gen_misaligned(&corpus, n, 4).unwrap()));
    let shuffled = gen_shuffled_comment(&corpus, n, DEFAULT_SHUFFLE_RATIO, &STOPWORDS, 4).unwrap();
    fails.extend(check_shuffled(&corpus, &shuffled));
    fails.extend(check_buggy(&corpus, &gen_buggy_code(&corpus, n, 4).unwrap()));
    fails.extend(check_out_domain(&corpus, &gen_out_domain(&corpus, &foreign, n, 4).unwrap()));
    let detail = match fails.len() {
        0 => format!("{n} records per scenario"),
        k => format!("{k} violations, first: {}", fails[0]),
    };
    verdict(4, "generator invariants", fails.is_empty(), &detail);
}

// 5

fn coodkit(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_coodkit")).args(args).env("RUST_LOG", "warn").output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stdout));
}

fn files_under(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            for (k, v) in files_under(&p) {
                out.insert(format!("{}/{k}", p.file_name().unwrap().to_string_lossy()), v);
            }
        } else {
            out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap());
        }
    }
    out
}

#[test]
fn c5_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let data = d.join("data");
    coodkit(&["synth", "--out", &s(&data), "--n", "600", "--seed", "5"]);
    let cfg = d.join("cfg.json");
    std::fs::write(&cfg, r#"{"embed_dim":32,"layers":1,"heads":2,"ffn_dim":64,"epochs":2,"batch_size":16}"#).unwrap();
    let mut benches = Vec::new();
    let mut ckpts: Vec<Vec<u8>> = Vec::new();
    for run in ["a", "b"] {
        let bench = d.join(format!("bench-{run}"));
        coodkit(&[
            "gen-benchmark",
            "--id",
            &s(&data.join("id.jsonl")),
            "--foreign",
            &s(&data.join("foreign.jsonl")),
            "--out",
            &s(&bench),
            "--seed",
            "5",
            "--train-ood-frac",
            "0.04",
        ]);
        for mode in ["cood", "cood-plus"] {
            let ckpt = d.join(format!("{run}-{mode}.ckpt"));
            coodkit(&["train", "--mode", mode, "--config", &s(&cfg), "--manifest", &s(&bench), "--out", &s(&ckpt)]);
            ckpts.push(std::fs::read(&ckpt).unwrap());
        }
        benches.push(files_under(&bench));
    }
    let jsonl = benches[0].keys().filter(|k| k.ends_with(".jsonl")).count();
    let same_bench = benches[0] == benches[1] && jsonl > 0;
    let same_ckpt = ckpts[0] == ckpts[2] && ckpts[1] == ckpts[3];
    let detail = format!("{} benchmark files ({jsonl} jsonl) identical: {same_bench}; checkpoints identical: {same_ckpt}", benches[0].len());
    verdict(5, "determinism", same_bench && same_ckpt, &detail);
}

// 6 to 8 share one desk-scale benchmark and two trained models.

struct Desk {
    manifest: BenchmarkManifest,
    cood: Model,
    plus: Model,
    cood_eval: EvalReport,
    plus_eval: EvalReport,
    secs: f64,
}

const DESK_SEED: u64 = 7;

/// Settings used for the COOD+ run; defaults otherwise. See the README.
fn plus_config() -> RunConfig {
    RunConfig { mode: Mode::CoodPlus, epochs: 20, lr: 1e-3, margin: 0.5, ..RunConfig::default() }
}

fn desk() -> &'static Desk {
    static DESK: OnceLock<Desk> = OnceLock::new();
    DESK.get_or_init(|| {
        let start = Instant::now();
        let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-desk");
        let _ = std::fs::remove_dir_all(&root);
        std::fs::create_dir_all(&root).unwrap();
        let id = generate_synthetic_corpus(&SynthSpec { n: 2000, domain: SynthDomain::a() }, DESK_SEED);
        let foreign =
            generate_synthetic_corpus(&SynthSpec { n: 2000, domain: SynthDomain::b() }, derive_seed(DESK_SEED, "foreign"));
        save_jsonl(&id, &root.join("id.jsonl")).unwrap();
        let bench = root.join("bench");
        std::fs::create_dir_all(&bench).unwrap();
        assemble_benchmark(&id, &foreign, &BenchmarkDraft::default(), DESK_SEED, &bench).unwrap();
        let manifest = BenchmarkManifest::load(&bench).unwrap();
        let (cood, _) = train_cood(&RunConfig::default(), &manifest).unwrap();
        let (plus, _) = train_cood_plus(&plus_config(), &manifest).unwrap();
        let cood_eval = evaluate_run(&cood, &manifest, 1).unwrap();
        let plus_eval = evaluate_run(&plus, &manifest, 1).unwrap();
        Desk { manifest, cood, plus, cood_eval, plus_eval, secs: start.elapsed().as_secs_f64() }
    })
}

fn means(report: &EvalReport) -> Vec<f64> {
    Scenario::OOD.iter().map(|&s| report.mean_auroc(s).unwrap()).collect()
}

fn fmt_aurocs(v: &[f64]) -> String {
    Scenario::OOD.iter().zip(v).map(|(s, a)| format!("{s} {a:.3}")).collect::<Vec<_>>().join(", ")
}

#[test]
fn c6_trend_reproduction() {
    let d = desk();
    let c = means(&d.cood_eval);
    let p = means(&d.plus_eval);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    // Scenario::OOD order: out_domain, misaligned, shuffled_comment, buggy_code
    let cood_ok = c[1] >= 0.90 && c[0] >= 0.80 && c[2] <= 0.70 && c[3] <= 0.70;
    let plus_ok = p.iter().all(|&a| a >= 0.85);
    let improves = mean(&p) > mean(&c);
    let budget = d.secs < 900.0;
    println!("  vocab {}; desk run {:.0}s", d.manifest.vocab_size, d.secs);
    println!("  COOD  {} (mean {:.3}): {}", fmt_aurocs(&c), mean(&c), if cood_ok { "ok" } else { "miss" });
    println!("  COOD+ {} (mean {:.3}): {}", fmt_aurocs(&p), mean(&p), if plus_ok { "ok" } else { "miss" });
    let detail = format!("cood trend {cood_ok}, cood+ all >= 0.85 {plus_ok}, cood+ mean > cood mean {improves}, under 15 min {budget}");
    verdict(6, "trend reproduction", cood_ok && plus_ok && improves && budget, &detail);
}

fn recovery(rows: &[SearchEvalRow]) -> (bool, String) {
    let [orig, corrupted, gt, model] = [0, 1, 2, 3].map(|i| rows[i].mrr);
    let ok = model >= corrupted && (model - gt).abs() <= 0.05;
    (ok, format!("original {orig:.3}, corrupted {corrupted:.3}, filtered-gt {gt:.3}, filtered-model {model:.3}"))
}

#[test]
fn c7_search_recovery() {
    let d = desk();
    let mut pass = true;
    let mut details = Vec::new();
    for (name, model) in [("cood", &d.cood), ("cood+", &d.plus)] {
        let rows = search_eval(model, &d.manifest, 0.15, 0.95, ScoreSource::Model).unwrap();
        let (ok, text) = recovery(&rows);
        println!("  {name}: {text}");
        pass &= ok;
        details.push(format!("{name} {ok}"));
    }
    verdict(7, "search recovery", pass, &details.join(", "));
}

#[test]
fn c8_null_model() {
    let d = desk();
    let vocab = d.manifest.load_vocab().unwrap();
    let untrained = |mode| Model::init(RunConfig { mode, ..RunConfig::default() }, vocab.clone()).unwrap();
    // The encoder's own score is the cosine. The COOD+ score also passes through
    // a randomly initialised classifier head, so it is printed but not gated.
    let m = means(&evaluate_run(&untrained(Mode::Cood), &d.manifest, 1).unwrap());
    let head = means(&evaluate_run(&untrained(Mode::CoodPlus), &d.manifest, 1).unwrap());
    println!("  untrained encoder (cosine): {}", fmt_aurocs(&m));
    println!("  untrained encoder + random head (informational): {}", fmt_aurocs(&head));
    let pass = m.iter().all(|a| (0.40..=0.60).contains(a));
    verdict(8, "null model", pass, &format!("cosine AUROC in [0.40, 0.60] for every scenario: {pass}"));
}

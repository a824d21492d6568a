mod common;

use coodkit::corpus::Scenario;
use coodkit::encoder::register;
use coodkit::losses::register_bc;
use coodkit::autodiff::Tape;
use coodkit::metrics::auroc;
use coodkit::pipeline::{
    batch_objective, checkpoint_bytes, evaluate_run, evaluate_scores, load_checkpoint, save_checkpoint, search_eval,
    train_cood, train_cood_plus, train_on, Mode, Model, PipelineError, ScoreSource,
};
use coodkit::scenarios::BenchmarkDraft;

use common::*;

#[test]
fn two_epochs_lower_validation_infonce() {
    let rows = domain_a(100, 3);
    let mut cfg = tiny_config(Mode::Cood);
    cfg.val_frac = 0.2;
    let (_, report) = train_on(&cfg, vocab_for(&rows), &rows).unwrap();
    let last = report.epochs.last().unwrap().val_loss;
    assert!(last < report.initial_val_loss, "{last} vs {}", report.initial_val_loss);
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let rows = domain_a(80, 4);
    let mut cfg = tiny_config(Mode::Cood);
    cfg.lr = 0.0;
    let vocab = vocab_for(&rows);
    let init = Model::init(cfg.clone(), vocab.clone()).unwrap();
    let (trained, report) = train_on(&cfg, vocab, &rows).unwrap();
    assert_eq!(trained.flat_params(), init.flat_params());
    let v: Vec<f64> = report.epochs.iter().map(|e| e.val_loss).collect();
    assert!(v.iter().all(|&x| x == report.initial_val_loss), "{v:?}");
}

#[test]
fn same_seed_same_trajectory_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let m = benchmark(dir.path(), 300, 5, &BenchmarkDraft { train_ood_frac: 0.03, ..BenchmarkDraft::default() });
    for mode in [Mode::Cood, Mode::CoodPlus] {
        let cfg = tiny_config(mode);
        let run = || match mode {
            Mode::Cood => train_cood(&cfg, &m).unwrap(),
            Mode::CoodPlus => train_cood_plus(&cfg, &m).unwrap(),
        };
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(ra, rb);
        assert_eq!(checkpoint_bytes(&a), checkpoint_bytes(&b));
    }
}

#[test]
fn train_mode_must_match_config() {
    let dir = tempfile::tempdir().unwrap();
    let m = benchmark(dir.path(), 300, 6, &BenchmarkDraft::default());
    let err = train_cood_plus(&tiny_config(Mode::Cood), &m).unwrap_err();
    assert!(matches!(err, PipelineError::ModeMismatch { expected: Mode::CoodPlus, found: Mode::Cood }));
}

fn head_grads(lambda: f64, labels: &[u8]) -> (f64, f32) {
    let rows = domain_a(8, 7);
    let mut cfg = tiny_config(Mode::CoodPlus);
    cfg.lambda = lambda;
    let model = Model::init(cfg.clone(), vocab_for(&rows)).unwrap();
    let enc_rows: Vec<_> = rows.iter().take(labels.len()).map(|p| model.encode(p).unwrap()).collect();
    let comments: Vec<&[u32]> = enc_rows.iter().map(|e| e.comment()).collect();
    let codes: Vec<&[u32]> = enc_rows.iter().map(|e| e.code()).collect();
    let mut tape = Tape::<f32>::new();
    let enc = register(&mut tape, &model.encoder);
    let head = register_bc(&mut tape, model.bc.as_ref().unwrap());
    let loss = batch_objective(&mut tape, &cfg, &enc, Some(&head), &comments, &codes, labels).unwrap();
    let g = tape.backward(loss).unwrap();
    let worst = head.flat().iter().flat_map(|&&v| g.wrt(v).into_data()).fold(0.0f32, |m, x| m.max(x.abs()));
    (tape.value(loss).data()[0] as f64, worst)
}

#[test]
fn zero_lambda_freezes_the_head() {
    let (_, g) = head_grads(0.0, &[1, 1, 0, 1]);
    assert_eq!(g, 0.0);
    let (_, g) = head_grads(0.2, &[1, 1, 0, 1]);
    assert!(g > 0.0);
}

#[test]
fn batch_without_outliers_trains() {
    let (loss, g) = head_grads(0.2, &[1, 1, 1, 1]);
    assert!(loss.is_finite() && g > 0.0);
}

#[test]
fn cood_plus_loss_decreases() {
    let dir = tempfile::tempdir().unwrap();
    let m = benchmark(dir.path(), 400, 8, &BenchmarkDraft { train_ood_frac: 0.03, ..BenchmarkDraft::default() });
    let mut cfg = tiny_config(Mode::CoodPlus);
    cfg.epochs = 3;
    let (_, report) = train_cood_plus(&cfg, &m).unwrap();
    let first = report.epochs.first().unwrap().train_loss;
    let last = report.epochs.last().unwrap().train_loss;
    assert!(last < first, "{first} -> {last}");
    assert!(report.epochs.iter().all(|e| e.saw_ood));
}

#[test]
fn evaluation_paths_and_symmetries() {
    let dir = tempfile::tempdir().unwrap();
    let m = benchmark(dir.path(), 300, 9, &BenchmarkDraft::default());
    let vocab = m.load_vocab().unwrap();
    for mode in [Mode::Cood, Mode::CoodPlus] {
        let model = Model::init(tiny_config(mode), vocab.clone()).unwrap();
        let report = evaluate_run(&model, &m, 1).unwrap();
        assert_eq!(report.rows.len(), 20);
        assert_eq!(report.aggregate.len(), 4);
        assert_eq!(evaluate_run(&model, &m, 3).unwrap(), report);

        let t = m.test_files(Scenario::Misaligned).next().unwrap();
        let pairs = coodkit::corpus::load_jsonl(&m.resolve(&t.path)).unwrap();
        let scored = model.score(&pairs).unwrap();
        for r in &scored {
            match mode {
                Mode::Cood => assert_eq!(r.p_id, r.sim),
                Mode::CoodPlus => assert_eq!(r.p_id, r.p_cl_star * r.p_bc.unwrap()),
            }
        }
        let row = evaluate_scores(&scored, t.scenario, t.seed).unwrap();
        let id: Vec<f64> = scored.iter().filter(|r| r.label == 1).map(|r| r.p_id).collect();
        let ood: Vec<f64> = scored.iter().filter(|r| r.label == 0).map(|r| r.p_id).collect();
        assert!((auroc(&ood, &id).unwrap() - (1.0 - row.auroc)).abs() < 1e-12);
        assert_eq!(evaluate_scores(&scored, t.scenario, t.seed + 1).unwrap().auroc, row.auroc);
    }
}

#[test]
fn missing_scenario_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = benchmark(dir.path(), 300, 10, &BenchmarkDraft::default());
    m.tests.retain(|t| t.scenario != Scenario::BuggyCode);
    let model = Model::init(tiny_config(Mode::Cood), m.load_vocab().unwrap()).unwrap();
    assert_eq!(evaluate_run(&model, &m, 1).unwrap_err(), PipelineError::ScenarioMissing(Scenario::BuggyCode));
}

#[test]
fn search_eval_contracts() {
    let dir = tempfile::tempdir().unwrap();
    let m = benchmark(dir.path(), 500, 11, &BenchmarkDraft::default());
    let model = Model::init(tiny_config(Mode::CoodPlus), m.load_vocab().unwrap()).unwrap();
    let n = m.test_pool.rows;
    assert_eq!(n, 100);

    let clean = search_eval(&model, &m, 0.0, 0.95, ScoreSource::Model).unwrap();
    assert_eq!(clean[0].mrr, clean[1].mrr);
    assert_eq!(clean[0].n_queries, clean[1].n_queries);

    let oracle = search_eval(&model, &m, 0.15, 0.95, ScoreSource::Oracle).unwrap();
    assert_eq!(oracle[2].n_queries, 85);
    assert_eq!(oracle[3], coodkit::metrics::SearchEvalRow { dataset: "filtered_model".into(), ..oracle[2].clone() });
    let names: Vec<&str> = oracle.iter().map(|r| r.dataset.as_str()).collect();
    assert_eq!(names, ["original", "corrupted", "filtered_ground_truth", "filtered_model"]);
}

#[test]
fn checkpoint_file_round_trip() {
    let rows = domain_a(40, 12);
    let model = Model::init(tiny_config(Mode::CoodPlus), vocab_for(&rows)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&model, &path).unwrap();
    // untrained final_loss is NaN, so compare bytes rather than structs
    assert_eq!(checkpoint_bytes(&load_checkpoint(&path).unwrap()), checkpoint_bytes(&model));
    assert!(matches!(load_checkpoint(&dir.path().join("none")), Err(PipelineError::Io(_))));
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use coodkit::corpus::{generate_synthetic_corpus, load_jsonl, save_jsonl, SynthDomain, SynthSpec};
use coodkit::metrics::write_csv;
use coodkit::pipeline::{
    evaluate_run, load_checkpoint, load_manifest, save_checkpoint, search_eval, threads_from_env, train_cood,
    train_cood_plus, Mode, PipelineError, RunConfig, ScoreSource,
};
use coodkit::scenarios::{assemble_benchmark, derive_seed, BenchmarkDraft};
use coodkit::scoring::write_scores_csv;

#[derive(Parser)]
#[command(name = "coodkit", version, about = "Out-of-distribution detection for comment/code pairs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble a benchmark directory from an ID corpus and a foreign corpus.
    GenBenchmark {
        #[arg(long)]
        id: PathBuf,
        #[arg(long)]
        foreign: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0.01)]
        train_ood_frac: f64,
        #[arg(long, default_value_t = 0.20)]
        test_ood_ratio: f64,
    },
    /// Write synthetic id.jsonl and foreign.jsonl corpora of N pairs each.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Train a detector and write a checkpoint.
    Train {
        #[arg(long)]
        mode: Mode,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-scenario, per-seed AUROC and FPR95; the aggregate goes to <out stem>.aggregate.csv.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Code-search mRR on clean, corrupted and filtered test pools.
    SearchEval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0.15)]
        corruption: f64,
        #[arg(long, default_value_t = 0.95)]
        retention: f64,
        #[arg(long)]
        out: PathBuf,
        /// Filter by true labels instead of model scores (diagnostic).
        #[arg(long, hide = true)]
        oracle: bool,
    },
    /// Score every pair of a JSONL file.
    Score {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn create_dir(dir: &std::path::Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::Io(format!("{}: {e}", dir.display())))
}

fn run(cmd: Command) -> Result<(), PipelineError> {
    match cmd {
        Command::GenBenchmark { id, foreign, out, seed, train_ood_frac, test_ood_ratio } => {
            let draft = BenchmarkDraft { train_ood_frac, test_ood_ratio, ..BenchmarkDraft::default() };
            let (id, foreign) = (load_jsonl(&id)?, load_jsonl(&foreign)?);
            create_dir(&out)?;
            let m = assemble_benchmark(&id, &foreign, &draft, seed, &out)?;
            log::info!("benchmark: {} train rows, {} test files, vocab {}", m.train.rows, m.tests.len(), m.vocab_size);
        }
        Command::Synth { out, n, seed } => {
            create_dir(&out)?;
            let id = generate_synthetic_corpus(&SynthSpec { n, domain: SynthDomain::a() }, seed);
            let foreign = generate_synthetic_corpus(&SynthSpec { n, domain: SynthDomain::b() }, derive_seed(seed, "foreign"));
            save_jsonl(&id, &out.join("id.jsonl"))?;
            save_jsonl(&foreign, &out.join("foreign.jsonl"))?;
        }
        Command::Train { mode, config, manifest, out } => {
            let mut cfg = match config {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig::default(),
            };
            cfg.mode = mode;
            let manifest = load_manifest(&manifest)?;
            let (model, report) = match mode {
                Mode::Cood => train_cood(&cfg, &manifest)?,
                Mode::CoodPlus => train_cood_plus(&cfg, &manifest)?,
            };
            log::info!("kept epoch {} of {}", report.best_epoch, report.epochs.len());
            save_checkpoint(&model, &out)?;
        }
        Command::Eval { ckpt, manifest, out } => {
            let model = load_checkpoint(&ckpt)?;
            let manifest = load_manifest(&manifest)?;
            let report = evaluate_run(&model, &manifest, threads_from_env())?;
            report.write(&out)?;
        }
        Command::SearchEval { ckpt, manifest, corruption, retention, out, oracle } => {
            let model = load_checkpoint(&ckpt)?;
            let manifest = load_manifest(&manifest)?;
            let source = if oracle { ScoreSource::Oracle } else { ScoreSource::Model };
            let rows = search_eval(&model, &manifest, corruption, retention, source)?;
            write_csv(&rows, &out)?;
        }
        Command::Score { ckpt, input, out } => {
            let model = load_checkpoint(&ckpt)?;
            let scored = model.score(&load_jsonl(&input)?)?;
            write_scores_csv(&scored, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            println!("{line}");
            ExitCode::FAILURE
        }
    }
}

use crate::autodiff::{adam_step, warmup_linear_lr, AdamState, Tape, Tensor};
use crate::corpus::{BimodalPair, EncodedPair, Vocabulary};
use crate::encoder::register;
use crate::losses::register_bc;
use crate::scenarios::{BenchmarkManifest, SeededRng};

use super::model::{batch_objective, Model};
use super::{Mode, PipelineError, RunConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub saw_ood: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub n_train: usize,
    pub n_val: usize,
    /// Validation loss of the freshly initialised model.
    pub initial_val_loss: f64,
    pub epochs: Vec<EpochLog>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub total_steps: u64,
}

struct Batch<'a> {
    comments: Vec<&'a [u32]>,
    codes: Vec<&'a [u32]>,
    labels: Vec<u8>,
}

fn gather<'a>(rows: &'a [EncodedPair], labels: &[u8], idx: &[usize]) -> Batch<'a> {
    let (comments, codes) = (idx.iter().map(|&i| rows[i].comment()).collect(), idx.iter().map(|&i| rows[i].code()).collect());
    Batch { comments, codes, labels: idx.iter().map(|&i| labels[i]).collect() }
}

/// Batches of at least two rows; a trailing singleton is dropped.
fn batches(idx: &[usize], size: usize) -> Vec<&[usize]> {
    idx.chunks(size).filter(|c| c.len() >= 2).collect()
}

fn batch_loss(model: &Model, b: &Batch<'_>) -> Result<(Tape<f32>, crate::autodiff::Var, Vec<crate::autodiff::Var>), PipelineError> {
    let mut tape = Tape::<f32>::new();
    let enc = register(&mut tape, &model.encoder);
    let head = model.bc.as_ref().map(|h| register_bc(&mut tape, h));
    let mut vars: Vec<_> = enc.flat().into_iter().copied().collect();
    if let Some(h) = &head {
        vars.extend(h.flat().into_iter().copied());
    }
    let loss = batch_objective(&mut tape, &model.config, &enc, head.as_ref(), &b.comments, &b.codes, &b.labels)?;
    Ok((tape, loss, vars))
}

fn mean_loss(model: &Model, rows: &[EncodedPair], labels: &[u8], idx: &[usize]) -> Result<f64, PipelineError> {
    let bs = batches(idx, model.config.batch_size);
    let mut total = 0.0;
    for b in &bs {
        let (tape, loss, _) = batch_loss(model, &gather(rows, labels, b))?;
        total += tape.value(loss).data()[0] as f64;
    }
    Ok(total / bs.len() as f64)
}

/// Trains a fresh model on `rows` with the objective selected by `config.mode`.
///
/// A seeded `val_frac` share is held out; the parameters with the lowest
/// validation loss over all epochs are returned. For [`Mode::Cood`] only
/// inlier rows are used.
pub fn train_on(config: &RunConfig, vocab: Vocabulary, rows: &[BimodalPair]) -> Result<(Model, TrainReport), PipelineError> {
    let mut model = Model::init(config.clone(), vocab)?;
    let rows: Vec<&BimodalPair> = match config.mode {
        Mode::Cood => rows.iter().filter(|p| p.is_inlier()).collect(),
        Mode::CoodPlus => rows.iter().collect(),
    };
    let encoded = rows.iter().map(|p| model.encode(p)).collect::<Result<Vec<_>, _>>()?;
    let labels: Vec<u8> = rows.iter().map(|p| p.label).collect();
    let n = encoded.len();
    let n_val = ((config.val_frac * n as f64).round() as usize).max(2);
    if n < n_val + 2 {
        return Err(PipelineError::InvalidConfig(format!("{n} training rows are too few to hold out {n_val}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::substream(config.seed, "val-split").shuffle(&mut order);
    let (val_idx, train_idx) = order.split_at(n_val);
    let (val_idx, train_idx) = (val_idx.to_vec(), train_idx.to_vec());

    let per_epoch = batches(&train_idx, config.batch_size).len() as u64;
    let total_steps = per_epoch * config.epochs as u64;
    let mut adam = AdamState::new(&model.flat_params());
    let initial_val_loss = mean_loss(&model, &encoded, &labels, &val_idx)?;
    log::info!("mode {} train {} val {} initial val loss {initial_val_loss:.6}", config.mode, train_idx.len(), n_val);

    let mut best: Option<(f64, Model, usize)> = None;
    let mut logs = Vec::with_capacity(config.epochs);
    let mut step = 0u64;
    for epoch in 1..=config.epochs {
        let mut idx = train_idx.clone();
        SeededRng::substream(config.seed, &format!("epoch:{epoch}")).shuffle(&mut idx);
        let mut sum = 0.0;
        let mut saw_ood = false;
        let epoch_batches = batches(&idx, config.batch_size);
        for (bi, b) in epoch_batches.iter().enumerate() {
            let batch = gather(&encoded, &labels, b);
            if config.mode == Mode::Cood {
                assert!(batch.labels.iter().all(|&l| l == 1), "similarity-only training saw an outlier row");
            }
            saw_ood |= batch.labels.contains(&0);
            let (tape, loss, vars) = batch_loss(&model, &batch)?;
            let value = tape.value(loss).data()[0] as f64;
            if !value.is_finite() {
                return Err(PipelineError::NonFiniteLoss { epoch, batch: bi, loss: value });
            }
            let grads = tape.backward(loss)?;
            let grads: Vec<Tensor<f32>> = vars.iter().map(|&v| grads.wrt(v)).collect();
            drop(tape);
            step += 1;
            let lr = warmup_linear_lr(step, total_steps, config.lr, config.warmup_frac)?;
            let mut flat = model.flat_params();
            adam_step(&mut adam, &mut flat, &grads, lr)?;
            model.set_flat_params(flat)?;
            sum += value;
        }
        if config.mode == Mode::CoodPlus && !saw_ood {
            log::warn!("epoch {epoch} saw no outlier rows");
        }
        let train_loss = sum / epoch_batches.len().max(1) as f64;
        let val_loss = mean_loss(&model, &encoded, &labels, &val_idx)?;
        log::info!("epoch {epoch} train loss {train_loss:.6} val loss {val_loss:.6}");
        model.step = step;
        model.final_loss = train_loss;
        if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
            best = Some((val_loss, model.clone(), epoch));
        }
        logs.push(EpochLog { epoch, train_loss, val_loss, saw_ood });
    }
    let (_, model, best_epoch) = best.expect("at least one epoch");
    let report = TrainReport { n_train: train_idx.len(), n_val, initial_val_loss, epochs: logs, best_epoch, total_steps };
    Ok((model, report))
}

fn train_mode(config: &RunConfig, manifest: &BenchmarkManifest, mode: Mode) -> Result<(Model, TrainReport), PipelineError> {
    if config.mode != mode {
        return Err(PipelineError::ModeMismatch { expected: mode, found: config.mode });
    }
    let vocab = manifest.load_vocab()?;
    let rows = manifest.load_split(&manifest.train)?;
    train_on(config, vocab, &rows)
}

/// InfoNCE training on the inlier rows of the benchmark training split.
pub fn train_cood(config: &RunConfig, manifest: &BenchmarkManifest) -> Result<(Model, TrainReport), PipelineError> {
    train_mode(config, manifest, Mode::Cood)
}

/// Joint margin and classification training on the mixed training split.
pub fn train_cood_plus(config: &RunConfig, manifest: &BenchmarkManifest) -> Result<(Model, TrainReport), PipelineError> {
    train_mode(config, manifest, Mode::CoodPlus)
}

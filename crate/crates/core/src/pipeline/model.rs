use crate::autodiff::{Scalar, Tape, Tensor, Var};
use crate::corpus::{encode_pair, BimodalPair, EncodedPair, Vocabulary};
use crate::encoder::{
    bc_input_features, check_params, encode_pairs, init_params, register, Encoder, EncoderConfig, EncoderParams,
};
use crate::losses::{
    bc_forward, bce_loss, cl_loss, info_nce, init_bc_head, joint_loss, margin_id_loss, margin_ood_loss, register_bc,
    similarity_matrix, BcHead, BcHeadParams, LossError,
};
use crate::scoring::{score_cl, ScoredRecord};

use super::{Mode, PipelineError, RunConfig};

const SCORE_BATCH: usize = 64;

/// A trained or freshly initialised detector.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: RunConfig,
    pub vocab: Vocabulary,
    pub encoder: EncoderParams<f32>,
    /// Present exactly when `config.mode` is [`Mode::CoodPlus`].
    pub bc: Option<BcHeadParams<f32>>,
    pub step: u64,
    pub final_loss: f64,
}

impl Model {
    pub fn init(config: RunConfig, vocab: Vocabulary) -> Result<Self, PipelineError> {
        config.validate()?;
        let enc_cfg = config.encoder_config(vocab.len());
        let encoder = init_params(&enc_cfg, config.seed)?;
        let bc = (config.mode == Mode::CoodPlus).then(|| init_bc_head(config.embed_dim, config.seed));
        Ok(Model { config, vocab, encoder, bc, step: 0, final_loss: f64::NAN })
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        self.config.encoder_config(self.vocab.len())
    }

    pub fn check(&self) -> Result<(), PipelineError> {
        check_params(&self.encoder_config(), &self.encoder)?;
        if self.bc.is_some() != (self.config.mode == Mode::CoodPlus) {
            return Err(PipelineError::InvalidConfig(format!("mode {} does not match stored head", self.config.mode)));
        }
        Ok(())
    }

    /// Parameter tensors in storage order (encoder, then head).
    pub fn flat_params(&self) -> Vec<Tensor<f32>> {
        let mut out: Vec<Tensor<f32>> = self.encoder.flat().into_iter().cloned().collect();
        if let Some(bc) = &self.bc {
            out.extend(bc.flat().into_iter().cloned());
        }
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut out = self.encoder.names();
        if self.bc.is_some() {
            out.extend(BcHead::<()>::NAMES.iter().map(|s| s.to_string()));
        }
        out
    }

    /// Replaces parameters from tensors in [`Model::flat_params`] order.
    pub fn set_flat_params(&mut self, mut flat: Vec<Tensor<f32>>) -> Result<(), PipelineError> {
        let n_enc = self.encoder.flat().len();
        let bad = || PipelineError::InvalidConfig("parameter list does not match the model layout".into());
        if let Some(bc) = &mut self.bc {
            let head = flat.split_off(n_enc);
            *bc = BcHead::from_flat(head).ok_or_else(bad)?;
        }
        self.encoder = Encoder::from_flat(flat, self.config.layers).ok_or_else(bad)?;
        self.check()
    }

    pub fn encode(&self, pair: &BimodalPair) -> Result<EncodedPair, PipelineError> {
        Ok(encode_pair(pair, &self.vocab, self.config.limits())?)
    }

    /// Pooled comment and code vectors for every pair.
    pub fn embed(&self, pairs: &[EncodedPair]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), PipelineError> {
        let mut vt = Vec::with_capacity(pairs.len());
        let mut vc = Vec::with_capacity(pairs.len());
        for chunk in pairs.chunks(SCORE_BATCH) {
            let mut tape = Tape::<f32>::new();
            let enc = register(&mut tape, &self.encoder);
            let (comments, codes) = split_ids(chunk);
            let (t, c) = encode_pairs(&mut tape, &enc, self.config.heads, &comments, &codes)?;
            vt.extend(rows_f64(tape.value(t)));
            vc.extend(rows_f64(tape.value(c)));
        }
        Ok((vt, vc))
    }

    /// Scores pairs with the path the mode defines.
    pub fn score(&self, pairs: &[BimodalPair]) -> Result<Vec<ScoredRecord>, PipelineError> {
        let encoded = pairs.iter().map(|p| self.encode(p)).collect::<Result<Vec<_>, _>>()?;
        let mut out = Vec::with_capacity(pairs.len());
        for (chunk, raw) in encoded.chunks(SCORE_BATCH).zip(pairs.chunks(SCORE_BATCH)) {
            let mut tape = Tape::<f32>::new();
            let enc = register(&mut tape, &self.encoder);
            let (comments, codes) = split_ids(chunk);
            let (t, c) = encode_pairs(&mut tape, &enc, self.config.heads, &comments, &codes)?;
            let p_bc: Vec<Option<f64>> = match &self.bc {
                Some(bc) => {
                    let head = register_bc(&mut tape, bc);
                    let f = bc_input_features(&mut tape, t, c)?;
                    let p = bc_forward(&mut tape, f, &head)?;
                    tape.value(p).data().iter().map(|&x| Some(x as f64)).collect()
                }
                None => vec![None; chunk.len()],
            };
            let (rt, rc) = (rows_f64(tape.value(t)), rows_f64(tape.value(c)));
            for (i, p) in raw.iter().enumerate() {
                let sim = score_cl(&rt[i], &rc[i]);
                out.push(ScoredRecord::new(p.id.clone(), sim, p_bc[i], p.label, p.scenario));
            }
        }
        Ok(out)
    }
}

pub(crate) fn split_ids(pairs: &[EncodedPair]) -> (Vec<&[u32]>, Vec<&[u32]>) {
    (pairs.iter().map(|p| p.comment()).collect(), pairs.iter().map(|p| p.code()).collect())
}

fn rows_f64(t: &Tensor<f32>) -> Vec<Vec<f64>> {
    let d = t.shape()[1];
    t.data().chunks(d).map(|r| r.iter().map(|&x| x as f64).collect()).collect()
}

/// The training objective for one batch: InfoNCE for [`Mode::Cood`]; for
/// [`Mode::CoodPlus`] the margin losses over the inlier/outlier partition plus
/// `λ` times cross-entropy of the classification head.
#[allow(clippy::too_many_arguments)]
pub fn batch_objective<T: Scalar>(
    tape: &mut Tape<T>,
    config: &RunConfig,
    enc: &Encoder<Var>,
    head: Option<&BcHead<Var>>,
    comments: &[&[u32]],
    codes: &[&[u32]],
    labels: &[u8],
) -> Result<Var, PipelineError> {
    let (vt, vc) = encode_pairs(tape, enc, config.heads, comments, codes)?;
    let sim = similarity_matrix(tape, vt, vc)?;
    let n = labels.len();
    match (config.mode, head) {
        (Mode::Cood, _) => Ok(info_nce(tape, sim, config.tau)?),
        (Mode::CoodPlus, Some(head)) => {
            let id: Vec<usize> = (0..n).filter(|&i| labels[i] == 1).collect();
            let ood: Vec<usize> = (0..n).filter(|&i| labels[i] == 0).collect();
            let l_id = match margin_id_loss(tape, sim, &id, config.margin) {
                Err(LossError::EmptyIdSet) => tape.constant(Tensor::scalar(T::zero())),
                other => other?,
            };
            let l_ood = margin_ood_loss(tape, sim, &ood, config.margin)?;
            let cl = cl_loss(tape, l_id, l_ood, n)?;
            let f = bc_input_features(tape, vt, vc)?;
            let p = bc_forward(tape, f, head)?;
            let bc = bce_loss(tape, p, labels)?;
            Ok(joint_loss(tape, cl, bc, config.lambda)?)
        }
        (Mode::CoodPlus, None) => Err(PipelineError::InvalidConfig("cood_plus needs a classification head".into())),
    }
}

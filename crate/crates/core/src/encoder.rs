//! Shared-weight transformer encoder for comments and code, and the feature
//! vector fed to the binary classification head.
//!
//! A batch of sequences is packed into one `[tokens, d]` matrix holding only
//! real tokens; attention runs per sequence, so padding never enters a
//! softmax or the mean pool.

use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, Scalar, Tape, Tensor, Var};
use crate::scenarios::SeededRng;

pub const INIT_RANGE: f64 = 0.05;
const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EncoderError {
    #[error("sequence {index} is empty")]
    LengthZero { index: usize },
    #[error("sequence {index} has {len} tokens, positional table holds {max}")]
    TooLong { index: usize, len: usize, max: usize },
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("parameter `{name}`: {detail}")]
    BadParameter { name: String, detail: String },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub comment_max_len: usize,
    pub code_max_len: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            vocab_size: 512,
            embed_dim: 64,
            layers: 2,
            heads: 4,
            ffn_dim: 256,
            comment_max_len: 32,
            code_max_len: 64,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        let bad = |m: String| Err(EncoderError::InvalidConfig(m));
        if self.vocab_size < 2 {
            return bad(format!("vocab_size {} < 2", self.vocab_size));
        }
        if self.embed_dim == 0 || self.heads == 0 || self.embed_dim % self.heads != 0 {
            return bad(format!("embed_dim {} not divisible by heads {}", self.embed_dim, self.heads));
        }
        if self.layers == 0 {
            return bad("layers must be at least 1".into());
        }
        if self.ffn_dim == 0 || self.comment_max_len == 0 || self.code_max_len == 0 {
            return bad("ffn_dim and max lengths must be positive".into());
        }
        Ok(())
    }

    /// Rows of the positional table, shared by both modalities.
    pub fn max_positions(&self) -> usize {
        self.comment_max_len.max(self.code_max_len)
    }

    /// Number of scalars in the encoder.
    pub fn param_count(&self) -> usize {
        let (d, f) = (self.embed_dim, self.ffn_dim);
        let layer = 4 * (d * d + d) + 4 * d + (d * f + f) + (f * d + d);
        self.vocab_size * d + self.max_positions() * d + self.layers * layer
    }
}

/// One pre-norm block. `X` is a stored tensor or a tape variable.
#[derive(Clone, Debug, PartialEq)]
pub struct Block<X> {
    pub ln1_gain: X,
    pub ln1_bias: X,
    pub wq: X,
    pub bq: X,
    pub wk: X,
    pub bk: X,
    pub wv: X,
    pub bv: X,
    pub wo: X,
    pub bo: X,
    pub ln2_gain: X,
    pub ln2_bias: X,
    pub w1: X,
    pub b1: X,
    pub w2: X,
    pub b2: X,
}

impl<X> Block<X> {
    const NAMES: [&'static str; 16] = [
        "ln1_gain", "ln1_bias", "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln2_gain", "ln2_bias", "w1", "b1",
        "w2", "b2",
    ];

    fn fields(&self) -> [&X; 16] {
        [
            &self.ln1_gain,
            &self.ln1_bias,
            &self.wq,
            &self.bq,
            &self.wk,
            &self.bk,
            &self.wv,
            &self.bv,
            &self.wo,
            &self.bo,
            &self.ln2_gain,
            &self.ln2_bias,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
        ]
    }

    fn from_fields(mut it: impl Iterator<Item = X>) -> Option<Self> {
        let mut next = || it.next();
        Some(Block {
            ln1_gain: next()?,
            ln1_bias: next()?,
            wq: next()?,
            bq: next()?,
            wk: next()?,
            bk: next()?,
            wv: next()?,
            bv: next()?,
            wo: next()?,
            bo: next()?,
            ln2_gain: next()?,
            ln2_bias: next()?,
            w1: next()?,
            b1: next()?,
            w2: next()?,
            b2: next()?,
        })
    }
}

/// The single parameter set used for both comments and code.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder<X> {
    pub token_emb: X,
    pub pos_emb: X,
    pub blocks: Vec<Block<X>>,
}

pub type EncoderParams<T = f32> = Encoder<Tensor<T>>;

impl<X> Encoder<X> {
    /// Parameter names in storage order.
    pub fn names(&self) -> Vec<String> {
        param_names(self.blocks.len())
    }

    pub fn flat(&self) -> Vec<&X> {
        let mut out = vec![&self.token_emb, &self.pos_emb];
        for b in &self.blocks {
            out.extend(b.fields());
        }
        out
    }

    /// Rebuilds from values in [`Encoder::flat`] order.
    pub fn from_flat(values: Vec<X>, layers: usize) -> Option<Self> {
        if values.len() != 2 + 16 * layers {
            return None;
        }
        let mut it = values.into_iter();
        let token_emb = it.next()?;
        let pos_emb = it.next()?;
        let blocks = (0..layers).map(|_| Block::from_fields(it.by_ref())).collect::<Option<Vec<_>>>()?;
        Some(Encoder { token_emb, pos_emb, blocks })
    }

    pub fn map<Y>(&self, mut f: impl FnMut(&X) -> Y) -> Encoder<Y> {
        let values = self.flat().into_iter().map(&mut f).collect();
        Encoder::from_flat(values, self.blocks.len()).expect("same layout")
    }
}

/// Parameter names for `layers` blocks, in storage order.
pub fn param_names(layers: usize) -> Vec<String> {
    let mut out = vec!["token_emb".to_string(), "pos_emb".to_string()];
    for l in 0..layers {
        out.extend(Block::<()>::NAMES.iter().map(|n| format!("block{l}.{n}")));
    }
    out
}

fn expected_shapes(cfg: &EncoderConfig) -> Vec<Vec<usize>> {
    let (d, f) = (cfg.embed_dim, cfg.ffn_dim);
    let mut out = vec![vec![cfg.vocab_size, d], vec![cfg.max_positions(), d]];
    for _ in 0..cfg.layers {
        out.extend([
            vec![d],
            vec![d],
            vec![d, d],
            vec![d],
            vec![d, d],
            vec![d],
            vec![d, d],
            vec![d],
            vec![d, d],
            vec![d],
            vec![d],
            vec![d],
            vec![d, f],
            vec![f],
            vec![f, d],
            vec![d],
        ]);
    }
    out
}

/// Embeddings and weight matrices uniform in `(-0.05, 0.05)`; biases 0; layer-norm gains 1.
pub fn init_params<T: Scalar>(cfg: &EncoderConfig, seed: u64) -> Result<EncoderParams<T>, EncoderError> {
    cfg.validate()?;
    let mut rng = SeededRng::substream(seed, "encoder-init");
    let values = param_names(cfg.layers)
        .iter()
        .zip(expected_shapes(cfg))
        .map(|(name, shape)| {
            let leaf = name.rsplit('.').next().unwrap_or(name);
            let n: usize = shape.iter().product();
            let data: Vec<T> = if leaf.ends_with("_gain") {
                vec![T::one(); n]
            } else if leaf.starts_with('b') || leaf.ends_with("_bias") {
                vec![T::zero(); n]
            } else {
                (0..n).map(|_| T::lit(rng.uniform(-INIT_RANGE, INIT_RANGE))).collect()
            };
            Tensor::new(shape, data).expect("finite init")
        })
        .collect();
    Ok(Encoder::from_flat(values, cfg.layers).expect("layout"))
}

/// Checks that stored parameters match the shapes `cfg` implies.
pub fn check_params<T: Scalar>(cfg: &EncoderConfig, params: &EncoderParams<T>) -> Result<(), EncoderError> {
    cfg.validate()?;
    if params.blocks.len() != cfg.layers {
        return Err(EncoderError::InvalidConfig(format!("{} blocks for {} layers", params.blocks.len(), cfg.layers)));
    }
    for ((name, t), shape) in params.names().iter().zip(params.flat()).zip(expected_shapes(cfg)) {
        if t.shape() != shape.as_slice() {
            return Err(EncoderError::BadParameter {
                name: name.clone(),
                detail: format!("shape {:?}, expected {shape:?}", t.shape()),
            });
        }
    }
    Ok(())
}

/// Registers parameters on `tape` as trainable leaves.
pub fn register<T: Scalar>(tape: &mut Tape<T>, params: &EncoderParams<T>) -> Encoder<Var> {
    params.map(|t| tape.param(t.clone()))
}

fn linear<T: Scalar>(tape: &mut Tape<T>, x: Var, w: Var, b: Var) -> Result<Var, AutodiffError> {
    let y = tape.matmul(x, w)?;
    tape.add_bias(y, b)
}

fn attention<T: Scalar>(
    tape: &mut Tape<T>,
    h: Var,
    blk: &Block<Var>,
    spans: &[(usize, usize)],
    heads: usize,
) -> Result<Var, AutodiffError> {
    let q = linear(tape, h, blk.wq, blk.bq)?;
    let k = linear(tape, h, blk.wk, blk.bk)?;
    let v = linear(tape, h, blk.wv, blk.bv)?;
    let d = tape.shape(h)[1];
    let hd = d / heads;
    let inv = 1.0 / (hd as f64).sqrt();
    let mut per_seq = Vec::with_capacity(spans.len());
    for &(start, len) in spans {
        let (qs, ks, vs) = (tape.slice_rows(q, start, len)?, tape.slice_rows(k, start, len)?, tape.slice_rows(v, start, len)?);
        let mut outs = Vec::with_capacity(heads);
        for j in 0..heads {
            let qh = tape.slice_cols(qs, j * hd, hd)?;
            let kh = tape.slice_cols(ks, j * hd, hd)?;
            let vh = tape.slice_cols(vs, j * hd, hd)?;
            let kt = tape.transpose(kh)?;
            let logits = tape.matmul(qh, kt)?;
            let logits = tape.scale(logits, inv)?;
            let att = tape.softmax_rows(logits)?;
            outs.push(tape.matmul(att, vh)?);
        }
        per_seq.push(if heads == 1 { outs[0] } else { tape.concat(&outs)? });
    }
    let joined = if per_seq.len() == 1 { per_seq[0] } else { tape.concat_rows(&per_seq)? };
    linear(tape, joined, blk.wo, blk.bo)
}

fn block_forward<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    blk: &Block<Var>,
    spans: &[(usize, usize)],
    heads: usize,
) -> Result<Var, AutodiffError> {
    let h = tape.layer_norm(x, blk.ln1_gain, blk.ln1_bias, LN_EPS)?;
    let a = attention(tape, h, blk, spans, heads)?;
    let x = tape.add(x, a)?;
    let h = tape.layer_norm(x, blk.ln2_gain, blk.ln2_bias, LN_EPS)?;
    let f = linear(tape, h, blk.w1, blk.b1)?;
    let f = tape.relu(f)?;
    let f = linear(tape, f, blk.w2, blk.b2)?;
    tape.add(x, f)
}

/// Mean-pooled vectors `[S, d]` for `S` sequences of true-length token ids,
/// running only the first `depth` blocks. `depth = 0` pools the input embeddings.
#[doc(hidden)]
pub fn encode_at_depth<T: Scalar>(
    tape: &mut Tape<T>,
    enc: &Encoder<Var>,
    heads: usize,
    seqs: &[&[u32]],
    depth: usize,
) -> Result<Var, EncoderError> {
    let max_pos = tape.shape(enc.pos_emb)[0];
    let mut ids = Vec::new();
    let mut pos = Vec::new();
    let mut spans = Vec::with_capacity(seqs.len());
    for (index, s) in seqs.iter().enumerate() {
        if s.is_empty() {
            return Err(EncoderError::LengthZero { index });
        }
        if s.len() > max_pos {
            return Err(EncoderError::TooLong { index, len: s.len(), max: max_pos });
        }
        spans.push((ids.len(), s.len()));
        ids.extend(s.iter().map(|&t| t as usize));
        pos.extend(0..s.len());
    }
    let tok = tape.embedding(enc.token_emb, &ids)?;
    let p = tape.embedding(enc.pos_emb, &pos)?;
    let mut x = tape.add(tok, p)?;
    for blk in enc.blocks.iter().take(depth) {
        x = block_forward(tape, x, blk, &spans, heads)?;
    }
    let mut pool = vec![T::zero(); seqs.len() * ids.len()];
    for (row, &(start, len)) in spans.iter().enumerate() {
        let w = T::lit(1.0 / len as f64);
        pool[row * ids.len() + start..row * ids.len() + start + len].fill(w);
    }
    let pool = tape.constant(Tensor::new(vec![seqs.len(), ids.len()], pool)?);
    Ok(tape.matmul(pool, x)?)
}

/// Pooled `[S, d]` representations of `S` sequences (ids without padding).
pub fn encode<T: Scalar>(
    tape: &mut Tape<T>,
    enc: &Encoder<Var>,
    heads: usize,
    seqs: &[&[u32]],
) -> Result<Var, EncoderError> {
    encode_at_depth(tape, enc, heads, seqs, enc.blocks.len())
}

/// Comment and code vectors `([N, d], [N, d])` for `N` pairs, computed in one
/// pass through the shared weights.
pub fn encode_pairs<T: Scalar>(
    tape: &mut Tape<T>,
    enc: &Encoder<Var>,
    heads: usize,
    comments: &[&[u32]],
    codes: &[&[u32]],
) -> Result<(Var, Var), EncoderError> {
    let n = comments.len();
    if codes.len() != n {
        return Err(AutodiffError::ShapeMismatch {
            op: "encode_pairs",
            detail: format!("{n} comments vs {} codes", codes.len()),
        }
        .into());
    }
    let all: Vec<&[u32]> = comments.iter().chain(codes).copied().collect();
    let pooled = encode(tape, enc, heads, &all)?;
    Ok((tape.slice_rows(pooled, 0, n)?, tape.slice_rows(pooled, n, n)?))
}

/// `(v_t, v_c, v_t - v_c, v_t + v_c)` concatenated along the last axis.
pub fn bc_input_features<T: Scalar>(tape: &mut Tape<T>, vt: Var, vc: Var) -> Result<Var, AutodiffError> {
    if tape.shape(vt) != tape.shape(vc) {
        return Err(AutodiffError::ShapeMismatch {
            op: "bc_input_features",
            detail: format!("{:?} vs {:?}", tape.shape(vt), tape.shape(vc)),
        });
    }
    let diff = tape.sub(vt, vc)?;
    let total = tape.add(vt, vc)?;
    tape.concat(&[vt, vc, diff, total])
}

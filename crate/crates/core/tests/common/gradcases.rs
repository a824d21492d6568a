//! Random encoder-plus-loss configurations for gradient checks.

use std::time::Instant;

use coodkit::autodiff::{gradient_check, Tape, Tensor, Var};
use coodkit::encoder::{bc_input_features, encode_pairs, init_params, param_names, Encoder, EncoderConfig};
use coodkit::losses::{
    bc_forward, bce_loss, cl_loss, info_nce, init_bc_head, joint_loss, margin_id_loss, margin_ood_loss,
    similarity_matrix, BcHead,
};
use coodkit::pipeline::PipelineError;
use coodkit::scenarios::SeededRng;

#[derive(Clone, Copy, Debug)]
pub enum Objective {
    InfoNce,
    MarginId,
    MarginOod,
    Contrastive,
    Bce,
    Joint,
}

pub const OBJECTIVES: [Objective; 6] =
    [Objective::InfoNce, Objective::MarginId, Objective::MarginOod, Objective::Contrastive, Objective::Bce, Objective::Joint];

pub struct Case {
    pub cfg: EncoderConfig,
    pub comments: Vec<Vec<u32>>,
    pub codes: Vec<Vec<u32>>,
    pub labels: Vec<u8>,
    /// Every encoder and head tensor, in storage order.
    pub params: Vec<Tensor<f64>>,
    pub n_enc: usize,
    /// Indices into `params` of the attention key biases.
    pub key_bias: Vec<usize>,
    pub tau: f64,
    pub objective: Objective,
}

pub fn seq(rng: &mut SeededRng, vocab: usize, max: usize) -> Vec<u32> {
    let len = 1 + rng.below(max);
    (0..len).map(|_| rng.below(vocab) as u32).collect()
}

pub fn make_case(k: usize) -> Case {
    let mut rng = SeededRng::substream(11, &format!("case:{k}"));
    let heads = 1 + rng.below(2);
    let cfg = EncoderConfig {
        vocab_size: 5 + rng.below(3),
        embed_dim: heads * (3 + rng.below(2)),
        layers: 1 + rng.below(2),
        heads,
        ffn_dim: 3 + rng.below(4),
        comment_max_len: 2 + rng.below(3),
        code_max_len: 2 + rng.below(4),
    };
    let n = 2 + rng.below(2);
    let comments = (0..n).map(|_| seq(&mut rng, cfg.vocab_size, cfg.comment_max_len)).collect();
    let codes = (0..n).map(|_| seq(&mut rng, cfg.vocab_size, cfg.code_max_len)).collect();
    let mut labels: Vec<u8> = (0..n).map(|_| rng.below(2) as u8).collect();
    labels[0] = 1;
    labels[n - 1] = 0;
    let enc = init_params::<f64>(&cfg, k as u64).unwrap();
    let head = init_bc_head::<f64>(cfg.embed_dim, k as u64);
    // Spread the weights so activations leave the near-linear regime.
    let mut jitter = |t: &Tensor<f64>, gain: f64| {
        let mut t = t.clone();
        for v in t.data_mut() {
            *v = *v * gain + 0.05 * rng.uniform(-1.0, 1.0);
        }
        t
    };
    // Encoder weights start at ±0.05; spreading them keeps attention and the
    // feed-forward layers out of their near-linear regime.
    let mut params: Vec<Tensor<f64>> = enc.flat().into_iter().map(|t| jitter(t, 4.0)).collect();
    let n_enc = params.len();
    params.extend(head.flat().into_iter().map(|t| jitter(t, 1.0)));
    let tau = (0.07f64.ln() * rng.uniform(0.0, 1.0)).exp();
    let key_bias = param_names(cfg.layers).iter().enumerate().filter(|(_, n)| n.ends_with(".bk")).map(|(i, _)| i).collect();
    Case { cfg, comments, codes, labels, params, n_enc, key_bias, tau, objective: OBJECTIVES[k % OBJECTIVES.len()] }
}

pub fn loss(case: &Case, tape: &mut Tape<f64>, vars: &[Var]) -> Result<Var, PipelineError> {
    let enc = Encoder::from_flat(vars[..case.n_enc].to_vec(), case.cfg.layers).unwrap();
    let head = BcHead::from_flat(vars[case.n_enc..].to_vec()).unwrap();
    let comments: Vec<&[u32]> = case.comments.iter().map(Vec::as_slice).collect();
    let codes: Vec<&[u32]> = case.codes.iter().map(Vec::as_slice).collect();
    let (vt, vc) = encode_pairs(tape, &enc, case.cfg.heads, &comments, &codes)?;
    let sim = similarity_matrix(tape, vt, vc)?;
    let n = case.labels.len();
    let id: Vec<usize> = (0..n).filter(|&i| case.labels[i] == 1).collect();
    let ood: Vec<usize> = (0..n).filter(|&i| case.labels[i] == 0).collect();
    let bce = |tape: &mut Tape<f64>| -> Result<Var, PipelineError> {
        let f = bc_input_features(tape, vt, vc)?;
        let p = bc_forward(tape, f, &head)?;
        Ok(bce_loss(tape, p, &case.labels)?)
    };
    Ok(match case.objective {
        Objective::InfoNce => info_nce(tape, sim, case.tau)?,
        Objective::MarginId => margin_id_loss(tape, sim, &id, 0.2)?,
        Objective::MarginOod => margin_ood_loss(tape, sim, &ood, 0.0)?,
        Objective::Contrastive => {
            let a = margin_id_loss(tape, sim, &id, 0.2)?;
            let b = margin_ood_loss(tape, sim, &ood, 0.0)?;
            cl_loss(tape, a, b, n)?
        }
        Objective::Bce => bce(tape)?,
        Objective::Joint => {
            let a = margin_id_loss(tape, sim, &id, 0.2)?;
            let b = margin_ood_loss(tape, sim, &ood, 0.0)?;
            let cl = cl_loss(tape, a, b, n)?;
            let bc = bce(tape)?;
            joint_loss(tape, cl, bc, 0.2)?
        }
    })
}

impl Case {
    pub fn checked(&self) -> Vec<Tensor<f64>> {
        self.params.iter().enumerate().filter(|(i, _)| !self.key_bias.contains(i)).map(|(_, t)| t.clone()).collect()
    }

    /// Full variable list with the key biases re-inserted as constants.
    pub fn with_key_bias(&self, tape: &mut Tape<f64>, checked: &[Var]) -> Vec<Var> {
        let mut it = checked.iter();
        (0..self.params.len())
            .map(|i| match self.key_bias.contains(&i) {
                true => tape.constant(self.params[i].clone()),
                false => *it.next().unwrap(),
            })
            .collect()
    }
}

pub struct Sweep {
    pub cases: usize,
    pub worst: f64,
    pub worst_case: usize,
    pub secs: f64,
}

/// Gradient check over `cases` random configurations, cycling the objectives.
pub fn sweep(cases: usize) -> Sweep {
    let start = Instant::now();
    let mut s = Sweep { cases, worst: 0.0, worst_case: 0, secs: 0.0 };
    for k in 0..cases {
        let case = make_case(k);
        let err = gradient_check(
            |tape, vars| {
                let all = case.with_key_bias(tape, vars);
                loss(&case, tape, &all)
            },
            &case.checked(),
            3e-6,
        )
        .unwrap();
        if err > s.worst {
            s.worst = err;
            s.worst_case = k;
        }
    }
    s.secs = start.elapsed().as_secs_f64();
    s
}

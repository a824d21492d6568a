//! Training objectives over an in-batch similarity matrix `S[i,j] = cos(t_i, c_j)`:
//! symmetric InfoNCE, margin losses for inliers and outliers, the binary
//! classification head with cross-entropy, and their weighted sum.

use crate::autodiff::{AutodiffError, Scalar, Tape, Tensor, Var};
use crate::scenarios::SeededRng;

pub const DEFAULT_TAU: f64 = 0.07;
pub const DEFAULT_MARGIN: f64 = 0.2;
pub const DEFAULT_LAMBDA: f64 = 0.2;
pub const BCE_EPS: f64 = 1e-7;
pub const COS_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("similarity matrix must be square and non-empty, got {0:?}")]
    NonSquare(Vec<usize>),
    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),
    #[error("margin loss needs at least one inlier")]
    EmptyIdSet,
    #[error("index {index} out of range for batch of {n}")]
    BadIndex { index: usize, n: usize },
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

type Result<T> = std::result::Result<T, LossError>;

fn square(tape: &Tape<impl Scalar>, sim: Var) -> Result<usize> {
    match tape.shape(sim) {
        &[r, c] if r == c && r > 0 => Ok(r),
        s => Err(LossError::NonSquare(s.to_vec())),
    }
}

/// `[N, N]` cosine similarities between comment rows `vt` and code rows `vc`.
pub fn similarity_matrix<T: Scalar>(tape: &mut Tape<T>, vt: Var, vc: Var) -> Result<Var> {
    let t = tape.normalize_rows(vt, COS_EPS)?;
    let c = tape.normalize_rows(vc, COS_EPS)?;
    let ct = tape.transpose(c)?;
    Ok(tape.matmul(t, ct)?)
}

/// Symmetric InfoNCE with the diagonal as positives:
/// `(1/2N) Σ_i [(lse_j S[i,j]/τ - S[i,i]/τ) + (lse_j S[j,i]/τ - S[i,i]/τ)]`.
pub fn info_nce<T: Scalar>(tape: &mut Tape<T>, sim: Var, tau: f64) -> Result<Var> {
    let n = square(tape, sim)?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(LossError::BadTemperature(tau));
    }
    let logits = tape.scale(sim, 1.0 / tau)?;
    let diag = tape.diagonal(logits)?;
    let rows = tape.logsumexp_rows(logits)?;
    let lt = tape.transpose(logits)?;
    let cols = tape.logsumexp_rows(lt)?;
    let a = tape.sub(rows, diag)?;
    let b = tape.sub(cols, diag)?;
    let both = tape.add(a, b)?;
    let total = tape.sum(both)?;
    Ok(tape.scale(total, 1.0 / (2 * n) as f64)?)
}

fn row_mask<T: Scalar>(n: usize, rows: &[usize], skip_diagonal: bool) -> Result<Tensor<T>> {
    let mut data = vec![T::zero(); n * n];
    for &i in rows {
        if i >= n {
            return Err(LossError::BadIndex { index: i, n });
        }
        for j in 0..n {
            if !(skip_diagonal && i == j) {
                data[i * n + j] = T::one();
            }
        }
    }
    Ok(Tensor::new(vec![n, n], data)?)
}

fn check_margin(m: f64) -> Result<()> {
    if m >= 0.0 && m.is_finite() {
        Ok(())
    } else {
        Err(LossError::InvalidArgument(format!("margin must be non-negative, got {m}")))
    }
}

/// `Σ_{i∈ID} (1/N) Σ_{j≠i} max(0, m - S[i,i] + S[j,i])`: every other comment,
/// inlier or not, is a negative for inlier code `c_i`.
pub fn margin_id_loss<T: Scalar>(tape: &mut Tape<T>, sim: Var, id: &[usize], m: f64) -> Result<Var> {
    let n = square(tape, sim)?;
    check_margin(m)?;
    if id.is_empty() {
        return Err(LossError::EmptyIdSet);
    }
    let mask = tape.constant(row_mask(n, id, true)?);
    // Row i of the transpose holds S[j,i] for all comments j.
    let st = tape.transpose(sim)?;
    let diag = tape.diagonal(sim)?;
    let col = tape.reshape(diag, &[n, 1])?;
    let ones = tape.constant(Tensor::full(&[1, n], T::one()));
    let pos = tape.matmul(col, ones)?;
    let gap = tape.sub(st, pos)?;
    let gap = tape.add_scalar(gap, m)?;
    let hinge = tape.relu(gap)?;
    let masked = tape.mul(hinge, mask)?;
    let total = tape.sum(masked)?;
    Ok(tape.scale(total, 1.0 / n as f64)?)
}

/// `Σ_{k∈OOD} (1/N) Σ_j max(0, S[j,k] - m)`: every comment against each outlier code.
/// An empty outlier set gives 0.
pub fn margin_ood_loss<T: Scalar>(tape: &mut Tape<T>, sim: Var, ood: &[usize], m: f64) -> Result<Var> {
    let n = square(tape, sim)?;
    check_margin(m)?;
    if ood.is_empty() {
        return Ok(tape.constant(Tensor::scalar(T::zero())));
    }
    let mask = tape.constant(row_mask(n, ood, false)?);
    let st = tape.transpose(sim)?;
    let over = tape.add_scalar(st, -m)?;
    let hinge = tape.relu(over)?;
    let masked = tape.mul(hinge, mask)?;
    let total = tape.sum(masked)?;
    Ok(tape.scale(total, 1.0 / n as f64)?)
}

/// `(1/N)(id + ood)`.
pub fn cl_loss<T: Scalar>(tape: &mut Tape<T>, id: Var, ood: Var, n: usize) -> Result<Var> {
    if n == 0 {
        return Err(LossError::InvalidArgument("batch size must be positive".into()));
    }
    let s = tape.add(id, ood)?;
    Ok(tape.scale(s, 1.0 / n as f64)?)
}

/// Three dense layers `4d -> 2d -> 2d -> 1`, tanh between, sigmoid on the output.
#[derive(Clone, Debug, PartialEq)]
pub struct BcHead<X> {
    pub w1: X,
    pub b1: X,
    pub w2: X,
    pub b2: X,
    pub w3: X,
    pub b3: X,
}

pub type BcHeadParams<T = f32> = BcHead<Tensor<T>>;

impl<X> BcHead<X> {
    pub const NAMES: [&'static str; 6] = ["bc.w1", "bc.b1", "bc.w2", "bc.b2", "bc.w3", "bc.b3"];

    pub fn flat(&self) -> Vec<&X> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3]
    }

    pub fn from_flat(values: Vec<X>) -> Option<Self> {
        let [w1, b1, w2, b2, w3, b3]: [X; 6] = values.try_into().ok()?;
        Some(BcHead { w1, b1, w2, b2, w3, b3 })
    }

    pub fn map<Y>(&self, f: impl FnMut(&X) -> Y) -> BcHead<Y> {
        BcHead::from_flat(self.flat().into_iter().map(f).collect()).expect("same layout")
    }
}

pub fn bc_head_shapes(d: usize) -> [Vec<usize>; 6] {
    [vec![4 * d, 2 * d], vec![2 * d], vec![2 * d, 2 * d], vec![2 * d], vec![2 * d, 1], vec![1]]
}

/// Glorot-uniform weights and zero biases for embedding width `d`.
pub fn init_bc_head<T: Scalar>(d: usize, seed: u64) -> BcHeadParams<T> {
    let mut rng = SeededRng::substream(seed, "bc-init");
    let tensors = bc_head_shapes(d)
        .into_iter()
        .map(|shape| {
            let n: usize = shape.iter().product();
            let data = if shape.len() == 2 {
                let a = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                (0..n).map(|_| T::lit(rng.uniform(-a, a))).collect()
            } else {
                vec![T::zero(); n]
            };
            Tensor::new(shape, data).expect("finite init")
        })
        .collect();
    BcHead::from_flat(tensors).expect("six tensors")
}

pub fn register_bc<T: Scalar>(tape: &mut Tape<T>, head: &BcHeadParams<T>) -> BcHead<Var> {
    head.map(|t| tape.param(t.clone()))
}

/// Inlier probabilities `[S]` from `[S, 4d]` features.
pub fn bc_forward<T: Scalar>(tape: &mut Tape<T>, features: Var, head: &BcHead<Var>) -> Result<Var> {
    let rows = match tape.shape(features) {
        &[r, _] => r,
        s => return Err(AutodiffError::ShapeMismatch { op: "bc_forward", detail: format!("{s:?}") }.into()),
    };
    let h = tape.matmul(features, head.w1)?;
    let h = tape.add_bias(h, head.b1)?;
    let h = tape.tanh(h)?;
    let h = tape.matmul(h, head.w2)?;
    let h = tape.add_bias(h, head.b2)?;
    let h = tape.tanh(h)?;
    let o = tape.matmul(h, head.w3)?;
    let o = tape.add_bias(o, head.b3)?;
    let p = tape.sigmoid(o)?;
    Ok(tape.reshape(p, &[rows])?)
}

/// Mean binary cross-entropy over all samples; `labels` are 1 for inliers.
pub fn bce_loss<T: Scalar>(tape: &mut Tape<T>, probs: Var, labels: &[u8]) -> Result<Var> {
    let n = labels.len();
    if tape.shape(probs) != [n] || n == 0 {
        return Err(LossError::InvalidArgument(format!("{n} labels for probabilities {:?}", tape.shape(probs))));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(LossError::InvalidArgument("labels must be 0 or 1".into()));
    }
    let p = tape.clamp(probs, BCE_EPS, 1.0 - BCE_EPS)?;
    let logp = tape.log(p)?;
    let q = tape.scale(p, -1.0)?;
    let q = tape.add_scalar(q, 1.0)?;
    let logq = tape.log(q)?;
    let y = tape.constant(Tensor::new(vec![n], labels.iter().map(|&y| T::lit(y as f64)).collect())?);
    let ny = tape.constant(Tensor::new(vec![n], labels.iter().map(|&y| T::lit(1.0 - y as f64)).collect())?);
    let a = tape.mul(y, logp)?;
    let b = tape.mul(ny, logq)?;
    let ab = tape.add(a, b)?;
    let total = tape.sum(ab)?;
    Ok(tape.scale(total, -1.0 / n as f64)?)
}

/// `cl + λ·bc`.
pub fn joint_loss<T: Scalar>(tape: &mut Tape<T>, cl: Var, bc: Var, lambda: f64) -> Result<Var> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(LossError::InvalidArgument(format!("lambda must be non-negative, got {lambda}")));
    }
    let w = tape.scale(bc, lambda)?;
    Ok(tape.add(cl, w)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim(tape: &mut Tape<f64>, rows: &[Vec<f64>]) -> Var {
        tape.constant(Tensor::from_rows(rows).unwrap())
    }

    fn val(tape: &Tape<f64>, v: Var) -> f64 {
        tape.value(v).item().unwrap()
    }

    /// Direct per-entry InfoNCE.
    fn info_nce_brute(s: &[Vec<f64>], tau: f64) -> f64 {
        let n = s.len();
        let mut total = 0.0;
        for i in 0..n {
            let row: f64 = (0..n).map(|j| (s[i][j] / tau).exp()).sum();
            let col: f64 = (0..n).map(|j| (s[j][i] / tau).exp()).sum();
            total -= ((s[i][i] / tau).exp() / row).ln() + ((s[i][i] / tau).exp() / col).ln();
        }
        total / (2 * n) as f64
    }

    #[test]
    fn info_nce_values() {
        let mut t = Tape::new();
        let one = sim(&mut t, &[vec![0.3]]);
        let l = info_nce(&mut t, one, 0.07).unwrap();
        assert_eq!(val(&t, l), 0.0);
        for n in 2..6 {
            let s = sim(&mut t, &vec![vec![0.4; n]; n]);
            let l = info_nce(&mut t, s, 0.5).unwrap();
            assert!((val(&t, l) - (n as f64).ln()).abs() < 1e-12);
        }
        let id = sim(&mut t, &[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let l = info_nce(&mut t, id, 1.0).unwrap();
        let expected = -(1f64.exp() / (1f64.exp() + 1.0)).ln();
        assert!((val(&t, l) - expected).abs() < 1e-12);
        assert!((expected - 0.313262).abs() < 1e-6);
        let rows = vec![vec![0.9, -0.2, 0.1], vec![0.3, 0.5, -0.7], vec![0.0, 0.25, 0.8]];
        let s = sim(&mut t, &rows);
        let l = info_nce(&mut t, s, 0.07).unwrap();
        assert!((val(&t, l) - info_nce_brute(&rows, 0.07)).abs() < 1e-10);
    }

    #[test]
    fn info_nce_errors() {
        let mut t = Tape::new();
        let s = sim(&mut t, &[vec![0.1, 0.2]]);
        assert!(matches!(info_nce(&mut t, s, 0.07), Err(LossError::NonSquare(_))));
        let s = sim(&mut t, &[vec![0.1]]);
        assert_eq!(info_nce(&mut t, s, 0.0), Err(LossError::BadTemperature(0.0)));
    }

    #[test]
    fn margin_examples() {
        let mut t = Tape::new();
        let s = sim(&mut t, &[vec![0.9, 0.0], vec![0.5, 0.0]]);
        let l = margin_id_loss(&mut t, s, &[0], 0.2).unwrap();
        assert_eq!(val(&t, l), 0.0);
        let s = sim(&mut t, &[vec![0.55, 0.0], vec![0.5, 0.0]]);
        let id = margin_id_loss(&mut t, s, &[0], 0.2).unwrap();
        assert!((val(&t, id) - 0.075).abs() < 1e-12);

        let s = sim(&mut t, &[vec![0.7, 0.1], vec![0.2, 0.3]]);
        let ood = margin_ood_loss(&mut t, s, &[1], 0.2).unwrap();
        assert!((val(&t, ood) - 0.05).abs() < 1e-12);

        let cl = cl_loss(&mut t, id, ood, 2).unwrap();
        assert!((val(&t, cl) - 0.0625).abs() < 1e-12);

        let s = sim(&mut t, &vec![vec![0.4; 3]; 3]);
        let l = margin_id_loss(&mut t, s, &[1], 0.2).unwrap();
        assert!((val(&t, l) - 2.0 * 0.2 / 3.0).abs() < 1e-12);
        assert_eq!(margin_id_loss(&mut t, s, &[], 0.2), Err(LossError::EmptyIdSet));
        let zero = margin_ood_loss(&mut t, s, &[], 0.2).unwrap();
        assert_eq!(val(&t, zero), 0.0);
    }

    #[test]
    fn bce_examples() {
        let mut t = Tape::new();
        let p = t.constant(Tensor::vector(vec![0.5]).unwrap());
        let l = bce_loss(&mut t, p, &[1]).unwrap();
        assert!((val(&t, l) - 2f64.ln()).abs() < 1e-12);
        let p = t.constant(Tensor::vector(vec![1.0]).unwrap());
        let l = bce_loss(&mut t, p, &[1]).unwrap();
        assert!(val(&t, l) < 1e-6);
        let p = t.constant(Tensor::vector(vec![0.9, 0.2]).unwrap());
        let bc = bce_loss(&mut t, p, &[1, 0]).unwrap();
        assert!((val(&t, bc) - 0.164252).abs() < 1e-6);
        let cl = t.constant(Tensor::scalar(0.0625));
        let j = joint_loss(&mut t, cl, bc, 0.2).unwrap();
        assert!((val(&t, j) - 0.0953504).abs() < 1e-6);
    }

    #[test]
    fn zero_head_gives_half() {
        let mut t = Tape::<f64>::new();
        let head = init_bc_head::<f64>(3, 0).map(|x| Tensor::zeros(x.shape()));
        let h = register_bc(&mut t, &head);
        let f = t.constant(Tensor::from_rows(&[vec![1.0; 12], vec![-3.0; 12]]).unwrap());
        let p = bc_forward(&mut t, f, &h).unwrap();
        assert_eq!(t.value(p).data(), &[0.5, 0.5]);
    }
}

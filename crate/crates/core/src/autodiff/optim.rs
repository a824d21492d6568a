use super::tensor::Tensor;
use super::AutodiffError;

/// Adam moments for a fixed list of parameters.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor<f32>>,
    pub v: Vec<Tensor<f32>>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Zero moments shaped like `params`, with the usual 0.9 / 0.999 / 1e-8 constants.
    pub fn new(params: &[Tensor<f32>]) -> Self {
        Self::with_hyper(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(params: &[Tensor<f32>], beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros: Vec<_> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        AdamState { step: 0, m: zeros.clone(), v: zeros, beta1, beta2, epsilon }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [Tensor<f32>],
    grads: &[Tensor<f32>],
    lr: f64,
) -> Result<(), AutodiffError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(AutodiffError::ShapeMismatch {
            op: "adam_step",
            detail: format!("{} params, {} grads, {} moments", params.len(), grads.len(), state.m.len()),
        });
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: "adam_step",
                detail: format!("param {i}: {:?} vs grad {:?}", p.shape(), g.shape()),
            });
        }
    }
    if !(lr >= 0.0) {
        return Err(AutodiffError::OutOfRange(format!("learning rate {lr}")));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        for (((pv, &gv), mv), vv) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut())
            .zip(v.data_mut().iter_mut())
        {
            let gd = gv as f64;
            let m_new = b1 * *mv as f64 + (1.0 - b1) * gd;
            let v_new = b2 * *vv as f64 + (1.0 - b2) * gd * gd;
            *mv = m_new as f32;
            *vv = v_new as f32;
            let update = lr * (m_new / c1) / ((v_new / c2).sqrt() + eps);
            *pv = (*pv as f64 - update) as f32;
        }
    }
    Ok(())
}

/// Linear ramp from 0 to `base_lr` over the warmup steps, then linear decay to 0.
pub fn warmup_linear_lr(
    step: u64,
    total_steps: u64,
    base_lr: f64,
    warmup_fraction: f64,
) -> Result<f64, AutodiffError> {
    if total_steps == 0 || step > total_steps {
        return Err(AutodiffError::OutOfRange(format!("step {step} of {total_steps}")));
    }
    if !(warmup_fraction > 0.0 && warmup_fraction < 1.0) {
        return Err(AutodiffError::OutOfRange(format!("warmup fraction {warmup_fraction}")));
    }
    let warm = warmup_fraction * total_steps as f64;
    let s = step as f64;
    let total = total_steps as f64;
    Ok(if s < warm { base_lr * s / warm } else { base_lr * (total - s) / (total - warm) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: Vec<f32>) -> Tensor<f32> {
        Tensor::vector(v).unwrap()
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut params = vec![t(vec![1.0, -2.0, 3.5])];
        let mut st = AdamState::new(&params);
        for _ in 0..5 {
            adam_step(&mut st, &mut params, &[t(vec![0.0; 3])], 1e-2).unwrap();
        }
        assert_eq!(params[0].data(), &[1.0, -2.0, 3.5]);
        assert_eq!(st.step, 5);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m̂ = g, v̂ = g², so the step is lr * g / (|g| + eps) ≈ lr * sign(g).
        for g in [1e-3f32, 0.5, -7.0] {
            let mut params = vec![t(vec![0.0])];
            let mut st = AdamState::new(&params);
            adam_step(&mut st, &mut params, &[t(vec![g])], 1e-3).unwrap();
            let expected = -1e-3 * (g as f64) / ((g as f64).abs() + 1e-8);
            assert!((params[0].data()[0] as f64 - expected).abs() < 1e-9, "g={g}");
        }
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let mut params = vec![t(vec![0.0])];
        let mut st = AdamState::new(&params);
        let mut prev = 0.0f32;
        for _ in 0..2 {
            adam_step(&mut st, &mut params, &[t(vec![2.0])], 0.1).unwrap();
            assert!(params[0].data()[0] < prev);
            prev = params[0].data()[0];
        }
        // Scalar oracle: with constant g the bias-corrected ratio stays exactly 1.
        assert!((prev as f64 + 0.2).abs() < 1e-6);
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut params = vec![t(vec![0.25, 0.5])];
        let mut st = AdamState::new(&params);
        adam_step(&mut st, &mut params, &[t(vec![3.0, -1.0])], 0.0).unwrap();
        assert_eq!(params[0].data(), &[0.25, 0.5]);
    }

    #[test]
    fn adam_rejects_shape_mismatch() {
        let mut params = vec![t(vec![0.0, 1.0])];
        let mut st = AdamState::new(&params);
        let err = adam_step(&mut st, &mut params, &[t(vec![1.0])], 0.1).unwrap_err();
        assert!(matches!(err, AutodiffError::ShapeMismatch { .. }));
    }

    #[test]
    fn warmup_schedule_endpoints() {
        assert_eq!(warmup_linear_lr(0, 100, 1e-3, 0.1).unwrap(), 0.0);
        assert!((warmup_linear_lr(10, 100, 1e-3, 0.1).unwrap() - 1e-3).abs() < 1e-15);
        assert_eq!(warmup_linear_lr(100, 100, 1e-3, 0.1).unwrap(), 0.0);
        assert!((warmup_linear_lr(5, 100, 1e-3, 0.1).unwrap() - 5e-4).abs() < 1e-15);
        assert!((warmup_linear_lr(55, 100, 1e-3, 0.1).unwrap() - 5e-4).abs() < 1e-15);
    }

    #[test]
    fn warmup_schedule_rejects_bad_input() {
        assert!(warmup_linear_lr(101, 100, 1e-3, 0.1).is_err());
        assert!(warmup_linear_lr(0, 100, 1e-3, 0.0).is_err());
        assert!(warmup_linear_lr(0, 100, 1e-3, 1.0).is_err());
        assert!(warmup_linear_lr(0, 0, 1e-3, 0.1).is_err());
    }
}

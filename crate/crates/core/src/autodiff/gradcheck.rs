use super::tape::{Tape, Var};
use super::tensor::Tensor;
use super::AutodiffError;

/// Compares reverse-mode gradients with central differences in `f64`.
///
/// `f` builds a scalar loss from the registered parameters. Returns the
/// maximum over every parameter entry of
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn gradient_check<F, E>(f: F, params: &[Tensor<f64>], h: f64) -> Result<f64, E>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, E>,
    E: From<AutodiffError>,
{
    if !(h > 0.0) {
        return Err(AutodiffError::OutOfRange(format!("step size {h}")).into());
    }
    let eval = |values: &[Tensor<f64>]| -> Result<(Tape<f64>, Vec<Var>, Var), E> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|p| tape.param(p.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        Ok((tape, vars, loss))
    };
    let (tape, vars, loss) = eval(params)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = vars.iter().map(|&v| grads.wrt(v)).collect();
    drop(tape);

    let scalar = |values: &[Tensor<f64>]| -> Result<f64, E> {
        let (tape, _, loss) = eval(values)?;
        Ok(tape.value(loss).data()[0])
    };

    let mut work: Vec<Tensor<f64>> = params.to_vec();
    let mut worst = 0.0f64;
    for p in 0..params.len() {
        for i in 0..params[p].len() {
            let orig = params[p].data()[i];
            work[p].data_mut()[i] = orig + h;
            let plus = scalar(&work)?;
            work[p].data_mut()[i] = orig - h;
            let minus = scalar(&work)?;
            work[p].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[p].data()[i];
            let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

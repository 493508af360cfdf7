use crate::error::{Result, TensorError};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Max over components of `|analytic - central| / max(1, |central|)` for a
/// scalar-valued `f` at `x`, with central differences of step `eps`.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>,
{
    if !x.is_finite() {
        return Err(TensorError::NonFinite { op: "grad_check input" });
    }
    let tape = Tape::new();
    let xv = tape.var(x.clone())?;
    let y = f(&tape, xv)?;
    let analytic = tape.backward(&y)?.wrt(&xv)?.clone();

    let eval = |xs: Tensor| -> Result<f64> {
        let tape = Tape::new();
        let xv = tape.constant(xs)?;
        let v = f(&tape, xv)?.item()?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(TensorError::NonFinite { op: "grad_check" })
        }
    };

    let mut worst = 0.0_f64;
    for k in 0..x.len() {
        let mut plus = x.clone();
        plus.values_mut()[k] += eps;
        let mut minus = x.clone();
        minus.values_mut()[k] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let err = (analytic.values()[k] - numeric).abs() / numeric.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

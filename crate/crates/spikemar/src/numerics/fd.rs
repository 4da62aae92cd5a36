//! Central finite differences — the independent oracle gradient checks are
//! measured against. Deliberately knows nothing about the tape.

use crate::error::{Error, Result};

use super::tensor::Tensor;

/// Default step for central differences.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Per-element central difference `(f(x+h*e) - f(x-h*e)) / 2h` of a
/// scalar-valued function. `f` must be deterministic; a non-scalar output is
/// a contract error.
pub fn finite_diff_grad<F>(mut f: F, x: &Tensor, h: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<Tensor>,
{
    const OP: &str = "finite_diff_grad";
    if h <= 0.0 {
        return Err(Error::contract(OP, format!("step must be > 0, got {h}")));
    }
    let mut grad = vec![0.0; x.numel()];
    for i in 0..x.numel() {
        let plus = eval_scalar(&mut f, x, i, h)?;
        let minus = eval_scalar(&mut f, x, i, -h)?;
        grad[i] = (plus - minus) / (2.0 * h);
    }
    Tensor::new(x.shape().to_vec(), grad)
}

fn eval_scalar<F>(f: &mut F, x: &Tensor, i: usize, delta: f64) -> Result<f64>
where
    F: FnMut(&Tensor) -> Result<Tensor>,
{
    let mut probe = x.clone();
    probe.data_mut()[i] += delta;
    let out = f(&probe)?;
    if out.numel() != 1 {
        return Err(Error::contract(
            "finite_diff_grad",
            format!("f must be scalar-valued, got shape {:?}", out.shape()),
        ));
    }
    Ok(out.data()[0])
}

/// Largest elementwise relative error between `a` and `b`, with `atol` as the
/// denominator floor so near-zero pairs compare absolutely.
pub fn max_rel_err(a: &[f64], b: &[f64], atol: f64) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch in max_rel_err");
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(atol))
        .fold(0.0, f64::max)
}

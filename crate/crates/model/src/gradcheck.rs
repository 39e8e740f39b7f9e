//! Analytic gradients against central finite differences.

use crate::scalar::Scalar;
use crate::transformer::Model;
use crate::ModelError;

/// Worst relative error within one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub worst_index: usize,
}

/// Relative error with a floor on the denominator so that entries whose
/// gradient is numerically zero compare on an absolute scale.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Five-point central difference of `f` at `x` with spacing `h`.
pub fn central_difference(mut f: impl FnMut(f64) -> Result<f64, ModelError>, x: f64, h: f64) -> Result<f64, ModelError> {
    let (p1, m1, p2, m2) = (f(x + h)?, f(x - h)?, f(x + 2.0 * h)?, f(x - 2.0 * h)?);
    Ok((8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h))
}

/// Compares `model`'s analytic gradient with central differences of the same
/// weights evaluated in double precision, one entry at a time. The
/// denominator floor is `floor_fraction` of the tensor's largest numeric
/// gradient.
pub fn check_gradients<F: Scalar>(
    model: &Model<F>,
    batch: &[Vec<u32>],
    step: f64,
    floor_fraction: f64,
) -> Result<Vec<TensorCheck>, ModelError> {
    let mut analytic = vec![F::zero(); model.n_params()];
    model.loss_and_grad(batch, &mut analytic, None)?;
    let mut probe: Model<f64> = model.cast();
    let mut out = Vec::with_capacity(probe.layout.tensors.len());
    for t in probe.layout.tensors.clone() {
        let mut numeric = Vec::with_capacity(t.len());
        for i in t.range() {
            let orig = probe.params[i];
            let d = central_difference(
                |x| {
                    probe.params[i] = x;
                    probe.loss(batch)
                },
                orig,
                step,
            )?;
            probe.params[i] = orig;
            numeric.push(d);
        }
        let floor = floor_fraction * numeric.iter().fold(0.0f64, |m, v| m.max(v.abs())) + f64::MIN_POSITIVE;
        let mut worst = (0.0, t.offset);
        for (i, &n) in t.range().zip(&numeric) {
            let a = analytic[i].to_f64().unwrap_or(f64::NAN);
            let e = relative_error(a, n, floor);
            if !(e <= worst.0) {
                worst = (e, i);
            }
        }
        out.push(TensorCheck { name: t.name.clone(), max_rel_error: worst.0, worst_index: worst.1 - t.offset });
    }
    Ok(out)
}

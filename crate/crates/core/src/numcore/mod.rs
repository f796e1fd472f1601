//! Dense tensors, reverse-mode differentiation, initialization, optimization
//! and gradient checking.

mod adam;
pub mod checkpoint;
mod lstm;
mod ops;
mod rng;
mod scalar;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use lstm::LstmCell;
pub use ops::{clip_global_norm, cosine, finite_diff_grad, lstm_step, softmax, xavier_bound, xavier_uniform, LstmWeights};
pub use rng::SeededRng;
pub use scalar::Scalar;
pub use tape::{Grads, Tape, Var};
pub use tensor::{ParamId, ParamStore, Parameter, Tensor};

/// Denominator floor for gradient checks: gradients smaller than this are
/// compared on absolute error `GRAD_CHECK_FLOOR * tolerance`.
pub const GRAD_CHECK_FLOOR: f64 = 1e-4;

/// Relative error used by every gradient check in the crate:
/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Finite-difference check of every parameter gradient, using the
/// fourth-order central stencil.
///
/// `loss` evaluates the scalar objective for a given store; `analytic` holds
/// the gradients to be checked (typically the same store after a backward
/// pass). Returns the worst relative error and the parameter it occurred in.
pub fn check_param_gradients<F, L>(analytic: &ParamStore<F>, h: F, floor: f64, mut loss: L) -> Result<(f64, String)>
where
    F: Scalar,
    L: FnMut(&ParamStore<F>) -> Result<F>,
{
    let mut probe = analytic.clone();
    let mut worst = (0.0, String::new());
    for id in analytic.ids() {
        let p = analytic.get(id);
        for i in 0..p.value.len() {
            let orig = p.value.data()[i];
            let mut at = |k: f64| -> Result<f64> {
                probe.get_mut(id).value.data_mut()[i] = orig + h * F::lit(k);
                Ok(loss(&probe)?.as_f64())
            };
            let (p2, p1, m1, m2) = (at(2.0)?, at(1.0)?, at(-1.0)?, at(-2.0)?);
            probe.get_mut(id).value.data_mut()[i] = orig;
            let numeric = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h.as_f64());
            let err = relative_error(p.grad.data()[i].as_f64(), numeric, floor);
            if !err.is_finite() {
                crate::error::bail!(Numeric, "non-finite gradient check for {}", p.name);
            }
            if err > worst.0 {
                worst = (err, format!("{}[{}]", p.name, i));
            }
        }
    }
    Ok(worst)
}

use crate::error::Result;

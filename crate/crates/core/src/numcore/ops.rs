//! Plain-value numeric operations.

use super::tape::softmax_values;
use super::{Scalar, SeededRng, Tensor};
use crate::error::{bail, Result};

pub fn softmax<F: Scalar>(logits: &[F]) -> Result<Vec<F>> {
    if logits.is_empty() {
        bail!(Argument, "softmax of an empty vector");
    }
    if logits.iter().any(|x| !x.is_finite()) {
        bail!(Numeric, "softmax input contains non-finite values");
    }
    Ok(softmax_values(logits))
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine<F: Scalar>(a: &[F], b: &[F]) -> Result<F> {
    if a.len() != b.len() {
        bail!(Argument, "cosine of vectors with lengths {} and {}", a.len(), b.len());
    }
    let dot: F = a.iter().zip(b).map(|(&x, &y)| x * y).sum();
    let na = a.iter().map(|&x| x * x).sum::<F>().sqrt();
    let nb = b.iter().map(|&x| x * x).sum::<F>().sqrt();
    if na == F::zero() || nb == F::zero() {
        return Ok(F::zero());
    }
    // rounding can push |cos| a hair above 1
    Ok((dot / (na * nb)).max(-F::one()).min(F::one()))
}

/// Weights of one LSTM cell. `w` is `4H × (I + H)` acting on `[x; h]`, with
/// gate blocks ordered input, forget, output, candidate. `b` has length `4H`.
#[derive(Clone, Debug)]
pub struct LstmWeights<F> {
    pub w: Tensor<F>,
    pub b: Tensor<F>,
}

impl<F: Scalar> LstmWeights<F> {
    pub fn hidden(&self) -> usize {
        self.w.rows() / 4
    }

    pub fn input(&self) -> usize {
        self.w.cols() - self.hidden()
    }
}

/// One step of a standard LSTM cell: returns `(h', c')`.
pub fn lstm_step<F: Scalar>(
    x: &[F],
    h: &[F],
    c: &[F],
    weights: &LstmWeights<F>,
) -> Result<(Vec<F>, Vec<F>)> {
    let hidden = weights.hidden();
    if weights.w.shape().len() != 2 || weights.w.rows() != 4 * hidden || weights.b.len() != 4 * hidden {
        bail!(Argument, "malformed LSTM weights {:?} / {:?}", weights.w.shape(), weights.b.shape());
    }
    if x.len() != weights.input() || h.len() != hidden || c.len() != hidden {
        bail!(
            Argument,
            "LSTM dimension mismatch: x {} h {} c {} for input {} hidden {}",
            x.len(),
            h.len(),
            c.len(),
            weights.input(),
            hidden
        );
    }
    let sig = |v: F| F::one() / (F::one() + (-v).exp());
    let xh: Vec<F> = x.iter().chain(h).copied().collect();
    let z: Vec<F> = (0..4 * hidden)
        .map(|r| weights.b.data()[r] + weights.w.row(r).iter().zip(&xh).map(|(&a, &b)| a * b).sum::<F>())
        .collect();
    let mut h_new = vec![F::zero(); hidden];
    let mut c_new = vec![F::zero(); hidden];
    for k in 0..hidden {
        let i = sig(z[k]);
        let f = sig(z[hidden + k]);
        let o = sig(z[2 * hidden + k]);
        let g = z[3 * hidden + k].tanh();
        c_new[k] = f * c[k] + i * g;
        h_new[k] = o * c_new[k].tanh();
    }
    Ok((h_new, c_new))
}

/// `fan_out × fan_in` matrix with entries uniform in `[-b, b]`,
/// `b = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform<F: Scalar>(fan_in: usize, fan_out: usize, rng: &mut SeededRng) -> Result<Tensor<F>> {
    if fan_in == 0 || fan_out == 0 {
        bail!(Argument, "xavier_uniform needs positive fans, got ({fan_in}, {fan_out})");
    }
    let bound = xavier_bound(fan_in, fan_out);
    let data = (0..fan_in * fan_out).map(|_| F::lit(rng.uniform(-bound, bound))).collect();
    Tensor::from_vec(&[fan_out, fan_in], data)
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<'a, F, I>(grads: I, max_norm: F) -> Result<F>
where
    F: Scalar,
    I: IntoIterator<Item = &'a mut Tensor<F>>,
{
    let mut grads: Vec<&mut Tensor<F>> = grads.into_iter().collect();
    if grads.iter().any(|g| !g.is_finite()) {
        bail!(Numeric, "non-finite gradient before clipping");
    }
    let norm = grads.iter().map(|g| g.norm_sq()).sum::<F>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|x| *x *= scale);
        }
    }
    Ok(norm)
}

/// Central-difference gradient of `f` at `x`.
pub fn finite_diff_grad<F, Func>(mut f: Func, x: &Tensor<F>, h: F) -> Result<Tensor<F>>
where
    F: Scalar,
    Func: FnMut(&Tensor<F>) -> F,
{
    let mut probe = x.clone();
    let mut out = Tensor::zeros(x.shape());
    let two_h = h + h;
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - h;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            bail!(Numeric, "function not finite near coordinate {i}");
        }
        out.data_mut()[i] = (plus - minus) / two_h;
    }
    Ok(out)
}

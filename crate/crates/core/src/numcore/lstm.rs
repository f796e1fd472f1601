use super::{ops, ParamId, ParamStore, Scalar, SeededRng, Tape, Tensor, Var};
use crate::error::Result;

/// LSTM cell whose weights live in a [`ParamStore`].
#[derive(Clone, Copy, Debug)]
pub struct LstmCell {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    /// Registers `{prefix}.w` (Xavier uniform) and `{prefix}.b` (zeros).
    pub fn register<F: Scalar>(
        params: &mut ParamStore<F>,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let w = params.add(format!("{prefix}.w"), ops::xavier_uniform(input + hidden, 4 * hidden, rng)?)?;
        let b = params.add(format!("{prefix}.b"), Tensor::zeros(&[4 * hidden]))?;
        Ok(Self { w, b, input, hidden })
    }

    pub fn step<F: Scalar>(&self, tape: &mut Tape<F>, params: &ParamStore<F>, x: Var, h: Var, c: Var) -> (Var, Var) {
        let xh = tape.concat(&[x, h]);
        let gates = tape.affine(params, self.w, Some(self.b), xh);
        tape.lstm_act(gates, c)
    }

    pub fn weights<F: Scalar>(&self, params: &ParamStore<F>) -> ops::LstmWeights<F> {
        ops::LstmWeights { w: params.value(self.w).clone(), b: params.value(self.b).clone() }
    }
}

use super::vocab::Vocabulary;
use super::word_vectors::WordEmbeddingTable;
use crate::error::Result;
use crate::numcore::{LstmCell, ParamStore, Scalar, SeededRng, Tape, Tensor, Var};

/// Bidirectional LSTM sentence encoder. The embedding of a sentence is the
/// final forward hidden state concatenated with the final backward hidden
/// state.
#[derive(Clone, Copy, Debug)]
pub struct SentenceEncoder {
    pub embeddings: WordEmbeddingTable,
    pub forward: LstmCell,
    pub backward: LstmCell,
}

impl SentenceEncoder {
    pub fn register<F: Scalar>(
        params: &mut ParamStore<F>,
        table: Tensor<F>,
        hidden: usize,
        trainable_embeddings: bool,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let (rows, dim) = (table.rows(), table.cols());
        let param = params.add("encoder.embeddings", table)?;
        params.get_mut(param).trainable = trainable_embeddings;
        let forward = LstmCell::register(params, "encoder.fwd", dim, hidden, rng)?;
        let backward = LstmCell::register(params, "encoder.bwd", dim, hidden, rng)?;
        Ok(Self {
            embeddings: WordEmbeddingTable { param, rows, dim, trainable: trainable_embeddings },
            forward,
            backward,
        })
    }

    pub fn output_dim(&self) -> usize {
        2 * self.forward.hidden
    }

    /// Encodes token ids; an empty sequence encodes to the zero vector.
    pub fn encode<F: Scalar>(&self, tape: &mut Tape<F>, params: &ParamStore<F>, ids: &[usize]) -> Var {
        if ids.is_empty() {
            return tape.zeros(self.output_dim());
        }
        let words: Vec<Var> = ids.iter().map(|&i| tape.row(params, self.embeddings.param, i)).collect();
        let run = |tape: &mut Tape<F>, cell: &LstmCell, order: &mut dyn Iterator<Item = &Var>| {
            let mut h = tape.zeros(cell.hidden);
            let mut c = tape.zeros(cell.hidden);
            for &x in order {
                (h, c) = cell.step(tape, params, x, h, c);
            }
            h
        };
        let hf = run(tape, &self.forward, &mut words.iter());
        let hb = run(tape, &self.backward, &mut words.iter().rev());
        tape.concat(&[hf, hb])
    }
}

/// Parameter-free encoder mapping each distinct sentence to a unit basis
/// vector chosen by a stable hash. Distinct sentences are orthonormal
/// unless their hashes collide modulo the dimension.
#[derive(Clone, Copy, Debug)]
pub struct StubEncoder {
    pub dim: usize,
}

impl StubEncoder {
    pub fn basis_index(&self, tokens: &[String]) -> Option<usize> {
        if tokens.is_empty() {
            return None;
        }
        Some((crate::fnv1a(tokens.join(" ").as_bytes()) % self.dim as u64) as usize)
    }

    pub fn embed<F: Scalar>(&self, tokens: &[String]) -> Vec<F> {
        let mut v = vec![F::zero(); self.dim];
        if let Some(i) = self.basis_index(tokens) {
            v[i] = F::one();
        }
        v
    }
}

/// Either encoder behind one interface.
#[derive(Clone, Copy, Debug)]
pub enum TextEncoder {
    Recurrent(SentenceEncoder),
    Stub(StubEncoder),
}

impl TextEncoder {
    pub fn dim(&self) -> usize {
        match self {
            TextEncoder::Recurrent(e) => e.output_dim(),
            TextEncoder::Stub(s) => s.dim,
        }
    }

    pub fn encode_tokens<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        params: &ParamStore<F>,
        vocab: &Vocabulary,
        tokens: &[String],
    ) -> Var {
        match self {
            TextEncoder::Recurrent(e) => e.encode(tape, params, &vocab.encode(tokens)),
            TextEncoder::Stub(s) => tape.constant(s.embed(tokens)),
        }
    }

    /// Plain-value encoding of one token list.
    pub fn encode<F: Scalar>(&self, params: &ParamStore<F>, vocab: &Vocabulary, tokens: &[String]) -> Vec<F> {
        let mut tape = Tape::new();
        let v = self.encode_tokens(&mut tape, params, vocab, tokens);
        tape.value(v).to_vec()
    }
}

/// Encodes every template; row `k` is the embedding of `templates[k]`.
pub fn encode_catalog<F: Scalar, S: AsRef<str>>(
    encoder: &TextEncoder,
    params: &ParamStore<F>,
    vocab: &Vocabulary,
    templates: &[S],
) -> Tensor<F> {
    let rows: Vec<Vec<F>> = templates
        .iter()
        .map(|t| encoder.encode(params, vocab, &super::tokenize(t.as_ref())))
        .collect();
    Tensor::from_rows(&rows, encoder.dim()).expect("encoder output has fixed dimension")
}

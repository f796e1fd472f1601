use std::fs;
use std::path::Path;

use super::vocab::{Vocabulary, PAD, UNK};
use crate::error::{Error, Result};
use crate::numcore::{ParamId, Scalar, SeededRng, Tensor};

/// Range of the uniform initializer for embedding rows without a
/// pretrained vector.
pub const EMBED_INIT_RANGE: f64 = 0.1;

/// Word-embedding matrix registered in a parameter store.
#[derive(Clone, Copy, Debug)]
pub struct WordEmbeddingTable {
    pub param: ParamId,
    pub rows: usize,
    pub dim: usize,
    pub trainable: bool,
}

/// `rows × dim` matrix uniform in `[-0.1, 0.1]` with a zero padding row.
pub fn random_embeddings<F: Scalar>(rows: usize, dim: usize, rng: &mut SeededRng) -> Tensor<F> {
    let mut t = Tensor::zeros(&[rows, dim]);
    for r in 0..rows {
        for x in t.row_mut(r) {
            *x = F::lit(rng.uniform(-EMBED_INIT_RANGE, EMBED_INIT_RANGE));
        }
    }
    if rows > PAD {
        t.row_mut(PAD).fill(F::zero());
    }
    t
}

/// Embedding matrix initialized from a pretrained vector file.
#[derive(Clone, Debug)]
pub struct LoadedVectors<F> {
    pub table: Tensor<F>,
    /// Fraction of vocabulary tokens (excluding padding and unknown) found
    /// in the file.
    pub coverage: f64,
}

/// Reads a whitespace-separated `token v1 … vd` file. Rows for tokens in
/// the file are copied; every other row is uniform in `[-0.1, 0.1]`.
pub fn load_word_vectors<F: Scalar>(
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut SeededRng,
) -> Result<LoadedVectors<F>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_word_vectors(&text, path, vocab, dim, rng)
}

pub fn parse_word_vectors<F: Scalar>(
    text: &str,
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut SeededRng,
) -> Result<LoadedVectors<F>> {
    let mut table = random_embeddings(vocab.len(), dim, rng);
    let mut found = vec![false; vocab.len()];
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let values: Vec<&str> = fields.collect();
        if values.len() != dim {
            return Err(Error::Format(format!(
                "{}:{line_no}: expected {dim} values for {token:?}, found {}",
                path.display(),
                values.len()
            )));
        }
        let Some(id) = vocab.get(token) else { continue };
        let mut row = Vec::with_capacity(dim);
        for v in values {
            let x: f64 = v.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                msg: format!("bad number {v:?}"),
            })?;
            row.push(F::lit(x));
        }
        table.row_mut(id).copy_from_slice(&row);
        found[id] = true;
    }
    let eligible = vocab.len().saturating_sub(2);
    let hits = found.iter().enumerate().filter(|&(i, &f)| f && i != PAD && i != UNK).count();
    let coverage = if eligible == 0 { 0.0 } else { hits as f64 / eligible as f64 };
    Ok(LoadedVectors { table, coverage })
}

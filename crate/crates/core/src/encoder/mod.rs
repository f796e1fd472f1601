//! Tokenization, vocabularies, word vectors and sentence encoders.

mod sentence;
mod tokenize;
mod vocab;
mod word_vectors;

pub use sentence::{encode_catalog, SentenceEncoder, StubEncoder, TextEncoder};
pub use tokenize::{is_placeholder, tokenize};
pub(crate) use tokenize::placeholder_len;
pub use vocab::{Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};
pub use word_vectors::{
    load_word_vectors, parse_word_vectors, random_embeddings, LoadedVectors, WordEmbeddingTable, EMBED_INIT_RANGE,
};

//! Corpus loading, delexicalization, template catalogs and candidate sets.

mod candidates;
mod dataset;
mod delex;
mod fixture;
mod kvret;

pub use candidates::{candidate_set, make_candidates, NUM_CANDIDATES};
pub use dataset::{
    dataset_stats, resample_candidates, write_atomic, DatasetStats, DomainDataset, PreprocessOptions, ProcessedDialog,
    ProcessedTurn, Split,
};
pub use delex::{delexicalize, dialog_lexicon, relexicalize, slot_name};
pub use fixture::{make_fixture, Fixture, FIXTURE_DOMAIN};
pub use kvret::{load_kvret, merge_same_speaker, parse_kvret, to_kvret_json, RawDialog, RawTurn, Speaker};

//! Action templates, entity tracking and the trainable dialog model.

mod api;
mod catalog;
mod config;
mod entities;
mod net;

pub use api::{api_dispatch, ApiCallback, ApiRegistry};
pub use catalog::{is_api_text, ActionTemplate, TemplateCatalog};
pub use config::{EncoderKind, ModelConfig, ScoreMode};
pub use entities::{
    entity_output, entity_track, extract_entities, replace_mentions, DomainSchema, EntityMention, EntityStore, Lexicon,
};
pub use net::{
    select_action, select_candidate, ActiveRules, CandidateMode, DialogState, Model, ModelLayout, NlrSummary,
    Session, TapeState, TurnOutcome, TurnStep, TurnTrace, TAU_INIT,
};

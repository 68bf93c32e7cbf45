//! Retrieval-based response selection for chat.
//!
//! A user message and its context fetch candidate responses from an inverted
//! index of message–response pairs; candidates are featurized with a twin-tower
//! character-trigram convolutional semantic model plus n-gram match counts and
//! ordered by a LambdaMART ensemble.

mod binio;
pub mod cdssm;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod index;
pub mod pipeline;
pub mod ranker;
pub mod service;
pub mod synth;

pub use cdssm::{train_cdssm, CdssmConfig, CdssmModel, TrigramVocab};
pub use corpus::{tokenize, ConversationTriple, FilterConfig, MrPair, Utterance};
pub use error::{Error, Result};
pub use eval::{run_eval, EvalConfig, System};
pub use features::{cmm_counts, extract_features, FeatureVector, NUM_FEATURES};
pub use index::{Candidate, FetchParams, InvertedIndex};
pub use ranker::{ndcg_at_k, rank_candidates, train_mart, MartConfig, MartEnsemble};
pub use service::{Engine, ServiceConfig, Session, SessionStore};

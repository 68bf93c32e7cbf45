//! Slow, obviously-correct reference implementations used to check the
//! optimized code paths in `chatrank-core`.

pub mod gradcheck;
pub mod judgments;
pub mod ngram;
pub mod rank;
pub mod tfidf;

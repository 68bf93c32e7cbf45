//! Chat runtime: sessions and the fetch → featurize → rank pipeline.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::cdssm::CdssmModel;
use crate::corpus::Utterance;
use crate::error::{Error, Result};
use crate::index::{FetchParams, InvertedIndex};
use crate::ranker::{rank_candidates, MartEnsemble};

pub const DEFAULT_FALLBACK: &str = "hmm, tell me more?";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    Bot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub utterance: Utterance,
}

/// One conversation. History alternates user and bot turns, starting with
/// the user.
#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub history: Vec<Turn>,
    pub created: Instant,
    pub last_active: Instant,
}

impl Session {
    pub fn new(id: impl Into<String>, now: Instant) -> Self {
        Session {
            id: id.into(),
            history: Vec::new(),
            created: now,
            last_active: now,
        }
    }

    /// The last `turns` turns joined into one utterance (empty for a fresh
    /// session).
    pub fn context(&self, turns: usize) -> Utterance {
        let start = self.history.len().saturating_sub(turns);
        let recent = &self.history[start..];
        match recent {
            [] => Utterance::empty(),
            [one] => one.utterance.clone(),
            many => {
                let raw: Vec<&str> = many.iter().map(|t| t.utterance.raw.as_str()).collect();
                Utterance {
                    raw: raw.join(" "),
                    tokens: many.iter().flat_map(|t| t.utterance.tokens.clone()).collect(),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub fetch: FetchParams,
    /// Number of preceding turns used as context.
    pub context_turns: usize,
    pub fallback: String,
    /// Candidates kept in a trace.
    pub trace_top_n: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            fetch: FetchParams::default(),
            context_turns: 1,
            fallback: DEFAULT_FALLBACK.to_string(),
            trace_top_n: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceCandidate {
    pub doc_id: u32,
    pub message: String,
    pub response: String,
    pub fetch_score: f64,
    pub features: Vec<f64>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RespondTrace {
    pub response: String,
    pub context: String,
    pub candidate_count: usize,
    pub fallback: bool,
    /// Top candidates, best first.
    pub candidates: Vec<TraceCandidate>,
}

/// Immutable models shared by every session.
pub struct Engine {
    pub index: InvertedIndex,
    pub model: CdssmModel,
    pub ensemble: MartEnsemble,
    pub config: ServiceConfig,
}

impl Engine {
    pub fn new(index: InvertedIndex, model: CdssmModel, ensemble: MartEnsemble, config: ServiceConfig) -> Self {
        Engine {
            index,
            model,
            ensemble,
            config,
        }
    }

    /// Answers `message` in `session` and appends both turns to its history.
    pub fn respond(&self, session: &mut Session, message: &str, now: Instant) -> Result<(String, RespondTrace)> {
        let m = Utterance::new(message);
        if m.is_empty() {
            return Err(Error::EmptyUtterance);
        }
        let c = session.context(self.config.context_turns);
        let candidates = self.index.fetch_candidates(&m, &c, &self.config.fetch)?;
        let candidate_count = candidates.len();
        let trace = if candidates.is_empty() {
            RespondTrace {
                response: self.config.fallback.clone(),
                context: c.raw.clone(),
                candidate_count: 0,
                fallback: true,
                candidates: Vec::new(),
            }
        } else {
            let ranked = rank_candidates(&self.ensemble, &self.model, &c, &m, candidates)?;
            RespondTrace {
                response: ranked[0].candidate.pair.response.raw.clone(),
                context: c.raw.clone(),
                candidate_count,
                fallback: false,
                candidates: ranked
                    .iter()
                    .take(self.config.trace_top_n)
                    .map(|r| TraceCandidate {
                        doc_id: r.candidate.pair.id,
                        message: r.candidate.pair.message.raw.clone(),
                        response: r.candidate.pair.response.raw.clone(),
                        fetch_score: r.candidate.fetch_score,
                        features: r.features.0.to_vec(),
                        score: r.score,
                    })
                    .collect(),
            }
        };
        session.history.push(Turn {
            speaker: Speaker::User,
            utterance: m,
        });
        session.history.push(Turn {
            speaker: Speaker::Bot,
            utterance: Utterance::new(trace.response.clone()),
        });
        session.last_active = now;
        Ok((trace.response.clone(), trace))
    }
}

/// Live sessions keyed by id. Each session is locked independently.
#[derive(Default)]
pub struct SessionStore {
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
}

impl SessionStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_create(&self, id: &str, now: Instant) -> Arc<Mutex<Session>> {
        let mut map = self.sessions.lock().expect("session map poisoned");
        map.entry(id.to_string())
            .or_insert_with(|| Arc::new(Mutex::new(Session::new(id, now))))
            .clone()
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("session map poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Removes sessions idle for longer than `ttl`; returns how many.
    pub fn gc(&self, now: Instant, ttl: Duration) -> Result<usize> {
        if ttl.is_zero() {
            return Err(Error::InvalidArgument("ttl must be positive".into()));
        }
        let mut map = self.sessions.lock().expect("session map poisoned");
        let before = map.len();
        map.retain(|_, s| {
            // A session locked by an in-flight request is active.
            match s.try_lock() {
                Ok(s) => now.saturating_duration_since(s.last_active) <= ttl,
                Err(_) => true,
            }
        });
        Ok(before - map.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn context_window() {
        let now = Instant::now();
        let mut s = Session::new("a", now);
        assert!(s.context(1).is_empty());
        s.history.push(Turn {
            speaker: Speaker::User,
            utterance: Utterance::new("June starts. My bday month"),
        });
        s.history.push(Turn {
            speaker: Speaker::Bot,
            utterance: Utterance::new("for me too"),
        });
        assert_eq!(s.context(1).raw, "for me too");
        let two = s.context(2);
        assert_eq!(two.tokens.len(), 9);
        assert_eq!(s.context(5).tokens, two.tokens);
    }

    #[test]
    fn gc_evicts_idle_sessions() {
        let store = SessionStore::new();
        let t0 = Instant::now();
        let ttl = Duration::from_secs(60);
        assert_eq!(store.gc(t0, ttl).unwrap(), 0);
        store.get_or_create("idle", t0);
        let active = store.get_or_create("active", t0);
        active.lock().unwrap().last_active = t0 + Duration::from_secs(100);
        assert_eq!(store.gc(t0 + Duration::from_secs(120), ttl).unwrap(), 1);
        assert_eq!(store.len(), 1);
        let fresh = store.get_or_create("idle", t0 + Duration::from_secs(121));
        assert!(fresh.lock().unwrap().history.is_empty());
        assert!(store.gc(t0, Duration::ZERO).is_err());
    }
}

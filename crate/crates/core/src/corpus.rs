//! Corpus ingestion: tokenization, safety filtering and JSONL loading of
//! message–response pairs and 3-turn conversations.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Splits `raw` into lowercase tokens.
///
/// Unicode whitespace separates tokens and every maximal run of non-alphanumeric,
/// non-whitespace characters becomes a token of its own, so `"Hello, World!"`
/// yields `["hello", ",", "world", "!"]`.
pub fn tokenize(raw: &str) -> Vec<String> {
    let lower = raw.to_lowercase();
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut current_is_word = false;

    for ch in lower.chars() {
        if ch.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            continue;
        }
        let is_word = ch.is_alphanumeric();
        if !current.is_empty() && is_word != current_is_word {
            tokens.push(std::mem::take(&mut current));
        }
        current_is_word = is_word;
        current.push(ch);
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// A piece of text together with its tokenization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub raw: String,
    pub tokens: Vec<String>,
}

impl Utterance {
    pub fn new(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let tokens = tokenize(&raw);
        Utterance { raw, tokens }
    }

    pub fn empty() -> Self {
        Utterance {
            raw: String::new(),
            tokens: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }
}

/// An indexed message and the response that followed it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MrPair {
    pub id: u32,
    pub message: Utterance,
    pub response: Utterance,
}

/// A 3-turn exchange: context (turn 1), message (turn 2), response (turn 3).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationTriple {
    pub context: Utterance,
    pub message: Utterance,
    pub response: Utterance,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterConfig {
    /// Lowercase terms; a term with several words matches a contiguous token run.
    pub blocklist: Vec<Vec<String>>,
    pub reject_urls: bool,
    pub reject_mentions: bool,
    pub reject_hashtags: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            blocklist: Vec::new(),
            reject_urls: true,
            reject_mentions: true,
            reject_hashtags: true,
        }
    }
}

impl FilterConfig {
    pub fn with_blocklist<I, S>(mut self, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut seen = HashSet::new();
        for term in terms {
            let term = term.as_ref().trim();
            if term.is_empty() {
                return Err(Error::InvalidArgument("empty blocklist term".into()));
            }
            if term != term.to_lowercase() {
                return Err(Error::InvalidArgument(format!(
                    "blocklist term {term:?} is not lowercase"
                )));
            }
            let toks = tokenize(term);
            if seen.insert(toks.clone()) {
                self.blocklist.push(toks);
            }
        }
        Ok(self)
    }

    /// Reads a blocklist file: one lowercase term per line, `#` starts a comment.
    pub fn load_blocklist(self, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut terms = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line != line.to_lowercase() {
                return Err(Error::Malformed {
                    path: path.into(),
                    line: n + 1,
                    message: format!("blocklist term {line:?} is not lowercase"),
                });
            }
            terms.push(line.to_string());
        }
        self.with_blocklist(terms)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    Url,
    Mention,
    Hashtag,
    Blocklisted(String),
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FilterDecision {
    Keep,
    Reject(RejectReason),
}

impl FilterDecision {
    pub fn is_keep(&self) -> bool {
        matches!(self, FilterDecision::Keep)
    }
}

pub fn is_url_token(tok: &str) -> bool {
    tok.starts_with("http") || tok.contains("://")
}

pub fn is_mention_token(tok: &str) -> bool {
    tok.contains('@')
}

pub fn is_hashtag_token(tok: &str) -> bool {
    tok.contains('#')
}

fn check_tokens(tokens: &[String], cfg: &FilterConfig) -> Option<RejectReason> {
    if tokens.is_empty() {
        return Some(RejectReason::Empty);
    }
    for tok in tokens {
        if cfg.reject_urls && is_url_token(tok) {
            return Some(RejectReason::Url);
        }
        if cfg.reject_mentions && is_mention_token(tok) {
            return Some(RejectReason::Mention);
        }
        if cfg.reject_hashtags && is_hashtag_token(tok) {
            return Some(RejectReason::Hashtag);
        }
    }
    for term in &cfg.blocklist {
        if !term.is_empty() && tokens.windows(term.len()).any(|w| w == term.as_slice()) {
            return Some(RejectReason::Blocklisted(term.join(" ")));
        }
    }
    None
}

/// Keep/reject decision for an M-R pair. Both sides are inspected.
pub fn filter_pair(pair: &MrPair, cfg: &FilterConfig) -> FilterDecision {
    filter_utterances(&[&pair.message, &pair.response], cfg)
}

pub fn filter_triple(triple: &ConversationTriple, cfg: &FilterConfig) -> FilterDecision {
    filter_utterances(&[&triple.context, &triple.message, &triple.response], cfg)
}

fn filter_utterances(utts: &[&Utterance], cfg: &FilterConfig) -> FilterDecision {
    for utt in utts {
        if let Some(reason) = check_tokens(&utt.tokens, cfg) {
            return FilterDecision::Reject(reason);
        }
    }
    FilterDecision::Keep
}

/// Records that survived filtering plus the number of rejected input lines.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    pub rejected: usize,
}

#[derive(Deserialize)]
struct PairLine {
    m: String,
    r: String,
}

#[derive(Deserialize)]
struct TripleLine {
    c: String,
    m: String,
    r: String,
}

#[derive(Serialize)]
struct PairLineOut<'a> {
    m: &'a str,
    r: &'a str,
}

#[derive(Serialize)]
struct TripleLineOut<'a> {
    c: &'a str,
    m: &'a str,
    r: &'a str,
}

fn parse_lines<L, T>(
    path: &Path,
    mut accept: impl FnMut(L, usize) -> Option<T>,
) -> Result<Loaded<T>>
where
    L: for<'de> Deserialize<'de>,
{
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut rejected = 0;
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: L = serde_json::from_str(line).map_err(|e| Error::Malformed {
            path: path.into(),
            line: n + 1,
            message: e.to_string(),
        })?;
        match accept(parsed, records.len()) {
            Some(rec) => records.push(rec),
            None => rejected += 1,
        }
    }
    Ok(Loaded { records, rejected })
}

/// Loads a pairs file (`{"m": .., "r": ..}` per line). Ids are assigned in file
/// order among the kept pairs, starting at 0.
pub fn load_pairs(path: impl AsRef<Path>, cfg: &FilterConfig) -> Result<Loaded<MrPair>> {
    parse_lines(path.as_ref(), |line: PairLine, next_id| {
        let pair = MrPair {
            id: next_id as u32,
            message: Utterance::new(line.m),
            response: Utterance::new(line.r),
        };
        filter_pair(&pair, cfg).is_keep().then_some(pair)
    })
}

/// Loads a triples file (`{"c": .., "m": .., "r": ..}` per line).
pub fn load_triples(
    path: impl AsRef<Path>,
    cfg: &FilterConfig,
) -> Result<Loaded<ConversationTriple>> {
    parse_lines(path.as_ref(), |line: TripleLine, _| {
        let triple = ConversationTriple {
            context: Utterance::new(line.c),
            message: Utterance::new(line.m),
            response: Utterance::new(line.r),
        };
        filter_triple(&triple, cfg).is_keep().then_some(triple)
    })
}

pub fn write_pairs(path: impl AsRef<Path>, pairs: &[MrPair]) -> Result<()> {
    let mut out = String::new();
    for p in pairs {
        let line = PairLineOut {
            m: &p.message.raw,
            r: &p.response.raw,
        };
        out.push_str(&serde_json::to_string(&line).expect("string fields serialize"));
        out.push('\n');
    }
    let path = path.as_ref();
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_triples(path: impl AsRef<Path>, triples: &[ConversationTriple]) -> Result<()> {
    let mut out = String::new();
    for t in triples {
        let line = TripleLineOut {
            c: &t.context.raw,
            m: &t.message.raw,
            r: &t.response.raw,
        };
        out.push_str(&serde_json::to_string(&line).expect("string fields serialize"));
        out.push('\n');
    }
    let path = path.as_ref();
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(m: &str, r: &str) -> MrPair {
        MrPair {
            id: 0,
            message: Utterance::new(m),
            response: Utterance::new(r),
        }
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Hello, World!"), vec!["hello", ",", "world", "!"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("i love you"), vec!["i", "love", "you"]);
        assert_eq!(tokenize("wait...what?!"), vec!["wait", "...", "what", "?!"]);
        assert_eq!(tokenize("  \t\u{3000}x  "), vec!["x"]);
    }

    #[test]
    fn filter_examples() {
        let cfg = FilterConfig::default();
        assert_eq!(
            filter_pair(&pair("hi", "call me @john"), &cfg),
            FilterDecision::Reject(RejectReason::Mention)
        );
        assert_eq!(
            filter_pair(&pair("hi", "check http://x.co now"), &cfg),
            FilterDecision::Reject(RejectReason::Url)
        );
        assert_eq!(
            filter_pair(&pair("so #blessed", "yes"), &cfg),
            FilterDecision::Reject(RejectReason::Hashtag)
        );
        assert!(filter_pair(&pair("what do you like for dinner", "bhindi masala"), &cfg).is_keep());
    }

    #[test]
    fn blocklist_matches_words_and_phrases() {
        let cfg = FilterConfig::default()
            .with_blocklist(["priya", "bad word"])
            .unwrap();
        assert_eq!(
            filter_pair(&pair("hey", "ask Priya!"), &cfg),
            FilterDecision::Reject(RejectReason::Blocklisted("priya".into()))
        );
        assert!(!filter_pair(&pair("that bad word", "ok"), &cfg).is_keep());
        assert!(filter_pair(&pair("that bad", "word"), &cfg).is_keep());
        assert!(FilterConfig::default().with_blocklist(["Upper"]).is_err());
        assert!(FilterConfig::default().with_blocklist([""]).is_err());
    }

    #[test]
    fn flags_disable_rules() {
        let cfg = FilterConfig {
            reject_mentions: false,
            ..FilterConfig::default()
        };
        assert!(filter_pair(&pair("hi", "call me @john"), &cfg).is_keep());
    }

    #[test]
    fn empty_sides_rejected() {
        let cfg = FilterConfig::default();
        assert_eq!(
            filter_pair(&pair("hi", "   "), &cfg),
            FilterDecision::Reject(RejectReason::Empty)
        );
    }
}

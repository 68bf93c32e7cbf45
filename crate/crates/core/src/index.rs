//! Inverted index over indexed messages with TF-IDF candidate fetch.
//!
//! Document weights are `(1 + ln tf) * ln((1 + N) / (1 + df))`, documents are
//! cosine-normalized and the query vector is left unnormalized. The on-disk
//! layout is described in `docs/FORMATS.md`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::{Reader, Writer};
use crate::corpus::{MrPair, Utterance};
use crate::error::{Error, Result};

pub const INDEX_MAGIC: &[u8; 4] = b"CIRX";
pub const INDEX_VERSION: u32 = 1;

pub const DEFAULT_K: usize = 100;
pub const DEFAULT_SHORT_QUERY_LEN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc_id: u32,
    pub term_freq: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Candidate {
    pub pair: MrPair,
    pub fetch_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FetchParams {
    pub k: usize,
    /// Messages with at most this many tokens get the context prepended.
    pub short_query_len: usize,
}

impl Default for FetchParams {
    fn default() -> Self {
        FetchParams {
            k: DEFAULT_K,
            short_query_len: DEFAULT_SHORT_QUERY_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    /// Sorted by pair id; the position is the internal doc id.
    docs: Vec<MrPair>,
    /// Sorted ascending.
    terms: Vec<String>,
    term_ids: HashMap<String, u32>,
    postings: Vec<Vec<Posting>>,
    norms: Vec<f64>,
}

pub fn log_tf(tf: u32) -> f64 {
    1.0 + (tf as f64).ln()
}

pub fn idf(doc_count: usize, df: usize) -> f64 {
    ((1.0 + doc_count as f64) / (1.0 + df as f64)).ln()
}

fn term_counts(tokens: &[String]) -> BTreeMap<&str, u32> {
    let mut counts = BTreeMap::new();
    for t in tokens {
        *counts.entry(t.as_str()).or_insert(0) += 1;
    }
    counts
}

impl InvertedIndex {
    /// Indexes the message side of every pair.
    pub fn build(pairs: Vec<MrPair>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut docs = pairs;
        docs.sort_by_key(|p| p.id);
        if docs.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(Error::InvalidArgument("duplicate pair id".into()));
        }

        let mut by_term: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        for (doc, pair) in docs.iter().enumerate() {
            for (term, tf) in term_counts(&pair.message.tokens) {
                by_term.entry(term.to_string()).or_default().push(Posting {
                    doc_id: doc as u32,
                    term_freq: tf,
                });
            }
        }
        let terms: Vec<String> = by_term.keys().cloned().collect();
        let postings: Vec<Vec<Posting>> = by_term.into_values().collect();
        Self::assemble(docs, terms, postings, None)
    }

    fn assemble(
        docs: Vec<MrPair>,
        terms: Vec<String>,
        postings: Vec<Vec<Posting>>,
        norms: Option<Vec<f64>>,
    ) -> Result<Self> {
        let term_ids = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let norms = match norms {
            Some(n) => n,
            None => {
                let n = docs.len();
                let mut sq = vec![0.0f64; n];
                for plist in &postings {
                    let w_idf = idf(n, plist.len());
                    for p in plist {
                        let w = log_tf(p.term_freq) * w_idf;
                        sq[p.doc_id as usize] += w * w;
                    }
                }
                sq.into_iter().map(f64::sqrt).collect()
            }
        };
        Ok(InvertedIndex {
            docs,
            terms,
            term_ids,
            postings,
            norms,
        })
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn docs(&self) -> &[MrPair] {
        &self.docs
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn postings(&self, term: &str) -> Option<&[Posting]> {
        self.term_ids
            .get(term)
            .map(|&i| self.postings[i as usize].as_slice())
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings(term).map_or(0, <[Posting]>::len)
    }

    pub fn idf(&self, term: &str) -> f64 {
        idf(self.doc_count(), self.df(term))
    }

    pub fn norm(&self, doc: usize) -> f64 {
        self.norms[doc]
    }

    /// Query tokens after the short-message context rule.
    pub fn expand_query(
        message: &Utterance,
        context: &Utterance,
        short_query_len: usize,
    ) -> Vec<String> {
        if message.len() <= short_query_len && !context.is_empty() {
            context
                .tokens
                .iter()
                .chain(message.tokens.iter())
                .cloned()
                .collect()
        } else {
            message.tokens.clone()
        }
    }

    /// Scores every document sharing a term with `query`, returning
    /// `(doc position, score)` for documents with score > 0.
    pub fn score_query(&self, query: &[String]) -> Vec<(usize, f64)> {
        let mut acc = vec![0.0f64; self.docs.len()];
        let mut touched = Vec::new();
        let n = self.doc_count();
        for (term, qtf) in term_counts(query) {
            let Some(&tid) = self.term_ids.get(term) else {
                continue;
            };
            let plist = &self.postings[tid as usize];
            let term_idf = idf(n, plist.len());
            let qw = log_tf(qtf) * term_idf;
            if qw == 0.0 {
                continue;
            }
            for p in plist {
                let d = p.doc_id as usize;
                let norm = self.norms[d];
                if norm == 0.0 {
                    continue;
                }
                if acc[d] == 0.0 {
                    touched.push(d);
                }
                acc[d] += qw * log_tf(p.term_freq) * term_idf / norm;
            }
        }
        touched.sort_unstable();
        touched.dedup();
        touched
            .into_iter()
            .map(|d| (d, acc[d]))
            .filter(|&(_, s)| s > 0.0)
            .collect()
    }

    /// Top-k candidates for `message` (context-expanded when short).
    ///
    /// An empty result means nothing in the index matched; an empty query is an
    /// error.
    pub fn fetch_candidates(
        &self,
        message: &Utterance,
        context: &Utterance,
        params: &FetchParams,
    ) -> Result<Vec<Candidate>> {
        if params.k < 1 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        let query = Self::expand_query(message, context, params.short_query_len);
        if query.is_empty() {
            return Err(Error::EmptyQuery);
        }
        let mut scored = self.score_query(&query);
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(params.k);
        Ok(scored
            .into_iter()
            .map(|(d, s)| Candidate {
                pair: self.docs[d].clone(),
                fetch_score: s,
            })
            .collect())
    }

    /// TF-IDF match of `query` against an arbitrary token list, using this
    /// index's document frequencies. Unseen document terms take df = 0.
    pub fn score_text(&self, query: &[String], doc: &[String]) -> f64 {
        let n = self.doc_count();
        let doc_counts = term_counts(doc);
        let norm = doc_counts
            .iter()
            .map(|(t, &tf)| {
                let w = log_tf(tf) * idf(n, self.df(t));
                w * w
            })
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let mut score = 0.0;
        for (term, qtf) in term_counts(query) {
            if let Some(&dtf) = doc_counts.get(term) {
                let term_idf = idf(n, self.df(term));
                score += log_tf(qtf) * term_idf * log_tf(dtf) * term_idf / norm;
            }
        }
        score
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::default();
        w.bytes(INDEX_MAGIC);
        w.u32(INDEX_VERSION);
        w.len_u32(self.docs.len())?;
        for d in &self.docs {
            w.u32(d.id);
            w.str(&d.message.raw)?;
            w.str(&d.response.raw)?;
        }
        w.len_u32(self.terms.len())?;
        for t in &self.terms {
            w.str(t)?;
        }
        for plist in &self.postings {
            w.len_u32(plist.len())?;
            for p in plist {
                w.u32(p.doc_id);
                w.u32(p.term_freq);
            }
        }
        for &n in &self.norms {
            w.f64(n);
        }
        Ok(w.buf)
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader::new(data);
        r.expect_magic(INDEX_MAGIC)?;
        let version = r.u32()?;
        if version != INDEX_VERSION {
            return Err(Error::Format(format!("unsupported index version {version}")));
        }
        let n_docs = r.u32()? as usize;
        let mut docs = Vec::with_capacity(n_docs);
        for _ in 0..n_docs {
            let id = r.u32()?;
            let message = Utterance::new(r.str()?);
            let response = Utterance::new(r.str()?);
            docs.push(MrPair {
                id,
                message,
                response,
            });
        }
        let n_terms = r.u32()? as usize;
        let mut terms = Vec::with_capacity(n_terms);
        for _ in 0..n_terms {
            terms.push(r.str()?);
        }
        if terms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Format("vocabulary not sorted".into()));
        }
        let mut postings = Vec::with_capacity(n_terms);
        for _ in 0..n_terms {
            let count = r.u32()? as usize;
            let mut plist = Vec::with_capacity(count);
            for _ in 0..count {
                let doc_id = r.u32()?;
                let term_freq = r.u32()?;
                if doc_id as usize >= n_docs || term_freq == 0 {
                    return Err(Error::Format(format!(
                        "bad posting (doc {doc_id}, tf {term_freq})"
                    )));
                }
                plist.push(Posting { doc_id, term_freq });
            }
            postings.push(plist);
        }
        let mut norms = Vec::with_capacity(n_docs);
        for _ in 0..n_docs {
            norms.push(r.f64()?);
        }
        r.finish()?;
        let ids: HashSet<u32> = docs.iter().map(|d| d.id).collect();
        if ids.len() != docs.len() {
            return Err(Error::Format("duplicate doc id".into()));
        }
        Self::assemble(docs, terms, postings, Some(norms))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let data = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(msgs: &[&str]) -> Vec<MrPair> {
        msgs.iter()
            .enumerate()
            .map(|(i, m)| MrPair {
                id: i as u32,
                message: Utterance::new(*m),
                response: Utterance::new(format!("reply {i}")),
            })
            .collect()
    }

    #[test]
    fn term_in_every_doc_has_zero_idf() {
        let idx = InvertedIndex::build(pairs(&["x a", "x b", "x c"])).unwrap();
        assert_eq!(idx.df("x"), 3);
        assert_eq!(idx.idf("x"), 0.0);
        let q = vec!["x".to_string()];
        assert!(idx.score_query(&q).is_empty());
    }

    #[test]
    fn counts_term_frequency() {
        let idx = InvertedIndex::build(pairs(&["a a b"])).unwrap();
        assert_eq!(idx.postings("a").unwrap()[0].term_freq, 2);
        assert_eq!(idx.postings("b").unwrap()[0].term_freq, 1);
    }

    #[test]
    fn self_match_ranks_first() {
        let idx = InvertedIndex::build(pairs(&[
            "pizza with extra cheese",
            "cheese is great",
            "i want pizza tonight",
            "nothing here",
        ]))
        .unwrap();
        let got = idx
            .fetch_candidates(
                &Utterance::new("pizza with extra cheese"),
                &Utterance::empty(),
                &FetchParams::default(),
            )
            .unwrap();
        assert_eq!(got[0].pair.id, 0);
        assert!(got.iter().all(|c| c.fetch_score > 0.0));
    }

    #[test]
    fn oov_query_yields_no_candidates() {
        let idx = InvertedIndex::build(pairs(&["a b", "c d"])).unwrap();
        let got = idx
            .fetch_candidates(&Utterance::new("zzz"), &Utterance::empty(), &FetchParams::default())
            .unwrap();
        assert!(got.is_empty());
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(InvertedIndex::build(vec![]), Err(Error::EmptyCorpus)));
        let idx = InvertedIndex::build(pairs(&["a b"])).unwrap();
        let p = FetchParams { k: 0, ..Default::default() };
        assert!(idx
            .fetch_candidates(&Utterance::new("a"), &Utterance::empty(), &p)
            .is_err());
        assert!(matches!(
            idx.fetch_candidates(&Utterance::empty(), &Utterance::empty(), &FetchParams::default()),
            Err(Error::EmptyQuery)
        ));
        let mut dup = pairs(&["a", "b"]);
        dup[1].id = 0;
        assert!(InvertedIndex::build(dup).is_err());
    }

    #[test]
    fn context_only_used_for_short_messages() {
        let idx = InvertedIndex::build(pairs(&["birthday in june", "why is that", "go ahead"]))
            .unwrap();
        let ctx = Utterance::new("my birthday month");
        let short = idx
            .fetch_candidates(&Utterance::new("why?"), &ctx, &FetchParams::default())
            .unwrap();
        assert!(short.iter().any(|c| c.pair.id == 0));
        let long = idx
            .fetch_candidates(
                &Utterance::new("why is that so great"),
                &ctx,
                &FetchParams::default(),
            )
            .unwrap();
        assert!(long.iter().all(|c| c.pair.id != 0));
    }

    #[test]
    fn bytes_round_trip() {
        let idx = InvertedIndex::build(pairs(&["a a b", "b c", "héllo wörld"])).unwrap();
        let bytes = idx.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"CIRX");
        let back = InvertedIndex::from_bytes(&bytes).unwrap();
        assert_eq!(back, idx);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert!(InvertedIndex::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(InvertedIndex::from_bytes(&bad).is_err());
    }
}

//! Exhaustive TF-IDF scoring over every document.

use std::collections::HashMap;

use chatrank_core::corpus::{MrPair, Utterance};
use rand::Rng;

fn counts(tokens: &[String]) -> HashMap<&str, f64> {
    let mut m = HashMap::new();
    for t in tokens {
        *m.entry(t.as_str()).or_insert(0.0) += 1.0;
    }
    m
}

/// Scores every document's message against `query` from first principles:
/// `w = (1 + ln tf) * ln((1 + N) / (1 + df))`, documents unit-normalized.
pub fn exhaustive_scores(docs: &[MrPair], query: &[String]) -> Vec<(u32, f64)> {
    let n = docs.len() as f64;
    let doc_counts: Vec<HashMap<&str, f64>> = docs.iter().map(|d| counts(&d.message.tokens)).collect();
    let mut df: HashMap<&str, f64> = HashMap::new();
    for c in &doc_counts {
        for &t in c.keys() {
            *df.entry(t).or_insert(0.0) += 1.0;
        }
    }
    let idf = |term: &str| ((1.0 + n) / (1.0 + df.get(term).copied().unwrap_or(0.0))).ln();
    let q = counts(query);
    docs.iter()
        .zip(&doc_counts)
        .map(|(d, dc)| {
            let weights: HashMap<&str, f64> = dc.iter().map(|(&t, &tf)| (t, (1.0 + tf.ln()) * idf(t))).collect();
            let norm = weights.values().map(|w| w * w).sum::<f64>().sqrt();
            let mut s = 0.0;
            if norm > 0.0 {
                for (&t, &qtf) in &q {
                    if let Some(w) = weights.get(t) {
                        s += (1.0 + qtf.ln()) * idf(t) * w / norm;
                    }
                }
            }
            (d.id, s)
        })
        .collect()
}

/// The `k` best documents with positive score, by score then ascending id.
/// Scores within `rel_tol` of each other count as tied.
pub fn exhaustive_top_k(docs: &[MrPair], query: &[String], k: usize, rel_tol: f64) -> Vec<(u32, f64)> {
    let mut scored: Vec<(u32, f64)> = exhaustive_scores(docs, query)
        .into_iter()
        .filter(|&(_, s)| s > 1e-12)
        .collect();
    scored.sort_by(|a, b| {
        let tied = (a.1 - b.1).abs() <= rel_tol * a.1.abs().max(b.1.abs());
        if tied {
            a.0.cmp(&b.0)
        } else {
            b.1.total_cmp(&a.1)
        }
    });
    scored.truncate(k);
    scored
}

/// The query the service issues: context then message when the message has at
/// most `short_len` tokens.
pub fn expanded_query(message: &[String], context: &[String], short_len: usize) -> Vec<String> {
    if message.len() <= short_len {
        context.iter().chain(message).cloned().collect()
    } else {
        message.to_vec()
    }
}

/// A random utterance over a Zipf-ish vocabulary of `vocab` words.
pub fn random_utterance(rng: &mut impl Rng, vocab: usize, max_len: usize) -> Utterance {
    let len = rng.gen_range(1..=max_len);
    let words: Vec<String> = (0..len)
        .map(|_| {
            let r: f64 = rng.gen_range(0.0f64..1.0);
            format!("w{}", (r * r * vocab as f64) as usize)
        })
        .collect();
    Utterance::new(words.join(" "))
}

pub fn random_docs(rng: &mut impl Rng, n: usize, vocab: usize) -> Vec<MrPair> {
    (0..n)
        .map(|i| MrPair {
            // Sparse, unordered ids exercise the id tie-break.
            id: (i as u32 * 7919) % 100_003,
            message: random_utterance(rng, vocab, 8),
            response: random_utterance(rng, vocab, 6),
        })
        .collect()
}

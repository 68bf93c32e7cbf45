//! Ranker features for a (context, message, response) triple.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::cdssm::{cosine, CdssmModel};
use crate::corpus::Utterance;
use crate::error::{Error, Result};

pub const NUM_FEATURES: usize = 11;

pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "semrel_m_r",
    "cmm_m_r_1",
    "cmm_m_r_2",
    "cmm_m_r_3",
    "cmm_m_r_4",
    "cmm_c_r_1",
    "cmm_c_r_2",
    "cmm_c_r_3",
    "cmm_c_r_4",
    "semsim_c_r",
    "semrel_c_m",
];

/// Feature layout:
///
/// | index | feature |
/// |-------|---------|
/// | 0 | SemRel(M, R) |
/// | 1..=4 | n-gram matches between M and R, n = 1..4 |
/// | 5..=8 | n-gram matches between C and R, n = 1..4 |
/// | 9 | SemSim(C, R) |
/// | 10 | SemRel(C, M) |
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; NUM_FEATURES]);

impl FeatureVector {
    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Multiset intersection sizes of the token n-grams of `a` and `b`, n = 1..4.
pub fn cmm_counts(a: &[String], b: &[String]) -> [u32; 4] {
    let mut out = [0u32; 4];
    for (slot, n) in out.iter_mut().zip(1..=4usize) {
        if a.len() < n || b.len() < n {
            continue;
        }
        let mut counts: HashMap<&[String], u32> = HashMap::new();
        for g in a.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
        for g in b.windows(n) {
            if let Some(c) = counts.get_mut(g) {
                if *c > 0 {
                    *c -= 1;
                    *slot += 1;
                }
            }
        }
    }
    out
}

/// Embeddings of one utterance under both towers.
#[derive(Debug, Clone)]
pub struct Embedded {
    pub m: Vec<f64>,
    pub r: Vec<f64>,
}

impl Embedded {
    pub fn new(model: &CdssmModel, utt: &Utterance) -> Result<Self> {
        Ok(Embedded {
            m: model.embed_message(utt)?,
            r: model.embed_response(utt)?,
        })
    }
}

/// Features from precomputed embeddings. `context` is `None` for an empty C.
pub fn features_from_parts(
    context: Option<(&Utterance, &Embedded)>,
    message: (&Utterance, &Embedded),
    response: (&Utterance, &Embedded),
) -> FeatureVector {
    let mut f = [0.0; NUM_FEATURES];
    let (m_utt, m_emb) = message;
    let (r_utt, r_emb) = response;
    f[0] = cosine(&m_emb.m, &r_emb.r);
    for (i, c) in cmm_counts(&m_utt.tokens, &r_utt.tokens).into_iter().enumerate() {
        f[1 + i] = c as f64;
    }
    if let Some((c_utt, c_emb)) = context {
        for (i, c) in cmm_counts(&c_utt.tokens, &r_utt.tokens).into_iter().enumerate() {
            f[5 + i] = c as f64;
        }
        f[9] = cosine(&c_emb.r, &r_emb.r);
        f[10] = cosine(&c_emb.m, &m_emb.r);
    }
    FeatureVector(f)
}

/// The 11 ranker features of candidate `response` for `message` in `context`.
/// An empty context zeroes every contextual feature.
pub fn extract_features(
    model: &CdssmModel,
    context: &Utterance,
    message: &Utterance,
    response: &Utterance,
) -> Result<FeatureVector> {
    if message.is_empty() || response.is_empty() {
        return Err(Error::EmptyUtterance);
    }
    let m = Embedded::new(model, message)?;
    let r = Embedded::new(model, response)?;
    let c = if context.is_empty() {
        None
    } else {
        Some(Embedded::new(model, context)?)
    };
    Ok(features_from_parts(
        c.as_ref().map(|e| (context, e)),
        (message, &m),
        (response, &r),
    ))
}

/// Serializes labelled feature rows as TSV with header `qid label f0 .. f10`.
pub fn write_feature_tsv<'a, I>(rows: I) -> String
where
    I: IntoIterator<Item = (u32, u8, &'a FeatureVector)>,
{
    let mut out = String::from("qid\tlabel");
    for i in 0..NUM_FEATURES {
        out.push_str(&format!("\tf{i}"));
    }
    out.push('\n');
    for (qid, label, fv) in rows {
        out.push_str(&format!("{qid}\t{label}"));
        for v in fv.0 {
            out.push_str(&format!("\t{v}"));
        }
        out.push('\n');
    }
    out
}

/// Parses the TSV written by [`write_feature_tsv`].
pub fn read_feature_tsv(text: &str) -> Result<Vec<(u32, u8, FeatureVector)>> {
    let mut lines = text.lines().enumerate();
    let bad = |line: usize, msg: String| Error::Format(format!("feature tsv line {line}: {msg}"));
    match lines.next() {
        Some((_, header)) if header.split('\t').count() == NUM_FEATURES + 2 => {}
        _ => return Err(bad(1, "missing or malformed header".into())),
    }
    let mut rows = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != NUM_FEATURES + 2 {
            return Err(bad(n + 1, format!("expected {} columns", NUM_FEATURES + 2)));
        }
        let qid = cols[0].parse().map_err(|e| bad(n + 1, format!("{e}")))?;
        let label = cols[1].parse().map_err(|e| bad(n + 1, format!("{e}")))?;
        let mut f = [0.0; NUM_FEATURES];
        for (slot, c) in f.iter_mut().zip(&cols[2..]) {
            *slot = c.parse().map_err(|e| bad(n + 1, format!("{e}")))?;
        }
        rows.push((qid, label, FeatureVector(f)));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdssm::{CdssmConfig, TrigramVocab};
    use crate::corpus::tokenize;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn i_love_you_too() {
        let a = tokenize("i love you");
        let b = tokenize("i love you too!");
        assert_eq!(cmm_counts(&a, &b), [3, 2, 1, 0]);
    }

    #[test]
    fn self_and_disjoint() {
        let a = tokenize("a b");
        assert_eq!(cmm_counts(&a, &a), [2, 1, 0, 0]);
        assert_eq!(cmm_counts(&a, &tokenize("c d e")), [0, 0, 0, 0]);
        assert_eq!(cmm_counts(&[], &a), [0, 0, 0, 0]);
    }

    #[test]
    fn multiset_min() {
        let a = tokenize("ha ha ha");
        let b = tokenize("ha ha");
        assert_eq!(cmm_counts(&a, &b), [2, 1, 0, 0]);
    }

    fn model() -> CdssmModel {
        let corpus = vec![tokenize("where do you work i am from office")];
        let vocab = TrigramVocab::build(corpus.iter().map(Vec::as_slice), 200).unwrap();
        let cfg = CdssmConfig {
            conv_dim: 8,
            sem_dim: 6,
            ..CdssmConfig::default()
        };
        CdssmModel::new(vocab, cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap()
    }

    #[test]
    fn empty_context_zeroes_context_features() {
        let m = model();
        let fv = extract_features(
            &m,
            &Utterance::empty(),
            &Utterance::new("where do you work"),
            &Utterance::new("from office"),
        )
        .unwrap();
        assert_eq!(fv.0.len(), NUM_FEATURES);
        assert!(fv.0[5..].iter().all(|&x| x == 0.0));
        assert!(fv.0[0] != 0.0);
    }

    #[test]
    fn features_match_parts() {
        let m = model();
        let c = Utterance::new("i am from office");
        let msg = Utterance::new("where do you work");
        let r = Utterance::new("i am from work office");
        let fv = extract_features(&m, &c, &msg, &r).unwrap();
        assert_eq!(fv.0[0], m.sem_rel(&msg, &r).unwrap());
        assert_eq!(fv.0[9], m.sem_sim(&c, &r).unwrap());
        assert_eq!(fv.0[10], m.sem_rel(&c, &msg).unwrap());
        assert_eq!(&fv.0[5..9], &[4.0, 2.0, 1.0, 0.0]);
        assert!(extract_features(&m, &c, &Utterance::empty(), &r).is_err());
    }

    #[test]
    fn tsv_round_trip() {
        let fv = FeatureVector([0.25, 1.0, 0.0, 0.0, 0.0, 2.0, 1.0, 0.0, 0.0, -0.125, 0.1]);
        let text = write_feature_tsv([(3, 1, &fv), (3, 0, &fv)]);
        assert!(text.starts_with("qid\tlabel\tf0\t"));
        let rows = read_feature_tsv(&text).unwrap();
        assert_eq!(rows, vec![(3, 1, fv), (3, 0, fv)]);
    }
}

//! Held-out next-utterance selection and vote aggregation.
//!
//! Every held-out triple is turned into a candidate set holding its true third
//! turn plus distractor responses from other triples; each system ranks the set
//! and Recall@1 / NDCG@1..3 of the true response are reported.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cdssm::{sample_excluding, CdssmModel};
use crate::corpus::ConversationTriple;
use crate::error::{Error, Result};
use crate::features::{features_from_parts, Embedded, FeatureVector};
use crate::index::InvertedIndex;
use crate::ranker::MartEnsemble;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum System {
    IrStatus,
    IrStatusCmm,
    SemrelCmm,
    SemrelCmmCcf,
}

impl System {
    pub const ALL: [System; 4] = [
        System::IrStatus,
        System::IrStatusCmm,
        System::SemrelCmm,
        System::SemrelCmmCcf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            System::IrStatus => "ir_status",
            System::IrStatusCmm => "ir_status_cmm",
            System::SemrelCmm => "semrel_cmm",
            System::SemrelCmmCcf => "semrel_cmm_ccf",
        }
    }

    /// Features a system's ensemble may use; `None` for the TF-IDF baseline.
    pub fn feature_subset(self) -> Option<Vec<usize>> {
        match self {
            System::IrStatus => None,
            System::IrStatusCmm => Some((1..=8).collect()),
            System::SemrelCmm => Some((0..=8).collect()),
            System::SemrelCmmCcf => Some((0..=10).collect()),
        }
    }

    pub fn needs_ensemble(self) -> bool {
        self.feature_subset().is_some()
    }

    /// Parses `all` or a comma-separated list of system names.
    pub fn parse_list(s: &str) -> Result<Vec<System>> {
        if s.trim() == "all" {
            return Ok(System::ALL.to_vec());
        }
        let mut out = Vec::new();
        for part in s.split(',') {
            let sys: System = part.trim().parse()?;
            if !out.contains(&sys) {
                out.push(sys);
            }
        }
        Ok(out)
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for System {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        System::ALL
            .into_iter()
            .find(|sys| sys.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown system {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub distractors_per_query: usize,
    pub systems: Vec<System>,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            distractors_per_query: 9,
            systems: System::ALL.to_vec(),
            seed: 0,
        }
    }
}

/// Candidate set for one held-out triple. `members[i]` is the triple whose
/// response is candidate `i`; `ids[i]` is its tie-break id.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub query: usize,
    pub members: Vec<usize>,
    pub ids: Vec<u32>,
}

impl EvalSet {
    pub fn truth(&self) -> usize {
        self.members
            .iter()
            .position(|&m| m == self.query)
            .expect("true response is always a member")
    }
}

/// Samples distractors and shuffles candidate ids. A distractor whose tokens
/// equal the true response never holds a lower id than it.
pub fn build_eval_sets(
    heldout: &[ConversationTriple],
    distractors: usize,
    seed: u64,
) -> Result<Vec<EvalSet>> {
    if heldout.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if distractors < 1 {
        return Err(Error::InvalidArgument("need at least one distractor".into()));
    }
    if heldout.len() <= distractors {
        return Err(Error::TooFew {
            needed: distractors + 1,
            got: heldout.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sets = Vec::with_capacity(heldout.len());
    for q in 0..heldout.len() {
        let mut members = vec![q];
        members.extend(sample_excluding(&mut rng, heldout.len(), q, distractors));
        let mut ids: Vec<u32> = (0..members.len() as u32).collect();
        ids.shuffle(&mut rng);
        let truth_tokens = &heldout[q].response.tokens;
        for i in 1..members.len() {
            if heldout[members[i]].response.tokens == *truth_tokens && ids[i] < ids[0] {
                ids.swap(0, i);
            }
        }
        sets.push(EvalSet {
            query: q,
            members,
            ids,
        });
    }
    Ok(sets)
}

/// 0-based rank of the true response when candidates are ordered by score
/// descending, then id ascending.
pub fn truth_rank(set: &EvalSet, scores: &[f64]) -> usize {
    let t = set.truth();
    (0..set.members.len())
        .filter(|&i| {
            i != t
                && (scores[i] > scores[t] || (scores[i] == scores[t] && set.ids[i] < set.ids[t]))
        })
        .count()
}

/// Neumaier-compensated sum.
fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemMetrics {
    pub system: System,
    pub recall_at_1: f64,
    /// NDCG@1, NDCG@2, NDCG@3.
    pub ndcg: [f64; 3],
    pub n_queries: usize,
}

/// Metrics from the 0-based rank of the single relevant candidate per query.
pub fn metrics_from_ranks(system: System, ranks: &[usize]) -> SystemMetrics {
    let n = ranks.len();
    let hits = ranks.iter().filter(|&&r| r == 0).count();
    let ndcg = [1, 2, 3].map(|k| {
        let total = compensated_sum(ranks.iter().map(|&r| {
            if r < k {
                1.0 / ((r + 2) as f64).log2()
            } else {
                0.0
            }
        }));
        total / n as f64
    });
    SystemMetrics {
        system,
        recall_at_1: hits as f64 / n as f64,
        ndcg,
        n_queries: n,
    }
}

/// Ranks every set with `score(set, candidate position)`.
pub fn evaluate_sets<F>(sets: &[EvalSet], system: System, score: F) -> SystemMetrics
where
    F: Fn(&EvalSet, usize) -> f64 + Sync,
{
    let ranks: Vec<usize> = sets
        .par_iter()
        .map(|set| {
            let scores: Vec<f64> = (0..set.members.len()).map(|i| score(set, i)).collect();
            truth_rank(set, &scores)
        })
        .collect();
    metrics_from_ranks(system, &ranks)
}

/// Runs every configured system over the held-out triples.
///
/// `ir_status` scores the message against each candidate response by TF-IDF
/// using the index statistics; the other systems score the candidate's feature
/// vector with their ensemble from `ensembles`.
pub fn run_eval(
    cfg: &EvalConfig,
    heldout: &[ConversationTriple],
    index: &InvertedIndex,
    model: &CdssmModel,
    ensembles: &HashMap<System, MartEnsemble>,
) -> Result<Vec<SystemMetrics>> {
    if cfg.systems.is_empty() {
        return Err(Error::InvalidArgument("no systems to evaluate".into()));
    }
    for sys in &cfg.systems {
        if sys.needs_ensemble() && !ensembles.contains_key(sys) {
            return Err(Error::InvalidArgument(format!("no ensemble for {sys}")));
        }
    }
    let sets = build_eval_sets(heldout, cfg.distractors_per_query, cfg.seed)?;

    let needs_features = cfg.systems.iter().any(|s| s.needs_ensemble());
    let mut features: Vec<Vec<FeatureVector>> = Vec::new();
    if needs_features {
        let embed = |t: &ConversationTriple| -> Result<[Option<Embedded>; 3]> {
            let c = if t.context.is_empty() {
                None
            } else {
                Some(Embedded::new(model, &t.context)?)
            };
            Ok([c, Some(Embedded::new(model, &t.message)?), Some(Embedded::new(model, &t.response)?)])
        };
        let embs: Vec<[Option<Embedded>; 3]> = heldout
            .par_iter()
            .map(embed)
            .collect::<Result<Vec<_>>>()?;
        features = sets
            .par_iter()
            .map(|set| {
                let q = &heldout[set.query];
                let [c, m, _] = &embs[set.query];
                let m = m.as_ref().expect("message embedded");
                set.members
                    .iter()
                    .map(|&j| {
                        let r = embs[j][2].as_ref().expect("response embedded");
                        features_from_parts(
                            c.as_ref().map(|e| (&q.context, e)),
                            (&q.message, m),
                            (&heldout[j].response, r),
                        )
                    })
                    .collect()
            })
            .collect();
    }

    let mut out = Vec::with_capacity(cfg.systems.len());
    for &sys in &cfg.systems {
        let metrics = match sys {
            System::IrStatus => evaluate_sets(&sets, sys, |set, i| {
                index.score_text(
                    &heldout[set.query].message.tokens,
                    &heldout[set.members[i]].response.tokens,
                )
            }),
            _ => {
                let ens = &ensembles[&sys];
                evaluate_sets(&sets, sys, |set, i| ens.score(&features[set.query][i]))
            }
        };
        log::info!("{sys}: R@1 {:.4} over {} queries", metrics.recall_at_1, metrics.n_queries);
        out.push(metrics);
    }
    Ok(out)
}

/// One judged response: five binary votes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub id: u64,
    pub votes: Vec<u8>,
}

pub const VOTES_PER_RECORD: usize = 5;
/// Votes needed for a response to count as relevant at rank 1.
pub const SUPERMAJORITY: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JudgmentSummary {
    /// Mean of per-record vote sums, on a 0..=5 scale.
    pub mean_score: f64,
    /// Percentage of records with at least [`SUPERMAJORITY`] positive votes.
    pub precision_at_1: f64,
    pub n_records: usize,
}

pub fn aggregate_judgments(records: &[JudgmentRecord]) -> Result<JudgmentSummary> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no judgment records".into()));
    }
    let mut total: u64 = 0;
    let mut supermajority: u64 = 0;
    for r in records {
        if r.votes.len() != VOTES_PER_RECORD {
            return Err(Error::InvalidArgument(format!(
                "record {} has {} votes, expected {VOTES_PER_RECORD}",
                r.id,
                r.votes.len()
            )));
        }
        if r.votes.iter().any(|&v| v > 1) {
            return Err(Error::InvalidArgument(format!("record {} has a non-binary vote", r.id)));
        }
        let score: u32 = r.votes.iter().map(|&v| v as u32).sum();
        total += score as u64;
        if score >= SUPERMAJORITY {
            supermajority += 1;
        }
    }
    let n = records.len();
    Ok(JudgmentSummary {
        mean_score: total as f64 / n as f64,
        precision_at_1: 100.0 * supermajority as f64 / n as f64,
        n_records: n,
    })
}

/// Reads a judgments JSONL file (`{"id": .., "votes": [..]}` per line).
pub fn load_judgments(path: impl AsRef<Path>) -> Result<Vec<JudgmentRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: JudgmentRecord = serde_json::from_str(line).map_err(|e| Error::Malformed {
            path: path.into(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// TSV report: one row per system, then an optional judgment block.
pub fn format_report(metrics: &[SystemMetrics], judgments: Option<&JudgmentSummary>) -> String {
    let mut s = String::from("system\tR@1\tNDCG@1\tNDCG@2\tNDCG@3\tn_queries\n");
    for m in metrics {
        let _ = writeln!(
            s,
            "{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}",
            m.system, m.recall_at_1, m.ndcg[0], m.ndcg[1], m.ndcg[2], m.n_queries
        );
    }
    if let Some(j) = judgments {
        s.push_str("\nmean_score\tP@1\tn_records\n");
        let _ = writeln!(s, "{:.4}\t{:.2}\t{}", j.mean_score, j.precision_at_1, j.n_records);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Utterance;
    use rand::Rng;

    fn triples(n: usize) -> Vec<ConversationTriple> {
        (0..n)
            .map(|i| ConversationTriple {
                context: Utterance::new(format!("context {i}")),
                message: Utterance::new(format!("message {i}")),
                response: Utterance::new(format!("response {i}")),
            })
            .collect()
    }

    #[test]
    fn system_names_round_trip() {
        for s in System::ALL {
            assert_eq!(s.name().parse::<System>().unwrap(), s);
        }
        assert_eq!(System::parse_list("all").unwrap().len(), 4);
        assert_eq!(
            System::parse_list("semrel_cmm, ir_status").unwrap(),
            vec![System::SemrelCmm, System::IrStatus]
        );
        assert!(System::parse_list("dcgm").is_err());
    }

    #[test]
    fn eval_sets_shape() {
        let sets = build_eval_sets(&triples(50), 9, 3).unwrap();
        assert_eq!(sets.len(), 50);
        for s in &sets {
            assert_eq!(s.members.len(), 10);
            assert_eq!(s.members[s.truth()], s.query);
            let mut m = s.members.clone();
            m.sort();
            m.dedup();
            assert_eq!(m.len(), 10);
            let mut ids = s.ids.clone();
            ids.sort();
            assert_eq!(ids, (0..10).collect::<Vec<u32>>());
        }
        assert!(build_eval_sets(&[], 9, 0).is_err());
        assert!(build_eval_sets(&triples(5), 9, 0).is_err());
    }

    #[test]
    fn oracle_ranker_is_perfect() {
        let sets = build_eval_sets(&triples(100), 9, 1).unwrap();
        let m = evaluate_sets(&sets, System::SemrelCmmCcf, |set, i| {
            if set.members[i] == set.query {
                1.0
            } else {
                0.0
            }
        });
        assert_eq!(m.recall_at_1, 1.0);
        assert_eq!(m.ndcg, [1.0, 1.0, 1.0]);
    }

    #[test]
    fn constant_scores_fall_back_to_shuffled_ids() {
        let sets = build_eval_sets(&triples(2000), 9, 5).unwrap();
        let m = evaluate_sets(&sets, System::IrStatus, |_, _| 0.0);
        assert!((m.recall_at_1 - 0.1).abs() < 0.03, "{}", m.recall_at_1);
    }

    #[test]
    fn identical_distractor_never_wins() {
        let mut t = triples(30);
        for i in 0..30 {
            t[i].response = Utterance::new("same reply");
        }
        let sets = build_eval_sets(&t, 9, 2).unwrap();
        for s in &sets {
            let truth = s.truth();
            assert!(s.ids.iter().all(|&id| id >= s.ids[truth]));
            assert_eq!(truth_rank(s, &vec![0.5; s.members.len()]), 0);
        }
    }

    #[test]
    fn ranks_to_metrics() {
        let m = metrics_from_ranks(System::IrStatus, &[0, 1, 2, 5]);
        assert_eq!(m.recall_at_1, 0.25);
        assert!((m.ndcg[1] - (1.0 + 1.0 / 3f64.log2()) / 4.0).abs() < 1e-12);
        assert!((m.ndcg[2] - (1.0 + 1.0 / 3f64.log2() + 0.5) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn judgment_examples() {
        let rec = |votes: Vec<u8>| JudgmentRecord { id: 0, votes };
        let s = aggregate_judgments(&[rec(vec![1, 1, 1, 1, 1])]).unwrap();
        assert_eq!((s.mean_score, s.precision_at_1), (5.0, 100.0));
        let s = aggregate_judgments(&[rec(vec![1, 1, 1, 0, 0])]).unwrap();
        assert_eq!((s.mean_score, s.precision_at_1), (3.0, 0.0));
        let s = aggregate_judgments(&[rec(vec![1, 1, 1, 1, 0]), rec(vec![0, 0, 0, 0, 0])]).unwrap();
        assert_eq!((s.mean_score, s.precision_at_1), (2.0, 50.0));
        assert!(aggregate_judgments(&[rec(vec![1, 1, 1, 1])]).is_err());
        assert!(aggregate_judgments(&[rec(vec![1, 1, 1, 1, 2])]).is_err());
        assert!(aggregate_judgments(&[]).is_err());
    }

    #[test]
    fn judgment_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let recs: Vec<JudgmentRecord> = (0..200)
            .map(|i| JudgmentRecord {
                id: i,
                votes: (0..5).map(|_| rng.gen_range(0..=1)).collect(),
            })
            .collect();
        let s = aggregate_judgments(&recs).unwrap();
        assert!((0.0..=5.0).contains(&s.mean_score));
        assert!((0.0..=100.0).contains(&s.precision_at_1));
    }

    #[test]
    fn report_layout() {
        let m = metrics_from_ranks(System::SemrelCmm, &[0, 3]);
        let j = JudgmentSummary {
            mean_score: 4.23,
            precision_at_1: 82.0,
            n_records: 1000,
        };
        let r = format_report(&[m], Some(&j));
        let lines: Vec<&str> = r.lines().collect();
        assert_eq!(lines[0], "system\tR@1\tNDCG@1\tNDCG@2\tNDCG@3\tn_queries");
        assert!(lines[1].starts_with("semrel_cmm\t0.5000\t"));
        assert_eq!(lines[4], "4.2300\t82.00\t1000");
    }
}

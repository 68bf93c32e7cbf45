//! LambdaMART ranker over [`FeatureVector`]s.
//!
//! Each boosting round computes RankNet pairwise logistic gradients within a
//! query group, scales them by the NDCG change of swapping the pair, fits a
//! least-squares regression tree to the resulting lambdas and sets each leaf to
//! a Newton step `sum(lambda) / sum(weight)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cdssm::CdssmModel;
use crate::corpus::{ConversationTriple, Utterance};
use crate::error::{Error, Result};
use crate::features::{features_from_parts, Embedded, FeatureVector, NUM_FEATURES};
use crate::index::Candidate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub qid: u32,
    pub features: FeatureVector,
    pub label: u8,
}

/// Builds one positive (the observed third turn) and `negatives_per_positive`
/// negatives per triple. Negatives are drawn uniformly without replacement from
/// `pool`, skipping entries whose tokens equal the positive's.
pub fn build_training_set(
    model: &CdssmModel,
    triples: &[ConversationTriple],
    pool: &[Utterance],
    negatives_per_positive: usize,
    seed: u64,
) -> Result<Vec<TrainingSample>> {
    if pool.len() <= negatives_per_positive {
        return Err(Error::TooFew {
            needed: negatives_per_positive + 1,
            got: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<Vec<usize>> = Vec::with_capacity(triples.len());
    for t in triples {
        let eligible = pool.iter().filter(|u| u.tokens != t.response.tokens).count();
        if eligible < negatives_per_positive {
            return Err(Error::TooFew {
                needed: negatives_per_positive,
                got: eligible,
            });
        }
        let mut chosen: Vec<usize> = Vec::with_capacity(negatives_per_positive);
        while chosen.len() < negatives_per_positive {
            let i = rng.gen_range(0..pool.len());
            if !chosen.contains(&i) && pool[i].tokens != t.response.tokens {
                chosen.push(i);
            }
        }
        picks.push(chosen);
    }

    let pool_emb: Vec<Option<Embedded>> = pool
        .par_iter()
        .map(|u| {
            if u.is_empty() {
                None
            } else {
                Embedded::new(model, u).ok()
            }
        })
        .collect();

    let per_triple: Vec<Result<Vec<TrainingSample>>> = triples
        .par_iter()
        .zip(picks.par_iter())
        .enumerate()
        .map(|(qid, (t, negs))| {
            let c_emb = if t.context.is_empty() {
                None
            } else {
                Some(Embedded::new(model, &t.context)?)
            };
            let m_emb = Embedded::new(model, &t.message)?;
            let r_emb = Embedded::new(model, &t.response)?;
            let ctx = c_emb.as_ref().map(|e| (&t.context, e));
            let mut out = vec![TrainingSample {
                qid: qid as u32,
                features: features_from_parts(ctx, (&t.message, &m_emb), (&t.response, &r_emb)),
                label: 1,
            }];
            for &j in negs {
                let emb = pool_emb[j].as_ref().ok_or(Error::EmptyUtterance)?;
                out.push(TrainingSample {
                    qid: qid as u32,
                    features: features_from_parts(ctx, (&t.message, &m_emb), (&pool[j], emb)),
                    label: 0,
                });
            }
            Ok(out)
        })
        .collect();
    let mut samples = Vec::with_capacity(triples.len() * (1 + negatives_per_positive));
    for group in per_triple {
        samples.extend(group?);
    }
    Ok(samples)
}

/// NDCG@k of labels listed in predicted order; 0 when there is no positive.
pub fn ndcg_at_k(ranked_labels: &[u8], k: usize) -> f64 {
    let dcg = |labels: &[u8]| -> f64 {
        labels
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, &l)| ((1u64 << l) - 1) as f64 / ((i + 2) as f64).log2())
            .sum()
    };
    let mut ideal = ranked_labels.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(&ideal);
    if idcg == 0.0 {
        return 0.0;
    }
    dcg(ranked_labels) / idcg
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Binary regression tree; node 0 is the root. A sample goes left iff
/// `feature <= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn leaf(value: f64) -> Self {
        RegressionTree {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn predict(&self, fv: &FeatureVector) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if fv.0[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Format("tree without nodes".into()));
        }
        // Children must point forward so that every walk terminates.
        let mut parents = vec![0usize; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            match *n {
                Node::Leaf { value } if !value.is_finite() => {
                    return Err(Error::Format(format!("non-finite leaf at node {i}")));
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature >= NUM_FEATURES || threshold.is_nan() {
                        return Err(Error::Format(format!("bad split at node {i}")));
                    }
                    for c in [left, right] {
                        if c <= i || c >= self.nodes.len() {
                            return Err(Error::Format(format!("bad child {c} at node {i}")));
                        }
                        parents[c] += 1;
                    }
                }
                _ => {}
            }
        }
        if parents[0] != 0 || parents[1..].iter().any(|&p| p != 1) {
            return Err(Error::Format("node table is not a tree".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartConfig {
    pub num_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    /// Steepness of the pairwise logistic.
    pub sigma: f64,
    /// Feature indices trees may split on.
    pub features: Vec<usize>,
    pub seed: u64,
}

impl Default for MartConfig {
    fn default() -> Self {
        MartConfig {
            num_trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_samples_leaf: 1,
            sigma: 1.0,
            features: (0..NUM_FEATURES).collect(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartEnsemble {
    pub trees: Vec<RegressionTree>,
    pub learning_rate: f64,
    pub base_score: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub features: Vec<usize>,
    pub seed: u64,
}

impl MartEnsemble {
    pub fn empty(config: &MartConfig) -> Self {
        MartEnsemble {
            trees: Vec::new(),
            learning_rate: config.learning_rate,
            base_score: 0.0,
            max_depth: config.max_depth,
            min_samples_leaf: config.min_samples_leaf,
            features: config.features.clone(),
            seed: config.seed,
        }
    }

    /// `base_score + learning_rate * sum of tree outputs`.
    pub fn score(&self, fv: &FeatureVector) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(fv)).sum();
        self.base_score + self.learning_rate * sum
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let feats: Vec<String> = self.features.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "mart-ensemble v1");
        let _ = writeln!(s, "num_features {NUM_FEATURES}");
        let _ = writeln!(s, "learning_rate {}", self.learning_rate);
        let _ = writeln!(s, "base_score {}", self.base_score);
        let _ = writeln!(s, "max_depth {}", self.max_depth);
        let _ = writeln!(s, "min_samples_leaf {}", self.min_samples_leaf);
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "features {}", feats.join(" "));
        let _ = writeln!(s, "trees {}", self.trees.len());
        for (t, tree) in self.trees.iter().enumerate() {
            let _ = writeln!(s, "tree {t} nodes {}", tree.nodes.len());
            for (i, node) in tree.nodes.iter().enumerate() {
                match *node {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        let _ = writeln!(s, "{i} split {feature} {threshold} {left} {right}");
                    }
                    Node::Leaf { value } => {
                        let _ = writeln!(s, "{i} leaf {value}");
                    }
                }
            }
        }
        s.push_str("end\n");
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = TextLines {
            inner: text.lines().enumerate(),
        };
        fn num<T: std::str::FromStr>(line: usize, s: Option<&&str>) -> Result<T> {
            s.and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Format(format!("ensemble line {line}: bad number")))
        }
        let mut field = |key: &str| lines.field(key);

        let (n, header) = field("mart-ensemble")?;
        if header.get(1) != Some(&"v1") {
            return Err(Error::Format(format!("ensemble line {n}: unsupported version")));
        }
        let (n, p) = field("num_features")?;
        if num::<usize>(n, p.get(1))? != NUM_FEATURES {
            return Err(Error::Format(format!("ensemble line {n}: feature count mismatch")));
        }
        let (n, p) = field("learning_rate")?;
        let learning_rate = num(n, p.get(1))?;
        let (n, p) = field("base_score")?;
        let base_score = num(n, p.get(1))?;
        let (n, p) = field("max_depth")?;
        let max_depth = num(n, p.get(1))?;
        let (n, p) = field("min_samples_leaf")?;
        let min_samples_leaf = num(n, p.get(1))?;
        let (n, p) = field("seed")?;
        let seed = num(n, p.get(1))?;
        let (n, p) = field("features")?;
        let features = p[1..]
            .iter()
            .map(|f| num::<usize>(n, Some(f)))
            .collect::<Result<Vec<_>>>()?;
        if features.iter().any(|&f| f >= NUM_FEATURES) {
            return Err(Error::Format(format!("ensemble line {n}: feature out of range")));
        }
        let (n, p) = field("trees")?;
        let n_trees: usize = num(n, p.get(1))?;
        let mut trees = Vec::with_capacity(n_trees);
        for t in 0..n_trees {
            let (n, p) = field("tree")?;
            if num::<usize>(n, p.get(1))? != t || p.get(2) != Some(&"nodes") {
                return Err(Error::Format(format!("ensemble line {n}: bad tree header")));
            }
            let n_nodes: usize = num(n, p.get(3))?;
            let mut nodes = Vec::with_capacity(n_nodes);
            for i in 0..n_nodes {
                let (n, p) = field("")?;
                if num::<usize>(n, p.first())? != i {
                    return Err(Error::Format(format!("ensemble line {n}: node out of order")));
                }
                let node = match p.get(1) {
                    Some(&"leaf") if p.len() == 3 => Node::Leaf {
                        value: num(n, p.get(2))?,
                    },
                    Some(&"split") if p.len() == 6 => Node::Split {
                        feature: num(n, p.get(2))?,
                        threshold: num(n, p.get(3))?,
                        left: num(n, p.get(4))?,
                        right: num(n, p.get(5))?,
                    },
                    _ => return Err(Error::Format(format!("ensemble line {n}: bad node"))),
                };
                nodes.push(node);
            }
            let tree = RegressionTree { nodes };
            tree.validate()?;
            trees.push(tree);
        }
        let (n, p) = field("end")?;
        if p != ["end"] {
            return Err(Error::Format(format!("ensemble line {n}: expected end")));
        }
        if !(learning_rate > 0.0 && f64::is_finite(learning_rate) && f64::is_finite(base_score)) {
            return Err(Error::Format("bad learning rate or base score".into()));
        }
        Ok(MartEnsemble {
            trees,
            learning_rate,
            base_score,
            max_depth,
            min_samples_leaf,
            features,
            seed,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

struct TextLines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> TextLines<'a> {
    /// Next non-blank line split on whitespace; its first word must be `key`
    /// unless `key` is empty.
    fn field(&mut self, key: &str) -> Result<(usize, Vec<&'a str>)> {
        let (n, line) = self
            .inner
            .find(|(_, l)| !l.trim().is_empty())
            .ok_or_else(|| Error::Format(format!("unexpected end of ensemble, expected {key:?}")))?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if !key.is_empty() && parts.first() != Some(&key) {
            return Err(Error::Format(format!("ensemble line {}: expected {key}", n + 1)));
        }
        Ok((n + 1, parts))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartReport {
    /// Mean training NDCG@1 after each tree.
    pub train_ndcg1: Vec<f64>,
    pub skipped_groups: usize,
}

/// Positions of `idx` sorted by score descending. Equal scores put lower labels
/// first, so ties never flatter the ranking.
fn order_group(idx: &[usize], scores: &[f64], labels: &[u8]) -> Vec<usize> {
    let mut order = idx.to_vec();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(labels[a].cmp(&labels[b]))
            .then(a.cmp(&b))
    });
    order
}

fn mean_ndcg(groups: &[Vec<usize>], scores: &[f64], labels: &[u8], k: usize) -> f64 {
    let total: f64 = groups
        .iter()
        .map(|g| {
            let ranked: Vec<u8> = order_group(g, scores, labels)
                .into_iter()
                .map(|i| labels[i])
                .collect();
            ndcg_at_k(&ranked, k)
        })
        .sum();
    total / groups.len() as f64
}

fn compute_lambdas(
    groups: &[Vec<usize>],
    scores: &[f64],
    labels: &[u8],
    sigma: f64,
    lambdas: &mut [f64],
    weights: &mut [f64],
) {
    lambdas.iter_mut().for_each(|x| *x = 0.0);
    weights.iter_mut().for_each(|x| *x = 0.0);
    for g in groups {
        let order = order_group(g, scores, labels);
        let mut rank = BTreeMap::new();
        for (r, &i) in order.iter().enumerate() {
            rank.insert(i, r);
        }
        let mut ideal: Vec<u8> = g.iter().map(|&i| labels[i]).collect();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg: f64 = ideal
            .iter()
            .enumerate()
            .map(|(r, &l)| ((1u64 << l) - 1) as f64 / ((r + 2) as f64).log2())
            .sum();
        for &i in g {
            for &j in g {
                if labels[i] <= labels[j] {
                    continue;
                }
                let gain = ((1u64 << labels[i]) - (1u64 << labels[j])) as f64;
                let disc_i = 1.0 / ((rank[&i] + 2) as f64).log2();
                let disc_j = 1.0 / ((rank[&j] + 2) as f64).log2();
                let delta = (gain * (disc_i - disc_j) / idcg).abs();
                let rho = 1.0 / (1.0 + (sigma * (scores[i] - scores[j])).exp());
                let lambda = sigma * delta * rho;
                let w = sigma * sigma * delta * rho * (1.0 - rho);
                lambdas[i] += lambda;
                lambdas[j] -= lambda;
                weights[i] += w;
                weights[j] += w;
            }
        }
    }
}

struct TreeBuilder<'a> {
    x: &'a [FeatureVector],
    target: &'a [f64],
    weight: &'a [f64],
    features: &'a [usize],
    max_depth: usize,
    min_leaf: usize,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn leaf_value(&self, idx: &[usize]) -> f64 {
        let num: f64 = idx.iter().map(|&i| self.target[i]).sum();
        let den: f64 = idx.iter().map(|&i| self.weight[i]).sum();
        if den > 1e-12 {
            num / den
        } else {
            0.0
        }
    }

    /// Best `(feature, threshold)` by squared-error reduction; ties go to the
    /// lowest feature, then the lowest threshold.
    fn best_split(&self, idx: &[usize]) -> Option<(usize, f64)> {
        let n = idx.len();
        let total: f64 = idx.iter().map(|&i| self.target[i]).sum();
        let base = total * total / n as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        for &f in self.features {
            let mut sorted = idx.to_vec();
            sorted.sort_by(|&a, &b| self.x[a].0[f].total_cmp(&self.x[b].0[f]).then(a.cmp(&b)));
            let mut left_sum = 0.0;
            for p in 0..n - 1 {
                left_sum += self.target[sorted[p]];
                let (v, v_next) = (self.x[sorted[p]].0[f], self.x[sorted[p + 1]].0[f]);
                let n_left = p + 1;
                if v == v_next || n_left < self.min_leaf || n - n_left < self.min_leaf {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / n_left as f64
                    + right_sum * right_sum / (n - n_left) as f64
                    - base;
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, v));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn build(&mut self, idx: &[usize], depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });
        let split = if depth < self.max_depth && idx.len() >= 2 * self.min_leaf.max(1) {
            self.best_split(idx)
        } else {
            None
        };
        match split {
            None => self.nodes[id] = Node::Leaf {
                value: self.leaf_value(idx),
            },
            Some((feature, threshold)) => {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    idx.iter().partition(|&&i| self.x[i].0[feature] <= threshold);
                let left = self.build(&l, depth + 1);
                let right = self.build(&r, depth + 1);
                self.nodes[id] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
            }
        }
        id
    }
}

/// Fits a LambdaMART ensemble. Groups whose samples all share one label carry
/// no ranking signal and are skipped with a warning.
pub fn train_mart(samples: &[TrainingSample], config: &MartConfig) -> Result<(MartEnsemble, MartReport)> {
    if config.features.is_empty() || config.features.iter().any(|&f| f >= NUM_FEATURES) {
        return Err(Error::InvalidArgument("bad feature subset".into()));
    }
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) || config.sigma <= 0.0 {
        return Err(Error::InvalidArgument("learning_rate and sigma must be positive".into()));
    }
    let mut by_qid: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_qid.entry(s.qid).or_default().push(i);
    }
    if by_qid.len() < 2 {
        return Err(Error::TooFew {
            needed: 2,
            got: by_qid.len(),
        });
    }
    let total_groups = by_qid.len();
    let groups_all: Vec<Vec<usize>> = by_qid
        .into_values()
        .filter(|g| {
            let first = samples[g[0]].label;
            g.iter().any(|&i| samples[i].label != first)
        })
        .collect();
    let skipped = total_groups - groups_all.len();
    if skipped > 0 {
        log::warn!("skipping {skipped} query groups with a single relevance label");
    }
    if groups_all.is_empty() {
        return Err(Error::DegenerateGroups);
    }

    // Re-index the usable samples densely.
    let used: Vec<usize> = groups_all.iter().flatten().copied().collect();
    let x: Vec<FeatureVector> = used.iter().map(|&i| samples[i].features).collect();
    let labels: Vec<u8> = used.iter().map(|&i| samples[i].label).collect();
    let mut groups = Vec::with_capacity(groups_all.len());
    let mut at = 0;
    for g in &groups_all {
        groups.push((at..at + g.len()).collect::<Vec<usize>>());
        at += g.len();
    }

    let mut ensemble = MartEnsemble::empty(config);
    let mut scores = vec![ensemble.base_score; x.len()];
    let mut lambdas = vec![0.0; x.len()];
    let mut weights = vec![0.0; x.len()];
    let all: Vec<usize> = (0..x.len()).collect();
    let mut report = MartReport {
        train_ndcg1: Vec::with_capacity(config.num_trees),
        skipped_groups: skipped,
    };
    for t in 0..config.num_trees {
        compute_lambdas(&groups, &scores, &labels, config.sigma, &mut lambdas, &mut weights);
        let mut builder = TreeBuilder {
            x: &x,
            target: &lambdas,
            weight: &weights,
            features: &config.features,
            max_depth: config.max_depth,
            min_leaf: config.min_samples_leaf,
            nodes: Vec::new(),
        };
        builder.build(&all, 0);
        let tree = RegressionTree {
            nodes: builder.nodes,
        };
        for (s, fv) in scores.iter_mut().zip(&x) {
            *s += config.learning_rate * tree.predict(fv);
        }
        ensemble.trees.push(tree);
        let ndcg = mean_ndcg(&groups, &scores, &labels, 1);
        log::debug!("mart tree {t}: train ndcg@1 {ndcg:.4}");
        report.train_ndcg1.push(ndcg);
    }
    Ok((ensemble, report))
}

/// A candidate with its features and ensemble score.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub candidate: Candidate,
    pub features: FeatureVector,
    pub score: f64,
}

/// Sort order for ranked candidates: score descending, then fetch score
/// descending, then doc id ascending.
pub fn sort_ranked(ranked: &mut [RankedCandidate]) {
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(b.candidate.fetch_score.total_cmp(&a.candidate.fetch_score))
            .then(a.candidate.pair.id.cmp(&b.candidate.pair.id))
    });
}

/// Scores every candidate response for `message` in `context` and sorts them.
pub fn rank_candidates(
    ensemble: &MartEnsemble,
    model: &CdssmModel,
    context: &Utterance,
    message: &Utterance,
    candidates: Vec<Candidate>,
) -> Result<Vec<RankedCandidate>> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    let m_emb = Embedded::new(model, message)?;
    let c_emb = if context.is_empty() {
        None
    } else {
        Some(Embedded::new(model, context)?)
    };
    let ranked: Vec<Result<RankedCandidate>> = candidates
        .into_par_iter()
        .map(|candidate| {
            let resp = &candidate.pair.response;
            let r_emb = Embedded::new(model, resp)?;
            let features = features_from_parts(
                c_emb.as_ref().map(|e| (context, e)),
                (message, &m_emb),
                (resp, &r_emb),
            );
            let score = ensemble.score(&features);
            Ok(RankedCandidate {
                candidate,
                features,
                score,
            })
        })
        .collect();
    let mut ranked = ranked.into_iter().collect::<Result<Vec<_>>>()?;
    sort_ranked(&mut ranked);
    Ok(ranked)
}

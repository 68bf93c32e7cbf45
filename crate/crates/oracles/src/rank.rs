//! DCG by direct summation, with the ideal ordering found by enumeration, and
//! ensemble scoring by explicit tree walks.

use chatrank_core::features::{FeatureVector, NUM_FEATURES};
use chatrank_core::ranker::{MartEnsemble, Node, TrainingSample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dcg(labels: &[u8], k: usize) -> f64 {
    let mut s = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        if i >= k {
            break;
        }
        s += (2f64.powi(l as i32) - 1.0) / (i as f64 + 2.0).log2();
    }
    s
}

fn permutations(items: &[u8]) -> Vec<Vec<u8>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head);
            out.push(p);
        }
    }
    out
}

/// NDCG@k where the ideal DCG is the best over every permutation. Keep lists
/// short.
pub fn brute_ndcg(labels: &[u8], k: usize) -> f64 {
    let ideal = permutations(labels)
        .iter()
        .map(|p| dcg(p, k))
        .fold(0.0, f64::max);
    if ideal == 0.0 {
        0.0
    } else {
        dcg(labels, k) / ideal
    }
}

/// Ensemble score by walking each tree's node table recursively and adding the
/// outputs in tree order.
pub fn walk_score(ensemble: &MartEnsemble, fv: &FeatureVector) -> f64 {
    fn walk(nodes: &[Node], i: usize, fv: &FeatureVector) -> f64 {
        match nodes[i] {
            Node::Leaf { value } => value,
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if fv.0[feature] > threshold {
                    walk(nodes, right, fv)
                } else {
                    walk(nodes, left, fv)
                }
            }
        }
    }
    let mut sum = 0.0;
    for tree in &ensemble.trees {
        sum += walk(&tree.nodes, 0, fv);
    }
    ensemble.base_score + ensemble.learning_rate * sum
}

/// Query groups of 3 to 5 samples with exactly one positive, which is the
/// only sample with `f0 > 0.5`. The other features are noise.
pub fn separable_fixture(groups: u32, seed: u64) -> Vec<TrainingSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for qid in 0..groups {
        let size = rng.gen_range(3..=5);
        let positive = rng.gen_range(0..size);
        for i in 0..size {
            let mut f = [0.0; NUM_FEATURES];
            for x in f.iter_mut().skip(1) {
                *x = rng.gen_range(0.0..1.0);
            }
            let label = u8::from(i == positive);
            f[0] = if label == 1 {
                rng.gen_range(0.51..1.0)
            } else {
                rng.gen_range(0.0..0.5)
            };
            out.push(TrainingSample {
                qid,
                features: FeatureVector(f),
                label,
            });
        }
    }
    out
}
